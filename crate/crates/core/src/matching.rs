//! Bipartite soft matching inside a depth region.
//!
//! Region members are split by checkerboard parity into sources and
//! targets; each source links to its most similar target by cosine
//! similarity. The resulting pairs are ordered by similarity so that the
//! scheduler can execute them as a prefix.

use crate::types::{Embeddings, GridDims};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergePair {
    pub src: usize,
    pub dst: usize,
    pub similarity: f64,
    pub region_id: usize,
}

/// Frozen pair list for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPlan {
    pub region_id: usize,
    /// Ordered by descending similarity, then ascending source index.
    pub pairs: Vec<MergePair>,
    /// Merges to execute once the schedule saturates.
    pub target: usize,
    pub frozen_at: u64,
}

impl RegionPlan {
    pub fn empty(region_id: usize, frozen_at: u64) -> Self {
        Self {
            region_id,
            pairs: Vec::new(),
            target: 0,
            frozen_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergePlan {
    pub regions: Vec<RegionPlan>,
    pub frozen_at: u64,
}

impl MergePlan {
    pub fn pairs(&self) -> impl Iterator<Item = &MergePair> {
        self.regions.iter().flat_map(|r| r.pairs.iter())
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
fn norm_sq(a: &[f32]) -> f64 {
    dot(a, a)
}

/// Exactly 1 for identical vectors, which `dot / (|a| |b|)` is not.
#[inline]
fn cosine_from_parts(dot: f64, aa: f64, bb: f64) -> f64 {
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        // Adding zero folds -0.0 into 0.0 so that ordering ties stay ties.
        (dot / (aa * bb).sqrt()).clamp(-1.0, 1.0) + 0.0
    }
}

/// Cosine similarity; zero vectors are similar to nothing (0).
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    cosine_from_parts(dot(a, b), norm_sq(a), norm_sq(b))
}

/// Splits region members into `(sources, targets)` by checkerboard parity.
/// The larger parity class becomes the targets; on a tie, even parity.
pub fn split_sources_targets(members: &[usize], grid: GridDims) -> (Vec<usize>, Vec<usize>) {
    let (even, odd): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| grid.is_even(i));
    if even.len() >= odd.len() {
        (odd, even)
    } else {
        (even, odd)
    }
}

/// `floor(ratio * n)`, with slack for ratios like 0.7 that are not exact
/// in binary.
pub fn target_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor().max(0.0) as usize
}

/// Links every source to its best target and sizes the region's merge
/// budget as `floor(ratio * |region|)`, capped at the source count.
/// Regions of fewer than two tokens get an empty plan.
pub fn build_merge_pairs(
    region_id: usize,
    members: &[usize],
    grid: GridDims,
    embeddings: &Embeddings,
    ratio: f64,
    frozen_at: u64,
) -> RegionPlan {
    if members.len() < 2 {
        return RegionPlan::empty(region_id, frozen_at);
    }
    let mut members = members.to_vec();
    members.sort_unstable();
    let (sources, targets) = split_sources_targets(&members, grid);

    let target_norms: Vec<f64> = targets.iter().map(|&b| norm_sq(embeddings.row(b))).collect();
    let mut pairs: Vec<MergePair> = sources
        .iter()
        .filter_map(|&a| {
            let ea = embeddings.row(a);
            let na = norm_sq(ea);
            let mut best: Option<(usize, f64)> = None;
            for (&b, &nb) in targets.iter().zip(&target_norms) {
                let s = cosine_from_parts(dot(ea, embeddings.row(b)), na, nb);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((b, s));
                }
            }
            best.map(|(dst, similarity)| MergePair {
                src: a,
                dst,
                similarity,
                region_id,
            })
        })
        .collect();
    pairs.sort_by(|x, y| y.similarity.total_cmp(&x.similarity).then(x.src.cmp(&y.src)));

    let target = target_count(ratio, members.len()).min(sources.len());
    RegionPlan {
        region_id,
        pairs,
        target,
        frozen_at,
    }
}
