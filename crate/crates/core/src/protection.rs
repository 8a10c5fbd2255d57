//! Semantic and geometric protection sets built during warmup.
//!
//! Semantic protection keeps patches whose warmup-averaged attention
//! exceeds `mean + std` (population std, strict inequality). Geometric
//! protection keeps patches whose patch-grid depth gradient exceeds
//! `tau_edge`.

use crate::depth::PatchDepths;
use crate::error::{Error, Result};

/// Running per-patch attention sums over the warmup frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionAccumulator {
    sums: Vec<f64>,
    frames_seen: usize,
    capacity: usize,
}

impl AttentionAccumulator {
    pub fn new(patches: usize, warmup_frames: usize) -> Self {
        Self {
            sums: vec![0.0; patches],
            frames_seen: 0,
            capacity: warmup_frames,
        }
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn is_complete(&self) -> bool {
        self.frames_seen >= self.capacity
    }

    pub fn accumulate(&mut self, attention: &[f32]) -> Result<()> {
        if self.is_complete() {
            return Err(Error::WarmupComplete(self.frames_seen));
        }
        if attention.len() != self.sums.len() {
            return Err(Error::LengthMismatch {
                expected: self.sums.len(),
                found: attention.len(),
            });
        }
        if let Some((index, &value)) = attention.iter().enumerate().find(|(_, &a)| a < 0.0) {
            return Err(Error::NegativeAttention { index, value });
        }
        for (s, &a) in self.sums.iter_mut().zip(attention) {
            *s += a as f64;
        }
        self.frames_seen += 1;
        Ok(())
    }
}

/// Patches whose mean warmup attention strictly exceeds `mean + std`.
pub fn semantic_protection(acc: &AttentionAccumulator) -> Result<Vec<usize>> {
    if !acc.is_complete() {
        return Err(Error::WarmupIncomplete {
            seen: acc.frames_seen,
            needed: acc.capacity,
        });
    }
    let n = acc.frames_seen as f64;
    let avg: Vec<f64> = acc.sums.iter().map(|s| s / n).collect();
    Ok(above_mean_plus_std(&avg))
}

pub(crate) fn above_mean_plus_std(values: &[f64]) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    // A constant vector has no outliers; skip the rounding-sensitive compare.
    if lo == hi {
        return Vec::new();
    }
    let p = values.len() as f64;
    let mean = values.iter().sum::<f64>() / p;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / p;
    let threshold = mean + var.sqrt();
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// L2 magnitude of the patch-grid depth gradient, central differences
/// inside and one-sided differences on the border.
pub fn depth_gradient(depths: &PatchDepths) -> Vec<f64> {
    let (rows, cols) = (depths.grid.rows, depths.grid.cols);
    let d = |r: usize, c: usize| depths.at(r, c) as f64;
    let diff = |n: usize, i: usize, at: &dyn Fn(usize) -> f64| -> f64 {
        if n < 2 {
            0.0
        } else if i == 0 {
            at(1) - at(0)
        } else if i == n - 1 {
            at(n - 1) - at(n - 2)
        } else {
            (at(i + 1) - at(i - 1)) / 2.0
        }
    };
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let gx = diff(cols, c, &|x| d(r, x));
            let gy = diff(rows, r, &|y| d(y, c));
            out.push((gx * gx + gy * gy).sqrt());
        }
    }
    out
}

/// Patches whose depth gradient magnitude strictly exceeds `tau_edge`.
pub fn geometric_protection(depths: &PatchDepths, tau_edge: f64) -> Vec<usize> {
    depth_gradient(depths)
        .into_iter()
        .enumerate()
        .filter(|&(_, g)| g > tau_edge)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectionSet {
    pub att_indices: Vec<usize>,
    pub edge_indices: Vec<usize>,
    pub union: Vec<usize>,
    /// Frame at which the set was built.
    pub created_at: u64,
    mask: Vec<bool>,
}

impl ProtectionSet {
    pub fn empty(patches: usize, created_at: u64) -> Self {
        Self {
            att_indices: Vec::new(),
            edge_indices: Vec::new(),
            union: Vec::new(),
            created_at,
            mask: vec![false; patches],
        }
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.mask.get(index).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.union.len()
    }

    pub fn is_empty(&self) -> bool {
        self.union.is_empty()
    }
}

fn normalize(indices: &[usize], patches: usize) -> Result<Vec<usize>> {
    let mut out = indices.to_vec();
    out.sort_unstable();
    out.dedup();
    if let Some(&index) = out.iter().find(|&&i| i >= patches) {
        return Err(Error::IndexOutOfRange { index, patches });
    }
    Ok(out)
}

/// Unions the two sets. With `no_protection` every set comes back empty.
pub fn combine(
    p_att: &[usize],
    p_edge: &[usize],
    patches: usize,
    created_at: u64,
    no_protection: bool,
) -> Result<ProtectionSet> {
    let att_indices = normalize(p_att, patches)?;
    let edge_indices = normalize(p_edge, patches)?;
    if no_protection {
        return Ok(ProtectionSet::empty(patches, created_at));
    }
    let mut mask = vec![false; patches];
    for &i in att_indices.iter().chain(&edge_indices) {
        mask[i] = true;
    }
    let union = (0..patches).filter(|&i| mask[i]).collect();
    Ok(ProtectionSet {
        att_indices,
        edge_indices,
        union,
        created_at,
        mask,
    })
}
