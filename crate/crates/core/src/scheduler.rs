//! Progressive execution of frozen merge plans over a window of frames.
//!
//! Region `k` with target `m_k` has `floor(min(t - t0, W) / W * m_k)`
//! merges applied by frame `t`. Merged tokens carry their member count as
//! a size weight so that averaging stays unbiased.

use crate::error::{Error, Result};
use crate::matching::MergePlan;
use crate::types::Embeddings;

/// Cumulative merges due for a region by frame `t`.
pub fn merges_due(t: u64, t0: u64, window: usize, target: usize, one_shot: bool) -> usize {
    if t < t0 {
        return 0;
    }
    if one_shot {
        return target;
    }
    let window = window.max(1);
    let elapsed = (t - t0).min(window as u64) as usize;
    elapsed * target / window
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEntry {
    pub embedding: Vec<f32>,
    pub size: u32,
    /// Original patch indices, ascending.
    pub members: Vec<usize>,
}

/// Current grouping of patches into tokens. Every entry is keyed by its
/// root patch, the merge destination that survives.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSet {
    entries: Vec<Option<TokenEntry>>,
    index_map: Vec<usize>,
    dim: usize,
}

impl TokenSet {
    pub fn singletons(embeddings: &Embeddings) -> Self {
        let entries = (0..embeddings.rows())
            .map(|i| {
                Some(TokenEntry {
                    embedding: embeddings.row(i).to_vec(),
                    size: 1,
                    members: vec![i],
                })
            })
            .collect();
        Self {
            entries,
            index_map: (0..embeddings.rows()).collect(),
            dim: embeddings.dim(),
        }
    }

    pub fn patches(&self) -> usize {
        self.index_map.len()
    }

    pub fn retained(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Root patch of the entry holding `patch`.
    pub fn root(&self, patch: usize) -> usize {
        self.index_map[patch]
    }

    pub fn entry(&self, root: usize) -> Option<&TokenEntry> {
        self.entries.get(root).and_then(Option::as_ref)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, &TokenEntry)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(root, e)| e.as_ref().map(|e| (root, e)))
    }

    /// Folds the entry holding `src` into the entry holding `dst` with a
    /// size-weighted mean. Returns false if they already share an entry.
    pub fn merge(&mut self, src: usize, dst: usize) -> bool {
        let (rs, rd) = (self.index_map[src], self.index_map[dst]);
        if rs == rd {
            return false;
        }
        let from = self.entries[rs].take().expect("root entry present");
        let into = self.entries[rd].as_mut().expect("root entry present");
        let (ws, wd) = (from.size as f64, into.size as f64);
        for (d, &s) in into.embedding.iter_mut().zip(&from.embedding) {
            *d = ((ws * s as f64 + wd * *d as f64) / (ws + wd)) as f32;
        }
        into.size += from.size;
        for &m in &from.members {
            self.index_map[m] = rd;
        }
        into.members.extend(from.members);
        into.members.sort_unstable();
        true
    }

    /// Splits every entry touching `patches` back into singletons carrying
    /// the given embeddings.
    pub fn split(&mut self, patches: &[usize], current: &Embeddings) {
        for &p in patches {
            let root = self.index_map[p];
            let needs_split = self.entries[root].as_ref().is_some_and(|e| e.size > 1);
            if !needs_split {
                continue;
            }
            let entry = self.entries[root].take().expect("checked above");
            for m in entry.members {
                self.index_map[m] = m;
                self.entries[m] = Some(TokenEntry {
                    embedding: current.row(m).to_vec(),
                    size: 1,
                    members: vec![m],
                });
            }
        }
    }

    /// Recomputes every entry as the mean of its members' current rows.
    pub fn refresh_embeddings(&mut self, current: &Embeddings) {
        let mut acc = vec![0.0f64; self.dim];
        for entry in self.entries.iter_mut().flatten() {
            if entry.size == 1 {
                entry.embedding.copy_from_slice(current.row(entry.members[0]));
                continue;
            }
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &m in &entry.members {
                for (a, &v) in acc.iter_mut().zip(current.row(m)) {
                    *a += v as f64;
                }
            }
            let n = entry.size as f64;
            for (e, a) in entry.embedding.iter_mut().zip(&acc) {
                *e = (a / n) as f32;
            }
        }
    }

    pub fn compress(&self, frame_index: u64, merges: usize) -> CompressedTokens {
        let mut row_of_root = vec![usize::MAX; self.entries.len()];
        let mut data = Vec::new();
        let mut sizes = Vec::new();
        for (row, (root, entry)) in self.entries().enumerate() {
            row_of_root[root] = row;
            data.extend_from_slice(&entry.embedding);
            sizes.push(entry.size);
        }
        let unmerge_map = self.index_map.iter().map(|&r| row_of_root[r]).collect();
        CompressedTokens {
            frame_index,
            embeddings: Embeddings::new(sizes.len(), self.dim, data).expect("row lengths agree"),
            sizes,
            unmerge_map,
            merges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionProgress {
    /// Merges applied so far.
    pub applied: usize,
    /// First frame of this region's schedule.
    pub start: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeProgress {
    pub regions: Vec<RegionProgress>,
    pub window: usize,
    pub one_shot: bool,
    /// Frame of the initialization the schedule belongs to.
    pub initialized_at: u64,
}

impl MergeProgress {
    pub fn new(regions: usize, start: u64, window: usize, one_shot: bool, initialized_at: u64) -> Self {
        Self {
            regions: vec![RegionProgress { applied: 0, start }; regions],
            window,
            one_shot,
            initialized_at,
        }
    }

    pub fn total_applied(&self) -> usize {
        self.regions.iter().map(|r| r.applied).sum()
    }
}

/// Executes every merge newly due at frame `t`, in plan order. Returns the
/// number of merges performed.
pub fn apply_merges(tokens: &mut TokenSet, plan: &MergePlan, progress: &mut MergeProgress, t: u64) -> Result<usize> {
    let mut done = 0;
    for region in &plan.regions {
        if region.frozen_at < progress.initialized_at {
            return Err(Error::PlanStale {
                frozen_at: region.frozen_at,
                initialized_at: progress.initialized_at,
            });
        }
        let rp = &mut progress.regions[region.region_id];
        let due = merges_due(t, rp.start, progress.window, region.target, progress.one_shot);
        if due > rp.applied {
            for pair in &region.pairs[rp.applied..due] {
                if tokens.merge(pair.src, pair.dst) {
                    done += 1;
                }
            }
            rp.applied = due;
        }
    }
    Ok(done)
}

/// One camera's reduced token set for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedTokens {
    pub frame_index: u64,
    pub embeddings: Embeddings,
    pub sizes: Vec<u32>,
    /// Retained row for every original patch.
    pub unmerge_map: Vec<usize>,
    /// Merges executed at this frame.
    pub merges: usize,
}

impl CompressedTokens {
    pub fn retained(&self) -> usize {
        self.sizes.len()
    }

    pub fn patches(&self) -> usize {
        self.unmerge_map.len()
    }

    /// Retention ratio, retained over original tokens.
    pub fn ratio(&self) -> f64 {
        self.retained() as f64 / self.patches() as f64
    }

    /// Broadcasts retained rows back to one row per original patch.
    pub fn unmerge(&self) -> Embeddings {
        let dim = self.embeddings.dim();
        let mut data = Vec::with_capacity(self.patches() * dim);
        for &row in &self.unmerge_map {
            data.extend_from_slice(self.embeddings.row(row));
        }
        Embeddings::new(self.patches(), dim, data).expect("row lengths agree")
    }
}
