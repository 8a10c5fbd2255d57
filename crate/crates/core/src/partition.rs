//! Depth clustering of unprotected patches and depth-proportional merge
//! ratios.

use crate::depth::PatchDepths;
use crate::protection::ProtectionSet;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans1d {
    /// Cluster id per input value; ids ascend with centroid.
    pub labels: Vec<usize>,
    pub centroids: Vec<f64>,
    /// Cluster count actually used; below the request when there are fewer
    /// distinct values than clusters.
    pub k: usize,
}

impl KMeans1d {
    pub fn sse(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.labels)
            .map(|(v, &l)| (v - self.centroids[l]).powi(2))
            .sum()
    }
}

/// Exact 1-D K-means.
///
/// The optimum in one dimension is a contiguous run of the sorted values,
/// so a dynamic program over split points finds the global minimum of the
/// within-cluster sum of squares. Splits are only placed between distinct
/// values, so equal depths always share a cluster. Among equal-cost
/// partitions the one with the earliest splits wins.
pub fn kmeans_depth(values: &[f64], k: usize) -> KMeans1d {
    let n = values.len();
    if n == 0 || k == 0 {
        return KMeans1d {
            labels: vec![0; n],
            centroids: Vec::new(),
            k: 0,
        };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // Valid split positions s: cluster boundary between sorted[s-1] and sorted[s].
    let can_split: Vec<bool> = (0..=n).map(|s| s > 0 && s < n && sorted[s - 1] < sorted[s]).collect();
    let distinct = 1 + can_split.iter().filter(|&&b| b).count();
    let k = k.min(distinct);

    // Centered prefix sums keep the cost subtraction well conditioned.
    let shift = sorted.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &v) in sorted.iter().enumerate() {
        let c = v - shift;
        s1[i + 1] = s1[i] + c;
        s2[i + 1] = s2[i] + c * c;
    }
    let cost = |i: usize, j: usize| -> f64 {
        let m = (j - i) as f64;
        let a = s1[j] - s1[i];
        (s2[j] - s2[i] - a * a / m).max(0.0)
    };

    // best[c][j]: min cost of clustering sorted[..j] into c+1 clusters.
    let inf = f64::INFINITY;
    let mut best = vec![vec![inf; n + 1]; k];
    let mut split = vec![vec![0usize; n + 1]; k];
    for j in 1..=n {
        if j == n || can_split[j] {
            best[0][j] = cost(0, j);
        }
    }
    for c in 1..k {
        for j in 1..=n {
            if !(j == n || can_split[j]) {
                continue;
            }
            for s in 1..j {
                if !can_split[s] || best[c - 1][s] == inf {
                    continue;
                }
                let total = best[c - 1][s] + cost(s, j);
                if total < best[c][j] {
                    best[c][j] = total;
                    split[c][j] = s;
                }
            }
        }
    }

    let mut bounds = vec![n];
    let mut j = n;
    for c in (1..k).rev() {
        j = split[c][j];
        bounds.push(j);
    }
    bounds.push(0);
    bounds.reverse();

    let mut labels = vec![0usize; n];
    let mut centroids = Vec::with_capacity(k);
    for (cluster, w) in bounds.windows(2).enumerate() {
        let members = &order[w[0]..w[1]];
        let mean = members.iter().map(|&i| values[i]).sum::<f64>() / members.len() as f64;
        centroids.push(mean);
        for &i in members {
            labels[i] = cluster;
        }
    }
    KMeans1d { labels, centroids, k }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchLabel {
    Protected,
    Region(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionStatus {
    Merging,
    Restored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub members: Vec<usize>,
    pub mean_depth: f64,
    pub merge_ratio: f64,
    pub status: RegionStatus,
}

impl Region {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionPartition {
    pub labels: Vec<PatchLabel>,
    pub regions: Vec<Region>,
    pub d_min: f64,
    pub d_max: f64,
    /// Clusters requested vs. used (fewer when depths are degenerate).
    pub requested_k: usize,
}

impl RegionPartition {
    pub fn region_of(&self, patch: usize) -> Option<usize> {
        match self.labels[patch] {
            PatchLabel::Region(k) => Some(k),
            PatchLabel::Protected => None,
        }
    }

    pub fn is_reduced(&self) -> bool {
        self.regions.len() < self.requested_k
    }
}

/// Clusters the unprotected patches by depth into at most `k` regions.
/// Ratios are left at zero until [`assign_merge_ratios`].
pub fn partition_regions(depths: &PatchDepths, protection: &ProtectionSet, k: usize) -> RegionPartition {
    let free: Vec<usize> = (0..depths.len()).filter(|&i| !protection.contains(i)).collect();
    let values: Vec<f64> = free.iter().map(|&i| depths.values[i] as f64).collect();
    let km = kmeans_depth(&values, k);

    let mut labels = vec![PatchLabel::Protected; depths.len()];
    let mut members = vec![Vec::new(); km.k];
    for (&patch, &cluster) in free.iter().zip(&km.labels) {
        labels[patch] = PatchLabel::Region(cluster);
        members[cluster].push(patch);
    }
    let regions: Vec<Region> = members
        .into_iter()
        .enumerate()
        .map(|(id, members)| Region {
            id,
            mean_depth: km.centroids[id],
            members,
            merge_ratio: 0.0,
            status: RegionStatus::Merging,
        })
        .collect();
    let d_min = regions.iter().map(|r| r.mean_depth).fold(f64::INFINITY, f64::min);
    let d_max = regions.iter().map(|r| r.mean_depth).fold(f64::NEG_INFINITY, f64::max);
    let (d_min, d_max) = if regions.is_empty() { (0.0, 0.0) } else { (d_min, d_max) };
    RegionPartition {
        labels,
        regions,
        d_min,
        d_max,
        requested_k: k,
    }
}

/// Linear depth-to-ratio map between `r_min` at the nearest region mean
/// and `r_max` at the farthest. A flat depth range yields `r_min`;
/// `uniform` assigns `r_max` everywhere.
pub fn assign_merge_ratios(mut partition: RegionPartition, r_min: f64, r_max: f64, uniform: bool) -> RegionPartition {
    let span = partition.d_max - partition.d_min;
    for region in &mut partition.regions {
        region.merge_ratio = if uniform {
            r_max
        } else if span > 0.0 {
            let t = ((region.mean_depth - partition.d_min) / span).clamp(0.0, 1.0);
            // Convex form hits both endpoints exactly.
            (r_min * (1.0 - t) + r_max * t).clamp(r_min, r_max)
        } else {
            r_min
        };
    }
    partition
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protection::combine;
    use crate::types::GridDims;
    use proptest::prelude::*;

    #[test]
    fn two_separated_groups() {
        let km = kmeans_depth(&[1.0, 1.0, 5.0, 5.0], 2);
        assert_eq!(km.labels, vec![0, 0, 1, 1]);
        assert_eq!(km.centroids, vec![1.0, 5.0]);
    }

    #[test]
    fn equal_depths_reduce_k() {
        let km = kmeans_depth(&[2.0; 6], 3);
        assert_eq!(km.k, 1);
        assert_eq!(km.labels, vec![0; 6]);
    }

    #[test]
    fn three_clusters() {
        let km = kmeans_depth(&[0.4, 0.5, 2.0, 2.1, 2.2, 5.0], 3);
        assert_eq!(km.labels, vec![0, 0, 1, 1, 1, 2]);
    }

    #[test]
    fn labels_follow_input_order() {
        let km = kmeans_depth(&[5.0, 1.0, 5.1, 0.9], 2);
        assert_eq!(km.labels, vec![1, 0, 1, 0]);
    }

    fn partition_of(depths: &[f32], protected: &[usize], k: usize) -> RegionPartition {
        let d = PatchDepths::new(depths.to_vec(), GridDims::new(1, depths.len())).unwrap();
        let p = combine(protected, &[], depths.len(), 0, false).unwrap();
        partition_regions(&d, &p, k)
    }

    #[test]
    fn protected_patches_are_excluded() {
        let part = partition_of(&[1.0, 1.0, 9.0, 5.0, 5.0], &[2], 2);
        assert_eq!(part.labels[2], PatchLabel::Protected);
        assert_eq!(part.regions[0].members, vec![0, 1]);
        assert_eq!(part.regions[1].members, vec![3, 4]);
        assert_eq!((part.d_min, part.d_max), (1.0, 5.0));
    }

    #[test]
    fn ratio_endpoints_and_midpoint() {
        let part = partition_of(&[1.0, 1.0, 2.0, 2.0, 3.0, 3.0], &[], 3);
        let part = assign_merge_ratios(part, 0.1, 0.7, false);
        let r: Vec<f64> = part.regions.iter().map(|r| r.merge_ratio).collect();
        assert_eq!(r[0], 0.1);
        assert_eq!(r[2], 0.7);
        assert!((r[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn flat_range_uses_r_min_and_uniform_uses_r_max() {
        let part = partition_of(&[2.0; 4], &[], 3);
        let flat = assign_merge_ratios(part.clone(), 0.1, 0.7, false);
        assert_eq!(flat.regions.len(), 1);
        assert_eq!(flat.regions[0].merge_ratio, 0.1);
        let uni = assign_merge_ratios(partition_of(&[1.0, 3.0], &[], 2), 0.1, 0.7, true);
        assert!(uni.regions.iter().all(|r| r.merge_ratio == 0.7));
    }

    #[test]
    fn all_protected_gives_no_regions() {
        let part = partition_of(&[1.0, 2.0], &[0, 1], 3);
        assert!(part.regions.is_empty());
        assert!(part.is_reduced());
    }

    proptest! {
        #[test]
        fn ratios_are_monotone_in_depth(
            depths in proptest::collection::vec(0.2f32..4.0, 2..60),
            k in 1usize..5,
        ) {
            let part = assign_merge_ratios(partition_of(&depths, &[], k), 0.1, 0.7, false);
            for a in &part.regions {
                prop_assert!((0.1..=0.7).contains(&a.merge_ratio));
                prop_assert!(part.d_min <= a.mean_depth && a.mean_depth <= part.d_max);
                for b in &part.regions {
                    if a.mean_depth <= b.mean_depth {
                        prop_assert!(a.merge_ratio <= b.merge_ratio);
                    }
                }
            }
        }

        #[test]
        fn affine_depth_maps_preserve_partition(
            depths in proptest::collection::vec(0.2f32..4.0, 2..40),
            k in 1usize..4,
            scale in 0.5f32..3.0,
            offset in 0.0f32..1.0,
        ) {
            let base = assign_merge_ratios(partition_of(&depths, &[], k), 0.1, 0.7, false);
            let moved: Vec<f32> = depths.iter().map(|d| d * scale + offset).collect();
            let other = assign_merge_ratios(partition_of(&moved, &[], k), 0.1, 0.7, false);
            prop_assume!(base.regions.len() == other.regions.len());
            for (a, b) in base.regions.iter().zip(&other.regions) {
                prop_assert_eq!(&a.members, &b.members);
                prop_assert!((a.merge_ratio - b.merge_ratio).abs() < 1e-4);
            }
        }
    }
}
