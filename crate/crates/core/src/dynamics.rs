//! Depth-stability tracking, region restoration and re-initialization
//! triggers.

use std::collections::VecDeque;

use crate::depth::PatchDepths;
use crate::partition::{Region, RegionStatus};
use crate::types::RobotState;

/// Sliding window of recent patch depths plus the snapshot taken at the
/// latest initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthHistory {
    buffer: VecDeque<PatchDepths>,
    capacity: usize,
    init_depths: Option<PatchDepths>,
}

impl DepthHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            buffer: VecDeque::with_capacity(capacity),
            capacity: capacity.max(1),
            init_depths: None,
        }
    }

    pub fn push(&mut self, depths: PatchDepths) {
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(depths);
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.init_depths = None;
    }

    pub fn set_init(&mut self, depths: PatchDepths) {
        self.init_depths = Some(depths);
    }

    pub fn init_depths(&self) -> Option<&PatchDepths> {
        self.init_depths.as_ref()
    }

    pub fn latest(&self) -> Option<&PatchDepths> {
        self.buffer.back()
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Max minus min depth of each patch over the window.
    pub fn ranges(&self) -> Vec<f64> {
        let Some(first) = self.buffer.front() else {
            return Vec::new();
        };
        let mut lo: Vec<f64> = first.values.iter().map(|&v| v as f64).collect();
        let mut hi = lo.clone();
        for frame in self.buffer.iter().skip(1) {
            for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(&frame.values) {
                *l = l.min(v as f64);
                *h = h.max(v as f64);
            }
        }
        lo.iter().zip(&hi).map(|(l, h)| h - l).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticFlags {
    pub flags: Vec<bool>,
    /// Non-static fraction per region, indexed by region id.
    pub non_static_fraction: Vec<f64>,
}

/// A patch is static when its depth range over the window stays below
/// `epsilon`. With fewer than two frames buffered everything is static.
pub fn update_static_flags(history: &DepthHistory, epsilon: f64, regions: &[Region]) -> StaticFlags {
    let patches = history.latest().map_or(0, PatchDepths::len);
    let flags: Vec<bool> = if history.len() < 2 {
        vec![true; patches]
    } else {
        history.ranges().into_iter().map(|r| r < epsilon).collect()
    };
    let non_static_fraction = regions
        .iter()
        .map(|r| {
            if r.members.is_empty() {
                0.0
            } else {
                let moving = r.members.iter().filter(|&&i| !flags[i]).count();
                moving as f64 / r.members.len() as f64
            }
        })
        .collect();
    StaticFlags {
        flags,
        non_static_fraction,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestoreDecision {
    Keep,
    Restore,
}

/// Restore a merging region whose non-static fraction strictly exceeds
/// `gamma`. Regions already restored are left alone.
pub fn check_restore(region: &Region, flags: &StaticFlags, gamma: f64) -> RestoreDecision {
    if region.status == RegionStatus::Restored {
        return RestoreDecision::Keep;
    }
    if flags.non_static_fraction[region.id] > gamma {
        RestoreDecision::Restore
    } else {
        RestoreDecision::Keep
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReinitDecision {
    NoReinit,
    Reinit,
}

/// Mean absolute depth change over the attended patches since the last
/// initialization, or `None` when it cannot be evaluated.
pub fn attended_depth_change(history: &DepthHistory, attended: &[usize]) -> Option<f64> {
    let (now, init) = (history.latest()?, history.init_depths()?);
    if attended.is_empty() {
        return None;
    }
    let total: f64 = attended
        .iter()
        .map(|&i| (now.values[i] as f64 - init.values[i] as f64).abs())
        .sum();
    Some(total / attended.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReinitGate {
    pub delta_reinit: f64,
    pub carry_aperture: f64,
    pub disabled: bool,
}

/// Re-initialize when the attended patches drifted by more than
/// `delta_reinit` on average, unless the gripper is carrying an object.
pub fn check_reinit(
    history: &DepthHistory,
    attended: &[usize],
    robot: &RobotState,
    gate: ReinitGate,
) -> ReinitDecision {
    if gate.disabled || (robot.gripper_aperture as f64) < gate.carry_aperture {
        return ReinitDecision::NoReinit;
    }
    match attended_depth_change(history, attended) {
        Some(change) if change > gate.delta_reinit => ReinitDecision::Reinit,
        _ => ReinitDecision::NoReinit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GridDims;

    fn pd(values: &[f32]) -> PatchDepths {
        PatchDepths::new(values.to_vec(), GridDims::new(1, values.len())).unwrap()
    }

    fn history(frames: &[&[f32]], cap: usize) -> DepthHistory {
        let mut h = DepthHistory::new(cap);
        for f in frames {
            h.push(pd(f));
        }
        h
    }

    fn region(members: Vec<usize>) -> Region {
        Region {
            id: 0,
            members,
            mean_depth: 1.0,
            merge_ratio: 0.5,
            status: RegionStatus::Merging,
        }
    }

    #[test]
    fn constant_depth_is_static() {
        let h = history(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]], 5);
        assert!(update_static_flags(&h, 0.01, &[]).flags.iter().all(|&s| s));
    }

    #[test]
    fn oscillation_is_not_static() {
        let h = history(&[&[1.0], &[1.01], &[0.99]], 5);
        assert!(!update_static_flags(&h, 0.01, &[]).flags[0]);
    }

    #[test]
    fn slow_drift_under_epsilon_is_static() {
        let h = history(&[&[1.0], &[1.004], &[1.009]], 3);
        assert!(update_static_flags(&h, 0.01, &[]).flags[0]);
    }

    #[test]
    fn window_forgets_old_frames() {
        let h = history(&[&[5.0], &[1.0], &[1.0]], 2);
        assert!(update_static_flags(&h, 0.01, &[]).flags[0]);
        assert!(update_static_flags(&history(&[&[1.0]], 2), 0.01, &[]).flags[0]);
    }

    fn flags_with(moving: usize, total: usize) -> (Region, StaticFlags) {
        let flags = (0..total).map(|i| i >= moving).collect::<Vec<_>>();
        let r = region((0..total).collect());
        let frac = moving as f64 / total as f64;
        (
            r,
            StaticFlags {
                flags,
                non_static_fraction: vec![frac],
            },
        )
    }

    #[test]
    fn restore_threshold_is_strict() {
        let (r, f) = flags_with(4, 10);
        assert_eq!(check_restore(&r, &f, 0.3), RestoreDecision::Restore);
        let (r, f) = flags_with(3, 10);
        assert_eq!(check_restore(&r, &f, 0.3), RestoreDecision::Keep);
        let (r, f) = flags_with(0, 10);
        assert_eq!(check_restore(&r, &f, 0.3), RestoreDecision::Keep);
    }

    #[test]
    fn restored_region_is_not_restored_again() {
        let (mut r, f) = flags_with(10, 10);
        r.status = RegionStatus::Restored;
        assert_eq!(check_restore(&r, &f, 0.3), RestoreDecision::Keep);
    }

    #[test]
    fn fractions_are_exact() {
        let h = history(&[&[1.0, 1.0, 1.0, 1.0], &[1.5, 1.0, 1.5, 1.0]], 5);
        let r = region(vec![0, 1, 2]);
        let f = update_static_flags(&h, 0.01, &[r]);
        assert_eq!(f.non_static_fraction, vec![2.0 / 3.0]);
    }

    const GATE: ReinitGate = ReinitGate {
        delta_reinit: 0.05,
        carry_aperture: 0.2,
        disabled: false,
    };

    fn reinit_case(change: f32, aperture: f32) -> ReinitDecision {
        let mut h = history(&[&[1.0; 8]], 5);
        h.set_init(pd(&[1.0; 8]));
        let mut now = [1.0f32; 8];
        now[5] += change;
        h.push(pd(&now));
        let mut robot = RobotState::idle(1);
        robot.gripper_aperture = aperture;
        check_reinit(&h, &[5], &robot, GATE)
    }

    #[test]
    fn reinit_cases() {
        assert_eq!(reinit_case(0.08, 1.0), ReinitDecision::Reinit);
        assert_eq!(reinit_case(0.0, 1.0), ReinitDecision::NoReinit);
        assert_eq!(reinit_case(5.0, 0.1), ReinitDecision::NoReinit);
    }

    #[test]
    fn empty_attention_set_never_reinits() {
        let mut h = history(&[&[1.0]], 5);
        h.set_init(pd(&[9.0]));
        assert_eq!(
            check_reinit(&h, &[], &RobotState::idle(1), GATE),
            ReinitDecision::NoReinit
        );
    }

    #[test]
    fn disabled_gate_never_reinits() {
        let mut h = history(&[&[1.0]], 5);
        h.set_init(pd(&[9.0]));
        let gate = ReinitGate { disabled: true, ..GATE };
        assert_eq!(
            check_reinit(&h, &[0], &RobotState::idle(1), gate),
            ReinitDecision::NoReinit
        );
    }
}
