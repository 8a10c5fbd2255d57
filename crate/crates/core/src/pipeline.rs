//! The streaming engine: warmup, partitioning, progressive merging, change
//! detection and re-initialization for the primary view, with the
//! auxiliary view gated independently.
//!
//! Per steady-state frame the order is fixed: validate, patchify, update
//! the depth history, check re-initialization, update static flags, check
//! restores (and re-convergence), refresh embeddings, apply due merges,
//! step the auxiliary view. A re-initialization preempts everything after
//! it and the frame is emitted at full resolution as the first frame of the
//! new warmup.

use std::fmt;

use crate::auxview::{AuxCompressor, AuxMode};
use crate::config::EngineConfig;
use crate::depth::{patchify_depth, PatchDepths};
use crate::dynamics::{
    check_reinit, check_restore, update_static_flags, DepthHistory, ReinitDecision, ReinitGate, RestoreDecision,
};
use crate::error::{Error, Result};
use crate::matching::{build_merge_pairs, MergePlan, RegionPlan};
use crate::partition::{assign_merge_ratios, partition_regions, RegionPartition, RegionStatus};
use crate::protection::{combine, geometric_protection, semantic_protection, AttentionAccumulator, ProtectionSet};
use crate::scheduler::{apply_merges, CompressedTokens, MergeProgress, RegionProgress, TokenSet};
use crate::types::{validate_frame, CameraFrame, CameraRole, FrameRecord, StreamLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup { frames_done: usize },
    Steady,
}

impl Phase {
    pub fn is_warmup(self) -> bool {
        matches!(self, Phase::Warmup { .. })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup { .. } => "warmup",
            Phase::Steady => "steady",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Reinit,
    Restore {
        region: usize,
    },
    /// A restored region re-converged and restarted its schedule.
    Remerge {
        region: usize,
    },
    AuxTransition {
        from: AuxMode,
        to: AuxMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub frame: u64,
    pub kind: EventKind,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Reinit => f.write_str("reinit"),
            EventKind::Restore { region } => write!(f, "restore:{region}"),
            EventKind::Remerge { region } => write!(f, "remerge:{region}"),
            EventKind::AuxTransition { to, .. } => write!(f, "aux:{to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub frame_index: u64,
    /// Phase the frame was processed in.
    pub phase: Phase,
    pub primary: CompressedTokens,
    pub auxiliary: Option<CompressedTokens>,
    pub aux_mode: Option<AuxMode>,
    pub events: Vec<Event>,
    pub region_status: Vec<RegionStatus>,
}

impl StepOutput {
    pub fn retained(&self) -> usize {
        self.primary.retained() + self.auxiliary.as_ref().map_or(0, CompressedTokens::retained)
    }

    pub fn patches(&self) -> usize {
        self.primary.patches() + self.auxiliary.as_ref().map_or(0, CompressedTokens::patches)
    }

    pub fn merges(&self) -> usize {
        self.primary.merges + self.auxiliary.as_ref().map_or(0, |a| a.merges)
    }
}

/// State established by the latest initialization.
#[derive(Debug, Clone)]
struct Initialized {
    protection: ProtectionSet,
    attended: Vec<usize>,
    partition: RegionPartition,
    plan: MergePlan,
    progress: MergeProgress,
    /// Consecutive calm frames per restored region.
    calm: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    layout: StreamLayout,
    phase: Phase,
    acc: AttentionAccumulator,
    init: Option<Initialized>,
    tokens: Option<TokenSet>,
    history: DepthHistory,
    aux: Option<AuxCompressor>,
    events: Vec<Event>,
    last_frame: Option<u64>,
}

impl Engine {
    pub fn new(config: EngineConfig, layout: StreamLayout) -> Result<Self> {
        config.validate()?;
        layout.validate()?;
        let primary = *layout
            .camera(CameraRole::Primary)
            .ok_or(Error::MissingCamera(CameraRole::Primary))?;
        let aux = layout.camera(CameraRole::Auxiliary).map(|_| AuxCompressor::new());
        Ok(Self {
            acc: AttentionAccumulator::new(primary.patches(), config.warmup_frames),
            history: DepthHistory::new(config.dynamics_window),
            phase: Phase::Warmup { frames_done: 0 },
            init: None,
            tokens: None,
            aux,
            events: Vec::new(),
            last_frame: None,
            config,
            layout,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn layout(&self) -> &StreamLayout {
        &self.layout
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn protection(&self) -> Option<&ProtectionSet> {
        self.init.as_ref().map(|i| &i.protection)
    }

    /// Semantic set monitored for re-initialization. Kept even when
    /// protection is disabled.
    pub fn attended(&self) -> Option<&[usize]> {
        self.init.as_ref().map(|i| i.attended.as_slice())
    }

    pub fn partition(&self) -> Option<&RegionPartition> {
        self.init.as_ref().map(|i| &i.partition)
    }

    pub fn plan(&self) -> Option<&MergePlan> {
        self.init.as_ref().map(|i| &i.plan)
    }

    pub fn progress(&self) -> Option<&MergeProgress> {
        self.init.as_ref().map(|i| &i.progress)
    }

    pub fn tokens(&self) -> Option<&TokenSet> {
        self.tokens.as_ref()
    }

    pub fn aux(&self) -> Option<&AuxCompressor> {
        self.aux.as_ref()
    }

    pub fn step(&mut self, frame: &FrameRecord) -> Result<StepOutput> {
        let t = frame.frame_index;
        if let Some(previous) = self.last_frame {
            if t <= previous {
                return Err(Error::NonMonotonicFrame { previous, found: t });
            }
        }
        self.step_inner(frame).map_err(|e| e.at_frame(t))
    }

    fn step_inner(&mut self, frame: &FrameRecord) -> Result<StepOutput> {
        let t = frame.frame_index;
        validate_frame(frame, &self.layout)?;
        let primary = frame
            .camera(CameraRole::Primary)
            .ok_or(Error::MissingCamera(CameraRole::Primary))?;
        let depths = patchify_depth(&primary.depth, primary.grid)?;
        let mut events = Vec::new();

        let phase_in = self.phase;
        let (phase, primary_out) = match phase_in {
            Phase::Warmup { .. } => (phase_in, self.warmup(primary, depths, t)?),
            Phase::Steady => {
                self.history.push(depths.clone());
                let init = self.init.as_ref().expect("steady phase is initialized");
                let gate = ReinitGate {
                    delta_reinit: self.config.delta_reinit,
                    carry_aperture: self.config.carry_aperture,
                    disabled: self.config.no_reinit,
                };
                if check_reinit(&self.history, &init.attended, &frame.robot, gate) == ReinitDecision::Reinit {
                    events.push(Event {
                        frame: t,
                        kind: EventKind::Reinit,
                    });
                    self.reset();
                    let phase = Phase::Warmup { frames_done: 0 };
                    (phase, self.warmup(primary, depths, t)?)
                } else {
                    (Phase::Steady, self.steady(primary, t, &mut events)?)
                }
            }
        };

        let (auxiliary, aux_mode) = match (self.aux.as_mut(), frame.camera(CameraRole::Auxiliary)) {
            (Some(aux), Some(cam)) => {
                let out = aux.step(cam, &frame.robot, t, &self.config)?;
                if let Some((from, to)) = out.transition {
                    events.push(Event {
                        frame: t,
                        kind: EventKind::AuxTransition { from, to },
                    });
                }
                (Some(out.tokens), Some(out.mode))
            }
            (Some(_), None) => return Err(Error::MissingCamera(CameraRole::Auxiliary)),
            _ => (None, None),
        };

        self.events.extend_from_slice(&events);
        self.last_frame = Some(t);
        Ok(StepOutput {
            frame_index: t,
            phase,
            primary: primary_out,
            auxiliary,
            aux_mode,
            events,
            region_status: self
                .partition()
                .map(|p| p.regions.iter().map(|r| r.status).collect())
                .unwrap_or_default(),
        })
    }

    fn reset(&mut self) {
        let patches = self.acc.sums().len();
        self.acc = AttentionAccumulator::new(patches, self.config.warmup_frames);
        self.history.clear();
        self.init = None;
        self.tokens = None;
        self.phase = Phase::Warmup { frames_done: 0 };
    }

    fn warmup(&mut self, cam: &CameraFrame, depths: PatchDepths, t: u64) -> Result<CompressedTokens> {
        let attention = cam.attention.as_ref().ok_or(Error::MissingAttention(cam.role))?;
        self.acc.accumulate(attention)?;
        self.history.push(depths.clone());
        let done = self.acc.frames_seen();
        self.phase = Phase::Warmup { frames_done: done };
        if self.acc.is_complete() {
            self.initialize(cam, depths, t)?;
        }
        let tokens = TokenSet::singletons(&cam.embeddings);
        let out = tokens.compress(t, 0);
        self.tokens = Some(tokens);
        Ok(out)
    }

    fn initialize(&mut self, cam: &CameraFrame, depths: PatchDepths, t: u64) -> Result<()> {
        let cfg = &self.config;
        let patches = cam.grid.patches();
        let attended = semantic_protection(&self.acc)?;
        let edges = geometric_protection(&depths, cfg.tau_edge);
        let protection = combine(&attended, &edges, patches, t, cfg.no_protection)?;

        // Without depth partitioning the unprotected patches form one region.
        let k = if cfg.uniform_ratio { 1 } else { cfg.clusters };
        let partition = partition_regions(&depths, &protection, k);
        let partition = assign_merge_ratios(partition, cfg.r_min, cfg.r_max, cfg.uniform_ratio);

        let plan = MergePlan {
            regions: partition
                .regions
                .iter()
                .map(|r| build_merge_pairs(r.id, &r.members, cam.grid, &cam.embeddings, r.merge_ratio, t))
                .collect(),
            frozen_at: t,
        };
        let progress = MergeProgress::new(partition.regions.len(), t + 1, cfg.merge_window, cfg.one_shot, t);
        self.history.set_init(depths);
        self.init = Some(Initialized {
            calm: vec![0; partition.regions.len()],
            protection,
            attended,
            partition,
            plan,
            progress,
        });
        self.phase = Phase::Steady;
        Ok(())
    }

    fn steady(&mut self, cam: &CameraFrame, t: u64, events: &mut Vec<Event>) -> Result<CompressedTokens> {
        let cfg = &self.config;
        let init = self.init.as_mut().expect("steady phase is initialized");
        let tokens = self.tokens.as_mut().expect("tokens exist after warmup");
        let flags = update_static_flags(&self.history, cfg.epsilon, &init.partition.regions);

        for k in 0..init.partition.regions.len() {
            let region = &mut init.partition.regions[k];
            match region.status {
                RegionStatus::Merging => {
                    if check_restore(region, &flags, cfg.gamma) == RestoreDecision::Restore {
                        tokens.split(&region.members, &cam.embeddings);
                        region.status = RegionStatus::Restored;
                        init.plan.regions[k] = RegionPlan::empty(k, t);
                        init.progress.regions[k] = RegionProgress {
                            applied: 0,
                            start: t + 1,
                        };
                        init.calm[k] = 0;
                        events.push(Event {
                            frame: t,
                            kind: EventKind::Restore { region: k },
                        });
                    }
                }
                RegionStatus::Restored => {
                    if flags.non_static_fraction[k] <= cfg.gamma / 2.0 {
                        init.calm[k] += 1;
                    } else {
                        init.calm[k] = 0;
                    }
                    if init.calm[k] >= cfg.dynamics_window {
                        init.plan.regions[k] =
                            build_merge_pairs(k, &region.members, cam.grid, &cam.embeddings, region.merge_ratio, t);
                        init.progress.regions[k] = RegionProgress {
                            applied: 0,
                            start: t + 1,
                        };
                        region.status = RegionStatus::Merging;
                        init.calm[k] = 0;
                        events.push(Event {
                            frame: t,
                            kind: EventKind::Remerge { region: k },
                        });
                    }
                }
            }
        }

        tokens.refresh_embeddings(&cam.embeddings);
        let merges = apply_merges(tokens, &init.plan, &mut init.progress, t)?;
        Ok(tokens.compress(t, merges))
    }
}
