//! Wrist-camera gating by end-effector dynamics.
//!
//! The predicted action chunk decides the mode: stable aperture with
//! significant motion selects [`AuxMode::Merge`], an aperture transition
//! with little motion selects [`AuxMode::FullView`], anything else keeps
//! the current mode. In Merge the view gets a one-shot uniform merge whose
//! topology is frozen for the whole Merge episode.

use std::fmt;

use crate::config::EngineConfig;
use crate::depth::patchify_depth;
use crate::error::{Error, Result};
use crate::matching::{build_merge_pairs, RegionPlan};
use crate::protection::geometric_protection;
use crate::scheduler::{CompressedTokens, TokenSet};
use crate::types::{CameraFrame, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuxMode {
    Merge,
    FullView,
}

impl AuxMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AuxMode::Merge => "merge",
            AuxMode::FullView => "full-view",
        }
    }
}

impl fmt::Display for AuxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AuxMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "merge" => Ok(AuxMode::Merge),
            "full-view" => Ok(AuxMode::FullView),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxState {
    pub mode: AuxMode,
    pub last_transition_frame: Option<u64>,
}

impl Default for AuxState {
    fn default() -> Self {
        Self {
            mode: AuxMode::FullView,
            last_transition_frame: None,
        }
    }
}

/// Picks the auxiliary mode from the predicted chunk alone.
pub fn classify_phase(robot: &RobotState, motion_sig: f64, aperture_stable: f64, current: AuxMode) -> Result<AuxMode> {
    if robot.action_chunk.is_empty() {
        return Err(Error::EmptyChunk);
    }
    let mut max_step = 0.0f64;
    let mut max_aperture = 0.0f64;
    for &[dx, dy, dz, da] in &robot.action_chunk {
        let (dx, dy, dz) = (dx as f64, dy as f64, dz as f64);
        max_step = max_step.max((dx * dx + dy * dy + dz * dz).sqrt());
        max_aperture = max_aperture.max((da as f64).abs());
    }
    let transition = max_aperture > aperture_stable;
    let moving = max_step > motion_sig;
    Ok(match (transition, moving) {
        (false, true) => AuxMode::Merge,
        (true, false) => AuxMode::FullView,
        _ => current,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxOutput {
    pub tokens: CompressedTokens,
    pub mode: AuxMode,
    /// `(from, to)` when the mode changed at this frame.
    pub transition: Option<(AuxMode, AuxMode)>,
}

/// Per-stream auxiliary compressor.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxCompressor {
    state: AuxState,
    tokens: Option<TokenSet>,
    plan: Option<RegionPlan>,
    protected: Vec<usize>,
}

impl Default for AuxCompressor {
    fn default() -> Self {
        Self::new()
    }
}

impl AuxCompressor {
    pub fn new() -> Self {
        Self {
            state: AuxState::default(),
            tokens: None,
            plan: None,
            protected: Vec::new(),
        }
    }

    pub fn state(&self) -> AuxState {
        self.state
    }

    pub fn plan(&self) -> Option<&RegionPlan> {
        self.plan.as_ref()
    }

    /// Edge-protected patches of the current Merge episode.
    pub fn protected(&self) -> &[usize] {
        &self.protected
    }

    pub fn step(
        &mut self,
        camera: &CameraFrame,
        robot: &RobotState,
        frame_index: u64,
        config: &EngineConfig,
    ) -> Result<AuxOutput> {
        let previous = self.state.mode;
        let mode = if config.no_auxview {
            AuxMode::FullView
        } else {
            classify_phase(robot, config.motion_sig, config.aperture_stable, previous)?
        };
        let transition = (mode != previous).then_some((previous, mode));
        if transition.is_some() {
            self.state = AuxState {
                mode,
                last_transition_frame: Some(frame_index),
            };
        }

        let mut merges = 0;
        match mode {
            AuxMode::FullView => {
                self.tokens = None;
                self.plan = None;
                self.protected.clear();
            }
            AuxMode::Merge if self.tokens.is_none() => {
                let depths = patchify_depth(&camera.depth, camera.grid)?;
                self.protected = geometric_protection(&depths, config.tau_edge);
                let mut shielded = vec![false; camera.grid.patches()];
                for &i in &self.protected {
                    shielded[i] = true;
                }
                let free: Vec<usize> = (0..camera.grid.patches()).filter(|&i| !shielded[i]).collect();
                let plan = build_merge_pairs(0, &free, camera.grid, &camera.embeddings, config.r_aux, frame_index);
                let mut tokens = TokenSet::singletons(&camera.embeddings);
                for pair in &plan.pairs[..plan.target] {
                    if tokens.merge(pair.src, pair.dst) {
                        merges += 1;
                    }
                }
                self.tokens = Some(tokens);
                self.plan = Some(plan);
            }
            AuxMode::Merge => {
                if let Some(tokens) = self.tokens.as_mut() {
                    tokens.refresh_embeddings(&camera.embeddings);
                }
            }
        }

        let tokens = match &self.tokens {
            Some(t) => t.compress(frame_index, merges),
            None => TokenSet::singletons(&camera.embeddings).compress(frame_index, 0),
        };
        Ok(AuxOutput {
            tokens,
            mode,
            transition,
        })
    }
}
