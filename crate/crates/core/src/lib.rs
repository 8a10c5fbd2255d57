//! Training-free visual token compression for streaming robot
//! manipulation inference.
//!
//! Per-frame depth maps steer where patch tokens get merged. Warmup
//! frames build a protection set from accumulated attention and depth
//! edges. The remaining patches are clustered by depth into regions whose
//! merge ratio grows with distance, and each region's merges are spread
//! over a window of frames along a frozen bipartite matching. Regions
//! that start moving are restored to full resolution, and drift of the
//! attended patches triggers a fresh initialization. A wrist camera is
//! merged or passed through according to the predicted end-effector
//! motion.
//!
//! The [`Engine`] is the entry point; [`trace`], [`scenario`] and
//! [`report`] provide the trace format, a synthetic scene generator and
//! run reports.

pub mod auxview;
pub mod config;
pub mod depth;
pub mod dynamics;
pub mod error;
pub mod matching;
pub mod partition;
pub mod pipeline;
pub mod protection;
pub mod report;
pub mod scenario;
pub mod scheduler;
pub mod trace;
pub mod types;

pub use auxview::{classify_phase, AuxCompressor, AuxMode, AuxState};
pub use config::{CostModel, EngineConfig};
pub use depth::{patchify_depth, PatchDepths};
pub use error::{Error, Result};
pub use matching::{build_merge_pairs, cosine, MergePair, MergePlan, RegionPlan};
pub use partition::{assign_merge_ratios, kmeans_depth, PatchLabel, Region, RegionPartition, RegionStatus};
pub use pipeline::{Engine, Event, EventKind, Phase, StepOutput};
pub use protection::{AttentionAccumulator, ProtectionSet};
pub use report::{predicted_speedup, run_trace, Aggregate, ReportRow, RunReport};
pub use scenario::{generate_scene, Scenario, ScenarioSpec};
pub use scheduler::{apply_merges, merges_due, CompressedTokens, MergeProgress, TokenSet};
pub use trace::{Trace, TraceHeader};
pub use types::{
    validate_frame, CameraFrame, CameraRole, CameraSpec, DepthMap, Embeddings, FrameRecord, GridDims, RobotState,
    StreamLayout,
};
