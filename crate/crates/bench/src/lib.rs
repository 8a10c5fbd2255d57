//! Fixtures shared by the criterion benches.

use depthtok::{generate_scene, Embeddings, Engine, EngineConfig, Scenario, ScenarioSpec, Trace};

pub fn scene(scenario: Scenario, frames: usize) -> Trace {
    generate_scene(&ScenarioSpec::preset(scenario, frames), 0).expect("preset specs are valid")
}

/// Engine stepped through warmup and the merge window of `trace`.
pub fn converged_engine(trace: &Trace, config: &EngineConfig) -> Engine {
    let mut engine = Engine::new(config.clone(), trace.layout()).expect("valid config");
    let settle = config.warmup_frames + config.merge_window + 1;
    for frame in &trace.frames[..settle.min(trace.frames.len())] {
        engine.step(frame).expect("generated frames are valid");
    }
    engine
}

/// Depth values spread like a tabletop scene, `n` patches.
pub fn ramp_depths(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.75 + 0.7 * ((i * 37) % n) as f64 / n as f64).collect()
}

pub fn primary_embeddings(trace: &Trace) -> &Embeddings {
    &trace.frames[0].cameras[0].embeddings
}
