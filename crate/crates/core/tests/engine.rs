mod common;

use common::*;
use depthtok::auxview::classify_phase;
use depthtok::{
    run_trace, AuxMode, CameraFrame, CameraRole, CameraSpec, DepthMap, Embeddings, Engine, EngineConfig, Error,
    EventKind, FrameRecord, GridDims, Phase, RobotState, Scenario, ScenarioSpec, StreamLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn reinit_is_followed_by_exactly_n_warmup_frames() {
    for n in [1, 3, 5] {
        let cfg = EngineConfig {
            warmup_frames: n,
            one_shot: true,
            ..EngineConfig::default()
        };
        let trace = trace(Scenario::PerturbedObject, 40, 1);
        let mut engine = Engine::new(cfg, trace.layout()).unwrap();
        let outs: Vec<_> = trace.frames.iter().map(|f| engine.step(f).unwrap()).collect();
        let reinit = outs
            .iter()
            .position(|o| o.events.iter().any(|e| e.kind == EventKind::Reinit))
            .unwrap();
        assert_eq!(reinit, 20);
        let full: Vec<bool> = outs[reinit..]
            .iter()
            .map(|o| o.primary.retained() == o.primary.patches())
            .collect();
        let warm: Vec<bool> = outs[reinit..].iter().map(|o| o.phase.is_warmup()).collect();
        assert!(full[..n].iter().all(|&f| f), "n={n}");
        assert!(warm[..n].iter().all(|&w| w) && !warm[n], "n={n}");
        assert!(
            !full[n],
            "first steady frame after the cycle compresses with one_shot, n={n}"
        );
    }
}

#[test]
fn every_frame_emits_one_output_per_camera() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for scenario in Scenario::ALL {
        let trace = trace(scenario, 25, 3);
        for _ in 0..5 {
            let report = run_trace(&random_config(&mut rng), &trace).unwrap();
            assert_eq!(report.rows.len(), 25);
            for row in &report.rows {
                assert_eq!((row.primary_patches, row.aux_patches), (256, 256));
                assert!(row.rho() > 0.0 && row.rho() <= 1.0);
            }
        }
    }
}

fn flat_layout(side: usize) -> StreamLayout {
    StreamLayout {
        cameras: vec![CameraSpec {
            role: CameraRole::Primary,
            height: side * 2,
            width: side * 2,
            grid_rows: side,
            grid_cols: side,
            dim: 4,
            attention: true,
        }],
        chunk_len: 2,
    }
}

fn flat_frame(t: u64, side: usize) -> FrameRecord {
    let p = side * side;
    FrameRecord {
        frame_index: t,
        cameras: vec![CameraFrame {
            role: CameraRole::Primary,
            grid: GridDims::new(side, side),
            depth: DepthMap::filled(side * 2, side * 2, 1.0),
            embeddings: Embeddings::zeros(p, 4),
            attention: Some(vec![0.25; p]),
        }],
        robot: RobotState::idle(2),
    }
}

#[test]
fn degenerate_scene_still_produces_outputs() {
    let mut engine = Engine::new(EngineConfig::default(), flat_layout(6)).unwrap();
    for t in 0..15 {
        let out = engine.step(&flat_frame(t, 6)).unwrap();
        assert_eq!(out.primary.patches(), 36);
        assert!(out.auxiliary.is_none());
    }
    let part = engine.partition().unwrap();
    assert_eq!(part.regions.len(), 1);
    assert!(part.is_reduced());
    assert!(engine.protection().unwrap().is_empty());
    // Flat depth range takes r_min; zero embeddings still merge by budget.
    let retained = engine.tokens().unwrap().retained();
    assert_eq!(retained, 36 - 3);
}

#[test]
fn no_reinit_while_carrying() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..12 {
        let frames = 40;
        let mut spec = ScenarioSpec::preset(Scenario::PerturbedObject, frames);
        spec.initial_aperture = rng.random_range(0.0..0.2);
        spec.displacement = Some(depthtok::scenario::Displacement {
            frame: rng.random_range(6..frames),
            depth_offset: rng.random_range(0.05..0.5),
        });
        let cfg = EngineConfig {
            delta_reinit: rng.random_range(0.01..0.1),
            ..EngineConfig::default()
        };
        let report = run_trace(&cfg, &trace_from(&spec, case)).unwrap();
        assert_eq!(report.aggregate.reinit_events, 0, "case {case}");
    }
}

#[test]
fn approach_and_grasp_has_two_full_view_episodes() {
    let trace = trace(Scenario::ApproachAndGrasp, 60, 8);
    let report = run_trace(&EngineConfig::default(), &trace).unwrap();
    let modes: Vec<AuxMode> = report.rows.iter().map(|r| r.aux_mode.unwrap()).collect();
    let episodes = modes
        .iter()
        .enumerate()
        .filter(|&(i, &m)| m == AuxMode::FullView && (i == 0 || modes[i - 1] == AuxMode::Merge))
        .count();
    assert_eq!(episodes, 2);

    // Every change of mode is justified by that frame's chunk alone.
    let mut current = AuxMode::FullView;
    for (frame, row) in trace.frames.iter().zip(&report.rows) {
        let want = classify_phase(&frame.robot, 0.01, 0.05, current).unwrap();
        assert_eq!(row.aux_mode, Some(want), "frame {}", row.frame);
        let logged = row.events.iter().any(|e| matches!(e, EventKind::AuxTransition { .. }));
        assert_eq!(logged, want != current, "frame {}", row.frame);
        current = want;
    }
}

#[test]
fn outputs_do_not_depend_on_future_frames() {
    let full = trace(Scenario::MultiPhase, 50, 9);
    let cfg = EngineConfig::default();
    let mut engine = Engine::new(cfg.clone(), full.layout()).unwrap();
    let reference: Vec<_> = full.frames.iter().map(|f| engine.step(f).unwrap()).collect();
    for cut in [1, 13, 22, 37] {
        let mut engine = Engine::new(cfg.clone(), full.layout()).unwrap();
        for (f, want) in full.frames[..cut].iter().zip(&reference) {
            assert_eq!(&engine.step(f).unwrap(), want, "cut {cut}");
        }
    }
    // Rewriting what follows a frame's chunk leaves that frame alone.
    let mut altered = full.clone();
    for f in &mut altered.frames[30..] {
        f.robot.action_chunk.iter_mut().for_each(|s| *s = [0.0, 0.0, 0.0, 0.9]);
        f.robot.gripper_aperture = 0.0;
    }
    let mut engine = Engine::new(cfg, altered.layout()).unwrap();
    for (f, want) in altered.frames[..30].iter().zip(&reference) {
        assert_eq!(&engine.step(f).unwrap(), want);
    }
}

fn closed_form_retained(r_max: f64, grid: GridDims) -> usize {
    let p = grid.patches();
    // Checkerboard on an even grid: half the patches are sources.
    let sources = p / 2;
    let budget = ((r_max * 1000.0).round() as usize * p / 1000).min(sources);
    p - budget
}

#[test]
fn full_ablation_matches_the_closed_form() {
    let trace = trace(Scenario::StaticScene, 20, 10);
    for r_max in [0.0, 0.1, 0.3, 0.5, 0.7, 1.0] {
        let cfg = EngineConfig {
            uniform_ratio: true,
            one_shot: true,
            no_protection: true,
            no_reinit: true,
            no_auxview: true,
            r_min: 0.0,
            r_max,
            ..EngineConfig::default()
        };
        let report = run_trace(&cfg, &trace).unwrap();
        let want = closed_form_retained(r_max, GridDims::new(16, 16));
        for row in &report.rows[cfg.warmup_frames..] {
            assert_eq!(row.primary_retained, want, "r_max {r_max} frame {}", row.frame);
            assert_eq!(row.aux_retained, 256);
        }
    }
}

#[test]
fn zero_ratios_never_merge() {
    let cfg = EngineConfig {
        r_min: 0.0,
        r_max: 0.0,
        r_aux: 0.0,
        ..EngineConfig::default()
    };
    for scenario in Scenario::ALL {
        let report = run_trace(&cfg, &trace(scenario, 30, 11)).unwrap();
        assert!(report.rows.iter().all(|r| r.rho() == 1.0 && r.merges == 0));
    }
}

#[test]
fn static_scene_converges_and_stays() {
    let report = run_trace(&EngineConfig::default(), &trace(Scenario::StaticScene, 50, 12)).unwrap();
    assert_eq!(report.aggregate.restore_events, 0);
    assert_eq!(report.aggregate.reinit_events, 0);
    let steady = report.rows[10].primary_retained;
    assert!(report.rows[10..].iter().all(|r| r.primary_retained == steady));
    assert!(report.rows[..5]
        .iter()
        .all(|r| r.phase == "warmup" && r.primary_retained == 256));
    assert!(report
        .rows
        .windows(2)
        .all(|w| w[0].primary_retained >= w[1].primary_retained));
}

#[test]
fn restored_region_remerges_after_calm_frames() {
    let cfg = EngineConfig::default();
    let mut scene = trace(Scenario::StaticScene, 40, 13);
    let mut engine = Engine::new(cfg.clone(), scene.layout()).unwrap();
    for f in &scene.frames[..12] {
        engine.step(f).unwrap();
    }
    let region = engine.partition().unwrap().regions[0].clone();
    let moved = region.members[..region.len() / 2].to_vec();
    inject_depth_jump(&mut scene, 12, &moved, 0.2);
    let mut restore_at = None;
    let mut remerge_at = None;
    for f in &scene.frames[12..] {
        let out = engine.step(f).unwrap();
        for e in &out.events {
            match e.kind {
                EventKind::Restore { region: k } if k == region.id => restore_at = Some(e.frame),
                EventKind::Remerge { region: k } if k == region.id => remerge_at = Some(e.frame),
                _ => {}
            }
        }
    }
    // The window is all post-jump from frame 12 + W - 1; that is calm
    // frame 1 and the re-merge fires on calm frame L = W.
    let w = cfg.dynamics_window as u64;
    assert_eq!(restore_at, Some(12));
    assert_eq!(remerge_at, Some(12 + w - 1 + w - 1));
    let final_retained = engine.tokens().unwrap().retained();
    assert!(final_retained < 256);
}

#[test]
fn one_shot_reaches_steady_state_at_t0() {
    let cfg = EngineConfig {
        one_shot: true,
        ..EngineConfig::default()
    };
    let report = run_trace(&cfg, &trace(Scenario::StaticScene, 20, 14)).unwrap();
    let steady = report.rows.last().unwrap().primary_retained;
    assert_eq!(report.rows[4].primary_retained, 256);
    assert!(report.rows[5..].iter().all(|r| r.primary_retained == steady));
}

#[test]
fn errors_carry_the_frame_index() {
    let trace = trace(Scenario::StaticScene, 8, 15);
    let mut engine = Engine::new(EngineConfig::default(), trace.layout()).unwrap();
    for f in &trace.frames[..6] {
        engine.step(f).unwrap();
    }
    let mut bad = trace.frames[6].clone();
    bad.cameras[0].depth.data[3] = f32::NAN;
    let err = engine.step(&bad).unwrap_err();
    assert!(matches!(err, Error::AtFrame { frame: 6, .. }), "{err}");
    assert!(err.to_string().contains('6'));

    let mut bad = trace.frames[7].clone();
    bad.robot.action_chunk.pop();
    assert!(matches!(engine.step(&bad), Err(Error::AtFrame { frame: 7, .. })));
}

#[test]
fn missing_attention_during_warmup_is_rejected() {
    let mut trace = trace(Scenario::StaticScene, 3, 16);
    trace.frames[1].cameras[0].attention = None;
    let mut engine = Engine::new(EngineConfig::default(), trace.layout()).unwrap();
    engine.step(&trace.frames[0]).unwrap();
    let err = engine.step(&trace.frames[1]).unwrap_err();
    assert!(err.to_string().contains("primary"), "{err}");
}

#[test]
fn engines_run_on_separate_threads() {
    let handles: Vec<_> = (0..4u64)
        .map(|seed| {
            std::thread::spawn(move || {
                let trace = trace(Scenario::MultiPhase, 20, seed);
                run_trace(&EngineConfig::default(), &trace).unwrap().to_text()
            })
        })
        .collect();
    let texts: Vec<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for (seed, text) in texts.iter().enumerate() {
        let again = run_trace(&EngineConfig::default(), &trace(Scenario::MultiPhase, 20, seed as u64)).unwrap();
        assert_eq!(&again.to_text(), text);
    }
}

#[test]
fn engine_moves_between_threads_mid_episode() {
    let trace = trace(Scenario::StaticScene, 12, 17);
    let mut engine = Engine::new(EngineConfig::default(), trace.layout()).unwrap();
    for f in &trace.frames[..6] {
        engine.step(f).unwrap();
    }
    let rest = trace.frames[6..].to_vec();
    let engine = std::thread::spawn(move || {
        for f in &rest {
            engine.step(f).unwrap();
        }
        engine
    })
    .join()
    .unwrap();
    assert_eq!(engine.phase(), Phase::Steady);
}
