//! Deterministic synthetic manipulation scenes.
//!
//! The primary camera looks obliquely at a table: depth grows linearly
//! toward the top of the image, with a box-shaped object standing on it.
//! Embeddings are blends of per-surface prototypes plus fixed per-patch
//! texture and small per-frame noise, so patches at similar depth are
//! similar. Attention peaks on the object. The wrist camera sees a nearly
//! flat surface. Robot motion follows a piecewise-constant schedule and
//! the action chunk at frame `t` holds the true deltas of the next steps.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::trace::{GeneratorMeta, Trace, TraceHeader};
use crate::types::{
    CameraFrame, CameraRole, CameraSpec, DepthMap, Embeddings, FrameRecord, GridDims, RobotState, StreamLayout,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    StaticScene,
    ApproachAndGrasp,
    PerturbedObject,
    MultiPhase,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::StaticScene,
        Scenario::ApproachAndGrasp,
        Scenario::PerturbedObject,
        Scenario::MultiPhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::StaticScene => "static-scene",
            Scenario::ApproachAndGrasp => "approach-and-grasp",
            Scenario::PerturbedObject => "perturbed-object",
            Scenario::MultiPhase => "multi-phase",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown scenario `{s}`")))
    }
}

/// Constant end-effector speed (meters per step along x) and aperture
/// rate (per step) for a number of frames. The last segment repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSegment {
    pub frames: usize,
    pub speed: f32,
    pub aperture_rate: f32,
}

const fn seg(frames: usize, speed: f32, aperture_rate: f32) -> MotionSegment {
    MotionSegment {
        frames,
        speed,
        aperture_rate,
    }
}

/// Box standing on the table, in patch units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub row: usize,
    pub col: usize,
    pub size: usize,
    /// Height above the table surface, meters.
    pub height: f32,
}

/// Depth offset applied to the object from `frame` on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement {
    pub frame: usize,
    pub depth_offset: f32,
}

/// Something passing through the background during `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundMotion {
    pub start: usize,
    pub end: usize,
    /// Patch rectangle `[row0, row1) x [col0, col1)`.
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    /// How much closer to the camera, meters.
    pub amplitude: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub frames: usize,
    pub grid: GridDims,
    /// Pixels per patch side.
    pub patch_px: usize,
    pub dim: usize,
    pub chunk_len: usize,
    pub auxiliary: bool,
    /// Per-pixel depth noise, meters.
    pub noise_sigma: f32,
    pub embedding_noise: f32,
    pub object: ObjectSpec,
    pub displacement: Option<Displacement>,
    pub background: Option<BackgroundMotion>,
    pub motion: Vec<MotionSegment>,
    pub initial_aperture: f32,
    /// The object follows the gripper while it is closed.
    pub object_follows_gripper: bool,
}

/// Grasp-and-place schedule: transit, slow approach, close, transport,
/// slow place, open, retreat.
const PICK_AND_PLACE: [MotionSegment; 7] = [
    seg(12, 0.03, 0.0),
    seg(6, 0.004, 0.0),
    seg(4, 0.0, -0.25),
    seg(14, 0.03, 0.0),
    seg(6, 0.004, 0.0),
    seg(4, 0.0, 0.25),
    seg(1, 0.03, 0.0),
];

impl ScenarioSpec {
    pub fn preset(scenario: Scenario, frames: usize) -> Self {
        let base = Self {
            scenario,
            frames,
            grid: GridDims::new(16, 16),
            patch_px: 4,
            dim: 32,
            chunk_len: 8,
            auxiliary: true,
            noise_sigma: 0.002,
            embedding_noise: 0.01,
            object: ObjectSpec {
                row: 10,
                col: 4,
                size: 3,
                height: 0.12,
            },
            displacement: None,
            background: None,
            motion: vec![seg(1, 0.03, 0.0)],
            initial_aperture: 1.0,
            object_follows_gripper: false,
        };
        match scenario {
            Scenario::StaticScene => base,
            Scenario::ApproachAndGrasp => Self {
                motion: PICK_AND_PLACE.to_vec(),
                object_follows_gripper: true,
                ..base
            },
            Scenario::PerturbedObject => Self {
                displacement: Some(Displacement {
                    frame: 20.min(frames.saturating_sub(1)),
                    depth_offset: 0.1,
                }),
                motion: vec![seg(1, 0.004, 0.0)],
                ..base
            },
            Scenario::MultiPhase => Self {
                motion: PICK_AND_PLACE.to_vec(),
                object_follows_gripper: true,
                background: Some(BackgroundMotion {
                    start: 8.min(frames),
                    end: 13.min(frames),
                    rows: (0, 4),
                    cols: (9, 16),
                    amplitude: 0.2,
                }),
                ..base
            },
        }
    }

    pub fn layout(&self) -> StreamLayout {
        let cam = |role, attention| CameraSpec {
            role,
            height: self.grid.rows * self.patch_px,
            width: self.grid.cols * self.patch_px,
            grid_rows: self.grid.rows,
            grid_cols: self.grid.cols,
            dim: self.dim,
            attention,
        };
        let mut cameras = vec![cam(CameraRole::Primary, true)];
        if self.auxiliary {
            cameras.push(cam(CameraRole::Auxiliary, false));
        }
        StreamLayout {
            cameras,
            chunk_len: self.chunk_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.frames == 0 {
            return bad("frame count must be positive");
        }
        if self.grid.patches() == 0 || self.patch_px == 0 || self.dim == 0 || self.chunk_len == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.noise_sigma >= 0.0 && self.embedding_noise >= 0.0) {
            return bad("noise must be non-negative");
        }
        let o = self.object;
        if o.size == 0 || o.row + o.size > self.grid.rows || o.col + o.size > self.grid.cols {
            return bad("object does not fit in the patch grid");
        }
        if let Some(d) = self.displacement {
            if d.frame >= self.frames {
                return bad("displacement lies beyond the trace");
            }
        }
        if let Some(b) = self.background {
            if b.start > b.end || b.end > self.frames {
                return bad("background motion lies beyond the trace");
            }
            if b.rows.0 >= b.rows.1 || b.rows.1 > self.grid.rows || b.cols.0 >= b.cols.1 || b.cols.1 > self.grid.cols {
                return bad("background rectangle does not fit in the patch grid");
            }
        }
        if self.motion.is_empty() {
            return bad("motion schedule is empty");
        }
        if !(0.0..=1.0).contains(&self.initial_aperture) {
            return bad("initial aperture must lie in [0, 1]");
        }
        Ok(())
    }

    /// Per-step speed and aperture, `frames + chunk_len + 1` entries.
    fn schedule(&self) -> (Vec<f32>, Vec<f32>) {
        let n = self.frames + self.chunk_len + 1;
        let mut speed = Vec::with_capacity(n);
        let mut rate = Vec::with_capacity(n);
        let last = *self.motion.last().expect("validated non-empty");
        let steps = self
            .motion
            .iter()
            .flat_map(|s| std::iter::repeat_n(*s, s.frames))
            .chain(std::iter::repeat(last));
        for s in steps.take(n) {
            speed.push(s.speed);
            rate.push(s.aperture_rate);
        }
        let mut aperture = Vec::with_capacity(n);
        let mut a = self.initial_aperture;
        for r in &rate {
            aperture.push(a);
            a = (a + r).clamp(0.0, 1.0);
        }
        (speed, aperture)
    }
}

/// Pixels the object shifts per meter of end-effector travel while carried.
const CARRY_PX_PER_METER: f32 = 32.0;
/// Lift toward the camera while carried, meters.
const CARRY_LIFT: f32 = 0.05;
const CARRY_CLOSED_BELOW: f32 = 0.5;

struct Prototypes {
    near: Vec<f32>,
    far: Vec<f32>,
    object: Vec<f32>,
    wrist_a: Vec<f32>,
    wrist_b: Vec<f32>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, sigma: f32) -> Vec<f32> {
    let normal = Normal::new(0.0f32, sigma).expect("finite sigma");
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Generates the trace for `spec`. Identical `(spec, seed)` pairs give
/// byte-identical traces.
pub fn generate_scene(spec: &ScenarioSpec, seed: u64) -> Result<Trace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (grid, ppx, dim) = (spec.grid, spec.patch_px, spec.dim);
    let (h, w) = (grid.rows * ppx, grid.cols * ppx);
    let p = grid.patches();

    let protos = Prototypes {
        near: gaussian_vec(&mut rng, dim, 1.0),
        far: gaussian_vec(&mut rng, dim, 1.0),
        object: gaussian_vec(&mut rng, dim, 1.0),
        wrist_a: gaussian_vec(&mut rng, dim, 1.0),
        wrist_b: gaussian_vec(&mut rng, dim, 1.0),
    };
    let texture: Vec<Vec<f32>> = (0..p).map(|_| gaussian_vec(&mut rng, dim, 0.15)).collect();
    let wrist_texture: Vec<Vec<f32>> = (0..p).map(|_| gaussian_vec(&mut rng, dim, 0.15)).collect();
    let depth_noise = Normal::new(0.0f32, spec.noise_sigma.max(f32::MIN_POSITIVE)).expect("finite sigma");
    let emb_noise = Normal::new(0.0f32, spec.embedding_noise.max(f32::MIN_POSITIVE)).expect("finite sigma");

    let (speed, aperture) = spec.schedule();
    let table =
        |y: usize, x: usize| -> f32 { 0.75 + 0.045 * (h - 1 - y) as f32 / ppx as f32 + 0.0015 * x as f32 / ppx as f32 };
    let far_depth = table(0, 0);

    let mut frames = Vec::with_capacity(spec.frames);
    let mut ee_x = 0.0f32;
    let mut grasp_x: Option<f32> = None;
    let mut carried_shift = 0.0f32;
    let mut carried = false;

    for t in 0..spec.frames {
        // Object pose.
        let closed = aperture[t] < CARRY_CLOSED_BELOW;
        if spec.object_follows_gripper {
            match (closed, grasp_x) {
                (true, None) => grasp_x = Some(ee_x - carried_shift / CARRY_PX_PER_METER),
                (false, Some(_)) => grasp_x = None,
                _ => {}
            }
            carried = grasp_x.is_some();
            if let Some(gx) = grasp_x {
                carried_shift = (ee_x - gx) * CARRY_PX_PER_METER;
            }
        }
        let shift_px = carried_shift.round() as isize;
        let lift = if carried { CARRY_LIFT } else { 0.0 };
        let displaced = spec
            .displacement
            .filter(|d| t >= d.frame)
            .map_or(0.0, |d| d.depth_offset);
        let o = spec.object;
        let (oy0, oy1) = (o.row * ppx, (o.row + o.size) * ppx);
        let ox0 = (o.col * ppx) as isize + shift_px;
        let ox1 = ox0 + (o.size * ppx) as isize;
        let in_object = |y: usize, x: usize| (oy0..oy1).contains(&y) && (ox0..ox1).contains(&(x as isize));
        let background = spec.background.filter(|b| (b.start..b.end).contains(&t));

        // Primary depth.
        let mut depth = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut d = table(y, x);
                if in_object(y, x) {
                    d += displaced - o.height - lift;
                }
                if let Some(b) = background {
                    let (pr, pc) = (y / ppx, x / ppx);
                    if (b.rows.0..b.rows.1).contains(&pr) && (b.cols.0..b.cols.1).contains(&pc) {
                        d -= b.amplitude;
                    }
                }
                depth.push((d + depth_noise.sample(&mut rng)).max(0.05));
            }
        }

        // Object coverage per patch drives attention and the embedding prototype.
        let coverage: Vec<f32> = (0..p)
            .map(|i| {
                let (pr, pc) = grid.coords(i);
                let mut n = 0;
                for y in pr * ppx..(pr + 1) * ppx {
                    for x in pc * ppx..(pc + 1) * ppx {
                        n += in_object(y, x) as usize;
                    }
                }
                n as f32 / (ppx * ppx) as f32
            })
            .collect();

        let mut emb = Vec::with_capacity(p * dim);
        for (i, &cov) in coverage.iter().enumerate() {
            let (pr, pc) = grid.coords(i);
            let surface = table(pr * ppx + ppx / 2, pc * ppx + ppx / 2);
            let blend = ((surface - 0.75) / (far_depth - 0.75)).clamp(0.0, 1.0);
            for (j, tex) in texture[i].iter().enumerate() {
                let table_v = (1.0 - blend) * protos.near[j] + blend * protos.far[j];
                let v = (1.0 - cov) * table_v + cov * protos.object[j];
                emb.push(v + tex + emb_noise.sample(&mut rng));
            }
        }
        let attention: Vec<f32> = coverage
            .iter()
            .map(|&cov| {
                let base = 1.0 + rng.random::<f32>() * 0.2;
                if cov >= 0.5 {
                    base + 5.0
                } else {
                    base
                }
            })
            .collect();

        let mut cameras = vec![CameraFrame {
            role: CameraRole::Primary,
            grid,
            depth: DepthMap::new(h, w, depth)?,
            embeddings: Embeddings::new(p, dim, emb)?,
            attention: Some(attention),
        }];

        if spec.auxiliary {
            let mut depth = Vec::with_capacity(h * w);
            for _y in 0..h {
                for x in 0..w {
                    let d = 0.3 + 0.003 * x as f32 / ppx as f32;
                    depth.push((d + depth_noise.sample(&mut rng)).max(0.05));
                }
            }
            let mut emb = Vec::with_capacity(p * dim);
            for (i, tex) in wrist_texture.iter().enumerate() {
                let blend = grid.coords(i).1 as f32 / (grid.cols.max(2) - 1) as f32;
                for (j, t) in tex.iter().enumerate() {
                    let v = (1.0 - blend) * protos.wrist_a[j] + blend * protos.wrist_b[j];
                    emb.push(v + t + emb_noise.sample(&mut rng));
                }
            }
            cameras.push(CameraFrame {
                role: CameraRole::Auxiliary,
                grid,
                depth: DepthMap::new(h, w, depth)?,
                embeddings: Embeddings::new(p, dim, emb)?,
                attention: None,
            });
        }

        let action_chunk = (t..t + spec.chunk_len)
            .map(|s| [speed[s], 0.0, 0.0, aperture[s + 1] - aperture[s]])
            .collect();
        frames.push(FrameRecord {
            frame_index: t as u64,
            cameras,
            robot: RobotState {
                gripper_aperture: aperture[t],
                ee_position: [ee_x, 0.0, 0.3],
                action_chunk,
            },
        });
        ee_x += speed[t];
    }

    let header = TraceHeader::new(
        spec.layout(),
        spec.frames,
        Some(GeneratorMeta {
            scenario: spec.scenario.name().to_string(),
            seed,
        }),
    );
    Ok(Trace { header, frames })
}
