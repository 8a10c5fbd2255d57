//! Domain types shared across the engine: frames, cameras, robot state.
//!
//! Patches are indexed row-major everywhere: patch `i` sits at
//! `(i / grid_w, i % grid_w)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraRole {
    /// Third-person view.
    Primary,
    /// Wrist-mounted view.
    Auxiliary,
}

impl CameraRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CameraRole::Primary => "primary",
            CameraRole::Auxiliary => "auxiliary",
        }
    }
}

impl fmt::Display for CameraRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: usize,
    pub cols: usize,
}

impl GridDims {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn patches(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    /// Checkerboard parity of a patch: `(row + col) % 2 == 0`.
    pub const fn is_even(&self, index: usize) -> bool {
        let (r, c) = self.coords(index);
        (r + c) % 2 == 0
    }
}

/// Row-major `height x width` depth image in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                field: "depth_map".into(),
                expected: height * width,
                found: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }
}

/// Row-major `rows x dim` patch-token embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl Embeddings {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                field: "embeddings".into(),
                expected: rows * dim,
                found: data.len(),
            });
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    field: format!("embeddings[{i}]"),
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            dim,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }
}

/// One camera's observation for a single timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub role: CameraRole,
    pub grid: GridDims,
    pub depth: DepthMap,
    pub embeddings: Embeddings,
    /// Head-averaged attention over the patch tokens, one score per patch.
    pub attention: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    /// Normalized gripper opening, 1 = fully open.
    pub gripper_aperture: f32,
    pub ee_position: [f32; 3],
    /// Predicted per-step deltas `(dx, dy, dz, d_aperture)`.
    pub action_chunk: Vec<[f32; 4]>,
}

impl RobotState {
    pub fn idle(chunk_len: usize) -> Self {
        Self {
            gripper_aperture: 1.0,
            ee_position: [0.0; 3],
            action_chunk: vec![[0.0; 4]; chunk_len],
        }
    }

    /// Floats in the flat encoding: aperture, position, then the chunk.
    pub fn flat_len(chunk_len: usize) -> usize {
        4 + 4 * chunk_len
    }

    pub fn to_flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(Self::flat_len(self.action_chunk.len()));
        out.push(self.gripper_aperture);
        out.extend_from_slice(&self.ee_position);
        for step in &self.action_chunk {
            out.extend_from_slice(step);
        }
        out
    }

    pub fn from_flat(flat: &[f32], chunk_len: usize) -> Result<Self> {
        let expected = Self::flat_len(chunk_len);
        if flat.len() != expected {
            return Err(Error::DimensionMismatch {
                field: "robot".into(),
                expected,
                found: flat.len(),
            });
        }
        let action_chunk = flat[4..].chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        Ok(Self {
            gripper_aperture: flat[0],
            ee_position: [flat[1], flat[2], flat[3]],
            action_chunk,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: u64,
    pub cameras: Vec<CameraFrame>,
    pub robot: RobotState,
}

impl FrameRecord {
    pub fn camera(&self, role: CameraRole) -> Option<&CameraFrame> {
        self.cameras.iter().find(|c| c.role == role)
    }

    pub fn camera_mut(&mut self, role: CameraRole) -> Option<&mut CameraFrame> {
        self.cameras.iter_mut().find(|c| c.role == role)
    }
}

/// Declared shape of one camera stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub role: CameraRole,
    pub height: usize,
    pub width: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub dim: usize,
    /// Whether frames carry an attention vector for this camera.
    pub attention: bool,
}

impl CameraSpec {
    pub fn grid(&self) -> GridDims {
        GridDims::new(self.grid_rows, self.grid_cols)
    }

    pub fn patches(&self) -> usize {
        self.grid_rows * self.grid_cols
    }
}

/// Camera streams plus action-chunk length, as declared by a trace header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamLayout {
    pub cameras: Vec<CameraSpec>,
    pub chunk_len: usize,
}

impl StreamLayout {
    pub fn camera(&self, role: CameraRole) -> Option<&CameraSpec> {
        self.cameras.iter().find(|c| c.role == role)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chunk_len == 0 {
            return Err(Error::Malformed {
                what: "stream layout".into(),
                reason: "action chunk length must be at least 1".into(),
            });
        }
        if self.camera(CameraRole::Primary).is_none() {
            return Err(Error::MissingCamera(CameraRole::Primary));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|c| c.role == cam.role) {
                return Err(Error::Malformed {
                    what: "stream layout".into(),
                    reason: format!("duplicate camera role `{}`", cam.role),
                });
            }
            if cam.height == 0 || cam.width == 0 || cam.grid_rows == 0 || cam.grid_cols == 0 || cam.dim == 0 {
                return Err(Error::Malformed {
                    what: "stream layout".into(),
                    reason: format!("`{}` camera has a zero dimension", cam.role),
                });
            }
            if cam.height % cam.grid_rows != 0 || cam.width % cam.grid_cols != 0 {
                return Err(Error::IndivisibleGrid {
                    height: cam.height,
                    width: cam.width,
                    grid_h: cam.grid_rows,
                    grid_w: cam.grid_cols,
                });
            }
        }
        Ok(())
    }
}

fn check_dim(field: impl FnOnce() -> String, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            field: field(),
            expected,
            found,
        })
    }
}

fn check_finite(field: impl Fn() -> String, values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteValue { field: field(), index }),
        None => Ok(()),
    }
}

/// Checks a frame against the declared layout. The frame is accepted
/// unchanged iff every dimension and value invariant holds.
pub fn validate_frame<'a>(frame: &'a FrameRecord, layout: &StreamLayout) -> Result<&'a FrameRecord> {
    for spec in &layout.cameras {
        let cam = frame.camera(spec.role).ok_or(Error::MissingCamera(spec.role))?;
        let role = spec.role;
        check_dim(|| format!("{role}.depth.height"), spec.height, cam.depth.height)?;
        check_dim(|| format!("{role}.depth.width"), spec.width, cam.depth.width)?;
        check_dim(|| format!("{role}.grid.rows"), spec.grid_rows, cam.grid.rows)?;
        check_dim(|| format!("{role}.grid.cols"), spec.grid_cols, cam.grid.cols)?;
        check_dim(
            || format!("{role}.embeddings.rows"),
            spec.patches(),
            cam.embeddings.rows(),
        )?;
        check_dim(|| format!("{role}.embeddings.dim"), spec.dim, cam.embeddings.dim())?;

        check_finite(|| format!("{role}.depth"), &cam.depth.data)?;
        if let Some(index) = cam.depth.data.iter().position(|&d| d <= 0.0) {
            return Err(Error::InvalidValue {
                field: format!("{role}.depth"),
                index,
                reason: "depth must be positive",
            });
        }
        check_finite(|| format!("{role}.embeddings"), cam.embeddings.as_slice())?;
        if let Some(att) = &cam.attention {
            check_dim(|| format!("{role}.attention"), spec.patches(), att.len())?;
            check_finite(|| format!("{role}.attention"), att)?;
        }
    }
    if let Some(extra) = frame.cameras.iter().find(|c| layout.camera(c.role).is_none()) {
        return Err(Error::Malformed {
            what: "frame".into(),
            reason: format!("undeclared `{}` camera", extra.role),
        });
    }

    let robot = &frame.robot;
    check_dim(
        || "robot.action_chunk".into(),
        layout.chunk_len,
        robot.action_chunk.len(),
    )?;
    check_finite(|| "robot".into(), &robot.to_flat())?;
    if !(0.0..=1.0).contains(&robot.gripper_aperture) {
        return Err(Error::InvalidValue {
            field: "robot.gripper_aperture".into(),
            index: 0,
            reason: "aperture must lie in [0, 1]",
        });
    }
    Ok(frame)
}
