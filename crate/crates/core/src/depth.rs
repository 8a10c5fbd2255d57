//! Reduction of pixel depth maps to per-patch depths.

use crate::error::{Error, Result};
use crate::types::{DepthMap, GridDims};

/// Mean depth of every patch, in meters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDepths {
    pub values: Vec<f32>,
    pub grid: GridDims,
}

impl PatchDepths {
    pub fn new(values: Vec<f32>, grid: GridDims) -> Result<Self> {
        if values.len() != grid.patches() {
            return Err(Error::DimensionMismatch {
                field: "patch_depths".into(),
                expected: grid.patches(),
                found: values.len(),
            });
        }
        Ok(Self { values, grid })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.grid.cols + col]
    }
}

/// Average-pools a depth map onto the patch grid.
pub fn patchify_depth(depth: &DepthMap, grid: GridDims) -> Result<PatchDepths> {
    if grid.rows == 0
        || grid.cols == 0
        || !depth.height.is_multiple_of(grid.rows)
        || !depth.width.is_multiple_of(grid.cols)
    {
        return Err(Error::IndivisibleGrid {
            height: depth.height,
            width: depth.width,
            grid_h: grid.rows,
            grid_w: grid.cols,
        });
    }
    let block_h = depth.height / grid.rows;
    let block_w = depth.width / grid.cols;
    let area = (block_h * block_w) as f64;

    let mut values = Vec::with_capacity(grid.patches());
    for pr in 0..grid.rows {
        for pc in 0..grid.cols {
            let mut sum = 0.0f64;
            for y in pr * block_h..(pr + 1) * block_h {
                let row = &depth.data[y * depth.width + pc * block_w..y * depth.width + (pc + 1) * block_w];
                sum += row.iter().map(|&d| d as f64).sum::<f64>();
            }
            values.push((sum / area) as f32);
        }
    }
    Ok(PatchDepths { values, grid })
}
