use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PolarImage;
use crate::error::{Error, Result};

/// Occlusion test parameters: a cell is dropped when the mean depth of the
/// valid cells in its `(2r+1)^2` neighborhood is more than `epsilon` meters
/// in front of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CullParams {
    pub radius: usize,
    pub epsilon: f64,
}

impl Default for CullParams {
    fn default() -> Self {
        Self { radius: 2, epsilon: 0.5 }
    }
}

impl CullParams {
    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 || !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("cull radius must be >= 1 and epsilon >= 0".into()));
        }
        Ok(())
    }
}

/// Removes cells hidden behind nearer surfaces. Every decision reads only
/// the input image, so rows are processed in parallel with identical results.
/// Columns wrap around the yaw seam; rows are clipped.
pub fn cull_occluded(polar: &PolarImage, params: &CullParams) -> Result<PolarImage> {
    params.validate()?;
    let g = polar.grid;
    let (h, w) = (g.rows, g.cols);
    let r = params.radius as i64;
    let mut valid = polar.valid.clone();
    valid.par_chunks_mut(w).enumerate().for_each(|(row, out)| {
        let r0 = (row as i64 - r).max(0) as usize;
        let r1 = (row as i64 + r).min(h as i64 - 1) as usize;
        let mut window = Vec::with_capacity(2 * r as usize + 1);
        for col in 0..w {
            let k = row * w + col;
            if !polar.valid[k] {
                continue;
            }
            window.clear();
            window.extend((-r..=r).map(|dc| (col as i64 + dc).rem_euclid(w as i64) as usize));
            let d = polar.depth[k];
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut min = f64::INFINITY;
            for nr in r0..=r1 {
                for &nc in &window {
                    let nk = nr * w + nc;
                    // Narrow grids can wrap onto the center column itself.
                    if nk == k || !polar.valid[nk] {
                        continue;
                    }
                    let nd = polar.depth[nk];
                    sum += nd;
                    count += 1;
                    min = min.min(nd);
                }
            }
            // Rounding in the mean must never cull a locally nearest cell.
            if count > 0 && d > min && sum / (count as f64) < d - params.epsilon {
                out[col] = false;
            }
        }
    });
    let mut out = polar.clone();
    for k in 0..out.valid.len() {
        if !valid[k] {
            out.valid[k] = false;
            out.depth[k] = 0.0;
            out.intensity[k] = 0.0;
        }
    }
    Ok(out)
}
