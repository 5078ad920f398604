use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridSpec, PolarImage};
use crate::cloud::{decode_cloud, LidarPoint};
use crate::error::{Error, Result};
use crate::trace::{SensorKind, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorOptions {
    /// A cell is cast when it is occupied in at least this fraction of sweeps.
    pub occupancy: f64,
    /// Keep the empirical per-cell drop rate; when false every cast cell
    /// always returns.
    pub record_drop: bool,
}

impl Default for PriorOptions {
    fn default() -> Self {
        Self { occupancy: 0.5, record_drop: true }
    }
}

/// Which rays the sensor casts, with per-cell drop probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RayPrior {
    pub grid: GridSpec,
    pub mask: Vec<bool>,
    pub drop: Vec<f64>,
    /// Mean observed pitch of each row (grid pitch for unobserved rows).
    pub row_pitch: Vec<f64>,
}

impl RayPrior {
    /// Every cell cast, nothing dropped.
    pub fn full(grid: GridSpec) -> Self {
        Self::from_mask(grid, vec![true; grid.cells()])
    }

    pub fn from_mask(grid: GridSpec, mask: Vec<bool>) -> Self {
        let n = grid.cells();
        Self {
            grid,
            mask,
            drop: vec![0.0; n],
            row_pitch: (0..grid.rows).map(|r| grid.beta(r)).collect(),
        }
    }

    /// Builds the prior from recorded sweeps in sensor coordinates.
    pub fn from_sweeps<'a>(
        grid: GridSpec,
        sweeps: impl IntoIterator<Item = &'a [LidarPoint]>,
        opts: &PriorOptions,
    ) -> Result<Self> {
        grid.validate()?;
        if !(opts.occupancy > 0.0 && opts.occupancy <= 1.0) {
            return Err(Error::InvalidArgument("occupancy threshold must be in (0, 1]".into()));
        }
        let n = grid.cells();
        let mut hits = vec![0u32; n];
        let mut pitch_sum = vec![0.0; grid.rows];
        let mut pitch_n = vec![0usize; grid.rows];
        let mut seen = vec![false; n];
        let mut sweeps_n = 0u32;
        for sweep in sweeps {
            sweeps_n += 1;
            seen.iter_mut().for_each(|s| *s = false);
            for p in sweep {
                let d = p.range();
                if !(d > 0.0) || !d.is_finite() {
                    continue;
                }
                let beta = (p.z / d).clamp(-1.0, 1.0).asin();
                let Some(row) = grid.row_of(beta) else { continue };
                let k = row * grid.cols + grid.col_of(p.y.atan2(p.x));
                seen[k] = true;
                pitch_sum[row] += beta;
                pitch_n[row] += 1;
            }
            for k in 0..n {
                hits[k] += seen[k] as u32;
            }
        }
        if sweeps_n == 0 {
            return Err(Error::EmptyStream("lidar".into()));
        }
        let total = sweeps_n as f64;
        let mask: Vec<bool> = hits.iter().map(|&h| h as f64 / total >= opts.occupancy).collect();
        if !mask.iter().any(|m| *m) {
            return Err(Error::validation("no ray reaches the occupancy threshold", None));
        }
        let drop = hits
            .iter()
            .zip(&mask)
            .map(|(&h, &m)| if m && opts.record_drop { 1.0 - h as f64 / total } else { 0.0 })
            .collect();
        let row_pitch = (0..grid.rows)
            .map(|r| if pitch_n[r] > 0 { pitch_sum[r] / pitch_n[r] as f64 } else { grid.beta(r) })
            .collect();
        Ok(Self { grid, mask, drop, row_pitch })
    }

    pub fn set_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn without_drop(mut self) -> Self {
        self.drop.iter_mut().for_each(|d| *d = 0.0);
        self
    }
}

/// Ray prior of the trace's first LiDAR, from all of its sweeps.
pub fn estimate_ray_prior(trace: &Trace, opts: &PriorOptions) -> Result<RayPrior> {
    let spec = trace.sensor(SensorKind::Lidar)?;
    let model = spec.lidar().ok_or(Error::MissingSensor("lidar"))?;
    let stream = trace.stream_by_name(&spec.name).ok_or(Error::MissingSensor("lidar"))?;
    if stream.is_empty() {
        return Err(Error::EmptyStream(stream.name.clone()));
    }
    let clouds = (0..stream.len())
        .map(|i| {
            decode_cloud(stream.payload(i))
                .ok_or_else(|| Error::validation("lidar payload is not whole point records", Some(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    RayPrior::from_sweeps(model.grid(), clouds.iter().map(|c| c.as_slice()), opts)
}

/// Keeps dense cells selected by the prior, dropping each one independently
/// with its drop probability. One uniform draw is consumed per set mask bit
/// in row-major order, so the drop pattern depends only on prior and seed.
pub fn sample_with_prior(dense: &PolarImage, prior: &RayPrior, seed: u64) -> Result<PolarImage> {
    if dense.grid.rows != prior.grid.rows || dense.grid.cols != prior.grid.cols || prior.mask.len() != dense.valid.len() {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs prior {}x{}",
            dense.grid.rows, dense.grid.cols, prior.grid.rows, prior.grid.cols
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = PolarImage::empty(dense.grid);
    for k in 0..dense.valid.len() {
        if !prior.mask[k] {
            continue;
        }
        let u: f64 = rng.random();
        if dense.valid[k] && u >= prior.drop[k] {
            out.valid[k] = true;
            out.depth[k] = dense.depth[k];
            out.intensity[k] = dense.intensity[k];
        }
    }
    Ok(out)
}
