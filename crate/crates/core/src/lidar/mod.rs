//! LiDAR novel-view synthesis on (yaw, pitch) range images.
//!
//! The pipeline is: rigid transform, polar projection, occlusion culling,
//! densification, and resampling with the sensor's ray prior.

mod cull;
mod densify;
mod prior;
pub mod triangulate;

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cloud::{LidarPoint, PointCloud};
use crate::error::{Error, Result};
use crate::geometry::{apply_rigid, RigidTransform};

pub use cull::{cull_occluded, CullParams};
pub use densify::densify;
pub use prior::{estimate_ray_prior, sample_with_prior, PriorOptions, RayPrior};

/// Range-image layout. Column `j` is centered on yaw `-pi + (j + 1) * 2pi / W`,
/// so yaw runs over (-pi, pi]; row `i` is centered on pitch
/// `pitch_min + i * (pitch_max - pitch_min) / (H - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub pitch_min: f64,
    pub pitch_max: f64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize, pitch_min: f64, pitch_max: f64) -> Self {
        Self { rows, cols, pitch_min, pitch_max }
    }

    /// 128 x 1024 over -25 .. +15 degrees of pitch.
    pub fn default_128() -> Self {
        Self::new(128, 1024, (-25f64).to_radians(), 15f64.to_radians())
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 1 {
            return Err(Error::InvalidArgument(format!("grid {}x{} too small", self.rows, self.cols)));
        }
        if !(self.pitch_max > self.pitch_min) || self.pitch_min < -PI / 2.0 || self.pitch_max > PI / 2.0 {
            return Err(Error::InvalidArgument("pitch range must be increasing within [-pi/2, pi/2]".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    #[inline]
    pub fn d_alpha(&self) -> f64 {
        TAU / self.cols as f64
    }

    #[inline]
    pub fn d_beta(&self) -> f64 {
        (self.pitch_max - self.pitch_min) / (self.rows - 1) as f64
    }

    #[inline]
    pub fn alpha(&self, col: usize) -> f64 {
        -PI + (col + 1) as f64 * self.d_alpha()
    }

    #[inline]
    pub fn beta(&self, row: usize) -> f64 {
        self.pitch_min + row as f64 * self.d_beta()
    }

    /// Nearest column for a yaw in [-pi, pi].
    #[inline]
    pub fn col_of(&self, alpha: f64) -> usize {
        let j = ((alpha + PI) / self.d_alpha()).round() as i64 - 1;
        j.rem_euclid(self.cols as i64) as usize
    }

    /// Nearest row, or `None` when the pitch falls outside the grid.
    #[inline]
    pub fn row_of(&self, beta: f64) -> Option<usize> {
        let i = ((beta - self.pitch_min) / self.d_beta()).round();
        (i >= 0.0 && i < self.rows as f64).then_some(i as usize)
    }
}

/// Range image with per-cell depth, intensity and validity, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    pub grid: GridSpec,
    pub depth: Vec<f64>,
    pub intensity: Vec<f64>,
    pub valid: Vec<bool>,
}

impl PolarImage {
    pub fn empty(grid: GridSpec) -> Self {
        let n = grid.cells();
        Self { grid, depth: vec![0.0; n], intensity: vec![0.0; n], valid: vec![false; n] }
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.grid.cols + col
    }

    pub fn set(&mut self, row: usize, col: usize, depth: f64, intensity: f64) {
        let k = self.index(row, col);
        self.depth[k] = depth;
        self.intensity[k] = intensity;
        self.valid[k] = true;
    }

    pub fn get(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let k = self.index(row, col);
        self.valid[k].then(|| (self.depth[k], self.intensity[k]))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Debug dump: `H, W` as u32, `pitch_min, pitch_max` as f32, then the
    /// depth plane and the intensity plane as f32 (invalid cells are 0).
    pub fn write_debug(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(16 + 8 * self.grid.cells());
        buf.extend_from_slice(&(self.grid.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.grid.cols as u32).to_le_bytes());
        buf.extend_from_slice(&(self.grid.pitch_min as f32).to_le_bytes());
        buf.extend_from_slice(&(self.grid.pitch_max as f32).to_le_bytes());
        for plane in [&self.depth, &self.intensity] {
            for (v, ok) in plane.iter().zip(&self.valid) {
                let x = if *ok { *v as f32 } else { 0.0 };
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        w.write_all(&buf)
    }
}

/// Bins a cloud into a range image; on collisions the nearest point wins
/// (first one on exact ties). Points outside the pitch range are dropped.
pub fn project_polar(pc: &[LidarPoint], grid: &GridSpec) -> Result<PolarImage> {
    grid.validate()?;
    let mut img = PolarImage::empty(*grid);
    for (idx, p) in pc.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite() && p.intensity.is_finite()) {
            return Err(Error::InvalidArgument(format!("point {idx} is not finite")));
        }
        let d = p.range();
        if d == 0.0 {
            return Err(Error::DegeneratePoint { index: idx });
        }
        let alpha = p.y.atan2(p.x);
        let beta = (p.z / d).clamp(-1.0, 1.0).asin();
        let Some(row) = grid.row_of(beta) else { continue };
        let col = grid.col_of(alpha);
        let k = img.index(row, col);
        if !img.valid[k] || d < img.depth[k] {
            img.depth[k] = d;
            img.intensity[k] = p.intensity;
            img.valid[k] = true;
        }
    }
    Ok(img)
}

/// Converts valid cells back to points along their cell-center rays,
/// in row-major cell order.
pub fn unproject_polar(polar: &PolarImage) -> PointCloud {
    let g = &polar.grid;
    let mut out = Vec::with_capacity(polar.valid_count());
    for r in 0..g.rows {
        let (sb, cb) = g.beta(r).sin_cos();
        for c in 0..g.cols {
            let k = polar.index(r, c);
            if !polar.valid[k] {
                continue;
            }
            let (sa, ca) = g.alpha(c).sin_cos();
            let d = polar.depth[k];
            out.push(LidarPoint::new(d * cb * ca, d * cb * sa, d * sb, polar.intensity[k]));
        }
    }
    out
}

/// Output of [`synthesize_lidar_view_debug`].
#[derive(Debug, Clone)]
pub struct LidarView {
    pub cloud: PointCloud,
    /// Densified range image before prior sampling.
    pub dense: PolarImage,
}

/// Full LiDAR novel-view pipeline. `t` maps source sensor coordinates into
/// the novel sensor frame; the grid comes from `prior`.
pub fn synthesize_lidar_view(
    source: &[LidarPoint],
    t: &RigidTransform,
    prior: &RayPrior,
    params: &CullParams,
    seed: u64,
) -> Result<PointCloud> {
    synthesize_lidar_view_debug(source, t, prior, params, seed).map(|v| v.cloud)
}

pub fn synthesize_lidar_view_debug(
    source: &[LidarPoint],
    t: &RigidTransform,
    prior: &RayPrior,
    params: &CullParams,
    seed: u64,
) -> Result<LidarView> {
    let moved = apply_rigid(t, &source.to_vec());
    let polar = project_polar(&moved, &prior.grid)?;
    let culled = cull_occluded(&polar, params)?;
    let dense = densify(&culled)?;
    let sampled = sample_with_prior(&dense, prior, seed)?;
    Ok(LidarView { cloud: unproject_polar(&sampled), dense })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn grid() -> GridSpec {
        GridSpec::new(64, 512, -PI / 3.0, PI / 3.0)
    }

    #[test]
    fn axis_points_project_exactly() {
        let g = GridSpec::new(3, 8, -PI / 4.0, PI / 4.0);
        assert_eq!(g.alpha(g.col_of(0.0)), 0.0);
        assert!((g.alpha(g.col_of(PI / 2.0)) - PI / 2.0).abs() < 1e-15);
        let img = project_polar(&[LidarPoint::new(1.0, 0.0, 0.0, 3.0)], &g).unwrap();
        assert_eq!(img.get(1, g.col_of(0.0)), Some((1.0, 3.0)));
        let img = project_polar(&[LidarPoint::new(0.0, 1.0, 0.0, 0.0)], &g).unwrap();
        assert_eq!(img.get(1, g.col_of(PI / 2.0)), Some((1.0, 0.0)));
        let img = project_polar(&[LidarPoint::new(1.0, 1.0, 2f64.sqrt(), 0.0)], &g).unwrap();
        let (d, _) = img.get(2, g.col_of(FRAC_PI_4)).unwrap();
        assert!((d - 2.0).abs() < 1e-15);
        assert!((g.beta(2) - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn seam_columns_wrap() {
        let g = GridSpec::new(2, 8, -0.1, 0.1);
        assert_eq!(g.col_of(PI), 7);
        assert_eq!(g.col_of(-PI), 7);
        assert_eq!(g.col_of(-PI + 0.3 * g.d_alpha()), 7);
        assert_eq!(g.col_of(-PI + 0.7 * g.d_alpha()), 0);
    }

    #[test]
    fn origin_point_is_an_error() {
        let pts = [LidarPoint::new(1.0, 0.0, 0.0, 0.0), LidarPoint::default()];
        assert!(matches!(project_polar(&pts, &grid()), Err(Error::DegeneratePoint { index: 1 })));
    }

    #[test]
    fn nearest_point_wins_collision() {
        let g = grid();
        let pts = [LidarPoint::new(5.0, 0.0, 0.0, 1.0), LidarPoint::new(2.0, 0.0, 0.0, 2.0), LidarPoint::new(3.0, 0.0, 0.0, 3.0)];
        let img = project_polar(&pts, &g).unwrap();
        assert_eq!(img.valid_count(), 1);
        assert_eq!(img.get(g.row_of(0.0).unwrap(), g.col_of(0.0)), Some((2.0, 2.0)));
    }

    #[test]
    fn unproject_examples() {
        let g = GridSpec::new(3, 8, -PI / 4.0, PI / 4.0);
        let mut img = PolarImage::empty(g);
        img.set(1, g.col_of(0.0), 1.0, 0.0);
        img.set(1, g.col_of(PI / 2.0), 3.0, 7.0);
        let pc = unproject_polar(&img);
        assert_eq!(pc[0], LidarPoint::new(1.0, 0.0, 0.0, 0.0));
        assert!(pc[1].x.abs() < 1e-15 && pc[1].y == 3.0 && pc[1].z == 0.0 && pc[1].intensity == 7.0);
    }

    #[test]
    fn debug_dump_layout() {
        let g = GridSpec::new(2, 4, -0.5, 0.25);
        let mut img = PolarImage::empty(g);
        img.set(1, 2, 4.5, 9.0);
        let mut buf = Vec::new();
        img.write_debug(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 2 * 8 * 4);
        assert_eq!(u32::from_le_bytes(buf[0..4].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 4);
        assert_eq!(f32::from_le_bytes(buf[8..12].try_into().unwrap()), -0.5);
        let at = |k: usize| f32::from_le_bytes(buf[16 + 4 * k..20 + 4 * k].try_into().unwrap());
        assert_eq!(at(6), 4.5);
        assert_eq!(at(8 + 6), 9.0);
        assert_eq!(at(5), 0.0);
    }

    proptest! {
        #[test]
        fn roundtrip_within_half_cell(pts in prop::collection::vec((-PI..PI, -1.0f64..1.0, 0.5f64..80.0, 0.0f64..255.0), 1..200)) {
            let g = grid();
            let cloud: Vec<LidarPoint> = pts.iter().map(|&(a, b, d, i)| {
                LidarPoint::new(d * b.cos() * a.cos(), d * b.cos() * a.sin(), d * b.sin(), i)
            }).collect();
            let img = project_polar(&cloud, &g).unwrap();
            // Only cells hit by exactly one point are checked.
            let mut hits = vec![0usize; g.cells()];
            let mut owner = vec![0usize; g.cells()];
            for (n, p) in cloud.iter().enumerate() {
                let d = p.range();
                let k = g.row_of((p.z / d).asin()).unwrap() * g.cols + g.col_of(p.y.atan2(p.x));
                hits[k] += 1;
                owner[k] = n;
            }
            let back = unproject_polar(&img);
            let mut it = back.iter();
            for k in 0..g.cells() {
                if !img.valid[k] { continue; }
                let q = it.next().unwrap();
                if hits[k] != 1 { continue; }
                let p = &cloud[owner[k]];
                let bound = p.range() * g.d_alpha().max(g.d_beta());
                prop_assert!(p.distance(q) <= bound, "error {} > {}", p.distance(q), bound);
                prop_assert_eq!(p.intensity, q.intensity);
            }
        }
    }
}
