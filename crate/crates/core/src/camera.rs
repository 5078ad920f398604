//! Pinhole cameras, proxy scene depth and pixel remapping shared by the RGB
//! and event renderers.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Sub-pixel slack when deciding whether a sample point is inside the image.
const EDGE_SLACK: f64 = 1e-6;

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::validation("focal lengths must be positive", None));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("camera has zero size", None));
        }
        let inside = |c: f64, n: u32| c.is_finite() && c >= 0.0 && c <= (n - 1) as f64;
        if !inside(self.cx, self.width) || !inside(self.cy, self.height) {
            return Err(Error::validation("principal point outside the image", None));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Ray through pixel `(u, v)` with unit z component.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        self.ray(u, v) * depth
    }

    /// Projects a camera-frame point. `None` when it is not in front of the camera.
    #[inline]
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Whether continuous coordinates fall within the sampleable image area.
    #[inline]
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -EDGE_SLACK
            && v >= -EDGE_SLACK
            && u <= (self.width - 1) as f64 + EDGE_SLACK
            && v <= (self.height - 1) as f64 + EDGE_SLACK
    }
}

/// Depth along the optical axis for a level camera `h` meters above a flat
/// ground, capped by a far plane. Rows at or above the horizon get `z_far`.
pub fn ground_plane_depth(camera: &CameraModel, h: f64, z_far: f64, v: f64) -> f64 {
    let below = v - camera.cy;
    if below <= 0.0 {
        return z_far;
    }
    (h * camera.fy / below).min(z_far)
}

/// Scene depth source for the RGB camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DepthProvider {
    /// Flat ground `height` meters below a level camera plus a far plane.
    GroundPlane { height: f64, z_far: f64 },
    /// Per-pixel optical-axis depth in meters, row-major, in the RGB camera.
    DepthMap { width: u32, height: u32, depth: Vec<f32> },
}

impl DepthProvider {
    pub fn ground(height: f64, z_far: f64) -> Self {
        DepthProvider::GroundPlane { height, z_far }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DepthProvider::GroundPlane { height, z_far } => {
                if !(*height > 0.0 && *z_far > 0.0) {
                    return Err(Error::InvalidArgument(
                        "ground-plane depth needs positive camera height and far plane".into(),
                    ));
                }
            }
            DepthProvider::DepthMap { width, height, depth } => {
                if depth.len() != *width as usize * *height as usize {
                    return Err(Error::DimensionMismatch(format!(
                        "depth map has {} values for {}x{}",
                        depth.len(),
                        width,
                        height
                    )));
                }
                if let Some(i) = depth.iter().position(|d| !(*d > 0.0) || !d.is_finite()) {
                    return Err(Error::validation("depth map values must be positive", Some(i)));
                }
            }
        }
        Ok(())
    }

    /// Optical-axis depth of RGB pixel `(u, v)`.
    pub fn depth_at(&self, camera: &CameraModel, u: f64, v: f64) -> Option<f64> {
        match self {
            DepthProvider::GroundPlane { height, z_far } => Some(ground_plane_depth(camera, *height, *z_far, v)),
            DepthProvider::DepthMap { width, height, depth } => {
                let iu = u.round();
                let iv = v.round();
                if iu < 0.0 || iv < 0.0 || iu >= *width as f64 || iv >= *height as f64 {
                    return None;
                }
                Some(depth[iv as usize * *width as usize + iu as usize] as f64)
            }
        }
    }
}

/// For every destination pixel, the continuous source-image coordinate that
/// sees the same scene point, or `None` when nothing maps there.
///
/// `src_to_dst` maps source-camera coordinates into destination-camera
/// coordinates. Depth comes from `depth`, which is expressed in the source
/// camera.
pub fn inverse_pixel_map(
    depth: &DepthProvider,
    src: &CameraModel,
    dst: &CameraModel,
    src_to_dst: &RigidTransform,
) -> Vec<Option<(f64, f64)>> {
    let dst_to_src = src_to_dst.inverse();
    let w = dst.width as usize;
    let h = dst.height as usize;
    let dst_depth = match depth {
        DepthProvider::GroundPlane { height, z_far } => proxy_depths(dst, &dst_to_src, *height, *z_far),
        DepthProvider::DepthMap { .. } => splat_depths(depth, src, dst, src_to_dst),
    };
    let mut out = vec![None; w * h];
    for v in 0..h {
        for u in 0..w {
            let idx = v * w + u;
            let Some(lambda) = dst_depth[idx] else { continue };
            let p_dst = dst.unproject(u as f64, v as f64, lambda);
            let p_src = dst_to_src.apply(&p_dst);
            if let Some((su, sv)) = src.project(&p_src) {
                if src.contains(su, sv) {
                    out[idx] = Some((su, sv));
                }
            }
        }
    }
    out
}

/// Destination-frame depth of the two-plane proxy scene (ground at `y = h`
/// and far plane at `z = z_far`, both in the source camera frame).
fn proxy_depths(dst: &CameraModel, dst_to_src: &RigidTransform, h: f64, z_far: f64) -> Vec<Option<f64>> {
    let rt = dst_to_src.rotation;
    let b = dst_to_src.translation;
    let mut out = Vec::with_capacity(dst.pixel_count());
    for v in 0..dst.height {
        for u in 0..dst.width {
            let a = rt * dst.ray(u as f64, v as f64);
            let mut best: Option<f64> = None;
            let mut consider = |num: f64, den: f64| {
                if den.abs() < 1e-15 {
                    return;
                }
                let lambda = num / den;
                if lambda > 0.0 && lambda.is_finite() && best.map_or(true, |l| lambda < l) {
                    best = Some(lambda);
                }
            };
            consider(h - b.y, a.y);
            consider(z_far - b.z, a.z);
            out.push(best);
        }
    }
    out
}

/// Forward-splats a source depth map into the destination camera with a
/// z-buffer, then closes single-pixel holes with the nearest neighbor depth.
fn splat_depths(
    depth: &DepthProvider,
    src: &CameraModel,
    dst: &CameraModel,
    src_to_dst: &RigidTransform,
) -> Vec<Option<f64>> {
    let w = dst.width as usize;
    let h = dst.height as usize;
    let mut zbuf = vec![f64::INFINITY; w * h];
    for v in 0..src.height {
        for u in 0..src.width {
            let Some(z) = depth.depth_at(src, u as f64, v as f64) else { continue };
            let p = src_to_dst.apply(&src.unproject(u as f64, v as f64, z));
            let Some((du, dv)) = dst.project(&p) else { continue };
            let (iu, iv) = (du.round(), dv.round());
            if iu < 0.0 || iv < 0.0 || iu >= w as f64 || iv >= h as f64 {
                continue;
            }
            let idx = iv as usize * w + iu as usize;
            if p.z < zbuf[idx] {
                zbuf[idx] = p.z;
            }
        }
    }
    let mut out: Vec<Option<f64>> = zbuf.iter().map(|z| z.is_finite().then_some(*z)).collect();
    for v in 0..h {
        for u in 0..w {
            if out[v * w + u].is_some() {
                continue;
            }
            let mut near = f64::INFINITY;
            for (du, dv) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (nu, nv) = (u as i64 + du, v as i64 + dv);
                if nu >= 0 && nv >= 0 && (nu as usize) < w && (nv as usize) < h {
                    near = near.min(zbuf[nv as usize * w + nu as usize]);
                }
            }
            if near.is_finite() {
                out[v * w + u] = Some(near);
            }
        }
    }
    out
}

/// Bilinear interpolation of a scalar image given by `fetch(u, v)`; the
/// coordinates must satisfy [`CameraModel::contains`] for the same size.
#[inline]
pub fn bilinear(width: usize, height: usize, u: f64, v: f64, fetch: impl Fn(usize, usize) -> f64) -> f64 {
    let u = u.clamp(0.0, (width - 1) as f64);
    let v = v.clamp(0.0, (height - 1) as f64);
    let u0 = (u.floor() as usize).min(width - 1);
    let v0 = (v.floor() as usize).min(height - 1);
    let u1 = (u0 + 1).min(width - 1);
    let v1 = (v0 + 1).min(height - 1);
    let fu = u - u0 as f64;
    let fv = v - v0 as f64;
    let top = fetch(u0, v0) * (1.0 - fu) + fetch(u1, v0) * fu;
    let bottom = fetch(u0, v1) * (1.0 - fu) + fetch(u1, v1) * fu;
    top * (1.0 - fv) + bottom * fv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraModel {
        CameraModel { fx: 100.0, fy: 100.0, cx: 31.5, cy: 23.5, width: 64, height: 48 }
    }

    #[test]
    fn ground_depth_similar_triangles() {
        let c = CameraModel { fx: 100.0, fy: 100.0, cx: 50.0, cy: 20.0, width: 101, height: 400 };
        assert!((ground_plane_depth(&c, 1.5, 200.0, c.cy + c.fy) - 1.5).abs() < 1e-12);
        assert!((ground_plane_depth(&c, 1.5, 200.0, c.cy + 2.0 * c.fy) - 0.75).abs() < 1e-12);
        assert_eq!(ground_plane_depth(&c, 1.5, 200.0, c.cy), 200.0);
        assert_eq!(ground_plane_depth(&c, 1.5, 200.0, c.cy - 3.0), 200.0);
        // Just below the horizon the far plane caps the depth.
        assert_eq!(ground_plane_depth(&c, 1.5, 200.0, c.cy + 0.1), 200.0);
    }

    #[test]
    fn identity_map_is_identity_and_matches_formula() {
        let c = cam();
        let map = inverse_pixel_map(&DepthProvider::ground(1.5, 100.0), &c, &c, &RigidTransform::identity());
        for v in 0..48 {
            for u in 0..64 {
                let (su, sv) = map[v * 64 + u].unwrap();
                assert!((su - u as f64).abs() < 1e-9 && (sv - v as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn proxy_depth_equals_closed_form_at_identity() {
        let c = cam();
        let d = proxy_depths(&c, &RigidTransform::identity(), 1.5, 80.0);
        for v in 0..48 {
            let got = d[v * 64 + 5].unwrap();
            let want = ground_plane_depth(&c, 1.5, 80.0, v as f64);
            assert!((got - want).abs() < 1e-9, "row {v}: {got} vs {want}");
        }
    }

    #[test]
    fn lateral_shift_gives_pinhole_disparity() {
        // Camera moves 0.5 m to its right (+x optical): scene appears shifted left.
        let c = cam();
        let delta = 0.5;
        let t = RigidTransform::from_translation(-delta, 0.0, 0.0);
        let map = inverse_pixel_map(&DepthProvider::ground(1.5, 80.0), &c, &c, &t);
        for v in 30..48usize {
            let z = ground_plane_depth(&c, 1.5, 80.0, v as f64);
            let (su, sv) = map[v * 64 + 20].unwrap();
            assert!((sv - v as f64).abs() < 1e-9);
            assert!((su - (20.0 + c.fx * delta / z)).abs() < 1e-9);
        }
    }

    #[test]
    fn depth_map_provider_matches_ground_plane_for_small_moves() {
        let c = cam();
        let mut depth = Vec::new();
        for v in 0..48 {
            for _ in 0..64 {
                depth.push(ground_plane_depth(&c, 1.5, 50.0, v as f64) as f32);
            }
        }
        let dm = DepthProvider::DepthMap { width: 64, height: 48, depth };
        dm.validate().unwrap();
        let map = inverse_pixel_map(&dm, &c, &c, &RigidTransform::identity());
        for (i, m) in map.iter().enumerate() {
            let (su, sv) = m.unwrap();
            assert!((su - (i % 64) as f64).abs() < 1e-4 && (sv - (i / 64) as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn bilinear_midpoint() {
        let img = [0.0, 10.0, 20.0, 30.0];
        let v = bilinear(2, 2, 0.5, 0.5, |u, v| img[v * 2 + u]);
        assert!((v - 15.0).abs() < 1e-12);
        assert_eq!(bilinear(2, 2, 1.0, 1.0, |u, v| img[v * 2 + u]), 30.0);
    }
}
