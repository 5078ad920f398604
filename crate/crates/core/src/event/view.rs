use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    adaptive_substeps, compose_flow, generate_events, interpolate_frame, ContrastModel, Event, EventArray, FlowField,
    IntensityFrame, SubstepConfig,
};
use crate::camera::{bilinear, inverse_pixel_map, CameraModel, DepthProvider};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

/// Splatting weight at which a neighboring pixel fires.
const SPLAT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationSpace {
    /// Generate in RGB pixels, then splat every event into the event camera.
    Rgb,
    /// Warp the frames into the novel event camera first.
    #[default]
    Event,
}

/// Geometry and model settings for [`synthesize_event_view`].
#[derive(Debug, Clone, PartialEq)]
pub struct EventViewParams {
    pub rgb: CameraModel,
    pub event: CameraModel,
    /// RGB camera frame to (recorded) event camera frame.
    pub rgb_to_event: RigidTransform,
    /// Recorded event camera frame to the novel event camera frame.
    pub novel: RigidTransform,
    pub depth: DepthProvider,
    pub contrast: ContrastModel,
    pub substeps: SubstepConfig,
    pub space: GenerationSpace,
}

impl EventViewParams {
    fn rgb_to_novel(&self) -> RigidTransform {
        self.novel.compose(&self.rgb_to_event)
    }
}

/// Maps an RGB pixel into continuous novel event-camera coordinates, or
/// `None` when the point has no depth, falls behind the camera or leaves
/// the image.
pub fn reproject_pixels(
    p_rgb: (f64, f64),
    depth: &DepthProvider,
    rgb: &CameraModel,
    event: &CameraModel,
    rgb_to_novel: &RigidTransform,
) -> Option<(f64, f64)> {
    let z = depth.depth_at(rgb, p_rgb.0, p_rgb.1)?;
    let p = rgb_to_novel.apply(&rgb.unproject(p_rgb.0, p_rgb.1, z));
    let (u, v) = event.project(&p)?;
    event.contains(u, v).then_some((u, v))
}

fn check_frame(f: &IntensityFrame, cam: &CameraModel, what: &str) -> Result<()> {
    if f.width != cam.width as usize || f.height != cam.height as usize {
        return Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, camera is {}x{}",
            f.width, f.height, cam.width, cam.height
        )));
    }
    Ok(())
}

/// Substep interpolation plus event generation in a single image space.
fn events_in_space(
    i1: &IntensityFrame,
    i2: &IntensityFrame,
    f12: &FlowField,
    f21: &FlowField,
    contrast: &ContrastModel,
    substeps: &SubstepConfig,
) -> Result<EventArray> {
    let interval = i2.timestamp - i1.timestamp;
    if !(interval > 0.0) {
        return Err(Error::validation("second frame must be later than the first", Some(1)));
    }
    let schedule = adaptive_substeps(f12, f21, interval, substeps)?;
    let mut frames = Vec::with_capacity(schedule.n as usize + 1);
    frames.push(i1.clone());
    for k in 1..schedule.n {
        let tau = k as f64 / schedule.n as f64;
        let (a, b) = compose_flow(f12, f21, tau)?;
        let mut f = interpolate_frame(i1, i2, &a, &b, tau)?;
        f.timestamp = i1.timestamp + k as f64 * schedule.dt;
        frames.push(f);
    }
    frames.push(i2.clone());
    generate_events(&frames, contrast)
}

/// Events a novel event camera would see between two RGB frames.
///
/// `f12` and `f21` are the forward and backward optical flows between the
/// RGB frames. See [`GenerationSpace`] for the two modes.
pub fn synthesize_event_view(
    i1: &IntensityFrame,
    i2: &IntensityFrame,
    f12: &FlowField,
    f21: &FlowField,
    params: &EventViewParams,
) -> Result<EventArray> {
    params.rgb.validate()?;
    params.event.validate()?;
    params.depth.validate()?;
    check_frame(i1, &params.rgb, "first frame")?;
    check_frame(i2, &params.rgb, "second frame")?;
    if f12.width != i1.width || f12.height != i1.height {
        return Err(Error::DimensionMismatch("flow does not match frame size".into()));
    }
    let m = params.rgb_to_novel();
    match params.space {
        GenerationSpace::Rgb => {
            let ev = events_in_space(i1, i2, f12, f21, &params.contrast, &params.substeps)?;
            Ok(splat_events(&ev, params, &m))
        }
        GenerationSpace::Event => {
            let map = inverse_pixel_map(&params.depth, &params.rgb, &params.event, &m);
            let (j1, j2) = (warp_frame(i1, &map, &params.event), warp_frame(i2, &map, &params.event));
            let g12 = map_flow(f12, &map, params, &m);
            let g21 = map_flow(f21, &map, params, &m);
            events_in_space(&j1, &j2, &g12, &g21, &params.contrast, &params.substeps)
        }
    }
}

/// Bilinear splat of each RGB-space event onto the four surrounding event
/// pixels. Each (pixel, polarity) pair accumulates weight and fires one
/// event each time the running total reaches the threshold.
fn splat_events(ev: &EventArray, params: &EventViewParams, m: &RigidTransform) -> EventArray {
    let (w, h) = (params.event.width as usize, params.event.height as usize);
    let rgb_w = params.rgb.width as usize;
    let rgb_h = params.rgb.height as usize;
    // Reprojection per RGB pixel is shared by all its events.
    let targets: Vec<Option<(f64, f64)>> = (0..rgb_w * rgb_h)
        .into_par_iter()
        .map(|k| reproject_pixels(((k % rgb_w) as f64, (k / rgb_w) as f64), &params.depth, &params.rgb, &params.event, m))
        .collect();
    let mut acc = vec![[0.0f64; 2]; w * h];
    let mut out = EventArray::default();
    for e in &ev.events {
        let Some((x, y)) = targets[e.v as usize * rgb_w + e.u as usize] else { continue };
        let x0 = x.floor().max(0.0) as usize;
        let y0 = y.floor().max(0.0) as usize;
        let fx = (x - x0 as f64).clamp(0.0, 1.0);
        let fy = (y - y0 as f64).clamp(0.0, 1.0);
        let slot = usize::from(e.polarity > 0);
        for (du, dv, wgt) in [(0, 0, (1.0 - fx) * (1.0 - fy)), (1, 0, fx * (1.0 - fy)), (0, 1, (1.0 - fx) * fy), (1, 1, fx * fy)] {
            let (u, v) = (x0 + du, y0 + dv);
            if wgt <= 0.0 || u >= w || v >= h {
                continue;
            }
            let a = &mut acc[v * w + u][slot];
            *a += wgt;
            if *a >= SPLAT_THRESHOLD {
                *a -= 1.0;
                out.events.push(Event { u: u as u16, v: v as u16, t: e.t, polarity: e.polarity });
            }
        }
    }
    out.sort(w);
    out
}

/// Backward warp of an RGB-space frame into the event camera; unmapped
/// pixels are black in both frames and so never fire.
fn warp_frame(f: &IntensityFrame, map: &[Option<(f64, f64)>], cam: &CameraModel) -> IntensityFrame {
    let data = map
        .par_iter()
        .map(|m| match m {
            Some((u, v)) => bilinear(f.width, f.height, *u, *v, |x, y| f.at(x, y)),
            None => 0.0,
        })
        .collect();
    IntensityFrame { width: cam.width as usize, height: cam.height as usize, data, timestamp: f.timestamp }
}

/// Transfers an RGB flow field into event-camera pixels by reprojecting
/// both ends of each flow vector.
fn map_flow(f: &FlowField, map: &[Option<(f64, f64)>], params: &EventViewParams, m: &RigidTransform) -> FlowField {
    let w = params.event.width as usize;
    let data = map
        .par_iter()
        .enumerate()
        .map(|(k, src)| {
            let Some((su, sv)) = *src else { return [0.0, 0.0] };
            let fu = bilinear(f.width, f.height, su, sv, |x, y| f.at(x, y)[0]);
            let fv = bilinear(f.width, f.height, su, sv, |x, y| f.at(x, y)[1]);
            let (qu, qv) = ((k % w) as f64, (k / w) as f64);
            match reproject_pixels((su + fu, sv + fv), &params.depth, &params.rgb, &params.event, m) {
                Some((eu, ev)) => [eu - qu, ev - qv],
                None => [fu, fv],
            }
        })
        .collect();
    FlowField { width: w, height: params.event.height as usize, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam(w: u32, h: u32) -> CameraModel {
        CameraModel { fx: 40.0, fy: 40.0, cx: (w - 1) as f64 / 2.0, cy: (h - 1) as f64 / 2.0, width: w, height: h }
    }

    fn params(space: GenerationSpace) -> EventViewParams {
        EventViewParams {
            rgb: cam(48, 32),
            event: cam(48, 32),
            rgb_to_event: RigidTransform::identity(),
            novel: RigidTransform::identity(),
            depth: DepthProvider::ground(1.5, 50.0),
            contrast: ContrastModel::new(0.2, 0.0, 3),
            substeps: SubstepConfig::with_max(50),
            space,
        }
    }

    #[test]
    fn identity_reprojection() {
        let p = params(GenerationSpace::Event);
        let q = reproject_pixels((10.0, 20.0), &p.depth, &p.rgb, &p.event, &RigidTransform::identity()).unwrap();
        assert!((q.0 - 10.0).abs() < 1e-9 && (q.1 - 20.0).abs() < 1e-9);
    }

    #[test]
    fn doubled_focal_length_doubles_offsets() {
        let p = params(GenerationSpace::Event);
        let mut ev = cam(96, 64);
        ev.fx *= 2.0;
        ev.fy *= 2.0;
        ev.cx = p.rgb.cx;
        ev.cy = p.rgb.cy;
        let q = reproject_pixels((30.0, 25.0), &p.depth, &p.rgb, &ev, &RigidTransform::identity()).unwrap();
        assert!((q.0 - ev.cx - 2.0 * (30.0 - p.rgb.cx)).abs() < 1e-9);
        assert!((q.1 - ev.cy - 2.0 * (25.0 - p.rgb.cy)).abs() < 1e-9);
    }

    #[test]
    fn forward_translation_scales_radially() {
        let p = params(GenerationSpace::Event);
        let (u, v) = (35.0, 28.0);
        let z = p.depth.depth_at(&p.rgb, u, v).unwrap();
        let delta = 0.3;
        let m = RigidTransform::from_translation(0.0, 0.0, -delta);
        let q = reproject_pixels((u, v), &p.depth, &p.rgb, &p.event, &m).unwrap();
        let s = z / (z - delta);
        assert!((q.0 - p.event.cx - s * (u - p.rgb.cx)).abs() < 1e-9);
        assert!((q.1 - p.event.cy - s * (v - p.rgb.cy)).abs() < 1e-9);
    }

    #[test]
    fn behind_camera_is_invisible() {
        let p = params(GenerationSpace::Event);
        let m = RigidTransform::from_translation(0.0, 0.0, -100.0);
        assert!(reproject_pixels((20.0, 10.0), &p.depth, &p.rgb, &p.event, &m).is_none());
    }

    #[test]
    fn static_scene_is_silent_in_both_modes() {
        for space in [GenerationSpace::Rgb, GenerationSpace::Event] {
            let p = params(space);
            let data: Vec<f64> = (0..48 * 32).map(|k| 0.1 + (k % 17) as f64 / 20.0).collect();
            let i1 = IntensityFrame::new(48, 32, data.clone(), 0.0).unwrap();
            let i2 = IntensityFrame::new(48, 32, data, 0.1).unwrap();
            let z = FlowField::zeros(48, 32);
            assert!(synthesize_event_view(&i1, &i2, &z, &z, &p).unwrap().is_empty());
        }
    }
}
