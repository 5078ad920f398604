//! Event-camera emulation from pairs of intensity frames.

mod generate;
mod interp;
mod view;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, DepthProvider};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

pub use generate::generate_events;
pub use interp::{adaptive_substeps, compose_flow, interpolate_frame, substep_schedule, SubstepCap, SubstepConfig, SubstepRule, SubstepSchedule};
pub use view::{reproject_pixels, synthesize_event_view, EventViewParams, GenerationSpace};

/// Bytes per serialized event: u16 u, u16 v, f64 t, i8 polarity.
pub const EVENT_RECORD_BYTES: usize = 13;

/// Log-intensity floor applied before taking logarithms.
pub const LUMINANCE_FLOOR: f64 = 1e-4;

/// Linear luminance image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub timestamp: f64,
}

impl IntensityFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>, timestamp: f64) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} values for {width}x{height}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::validation("intensity must be finite and nonnegative", Some(i)));
        }
        Ok(Self { width, height, data, timestamp })
    }

    pub fn constant(width: usize, height: usize, value: f64, timestamp: f64) -> Self {
        Self { width, height, data: vec![value; width * height], timestamp }
    }

    /// Rec. 601 luma of an 8-bit RGB buffer, scaled to [0, 1].
    pub fn from_rgb(width: usize, height: usize, rgb: &[u8], timestamp: f64) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!("{} bytes for {width}x{height} RGB", rgb.len())));
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect();
        Ok(Self { width, height, data, timestamp })
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }
}

/// Per-pixel displacement in pixels, row-major `[du, dv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f64; 2]>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::uniform(width, height, 0.0, 0.0)
    }

    pub fn uniform(width: usize, height: usize, du: f64, dv: f64) -> Self {
        Self { width, height, data: vec![[du, dv]; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f64; 2]) -> Self {
        let data = (0..height).flat_map(|v| (0..width).map(move |u| (u, v))).map(|(u, v)| f(u, v)).collect();
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, u: usize, v: usize) -> [f64; 2] {
        self.data[v * self.width + u]
    }

    pub fn max_magnitude(&self) -> f64 {
        self.data.iter().map(|f| f[0].hypot(f[1])).fold(0.0, f64::max)
    }

    fn check_same(&self, other: &FlowField) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(format!(
                "flow {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Flow induced by moving a camera over a known scene: each pixel is
/// unprojected at `depth`, moved by `src_to_dst` and projected again.
/// Pixels with no depth or that land behind the camera get zero flow.
pub fn geometric_flow(depth: &DepthProvider, camera: &CameraModel, src_to_dst: &RigidTransform) -> FlowField {
    FlowField::from_fn(camera.width as usize, camera.height as usize, |u, v| {
        let (uf, vf) = (u as f64, v as f64);
        depth
            .depth_at(camera, uf, vf)
            .and_then(|z| camera.project(&src_to_dst.apply(&camera.unproject(uf, vf, z))))
            .map_or([0.0, 0.0], |(x, y)| [x - uf, y - vf])
    })
}

/// Forward and backward flow in the optional flow-file layout: `H*W*2`
/// little-endian f32 each, forward first.
pub fn encode_flow_pair(f12: &FlowField, f21: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * f12.data.len());
    for f in [f12, f21] {
        for d in &f.data {
            out.extend_from_slice(&(d[0] as f32).to_le_bytes());
            out.extend_from_slice(&(d[1] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_flow_pair(bytes: &[u8], width: usize, height: usize) -> Result<(FlowField, FlowField)> {
    let n = width * height;
    if bytes.len() != 16 * n {
        return Err(Error::DimensionMismatch(format!("flow file has {} bytes, expected {}", bytes.len(), 16 * n)));
    }
    let f = |i: usize| f32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as f64;
    let field = |base: usize| FlowField {
        width,
        height,
        data: (0..n).map(|k| [f(base + 2 * k), f(base + 2 * k + 1)]).collect(),
    };
    Ok((field(0), field(2 * n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub u: u16,
    pub v: u16,
    pub t: f64,
    pub polarity: i8,
}

/// Time-ordered events; ties are ordered by row-major pixel index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventArray {
    pub events: Vec<Event>,
}

impl EventArray {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of events per pixel for a `width x height` sensor.
    pub fn counts(&self, width: usize, height: usize) -> Vec<u32> {
        let mut c = vec![0u32; width * height];
        for e in &self.events {
            c[e.v as usize * width + e.u as usize] += 1;
        }
        c
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + EVENT_RECORD_BYTES * self.events.len());
        out.extend_from_slice(&(self.events.len() as u64).to_le_bytes());
        for e in &self.events {
            out.extend_from_slice(&e.u.to_le_bytes());
            out.extend_from_slice(&e.v.to_le_bytes());
            out.extend_from_slice(&e.t.to_le_bytes());
            out.push(e.polarity as u8);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("event stream: {m}"));
        if bytes.len() < 8 {
            return Err(bad("truncated count"));
        }
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap());
        if (bytes.len() as u128 - 8) != n as u128 * EVENT_RECORD_BYTES as u128 {
            return Err(bad("length does not match count"));
        }
        let events = bytes[8..]
            .chunks_exact(EVENT_RECORD_BYTES)
            .map(|r| Event {
                u: u16::from_le_bytes([r[0], r[1]]),
                v: u16::from_le_bytes([r[2], r[3]]),
                t: f64::from_le_bytes(r[4..12].try_into().unwrap()),
                polarity: r[12] as i8,
            })
            .collect();
        Ok(Self { events })
    }

    /// Stable sort by time, ties by row-major pixel index for a sensor of `width`.
    pub(crate) fn sort(&mut self, width: usize) {
        self.events.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then((a.v as usize * width + a.u as usize).cmp(&(b.v as usize * width + b.u as usize)))
        });
    }
}

/// Gaussian contrast threshold, clamped from below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastModel {
    pub mu: f64,
    pub sigma: f64,
    pub c_min: f64,
    pub seed: u64,
}

impl ContrastModel {
    pub fn new(mu: f64, sigma: f64, seed: u64) -> Self {
        Self { mu, sigma, c_min: 0.01, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.mu > self.c_min && self.sigma >= 0.0 && self.sigma.is_finite() && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "contrast model needs mu > c_min > 0 and sigma >= 0 (mu {}, sigma {}, c_min {})",
                self.mu, self.sigma, self.c_min
            )));
        }
        Ok(())
    }
}

impl Default for ContrastModel {
    fn default() -> Self {
        Self::new(0.2, 0.03, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_flow_of_lateral_shift() {
        let cam = CameraModel { fx: 50.0, fy: 50.0, cx: 15.5, cy: 5.0, width: 32, height: 24 };
        let d = DepthProvider::ground(1.5, 100.0);
        let f = geometric_flow(&d, &cam, &RigidTransform::from_translation(-0.2, 0.0, 0.0));
        for v in 6..24 {
            let z = 1.5 * 50.0 / (v as f64 - 5.0);
            let z = z.min(100.0);
            let [du, dv] = f.at(7, v);
            assert!((du + 50.0 * 0.2 / z).abs() < 1e-9 && dv.abs() < 1e-12);
        }
        assert!(geometric_flow(&d, &cam, &RigidTransform::identity()).max_magnitude() < 1e-9);
    }


    #[test]
    fn event_file_roundtrip() {
        let a = EventArray {
            events: vec![
                Event { u: 1, v: 2, t: 0.5, polarity: 1 },
                Event { u: 65535, v: 0, t: 1.25, polarity: -1 },
            ],
        };
        let bytes = a.encode();
        assert_eq!(bytes.len(), 8 + 2 * 13);
        assert_eq!(EventArray::decode(&bytes).unwrap(), a);
        assert!(EventArray::decode(&bytes[..20]).is_err());
    }

    #[test]
    fn flow_file_roundtrip() {
        let f = FlowField::from_fn(3, 2, |u, v| [u as f64 * 0.5, -(v as f64)]);
        let b = FlowField::uniform(3, 2, 0.25, 4.0);
        let bytes = encode_flow_pair(&f, &b);
        let (x, y) = decode_flow_pair(&bytes, 3, 2).unwrap();
        assert_eq!((x, y), (f, b));
        assert!(decode_flow_pair(&bytes, 2, 2).is_err());
    }

    #[test]
    fn contrast_validation() {
        assert!(ContrastModel::new(0.2, 0.0, 0).validate().is_ok());
        assert!(ContrastModel::new(0.005, 0.0, 0).validate().is_err());
        assert!(ContrastModel::new(0.2, -1.0, 0).validate().is_err());
    }
}
