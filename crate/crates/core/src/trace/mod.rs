//! Recorded drive traces: odometry, sensor streams and calibration.
//!
//! A [`Trace`] is immutable once built and can be shared across threads.
//! Per-episode search state lives in [`FrameCursor`], owned by the caller.

mod io;
mod query;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{Pose2, RigidTransform, MAX_CURVATURE};
use crate::lidar::GridSpec;

pub use io::{load_trace, write_trace};
pub use query::{Deviation, FrameCursor, FrameRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensorKind {
    Rgb,
    Lidar,
    EventTarget,
}

impl SensorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SensorKind::Rgb => "rgb",
            SensorKind::Lidar => "lidar",
            SensorKind::EventTarget => "event-target",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Spinning LiDAR geometry: `rows` beams between `pitch_min` and `pitch_max`
/// (radians) and `cols` azimuth bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarModel {
    pub rows: u32,
    pub cols: u32,
    pub pitch_min: f64,
    pub pitch_max: f64,
}

impl LidarModel {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(self.rows as usize, self.cols as usize, self.pitch_min, self.pitch_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorModel {
    Camera(CameraModel),
    Lidar(LidarModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub name: String,
    pub kind: SensorKind,
    pub model: SensorModel,
    /// Maps vehicle-frame points into this sensor's frame.
    pub extrinsic: RigidTransform,
}

impl SensorSpec {
    pub fn camera(&self) -> Option<&CameraModel> {
        match &self.model {
            SensorModel::Camera(c) => Some(c),
            SensorModel::Lidar(_) => None,
        }
    }

    pub fn lidar(&self) -> Option<&LidarModel> {
        match &self.model {
            SensorModel::Lidar(l) => Some(l),
            SensorModel::Camera(_) => None,
        }
    }

    /// Height of the sensor origin above the vehicle-frame ground plane.
    pub fn mount_height(&self) -> f64 {
        self.extrinsic.inverse().translation.z
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorRig {
    pub sensors: Vec<SensorSpec>,
}

impl SensorRig {
    pub fn first_of_kind(&self, kind: SensorKind) -> Option<&SensorSpec> {
        self.sensors.iter().find(|s| s.kind == kind)
    }

    pub fn by_name(&self, name: &str) -> Option<&SensorSpec> {
        self.sensors.iter().find(|s| s.name == name)
    }

    /// Transform from the RGB camera frame into the event camera frame.
    pub fn rgb_to_event(&self) -> Result<RigidTransform> {
        let rgb = self.first_of_kind(SensorKind::Rgb).ok_or(Error::MissingSensor("rgb"))?;
        let ev = self
            .first_of_kind(SensorKind::EventTarget)
            .unwrap_or(rgb);
        Ok(ev.extrinsic.compose(&rgb.extrinsic.inverse()))
    }

    fn validate(&self) -> Result<()> {
        for (i, s) in self.sensors.iter().enumerate() {
            if self.sensors[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::validation(format!("duplicate sensor name `{}`", s.name), Some(i)));
            }
            s.extrinsic.check_orthonormal(1e-9).map_err(|e| {
                Error::validation(format!("sensor `{}` extrinsic: {e}", s.name), Some(i))
            })?;
            match (&s.kind, &s.model) {
                (SensorKind::Lidar, SensorModel::Lidar(l)) => {
                    if l.rows < 2 || l.cols < 1 || !(l.pitch_max > l.pitch_min) {
                        return Err(Error::validation(format!("sensor `{}` has a bad lidar grid", s.name), Some(i)));
                    }
                }
                (SensorKind::Rgb | SensorKind::EventTarget, SensorModel::Camera(c)) => c.validate()?,
                _ => {
                    return Err(Error::validation(
                        format!("sensor `{}` intrinsics do not match kind {}", s.name, s.kind),
                        Some(i),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// One odometry row. `arc_length` is derived, not stored on disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomRecord {
    pub t: f64,
    pub pose: Pose2,
    pub speed: f64,
    pub curvature: f64,
    pub arc_length: f64,
}

impl OdomRecord {
    pub fn new(t: f64, pose: Pose2, speed: f64, curvature: f64) -> Self {
        Self { t, pose, speed, curvature, arc_length: 0.0 }
    }
}

/// Location of one frame's payload inside the stream's data blob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEntry {
    pub timestamp: f64,
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone)]
pub struct SensorStream {
    pub name: String,
    pub kind: SensorKind,
    pub frames: Vec<FrameEntry>,
    data: Arc<Vec<u8>>,
    /// Vehicle pose at each frame timestamp.
    frame_poses: Vec<Pose2>,
    /// Centerline arc-length at each frame timestamp.
    frame_arcs: Vec<f64>,
}

impl SensorStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn payload(&self, index: usize) -> &[u8] {
        let f = &self.frames[index];
        &self.data[f.offset as usize..(f.offset + f.length) as usize]
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn frame_pose(&self, index: usize) -> Pose2 {
        self.frame_poses[index]
    }

    pub fn frame_arc(&self, index: usize) -> f64 {
        self.frame_arcs[index]
    }
}

/// Frames of one stream as handed to [`Trace::new`].
#[derive(Debug, Clone, Default)]
pub struct StreamData {
    pub name: String,
    pub frames: Vec<FrameEntry>,
    pub data: Vec<u8>,
}

impl StreamData {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn push(&mut self, timestamp: f64, payload: &[u8]) {
        self.frames.push(FrameEntry {
            timestamp,
            offset: self.data.len() as u64,
            length: payload.len() as u64,
        });
        self.data.extend_from_slice(payload);
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub id: String,
    pub rig: SensorRig,
    pub odometry: Vec<OdomRecord>,
    pub streams: Vec<SensorStream>,
}

impl Trace {
    /// Validates the parts and derives arc lengths and frame poses. Every
    /// sensor in the rig needs a matching stream (possibly empty).
    pub fn new(id: impl Into<String>, rig: SensorRig, odometry: Vec<OdomRecord>, streams: Vec<StreamData>) -> Result<Self> {
        rig.validate()?;
        let odometry = validate_odometry(odometry)?;
        let mut out = Trace { id: id.into(), rig, odometry, streams: Vec::new() };
        let mut by_name: Vec<Option<StreamData>> = streams.into_iter().map(Some).collect();
        let sensors = out.rig.sensors.clone();
        for spec in &sensors {
            let slot = by_name
                .iter_mut()
                .find(|s| s.as_ref().is_some_and(|s| s.name == spec.name))
                .and_then(Option::take)
                .unwrap_or_else(|| StreamData::new(spec.name.clone()));
            let stream = out.build_stream(spec, slot)?;
            out.streams.push(stream);
        }
        if let Some(extra) = by_name.into_iter().flatten().next() {
            return Err(Error::validation(format!("stream `{}` has no sensor in the rig", extra.name), None));
        }
        Ok(out)
    }

    fn build_stream(&self, spec: &SensorSpec, data: StreamData) -> Result<SensorStream> {
        let (t0, t1) = self.time_range();
        for (i, f) in data.frames.iter().enumerate() {
            if !f.timestamp.is_finite() {
                return Err(Error::validation(format!("stream `{}` has a non-finite timestamp", spec.name), Some(i)));
            }
            if i > 0 && f.timestamp <= data.frames[i - 1].timestamp {
                return Err(Error::validation(
                    format!("stream `{}` timestamps not strictly increasing", spec.name),
                    Some(i),
                ));
            }
            if f.timestamp < t0 || f.timestamp > t1 {
                return Err(Error::validation(
                    format!("stream `{}` frame at {} s outside odometry range [{t0}, {t1}]", spec.name, f.timestamp),
                    Some(i),
                ));
            }
            let end = f.offset.checked_add(f.length);
            if end.is_none_or(|e| e > data.data.len() as u64) {
                return Err(Error::validation(
                    format!("stream `{}` payload locator past end of data", spec.name),
                    Some(i),
                ));
            }
            let ok = match (&spec.kind, &spec.model) {
                (SensorKind::Rgb, SensorModel::Camera(c)) => f.length as usize == c.pixel_count() * 3,
                (SensorKind::Lidar, _) => f.length as usize % crate::cloud::POINT_RECORD_BYTES == 0,
                (SensorKind::EventTarget, _) => {
                    f.length >= 8 && (f.length - 8) % crate::event::EVENT_RECORD_BYTES as u64 == 0
                }
                _ => true,
            };
            if !ok {
                return Err(Error::validation(
                    format!("stream `{}` frame has {} bytes, wrong size for {}", spec.name, f.length, spec.kind),
                    Some(i),
                ));
            }
        }
        let frame_poses = data
            .frames
            .iter()
            .map(|f| self.pose_at_time(f.timestamp))
            .collect::<Result<Vec<_>>>()?;
        let frame_arcs = data.frames.iter().map(|f| self.arc_at_time(f.timestamp)).collect();
        Ok(SensorStream {
            name: spec.name.clone(),
            kind: spec.kind,
            frames: data.frames,
            data: Arc::new(data.data),
            frame_poses,
            frame_arcs,
        })
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.time_range();
        b - a
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.odometry[0].t, self.odometry[self.odometry.len() - 1].t)
    }

    /// Total centerline length in meters.
    pub fn length(&self) -> f64 {
        self.odometry[self.odometry.len() - 1].arc_length
    }

    pub fn stream(&self, kind: SensorKind) -> Option<&SensorStream> {
        self.streams.iter().find(|s| s.kind == kind)
    }

    pub fn stream_by_name(&self, name: &str) -> Option<&SensorStream> {
        self.streams.iter().find(|s| s.name == name)
    }

    pub fn sensor(&self, kind: SensorKind) -> Result<&SensorSpec> {
        self.rig.first_of_kind(kind).ok_or(Error::MissingSensor(kind.as_str()))
    }
}

fn validate_odometry(mut rows: Vec<OdomRecord>) -> Result<Vec<OdomRecord>> {
    if rows.len() < 2 {
        return Err(Error::validation("odometry needs at least two rows", None));
    }
    for i in 0..rows.len() {
        let r = &rows[i];
        let finite = [r.t, r.pose.x, r.pose.y, r.pose.yaw, r.speed, r.curvature]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("odometry value is not finite", Some(i)));
        }
        if i > 0 && r.t <= rows[i - 1].t {
            return Err(Error::validation("odometry timestamps not strictly increasing", Some(i)));
        }
        if r.speed < 0.0 {
            return Err(Error::validation("negative odometry speed", Some(i)));
        }
        if r.curvature.abs() > MAX_CURVATURE {
            return Err(Error::validation(format!("odometry |curvature| exceeds {MAX_CURVATURE}"), Some(i)));
        }
    }
    rows[0].arc_length = 0.0;
    for i in 1..rows.len() {
        let step = rows[i].pose.distance(&rows[i - 1].pose);
        rows[i].arc_length = rows[i - 1].arc_length + step;
    }
    Ok(rows)
}
