//! Procedural traces for tests, demos and the `synth-trace` command.
//!
//! The world is a textured ground plane with a sky dome and a row of
//! vertical poles on both sides of the road. The recorded vehicle follows
//! a curvature profile at constant speed.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{ground_plane_depth, CameraModel};
use crate::cloud::{encode_cloud, LidarPoint};
use crate::error::{Error, Result};
use crate::geometry::{step_bicycle, AgentState, Pose2, RigidTransform};
use crate::trace::{LidarModel, OdomRecord, SensorKind, SensorModel, SensorRig, SensorSpec, StreamData, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum CurvatureProfile {
    Straight,
    /// `kappa(s) = amplitude * sin(2 pi s / wavelength)`.
    Sine { amplitude: f64, wavelength: f64 },
    Circle { curvature: f64 },
}

impl CurvatureProfile {
    pub fn at(&self, s: f64) -> f64 {
        match *self {
            CurvatureProfile::Straight => 0.0,
            CurvatureProfile::Sine { amplitude, wavelength } => amplitude * (std::f64::consts::TAU * s / wavelength).sin(),
            CurvatureProfile::Circle { curvature } => curvature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSetup {
    pub camera: CameraModel,
    /// Lens height above the ground, meters.
    pub height: f64,
    /// Lateral offset of the lens (vehicle y), meters.
    pub lateral: f64,
    /// Frames per second; 0 records no frames.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSetup {
    pub model: LidarModel,
    pub height: f64,
    pub rate: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTrace {
    pub id: String,
    pub profile: CurvatureProfile,
    /// Centerline length, meters.
    pub length: f64,
    pub speed: f64,
    /// Odometry rows per second.
    pub odom_rate: f64,
    pub rgb: Option<CameraSetup>,
    pub lidar: Option<LidarSetup>,
    /// Adds an event-camera target sensor (no recorded frames).
    pub event: Option<CameraSetup>,
    /// Pole spacing along the road, meters, and their lateral distance.
    pub pole_spacing: f64,
    pub pole_offset: f64,
    pub seed: u64,
}

impl Default for SyntheticTrace {
    fn default() -> Self {
        let camera = CameraModel { fx: 64.0, fy: 64.0, cx: 63.5, cy: 40.0, width: 128, height: 96 };
        Self {
            id: "synthetic".into(),
            profile: CurvatureProfile::Straight,
            length: 200.0,
            speed: 10.0,
            odom_rate: 30.0,
            rgb: Some(CameraSetup { camera, height: 1.5, lateral: 0.0, rate: 10.0 }),
            lidar: Some(LidarSetup {
                model: LidarModel { rows: 32, cols: 512, pitch_min: -0.4, pitch_max: 0.1 },
                height: 1.8,
                rate: 5.0,
                max_range: 60.0,
            }),
            event: Some(CameraSetup { camera, height: 1.5, lateral: 0.1, rate: 0.0 }),
            pole_spacing: 10.0,
            pole_offset: 7.0,
            seed: 1,
        }
    }
}

/// A vertical cylinder standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub height: f64,
}

/// Camera optical frame (x right, y down, z forward) mounted at height `h`
/// and lateral offset `lateral`, looking along vehicle x.
pub fn camera_extrinsic(h: f64, lateral: f64) -> RigidTransform {
    let rotation = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    let center = Vector3::new(0.0, lateral, h);
    RigidTransform { rotation, translation: -(rotation * center) }
}

/// LiDAR axes aligned with the vehicle, origin `h` above the ground.
pub fn lidar_extrinsic(h: f64) -> RigidTransform {
    RigidTransform::from_translation(0.0, 0.0, -h)
}

/// Ground albedo in [0, 1] at world `(x, y)`. Smooth so warps and flows
/// stay well conditioned.
pub fn ground_texture(x: f64, y: f64) -> f64 {
    0.45 + 0.2 * (0.6 * x).sin() * (0.5 * y).cos() + 0.15 * (0.21 * (x + 1.7 * y)).sin()
}

/// Sky brightness in [0, 1] for a world-frame viewing direction.
pub fn sky_texture(dir: &Vector3<f64>) -> f64 {
    let az = dir.y.atan2(dir.x);
    let el = dir.z.atan2(dir.x.hypot(dir.y));
    0.75 + 0.1 * (3.0 * az).sin() + 0.1 * el.clamp(0.0, 1.0)
}

fn shade(g: f64) -> [u8; 3] {
    let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(g), q(0.9 * g + 0.05), q(0.7 * g + 0.2)]
}

impl SyntheticTrace {
    pub fn straight(length: f64) -> Self {
        Self { length, ..Self::default() }
    }

    /// Odometry only, no sensors.
    pub fn bare(profile: CurvatureProfile, length: f64) -> Self {
        Self { profile, length, rgb: None, lidar: None, event: None, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.speed > 0.0 && self.odom_rate > 0.0 && self.pole_spacing > 0.0) {
            return Err(Error::InvalidArgument("length, speed, odometry rate and pole spacing must be positive".into()));
        }
        match self.profile {
            CurvatureProfile::Sine { wavelength, .. } if !(wavelength > 0.0) => {
                Err(Error::InvalidArgument("sine wavelength must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn odometry(&self) -> Vec<OdomRecord> {
        let dt = 1.0 / self.odom_rate;
        let steps = (self.length / (self.speed * dt)).ceil() as usize;
        let mut state = AgentState { speed: self.speed, ..Default::default() };
        let mut s = 0.0;
        let mut rows = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let kappa = self.profile.at(s);
            rows.push(OdomRecord::new(k as f64 * dt, state.pose, self.speed, kappa));
            state = step_bicycle(&state, kappa, self.speed, dt);
            s += self.speed * dt;
        }
        rows
    }

    fn rig(&self) -> SensorRig {
        let mut sensors = Vec::new();
        if let Some(c) = &self.rgb {
            sensors.push(SensorSpec {
                name: "rgb".into(),
                kind: SensorKind::Rgb,
                model: SensorModel::Camera(c.camera),
                extrinsic: camera_extrinsic(c.height, c.lateral),
            });
        }
        if let Some(l) = &self.lidar {
            sensors.push(SensorSpec {
                name: "lidar".into(),
                kind: SensorKind::Lidar,
                model: SensorModel::Lidar(l.model),
                extrinsic: lidar_extrinsic(l.height),
            });
        }
        if let Some(c) = &self.event {
            sensors.push(SensorSpec {
                name: "event".into(),
                kind: SensorKind::EventTarget,
                model: SensorModel::Camera(c.camera),
                extrinsic: camera_extrinsic(c.height, c.lateral),
            });
        }
        SensorRig { sensors }
    }

    /// Poles on both sides of the recorded path, jittered along the road.
    pub fn poles(&self, path: &Trace) -> Vec<Pole> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::new();
        let mut s = 0.5 * self.pole_spacing;
        while s < path.length() {
            for side in [-1.0, 1.0] {
                let c = path.centerline_point(s + rng.random_range(-0.3..0.3) * self.pole_spacing);
                let off = side * (self.pole_offset + rng.random_range(0.0..1.5));
                let (x, y) = c.to_world(0.0, off);
                out.push(Pole { x, y, radius: rng.random_range(0.15..0.35), height: rng.random_range(3.0..6.0) });
            }
            s += self.pole_spacing;
        }
        out
    }

    pub fn build(&self) -> Result<Trace> {
        self.validate()?;
        let rig = self.rig();
        let odom = self.odometry();
        let path = Trace::new(self.id.clone(), rig.clone(), odom.clone(), Vec::new())?;
        let poles = self.poles(&path);
        let (t0, t1) = path.time_range();
        let times = |rate: f64| -> Vec<f64> {
            if rate <= 0.0 {
                return Vec::new();
            }
            let n = ((t1 - t0) * rate).floor() as usize;
            (0..=n).map(|k| t0 + k as f64 / rate).filter(|t| *t <= t1).collect()
        };
        let mut streams = Vec::new();
        if let Some(c) = &self.rgb {
            let mut sd = StreamData::new("rgb");
            for t in times(c.rate) {
                let pose = path.pose_at_time(t)?;
                sd.push(t, &render_rgb(c, &pose, &poles));
            }
            streams.push(sd);
        }
        if let Some(l) = &self.lidar {
            let mut sd = StreamData::new("lidar");
            for t in times(l.rate) {
                let pose = path.pose_at_time(t)?;
                sd.push(t, &encode_cloud(&render_lidar(l, &pose, &poles)));
            }
            streams.push(sd);
        }
        Trace::new(self.id.clone(), rig, odom, streams)
    }
}

/// World-frame ray from a vehicle-frame origin and direction.
fn to_world(pose: &Pose2, origin: Vector3<f64>, dir: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let (c, s) = (pose.yaw.cos(), pose.yaw.sin());
    let rot = |v: Vector3<f64>| Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
    let o = rot(origin) + Vector3::new(pose.x, pose.y, 0.0);
    (o, rot(dir))
}

/// Distance along a unit-horizontal-speed ray to the nearest pole side.
fn hit_pole(o: &Vector3<f64>, d: &Vector3<f64>, p: &Pole) -> Option<f64> {
    let (ox, oy) = (o.x - p.x, o.y - p.y);
    let a = d.x * d.x + d.y * d.y;
    if a < 1e-12 {
        return None;
    }
    let b = ox * d.x + oy * d.y;
    let c = ox * ox + oy * oy - p.radius * p.radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    if t <= 0.0 {
        return None;
    }
    let z = o.z + t * d.z;
    (z >= 0.0 && z <= p.height).then_some(t)
}

/// Nearest hit along a world ray: ground, then poles. Returns the ray
/// parameter and the surface albedo.
fn cast(o: &Vector3<f64>, d: &Vector3<f64>, poles: &[Pole], max_t: f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    if d.z < 0.0 {
        let t = -o.z / d.z;
        if t <= max_t {
            let p = o + d * t;
            best = Some((t, ground_texture(p.x, p.y)));
        }
    }
    for pole in poles {
        if let Some(t) = hit_pole(o, d, pole) {
            if t <= max_t && best.is_none_or(|b| t < b.0) {
                let p = o + d * t;
                best = Some((t, 0.2 + 0.1 * (3.0 * p.z).sin().abs()));
            }
        }
    }
    best
}

fn nearby<'a>(poles: &'a [Pole], pose: &Pose2, range: f64) -> Vec<Pole> {
    poles.iter().filter(|p| (p.x - pose.x).hypot(p.y - pose.y) < range + p.radius).copied().collect()
}

/// Renders the camera view at a vehicle pose. Ground beyond the camera's
/// far distance shows sky so the image matches a two-plane proxy.
pub fn render_rgb(setup: &CameraSetup, pose: &Pose2, poles: &[Pole]) -> Vec<u8> {
    let cam = &setup.camera;
    let ext = camera_extrinsic(setup.height, setup.lateral);
    let inv = ext.inverse();
    let far = 80.0;
    let near_poles = nearby(poles, pose, far);
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut out = vec![0u8; w * h * 3];
    out.par_chunks_mut(3 * w).enumerate().for_each(|(v, row)| {
        let zg = ground_plane_depth(cam, setup.height, far, v as f64);
        for u in 0..w {
            let ray = cam.ray(u as f64, v as f64);
            let dir_v = inv.rotation * ray;
            let (o, d) = to_world(pose, inv.translation, dir_v);
            // Optical-axis depth equals the ray parameter because ray.z = 1.
            let g = match cast(&o, &d, &near_poles, zg.min(far)) {
                Some((_, albedo)) => albedo,
                None => sky_texture(&d),
            };
            row[3 * u..3 * u + 3].copy_from_slice(&shade(g));
        }
    });
    out
}

/// Renders one sweep: one ray per grid cell, points in the sensor frame.
pub fn render_lidar(setup: &LidarSetup, pose: &Pose2, poles: &[Pole]) -> Vec<LidarPoint> {
    let grid = setup.model.grid();
    let near_poles = nearby(poles, pose, setup.max_range);
    let origin = Vector3::new(0.0, 0.0, setup.height);
    let rows: Vec<Vec<LidarPoint>> = (0..grid.rows)
        .into_par_iter()
        .map(|r| {
            let beta = grid.beta(r);
            let mut pts = Vec::new();
            for c in 0..grid.cols {
                let alpha = grid.alpha(c);
                let dir = Vector3::new(beta.cos() * alpha.cos(), beta.cos() * alpha.sin(), beta.sin());
                let (o, d) = to_world(pose, origin, dir);
                if let Some((t, albedo)) = cast(&o, &d, &near_poles, setup.max_range) {
                    let p = dir * t;
                    pts.push(LidarPoint::new(p.x, p.y, p.z, albedo));
                }
            }
            pts
        })
        .collect();
    rows.into_iter().flatten().collect()
}
