//! Rigid-body transforms and the planar vehicle motion model.
//!
//! Frame convention everywhere in the crate: vehicle frame has x forward,
//! y left, z up, and yaw is counterclockwise about z. Camera optical frames
//! use x right, y down, z forward.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::{LidarPoint, PointCloud};
use crate::error::{Error, Result};

/// Largest curvature magnitude the vehicle can command, 1/m.
pub const MAX_CURVATURE: f64 = 0.3;

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Expresses a world point in this pose's vehicle frame.
    pub fn to_local(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        let dx = wx - self.x;
        let dy = wy - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Maps a point in this pose's vehicle frame to world coordinates.
    pub fn to_world(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = self.yaw.sin_cos();
        (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
    }

    /// Composes a local offset `(dx, dy, dyaw)` expressed in this pose's frame.
    pub fn compose(&self, dx: f64, dy: f64, dyaw: f64) -> Pose2 {
        let (x, y) = self.to_world(dx, dy);
        Pose2::new(x, y, wrap_angle(self.yaw + dyaw))
    }

    /// Vehicle-to-world transform in 3D (z unchanged).
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw).matrix(),
            translation: Vector3::new(self.x, self.y, 0.0),
        }
    }
}

/// Proper rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn from_yaw(yaw: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform from a row-major homogeneous 4x4 matrix, checking
    /// that the rotation block is orthonormal with determinant one.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self> {
        if m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0 {
            return Err(Error::validation(
                "extrinsic bottom row must be [0, 0, 0, 1]",
                None,
            ));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let t = Self {
            rotation,
            translation: Vector3::new(m[3], m[7], m[11]),
        };
        t.check_orthonormal(1e-9)?;
        Ok(t)
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn check_orthonormal(&self, tol: f64) -> Result<()> {
        let gram = self.rotation.transpose() * self.rotation;
        let off = (gram - Matrix3::identity()).abs().max();
        let det = self.rotation.determinant();
        if off > tol || (det - 1.0).abs() > tol || !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation(
                format!("rotation not orthonormal (|RtR - I| = {off:e}, det = {det})"),
                None,
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

/// Kinematic state of the virtual vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: Pose2,
    /// m/s, never negative.
    pub speed: f64,
    /// Last commanded curvature, 1/m.
    pub curvature: f64,
    /// Simulation time, seconds.
    pub time: f64,
    /// Monotone arc-length cursor along the recorded centerline, meters.
    pub cursor: f64,
}

/// Advances the vehicle along a constant-curvature arc for `dt` seconds.
///
/// The arc is integrated in closed form, so one step of `dt` is identical to
/// two steps of `dt / 2` up to rounding. Out-of-range commands are clamped.
pub fn step_bicycle(state: &AgentState, curvature_cmd: f64, speed_cmd: f64, dt: f64) -> AgentState {
    let kappa = if curvature_cmd.is_finite() {
        curvature_cmd.clamp(-MAX_CURVATURE, MAX_CURVATURE)
    } else {
        0.0
    };
    let speed = if speed_cmd.is_finite() { speed_cmd.max(0.0) } else { 0.0 };
    let dt = if dt.is_finite() { dt.max(0.0) } else { 0.0 };

    let s = speed * dt;
    let dyaw = s * kappa;
    let half = 0.5 * dyaw;
    // Chord length of the arc; straight-line limit below the threshold.
    let chord = if kappa.abs() < 1e-9 || half == 0.0 {
        s
    } else {
        s * half.sin() / half
    };
    let heading = state.pose.yaw + half;
    AgentState {
        pose: Pose2 {
            x: state.pose.x + chord * heading.cos(),
            y: state.pose.y + chord * heading.sin(),
            yaw: wrap_angle(state.pose.yaw + dyaw),
        },
        speed,
        curvature: kappa,
        time: state.time + dt,
        cursor: state.cursor,
    }
}

/// Transform taking points in the recorded frame's sensor coordinates into
/// the virtual agent's sensor coordinates.
pub fn relative_transform(
    agent_pose: &Pose2,
    frame_pose: &Pose2,
    sensor_extrinsic: &RigidTransform,
) -> RigidTransform {
    // sensor(frame) -> vehicle(frame) -> world -> vehicle(agent) -> sensor(agent)
    let world_to_agent = agent_pose.to_transform().inverse();
    let frame_to_world = frame_pose.to_transform();
    sensor_extrinsic
        .compose(&world_to_agent)
        .compose(&frame_to_world)
        .compose(&sensor_extrinsic.inverse())
}

/// Applies `R p + t` to every point; intensity is untouched.
pub fn apply_rigid(t: &RigidTransform, points: &PointCloud) -> PointCloud {
    points
        .iter()
        .map(|p| {
            let q = t.apply(&Vector3::new(p.x, p.y, p.z));
            LidarPoint {
                x: q.x,
                y: q.y,
                z: q.z,
                intensity: p.intensity,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn straight_step() {
        let s = step_bicycle(&AgentState::default(), 0.0, 10.0, 0.1);
        assert_close(s.pose.x, 1.0, 1e-12);
        assert_close(s.pose.y, 0.0, 1e-12);
        assert_close(s.pose.yaw, 0.0, 1e-12);
        assert_close(s.time, 0.1, 1e-15);
    }

    #[test]
    fn arc_step_matches_circle() {
        // R = 20 m, arc of 1 m: x = R sin(0.05), y = R (1 - cos(0.05)).
        let s = step_bicycle(&AgentState::default(), 0.05, 10.0, 0.1);
        let r = 20.0;
        assert_close(s.pose.x, r * 0.05f64.sin(), 1e-12);
        assert_close(s.pose.y, r * (1.0 - 0.05f64.cos()), 1e-12);
        assert_close(s.pose.x, 0.999583, 1e-6);
        assert_close(s.pose.y, 0.024995, 1e-6);
        assert_close(s.pose.yaw, 0.05, 1e-15);
    }

    #[test]
    fn full_circle_returns_home() {
        let kappa = 0.05;
        let total = TAU / kappa;
        let steps = 1000;
        let speed = 10.0;
        let dt = total / speed / steps as f64;
        let mut s = AgentState::default();
        for _ in 0..steps {
            s = step_bicycle(&s, kappa, speed, dt);
        }
        assert!(s.pose.x.abs() < 1e-6 && s.pose.y.abs() < 1e-6, "{:?}", s.pose);
        assert!(wrap_angle(s.pose.yaw).abs() < 1e-6);
    }

    #[test]
    fn commands_are_clamped() {
        let s = step_bicycle(&AgentState::default(), 5.0, -3.0, 0.1);
        assert_eq!(s.curvature, MAX_CURVATURE);
        assert_eq!(s.speed, 0.0);
        assert_eq!(s.pose, Pose2::default());
    }

    #[test]
    fn relative_transform_identity_when_coincident() {
        let p = Pose2::new(3.0, -2.0, 0.7);
        let e = RigidTransform {
            rotation: *Rotation3::from_euler_angles(0.1, -0.2, 0.3).matrix(),
            translation: Vector3::new(1.0, 0.5, 1.8),
        };
        let t = relative_transform(&p, &p, &e);
        assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn agent_left_of_frame_sees_points_to_the_right() {
        let frame = Pose2::new(0.0, 0.0, 0.0);
        let agent = Pose2::new(0.0, 1.0, 0.0);
        let t = relative_transform(&agent, &frame, &RigidTransform::identity());
        assert!((t.translation - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn agent_yawed_left_rotates_points_right() {
        let frame = Pose2::new(2.0, 1.0, 0.3);
        let agent = Pose2::new(2.0, 1.0, 0.3 + FRAC_PI_2);
        let t = relative_transform(&agent, &frame, &RigidTransform::identity());
        let expect = RigidTransform::from_yaw(-FRAC_PI_2);
        assert!((t.rotation - expect.rotation).abs().max() < 1e-12);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn apply_rigid_translates_and_keeps_intensity() {
        let cloud = vec![LidarPoint { x: 0.0, y: 0.0, z: 0.0, intensity: 5.0 }];
        let out = apply_rigid(&RigidTransform::from_translation(1.0, 0.0, 0.0), &cloud);
        assert_eq!(out[0], LidarPoint { x: 1.0, y: 0.0, z: 0.0, intensity: 5.0 });
        assert_eq!(apply_rigid(&RigidTransform::identity(), &cloud), cloud);
    }

    #[test]
    fn row_major_roundtrip_and_rejects_shear() {
        let t = RigidTransform {
            rotation: *Rotation3::from_euler_angles(0.3, 0.2, -1.0).matrix(),
            translation: Vector3::new(1.0, 2.0, 3.0),
        };
        let back = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(back, t);
        let mut m = t.to_row_major();
        m[1] += 1e-6;
        assert!(RigidTransform::from_row_major(&m).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_close(wrap_angle(PI), PI, 0.0);
        assert_close(wrap_angle(-PI), PI, 1e-15);
        assert_close(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, 1e-12);
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (-3.2..3.2f64, -1.5..1.5f64, -3.2..3.2f64, prop::array::uniform3(-50.0..50.0f64)).prop_map(
            |(r, p, y, t)| RigidTransform {
                rotation: *Rotation3::from_euler_angles(r, p, y).matrix(),
                translation: Vector3::new(t[0], t[1], t[2]),
            },
        )
    }

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        prop::collection::vec(
            (prop::array::uniform3(-80.0..80.0f64), 0.0..255.0f64).prop_map(|(p, i)| LidarPoint {
                x: p[0],
                y: p[1],
                z: p[2],
                intensity: i,
            }),
            2..40,
        )
    }

    proptest! {
        #[test]
        fn rigid_inverse_roundtrip(t in arb_transform(), cloud in arb_cloud()) {
            let back = apply_rigid(&t.inverse(), &apply_rigid(&t, &cloud));
            for (a, b) in cloud.iter().zip(&back) {
                prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9 && (a.z - b.z).abs() < 1e-9);
                prop_assert_eq!(a.intensity, b.intensity);
            }
        }

        #[test]
        fn rigid_preserves_distances(t in arb_transform(), cloud in arb_cloud()) {
            let moved = apply_rigid(&t, &cloud);
            for i in 0..cloud.len() {
                for j in (i + 1)..cloud.len() {
                    let d0 = cloud[i].distance(&cloud[j]);
                    let d1 = moved[i].distance(&moved[j]);
                    prop_assert!((d0 - d1).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn bicycle_step_splits(x in -100.0..100.0f64, y in -100.0..100.0f64, yaw in -3.1..3.1f64,
                               k in -0.3..0.3f64, v in 0.0..30.0f64, dt in 0.001..0.5f64) {
            let s0 = AgentState { pose: Pose2::new(x, y, yaw), ..Default::default() };
            let one = step_bicycle(&s0, k, v, dt);
            let two = step_bicycle(&step_bicycle(&s0, k, v, dt / 2.0), k, v, dt / 2.0);
            prop_assert!((one.pose.x - two.pose.x).abs() < 1e-9);
            prop_assert!((one.pose.y - two.pose.y).abs() < 1e-9);
            prop_assert!(wrap_angle(one.pose.yaw - two.pose.yaw).abs() < 1e-9);
        }

        #[test]
        fn relative_transform_of_same_pose_is_identity(x in -100.0..100.0f64, y in -100.0..100.0f64,
                                                       yaw in -3.1..3.1f64, e in arb_transform()) {
            let p = Pose2::new(x, y, yaw);
            let t = relative_transform(&p, &p, &e);
            prop_assert!((t.rotation - Matrix3::identity()).abs().max() < 1e-9);
            prop_assert!(t.translation.norm() < 1e-9);
        }
    }
}
