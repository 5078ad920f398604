use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, MAX_CURVATURE};
use crate::trace::Trace;

/// Speed-scaled lookahead: `L_d = clamp(k_dd * v, min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurePursuitParams {
    /// Seconds.
    pub k_dd: f64,
    pub min_lookahead: f64,
    pub max_lookahead: f64,
}

impl Default for PurePursuitParams {
    fn default() -> Self {
        Self { k_dd: 0.3, min_lookahead: 3.0, max_lookahead: 15.0 }
    }
}

impl PurePursuitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_dd > 0.0 && self.min_lookahead > 0.0 && self.min_lookahead <= self.max_lookahead) {
            return Err(Error::InvalidArgument("pure pursuit needs k_dd > 0 and 0 < min <= max lookahead".into()));
        }
        Ok(())
    }

    pub fn lookahead(&self, speed: f64) -> f64 {
        (self.k_dd * speed).clamp(self.min_lookahead, self.max_lookahead)
    }
}

/// Curvature steering `pose` onto the centerline point `L_d` past arc
/// length `along`: `2 y_t / L_d^2`, with `y_t` the target's lateral offset
/// in the vehicle frame. Targets past the end use the final point.
pub fn pure_pursuit(trace: &Trace, pose: &Pose2, along: f64, speed: f64, params: &PurePursuitParams) -> f64 {
    let ld = params.lookahead(speed);
    let target = trace.centerline_point((along + ld).min(trace.length()));
    let (_, yt) = pose.to_local(target.x, target.y);
    (2.0 * yt / (ld * ld)).clamp(-MAX_CURVATURE, MAX_CURVATURE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{CurvatureProfile, SyntheticTrace};

    fn straight() -> Trace {
        SyntheticTrace::bare(CurvatureProfile::Straight, 100.0).build().unwrap()
    }

    #[test]
    fn aligned_on_centerline_is_zero() {
        let t = straight();
        assert_eq!(pure_pursuit(&t, &Pose2::new(20.0, 0.0, 0.0), 20.0, 10.0, &PurePursuitParams::default()), 0.0);
    }

    #[test]
    fn one_meter_left_with_ten_meter_lookahead() {
        let t = straight();
        let p = PurePursuitParams { k_dd: 1.0, min_lookahead: 10.0, max_lookahead: 10.0 };
        let k = pure_pursuit(&t, &Pose2::new(20.0, 1.0, 0.0), 20.0, 10.0, &p);
        assert!((k + 0.02).abs() < 1e-12, "{k}");
    }

    #[test]
    fn lookahead_is_clamped() {
        let p = PurePursuitParams { k_dd: 0.5, min_lookahead: 4.0, max_lookahead: 12.0 };
        assert_eq!(p.lookahead(2.0), 4.0);
        assert_eq!(p.lookahead(10.0), 5.0);
        assert_eq!(p.lookahead(40.0), 12.0);
        assert!(PurePursuitParams { k_dd: 0.5, min_lookahead: 5.0, max_lookahead: 4.0 }.validate().is_err());
    }

    #[test]
    fn output_is_clamped_and_uses_final_point() {
        let t = straight();
        let k = pure_pursuit(&t, &Pose2::new(20.0, 0.0, 1.5), 20.0, 1.0, &PurePursuitParams::default());
        assert_eq!(k, -MAX_CURVATURE);
        // Near the end the target is the last centerline point.
        let end = t.length();
        let k = pure_pursuit(&t, &Pose2::new(end - 1.0, 0.5, 0.0), end - 1.0, 10.0, &PurePursuitParams::default());
        assert!(k < 0.0);
    }

    #[test]
    fn circle_chord_geometry() {
        // On a circle of curvature c, the point L ahead along the arc has
        // lateral offset (1 - cos(c L)) / c, so the command is
        // 2 (1 - cos(c L)) / (c L^2), which tends to c for small c L.
        let c = 0.02;
        let t = SyntheticTrace::bare(CurvatureProfile::Circle { curvature: c }, 200.0).build().unwrap();
        let p = PurePursuitParams::default();
        let s = 50.0;
        let r = 1.0 / c;
        let pose = Pose2::new(r * (s / r).sin(), r * (1.0 - (s / r).cos()), s / r);
        let ld = p.lookahead(10.0);
        let expect = 2.0 * (1.0 - (c * ld).cos()) / (c * ld * ld);
        let got = pure_pursuit(&t, &pose, s, 10.0, &p);
        assert!((got - expect).abs() < 2e-4, "{got} vs {expect}");
        assert!((got - c).abs() < 1e-3);
    }
}
