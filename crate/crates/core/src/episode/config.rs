use serde::{Deserialize, Serialize};

use super::control::PurePursuitParams;
use crate::error::{Error, Result};
use crate::event::{GenerationSpace, SubstepConfig};
use crate::lidar::CullParams;
use crate::trace::SensorKind;

/// Symmetric half-widths of the uniform initial offset from the centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitRange {
    /// Meters.
    pub lateral: f64,
    /// Radians.
    pub yaw: f64,
}

impl InitRange {
    pub const ZERO: InitRange = InitRange { lateral: 0.0, yaw: 0.0 };

    /// +-2 m and +-30 degrees.
    pub fn robustness() -> Self {
        Self { lateral: 2.0, yaw: 30f64.to_radians() }
    }
}

impl Default for InitRange {
    fn default() -> Self {
        Self { lateral: 1.0, yaw: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedPolicy {
    /// Recorded speed at the agent's arc length.
    #[default]
    ReplayTrace,
    Constant(f64),
}

/// Which state the sample observation is rendered at when branching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ObserveMode {
    /// Before the random branch step (the literal loop order).
    #[default]
    BeforeBranch,
    /// After the random branch step, paired with its corrective label.
    AfterBranch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventObsConfig {
    pub mu: f64,
    pub sigma: f64,
    pub space: GenerationSpace,
    pub substeps: SubstepConfig,
}

impl Default for EventObsConfig {
    fn default() -> Self {
        Self { mu: 0.2, sigma: 0.03, space: GenerationSpace::Event, substeps: SubstepConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub sensor: SensorKind,
    /// Seconds per step.
    pub dt: f64,
    pub init: InitRange,
    /// Lateral deviation that ends an episode as a crash, meters.
    pub crash_threshold: f64,
    pub speed: SpeedPolicy,
    pub branching: bool,
    pub observe: ObserveMode,
    /// Rejection-sample labels toward a uniform histogram.
    pub balance: bool,
    /// Samples held by the shuffle buffer before each drain.
    pub buffer_capacity: usize,
    pub pursuit: PurePursuitParams,
    /// Trace tail excluded from reset positions, meters.
    pub end_margin: f64,
    /// Far plane of the RGB proxy scene, meters.
    pub camera_far: f64,
    pub cull: CullParams,
    pub event: EventObsConfig,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            sensor: SensorKind::Rgb,
            dt: 1.0 / 30.0,
            init: InitRange::default(),
            crash_threshold: 2.0,
            speed: SpeedPolicy::default(),
            branching: true,
            observe: ObserveMode::default(),
            balance: true,
            buffer_capacity: 256,
            pursuit: PurePursuitParams::default(),
            end_margin: 50.0,
            camera_far: 80.0,
            cull: CullParams::default(),
            event: EventObsConfig::default(),
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.crash_threshold > 0.0) {
            return bad("crash threshold must be positive");
        }
        if !(self.init.lateral >= 0.0 && self.init.yaw >= 0.0) {
            return bad("init ranges must be nonnegative");
        }
        if !(self.end_margin >= 0.0) {
            return bad("end margin must be nonnegative");
        }
        if !(self.camera_far > 0.0) {
            return bad("camera far plane must be positive");
        }
        if let SpeedPolicy::Constant(v) = self.speed {
            if !(v >= 0.0 && v.is_finite()) {
                return bad("constant speed must be nonnegative");
            }
        }
        if self.buffer_capacity == 0 {
            return bad("buffer capacity must be positive");
        }
        self.pursuit.validate()?;
        self.cull.validate()
    }

    /// Applies a JSON object of field overrides on top of this config.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let serde_json::Value::Object(patch) = overrides else {
            return Err(Error::InvalidArgument("config overrides must be an object".into()));
        };
        let obj = base.as_object_mut().expect("config is an object");
        for (k, v) in patch {
            obj.insert(k.clone(), v.clone());
        }
        let out: Self = serde_json::from_value(base).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        out.validate()?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = EpisodeConfig::default();
        c.validate().unwrap();
        let back: EpisodeConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.crash_threshold, 2.0);
    }

    #[test]
    fn overrides_replace_fields() {
        let c = EpisodeConfig::default()
            .with_overrides(&serde_json::json!({"seed": 9, "sensor": "lidar", "speed": {"constant": 4.0}}))
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.sensor, SensorKind::Lidar);
        assert_eq!(c.speed, SpeedPolicy::Constant(4.0));
        assert!(EpisodeConfig::default().with_overrides(&serde_json::json!({"dt": -1.0})).is_err());
        assert!(EpisodeConfig::default().with_overrides(&serde_json::json!({"bogus": 1})).is_err());
        assert!(EpisodeConfig::default().with_overrides(&serde_json::json!([1])).is_err());
    }

    #[test]
    fn robustness_envelope() {
        let r = InitRange::robustness();
        assert_eq!(r.lateral, 2.0);
        assert!((r.yaw - std::f64::consts::PI / 6.0).abs() < 1e-15);
    }
}
