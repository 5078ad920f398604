use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FlowField, IntensityFrame};
use crate::camera::bilinear;
use crate::error::{Error, Result};

/// Intermediate flows toward both endpoints at normalized time `tau`,
/// under a locally linear motion assumption:
/// `F_t1 = -(1 - tau) tau F12 + tau^2 F21`,
/// `F_t2 = (1 - tau)^2 F12 - tau (1 - tau) F21`.
pub fn compose_flow(f12: &FlowField, f21: &FlowField, tau: f64) -> Result<(FlowField, FlowField)> {
    f12.check_same(f21)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside [0, 1]")));
    }
    let s = 1.0 - tau;
    let (a1, b1) = (-s * tau, tau * tau);
    let (a2, b2) = (s * s, -tau * s);
    let mut to1 = Vec::with_capacity(f12.data.len());
    let mut to2 = Vec::with_capacity(f12.data.len());
    for (f, g) in f12.data.iter().zip(&f21.data) {
        to1.push([a1 * f[0] + b1 * g[0], a1 * f[1] + b1 * g[1]]);
        to2.push([a2 * f[0] + b2 * g[0], a2 * f[1] + b2 * g[1]]);
    }
    Ok((
        FlowField { width: f12.width, height: f12.height, data: to1 },
        FlowField { width: f12.width, height: f12.height, data: to2 },
    ))
}

#[inline]
fn inside(w: usize, h: usize, u: f64, v: f64) -> bool {
    const SLACK: f64 = 1e-6;
    u >= -SLACK && v >= -SLACK && u <= (w - 1) as f64 + SLACK && v <= (h - 1) as f64 + SLACK
}

/// Blends backward warps of both endpoint frames:
/// `(1 - tau) I1(p + F_t1) + tau I2(p + F_t2)` with bilinear sampling. A
/// pixel whose sample point leaves one source uses the other one alone;
/// when both leave, the unwarped blend is used.
pub fn interpolate_frame(
    i1: &IntensityFrame,
    i2: &IntensityFrame,
    f_t1: &FlowField,
    f_t2: &FlowField,
    tau: f64,
) -> Result<IntensityFrame> {
    let (w, h) = (i1.width, i1.height);
    if i2.width != w || i2.height != h || f_t1.width != w || f_t1.height != h || f_t2.width != w || f_t2.height != h {
        return Err(Error::DimensionMismatch("frames and flows must share dimensions".into()));
    }
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, out) in row.iter_mut().enumerate() {
            let k = v * w + u;
            let [a, b] = f_t1.data[k];
            let [c, d] = f_t2.data[k];
            let (x1, y1) = (u as f64 + a, v as f64 + b);
            let (x2, y2) = (u as f64 + c, v as f64 + d);
            let in1 = inside(w, h, x1, y1);
            let in2 = inside(w, h, x2, y2);
            *out = match (in1, in2) {
                (true, true) => {
                    (1.0 - tau) * bilinear(w, h, x1, y1, |x, y| i1.at(x, y))
                        + tau * bilinear(w, h, x2, y2, |x, y| i2.at(x, y))
                }
                (true, false) => bilinear(w, h, x1, y1, |x, y| i1.at(x, y)),
                (false, true) => bilinear(w, h, x2, y2, |x, y| i2.at(x, y)),
                (false, false) => (1.0 - tau) * i1.data[k] + tau * i2.data[k],
            };
        }
    });
    Ok(IntensityFrame {
        width: w,
        height: h,
        data,
        timestamp: i1.timestamp + tau * (i2.timestamp - i1.timestamp),
    })
}

/// How the substep count follows the peak flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SubstepRule {
    /// `ceil(peak)`: at most about one pixel of motion per substep.
    #[default]
    CeilPeak,
    /// `ceil(peak - 1)`, the literal reading of the divisor.
    PeakMinusOne,
}

/// Upper bound on the work per frame pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstepCap {
    /// At most this many substeps.
    Count(u32),
    /// Substeps no shorter than this many seconds.
    MinInterval(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstepConfig {
    pub rule: SubstepRule,
    pub cap: SubstepCap,
}

impl SubstepConfig {
    pub fn with_max(n_max: u32) -> Self {
        Self { rule: SubstepRule::CeilPeak, cap: SubstepCap::Count(n_max) }
    }
}

impl Default for SubstepConfig {
    fn default() -> Self {
        Self::with_max(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubstepSchedule {
    pub n: u32,
    pub dt: f64,
    pub n_max: u32,
}

/// Substep schedule for a given peak flow (pixels) over `interval` seconds.
pub fn substep_schedule(peak: f64, interval: f64, config: &SubstepConfig) -> Result<SubstepSchedule> {
    if !(interval > 0.0) {
        return Err(Error::InvalidArgument(format!("frame interval {interval} must be positive")));
    }
    let n_max = match config.cap {
        SubstepCap::Count(n) => n,
        SubstepCap::MinInterval(dt) => {
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("minimum substep interval must be positive".into()));
            }
            (interval / dt).floor().clamp(1.0, u32::MAX as f64) as u32
        }
    };
    if n_max < 1 {
        return Err(Error::InvalidArgument("substep cap must be at least 1".into()));
    }
    let raw = match config.rule {
        SubstepRule::CeilPeak => peak.ceil(),
        SubstepRule::PeakMinusOne => (peak - 1.0).ceil(),
    };
    let raw = if raw.is_nan() { 1.0 } else { raw };
    let n = raw.clamp(1.0, n_max as f64) as u32;
    Ok(SubstepSchedule { n, dt: interval / n as f64, n_max })
}

/// Substep count from the larger of the two flows' peak magnitudes.
pub fn adaptive_substeps(
    f12: &FlowField,
    f21: &FlowField,
    interval: f64,
    config: &SubstepConfig,
) -> Result<SubstepSchedule> {
    f12.check_same(f21)?;
    let peak = f12.max_magnitude().max(f21.max_magnitude());
    substep_schedule(peak, interval, config)
}
