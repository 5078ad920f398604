use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{ContrastModel, Event, EventArray, IntensityFrame, LUMINANCE_FLOOR};
use crate::error::{Error, Result};

/// Slack on the threshold comparison, in log-intensity units. Without it a
/// ramp of exactly `k * c` loses its last event to rounding in the
/// accumulated reference level.
const CROSSING_TOLERANCE: f64 = 1e-9;

/// Thresholded log-intensity change detector run over a sequence of frames.
///
/// Each pixel keeps a reference level starting at its first log intensity.
/// Whenever the current level differs from the reference by at least the
/// threshold `c`, an event with the sign of the difference is emitted at
/// the linearly interpolated crossing time and the reference moves by
/// `+-c`. A fresh `c` is drawn after every crossing. Randomness is
/// per pixel (one ChaCha stream each), so the result does not depend on
/// scheduling.
pub fn generate_events(frames: &[IntensityFrame], contrast: &ContrastModel) -> Result<EventArray> {
    contrast.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidArgument("event generation needs at least two frames".into()));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    if w > u16::MAX as usize + 1 || h > u16::MAX as usize + 1 {
        return Err(Error::InvalidArgument("frame too large for 16-bit event coordinates".into()));
    }
    for (k, f) in frames.iter().enumerate() {
        if f.width != w || f.height != h || f.data.len() != w * h {
            return Err(Error::DimensionMismatch(format!("frame {k} differs in size")));
        }
        if k > 0 && !(f.timestamp > frames[k - 1].timestamp) {
            return Err(Error::validation("frame timestamps must be strictly increasing", Some(k)));
        }
    }
    let normal = Normal::new(contrast.mu, contrast.sigma)
        .map_err(|e| Error::InvalidArgument(format!("contrast distribution: {e}")))?;
    let log = |v: f64| v.max(LUMINANCE_FLOOR).ln();

    let rows: Vec<Vec<Event>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            let mut levels = vec![0.0; frames.len()];
            for u in 0..w {
                let k = v * w + u;
                for (l, f) in levels.iter_mut().zip(frames) {
                    *l = log(f.data[k]);
                }
                if levels.iter().all(|l| *l == levels[0]) {
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(contrast.seed);
                rng.set_stream(k as u64);
                let mut draw = || normal.sample(&mut rng).max(contrast.c_min);
                let mut reference = levels[0];
                let mut c = draw();
                for s in 1..frames.len() {
                    let (l0, l1) = (levels[s - 1], levels[s]);
                    let (t0, t1) = (frames[s - 1].timestamp, frames[s].timestamp);
                    loop {
                        let diff = l1 - reference;
                        if diff.abs() < c - CROSSING_TOLERANCE {
                            break;
                        }
                        let rho = if diff > 0.0 { 1.0 } else { -1.0 };
                        let level = reference + rho * c;
                        let frac = if l1 != l0 { ((level - l0) / (l1 - l0)).clamp(0.0, 1.0) } else { 1.0 };
                        out.push(Event { u: u as u16, v: v as u16, t: t0 + frac * (t1 - t0), polarity: rho as i8 });
                        reference = level;
                        c = draw();
                    }
                }
            }
            out
        })
        .collect();
    let mut events = EventArray { events: rows.into_iter().flatten().collect() };
    events.sort(w);
    Ok(events)
}
