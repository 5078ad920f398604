//! Time, arc-length and nearest-frame lookups on a loaded trace.

use serde::{Deserialize, Serialize};

use super::{SensorKind, Trace};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2};

/// Half-width of the arc-length window searched around the agent cursor.
const FRAME_WINDOW: f64 = 20.0;
const SEGMENT_WINDOW: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRef {
    pub kind: SensorKind,
    pub stream: String,
    pub index: usize,
    pub timestamp: f64,
    /// Interpolated vehicle pose at the frame timestamp.
    pub pose: Pose2,
    /// Planar distance from the query position to `pose`.
    pub distance: f64,
}

/// Per-episode search position in one sensor stream. Only moves forward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCursor {
    pub start: usize,
}

/// Signed offset from the centerline: `lateral` is positive to the left of
/// the direction of travel, `along` is the arc length of the foot point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub lateral: f64,
    pub along: f64,
}

impl Trace {
    /// Vehicle pose at time `t`: linear in position, shortest-path in yaw.
    pub fn pose_at_time(&self, t: f64) -> Result<Pose2> {
        let (t0, t1) = self.time_range();
        if !(t >= t0 && t <= t1) {
            return Err(Error::TimeOutOfRange { t, start: t0, end: t1 });
        }
        let (i, f) = self.time_segment(t);
        let a = &self.odometry[i].pose;
        let b = &self.odometry[(i + 1).min(self.odometry.len() - 1)].pose;
        Ok(Pose2::new(
            a.x + (b.x - a.x) * f,
            a.y + (b.y - a.y) * f,
            wrap_angle(a.yaw + wrap_angle(b.yaw - a.yaw) * f),
        ))
    }

    /// Centerline arc length at time `t`, clamped to the trace.
    pub fn arc_at_time(&self, t: f64) -> f64 {
        let (i, f) = self.time_segment(t);
        let a = self.odometry[i].arc_length;
        let b = self.odometry[(i + 1).min(self.odometry.len() - 1)].arc_length;
        a + (b - a) * f
    }

    /// Segment index and fraction containing `t` (clamped).
    fn time_segment(&self, t: f64) -> (usize, f64) {
        let n = self.odometry.len();
        let i = self.odometry.partition_point(|r| r.t <= t).clamp(1, n - 1) - 1;
        let (ta, tb) = (self.odometry[i].t, self.odometry[i + 1].t);
        (i, ((t - ta) / (tb - ta)).clamp(0.0, 1.0))
    }

    /// Segment index and fraction containing arc length `s` (clamped),
    /// skipping zero-length segments.
    fn arc_segment(&self, s: f64) -> (usize, f64) {
        let n = self.odometry.len();
        let mut i = self.odometry.partition_point(|r| r.arc_length <= s).clamp(1, n - 1) - 1;
        while i + 2 < n && self.segment_len(i) == 0.0 {
            i += 1;
        }
        while i > 0 && self.segment_len(i) == 0.0 {
            i -= 1;
        }
        let len = self.segment_len(i);
        let f = if len > 0.0 { ((s - self.odometry[i].arc_length) / len).clamp(0.0, 1.0) } else { 0.0 };
        (i, f)
    }

    fn segment_len(&self, i: usize) -> f64 {
        self.odometry[i + 1].arc_length - self.odometry[i].arc_length
    }

    /// Centerline point at arc length `s`, clamped to the trace ends. The
    /// yaw is the direction of the containing segment.
    pub fn centerline_point(&self, s: f64) -> Pose2 {
        let (i, f) = self.arc_segment(s);
        let a = &self.odometry[i].pose;
        let b = &self.odometry[i + 1].pose;
        let yaw = if self.segment_len(i) > 0.0 { (b.y - a.y).atan2(b.x - a.x) } else { a.yaw };
        Pose2::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f, yaw)
    }

    /// Recorded speed and curvature at arc length `s`, linearly interpolated.
    pub fn controls_at_arc(&self, s: f64) -> (f64, f64) {
        let (i, f) = self.arc_segment(s);
        let a = &self.odometry[i];
        let b = &self.odometry[i + 1];
        (a.speed + (b.speed - a.speed) * f, a.curvature + (b.curvature - a.curvature) * f)
    }

    /// Signed deviation from the recorded centerline, searching all segments.
    pub fn centerline_deviation(&self, pose: &Pose2) -> Result<Deviation> {
        self.deviation_in(pose, 0, self.odometry.len() - 1)
    }

    /// Like [`Trace::centerline_deviation`] but only considers segments
    /// within a fixed arc-length window of `hint`.
    pub fn centerline_deviation_near(&self, pose: &Pose2, hint: f64) -> Result<Deviation> {
        let lo = self.odometry.partition_point(|r| r.arc_length < hint - SEGMENT_WINDOW).saturating_sub(1);
        let hi = self.odometry.partition_point(|r| r.arc_length <= hint + SEGMENT_WINDOW).min(self.odometry.len() - 1);
        self.deviation_in(pose, lo, hi.max(lo + 1))
    }

    /// Projects onto segments `lo..hi` (segment `i` joins rows `i` and `i+1`).
    fn deviation_in(&self, pose: &Pose2, lo: usize, hi: usize) -> Result<Deviation> {
        let last_seg = (0..self.odometry.len() - 1).rev().find(|&i| self.segment_len(i) > 0.0);
        let first_seg = (0..self.odometry.len() - 1).find(|&i| self.segment_len(i) > 0.0);
        let (Some(first_seg), Some(last_seg)) = (first_seg, last_seg) else {
            // Stationary trace: everything is measured from the single point.
            let p = &self.odometry[0].pose;
            let (_, ly) = p.to_local(pose.x, pose.y);
            return Ok(Deviation { lateral: ly, along: 0.0 });
        };
        // (segment, raw parameter, distance, cross)
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for i in lo..hi {
            let len = self.segment_len(i);
            if len <= 0.0 {
                continue;
            }
            let a = &self.odometry[i].pose;
            let b = &self.odometry[i + 1].pose;
            let (dx, dy) = ((b.x - a.x) / len, (b.y - a.y) / len);
            let (qx, qy) = (pose.x - a.x, pose.y - a.y);
            let u = qx * dx + qy * dy;
            let uc = u.clamp(0.0, len);
            let (fx, fy) = (qx - uc * dx, qy - uc * dy);
            let dist = fx.hypot(fy);
            let cross = dx * qy - dy * qx;
            if best.is_none_or(|b| dist < b.2) {
                best = Some((i, u, dist, cross));
            }
        }
        let Some((i, u, dist, cross)) = best else {
            return Err(Error::InvalidArgument("empty segment window".into()));
        };
        let len = self.segment_len(i);
        if i == last_seg && u > len {
            return Err(Error::EndOfTrace);
        }
        if i == first_seg && u < 0.0 {
            // Before the first record: measure against the extended first segment.
            return Ok(Deviation { lateral: cross, along: 0.0 });
        }
        let lateral = if cross < 0.0 { -dist } else { dist };
        Ok(Deviation { lateral, along: self.odometry[i].arc_length + u.clamp(0.0, len) })
    }

    /// Frame of `kind` whose vehicle pose is closest to `pose`, searching the
    /// whole stream. Ties go to the earlier frame.
    pub fn nearest_frame(&self, pose: &Pose2, kind: SensorKind) -> Result<FrameRef> {
        let stream = self.stream(kind).ok_or(Error::MissingSensor(kind.as_str()))?;
        if stream.is_empty() {
            return Err(Error::EmptyStream(stream.name.clone()));
        }
        Ok(self.best_frame(kind, pose, 0..stream.len()))
    }

    /// Nearest frame restricted to a window around arc length `arc`. The
    /// cursor is advanced past frames that fall behind the window and is
    /// never moved backwards.
    pub fn nearest_frame_windowed(
        &self,
        cursor: &mut FrameCursor,
        pose: &Pose2,
        kind: SensorKind,
        arc: f64,
    ) -> Result<FrameRef> {
        let stream = self.stream(kind).ok_or(Error::MissingSensor(kind.as_str()))?;
        let n = stream.len();
        if n == 0 {
            return Err(Error::EmptyStream(stream.name.clone()));
        }
        let mut start = cursor.start.min(n - 1);
        while start + 1 < n && stream.frame_arc(start) < arc - FRAME_WINDOW {
            start += 1;
        }
        cursor.start = start;
        let mut end = start + 1;
        while end < n && stream.frame_arc(end) <= arc + FRAME_WINDOW {
            end += 1;
        }
        Ok(self.best_frame(kind, pose, start..end))
    }

    fn best_frame(&self, kind: SensorKind, pose: &Pose2, range: std::ops::Range<usize>) -> FrameRef {
        let stream = self.stream(kind).expect("stream checked by caller");
        let mut best = range.start;
        let mut best_d = f64::INFINITY;
        for i in range {
            let d = stream.frame_pose(i).distance(pose);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        FrameRef {
            kind,
            stream: stream.name.clone(),
            index: best,
            timestamp: stream.frames[best].timestamp,
            pose: stream.frame_pose(best),
            distance: best_d,
        }
    }
}
