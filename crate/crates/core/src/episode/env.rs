use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EpisodeConfig, SpeedPolicy};
use super::control::{pure_pursuit, PurePursuitParams};
use super::derive_seed;
use crate::camera::DepthProvider;
use crate::cloud::{decode_cloud, encode_cloud, PointCloud};
use crate::error::{Error, Result};
use crate::event::{geometric_flow, synthesize_event_view, ContrastModel, EventArray, EventViewParams, IntensityFrame};
use crate::geometry::{relative_transform, step_bicycle, wrap_angle, AgentState, Pose2, RigidTransform};
use crate::lidar::{estimate_ray_prior, synthesize_lidar_view, PriorOptions, RayPrior};
use crate::rgb::{warp_novel_view, RgbFrame};
use crate::trace::{FrameCursor, FrameRef, SensorKind, Trace};

/// Largest distance between the agent and the frame it is rendered from.
pub const FRAME_SUPPORT: f64 = 20.0;

/// Random branch curvatures are uniform on `[-BRANCH_RANGE, BRANCH_RANGE]`.
const BRANCH_RANGE: f64 = 0.05;

/// Immutable simulation inputs shared by any number of episodes.
#[derive(Debug, Clone)]
pub struct SimContext {
    pub trace: Arc<Trace>,
    /// Ray prior of the trace's LiDAR, when it has one with sweeps.
    pub prior: Option<Arc<RayPrior>>,
}

impl SimContext {
    pub fn new(trace: Trace) -> Result<Self> {
        let has_sweeps = trace.stream(SensorKind::Lidar).is_some_and(|s| !s.is_empty());
        let prior = if has_sweeps { Some(Arc::new(estimate_ray_prior(&trace, &PriorOptions::default())?)) } else { None };
        Ok(Self { trace: Arc::new(trace), prior })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DoneCause {
    Crash,
    Success,
}

impl DoneCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            DoneCause::Crash => "crash",
            DoneCause::Success => "success",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    /// No episode started yet.
    Idle,
    Running,
    Done(DoneCause),
}

/// Everything that changes while an episode runs. Snapshots are plain
/// clones; restoring one is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent: AgentState,
    /// Agent state before the most recent step.
    pub prev: AgentState,
    pub lateral: f64,
    /// Arc length of the agent's foot point on the centerline.
    pub along: f64,
    pub heading_error: f64,
    pub status: Status,
    pub episode: u64,
    pub step: u64,
    /// Seed of the current episode; observation noise derives from it.
    pub episode_seed: u64,
    pub frames: FrameCursor,
    pub rng: ChaCha8Rng,
}

/// Result of one [`Env::step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub done: bool,
    pub cause: Option<DoneCause>,
    /// Signed lateral deviation, meters (left positive).
    pub deviation: f64,
    pub heading_error: f64,
    pub sim_time: f64,
    /// False when the step ran off the end of the centerline, in which case
    /// `deviation` repeats the previous value.
    pub measured: bool,
}

/// A rendered sensor reading.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Rgb(RgbFrame),
    Lidar(PointCloud),
    Events(EventArray),
}

impl Observation {
    /// Trace payload format for frames and sweeps, event-stream format for events.
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Observation::Rgb(f) => f.data.clone(),
            Observation::Lidar(c) => encode_cloud(c),
            Observation::Events(e) => e.encode(),
        }
    }
}

/// One closed-loop episode over a shared trace.
#[derive(Debug, Clone)]
pub struct Env {
    ctx: SimContext,
    config: EpisodeConfig,
    state: EnvState,
}

impl Env {
    pub fn new(ctx: SimContext, config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        // Events are rendered from the RGB stream; the event camera itself
        // is optional and defaults to the RGB intrinsics.
        match config.sensor {
            SensorKind::EventTarget => ctx.trace.sensor(SensorKind::Rgb)?,
            kind => ctx.trace.sensor(kind)?,
        };
        if config.sensor == SensorKind::Lidar && ctx.prior.is_none() {
            return Err(Error::MissingSensor("lidar"));
        }
        let state = EnvState {
            agent: AgentState::default(),
            prev: AgentState::default(),
            lateral: 0.0,
            along: 0.0,
            heading_error: 0.0,
            status: Status::Idle,
            episode: 0,
            step: 0,
            episode_seed: 0,
            frames: FrameCursor::default(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        Ok(Self { ctx, config, state })
    }

    pub fn trace(&self) -> &Trace {
        &self.ctx.trace
    }

    pub fn context(&self) -> &SimContext {
        &self.ctx
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn agent(&self) -> &AgentState {
        &self.state.agent
    }

    pub fn is_done(&self) -> bool {
        matches!(self.state.status, Status::Done(_))
    }

    pub fn snapshot(&self) -> EnvState {
        self.state.clone()
    }

    pub fn restore(&mut self, state: EnvState) {
        self.state = state;
    }

    /// Starts a new episode at a random position drawn from the env's own
    /// random stream.
    pub fn reset(&mut self) -> Result<AgentState> {
        let seed = self.state.rng.random();
        self.reset_seeded(seed)
    }

    /// Starts a new episode whose initial state depends only on `seed`.
    pub fn reset_seeded(&mut self, seed: u64) -> Result<AgentState> {
        let span = self.trace().length() - self.config.end_margin;
        if !(span > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "trace is {:.1} m long, shorter than the {} m reset exclusion",
                self.trace().length(),
                self.config.end_margin
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = span * rng.random::<f64>();
        let lateral = self.config.init.lateral * (2.0 * rng.random::<f64>() - 1.0);
        let yaw = self.config.init.yaw * (2.0 * rng.random::<f64>() - 1.0);
        self.state.rng = rng;
        self.state.episode_seed = seed;
        self.place(s, lateral, yaw)
    }

    /// Starts a new episode at arc length `s` with the given offsets.
    pub fn reset_at(&mut self, s: f64, lateral: f64, yaw: f64) -> Result<AgentState> {
        if !(s >= 0.0 && s < self.trace().length()) {
            return Err(Error::InvalidArgument(format!("reset arc length {s} outside the trace")));
        }
        self.place(s, lateral, yaw)
    }

    fn place(&mut self, s: f64, lateral: f64, yaw: f64) -> Result<AgentState> {
        let center = self.trace().centerline_point(s);
        let pose = center.compose(0.0, lateral, yaw);
        let speed = self.speed_at(s);
        let agent = AgentState { pose, speed, curvature: 0.0, time: 0.0, cursor: s };
        let st = &mut self.state;
        st.agent = agent;
        st.prev = AgentState { time: -self.config.dt, ..agent };
        st.lateral = lateral;
        st.along = s;
        st.heading_error = wrap_angle(yaw);
        st.status = Status::Running;
        st.episode += 1;
        st.step = 0;
        st.frames = FrameCursor::default();
        Ok(agent)
    }

    fn speed_at(&self, s: f64) -> f64 {
        match self.config.speed {
            SpeedPolicy::ReplayTrace => self.trace().controls_at_arc(s).0,
            SpeedPolicy::Constant(v) => v,
        }
    }

    fn check_running(&self) -> Result<()> {
        match self.state.status {
            Status::Running => Ok(()),
            Status::Done(_) => Err(Error::EpisodeDone),
            Status::Idle => Err(Error::InvalidArgument("episode not started; reset first".into())),
        }
    }

    /// Advances the agent by one `dt` with the commanded curvature.
    pub fn step(&mut self, curvature: f64) -> Result<StepInfo> {
        self.check_running()?;
        let speed = self.speed_at(self.state.along);
        let mut next = step_bicycle(&self.state.agent, curvature, speed, self.config.dt);
        let hint = self.state.along;
        let trace = Arc::clone(&self.ctx.trace);
        let st = &mut self.state;
        st.prev = st.agent;
        st.step += 1;
        let mut measured = true;
        match trace.centerline_deviation_near(&next.pose, hint) {
            Ok(d) => {
                st.lateral = d.lateral;
                st.along = d.along;
                st.heading_error = wrap_angle(next.pose.yaw - trace.centerline_point(d.along).yaw);
                next.cursor = next.cursor.max(d.along);
                if d.lateral.abs() > self.config.crash_threshold {
                    st.status = Status::Done(DoneCause::Crash);
                } else if d.along >= trace.length() {
                    st.status = Status::Done(DoneCause::Success);
                }
            }
            Err(Error::EndOfTrace) => {
                measured = false;
                st.status = Status::Done(DoneCause::Success);
            }
            Err(e) => return Err(e),
        }
        st.agent = next;
        let cause = match st.status {
            Status::Done(c) => Some(c),
            _ => None,
        };
        Ok(StepInfo {
            done: cause.is_some(),
            cause,
            deviation: st.lateral,
            heading_error: st.heading_error,
            sim_time: next.time,
            measured,
        })
    }

    /// Pure-pursuit label at the current state.
    pub fn privileged_control(&self, params: &PurePursuitParams) -> f64 {
        let a = &self.state.agent;
        pure_pursuit(self.trace(), &a.pose, self.state.along, a.speed, params)
    }

    /// Takes a throwaway step with a random curvature drawn from `rng`,
    /// labels the resulting state with pure pursuit, then restores the
    /// pre-branch state exactly. Returns the label and the branch curvature.
    pub fn branch_step(&mut self, params: &PurePursuitParams, rng: &mut impl Rng) -> Result<(f64, f64)> {
        self.check_running()?;
        let kappa = rng.random_range(-BRANCH_RANGE..=BRANCH_RANGE);
        let snapshot = self.snapshot();
        let out = self.step(kappa).map(|_| self.privileged_control(params));
        self.restore(snapshot);
        Ok((out?, kappa))
    }

    /// Renders the observation the agent would see after a branch step of
    /// `kappa`, leaving the state untouched.
    pub fn observe_branch(&mut self, kappa: f64) -> Result<Observation> {
        self.check_running()?;
        let snapshot = self.snapshot();
        let out = self.step(kappa).and_then(|_| self.observe());
        self.restore(snapshot);
        out
    }

    fn support_frame(&mut self, kind: SensorKind) -> Result<FrameRef> {
        let pose = self.state.agent.pose;
        let arc = self.state.agent.cursor;
        let f = self.ctx.trace.nearest_frame_windowed(&mut self.state.frames, &pose, kind, arc)?;
        if f.distance > FRAME_SUPPORT {
            return Err(Error::OutOfSupport { distance: f.distance, limit: FRAME_SUPPORT });
        }
        Ok(f)
    }

    /// Renders the configured sensor at the current agent pose.
    pub fn observe(&mut self) -> Result<Observation> {
        if self.state.status == Status::Idle {
            return Err(Error::InvalidArgument("episode not started; reset first".into()));
        }
        match self.config.sensor {
            SensorKind::Rgb => self.observe_rgb().map(Observation::Rgb),
            SensorKind::Lidar => self.observe_lidar().map(Observation::Lidar),
            SensorKind::EventTarget => self.observe_events().map(Observation::Events),
        }
    }

    fn rgb_view(&self, frame: &FrameRef, pose: &Pose2, timestamp: f64) -> Result<RgbFrame> {
        let trace = self.trace();
        let spec = trace.sensor(SensorKind::Rgb)?;
        let cam = spec.camera().ok_or(Error::MissingSensor("rgb"))?;
        let stream = trace.stream_by_name(&spec.name).ok_or(Error::MissingSensor("rgb"))?;
        let src = RgbFrame::new(cam.width as usize, cam.height as usize, stream.payload(frame.index).to_vec(), timestamp)?;
        let t = relative_transform(pose, &frame.pose, &spec.extrinsic);
        let depth = DepthProvider::ground(spec.mount_height(), self.config.camera_far);
        Ok(warp_novel_view(&src, &depth, cam, &t)?.frame)
    }

    fn observe_rgb(&mut self) -> Result<RgbFrame> {
        let f = self.support_frame(SensorKind::Rgb)?;
        self.rgb_view(&f, &self.state.agent.pose, self.state.agent.time)
    }

    fn observe_lidar(&mut self) -> Result<PointCloud> {
        let f = self.support_frame(SensorKind::Lidar)?;
        let trace = self.trace();
        let spec = trace.sensor(SensorKind::Lidar)?;
        let stream = trace.stream_by_name(&spec.name).ok_or(Error::MissingSensor("lidar"))?;
        let cloud = decode_cloud(stream.payload(f.index))
            .ok_or_else(|| Error::validation("lidar payload is not whole point records", Some(f.index)))?;
        let t = relative_transform(&self.state.agent.pose, &f.pose, &spec.extrinsic);
        let prior = self.ctx.prior.as_ref().ok_or(Error::MissingSensor("lidar"))?;
        let seed = derive_seed(self.state.episode_seed, self.state.step, 0);
        synthesize_lidar_view(&cloud, &t, prior, &self.config.cull, seed)
    }

    /// Events over the last step: the nearest RGB frame is re-rendered at
    /// the previous and current poses and the motion between them is
    /// converted to events in the event camera.
    fn observe_events(&mut self) -> Result<EventArray> {
        let f = self.support_frame(SensorKind::Rgb)?;
        let (prev, cur) = (self.state.prev, self.state.agent);
        let trace = self.trace();
        let spec = trace.sensor(SensorKind::Rgb)?;
        let cam = *spec.camera().ok_or(Error::MissingSensor("rgb"))?;
        let event_cam = match trace.rig.first_of_kind(SensorKind::EventTarget) {
            Some(s) => *s.camera().ok_or(Error::MissingSensor("event-target"))?,
            None => cam,
        };
        let a = self.rgb_view(&f, &prev.pose, prev.time)?;
        let b = self.rgb_view(&f, &cur.pose, cur.time)?;
        let i1 = IntensityFrame::from_rgb(a.width, a.height, &a.data, prev.time)?;
        let i2 = IntensityFrame::from_rgb(b.width, b.height, &b.data, cur.time)?;
        let depth = DepthProvider::ground(spec.mount_height(), self.config.camera_far);
        let t_prev = relative_transform(&prev.pose, &f.pose, &spec.extrinsic);
        let t_cur = relative_transform(&cur.pose, &f.pose, &spec.extrinsic);
        let prev_to_cur = t_cur.compose(&t_prev.inverse());
        let f12 = geometric_flow(&depth, &cam, &prev_to_cur);
        let f21 = geometric_flow(&depth, &cam, &prev_to_cur.inverse());
        let ev = &self.config.event;
        let params = EventViewParams {
            rgb: cam,
            event: event_cam,
            rgb_to_event: trace.rig.rgb_to_event()?,
            novel: RigidTransform::identity(),
            depth,
            contrast: ContrastModel::new(ev.mu, ev.sigma, derive_seed(self.state.episode_seed, self.state.step, 1)),
            substeps: ev.substeps,
            space: ev.space,
        };
        synthesize_event_view(&i1, &i2, &f12, &f21, &params)
    }
}
