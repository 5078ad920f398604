//! Command-line front end. Exit codes: 0 success, 1 failure, 2 usage error.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use vista_core::camera::DepthProvider;
use vista_core::cloud::{decode_cloud, encode_cloud};
use vista_core::episode::{generate_dataset, EpisodeConfig, SimContext};
use vista_core::event::{
    decode_flow_pair, geometric_flow, synthesize_event_view, ContrastModel, EventViewParams, GenerationSpace,
    IntensityFrame, SubstepConfig,
};
use vista_core::geometry::{relative_transform, Pose2};
use vista_core::lidar::{estimate_ray_prior, synthesize_lidar_view_debug, CullParams, PriorOptions};
use vista_core::rgb::{warp_novel_view, RgbFrame};
use vista_core::synthetic::{CurvatureProfile, SyntheticTrace};
use vista_core::trace::{load_trace, write_trace, SensorKind, SensorStream, Trace};

use crate::server::{run_session, Server};
use crate::session::Session;

#[derive(Debug, Parser)]
#[command(name = "vista", version, about = "Data-driven multi-sensor driving simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Re-render one LiDAR sweep from a displaced vehicle pose.
    LidarResynth(LidarArgs),
    /// Re-render one RGB frame from a displaced vehicle pose.
    RgbResynth(RgbArgs),
    /// Synthesize events between two consecutive RGB frames.
    EventSynth(EventArgs),
    /// Generate a balanced training dataset.
    GenDataset(DatasetArgs),
    /// Run closed-loop episodes driven by an external policy process.
    Rollout(RolloutArgs),
    /// Load a trace and check every structural rule.
    ValidateTrace(TraceArg),
    /// Serve episodes over TCP.
    Serve(ServeArgs),
    /// Write a procedurally generated trace.
    SynthTrace(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TraceArg {
    /// Trace directory.
    #[arg(long)]
    pub trace: PathBuf,
}

/// Vehicle-frame displacement of the novel viewpoint.
#[derive(Debug, Args, Clone, Copy)]
pub struct Offset {
    /// Forward offset, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub dx: f64,
    /// Leftward offset, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub dy: f64,
    /// Counter-clockwise yaw offset, radians.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub dyaw: f64,
}

impl Offset {
    fn apply(&self, pose: &Pose2) -> Pose2 {
        pose.compose(self.dx, self.dy, self.dyaw)
    }
}

#[derive(Debug, Args)]
pub struct LidarArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    /// Sweep index.
    #[arg(long)]
    pub frame: usize,
    #[command(flatten)]
    pub offset: Offset,
    /// Output cloud, in the trace point format.
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump the dense range image.
    #[arg(long)]
    pub debug_polar: Option<PathBuf>,
    /// Seed for ray-drop sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RgbArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    #[arg(long)]
    pub frame: usize,
    #[command(flatten)]
    pub offset: Offset,
    /// Camera height above the ground plane; defaults to the calibrated mount height.
    #[arg(long)]
    pub camera_height: Option<f64>,
    /// Far plane of the proxy scene, meters.
    #[arg(long, default_value_t = 80.0)]
    pub far: f64,
    /// Per-pixel depth map (H x W little-endian f32 meters) instead of the proxy.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Space {
    Event,
    Rgb,
}

#[derive(Debug, Args)]
pub struct EventArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    /// Two consecutive RGB frame indices.
    #[arg(long, num_args = 2, value_names = ["K", "K1"])]
    pub frames: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Space::Event)]
    pub space: Space,
    /// Mean contrast threshold.
    #[arg(long, default_value_t = 0.2)]
    pub mu_c: f64,
    /// Contrast threshold standard deviation.
    #[arg(long, default_value_t = 0.03)]
    pub sigma_c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Forward and backward flow file; defaults to flow from the proxy scene.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_substeps: u32,
    #[arg(long, default_value_t = 80.0)]
    pub far: f64,
    #[command(flatten)]
    pub offset: Offset,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of accepted samples.
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON file of episode config overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    /// Policy executable; it speaks the wire protocol on stdin and stdout.
    #[arg(long)]
    pub policy_cmd: PathBuf,
    /// Extra argument for the policy process (repeatable).
    #[arg(long = "policy-arg", allow_hyphen_values = true)]
    pub policy_args: Vec<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Profile {
    Straight,
    Sine,
    Circle,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Full generator description as JSON; overrides the other flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 200.0)]
    pub length: f64,
    #[arg(long, value_enum, default_value_t = Profile::Straight)]
    pub profile: Profile,
    /// Peak curvature of the sine profile, 1/m.
    #[arg(long, default_value_t = 0.02)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 120.0)]
    pub wavelength: f64,
    /// Curvature of the circle profile, 1/m.
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub curvature: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Leave out the LiDAR stream.
    #[arg(long)]
    pub no_lidar: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Sim(#[from] vista_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(io_err(path))
}

fn load_config(path: Option<&Path>) -> Result<EpisodeConfig, CliError> {
    let base = EpisodeConfig::default();
    let Some(p) = path else { return Ok(base) };
    let v: serde_json::Value = serde_json::from_slice(&read_file(p)?)
        .map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?;
    Ok(base.with_overrides(&v)?)
}

fn stream<'a>(trace: &'a Trace, kind: SensorKind, frame: usize) -> Result<&'a SensorStream, CliError> {
    let spec = trace.sensor(kind)?;
    let s = trace.stream_by_name(&spec.name).ok_or(vista_core::Error::MissingSensor(kind.as_str()))?;
    if frame >= s.len() {
        return Err(CliError::Other(format!("frame {frame} out of range; stream `{}` has {} frames", s.name, s.len())));
    }
    Ok(s)
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::LidarResynth(a) => lidar_resynth(&a),
        Cmd::RgbResynth(a) => rgb_resynth(&a),
        Cmd::EventSynth(a) => event_synth(&a),
        Cmd::GenDataset(a) => gen_dataset(&a),
        Cmd::Rollout(a) => rollout(&a),
        Cmd::ValidateTrace(a) => validate_trace(&a),
        Cmd::Serve(a) => serve(&a),
        Cmd::SynthTrace(a) => synth_trace(&a),
    }
}

fn lidar_resynth(a: &LidarArgs) -> Result<(), CliError> {
    let trace = load_trace(&a.trace.trace)?;
    let s = stream(&trace, SensorKind::Lidar, a.frame)?;
    let spec = trace.sensor(SensorKind::Lidar)?;
    let cloud = decode_cloud(s.payload(a.frame))
        .ok_or_else(|| CliError::Other(format!("sweep {} is not whole point records", a.frame)))?;
    let pose = s.frame_pose(a.frame);
    let t = relative_transform(&a.offset.apply(&pose), &pose, &spec.extrinsic);
    let prior = estimate_ray_prior(&trace, &PriorOptions::default())?;
    let view = synthesize_lidar_view_debug(&cloud, &t, &prior, &CullParams::default(), a.seed)?;
    write_file(&a.out, &encode_cloud(&view.cloud))?;
    if let Some(p) = &a.debug_polar {
        let f = fs::File::create(p).map_err(io_err(p))?;
        view.dense.write_debug(std::io::BufWriter::new(f)).map_err(io_err(p))?;
    }
    println!("{}", json!({ "points": view.cloud.len(), "source_points": cloud.len() }));
    Ok(())
}

fn read_depth(path: &Path, width: u32, height: u32) -> Result<DepthProvider, CliError> {
    let bytes = read_file(path)?;
    let depth: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    if bytes.len() % 4 != 0 {
        return Err(CliError::Other(format!("{}: length is not a multiple of 4", path.display())));
    }
    let d = DepthProvider::DepthMap { width, height, depth };
    d.validate()?;
    Ok(d)
}

fn rgb_resynth(a: &RgbArgs) -> Result<(), CliError> {
    let trace = load_trace(&a.trace.trace)?;
    let s = stream(&trace, SensorKind::Rgb, a.frame)?;
    let spec = trace.sensor(SensorKind::Rgb)?;
    let cam = *spec.camera().ok_or(vista_core::Error::MissingSensor("rgb"))?;
    let frame = RgbFrame::new(
        cam.width as usize,
        cam.height as usize,
        s.payload(a.frame).to_vec(),
        s.frames[a.frame].timestamp,
    )?;
    let depth = match &a.depth {
        Some(p) => read_depth(p, cam.width, cam.height)?,
        None => DepthProvider::ground(a.camera_height.unwrap_or_else(|| spec.mount_height()), a.far),
    };
    let pose = s.frame_pose(a.frame);
    let t = relative_transform(&a.offset.apply(&pose), &pose, &spec.extrinsic);
    let out = warp_novel_view(&frame, &depth, &cam, &t)?;
    write_file(&a.out, &out.frame.data)?;
    let valid = out.valid.iter().filter(|v| **v).count();
    println!("{}", json!({ "width": cam.width, "height": cam.height, "valid_pixels": valid }));
    Ok(())
}

fn event_synth(a: &EventArgs) -> Result<(), CliError> {
    let (k1, k2) = (a.frames[0], a.frames[1]);
    let trace = load_trace(&a.trace.trace)?;
    let s = stream(&trace, SensorKind::Rgb, k1.max(k2))?;
    let spec = trace.sensor(SensorKind::Rgb)?;
    let cam = *spec.camera().ok_or(vista_core::Error::MissingSensor("rgb"))?;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let i1 = IntensityFrame::from_rgb(w, h, s.payload(k1), s.frames[k1].timestamp)?;
    let i2 = IntensityFrame::from_rgb(w, h, s.payload(k2), s.frames[k2].timestamp)?;
    let depth = DepthProvider::ground(spec.mount_height(), a.far);
    let (p1, p2) = (s.frame_pose(k1), s.frame_pose(k2));
    let (f12, f21) = match &a.flow {
        Some(p) => decode_flow_pair(&read_file(p)?, w, h)?,
        None => {
            let t12 = relative_transform(&p2, &p1, &spec.extrinsic);
            (geometric_flow(&depth, &cam, &t12), geometric_flow(&depth, &cam, &t12.inverse()))
        }
    };
    let event_spec = trace.rig.first_of_kind(SensorKind::EventTarget);
    let event_cam = match event_spec {
        Some(e) => *e.camera().ok_or(vista_core::Error::MissingSensor("event-target"))?,
        None => cam,
    };
    let event_extrinsic = event_spec.map_or(spec.extrinsic, |e| e.extrinsic);
    let params = EventViewParams {
        rgb: cam,
        event: event_cam,
        rgb_to_event: trace.rig.rgb_to_event()?,
        novel: relative_transform(&a.offset.apply(&p1), &p1, &event_extrinsic),
        depth,
        contrast: ContrastModel::new(a.mu_c, a.sigma_c, a.seed),
        substeps: SubstepConfig::with_max(a.max_substeps),
        space: match a.space {
            Space::Event => GenerationSpace::Event,
            Space::Rgb => GenerationSpace::Rgb,
        },
    };
    let events = synthesize_event_view(&i1, &i2, &f12, &f21, &params)?;
    write_file(&a.out, &events.encode())?;
    println!("{}", json!({ "events": events.len() }));
    Ok(())
}

fn context(trace: &Path) -> Result<SimContext, CliError> {
    Ok(SimContext::new(load_trace(trace)?)?)
}

fn gen_dataset(a: &DatasetArgs) -> Result<(), CliError> {
    let mut config = load_config(a.config.as_deref())?;
    config.seed = a.seed;
    let summary = generate_dataset(context(&a.trace.trace)?, &config, a.n, &a.out)?;
    println!("{}", json!({ "samples": summary.samples, "counts": summary.counts }));
    Ok(())
}

fn rollout(a: &RolloutArgs) -> Result<(), CliError> {
    let ctx = context(&a.trace.trace)?;
    let config = load_config(a.config.as_deref())?;
    let mut child = Command::new(&a.policy_cmd)
        .args(&a.policy_args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(io_err(&a.policy_cmd))?;
    let to_child = child.stdin.take().expect("stdin is piped");
    let from_child = child.stdout.take().expect("stdout is piped");
    let result = run_session(Session::new(0, ctx, config), from_child, to_child);
    let status = child.wait().map_err(io_err(&a.policy_cmd))?;
    let session = result.map_err(|e| CliError::Other(format!("policy process: {e}")))?;
    if !status.success() {
        return Err(CliError::Other(format!("policy process exited with {status}")));
    }
    let m = serde_json::to_string(&session.metrics().metrics()).expect("metrics serialize");
    println!("{m}");
    Ok(())
}

fn validate_trace(a: &TraceArg) -> Result<(), CliError> {
    let trace = load_trace(&a.trace)?;
    let streams: Vec<_> = trace.streams.iter().map(|s| json!({ "name": s.name, "kind": s.kind, "frames": s.len() })).collect();
    println!(
        "{}",
        json!({
            "id": trace.id,
            "duration": trace.duration(),
            "length": trace.length(),
            "odometry_rows": trace.odometry.len(),
            "streams": streams,
        })
    );
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let ctx = context(&a.trace.trace)?;
    let config = load_config(a.config.as_deref())?;
    let listener = TcpListener::bind(&a.bind).map_err(|e| CliError::Other(format!("bind {}: {e}", a.bind)))?;
    let server = Server::new(listener, ctx, config);
    eprintln!("listening on {}", server.local_addr().map_err(|e| CliError::Other(e.to_string()))?);
    server.run()
}

fn synth_trace(a: &SynthArgs) -> Result<(), CliError> {
    let spec = match &a.spec {
        Some(p) => serde_json::from_slice(&read_file(p)?).map_err(|e| CliError::Other(format!("{}: {e}", p.display())))?,
        None => {
            let profile = match a.profile {
                Profile::Straight => CurvatureProfile::Straight,
                Profile::Sine => CurvatureProfile::Sine { amplitude: a.amplitude, wavelength: a.wavelength },
                Profile::Circle => CurvatureProfile::Circle { curvature: a.curvature },
            };
            let mut s = SyntheticTrace { profile, length: a.length, seed: a.seed, ..Default::default() };
            if a.no_lidar {
                s.lidar = None;
            }
            s
        }
    };
    let trace = spec.build()?;
    write_trace(&trace, &a.out)?;
    println!("{}", json!({ "id": trace.id, "length": trace.length(), "streams": trace.streams.len() }));
    Ok(())
}
