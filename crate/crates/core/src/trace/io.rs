//! On-disk trace layout: `manifest.json`, `odometry.csv` and per-sensor
//! `frames_<name>.idx` / `frames_<name>.bin` pairs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FrameEntry, LidarModel, OdomRecord, SensorKind, SensorModel, SensorRig, SensorSpec, StreamData, Trace};
use crate::camera::CameraModel;
use crate::error::{Error, Result};
use crate::geometry::{Pose2, RigidTransform};

const ODOM_HEADER: &str = "t,x,y,yaw,speed,curvature";
const IDX_RECORD_BYTES: usize = 24;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    trace_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration: Option<f64>,
    sensors: Vec<ManifestSensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSensor {
    name: String,
    kind: SensorKind,
    intrinsics: Intrinsics,
    extrinsic: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Intrinsics {
    Camera(CameraModel),
    Lidar(LidarModel),
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads and fully validates a trace directory.
pub fn load_trace(dir: impl AsRef<Path>) -> Result<Trace> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = serde_json::from_slice(&read(&manifest_path)?)
        .map_err(|e| Error::corrupt(&manifest_path, e.to_string()))?;

    let mut rig = SensorRig::default();
    for (i, s) in manifest.sensors.iter().enumerate() {
        let m: [f64; 16] = s.extrinsic.as_slice().try_into().map_err(|_| {
            Error::corrupt(&manifest_path, format!("sensor `{}` extrinsic needs 16 values", s.name))
        })?;
        let extrinsic = RigidTransform::from_row_major(&m).map_err(|e| {
            Error::validation(format!("sensor `{}` extrinsic: {e}", s.name), Some(i))
        })?;
        let model = match s.intrinsics {
            Intrinsics::Camera(c) => SensorModel::Camera(c),
            Intrinsics::Lidar(l) => SensorModel::Lidar(l),
        };
        rig.sensors.push(SensorSpec { name: s.name.clone(), kind: s.kind, model, extrinsic });
    }

    let odom_path = dir.join("odometry.csv");
    let text = String::from_utf8(read(&odom_path)?).map_err(|_| Error::corrupt(&odom_path, "not UTF-8"))?;
    let odometry = parse_odometry(&text).map_err(|m| Error::corrupt(&odom_path, m))?;

    let mut streams = Vec::with_capacity(rig.sensors.len());
    for s in &rig.sensors {
        let idx_path = dir.join(format!("frames_{}.idx", s.name));
        let bin_path = dir.join(format!("frames_{}.bin", s.name));
        let frames = parse_index(&read(&idx_path)?).map_err(|m| Error::corrupt(&idx_path, m))?;
        let data = read(&bin_path)?;
        streams.push(StreamData { name: s.name.clone(), frames, data });
    }

    let trace = Trace::new(manifest.trace_id, rig, odometry, streams)?;
    if let Some(d) = manifest.duration {
        if (d - trace.duration()).abs() > 1e-6 * d.abs().max(1.0) {
            return Err(Error::validation(
                format!("manifest duration {d} s disagrees with odometry ({} s)", trace.duration()),
                None,
            ));
        }
    }
    Ok(trace)
}

fn parse_odometry(text: &str) -> std::result::Result<Vec<OdomRecord>, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == ODOM_HEADER => {}
        _ => return Err(format!("expected header `{ODOM_HEADER}`")),
    }
    let mut out = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        if vals.len() != 6 {
            return Err(format!("line {}: expected 6 fields, found {}", lineno + 1, vals.len()));
        }
        out.push(OdomRecord::new(vals[0], Pose2::new(vals[1], vals[2], vals[3]), vals[4], vals[5]));
    }
    Ok(out)
}

fn parse_index(bytes: &[u8]) -> std::result::Result<Vec<FrameEntry>, String> {
    if bytes.len() < 8 {
        return Err("truncated frame count".into());
    }
    let count = u64::from_le_bytes(bytes[..8].try_into().unwrap());
    let expected = (count as u128) * IDX_RECORD_BYTES as u128 + 8;
    if expected != bytes.len() as u128 {
        return Err(format!("index declares {count} frames but holds {} bytes", bytes.len()));
    }
    Ok(bytes[8..]
        .chunks_exact(IDX_RECORD_BYTES)
        .map(|r| FrameEntry {
            timestamp: f64::from_le_bytes(r[0..8].try_into().unwrap()),
            offset: u64::from_le_bytes(r[8..16].try_into().unwrap()),
            length: u64::from_le_bytes(r[16..24].try_into().unwrap()),
        })
        .collect())
}

/// Writes `trace` in the on-disk layout. Payload bytes are copied verbatim.
pub fn write_trace(trace: &Trace, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        trace_id: trace.id.clone(),
        duration: Some(trace.duration()),
        sensors: trace
            .rig
            .sensors
            .iter()
            .map(|s| ManifestSensor {
                name: s.name.clone(),
                kind: s.kind,
                intrinsics: match s.model {
                    SensorModel::Camera(c) => Intrinsics::Camera(c),
                    SensorModel::Lidar(l) => Intrinsics::Lidar(l),
                },
                extrinsic: s.extrinsic.to_row_major().to_vec(),
            })
            .collect(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;

    let mut csv = String::from(ODOM_HEADER);
    csv.push('\n');
    for r in &trace.odometry {
        // `{}` on f64 prints the shortest string that parses back exactly.
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t, r.pose.x, r.pose.y, r.pose.yaw, r.speed, r.curvature
        ));
    }
    let path = dir.join("odometry.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;

    for s in &trace.streams {
        let mut idx = Vec::with_capacity(8 + s.frames.len() * IDX_RECORD_BYTES);
        idx.extend_from_slice(&(s.frames.len() as u64).to_le_bytes());
        for f in &s.frames {
            idx.extend_from_slice(&f.timestamp.to_le_bytes());
            idx.extend_from_slice(&f.offset.to_le_bytes());
            idx.extend_from_slice(&f.length.to_le_bytes());
        }
        let path = dir.join(format!("frames_{}.idx", s.name));
        fs::write(&path, idx).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(format!("frames_{}.bin", s.name));
        fs::write(&path, s.data()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
