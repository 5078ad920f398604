//! Cartesian LiDAR points and their binary payload format
//! (little-endian f32 quadruples `x, y, z, intensity`).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

pub type PointCloud = Vec<LidarPoint>;

impl LidarPoint {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &LidarPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

pub const POINT_RECORD_BYTES: usize = 16;

pub fn encode_cloud(cloud: &[LidarPoint]) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_RECORD_BYTES);
    for p in cloud {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes a point payload. Returns `None` when the length is not a whole
/// number of records.
pub fn decode_cloud(bytes: &[u8]) -> Option<PointCloud> {
    if bytes.len() % POINT_RECORD_BYTES != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(POINT_RECORD_BYTES)
            .map(|rec| {
                let f = |i: usize| f32::from_le_bytes(rec[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
                LidarPoint::new(f(0), f(1), f(2), f(3))
            })
            .collect(),
    )
}
