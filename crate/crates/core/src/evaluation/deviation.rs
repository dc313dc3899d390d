use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{DEVICES, DEVICE_NAMES};
use crate::Sequence;

/// Timestamps closer than this are treated as equal.
const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDeviation {
    pub device: String,
    pub mean_cm: f64,
    pub p50_cm: f64,
    pub p95_cm: f64,
    pub max_cm: f64,
    pub mean_deg: f64,
    pub p50_deg: f64,
    pub p95_deg: f64,
    pub max_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub frames: usize,
    pub devices: Vec<DeviceDeviation>,
}

impl DeviationReport {
    pub fn is_zero(&self) -> bool {
        self.devices.iter().all(|d| d.max_cm == 0.0 && d.max_deg == 0.0)
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let k = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

fn summarize(mut v: Vec<f64>) -> (f64, f64, f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    (mean, percentile(&v, 0.5), percentile(&v, 0.95), v[v.len() - 1])
}

/// Per-device positional (cm, from metres) and geodesic rotational (degrees) deviation.
pub fn trajectory_deviation(original: &Sequence, anonymized: &Sequence) -> Result<DeviationReport> {
    let (a, b) = (original.frames(), anonymized.frames());
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} frames", a.len()), b.len()));
    }
    if let Some((i, _)) = a.iter().zip(b).enumerate().find(|(_, (x, y))| (x.t - y.t).abs() > TIME_TOLERANCE) {
        return Err(Error::InvalidInput(format!("timestamps differ at frame {i}")));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("empty sequences".into()));
    }
    let devices = (0..DEVICES)
        .map(|d| {
            let mut pos = Vec::with_capacity(a.len());
            let mut rot = Vec::with_capacity(a.len());
            for (x, y) in a.iter().zip(b) {
                let (p, q) = (x.device(d), y.device(d));
                let dist = p.position.iter().zip(&q.position).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                pos.push(dist * 100.0);
                rot.push(p.orientation.angle_to(q.orientation).to_degrees());
            }
            let (mean_cm, p50_cm, p95_cm, max_cm) = summarize(pos);
            let (mean_deg, p50_deg, p95_deg, max_deg) = summarize(rot);
            DeviceDeviation {
                device: DEVICE_NAMES[d].to_string(),
                mean_cm,
                p50_cm,
                p95_cm,
                max_cm,
                mean_deg,
                p50_deg,
                p95_deg,
                max_deg,
            }
        })
        .collect();
    Ok(DeviationReport { frames: a.len(), devices })
}
