//! Synthetic telemetry with learnable user and activity structure.
//!
//! Activities are banks of sinusoids per device, derived from a world seed so
//! that different corpora share them. Users carry five persistent traits:
//! height offset, arm span, tempo bias, jitter smoothness, and a static grip
//! rotation. Each recording adds a phase offset, an amplitude wobble, a small
//! standing offset, and AR(1) jitter.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::format::{write_recording, Recording, RecordingMeta};
use super::manifest::{Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::motion::{MotionFrame, MotionSequence, Pose, Quat, DEVICES};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub activities: usize,
    pub recordings_per_user: usize,
    /// Drives users and recordings.
    pub seed: u64,
    /// Drives the activity bank; keep fixed to share activities across corpora.
    pub world_seed: u64,
    pub duration_s: f64,
    pub fps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 20,
            activities: 10,
            recordings_per_user: 20,
            seed: 0,
            world_seed: 0x00D3_3B5E,
            duration_s: 36.0,
            fps: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub manifest: Manifest,
    pub recordings: Vec<Recording>,
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Wave {
    fn at(&self, t: f64) -> f64 {
        self.amp * (2.0 * PI * self.freq * t + self.phase).sin()
    }
}

#[derive(Debug, Clone)]
struct DeviceMotion {
    offset: [f64; 3],
    pos: [[Wave; 3]; 3],
    rot: [[Wave; 2]; 3],
}

#[derive(Debug, Clone)]
struct Activity {
    devices: [DeviceMotion; DEVICES],
}

#[derive(Debug, Clone)]
struct User {
    height: f64,
    span: f64,
    tempo: f64,
    smoothness: f64,
    grip_axis: [f64; 3],
    grip_angle: f64,
}

const BASE: [[f64; 3]; DEVICES] = [[0.0, 1.6, 0.0], [-0.2, 1.1, -0.3], [0.2, 1.1, -0.3]];
const POS_JITTER: f64 = 0.003;
const ROT_JITTER: f64 = 0.01;

fn sub_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r.set_word_pos(u128::from(index) << 20);
    r
}

fn wave(rng: &mut impl Rng, amp: (f64, f64), freq: (f64, f64)) -> Wave {
    Wave {
        amp: rng.random_range(amp.0..amp.1),
        freq: rng.random_range(freq.0..freq.1),
        phase: rng.random_range(0.0..2.0 * PI),
    }
}

fn activity(world_seed: u64, k: usize) -> Activity {
    let mut rng = sub_rng(world_seed, 1, k as u64);
    let devices = std::array::from_fn(|d| {
        let head = d == 0;
        let off_sd = if head { 0.03 } else { 0.08 };
        let pos_amp = if head { (0.01, 0.05) } else { (0.03, 0.15) };
        let rot_amp = if head { (0.05, 0.3) } else { (0.1, 0.5) };
        let n = Normal::new(0.0, off_sd).unwrap();
        DeviceMotion {
            offset: std::array::from_fn(|_| n.sample(&mut rng)),
            pos: std::array::from_fn(|_| std::array::from_fn(|_| wave(&mut rng, pos_amp, (0.2, 1.2)))),
            rot: std::array::from_fn(|_| std::array::from_fn(|_| wave(&mut rng, rot_amp, (0.2, 1.0)))),
        }
    });
    Activity { devices }
}

fn user(seed: u64, i: usize) -> User {
    let mut rng = sub_rng(seed, 2, i as u64);
    let g = |rng: &mut ChaCha8Rng, sd: f64| -> f64 { sd * gauss(rng) };
    let height = g(&mut rng, 0.07);
    let span = (1.0 + g(&mut rng, 0.08)).clamp(0.75, 1.25);
    let tempo = g(&mut rng, 0.02);
    let smoothness = rng.random_range(0.6..0.95);
    let mut axis: [f64; 3] = std::array::from_fn(|_| g(&mut rng, 1.0));
    let norm = axis.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    axis.iter_mut().for_each(|v| *v /= norm);
    let grip_angle = g(&mut rng, 0.3);
    User { height, span, tempo, smoothness, grip_axis: axis, grip_angle }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn euler(a: [f64; 3]) -> Quat<f64> {
    let q = |axis: [f64; 3], ang: f64| Quat::from_axis_angle(axis, ang).expect("unit axis");
    q([0.0, 0.0, 1.0], a[2]) * q([0.0, 1.0, 0.0], a[1]) * q([1.0, 0.0, 0.0], a[0])
}

struct Ar1 {
    state: [f64; 3],
    rho: f64,
    innov: f64,
}

impl Ar1 {
    fn new(rho: f64, sd: f64, rng: &mut ChaCha8Rng) -> Self {
        let state = std::array::from_fn(|_| sd * gauss(rng));
        Self { state, rho, innov: sd * (1.0 - rho * rho).sqrt() }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        for s in &mut self.state {
            *s = self.rho * *s + self.innov * gauss(rng);
        }
        self.state
    }
}

fn record(
    cfg: &SynthConfig,
    act: &Activity,
    u: &User,
    rng: &mut ChaCha8Rng,
) -> Result<MotionSequence<Real>> {
    let shift = rng.random_range(0.0..20.0);
    let wobble = 1.0 + 0.05 * gauss(rng);
    let stand = [0.02 * gauss(rng), 0.0, 0.02 * gauss(rng)];
    let mut pos_j: Vec<Ar1> = (0..DEVICES).map(|_| Ar1::new(u.smoothness, POS_JITTER, rng)).collect();
    let mut rot_j: Vec<Ar1> = (0..DEVICES).map(|_| Ar1::new(u.smoothness, ROT_JITTER, rng)).collect();
    let grip = |left: bool| {
        let mut ax = u.grip_axis;
        if left {
            ax[0] = -ax[0];
        }
        Quat::from_axis_angle(ax, u.grip_angle).expect("unit axis")
    };
    let (grip_l, grip_r) = (grip(true), grip(false));
    let n = (cfg.duration_s * cfg.fps).round() as usize;
    let mut frames = Vec::with_capacity(n);
    for f in 0..n {
        let t = f as f64 / cfg.fps;
        let tau = (t + shift) * (1.0 + u.tempo);
        let mut poses = [Pose::identity(); DEVICES];
        for (d, dm) in act.devices.iter().enumerate() {
            let hand = d > 0;
            let reach = if hand { u.span } else { 1.0 };
            let mut p = [0.0; 3];
            let jit = pos_j[d].next(rng);
            for a in 0..3 {
                let motion: f64 = dm.pos[a].iter().map(|w| w.at(tau)).sum();
                p[a] = BASE[d][a] + dm.offset[a] + wobble * reach * motion + stand[a] + jit[a];
            }
            p[0] = (p[0] - stand[0]) * reach + stand[0];
            p[1] += if hand { 0.85 * u.height } else { u.height };
            let angles: [f64; 3] = std::array::from_fn(|a| wobble * dm.rot[a].iter().map(|w| w.at(tau)).sum::<f64>());
            let rj = rot_j[d].next(rng);
            let mut q = euler(angles);
            if d == 1 {
                q = q * grip_l;
            } else if d == 2 {
                q = q * grip_r;
            }
            q = q * euler(rj);
            if q.w < 0.0 {
                q = -q;
            }
            poses[d] = Pose::new(p, q)?;
        }
        frames.push(MotionFrame { t, head: poses[0], left_hand: poses[1], right_hand: poses[2] });
    }
    MotionSequence::new(frames, cfg.fps)
}

pub fn synth_generate(users: usize, activities: usize, recordings_per_user: usize, seed: u64) -> Result<SynthCorpus> {
    synth_generate_with(&SynthConfig { users, activities, recordings_per_user, seed, ..Default::default() })
}

/// Deterministic corpus; user ids carry the seed so corpora with different seeds never share users.
pub fn synth_generate_with(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.users == 0 || cfg.activities == 0 || cfg.recordings_per_user == 0 {
        return Err(Error::InvalidInput("synthetic corpus counts must be at least 1".into()));
    }
    if !(cfg.fps > 0.0) || !(cfg.duration_s * cfg.fps >= 2.0) {
        return Err(Error::InvalidInput("synthetic recordings need a positive rate and at least 2 frames".into()));
    }
    let acts: Vec<Activity> = (0..cfg.activities).map(|k| activity(cfg.world_seed, k)).collect();
    let mut entries = Vec::new();
    let mut recordings = Vec::new();
    for i in 0..cfg.users {
        let u = user(cfg.seed, i);
        let mut rng = sub_rng(cfg.seed, 3, i as u64);
        let user_id = format!("s{}-u{i:03}", cfg.seed);
        let start = 1_700_000_000 + i as i64 * 7 * 86_400;
        for r in 0..cfg.recordings_per_user {
            let k = (r + i) % cfg.activities;
            let meta = RecordingMeta {
                recording_id: format!("{user_id}-r{r:03}"),
                user_id: user_id.clone(),
                activity_id: format!("a{k:02}"),
                created_at: start + r as i64 * 3_600 + rng.random_range(0..600),
            };
            let sequence = record(cfg, &acts[k], &u, &mut rng)?;
            entries.push(ManifestEntry {
                path: format!("{}.jsonl", meta.recording_id).into(),
                meta: meta.clone(),
                split: None,
            });
            recordings.push(Recording { meta, sequence });
        }
    }
    Ok(SynthCorpus { manifest: Manifest::new(entries)?, recordings })
}

/// Writes every recording plus `manifest.json` into `dir`; returns the manifest with absolute paths.
pub fn write_corpus(dir: impl AsRef<Path>, corpus: &SynthCorpus) -> Result<Manifest> {
    let dir = dir.as_ref();
    let mut entries = Vec::with_capacity(corpus.recordings.len());
    for (e, r) in corpus.manifest.entries().iter().zip(&corpus.recordings) {
        let path = dir.join(&e.path);
        write_recording(&path, r)?;
        entries.push(ManifestEntry { path, ..e.clone() });
    }
    let m = Manifest::new(entries)?;
    m.save(dir.join("manifest.json"))?;
    Ok(m)
}
