//! Deployment: post-hoc anonymization of recordings and per-frame streaming.
//!
//! Both paths run the same per-frame arithmetic: z-score, anonymizer on a
//! 31-frame history that starts as copies of the first frame, population
//! shift, one normalizer step, denormalize, quaternion renormalization.

mod resampler;

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, ArrayViewMut1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AnonymizerScratch, FrameRing, ModelBundle, NoiseVector, PopulationShift};
use crate::models::{Anonymizer, Normalizer};
use crate::motion::{resample, DimensionStats, MotionFrame, MotionSequence, NormalizedWindow, Quat, FRAME_DIM, TARGET_FPS};
use crate::nn::LstmState;
use crate::scalar::Scalar;
use crate::{Frame, Real, Sequence, Weight, Window};

pub use resampler::Resampler;

/// Z-scores one frame with the bundle's input statistics.
pub fn encode_frame(stats: &DimensionStats, frame: &Frame) -> [Weight; FRAME_DIM] {
    let row = frame.to_row();
    let (m, s) = (stats.mean(), stats.std());
    std::array::from_fn(|c| ((row[c] - m[c]) / s[c]) as Weight)
}

/// Inverts z-scoring and restores unit quaternions.
pub fn decode_frame(stats: &DimensionStats, t: Real, row: &[Weight]) -> Result<Frame> {
    let (m, s) = (stats.mean(), stats.std());
    let raw: [Real; FRAME_DIM] = std::array::from_fn(|c| row[c] as Real * s[c] + m[c]);
    let mut f = MotionFrame::from_row(t, &raw).or_else(|_| {
        // A collapsed quaternion cannot be renormalized; fall back to identity for that device.
        let mut fixed = raw;
        for d in 0..3 {
            let q = Quat::new(fixed[d * 7 + 3], fixed[d * 7 + 4], fixed[d * 7 + 5], fixed[d * 7 + 6]);
            if q.normalized().is_err() {
                fixed[d * 7 + 3..d * 7 + 7].copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
            }
        }
        MotionFrame::from_row(t, &fixed)
    })?;
    f.renormalize()?;
    Ok(f)
}

/// Applies the population shift to one z-space row or window.
pub fn apply_population_shift<T: Scalar>(shift: &PopulationShift, row: ArrayViewMut1<'_, T>) {
    shift.apply_row(row);
}

/// Anonymizer plus population shift over a z-scored array, with first-frame warm-up.
pub fn anonymize_zscored<T: Scalar>(
    anon: &Anonymizer<T>,
    shift: &PopulationShift,
    x: &ArrayView2<'_, T>,
    noise: &NoiseVector<T>,
) -> Result<Array2<T>> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("empty input".into()));
    }
    let x = x.as_standard_layout();
    let first = x.row(0);
    let mut ring = FrameRing::filled(anon.kernel(), first.as_slice().expect("standard layout"));
    let mut out = anon.infer_from(&mut ring, &x.view(), noise)?;
    for row in out.rows_mut() {
        shift.apply_row(row);
    }
    Ok(out)
}

/// Full z-space pipeline: anonymize, shift, normalize.
pub fn mask_zscored<T: Scalar>(
    anon: &Anonymizer<T>,
    normalizer: &Normalizer<T>,
    shift: &PopulationShift,
    x: &ArrayView2<'_, T>,
    noise: &NoiseVector<T>,
) -> Result<Array2<T>> {
    let a = anonymize_zscored(anon, shift, x, noise)?;
    normalizer.infer(&a.view())
}

fn session_noise<R: Rng + ?Sized>(
    anon: &Anonymizer<Weight>,
    noise: Option<NoiseVector<Weight>>,
    rng: &mut R,
) -> Result<NoiseVector<Weight>> {
    let n = noise.unwrap_or_else(|| NoiseVector::sample(rng, anon.noise_dim()));
    if n.len() != anon.noise_dim() {
        return Err(Error::shape(format!("noise of {}", anon.noise_dim()), n.len()));
    }
    Ok(n)
}

/// Post-hoc anonymization of a whole recording on the 30 fps grid.
///
/// Without `noise`, a fresh session noise is drawn from `rng`.
pub fn anonymize_recording<R: Rng + ?Sized>(
    seq: &Sequence,
    bundle: &ModelBundle<Weight>,
    noise: Option<NoiseVector<Weight>>,
    rng: &mut R,
) -> Result<Sequence> {
    let anon = bundle.anonymizer()?;
    let norm = bundle.normalizer()?;
    let noise = session_noise(anon, noise, rng)?;
    let uniform = if seq.len() >= 2 { resample(seq, TARGET_FPS)? } else { seq.clone() };
    let frames = uniform.frames();
    let mut x = Array2::zeros((frames.len(), FRAME_DIM));
    for (f, mut row) in frames.iter().zip(x.rows_mut()) {
        row.assign(&ndarray::ArrayView1::from(&encode_frame(&bundle.input_stats, f)));
    }
    let y = mask_zscored(anon, norm, &bundle.population_shift, &x.view(), &noise)?;
    let out = frames
        .iter()
        .zip(y.rows())
        .map(|(f, row)| decode_frame(&bundle.input_stats, f.t, row.as_slice().expect("standard layout")))
        .collect::<Result<Vec<_>>>()?;
    MotionSequence::new(out, TARGET_FPS)
}

/// Deployed pipeline over a motion-space window; returns the decoded motion-space output.
pub fn mask_window(bundle: &ModelBundle<Weight>, w: &Window, noise: &NoiseVector<Weight>) -> Result<Window> {
    if w.is_zscored() {
        return Err(Error::InvalidInput("mask_window expects a motion-space window".into()));
    }
    let x = bundle.input_stats.apply_array(&w.view())?;
    let y = mask_zscored(bundle.anonymizer()?, bundle.normalizer()?, &bundle.population_shift, &x.view(), noise)?;
    let mut out = Array2::zeros(y.dim());
    for (r, (row, mut o)) in y.rows().into_iter().zip(out.rows_mut()).enumerate() {
        let t = r as Real / TARGET_FPS;
        let f = decode_frame(&bundle.input_stats, t, row.as_slice().expect("standard layout"))?;
        o.iter_mut().zip(f.to_row()).for_each(|(d, v)| *d = v as Weight);
    }
    NormalizedWindow::from_motion(out)
}

/// Per-stream state for real-time anonymization.
#[derive(Debug, Clone)]
pub struct StreamState {
    bundle: Arc<ModelBundle<Weight>>,
    ring: FrameRing<Weight>,
    recurrent: LstmState<Weight>,
    noise: NoiseVector<Weight>,
    scratch: AnonymizerScratch<Weight>,
    anon_out: Vec<Weight>,
    norm_out: Vec<Weight>,
    frames: u64,
    closed: bool,
}

/// Opens a session: the history holds copies of `first_frame` and the noise is fixed from here on.
pub fn stream_open<R: Rng + ?Sized>(
    bundle: Arc<ModelBundle<Weight>>,
    first_frame: &Frame,
    noise: Option<NoiseVector<Weight>>,
    rng: &mut R,
) -> Result<StreamState> {
    let anon = bundle.anonymizer()?;
    let norm = bundle.normalizer()?;
    let noise = session_noise(anon, noise, rng)?;
    let first = encode_frame(&bundle.input_stats, first_frame);
    Ok(StreamState {
        ring: FrameRing::filled(anon.kernel(), &first),
        recurrent: norm.initial_state(),
        scratch: anon.scratch(),
        anon_out: vec![0.0; FRAME_DIM],
        norm_out: vec![0.0; FRAME_DIM],
        noise,
        frames: 0,
        closed: false,
        bundle,
    })
}

impl StreamState {
    pub fn noise(&self) -> &NoiseVector<Weight> {
        &self.noise
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frames
    }

    /// Frames currently in the anonymizer's history, oldest first, z-scored.
    pub fn history(&self) -> impl Iterator<Item = &[Weight]> + '_ {
        self.ring.iter()
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Anonymizes one frame and advances the session.
    pub fn step(&mut self, frame: &Frame) -> Result<Frame> {
        if self.closed {
            return Err(Error::Usage("stream is closed".into()));
        }
        let b = &*self.bundle;
        let (anon, norm) = (b.anonymizer()?, b.normalizer()?);
        let z = encode_frame(&b.input_stats, frame);
        self.ring.push(&z);
        anon.infer_frame(&self.ring, self.noise.as_slice(), &mut self.scratch, &mut self.anon_out);
        b.population_shift.apply_row(ArrayViewMut1::from(&mut self.anon_out[..]));
        norm.step(&self.anon_out, &mut self.recurrent, &mut self.norm_out);
        self.frames += 1;
        decode_frame(&b.input_stats, frame.t, &self.norm_out)
    }
}

pub fn stream_step(state: &mut StreamState, frame: &Frame) -> Result<Frame> {
    state.step(frame)
}

/// Per-frame timings of `stream_step`, milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub frames: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let k = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[k]
}

/// Times `n_frames` streaming steps over `source` (cycled) after a short warm run.
pub fn benchmark_latency<R: Rng + ?Sized>(
    bundle: Arc<ModelBundle<Weight>>,
    source: &Sequence,
    n_frames: usize,
    rng: &mut R,
) -> Result<LatencyReport> {
    if n_frames == 0 {
        return Err(Error::InvalidInput("benchmark needs at least one frame".into()));
    }
    let frames = source.frames();
    let mut state = stream_open(bundle, &frames[0], None, rng)?;
    for f in frames.iter().cycle().take(60) {
        std::hint::black_box(state.step(f)?);
    }
    let mut times = Vec::with_capacity(n_frames);
    for f in frames.iter().cycle().take(n_frames) {
        let t0 = Instant::now();
        std::hint::black_box(state.step(f)?);
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
    times.sort_by(f64::total_cmp);
    Ok(LatencyReport {
        frames: n_frames,
        mean_ms,
        p50_ms: percentile(&times, 0.5),
        p99_ms: percentile(&times, 0.99),
        max_ms: *times.last().unwrap(),
    })
}
