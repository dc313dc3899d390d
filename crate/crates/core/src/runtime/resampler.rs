use crate::error::{Error, Result};
use crate::motion::{interpolate_frame, TARGET_FPS};
use crate::Frame;

/// Streaming resampler onto the 30 fps grid with one input frame of delay.
///
/// A grid frame is emitted once the input frame after it has arrived.
#[derive(Debug, Clone, Default)]
pub struct Resampler {
    prev: Option<Frame>,
    start: f64,
    next_k: u64,
}

impl Resampler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, frame: Frame) -> Result<Vec<Frame>> {
        let mut out = Vec::new();
        let Some(prev) = self.prev else {
            self.start = frame.t;
            self.next_k = 1;
            self.prev = Some(frame);
            out.push(frame);
            return Ok(out);
        };
        if frame.t <= prev.t {
            return Err(Error::InvalidInput(format!("timestamp {} does not increase", frame.t)));
        }
        loop {
            let t = self.start + self.next_k as f64 / TARGET_FPS;
            if t > frame.t + 1e-9 {
                break;
            }
            let u = ((t - prev.t) / (frame.t - prev.t)).clamp(0.0, 1.0);
            out.push(interpolate_frame(&prev, &frame, t, u)?);
            self.next_k += 1;
        }
        self.prev = Some(frame);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{resample, MotionSequence};
    use crate::dataset::synth_generate_with;
    use crate::dataset::SynthConfig;

    #[test]
    fn matches_batch_resampling() {
        let cfg = SynthConfig { users: 1, activities: 1, recordings_per_user: 1, duration_s: 2.0, fps: 72.0, ..Default::default() };
        let seq = synth_generate_with(&cfg).unwrap().recordings.remove(0).sequence;
        let batch = resample(&seq, TARGET_FPS).unwrap();
        let mut r = Resampler::new();
        let mut streamed = Vec::new();
        for f in seq.frames() {
            streamed.extend(r.push(*f).unwrap());
        }
        let streamed = MotionSequence::new(streamed, TARGET_FPS).unwrap();
        assert_eq!(streamed.len(), batch.len());
        for (a, b) in streamed.frames().iter().zip(batch.frames()) {
            assert!((a.t - b.t).abs() < 1e-9);
            for (x, y) in a.to_row().iter().zip(b.to_row()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
