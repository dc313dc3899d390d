use super::frame::{MotionFrame, MotionSequence, Pose, DEVICES};
use super::quat::slerp_orientation;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Target frame rate of every model input.
pub const TARGET_FPS: f64 = 30.0;

pub fn lerp_position<T: Scalar>(a: [T; 3], b: [T; 3], u: T) -> Result<[T; 3]> {
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) || !u.is_finite() {
        return Err(Error::InvalidInput("non-finite interpolation input".into()));
    }
    if u < T::zero() || u > T::one() {
        return Err(Error::InvalidInput(format!("interpolation parameter {u} outside [0,1]")));
    }
    Ok([
        a[0] + u * (b[0] - a[0]),
        a[1] + u * (b[1] - a[1]),
        a[2] + u * (b[2] - a[2]),
    ])
}

/// Frame between `a` and `b` at fraction `u`, stamped with time `t`.
pub fn interpolate_frame<T: Scalar>(
    a: &MotionFrame<T>,
    b: &MotionFrame<T>,
    t: T,
    u: T,
) -> Result<MotionFrame<T>> {
    let mut out = *a;
    out.t = t;
    for d in 0..DEVICES {
        let (pa, pb) = (a.device(d), b.device(d));
        *out.device_mut(d) = Pose {
            position: lerp_position(pa.position, pb.position, u)?,
            orientation: slerp_orientation(pa.orientation, pb.orientation, u)?,
        };
    }
    Ok(out)
}

/// Resamples onto the uniform grid `start + k / target_fps`, endpoint inclusive.
///
/// Positions are interpolated linearly and orientations along the shortest
/// great arc between the two bracketing source frames.
pub fn resample<T: Scalar>(seq: &MotionSequence<T>, target_fps: T) -> Result<MotionSequence<T>> {
    if !(target_fps > T::zero()) || !target_fps.is_finite() {
        return Err(Error::InvalidInput(format!("target fps {target_fps} must be positive")));
    }
    let src = seq.frames();
    if src.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 frames, got {}",
            src.len()
        )));
    }
    let start = seq.start();
    let span = seq.end() - start;
    // Slack absorbs rounding in timestamps written as decimal text.
    let slack = T::lit(1e-6);
    let count = ((span * target_fps) + slack).floor().to_usize().unwrap_or(0) + 1;

    let mut out = Vec::with_capacity(count);
    let mut j = 0usize;
    for k in 0..count {
        let t = start + T::from_usize_lossy(k) / target_fps;
        while j + 2 < src.len() && src[j + 1].t <= t {
            j += 1;
        }
        let (a, b) = (&src[j], &src[j + 1]);
        let u = ((t - a.t) / (b.t - a.t)).max(T::zero()).min(T::one());
        out.push(interpolate_frame(a, b, t, u)?);
    }
    MotionSequence::new(out, target_fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::quat::Quat;

    fn pose(p: [f64; 3], axis: [f64; 3], angle: f64) -> Pose<f64> {
        Pose::new(p, Quat::from_axis_angle(axis, angle).unwrap()).unwrap()
    }

    fn uniform(n: usize, fps: f64) -> MotionSequence<f64> {
        let frames = (0..n)
            .map(|k| {
                let t = k as f64 / fps;
                MotionFrame {
                    t,
                    head: pose([t.sin(), 1.6, 0.1 * t], [0.0, 1.0, 0.0], 0.3 * t),
                    left_hand: pose([-0.3, 1.0 + 0.1 * t.cos(), 0.2], [1.0, 0.0, 0.0], t),
                    right_hand: pose([0.3, 1.0, 0.2 * t], [0.2, 0.3, 1.0], -0.7 * t),
                }
            })
            .collect();
        MotionSequence::new(frames, fps).unwrap()
    }

    #[test]
    fn lerp_examples() {
        assert_eq!(lerp_position([0.0, 0.0, 0.0], [1.0, 2.0, 3.0], 0.0).unwrap(), [0.0; 3]);
        assert_eq!(
            lerp_position([0.0, 0.0, 0.0], [1.0, 2.0, 3.0], 0.5).unwrap(),
            [0.5, 1.0, 1.5]
        );
        assert_eq!(
            lerp_position([1.0, 1.0, 1.0], [4.0, 1.0, -2.0], 0.25).unwrap(),
            [1.75, 1.0, 0.25]
        );
        assert!(lerp_position([f64::NAN, 0.0, 0.0], [0.0; 3], 0.5).is_err());
    }

    #[test]
    fn uniform_input_is_reproduced() {
        let seq = uniform(95, 30.0);
        let out = resample(&seq, 30.0).unwrap();
        assert_eq!(out.len(), seq.len());
        for (a, b) in seq.frames().iter().zip(out.frames()) {
            assert!((a.t - b.t).abs() < 1e-9);
            for (x, y) in a.to_row().iter().zip(b.to_row()) {
                assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn sixty_fps_halves_frame_count() {
        let seq = uniform(240, 60.0);
        let out = resample(&seq, 30.0).unwrap();
        assert!((out.len() as i64 - 120).abs() <= 1, "{}", out.len());
        for f in out.frames() {
            for d in 0..DEVICES {
                assert!((f.device(d).orientation.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_frame_span_follows_interpolation_path() {
        let a = MotionFrame {
            t: 0.0,
            head: pose([0.0, 1.5, 0.0], [0.0, 0.0, 1.0], 0.0),
            left_hand: pose([-0.2, 1.0, 0.3], [1.0, 0.0, 0.0], 0.2),
            right_hand: pose([0.2, 1.0, 0.3], [0.0, 1.0, 0.0], -0.4),
        };
        let b = MotionFrame {
            t: 1.0,
            head: pose([0.3, 1.6, -0.1], [0.0, 0.0, 1.0], 1.2),
            left_hand: pose([-0.5, 1.3, 0.1], [1.0, 0.0, 0.0], -0.9),
            right_hand: pose([0.6, 0.8, 0.4], [0.0, 1.0, 0.0], 2.0),
        };
        let seq = MotionSequence::new(vec![a, b], 30.0).unwrap();
        let out = resample(&seq, 30.0).unwrap();
        assert_eq!(out.len(), 31);
        // Scalar oracle: single-axis rotations interpolate their angles linearly.
        let angles = [(0.0, 1.2), (0.2, -0.9), (-0.4, 2.0)];
        let axes = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        for (k, f) in out.frames().iter().enumerate() {
            let u = k as f64 / 30.0;
            assert!((f.t - u).abs() < 1e-12);
            for d in 0..DEVICES {
                let (pa, pb) = (a.device(d).position, b.device(d).position);
                for c in 0..3 {
                    let want = pa[c] + u * (pb[c] - pa[c]);
                    assert!((f.device(d).position[c] - want).abs() < 1e-12);
                }
                let ang = angles[d].0 + u * (angles[d].1 - angles[d].0);
                let want = Quat::from_axis_angle(axes[d], ang).unwrap();
                let got = f.device(d).orientation;
                assert!(got.angle_to(want) < 1e-6, "device {d} frame {k}");
            }
        }
    }

    #[test]
    fn rejects_single_frame() {
        let seq = uniform(1, 30.0);
        assert!(matches!(resample(&seq, 30.0), Err(Error::InvalidInput(_))));
        assert!(resample(&uniform(5, 30.0), 0.0).is_err());
    }
}
