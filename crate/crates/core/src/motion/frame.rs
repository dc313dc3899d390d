use serde::{Deserialize, Serialize};

use super::quat::Quat;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of tracked devices: head, left hand, right hand.
pub const DEVICES: usize = 3;
/// Scalars per device: x, y, z, i, j, k, w.
pub const DEVICE_DIM: usize = 7;
/// Width of one canonical frame row.
pub const FRAME_DIM: usize = DEVICES * DEVICE_DIM;

pub const DEVICE_NAMES: [&str; DEVICES] = ["head", "left_hand", "right_hand"];
pub const AXIS_NAMES: [&str; DEVICE_DIM] = ["x", "y", "z", "i", "j", "k", "w"];

/// Column of `axis` (0..7) of `device` (0..3) in the canonical row.
pub const fn column(device: usize, axis: usize) -> usize {
    device * DEVICE_DIM + axis
}

/// Columns holding the quaternion of each device.
pub fn quaternion_columns(device: usize) -> std::ops::Range<usize> {
    column(device, 3)..column(device, 7)
}

pub fn column_name(c: usize) -> String {
    format!("{}.{}", DEVICE_NAMES[c / DEVICE_DIM], AXIS_NAMES[c % DEVICE_DIM])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub position: [T; 3],
    pub orientation: Quat<T>,
}

impl<T: Scalar> Pose<T> {
    /// Validates the position and renormalizes the orientation.
    pub fn new(position: [T; 3], orientation: Quat<T>) -> Result<Self> {
        if position.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite position".into()));
        }
        Ok(Self {
            position,
            orientation: orientation.normalized()?,
        })
    }

    pub fn identity() -> Self {
        Self {
            position: [T::zero(); 3],
            orientation: Quat::identity(),
        }
    }

    fn write(&self, out: &mut [T]) {
        out[..3].copy_from_slice(&self.position);
        out[3..7].copy_from_slice(&self.orientation.to_array());
    }

    fn read(src: &[T]) -> Self {
        Self {
            position: [src[0], src[1], src[2]],
            orientation: Quat::new(src[3], src[4], src[5], src[6]),
        }
    }
}

/// One telemetry sample of the three devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame<T> {
    pub t: T,
    pub head: Pose<T>,
    #[serde(rename = "left")]
    pub left_hand: Pose<T>,
    #[serde(rename = "right")]
    pub right_hand: Pose<T>,
}

impl<T: Scalar> MotionFrame<T> {
    pub fn device(&self, d: usize) -> &Pose<T> {
        match d {
            0 => &self.head,
            1 => &self.left_hand,
            2 => &self.right_hand,
            _ => panic!("device index {d} out of range"),
        }
    }

    pub fn device_mut(&mut self, d: usize) -> &mut Pose<T> {
        match d {
            0 => &mut self.head,
            1 => &mut self.left_hand,
            2 => &mut self.right_hand,
            _ => panic!("device index {d} out of range"),
        }
    }

    /// Canonical 21-wide row: head, left, right; each x,y,z,i,j,k,w.
    pub fn to_row(&self) -> [T; FRAME_DIM] {
        let mut row = [T::zero(); FRAME_DIM];
        for d in 0..DEVICES {
            self.device(d).write(&mut row[d * DEVICE_DIM..(d + 1) * DEVICE_DIM]);
        }
        row
    }

    /// Inverse of [`to_row`](Self::to_row). Quaternions are taken verbatim.
    pub fn from_row(t: T, row: &[T]) -> Result<Self> {
        if row.len() != FRAME_DIM {
            return Err(Error::shape(FRAME_DIM, row.len()));
        }
        Ok(Self {
            t,
            head: Pose::read(&row[0..7]),
            left_hand: Pose::read(&row[7..14]),
            right_hand: Pose::read(&row[14..21]),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.to_row().iter().all(|v| v.is_finite())
    }

    /// Scales each orientation back to unit length.
    pub fn renormalize(&mut self) -> Result<()> {
        for d in 0..DEVICES {
            let p = self.device_mut(d);
            p.orientation = p.orientation.normalized()?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> MotionFrame<U> {
        let row = self.to_row();
        let row: Vec<U> = row.iter().map(|v| U::lit(v.as_f64())).collect();
        MotionFrame::from_row(U::lit(self.t.as_f64()), &row).expect("fixed width")
    }
}

/// Timestamped stream of frames with strictly increasing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSequence<T> {
    frames: Vec<MotionFrame<T>>,
    nominal_fps: T,
}

impl<T: Scalar> MotionSequence<T> {
    pub fn new(frames: Vec<MotionFrame<T>>, nominal_fps: T) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidInput("motion sequence is empty".into()));
        }
        if !(nominal_fps > T::zero()) {
            return Err(Error::InvalidInput(format!("nominal fps {nominal_fps} must be positive")));
        }
        for (n, f) in frames.iter().enumerate() {
            if !f.is_finite() {
                return Err(Error::InvalidInput(format!("frame {n} has non-finite values")));
            }
        }
        if let Some(n) = frames.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidInput(format!(
                "timestamps not strictly increasing at frame {}",
                n + 1
            )));
        }
        Ok(Self { frames, nominal_fps })
    }

    pub fn frames(&self) -> &[MotionFrame<T>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<MotionFrame<T>> {
        self.frames
    }

    pub fn nominal_fps(&self) -> T {
        self.nominal_fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start(&self) -> T {
        self.frames[0].t
    }

    pub fn end(&self) -> T {
        self.frames[self.frames.len() - 1].t
    }

    pub fn timestamps(&self) -> Vec<T> {
        self.frames.iter().map(|f| f.t).collect()
    }
}
