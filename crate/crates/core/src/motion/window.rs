use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::frame::{quaternion_columns, MotionSequence, DEVICES, FRAME_DIM};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Frames per model window: 30 s at 30 fps.
pub const WINDOW_FRAMES: usize = 900;

const QUAT_TOLERANCE: f64 = 1e-5;

/// Fixed 900×21 model input in canonical column order.
///
/// `zscored` marks tensors living in normalized space, which are exempt from
/// the unit-quaternion check.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow<T> {
    data: Array2<T>,
    zscored: bool,
}

impl<T: Scalar> NormalizedWindow<T> {
    /// Wraps motion-space data; every row's quaternions must be unit within 1e-5.
    pub fn from_motion(data: Array2<T>) -> Result<Self> {
        check_shape(&data.view())?;
        for (r, row) in data.outer_iter().enumerate() {
            for d in 0..DEVICES {
                let n = quaternion_columns(d).map(|c| row[c] * row[c]).sum::<T>().sqrt();
                if (n - T::one()).abs().as_f64() > QUAT_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "row {r} device {d}: quaternion norm {n} is not unit"
                    )));
                }
            }
        }
        Ok(Self { data, zscored: false })
    }

    /// Wraps z-scored data (no quaternion constraint).
    pub fn from_zscored(data: Array2<T>) -> Result<Self> {
        check_shape(&data.view())?;
        Ok(Self { data, zscored: true })
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    pub fn is_zscored(&self) -> bool {
        self.zscored
    }

    pub fn cast<U: Scalar>(&self) -> NormalizedWindow<U> {
        NormalizedWindow {
            data: self.data.mapv(|v| U::lit(v.as_f64())),
            zscored: self.zscored,
        }
    }
}

fn check_shape<T: Scalar>(data: &ArrayView2<'_, T>) -> Result<()> {
    if data.dim() != (WINDOW_FRAMES, FRAME_DIM) {
        return Err(Error::shape(
            format!("{WINDOW_FRAMES}x{FRAME_DIM}"),
            format!("{}x{}", data.nrows(), data.ncols()),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("window contains non-finite values".into()));
    }
    Ok(())
}

/// Handling of recordings shorter than one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortPolicy {
    /// Repeat the last frame up to the window length.
    #[default]
    PadLastFrame,
    Reject,
}

/// Flattens frames into a `len × 21` array.
pub fn sequence_to_array<T: Scalar>(seq: &MotionSequence<T>) -> Array2<T> {
    let mut out = Array2::zeros((seq.len(), FRAME_DIM));
    for (mut row, f) in out.outer_iter_mut().zip(seq.frames()) {
        for (dst, v) in row.iter_mut().zip(f.to_row()) {
            *dst = v;
        }
    }
    out
}

/// Takes the first 900 frames of a 30 fps sequence.
pub fn window<T: Scalar>(seq: &MotionSequence<T>, policy: ShortPolicy) -> Result<NormalizedWindow<T>> {
    let n = seq.len();
    if n < WINDOW_FRAMES && policy == ShortPolicy::Reject {
        return Err(Error::TooShort { got: n, need: WINDOW_FRAMES });
    }
    let rows = sequence_to_array(seq);
    let mut data = Array2::zeros((WINDOW_FRAMES, FRAME_DIM));
    for r in 0..WINDOW_FRAMES {
        data.row_mut(r).assign(&rows.row(r.min(n - 1)));
    }
    NormalizedWindow::from_motion(data)
}

/// Ordered projection onto a subset of the canonical columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    name: String,
    columns: Vec<usize>,
}

impl FeatureSubset {
    pub fn new(name: impl Into<String>, columns: Vec<usize>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidInput("feature subset is empty".into()));
        }
        let mut seen = [false; FRAME_DIM];
        for &c in &columns {
            if c >= FRAME_DIM {
                return Err(Error::InvalidInput(format!("column {c} outside 0..{FRAME_DIM}")));
            }
            if std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidInput(format!("column {c} listed twice")));
            }
        }
        Ok(Self { name: name.into(), columns })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn full() -> Self {
        Self::new("all", (0..FRAME_DIM).collect()).unwrap()
    }

    pub fn hands() -> Self {
        Self::new("hands", (7..FRAME_DIM).collect()).unwrap()
    }

    pub fn hand_rotations() -> Self {
        Self::new("hand_rotations", vec![10, 11, 12, 13, 17, 18, 19, 20]).unwrap()
    }

    pub fn left_hand_rotation() -> Self {
        Self::new("left_hand_rotation", vec![10, 11, 12, 13]).unwrap()
    }

    pub fn left_hand_w() -> Self {
        Self::new("left_hand_w", vec![13]).unwrap()
    }

    /// The 21/14/8/4/1 ablation ladder.
    pub fn ablation_ladder() -> Vec<Self> {
        vec![
            Self::full(),
            Self::hands(),
            Self::hand_rotations(),
            Self::left_hand_rotation(),
            Self::left_hand_w(),
        ]
    }
}

/// Column projection of any `rows × 21` array.
pub fn select_columns<T: Scalar>(data: &ArrayView2<'_, T>, fs: &FeatureSubset) -> Result<Array2<T>> {
    if data.ncols() != FRAME_DIM {
        return Err(Error::shape(FRAME_DIM, data.ncols()));
    }
    let mut out = Array2::zeros((data.nrows(), fs.len()));
    for (k, &c) in fs.columns().iter().enumerate() {
        if c >= FRAME_DIM {
            return Err(Error::InvalidInput(format!("column {c} outside 0..{FRAME_DIM}")));
        }
        out.column_mut(k).assign(&data.column(c));
    }
    Ok(out)
}

pub fn select_features<T: Scalar>(w: &NormalizedWindow<T>, fs: &FeatureSubset) -> Result<Array2<T>> {
    select_columns(&w.view(), fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::frame::{MotionFrame, Pose};
    use crate::motion::quat::Quat;

    fn seq(n: usize) -> MotionSequence<f64> {
        let frames = (0..n)
            .map(|k| {
                let t = k as f64 / 30.0;
                let p = |o: f64| {
                    Pose::new(
                        [o + t, 1.0 - t, 0.01 * k as f64],
                        Quat::from_axis_angle([0.0, 1.0, o], 0.01 * k as f64).unwrap(),
                    )
                    .unwrap()
                };
                MotionFrame { t, head: p(0.0), left_hand: p(1.0), right_hand: p(2.0) }
            })
            .collect();
        MotionSequence::new(frames, 30.0).unwrap()
    }

    #[test]
    fn truncates_long_input() {
        let s = seq(1000);
        let w = window(&s, ShortPolicy::Reject).unwrap();
        assert_eq!(w.data().dim(), (900, 21));
        assert_eq!(w.data().row(899).to_vec(), s.frames()[899].to_row().to_vec());
    }

    #[test]
    fn exact_length_is_identity() {
        let s = seq(900);
        let w = window(&s, ShortPolicy::Reject).unwrap();
        assert_eq!(w.data(), &sequence_to_array(&s));
    }

    #[test]
    fn short_input_pads_or_rejects() {
        let s = seq(450);
        let w = window(&s, ShortPolicy::PadLastFrame).unwrap();
        let last = w.data().row(449).to_owned();
        for r in 450..900 {
            assert_eq!(w.data().row(r), last);
        }
        assert!(matches!(
            window(&s, ShortPolicy::Reject),
            Err(Error::TooShort { got: 450, need: 900 })
        ));
    }

    #[test]
    fn motion_window_rejects_bad_quaternions() {
        let mut data = sequence_to_array(&seq(900));
        data[[10, 6]] = 3.0;
        assert!(NormalizedWindow::from_motion(data.clone()).is_err());
        assert!(NormalizedWindow::from_zscored(data).is_ok());
        assert!(NormalizedWindow::<f64>::from_zscored(Array2::zeros((899, 21))).is_err());
    }

    #[test]
    fn feature_subsets() {
        let w = window(&seq(900), ShortPolicy::Reject).unwrap();
        let all = select_features(&w, &FeatureSubset::full()).unwrap();
        assert_eq!(&all, w.data());
        let lw = select_features(&w, &FeatureSubset::left_hand_w()).unwrap();
        assert_eq!(lw.ncols(), 1);
        assert_eq!(lw.column(0), w.data().column(13));
        let sizes: Vec<usize> = FeatureSubset::ablation_ladder().iter().map(|f| f.len()).collect();
        assert_eq!(sizes, vec![21, 14, 8, 4, 1]);
        assert!(FeatureSubset::new("bad", vec![21]).is_err());
        assert!(FeatureSubset::new("dup", vec![1, 1]).is_err());
        assert!(FeatureSubset::new("empty", vec![]).is_err());
    }

    #[test]
    fn projection_is_idempotent() {
        let w = window(&seq(900), ShortPolicy::Reject).unwrap();
        let fs = FeatureSubset::hand_rotations();
        let once = select_features(&w, &fs).unwrap();
        let full = select_features(&w, &FeatureSubset::full()).unwrap();
        let twice = select_columns(&full.view(), &fs).unwrap();
        assert_eq!(once, twice);
    }
}
