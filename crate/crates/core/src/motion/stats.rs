use ndarray::{Array2, ArrayView2, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

use super::frame::FRAME_DIM;
use super::window::NormalizedWindow;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower bound applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-6;

/// Per-column mean and (population) standard deviation of the 21 canonical columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl DimensionStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != FRAME_DIM || std.len() != FRAME_DIM {
            return Err(Error::shape(FRAME_DIM, format!("{}/{}", mean.len(), std.len())));
        }
        if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput("statistics must be finite with positive std".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; FRAME_DIM],
            std: vec![1.0; FRAME_DIM],
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|m| *m == 0.0) && self.std.iter().all(|s| *s == 1.0)
    }

    /// Fits statistics over every row of every array (each `rows × 21`).
    pub fn fit_arrays<'a, T: Scalar>(
        arrays: impl IntoIterator<Item = ArrayView2<'a, T>>,
    ) -> Result<Self> {
        // Chan/Welford merge per column, in f64.
        let mut count = 0usize;
        let mut mean = vec![0.0f64; FRAME_DIM];
        let mut m2 = vec![0.0f64; FRAME_DIM];
        for a in arrays {
            if a.ncols() != FRAME_DIM {
                return Err(Error::shape(FRAME_DIM, a.ncols()));
            }
            for row in a.outer_iter() {
                count += 1;
                let n = count as f64;
                for (c, v) in row.iter().enumerate() {
                    let x = v.as_f64();
                    let delta = x - mean[c];
                    mean[c] += delta / n;
                    m2[c] += delta * (x - mean[c]);
                }
            }
        }
        if count == 0 {
            return Err(Error::InvalidInput("cannot fit statistics on an empty corpus".into()));
        }
        let std = m2
            .iter()
            .map(|s| (s / count as f64).sqrt().max(STD_FLOOR))
            .collect();
        Self::new(mean, std)
    }

    pub fn apply_row<T: Scalar>(&self, mut row: ArrayViewMut1<'_, T>) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - T::lit(self.mean[c])) / T::lit(self.std[c]);
        }
    }

    pub fn invert_row<T: Scalar>(&self, mut row: ArrayViewMut1<'_, T>) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * T::lit(self.std[c]) + T::lit(self.mean[c]);
        }
    }

    pub fn apply_array<T: Scalar>(&self, a: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        if a.ncols() != FRAME_DIM {
            return Err(Error::shape(FRAME_DIM, a.ncols()));
        }
        let mut out = a.to_owned();
        for row in out.axis_iter_mut(Axis(0)) {
            self.apply_row(row);
        }
        Ok(out)
    }

    pub fn invert_array<T: Scalar>(&self, a: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        if a.ncols() != FRAME_DIM {
            return Err(Error::shape(FRAME_DIM, a.ncols()));
        }
        let mut out = a.to_owned();
        for row in out.axis_iter_mut(Axis(0)) {
            self.invert_row(row);
        }
        Ok(out)
    }

    /// Affine map taking a population with stats `from` onto stats `to`:
    /// `x ↦ (x − from.mean) · to.std / from.std + to.mean`.
    pub fn shift_row<T: Scalar>(from: &Self, to: &Self, mut row: ArrayViewMut1<'_, T>) {
        for (c, v) in row.iter_mut().enumerate() {
            let z = (*v - T::lit(from.mean[c])) / T::lit(from.std[c]);
            *v = z * T::lit(to.std[c]) + T::lit(to.mean[c]);
        }
    }
}

pub fn zscore_fit<T: Scalar>(windows: &[NormalizedWindow<T>]) -> Result<DimensionStats> {
    DimensionStats::fit_arrays(windows.iter().map(|w| w.view()))
}

pub fn zscore_apply<T: Scalar>(w: &NormalizedWindow<T>, s: &DimensionStats) -> Result<NormalizedWindow<T>> {
    NormalizedWindow::from_zscored(s.apply_array(&w.view())?)
}

/// Maps a z-scored window back to motion space (quaternions are not renormalized).
pub fn zscore_invert<T: Scalar>(w: &NormalizedWindow<T>, s: &DimensionStats) -> Result<Array2<T>> {
    s.invert_array(&w.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::window::WINDOW_FRAMES;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zwin(mut f: impl FnMut(usize, usize) -> f64) -> NormalizedWindow<f64> {
        NormalizedWindow::from_zscored(Array2::from_shape_fn((WINDOW_FRAMES, FRAME_DIM), |(r, c)| f(r, c)))
            .unwrap()
    }

    #[test]
    fn constant_window_hits_floor() {
        let s = zscore_fit(&[zwin(|_, _| 3.5)]).unwrap();
        assert!(s.mean().iter().all(|m| (*m - 3.5).abs() < 1e-12));
        assert!(s.std().iter().all(|v| *v == STD_FLOOR));
    }

    #[test]
    fn symmetric_pair() {
        let s = zscore_fit(&[zwin(|_, _| 0.0), zwin(|_, _| 2.0)]).unwrap();
        assert!(s.mean().iter().all(|m| (*m - 1.0).abs() < 1e-12));
        assert!(s.std().iter().all(|v| (*v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ws: Vec<_> = (0..3)
            .map(|_| zwin(|_, c| rng.random_range(-2.0..2.0) * (c as f64 + 1.0) + c as f64))
            .collect();
        let s = zscore_fit(&ws).unwrap();
        let n = (ws.len() * WINDOW_FRAMES) as f64;
        for c in 0..FRAME_DIM {
            let mut sum = 0.0;
            for w in &ws {
                sum += w.data().column(c).sum();
            }
            let mean = sum / n;
            let mut ss = 0.0;
            for w in &ws {
                ss += w.data().column(c).iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
            let std = (ss / n).sqrt();
            assert!((s.mean()[c] - mean).abs() < 1e-9);
            assert!((s.std()[c] - std).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(zscore_fit::<f64>(&[]).is_err());
    }

    #[test]
    fn identity_stats_leave_window_unchanged() {
        let w = zwin(|r, c| (r * c) as f64 * 0.01);
        assert_eq!(zscore_apply(&w, &DimensionStats::identity()).unwrap(), w);
    }

    #[test]
    fn hand_checked_block() {
        let mut mean = vec![0.0; FRAME_DIM];
        let mut std = vec![1.0; FRAME_DIM];
        mean[0] = 1.0;
        std[0] = 2.0;
        mean[1] = -3.0;
        std[1] = 0.5;
        let s = DimensionStats::new(mean, std).unwrap();
        let w = zwin(|r, c| match (r, c) {
            (0, 0) => 5.0,
            (0, 1) => -2.0,
            (1, 0) => 0.0,
            (1, 1) => -3.5,
            _ => 0.0,
        });
        let z = zscore_apply(&w, &s).unwrap();
        assert_eq!(z.data()[[0, 0]], 2.0);
        assert_eq!(z.data()[[0, 1]], 2.0);
        assert_eq!(z.data()[[1, 0]], -0.5);
        assert_eq!(z.data()[[1, 1]], -1.0);
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = zwin(|_, _| rng.random_range(-10.0..10.0));
        let s = DimensionStats::new(
            (0..FRAME_DIM).map(|c| c as f64 * 0.3 - 2.0).collect(),
            (0..FRAME_DIM).map(|c| 0.05 + c as f64 * 0.2).collect(),
        )
        .unwrap();
        let back = zscore_invert(&zscore_apply(&w, &s).unwrap(), &s).unwrap();
        let err = (&back - w.data()).mapv(f64::abs).fold(0.0f64, |a, b| a.max(*b));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rejects_non_positive_std() {
        assert!(DimensionStats::new(vec![0.0; FRAME_DIM], vec![0.0; FRAME_DIM]).is_err());
        assert!(DimensionStats::new(vec![0.0; 3], vec![1.0; 3]).is_err());
    }
}
