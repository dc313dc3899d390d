use ndarray::{Array2, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::classifier::require_zscored;
use super::config::NormalizerConfig;
use crate::error::{Error, Result};
use crate::motion::NormalizedWindow;
use crate::nn::{join, Activation, Dense, Lstm, LstmState, LstmTrace, Module};
use crate::scalar::Scalar;

/// Unidirectional LSTM with a per-frame linear read-out. Never sees the noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer<T> {
    pub lstm: Lstm<T>,
    pub head: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct NormalizerTrace<T> {
    lstm: LstmTrace<T>,
    out: Array2<T>,
}

impl<T> NormalizerTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.out
    }
}

impl<T: Scalar> Normalizer<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, cfg: &NormalizerConfig) -> Result<Self> {
        if cfg.channels == 0 || cfg.state_dim == 0 {
            return Err(Error::Config("normalizer dimensions must be positive".into()));
        }
        Ok(Self {
            lstm: Lstm::new(rng, cfg.channels, cfg.state_dim),
            head: Dense::new(rng, cfg.state_dim, cfg.channels, Activation::Linear),
        })
    }

    pub fn config(&self) -> NormalizerConfig {
        NormalizerConfig { channels: self.lstm.input_dim(), state_dim: self.lstm.units() }
    }

    pub fn channels(&self) -> usize {
        self.lstm.input_dim()
    }

    fn check(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        if x.ncols() != self.channels() || x.nrows() == 0 {
            return Err(Error::shape(format!("n x {}", self.channels()), format!("{}x{}", x.nrows(), x.ncols())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &ArrayView2<'_, T>) -> Result<NormalizerTrace<T>> {
        self.check(x)?;
        let lstm = self.lstm.forward(x);
        let out = self.head.forward(&lstm.h.view());
        Ok(NormalizerTrace { lstm, out })
    }

    pub fn backward(&self, x: &ArrayView2<'_, T>, trace: &NormalizerTrace<T>, dout: &ArrayView2<'_, T>, grad: &mut Self) {
        let dh = self.head.backward(&trace.lstm.h.view(), &trace.out.view(), dout, Some(&mut grad.head));
        self.lstm.backward(x, &trace.lstm, &dh.view(), Some(&mut grad.lstm));
    }

    pub fn initial_state(&self) -> LstmState<T> {
        LstmState::zeros(self.lstm.units())
    }

    /// One causal inference step shared by batch and streaming callers.
    pub fn step(&self, x: &[T], state: &mut LstmState<T>, out: &mut [T]) {
        self.lstm.step(x, state);
        self.head.forward_row(&state.h, out);
    }

    pub fn infer(&self, x: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(x)?;
        let mut state = self.initial_state();
        let mut out = Array2::zeros(x.dim());
        let mut buf = vec![T::zero(); x.ncols()];
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            buf.iter_mut().zip(row.iter()).for_each(|(b, v)| *b = *v);
            self.step(&buf, &mut state, o.as_slice_mut().expect("contiguous row"));
        }
        Ok(out)
    }

    /// Maps a z-scored anonymized window toward unmodified motion.
    pub fn normalize(&self, w: &NormalizedWindow<T>) -> Result<NormalizedWindow<T>> {
        require_zscored(w)?;
        NormalizedWindow::from_zscored(self.infer(&w.view())?)
    }
}

impl<T: Scalar> Module<T> for Normalizer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::check_param_grad;
    use ndarray::s;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = Normalizer::<f32>::new(&mut rng, &NormalizerConfig::default()).unwrap();
        assert_eq!(n.param_count(), 284_672 + 5_397);
    }

    #[test]
    fn stepwise_matches_batched_and_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = Normalizer::<f64>::new(&mut rng, &NormalizerConfig { channels: 3, state_dim: 5 }).unwrap();
        let x = Array2::from_shape_fn((15, 3), |(r, c)| ((r * 3 + c) as f64 * 0.37).sin());
        let b = n.forward(&x.view()).unwrap();
        let s = n.infer(&x.view()).unwrap();
        for (p, q) in b.output().iter().zip(s.iter()) {
            assert!((p - q).abs() < 1e-12);
        }
        let mut y = x.clone();
        y.slice_mut(s![9.., ..]).fill(4.0);
        let t = n.infer(&y.view()).unwrap();
        assert_eq!(s.slice(s![..9, ..]), t.slice(s![..9, ..]));
        assert_eq!(s, n.infer(&x.view()).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = Normalizer::<f64>::new(&mut rng, &NormalizerConfig { channels: 3, state_dim: 4 }).unwrap();
        let x = Array2::from_shape_fn((7, 3), |(r, c)| ((r * 3 + c) as f64 * 0.53).cos());
        let w = Array2::from_shape_fn((7, 3), |(r, c)| ((r + c) as f64 * 0.9).sin());
        let tr = n.forward(&x.view()).unwrap();
        let mut grad = n.zeros_like();
        n.backward(&x.view(), &tr, &w.view(), &mut grad);
        check_param_grad(&n, &grad, |m| (m.forward(&x.view()).unwrap().output() * &w).sum(), 1e-6);
    }
}
