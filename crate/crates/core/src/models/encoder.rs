use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::nn::{join, Lstm, LstmTrace, Module};
use crate::scalar::Scalar;

/// Fixed-width summary of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T>(pub Array1<T>);

impl<T: Scalar> Embedding<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &Self) -> T {
        euclidean(&self.0.view(), &other.0.view())
    }
}

pub(crate) fn euclidean<T: Scalar>(a: &ArrayView1<'_, T>, b: &ArrayView1<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum::<T>()
        .sqrt()
}

/// LSTM funnel: per-frame LSTM, mean-pool each chunk, second LSTM over chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub frame_lstm: Lstm<T>,
    pub chunk_lstm: Lstm<T>,
    chunk_len: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderTrace<T> {
    frames: LstmTrace<T>,
    pooled: Array2<T>,
    chunks: LstmTrace<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            frame_lstm: Lstm::new(rng, cfg.input_dim, cfg.frame_state_dim),
            chunk_lstm: Lstm::new(rng, cfg.frame_state_dim, cfg.embedding_dim),
            chunk_len: cfg.chunk_len,
        })
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            input_dim: self.frame_lstm.input_dim(),
            frame_state_dim: self.frame_lstm.units(),
            chunk_len: self.chunk_len,
            embedding_dim: self.chunk_lstm.units(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.chunk_lstm.units()
    }

    fn check(&self, x: &ArrayView2<'_, T>) -> Result<()> {
        let (rows, cols) = x.dim();
        if cols != self.frame_lstm.input_dim() || rows == 0 || rows % self.chunk_len != 0 {
            return Err(Error::shape(
                format!("k*{} x {}", self.chunk_len, self.frame_lstm.input_dim()),
                format!("{rows}x{cols}"),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("encoder input is not finite".into()));
        }
        Ok(())
    }

    /// Mean of each consecutive `chunk_len` rows.
    pub fn pool(&self, frames: &ArrayView2<'_, T>) -> Array2<T> {
        let chunks = frames.nrows() / self.chunk_len;
        let mut out = Array2::zeros((chunks, frames.ncols()));
        let inv = T::one() / T::from_usize_lossy(self.chunk_len);
        for c in 0..chunks {
            let block = frames.slice(s![c * self.chunk_len..(c + 1) * self.chunk_len, ..]);
            out.row_mut(c).assign(&(block.sum_axis(Axis(0)) * inv));
        }
        out
    }

    /// Per-chunk summaries produced by the first two stages.
    pub fn summaries(&self, x: &ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check(x)?;
        let frames = self.frame_lstm.forward(x);
        Ok(self.pool(&frames.h.view()))
    }

    pub fn forward(&self, x: &ArrayView2<'_, T>) -> Result<(Embedding<T>, EncoderTrace<T>)> {
        self.check(x)?;
        let frames = self.frame_lstm.forward(x);
        let pooled = self.pool(&frames.h.view());
        let chunks = self.chunk_lstm.forward(&pooled.view());
        let emb = chunks.h.row(chunks.h.nrows() - 1).to_owned();
        Ok((Embedding(emb), EncoderTrace { frames, pooled, chunks }))
    }

    pub fn encode(&self, x: &ArrayView2<'_, T>) -> Result<Embedding<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagates `d_emb`; returns the input gradient.
    pub fn backward(
        &self,
        x: &ArrayView2<'_, T>,
        trace: &EncoderTrace<T>,
        d_emb: &ArrayView1<'_, T>,
        grad: Option<&mut Self>,
    ) -> Array2<T> {
        let chunks = trace.pooled.nrows();
        let mut dh2 = Array2::zeros((chunks, self.chunk_lstm.units()));
        dh2.row_mut(chunks - 1).assign(d_emb);
        let (g1, g2) = match grad {
            Some(g) => (Some(&mut g.frame_lstm), Some(&mut g.chunk_lstm)),
            None => (None, None),
        };
        let d_pooled = self.chunk_lstm.backward(&trace.pooled.view(), &trace.chunks, &dh2.view(), g2);
        let inv = T::one() / T::from_usize_lossy(self.chunk_len);
        let mut dh1 = Array2::zeros((x.nrows(), self.frame_lstm.units()));
        for (r, mut row) in dh1.outer_iter_mut().enumerate() {
            row.assign(&(&d_pooled.row(r / self.chunk_len) * inv));
        }
        self.frame_lstm.backward(x, &trace.frames, &dh1.view(), g1)
    }
}

impl<T: Scalar> Module<T> for Encoder<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.frame_lstm.visit(&join(prefix, "frame_lstm"), f);
        self.chunk_lstm.visit(&join(prefix, "chunk_lstm"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.frame_lstm.visit_mut(&join(prefix, "frame_lstm"), f);
        self.chunk_lstm.visit_mut(&join(prefix, "chunk_lstm"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::{check_input_grad, check_param_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> EncoderConfig {
        EncoderConfig { input_dim: 3, frame_state_dim: 4, chunk_len: 5, embedding_dim: 3 }
    }

    #[test]
    fn default_embedding_is_256_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::<f32>::new(&mut rng, &EncoderConfig::default()).unwrap();
        let x = Array2::from_shape_fn((900, 21), |(r, c)| ((r + c) as f32 * 0.01).sin());
        let e = enc.encode(&x.view()).unwrap();
        assert_eq!(e.len(), 256);
        assert_eq!(e, enc.encode(&x.view()).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::<f64>::new(&mut rng, &small()).unwrap();
        assert!(enc.encode(&Array2::zeros((7, 3)).view()).is_err());
        assert!(enc.encode(&Array2::zeros((10, 4)).view()).is_err());
    }

    #[test]
    fn pooling_ignores_within_chunk_arrangement() {
        // Replace chunk 1's frame features with their mean repeated: pooled row unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::<f64>::new(&mut rng, &small()).unwrap();
        let frames = Array2::from_shape_fn((15, 4), |(r, c)| ((r * 4 + c) as f64 * 0.37).sin());
        let pooled = enc.pool(&frames.view());
        let mut flat = frames.clone();
        let mean = frames.slice(s![5..10, ..]).mean_axis(Axis(0)).unwrap();
        for r in 5..10 {
            flat.row_mut(r).assign(&mean);
        }
        let pooled2 = enc.pool(&flat.view());
        for c in 0..4 {
            assert!((pooled[[1, c]] - pooled2[[1, c]]).abs() < 1e-15);
        }
        assert_eq!(pooled.row(0), pooled2.row(0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = Encoder::<f64>::new(&mut rng, &small()).unwrap();
        let x = Array2::from_shape_fn((10, 3), |(r, c)| ((r * 3 + c) as f64 * 0.41).cos());
        let w = Array1::from(vec![0.3, -1.1, 0.7]);
        let loss = |e: &Encoder<f64>, x: &Array2<f64>| e.encode(&x.view()).unwrap().0.dot(&w);
        let (_, tr) = enc.forward(&x.view()).unwrap();
        let mut grad = enc.zeros_like();
        let dx = enc.backward(&x.view(), &tr, &w.view(), Some(&mut grad));
        check_param_grad(&enc, &grad, |e| loss(e, &x), 1e-6);
        check_input_grad(&x, &dx, |x| loss(&enc, x), 1e-6);
    }
}
