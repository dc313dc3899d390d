use ndarray::{Array1, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::classifier::require_zscored;
use super::config::EncoderConfig;
use super::encoder::{euclidean, Embedding, Encoder};
use crate::error::Result;
use crate::motion::NormalizedWindow;
use crate::nn::loss::bce_with_logits;
use crate::nn::{join, Module};
use crate::scalar::{sigmoid, Scalar};

/// Siamese scorer: one shared encoder, `sigmoid(bias - scale * distance)`.
///
/// The scale is stored as its logarithm so it stays positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel<T> {
    pub encoder: Encoder<T>,
    pub log_scale: Array1<T>,
    pub bias: Array1<T>,
}

/// Loss and embedding gradients of one scored pair.
#[derive(Debug, Clone)]
pub struct HeadGrad<T> {
    pub loss: T,
    pub logit: T,
    pub d_a: Array1<T>,
    pub d_b: Array1<T>,
}

impl<T: Scalar> SimilarityModel<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, cfg: &EncoderConfig) -> Result<Self> {
        Ok(Self {
            encoder: Encoder::new(rng, cfg)?,
            log_scale: Array1::zeros(1),
            bias: Array1::from_elem(1, T::one()),
        })
    }

    pub fn config(&self) -> EncoderConfig {
        self.encoder.config()
    }

    pub fn scale(&self) -> T {
        self.log_scale[0].exp()
    }

    pub fn logit_from_distance(&self, d: T) -> T {
        self.bias[0] - self.scale() * d
    }

    pub fn score_from_distance(&self, d: T) -> T {
        sigmoid(self.logit_from_distance(d))
    }

    pub fn score_embeddings(&self, a: &Embedding<T>, b: &Embedding<T>) -> T {
        self.score_from_distance(a.distance(b))
    }

    pub fn embed(&self, x: &ArrayView2<'_, T>) -> Result<Embedding<T>> {
        self.encoder.encode(x)
    }

    pub fn score_arrays(&self, a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<T> {
        Ok(self.score_embeddings(&self.embed(a)?, &self.embed(b)?))
    }

    /// Similarity score in `[0, 1]` for two z-scored windows.
    pub fn similarity(&self, a: &NormalizedWindow<T>, b: &NormalizedWindow<T>) -> Result<T> {
        require_zscored(a)?;
        require_zscored(b)?;
        self.score_arrays(&a.view(), &b.view())
    }

    /// BCE of the head against `target`; head parameter gradients go into `grad` when given.
    pub fn head_backward(
        &self,
        ea: &ArrayView1<'_, T>,
        eb: &ArrayView1<'_, T>,
        target: T,
        grad: Option<&mut Self>,
    ) -> HeadGrad<T> {
        let d = euclidean(ea, eb);
        let scale = self.scale();
        let logit = self.bias[0] - scale * d;
        let (loss, dz) = bce_with_logits(logit, target);
        if let Some(g) = grad {
            g.bias[0] += dz;
            g.log_scale[0] -= dz * scale * d;
        }
        let dd = -dz * scale;
        let diff = ea - eb;
        let d_a = if d > T::zero() { diff * (dd / d) } else { Array1::zeros(ea.len()) };
        let d_b = d_a.mapv(|v| -v);
        HeadGrad { loss, logit, d_a, d_b }
    }

    /// Full pair step with shared weights; returns `(loss, logit)`.
    pub fn pair_backward(
        &self,
        a: &ArrayView2<'_, T>,
        b: &ArrayView2<'_, T>,
        target: T,
        grad: &mut Self,
    ) -> Result<(T, T)> {
        let (ea, ta) = self.encoder.forward(a)?;
        let (eb, tb) = self.encoder.forward(b)?;
        let h = self.head_backward(&ea.0.view(), &eb.0.view(), target, Some(grad));
        self.encoder.backward(a, &ta, &h.d_a.view(), Some(&mut grad.encoder));
        self.encoder.backward(b, &tb, &h.d_b.view(), Some(&mut grad.encoder));
        Ok((h.loss, h.logit))
    }
}

impl<T: Scalar> Module<T> for SimilarityModel<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        f(join(prefix, "log_scale"), self.log_scale.view().into_dyn());
        f(join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        f(join(prefix, "log_scale"), self.log_scale.view_mut().into_dyn());
        f(join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testing::check_param_grad;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> EncoderConfig {
        EncoderConfig { input_dim: 3, frame_state_dim: 4, chunk_len: 5, embedding_dim: 3 }
    }

    fn model() -> SimilarityModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = SimilarityModel::new(&mut rng, &tiny()).unwrap();
        m.log_scale[0] = 0.3;
        m.bias[0] = 0.8;
        m
    }

    fn arr(seed: f64) -> Array2<f64> {
        Array2::from_shape_fn((10, 3), |(r, c)| ((r * 3 + c) as f64 * seed).sin())
    }

    #[test]
    fn identical_inputs_hit_the_ceiling() {
        let m = model();
        let a = arr(0.31);
        let s = m.score_arrays(&a.view(), &a.view()).unwrap();
        assert_eq!(s, sigmoid(0.8));
    }

    #[test]
    fn symmetric_exactly() {
        let m = model();
        let (a, b) = (arr(0.31), arr(0.77));
        assert_eq!(
            m.score_arrays(&a.view(), &b.view()).unwrap(),
            m.score_arrays(&b.view(), &a.view()).unwrap()
        );
    }

    proptest! {
        #[test]
        fn score_never_increases_with_offset(
            base in prop::collection::vec(-1.0f64..1.0, 3),
            dir in prop::collection::vec(-1.0f64..1.0, 3),
            t1 in 0.0f64..3.0,
            dt in 0.0f64..3.0,
        ) {
            let m = model();
            let a = Embedding(Array1::from(base.clone()));
            let at = |t: f64| Embedding(Array1::from_iter(base.iter().zip(&dir).map(|(b, d)| b + t * d)));
            let s1 = m.score_embeddings(&a, &at(t1));
            let s2 = m.score_embeddings(&a, &at(t1 + dt));
            prop_assert!(s2 <= s1);
        }
    }

    #[test]
    fn pair_gradients_match_finite_differences() {
        let m = model();
        let (a, b) = (arr(0.31), arr(0.77));
        for target in [0.0, 1.0] {
            let mut grad = m.zeros_like();
            m.pair_backward(&a.view(), &b.view(), target, &mut grad).unwrap();
            let loss = |m: &SimilarityModel<f64>| {
                let s = m.score_arrays(&a.view(), &b.view()).unwrap();
                -(target * s.ln() + (1.0 - target) * (1.0 - s).ln())
            };
            check_param_grad(&m, &grad, loss, 1e-6);
        }
    }
}
