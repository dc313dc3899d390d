use ndarray::{Array1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::config::ClassifierConfig;
use super::encoder::Encoder;
use crate::error::{Error, Result};
use crate::motion::NormalizedWindow;
use crate::nn::loss::{log_softmax, softmax, softmax_cross_entropy};
use crate::nn::{join, Activation, Dense, Module};
use crate::scalar::Scalar;

/// LSTM-funnel encoder followed by dense layers and a softmax over enrolled users.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<T> {
    pub encoder: Encoder<T>,
    pub hidden: Vec<Dense<T>>,
    pub head: Dense<T>,
    labels: Vec<String>,
}

impl<T: Scalar> Classifier<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, cfg: &ClassifierConfig, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("classifier needs at least one class".into()));
        }
        let encoder = Encoder::new(rng, &cfg.encoder)?;
        let mut width = cfg.encoder.embedding_dim;
        let mut hidden = Vec::with_capacity(cfg.hidden_dense_dims.len());
        for &d in &cfg.hidden_dense_dims {
            if d == 0 {
                return Err(Error::Config("hidden layer width must be positive".into()));
            }
            hidden.push(Dense::new(rng, width, d, Activation::Relu));
            width = d;
        }
        let head = Dense::new(rng, width, labels.len(), Activation::Linear);
        Ok(Self { encoder, hidden, head, labels })
    }

    pub fn config(&self) -> ClassifierConfig {
        ClassifierConfig {
            encoder: self.encoder.config(),
            hidden_dense_dims: self.hidden.iter().map(Dense::output_dim).collect(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn logits(&self, x: &ArrayView2<'_, T>) -> Result<Array1<T>> {
        let emb = self.encoder.encode(x)?;
        let mut v = emb.0;
        for layer in &self.hidden {
            v = layer.forward_vec(&v.view());
        }
        Ok(self.head.forward_vec(&v.view()))
    }

    /// Class probabilities for a z-scored window.
    pub fn classify(&self, w: &NormalizedWindow<T>) -> Result<Array1<T>> {
        require_zscored(w)?;
        Ok(softmax(&self.logits(&w.view())?.view()))
    }

    pub fn log_probabilities(&self, x: &ArrayView2<'_, T>) -> Result<Array1<T>> {
        Ok(log_softmax(&self.logits(x)?.view()))
    }

    /// Cross-entropy against `label`; accumulates parameter gradients into `grad`.
    pub fn loss_backward(&self, x: &ArrayView2<'_, T>, label: usize, grad: &mut Self) -> Result<(T, Array1<T>)> {
        if label >= self.labels.len() {
            return Err(Error::InvalidInput(format!("label {label} out of range")));
        }
        let (emb, trace) = self.encoder.forward(x)?;
        let mut acts = vec![emb.0.insert_axis(Axis(0))];
        for layer in &self.hidden {
            let next = layer.forward(&acts.last().unwrap().view());
            acts.push(next);
        }
        let logits = self.head.forward(&acts.last().unwrap().view());
        let (loss, dlogits) = softmax_cross_entropy(&logits.row(0), label);
        let mut d = self.head.backward(
            &acts.last().unwrap().view(),
            &logits.view(),
            &dlogits.insert_axis(Axis(0)).view(),
            Some(&mut grad.head),
        );
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            d = layer.backward(&acts[i].view(), &acts[i + 1].view(), &d.view(), Some(&mut grad.hidden[i]));
        }
        self.encoder.backward(x, &trace, &d.row(0), Some(&mut grad.encoder));
        Ok((loss, logits.row(0).to_owned()))
    }
}

pub(crate) fn require_zscored<T: Scalar>(w: &NormalizedWindow<T>) -> Result<()> {
    if w.is_zscored() {
        Ok(())
    } else {
        Err(Error::InvalidInput("model input must be z-scored".into()))
    }
}

impl<T: Scalar> Module<T> for Classifier<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        for (i, l) in self.hidden.iter().enumerate() {
            l.visit(&join(prefix, &format!("hidden{i}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        for (i, l) in self.hidden.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("hidden{i}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::EncoderConfig;
    use crate::nn::testing::check_param_grad;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ClassifierConfig {
        ClassifierConfig {
            encoder: EncoderConfig { input_dim: 3, frame_state_dim: 4, chunk_len: 5, embedding_dim: 4 },
            hidden_dense_dims: vec![5],
        }
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = ClassifierConfig::default();
        cfg.encoder.frame_state_dim = 16;
        cfg.encoder.embedding_dim = 16;
        let clf = Classifier::<f32>::new(&mut rng, &cfg, labels(7)).unwrap();
        let w = NormalizedWindow::from_zscored(Array2::from_shape_fn((900, 21), |(r, c)| ((r * c) as f32 * 0.003).sin()))
            .unwrap();
        let p = clf.classify(&w).unwrap();
        assert_eq!(p.len(), 7);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!((p.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn raw_windows_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = tiny();
        cfg.encoder.input_dim = 21;
        cfg.encoder.chunk_len = 30;
        let clf = Classifier::<f64>::new(&mut rng, &cfg, labels(2)).unwrap();
        let mut data = Array2::zeros((900, 21));
        for d in 0..3 {
            data.column_mut(d * 7 + 6).fill(1.0);
        }
        let w = NormalizedWindow::from_motion(data).unwrap();
        assert!(clf.classify(&w).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clf = Classifier::<f64>::new(&mut rng, &tiny(), labels(3)).unwrap();
        let x = Array2::from_shape_fn((10, 3), |(r, c)| ((r * 3 + c) as f64 * 0.29).sin());
        let mut grad = clf.zeros_like();
        clf.loss_backward(&x.view(), 2, &mut grad).unwrap();
        check_param_grad(&clf, &grad, |m| -m.log_probabilities(&x.view()).unwrap()[2], 1e-6);
    }
}
