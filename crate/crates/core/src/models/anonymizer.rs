use ndarray::{s, Array2, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::classifier::require_zscored;
use super::config::AnonymizerConfig;
use crate::error::{Error, Result};
use crate::motion::NormalizedWindow;
use crate::nn::{join, Activation, CausalConv1d, Dense, Module};
use crate::scalar::Scalar;

/// Session seed that selects the faux identity.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector<T>(Vec<T>);

impl<T: Scalar> NoiseVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("noise must be non-empty and finite".into()));
        }
        Ok(Self(values))
    }

    /// Independent standard normal components.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        Self((0..dim).map(|_| T::lit(StandardNormal.sample(rng))).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> NoiseVector<U> {
        NoiseVector(self.0.iter().map(|v| U::lit(v.as_f64())).collect())
    }
}

/// Fixed-capacity history of frames, iterated oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRing<T> {
    data: Vec<T>,
    width: usize,
    cap: usize,
    oldest: usize,
}

impl<T: Scalar> FrameRing<T> {
    /// All slots zero, matching causal zero padding.
    pub fn zeros(cap: usize, width: usize) -> Self {
        Self { data: vec![T::zero(); cap * width], width, cap, oldest: 0 }
    }

    /// All slots hold `frame`.
    pub fn filled(cap: usize, frame: &[T]) -> Self {
        let mut r = Self::zeros(cap, frame.len());
        for k in 0..cap {
            r.data[k * r.width..(k + 1) * r.width].copy_from_slice(frame);
        }
        r
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn push(&mut self, frame: &[T]) {
        let w = self.width;
        self.data[self.oldest * w..(self.oldest + 1) * w].copy_from_slice(frame);
        self.oldest = (self.oldest + 1) % self.cap;
    }

    pub fn iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.cap).map(move |k| {
            let slot = (self.oldest + k) % self.cap;
            &self.data[slot * self.width..(slot + 1) * self.width]
        })
    }
}

/// Causal conv over the last `kernel` frames, concatenated with the frame and
/// the noise, then a time-distributed dense stack back to the frame width.
#[derive(Debug, Clone, PartialEq)]
pub struct Anonymizer<T> {
    pub conv: CausalConv1d<T>,
    pub layers: Vec<Dense<T>>,
    noise_dim: usize,
}

#[derive(Debug, Clone)]
pub struct AnonymizerTrace<T> {
    col: Array2<T>,
    /// Hybrid input followed by each layer's output.
    acts: Vec<Array2<T>>,
}

impl<T> AnonymizerTrace<T> {
    pub fn output(&self) -> &Array2<T> {
        self.acts.last().expect("at least one layer")
    }
}

/// Reusable per-frame buffers for the row-wise path.
#[derive(Debug, Clone)]
pub struct AnonymizerScratch<T> {
    hybrid: Vec<T>,
    bufs: Vec<Vec<T>>,
}

impl<T: Scalar> Anonymizer<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, cfg: &AnonymizerConfig) -> Result<Self> {
        if cfg.channels == 0 || cfg.noise_dim == 0 || cfg.conv_filters == 0 || cfg.kernel == 0 {
            return Err(Error::Config("anonymizer dimensions must be positive".into()));
        }
        let conv = CausalConv1d::new(rng, cfg.channels, cfg.conv_filters, cfg.kernel);
        let mut width = cfg.hybrid_dim();
        let mut layers = Vec::new();
        for &d in &cfg.dense_dims {
            if d == 0 {
                return Err(Error::Config("dense width must be positive".into()));
            }
            layers.push(Dense::new(rng, width, d, Activation::Tanh));
            width = d;
        }
        layers.push(Dense::new(rng, width, cfg.channels, Activation::Linear));
        Ok(Self { conv, layers, noise_dim: cfg.noise_dim })
    }

    pub fn config(&self) -> AnonymizerConfig {
        let n = self.layers.len();
        AnonymizerConfig {
            channels: self.conv.channels(),
            noise_dim: self.noise_dim,
            conv_filters: self.conv.filters(),
            kernel: self.conv.kernel(),
            dense_dims: self.layers[..n - 1].iter().map(Dense::output_dim).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv.channels()
    }

    pub fn kernel(&self) -> usize {
        self.conv.kernel()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn check(&self, x: &ArrayView2<'_, T>, noise: &NoiseVector<T>) -> Result<()> {
        if x.ncols() != self.channels() || x.nrows() == 0 {
            return Err(Error::shape(format!("n x {}", self.channels()), format!("{}x{}", x.nrows(), x.ncols())));
        }
        if noise.len() != self.noise_dim {
            return Err(Error::shape(format!("noise of {}", self.noise_dim), noise.len()));
        }
        Ok(())
    }

    /// Batched training forward with zero causal padding.
    pub fn forward(&self, x: &ArrayView2<'_, T>, noise: &NoiseVector<T>) -> Result<AnonymizerTrace<T>> {
        self.check(x, noise)?;
        let (steps, ch) = x.dim();
        let nd = self.noise_dim;
        let (conv, col) = self.conv.forward(x);
        let mut hybrid = Array2::zeros((steps, ch + nd + self.conv.filters()));
        hybrid.slice_mut(s![.., ..ch]).assign(x);
        for mut row in hybrid.slice_mut(s![.., ch..ch + nd]).rows_mut() {
            row.iter_mut().zip(noise.as_slice()).for_each(|(d, v)| *d = *v);
        }
        hybrid.slice_mut(s![.., ch + nd..]).assign(&conv);
        let mut acts = vec![hybrid];
        for layer in &self.layers {
            let next = layer.forward(&acts.last().unwrap().view());
            acts.push(next);
        }
        Ok(AnonymizerTrace { col, acts })
    }

    /// Accumulates parameter gradients for `d loss / d output`.
    pub fn backward(&self, trace: &AnonymizerTrace<T>, dout: &ArrayView2<'_, T>, grad: &mut Self) {
        let mut d = dout.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(&trace.acts[i].view(), &trace.acts[i + 1].view(), &d.view(), Some(&mut grad.layers[i]));
        }
        let off = self.channels() + self.noise_dim;
        self.conv.backward(&trace.col, &d.slice(s![.., off..]), Some(&mut grad.conv), false);
    }

    pub fn scratch(&self) -> AnonymizerScratch<T> {
        AnonymizerScratch {
            hybrid: vec![T::zero(); self.channels() + self.noise_dim + self.conv.filters()],
            bufs: self.layers.iter().map(|l| vec![T::zero(); l.output_dim()]).collect(),
        }
    }

    /// One output frame from a full receptive field whose newest entry is the current frame.
    ///
    /// This is the only inference path; batch and streaming callers both go through it.
    pub fn infer_frame(&self, ring: &FrameRing<T>, noise: &[T], scratch: &mut AnonymizerScratch<T>, out: &mut [T]) {
        let ch = self.channels();
        let nd = self.noise_dim;
        let current = ring.iter().last().expect("non-empty ring");
        scratch.hybrid[..ch].copy_from_slice(current);
        scratch.hybrid[ch..ch + nd].copy_from_slice(noise);
        self.conv.forward_buffer(ring.iter(), &mut scratch.hybrid[ch + nd..]);
        let mut input: &[T] = &scratch.hybrid;
        for (layer, buf) in self.layers.iter().zip(scratch.bufs.iter_mut()) {
            layer.forward_row(input, buf);
            input = buf;
        }
        out.copy_from_slice(input);
    }

    /// Row-wise inference over `x`, starting from the given history.
    pub fn infer_from(&self, ring: &mut FrameRing<T>, x: &ArrayView2<'_, T>, noise: &NoiseVector<T>) -> Result<Array2<T>> {
        self.check(x, noise)?;
        let mut out = Array2::zeros(x.dim());
        let mut scratch = self.scratch();
        for (row, mut o) in x.rows().into_iter().zip(out.rows_mut()) {
            ring.push(row.as_slice().expect("contiguous row"));
            self.infer_frame(ring, noise.as_slice(), &mut scratch, o.as_slice_mut().expect("contiguous row"));
        }
        Ok(out)
    }

    /// Anonymizes a z-scored window under zero causal padding.
    pub fn anonymize(&self, w: &NormalizedWindow<T>, noise: &NoiseVector<T>) -> Result<NormalizedWindow<T>> {
        require_zscored(w)?;
        let x = w.data().as_standard_layout();
        let mut ring = FrameRing::zeros(self.kernel(), self.channels());
        NormalizedWindow::from_zscored(self.infer_from(&mut ring, &x.view(), noise)?)
    }
}

impl<T: Scalar> Module<T> for Anonymizer<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.conv.visit(&join(prefix, "conv"), f);
        for (i, l) in self.layers.iter().enumerate() {
            l.visit(&join(prefix, &format!("dense{i}")), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_mut(&join(prefix, &format!("dense{i}")), f);
        }
    }
}
