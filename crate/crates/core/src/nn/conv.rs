use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::param::{glorot, join, zeros1, Module};
use crate::scalar::Scalar;

/// 1-D convolution over time with causal (left, zero) padding and linear output.
///
/// Output row `t` sees input rows `t − (kernel − 1) ..= t`. The weight matrix
/// is `(kernel · channels) × filters`; row `k · channels + c` multiplies
/// channel `c` of the `k`-th oldest frame in the receptive field.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalConv1d<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    kernel: usize,
}

impl<T: Scalar> CausalConv1d<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, channels: usize, filters: usize, kernel: usize) -> Self {
        Self {
            w: glorot(rng, kernel * channels, filters),
            b: zeros1(filters),
            kernel,
        }
    }

    pub fn from_parts(w: Array2<T>, b: Array1<T>, kernel: usize) -> Self {
        assert_eq!(w.nrows() % kernel, 0, "weight rows must be a multiple of the kernel");
        Self { w, b, kernel }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn channels(&self) -> usize {
        self.w.nrows() / self.kernel
    }

    pub fn filters(&self) -> usize {
        self.w.ncols()
    }

    fn im2col(&self, x: &ArrayView2<'_, T>) -> Array2<T> {
        let (steps, ch) = x.dim();
        let k = self.kernel;
        let mut col = Array2::zeros((steps, k * ch));
        for t in 0..steps {
            let mut row = col.row_mut(t);
            for j in 0..k {
                // j-th oldest frame of the receptive field
                let src = t as isize - (k - 1 - j) as isize;
                if src >= 0 {
                    for c in 0..ch {
                        row[j * ch + c] = x[[src as usize, c]];
                    }
                }
            }
        }
        col
    }

    /// `steps × channels` → `steps × filters`. Returns the im2col matrix for backward.
    pub fn forward(&self, x: &ArrayView2<'_, T>) -> (Array2<T>, Array2<T>) {
        let col = self.im2col(x);
        let mut y = col.dot(&self.w);
        y += &self.b;
        (y, col)
    }

    /// Output for a full receptive field given oldest-first, each `channels` wide.
    pub fn forward_buffer<'a>(&self, frames: impl Iterator<Item = &'a [T]>, out: &mut [T])
    where
        T: 'a,
    {
        let f = self.filters();
        let ch = self.channels();
        out.copy_from_slice(self.b.as_slice().expect("contiguous bias"));
        let w = self.w.as_slice().expect("contiguous weights");
        for (j, frame) in frames.enumerate() {
            for (c, xv) in frame.iter().enumerate() {
                let r = j * ch + c;
                let row = &w[r * f..(r + 1) * f];
                for (o, wv) in out.iter_mut().zip(row) {
                    *o += *xv * *wv;
                }
            }
        }
    }

    /// Accumulates parameter gradients; computes `d loss / d x` only when asked.
    pub fn backward(
        &self,
        col: &Array2<T>,
        dy: &ArrayView2<'_, T>,
        grad: Option<&mut Self>,
        input_grad: bool,
    ) -> Option<Array2<T>> {
        if let Some(grad) = grad {
            grad.w += &col.t().dot(dy);
            grad.b += &dy.sum_axis(Axis(0));
        }
        if !input_grad {
            return None;
        }
        let dcol = dy.dot(&self.w.t());
        let steps = dy.nrows();
        let ch = self.channels();
        let k = self.kernel;
        let mut dx = Array2::zeros((steps, ch));
        for t in 0..steps {
            for j in 0..k {
                let src = t as isize - (k - 1 - j) as isize;
                if src >= 0 {
                    for c in 0..ch {
                        dx[[src as usize, c]] += dcol[[t, j * ch + c]];
                    }
                }
            }
        }
        Some(dx)
    }
}

impl<T: Scalar> Module<T> for CausalConv1d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        f(join(prefix, "w"), self.w.view().into_dyn());
        f(join(prefix, "b"), self.b.view().into_dyn());
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        f(join(prefix, "w"), self.w.view_mut().into_dyn());
        f(join(prefix, "b"), self.b.view_mut().into_dyn());
    }
}
