use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::param::{glorot, join, zeros1, Module};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Linear => v,
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Linear => T::one(),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Fully connected layer applied independently to each row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, output: usize, activation: Activation) -> Self {
        Self {
            w: glorot(rng, input, output),
            b: zeros1(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    /// `rows × in` → `rows × out`.
    pub fn forward(&self, x: &ArrayView2<'_, T>) -> Array2<T> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        let act = self.activation;
        y.mapv_inplace(|v| act.apply(v));
        y
    }

    /// Single-row forward written into `out`; same arithmetic order on every call.
    pub fn forward_row(&self, x: &[T], out: &mut [T]) {
        out.copy_from_slice(self.b.as_slice().expect("contiguous bias"));
        let n = out.len();
        let w = self.w.as_slice().expect("contiguous weights");
        for (k, xv) in x.iter().enumerate() {
            let row = &w[k * n..(k + 1) * n];
            for (o, wv) in out.iter_mut().zip(row) {
                *o += *xv * *wv;
            }
        }
        let act = self.activation;
        out.iter_mut().for_each(|v| *v = act.apply(*v));
    }

    pub fn forward_vec(&self, x: &ArrayView1<'_, T>) -> Array1<T> {
        let mut out = vec![T::zero(); self.output_dim()];
        self.forward_row(x.as_slice().expect("contiguous input"), &mut out);
        Array1::from(out)
    }

    /// Accumulates parameter gradients into `grad` and returns `d loss / d x`.
    pub fn backward(&self, x: &ArrayView2<'_, T>, y: &ArrayView2<'_, T>, dy: &ArrayView2<'_, T>, grad: Option<&mut Self>) -> Array2<T> {
        let act = self.activation;
        let mut dz = dy.to_owned();
        if act != Activation::Linear {
            dz.zip_mut_with(y, |d, yv| *d = *d * act.grad_from_output(*yv));
        }
        if let Some(grad) = grad {
            grad.w += &x.t().dot(&dz);
            grad.b += &dz.sum_axis(Axis(0));
        }
        dz.dot(&self.w.t())
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        f(join(prefix, "w"), self.w.view().into_dyn());
        f(join(prefix, "b"), self.b.view().into_dyn());
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        f(join(prefix, "w"), self.w.view_mut().into_dyn());
        f(join(prefix, "b"), self.b.view_mut().into_dyn());
    }
}
