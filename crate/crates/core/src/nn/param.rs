use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// A container of named trainable tensors.
///
/// Gradients are represented by a second instance of the same type, so
/// `visit` order doubles as the parameter layout for optimizers and bundles.
pub trait Module<T: Scalar>: Clone {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>));

    fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.visit_mut("", &mut |_, mut a| a.fill(T::zero()));
        g
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, a| n += a.len());
        n
    }

    /// `self += scale * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, scale: T) {
        let flat = flatten(other);
        let mut k = 0;
        self.visit_mut("", &mut |_, mut a| {
            for v in a.iter_mut() {
                *v += scale * flat[k];
                k += 1;
            }
        });
    }

    fn sq_norm(&self) -> T {
        let mut s = T::zero();
        self.visit("", &mut |_, a| s += a.iter().map(|v| *v * *v).sum::<T>());
        s
    }
}

/// All parameters concatenated in visit order.
pub fn flatten<T: Scalar, M: Module<T>>(m: &M) -> Vec<T> {
    let mut out = Vec::new();
    m.visit("", &mut |_, a| out.extend(a.iter().copied()));
    out
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn glorot<T: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| T::lit(rng.random_range(-limit..limit)))
}

/// Matrix of shape `(n, blocks * n)` whose `n×n` blocks are each orthogonal.
pub(crate) fn orthogonal_blocks<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize, blocks: usize) -> Array2<T> {
    let mut out = Array2::<T>::zeros((n, n * blocks));
    for b in 0..blocks {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        while rows.len() < n {
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            for r in &rows {
                let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|a| *a /= norm);
                rows.push(v);
            }
        }
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                out[[i, b * n + j]] = T::lit(*v);
            }
        }
    }
    out
}

pub(crate) fn zeros1<T: Scalar>(n: usize) -> Array1<T> {
    Array1::zeros(n)
}
