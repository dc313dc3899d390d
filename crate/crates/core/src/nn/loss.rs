//! Loss functions returning `(value, gradient)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::{sigmoid, softplus, Scalar};

pub fn softmax<T: Scalar>(logits: &ArrayView1<'_, T>) -> Array1<T> {
    let m = logits.fold(T::neg_infinity(), |a, b| a.max(*b));
    let e = logits.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

pub fn log_softmax<T: Scalar>(logits: &ArrayView1<'_, T>) -> Array1<T> {
    let m = logits.fold(T::neg_infinity(), |a, b| a.max(*b));
    let lse = logits.mapv(|v| (v - m).exp()).sum().ln() + m;
    logits.mapv(|v| v - lse)
}

/// Cross-entropy of the softmax of `logits` against class `label`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &ArrayView1<'_, T>, label: usize) -> (T, Array1<T>) {
    let p = softmax(logits);
    let loss = -log_softmax(logits)[label];
    let mut g = p;
    g[label] -= T::one();
    (loss, g)
}

/// Binary cross-entropy of `sigmoid(z)` against `target ∈ [0, 1]`, gradient w.r.t. `z`.
pub fn bce_with_logits<T: Scalar>(z: T, target: T) -> (T, T) {
    let loss = softplus(z) - target * z;
    (loss, sigmoid(z) - target)
}

/// Mean squared error over all elements, gradient w.r.t. `pred`.
pub fn mse<T: Scalar>(pred: &ArrayView2<'_, T>, target: &ArrayView2<'_, T>) -> (T, Array2<T>) {
    let diff = pred - target;
    let n = T::from_usize_lossy(diff.len());
    let loss = diff.mapv(|v| v * v).sum() / n;
    let grad = diff * (T::lit(2.0) / n);
    (loss, grad)
}
