//! Finite-difference gradient checks shared by layer and model tests.

use ndarray::Array2;

use super::param::{flatten, Module};

/// Compares analytic parameter gradients to central differences.
pub(crate) fn check_param_grad<M: Module<f64>>(model: &M, grad: &M, loss: impl Fn(&M) -> f64, tol: f64) {
    let analytic = flatten(grad);
    let n = analytic.len();
    // Large models: probe a deterministic subset.
    let stride = (n / 400).max(1);
    let h = 1e-5;
    for idx in (0..n).step_by(stride) {
        let perturbed = |delta: f64| {
            let mut m = model.clone();
            let mut k = 0;
            m.visit_mut("", &mut |_, mut a| {
                for v in a.iter_mut() {
                    if k == idx {
                        *v += delta;
                    }
                    k += 1;
                }
            });
            loss(&m)
        };
        let numeric = (perturbed(h) - perturbed(-h)) / (2.0 * h);
        let err = (numeric - analytic[idx]).abs() / (1.0 + numeric.abs());
        assert!(err < tol.max(1e-5), "param {idx}: numeric {numeric} analytic {}", analytic[idx]);
    }
}

pub(crate) fn check_input_grad(x: &Array2<f64>, dx: &Array2<f64>, loss: impl Fn(&Array2<f64>) -> f64, tol: f64) {
    let h = 1e-5;
    let stride = (x.len() / 200).max(1);
    for (k, idx) in ndarray::indices(x.dim()).into_iter().enumerate() {
        if k % stride != 0 {
            continue;
        }
        let mut a = x.clone();
        a[idx] += h;
        let mut b = x.clone();
        b[idx] -= h;
        let numeric = (loss(&a) - loss(&b)) / (2.0 * h);
        let err = (numeric - dx[idx]).abs() / (1.0 + numeric.abs());
        assert!(err < tol.max(1e-5), "input {idx:?}: numeric {numeric} analytic {}", dx[idx]);
    }
}
