use super::param::{flatten, Module};
use crate::scalar::Scalar;

/// Adam with optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    m: Vec<T>,
    v: Vec<T>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            clip_norm: Some(5.0),
            m: Vec::new(),
            v: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step<M: Module<T>>(&mut self, model: &mut M, grad: &M) {
        let mut g = flatten(grad);
        if self.m.is_empty() {
            self.m = vec![T::zero(); g.len()];
            self.v = vec![T::zero(); g.len()];
        }
        assert_eq!(g.len(), self.m.len(), "gradient layout changed between steps");
        if let Some(max) = self.clip_norm {
            let norm = g.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            if norm > max && norm.is_finite() {
                let s = T::lit(max / norm);
                g.iter_mut().for_each(|v| *v = *v * s);
            }
        }
        self.steps += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        let step = T::lit(self.lr * bc2.sqrt() / bc1);
        let eps = T::lit(self.eps);
        let one = T::one();
        for ((m, v), gv) in self.m.iter_mut().zip(self.v.iter_mut()).zip(&g) {
            *m = b1 * *m + (one - b1) * *gv;
            *v = b2 * *v + (one - b2) * *gv * *gv;
        }
        let (ms, vs) = (&self.m, &self.v);
        let mut k = 0;
        model.visit_mut("", &mut |_, mut a| {
            for p in a.iter_mut() {
                *p -= step * ms[k] / (vs[k].sqrt() + eps);
                k += 1;
            }
        });
    }
}

/// Halves the learning rate after `patience` epochs without improvement.
#[derive(Debug, Clone)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    pub floor: f64,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize, floor: f64) -> Self {
        Self {
            factor,
            patience,
            floor,
            best: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Records a higher-is-better metric and returns the learning rate to use next.
    pub fn observe(&mut self, metric: f64, lr: f64) -> f64 {
        if metric > self.best {
            self.best = metric;
            self.stale = 0;
            return lr;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            return (lr * self.factor).max(self.floor);
        }
        lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dense::{Activation, Dense};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimizes_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = Dense::<f64>::new(&mut rng, 2, 1, Activation::Linear);
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]).unwrap();
        let y = Array2::from_shape_vec((4, 1), vec![3.0, -2.0, 1.0, 8.0]).unwrap();
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let out = layer.forward(&x.view());
            let d = &out - &y;
            let mut g = layer.zeros_like();
            layer.backward(&x.view(), &out.view(), &d.view(), Some(&mut g));
            opt.step(&mut layer, &g);
        }
        assert!((layer.w[[0, 0]] - 3.0).abs() < 1e-3);
        assert!((layer.w[[1, 0]] + 2.0).abs() < 1e-3);
        assert!(layer.b[0].abs() < 1e-3);
    }

    #[test]
    fn plateau_halves_and_floors() {
        let mut s = PlateauSchedule::new(0.5, 2, 0.1);
        let mut lr = 0.4;
        lr = s.observe(1.0, lr);
        assert_eq!(lr, 0.4);
        lr = s.observe(0.5, lr);
        lr = s.observe(0.5, lr);
        assert_eq!(lr, 0.2);
        lr = s.observe(0.5, lr);
        lr = s.observe(0.5, lr);
        assert_eq!(lr, 0.1);
        lr = s.observe(0.5, lr);
        lr = s.observe(0.5, lr);
        assert_eq!(lr, 0.1);
    }
}
