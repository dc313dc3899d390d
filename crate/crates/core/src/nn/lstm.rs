use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::param::{glorot, join, orthogonal_blocks, Module};
use crate::scalar::{sigmoid, Scalar};

/// Standard LSTM cell, gate layout `[input, forget, cell, output]`.
///
/// Weights: `wx` is `in × 4H`, `wh` is `H × 4H`, one bias of `4H`. The forget
/// gate bias starts at one.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub wx: Array2<T>,
    pub wh: Array2<T>,
    pub b: Array1<T>,
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(units: usize) -> Self {
        Self {
            h: vec![T::zero(); units],
            c: vec![T::zero(); units],
        }
    }
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct LstmTrace<T> {
    /// Post-nonlinearity gates, `T × 4H`.
    gates: Array2<T>,
    /// Cell states, `T × H`.
    c: Array2<T>,
    /// tanh of the cell states.
    tanh_c: Array2<T>,
    /// Hidden outputs, `T × H`.
    pub h: Array2<T>,
}

impl<T: Scalar> Lstm<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, input: usize, units: usize) -> Self {
        let mut b = Array1::zeros(4 * units);
        b.slice_mut(s![units..2 * units]).fill(T::one());
        Self {
            wx: glorot(rng, input, 4 * units),
            wh: orthogonal_blocks(rng, units, 4),
            b,
        }
    }

    pub fn units(&self) -> usize {
        self.wh.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.wx.nrows()
    }

    /// Applies the gate nonlinearities to pre-activations `z` and advances the state.
    #[inline]
    fn cell(units: usize, z: &mut [T], c: &mut [T], h: &mut [T], tanh_c: &mut [T]) {
        for u in 0..units {
            let i = sigmoid(z[u]);
            let f = sigmoid(z[units + u]);
            let g = z[2 * units + u].tanh();
            let o = sigmoid(z[3 * units + u]);
            z[u] = i;
            z[units + u] = f;
            z[2 * units + u] = g;
            z[3 * units + u] = o;
            c[u] = f * c[u] + i * g;
            tanh_c[u] = c[u].tanh();
            h[u] = o * tanh_c[u];
        }
    }

    /// `z += h · wh` with a fixed accumulation order.
    #[inline]
    fn recur(&self, h: &[T], z: &mut [T]) {
        let n = z.len();
        let wh = self.wh.as_slice().expect("contiguous wh");
        for (k, hv) in h.iter().enumerate() {
            if *hv == T::zero() {
                continue;
            }
            let row = &wh[k * n..(k + 1) * n];
            for (zv, wv) in z.iter_mut().zip(row) {
                *zv += *hv * *wv;
            }
        }
    }

    /// Runs the whole sequence from a zero state, keeping a trace.
    pub fn forward(&self, x: &ArrayView2<'_, T>) -> LstmTrace<T> {
        let steps = x.nrows();
        let units = self.units();
        let mut gates = x.dot(&self.wx);
        gates += &self.b;
        let mut c_all = Array2::zeros((steps, units));
        let mut tanh_all = Array2::zeros((steps, units));
        let mut h_all = Array2::zeros((steps, units));
        let mut h = vec![T::zero(); units];
        let mut c = vec![T::zero(); units];
        let mut tc = vec![T::zero(); units];
        for t in 0..steps {
            let mut z = gates.row_mut(t);
            let z = z.as_slice_mut().expect("contiguous gates");
            self.recur(&h, z);
            Self::cell(units, z, &mut c, &mut h, &mut tc);
            c_all.row_mut(t).as_slice_mut().unwrap().copy_from_slice(&c);
            tanh_all.row_mut(t).as_slice_mut().unwrap().copy_from_slice(&tc);
            h_all.row_mut(t).as_slice_mut().unwrap().copy_from_slice(&h);
        }
        LstmTrace {
            gates,
            c: c_all,
            tanh_c: tanh_all,
            h: h_all,
        }
    }

    /// One causal step; the streaming and batch inference paths both use this.
    pub fn step(&self, x: &[T], state: &mut LstmState<T>) {
        let units = self.units();
        let n = 4 * units;
        let mut z: Vec<T> = self.b.to_vec();
        let wx = self.wx.as_slice().expect("contiguous wx");
        for (k, xv) in x.iter().enumerate() {
            let row = &wx[k * n..(k + 1) * n];
            for (zv, wv) in z.iter_mut().zip(row) {
                *zv += *xv * *wv;
            }
        }
        self.recur(&state.h, &mut z);
        let mut tc = vec![T::zero(); units];
        Self::cell(units, &mut z, &mut state.c, &mut state.h, &mut tc);
    }

    /// Backpropagates `dh` (gradient w.r.t. every hidden output, `T × H`).
    /// Accumulates into `grad` when given and returns `d loss / d x`.
    pub fn backward(&self, x: &ArrayView2<'_, T>, trace: &LstmTrace<T>, dh: &ArrayView2<'_, T>, grad: Option<&mut Self>) -> Array2<T> {
        let steps = x.nrows();
        let units = self.units();
        let n = 4 * units;
        let mut dz_all = Array2::<T>::zeros((steps, n));
        let mut dh_next = vec![T::zero(); units];
        let mut dc_next = vec![T::zero(); units];
        let wh = self.wh.as_slice().expect("contiguous wh");
        let one = T::one();
        for t in (0..steps).rev() {
            let g = trace.gates.row(t);
            let tc = trace.tanh_c.row(t);
            let mut dzr = dz_all.row_mut(t);
            let dz = dzr.as_slice_mut().unwrap();
            for u in 0..units {
                let (i, f, gg, o) = (g[u], g[units + u], g[2 * units + u], g[3 * units + u]);
                let c_prev = if t > 0 { trace.c[[t - 1, u]] } else { T::zero() };
                let dhu = dh[[t, u]] + dh_next[u];
                let d_o = dhu * tc[u];
                let dc = dhu * o * (one - tc[u] * tc[u]) + dc_next[u];
                dz[u] = dc * gg * i * (one - i);
                dz[units + u] = dc * c_prev * f * (one - f);
                dz[2 * units + u] = dc * i * (one - gg * gg);
                dz[3 * units + u] = d_o * o * (one - o);
                dc_next[u] = dc * f;
            }
            for (k, dn) in dh_next.iter_mut().enumerate() {
                let row = &wh[k * n..(k + 1) * n];
                *dn = row.iter().zip(dz.iter()).map(|(a, b)| *a * *b).sum();
            }
        }
        if let Some(grad) = grad {
            if steps > 1 {
                let h_prev = trace.h.slice(s![..steps - 1, ..]);
                grad.wh += &h_prev.t().dot(&dz_all.slice(s![1.., ..]));
            }
            grad.wx += &x.t().dot(&dz_all);
            grad.b += &dz_all.sum_axis(Axis(0));
        }
        dz_all.dot(&self.wx.t())
    }
}

impl<T: Scalar> Module<T> for Lstm<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        f(join(prefix, "wx"), self.wx.view().into_dyn());
        f(join(prefix, "wh"), self.wh.view().into_dyn());
        f(join(prefix, "b"), self.b.view().into_dyn());
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        f(join(prefix, "wx"), self.wx.view_mut().into_dyn());
        f(join(prefix, "wh"), self.wh.view_mut().into_dyn());
        f(join(prefix, "b"), self.b.view_mut().into_dyn());
    }
}
