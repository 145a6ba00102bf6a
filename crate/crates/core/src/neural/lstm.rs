//! LSTM and bidirectional LSTM with full backpropagation through time.
//!
//! Gate layout in the `4H` pre-activation vector is `[input, forget,
//! output, candidate]`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{Gradients, ParamGroup, ParamId, ParamSet};
use super::{sigmoid, Float};

/// Xavier/Glorot uniform initialization.
pub(crate) fn xavier<F: Float, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<F> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || F::of(rng.random_range(-bound..=bound)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    wx: ParamId,
    wh: ParamId,
    bias: ParamId,
}

/// Values saved by [`Lstm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace<F> {
    x: Array2<F>,
    /// Previous hidden state after the recurrent dropout mask.
    h_in: Array2<F>,
    c_prev: Array2<F>,
    gates: Array2<F>,
    tanh_c: Array2<F>,
    mask: Option<Array1<F>>,
}

impl Lstm {
    pub fn new<F: Float, R: Rng>(
        params: &mut ParamSet<F>,
        name: &str,
        group: ParamGroup,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let wx = params.add(format!("{name}.wx"), group, xavier(input, 4 * hidden, rng));
        let wh = params.add(format!("{name}.wh"), group, xavier(hidden, 4 * hidden, rng));
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(s![.., hidden..2 * hidden]).fill(F::one());
        let bias = params.add(format!("{name}.b"), group, b);
        Lstm {
            input,
            hidden,
            wx,
            wh,
            bias,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 3] {
        [self.wx, self.wh, self.bias]
    }

    /// Runs the cell over the rows of `x` (`T × input`), starting from zero
    /// state. `mask` multiplies the recurrent input `h_{t-1}` at every step.
    pub fn forward<F: Float>(
        &self,
        params: &ParamSet<F>,
        x: Array2<F>,
        mask: Option<Array1<F>>,
    ) -> (Array2<F>, LstmTrace<F>) {
        let h = self.hidden;
        let steps = x.nrows();
        let wh = &params[self.wh];
        let mut pre = x.dot(&params[self.wx]);
        pre += &params[self.bias].row(0);

        let mut out = Array2::zeros((steps, h));
        let mut h_in = Array2::zeros((steps, h));
        let mut c_prev = Array2::zeros((steps, h));
        let mut tanh_c = Array2::zeros((steps, h));
        let mut h_t = Array1::<F>::zeros(h);
        let mut c_t = Array1::<F>::zeros(h);
        for t in 0..steps {
            if let Some(m) = &mask {
                h_t *= m;
            }
            h_in.row_mut(t).assign(&h_t);
            c_prev.row_mut(t).assign(&c_t);
            let mut z = pre.row_mut(t);
            for (k, w) in wh.rows().into_iter().enumerate() {
                z.scaled_add(h_t[k], &w);
            }
            for k in 0..h {
                let i = sigmoid(z[k]);
                let f = sigmoid(z[h + k]);
                let o = sigmoid(z[2 * h + k]);
                let g = z[3 * h + k].tanh();
                z[k] = i;
                z[h + k] = f;
                z[2 * h + k] = o;
                z[3 * h + k] = g;
                c_t[k] = f * c_t[k] + i * g;
                let tc = c_t[k].tanh();
                tanh_c[[t, k]] = tc;
                h_t[k] = o * tc;
            }
            out.row_mut(t).assign(&h_t);
        }
        let trace = LstmTrace {
            x,
            h_in,
            c_prev,
            gates: pre,
            tanh_c,
            mask,
        };
        (out, trace)
    }

    /// Accumulates weight gradients given `d_out = ∂L/∂h_t` and returns
    /// `∂L/∂x`.
    pub fn backward<F: Float>(
        &self,
        params: &ParamSet<F>,
        grads: &mut Gradients<F>,
        trace: &LstmTrace<F>,
        d_out: ArrayView2<F>,
    ) -> Array2<F> {
        let h = self.hidden;
        let steps = trace.x.nrows();
        let wh = &params[self.wh];
        let one = F::one();
        let mut dz = Array2::<F>::zeros((steps, 4 * h));
        let mut dh_next = Array1::<F>::zeros(h);
        let mut dc_next = Array1::<F>::zeros(h);
        for t in (0..steps).rev() {
            let gates = trace.gates.row(t);
            for k in 0..h {
                let (i, f, o, g) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                let tc = trace.tanh_c[[t, k]];
                let dh = d_out[[t, k]] + dh_next[k];
                let d_o = dh * tc;
                let dc = dh * o * (one - tc * tc) + dc_next[k];
                dc_next[k] = dc * f;
                dz[[t, k]] = dc * g * i * (one - i);
                dz[[t, h + k]] = dc * trace.c_prev[[t, k]] * f * (one - f);
                dz[[t, 2 * h + k]] = d_o * o * (one - o);
                dz[[t, 3 * h + k]] = dc * i * (one - g * g);
            }
            dh_next = dz.row(t).dot(&wh.t());
            if let Some(m) = &trace.mask {
                dh_next *= m;
            }
        }
        grads[self.wx] += &trace.x.t().dot(&dz);
        grads[self.wh] += &trace.h_in.t().dot(&dz);
        grads[self.bias] += &dz.sum_axis(Axis(0));
        dz.dot(&params[self.wx].t())
    }
}

pub(crate) fn reverse_rows<F: Clone>(x: ArrayView2<F>) -> Array2<F> {
    x.slice(s![..;-1, ..]).to_owned()
}

/// Forward and backward LSTMs whose outputs are concatenated per position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

#[derive(Debug, Clone)]
pub struct BiLstmTrace<F> {
    fwd: LstmTrace<F>,
    bwd: LstmTrace<F>,
}

impl BiLstm {
    pub fn new<F: Float, R: Rng>(
        params: &mut ParamSet<F>,
        name: &str,
        group: ParamGroup,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        BiLstm {
            forward: Lstm::new(params, &format!("{name}.fwd"), group, input, hidden, rng),
            backward: Lstm::new(params, &format!("{name}.bwd"), group, input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        self.forward.param_ids().into_iter().chain(self.backward.param_ids())
    }

    /// Returns `T × 2H`: columns `[0, H)` hold the forward state at `t`,
    /// columns `[H, 2H)` the backward state at `t`.
    pub fn forward<F: Float>(
        &self,
        params: &ParamSet<F>,
        x: ArrayView2<F>,
        masks: [Option<Array1<F>>; 2],
    ) -> (Array2<F>, BiLstmTrace<F>) {
        let [mf, mb] = masks;
        let h = self.hidden();
        let (out_f, fwd) = self.forward.forward(params, x.to_owned(), mf);
        let (out_b, bwd) = self.backward.forward(params, reverse_rows(x), mb);
        let mut out = Array2::zeros((x.nrows(), 2 * h));
        out.slice_mut(s![.., ..h]).assign(&out_f);
        out.slice_mut(s![.., h..]).assign(&out_b.slice(s![..;-1, ..]));
        (out, BiLstmTrace { fwd, bwd })
    }

    pub fn backward<F: Float>(
        &self,
        params: &ParamSet<F>,
        grads: &mut Gradients<F>,
        trace: &BiLstmTrace<F>,
        d_out: ArrayView2<F>,
    ) -> Array2<F> {
        let h = self.hidden();
        let mut dx = self
            .forward
            .backward(params, grads, &trace.fwd, d_out.slice(s![.., ..h]));
        let d_bwd = reverse_rows(d_out.slice(s![.., h..]));
        let dx_b = self.backward.backward(params, grads, &trace.bwd, d_bwd.view());
        dx += &dx_b.slice(s![..;-1, ..]);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn scalar_loss(out: &Array2<f64>, weights: &Array2<f64>) -> f64 {
        (out * weights).sum()
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut r = rng::stream(1, &[]);
        let mut params = ParamSet::<f64>::new();
        let lstm = BiLstm::new(&mut params, "l", ParamGroup::Shared, 3, 4, &mut r);
        let x = xavier::<f64, _>(5, 3, &mut r);
        let w = xavier::<f64, _>(5, 8, &mut r);
        let masks = || [Some(Array1::from(vec![2.0, 0.0, 2.0, 2.0])), None];

        let (out, trace) = lstm.forward(&params, x.view(), masks());
        let mut grads = params.zero_gradients();
        let dx = lstm.backward(&params, &mut grads, &trace, w.view());
        let _ = out;

        let eps = 1e-5;
        for id in lstm.param_ids() {
            for idx in 0..params[id].len() {
                let (r_, c_) = (idx / params[id].ncols(), idx % params[id].ncols());
                let orig = params[id][[r_, c_]];
                params[id][[r_, c_]] = orig + eps;
                let plus = scalar_loss(&lstm.forward(&params, x.view(), masks()).0, &w);
                params[id][[r_, c_]] = orig - eps;
                let minus = scalar_loss(&lstm.forward(&params, x.view(), masks()).0, &w);
                params[id][[r_, c_]] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let analytic = grads[id][[r_, c_]];
                assert!(
                    (numeric - analytic).abs() <= 1e-6 + 1e-4 * numeric.abs().max(analytic.abs()),
                    "{} [{r_},{c_}]: {numeric} vs {analytic}",
                    params.param(id).name
                );
            }
        }
        for t in 0..5 {
            for j in 0..3 {
                let mut xp = x.clone();
                xp[[t, j]] += eps;
                let mut xm = x.clone();
                xm[[t, j]] -= eps;
                let numeric = (scalar_loss(&lstm.forward(&params, xp.view(), masks()).0, &w)
                    - scalar_loss(&lstm.forward(&params, xm.view(), masks()).0, &w))
                    / (2.0 * eps);
                assert!((numeric - dx[[t, j]]).abs() < 1e-7, "{numeric} vs {}", dx[[t, j]]);
            }
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut params = ParamSet::<f32>::new();
        let lstm = Lstm::new(&mut params, "l", ParamGroup::Shared, 2, 3, &mut rng::stream(0, &[]));
        let b = &params[lstm.bias];
        assert_eq!(b.row(0).to_vec(), [0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn reversed_input_with_swapped_directions_reverses_output() {
        let mut r = rng::stream(5, &[]);
        let mut params = ParamSet::<f64>::new();
        let bi = BiLstm::new(&mut params, "l", ParamGroup::Shared, 2, 3, &mut r);
        let swapped = BiLstm {
            forward: bi.backward,
            backward: bi.forward,
        };
        let x = xavier::<f64, _>(4, 2, &mut r);
        let (out, _) = bi.forward(&params, x.view(), [None, None]);
        let (out_rev, _) = swapped.forward(&params, reverse_rows(x.view()).view(), [None, None]);
        for t in 0..4 {
            for k in 0..3 {
                assert!((out[[t, k]] - out_rev[[3 - t, 3 + k]]).abs() < 1e-12);
                assert!((out[[t, 3 + k]] - out_rev[[3 - t, k]]).abs() < 1e-12);
            }
        }
    }
}
