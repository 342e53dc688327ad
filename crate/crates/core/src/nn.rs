//! Dense and recurrent layers expressed on the autograd tape.

use rand::Rng;

use crate::autograd::{Graph, Matrix, ParamId, ParamStore, Var};

/// Glorot/Xavier uniform initialization, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, rows, cols, limit)
}

pub fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, limit: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Affine map `x W + b` applied row-wise.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot_uniform(rng, in_dim, out_dim));
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, out_dim));
        Self { weight, bias, in_dim, out_dim }
    }

    /// Re-binds a layer to parameters already present in `store`.
    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        let weight = store.find(&format!("{name}.weight"))?;
        let bias = store.find(&format!("{name}.bias"))?;
        let (in_dim, out_dim) = store.get(weight).shape();
        Some(Self { weight, bias, in_dim, out_dim })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Single LSTM cell. Gate layout in the fused weight is `[input, forget, cell, output]`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_input = store.add(format!("{name}.w_input"), glorot_uniform(rng, in_dim, 4 * hidden));
        let w_hidden =
            store.add(format!("{name}.w_hidden"), glorot_uniform(rng, hidden, 4 * hidden));
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(1, 4 * hidden));
        Self { w_input, w_hidden, bias, in_dim, hidden }
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        let w_input = store.find(&format!("{name}.w_input"))?;
        let w_hidden = store.find(&format!("{name}.w_hidden"))?;
        let bias = store.find(&format!("{name}.bias"))?;
        let (in_dim, four_h) = store.get(w_input).shape();
        Some(Self { w_input, w_hidden, bias, in_dim, hidden: four_h / 4 })
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        let h = g.constant(Matrix::zeros(1, self.hidden));
        let c = g.constant(Matrix::zeros(1, self.hidden));
        LstmState { h, c }
    }

    /// Input projection `X W_in` for a whole sequence at once.
    pub fn project_inputs(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w_input);
        g.matmul(x, w)
    }

    /// One step given the already-projected input row `x W_in` (1 x 4H).
    pub fn step_projected(&self, g: &mut Graph, x_proj: Var, state: LstmState) -> LstmState {
        let w_h = g.param(self.w_hidden);
        let b = g.param(self.bias);
        let hw = g.matmul(state.h, w_h);
        let z = g.add(x_proj, hw);
        let z = g.add_row(z, b);
        let hd = self.hidden;
        let i = g.slice_cols(z, 0, hd);
        let f = g.slice_cols(z, hd, hd);
        let c_hat = g.slice_cols(z, 2 * hd, hd);
        let o = g.slice_cols(z, 3 * hd, hd);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let c_hat = g.tanh(c_hat);
        let o = g.sigmoid(o);
        let keep = g.mul(f, state.c);
        let write = g.mul(i, c_hat);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }

    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> LstmState {
        let xp = self.project_inputs(g, x);
        self.step_projected(g, xp, state)
    }

    /// Runs over the rows of `x` in the given order and returns the hidden rows
    /// in that same order.
    fn run(&self, g: &mut Graph, x: Var, order: &[usize]) -> Vec<Var> {
        let proj = self.project_inputs(g, x);
        let mut state = self.zero_state(g);
        let mut out = Vec::with_capacity(order.len());
        for &t in order {
            let row = g.gather_rows(proj, &[t]);
            state = self.step_projected(g, row, state);
            out.push(state.h);
        }
        out
    }
}

/// Bidirectional LSTM; output row `j` is `[forward_h_j ; backward_h_j]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let forward = LstmCell::new(store, &format!("{name}.fwd"), in_dim, hidden, rng);
        let backward = LstmCell::new(store, &format!("{name}.bwd"), in_dim, hidden, rng);
        Self { forward, backward }
    }

    pub fn bind(store: &ParamStore, name: &str) -> Option<Self> {
        Some(Self {
            forward: LstmCell::bind(store, &format!("{name}.fwd"))?,
            backward: LstmCell::bind(store, &format!("{name}.bwd"))?,
        })
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn out_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// `x` is `n x in_dim` with `n >= 1`; returns `n x 2H`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.shape(x).0;
        let order: Vec<usize> = (0..n).collect();
        let rev: Vec<usize> = (0..n).rev().collect();
        let fwd = self.forward.run(g, x, &order);
        let mut bwd = self.backward.run(g, x, &rev);
        bwd.reverse();
        let fwd = g.concat_rows(&fwd);
        let bwd = g.concat_rows(&bwd);
        g.concat_cols(&[fwd, bwd])
    }
}
