//! A small reverse-mode automatic differentiation tape over dense `f64`
//! matrices.
//!
//! Every model in this crate is built per example on a fresh [`Graph`]. Leaf
//! nodes are either constants or references to entries of a [`ParamStore`];
//! after [`Graph::backward`] the gradients of the parameter leaves can be
//! accumulated back into the store.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self { rows: 1, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T * other`
    fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`
    fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..other.rows {
                let brow = other.row(j);
                out.data[i * other.rows + j] = arow.iter().zip(brow).map(|(a, b)| a * b).sum();
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable matrices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Zero-filled buffers shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.values.iter().map(|m| Matrix::zeros(m.rows, m.cols)).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data.len()).sum()
    }
}

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterRows(Var, Vec<usize>),
    Transpose(Var),
    MaskedSoftmax(Var, Vec<bool>),
    LogClamp(Var, f64),
    Pick(Var, usize, usize),
    Sum(Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Computation tape. Values are computed eagerly as nodes are pushed.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_cache: HashMap<ParamId, Var>,
}

/// Gradients for every node after a backward pass.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    param_nodes: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Adds `scale * dL/dparam` into `acc` (indexed like the param store).
    pub fn accumulate_into(&self, acc: &mut [Matrix], scale: f64) {
        for &(pid, var) in &self.param_nodes {
            if let Some(g) = &self.grads[var.0] {
                let dst = &mut acc[pid.0];
                for (a, b) in dst.data.iter_mut().zip(&g.data) {
                    *a += scale * b;
                }
            }
        }
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::with_capacity(1024), param_cache: HashMap::new() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "not a scalar node");
        m.data[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_cache.get(&id) {
            return v;
        }
        let value = self.params.get(id).clone();
        let v = self.push(value, Op::Param);
        self.param_cache.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x + y).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Add(a, b))
    }

    /// Adds a `1 x cols` row vector to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.rows, 1, "add_row expects a row vector");
        assert_eq!(va.cols, vr.cols, "add_row width mismatch");
        let mut out = va.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                out.data[r * out.cols + c] += vr.data[c];
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let va = self.value(a);
        let data = va.data.iter().map(|x| x * k).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data.iter().map(|x| x.tanh()).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let data = va.data.iter().map(|&x| sigmoid(x)).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + vp.cols].copy_from_slice(vp.row(r));
            }
            offset += vp.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let vp = self.value(p);
            assert_eq!(vp.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&vp.data);
            rows += vp.rows;
        }
        let out = Matrix::from_vec(rows, cols, data);
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let va = self.value(a);
        assert!(start + len <= va.cols, "slice out of range");
        let mut out = Matrix::zeros(va.rows, len);
        for r in 0..va.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&va.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let va = self.value(a);
        let mut out = Matrix::zeros(indices.len(), va.cols);
        for (i, &r) in indices.iter().enumerate() {
            assert!(r < va.rows, "gather index {r} out of range ({} rows)", va.rows);
            out.data[i * va.cols..(i + 1) * va.cols].copy_from_slice(va.row(r));
        }
        self.push(out, Op::GatherRows(a, indices.to_vec()))
    }

    /// Places row `i` of `a` at row `positions[i]` of a zero matrix with `total_rows` rows.
    pub fn scatter_rows(&mut self, a: Var, positions: &[usize], total_rows: usize) -> Var {
        let va = self.value(a);
        assert_eq!(va.rows, positions.len());
        let mut out = Matrix::zeros(total_rows, va.cols);
        for (i, &p) in positions.iter().enumerate() {
            out.data[p * va.cols..(p + 1) * va.cols].copy_from_slice(va.row(i));
        }
        self.push(out, Op::ScatterRows(a, positions.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    /// Softmax over a `1 x n` row. Entries with `mask[j] == false` are treated
    /// as `-inf` logits and receive probability exactly zero.
    ///
    /// Panics if the mask has no `true` entry; callers validate first.
    pub fn masked_softmax(&mut self, a: Var, mask: &[bool]) -> Var {
        let va = self.value(a);
        assert_eq!(va.rows, 1, "masked_softmax expects a row vector");
        assert_eq!(va.cols, mask.len(), "mask length mismatch");
        let out = Matrix::row_vector(softmax_masked(&va.data, mask));
        self.push(out, Op::MaskedSoftmax(a, mask.to_vec()))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let n = self.value(a).cols;
        self.masked_softmax(a, &vec![true; n])
    }

    /// Elementwise `ln(max(x, eps))`.
    pub fn log_clamp(&mut self, a: Var, eps: f64) -> Var {
        let va = self.value(a);
        let data = va.data.iter().map(|&x| x.max(eps).ln()).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        self.push(out, Op::LogClamp(a, eps))
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let v = self.value(a).get(r, c);
        self.push(Matrix::from_vec(1, 1, vec![v]), Op::Pick(a, r, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Sums scalar nodes left to right.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Var {
        let mut iter = terms.iter();
        let first = *iter.next().expect("add_scalars needs at least one term");
        iter.fold(first, |acc, &t| self.add(acc, t))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            gr.data[c] += g.data[r * g.cols + c];
                        }
                    }
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *row, gr);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = g.data.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
                    let gb = g.data.iter().zip(&va.data).map(|(x, y)| x * y).collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, ga));
                    acc(&mut grads, *b, Matrix::from_vec(g.rows, g.cols, gb));
                }
                Op::Scale(a, k) => {
                    let ga = g.data.iter().map(|x| x * k).collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, ga));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = g.data.iter().zip(&y.data).map(|(x, t)| x * (1.0 - t * t)).collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, ga));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = g.data.iter().zip(&y.data).map(|(x, s)| x * s * (1.0 - s)).collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, ga));
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols;
                        let mut gp = Matrix::zeros(g.rows, pc);
                        for r in 0..g.rows {
                            gp.data[r * pc..(r + 1) * pc]
                                .copy_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (pr, pc) = self.value(p).shape();
                        let gp = Matrix::from_vec(
                            pr,
                            pc,
                            g.data[offset * pc..(offset + pr) * pc].to_vec(),
                        );
                        offset += pr;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (ar, ac) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(ar, ac);
                    for r in 0..ar {
                        ga.data[r * ac + start..r * ac + start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, indices) => {
                    let (ar, ac) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(ar, ac);
                    for (i, &r) in indices.iter().enumerate() {
                        for c in 0..ac {
                            ga.data[r * ac + c] += g.data[i * ac + c];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ScatterRows(a, positions) => {
                    let ac = g.cols;
                    let mut ga = Matrix::zeros(positions.len(), ac);
                    for (i, &p) in positions.iter().enumerate() {
                        ga.data[i * ac..(i + 1) * ac].copy_from_slice(g.row(p));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::MaskedSoftmax(a, mask) => {
                    let p = &node.value.data;
                    let dot: f64 = g.data.iter().zip(p).map(|(x, y)| x * y).sum();
                    let ga = g
                        .data
                        .iter()
                        .zip(p)
                        .zip(mask)
                        .map(|((x, y), &m)| if m { y * (x - dot) } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, Matrix::from_vec(1, p.len(), ga));
                }
                Op::LogClamp(a, eps) => {
                    let va = self.value(*a);
                    let ga = g
                        .data
                        .iter()
                        .zip(&va.data)
                        .map(|(x, &v)| if v > *eps { x / v } else { 0.0 })
                        .collect();
                    acc(&mut grads, *a, Matrix::from_vec(g.rows, g.cols, ga));
                }
                Op::Pick(a, r, c) => {
                    let (ar, ac) = self.value(*a).shape();
                    let mut ga = Matrix::zeros(ar, ac);
                    ga.data[r * ac + c] = g.data[0];
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let (ar, ac) = self.value(*a).shape();
                    acc(&mut grads, *a, Matrix::from_vec(ar, ac, vec![g.data[0]; ar * ac]));
                }
            }
            grads[idx] = Some(g);
        }

        let mut param_nodes: Vec<(ParamId, Var)> =
            self.param_cache.iter().map(|(&p, &v)| (p, v)).collect();
        param_nodes.sort_by_key(|(p, _)| *p);
        Gradients { grads, param_nodes }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax with masked entries forced to zero.
pub fn softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(max > f64::NEG_INFINITY || mask.iter().any(|&m| m), "softmax over an all-masked row");
    let exps: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { (x - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
