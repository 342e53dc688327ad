//! Pointer-network decoder.
//!
//! Each decoding step attends over the token encoding, advances an LSTM
//! sequence generator, runs `N` chained pointer blocks (one per intent
//! slot) and classifies coarse and fine intents for every slot from the
//! concatenated span vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::encoder::dropout;
use crate::error::{Error, Result};
use crate::nn::{glorot_uniform, BiLstm, Linear, LstmCell, LstmState};

/// What the sequence generator and attention consume as the tuple input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TupleFeed {
    /// Sum of every previously emitted tuple vector.
    #[default]
    Accumulated,
    /// Only the most recently emitted tuple vector.
    Previous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Width of the token encoding rows.
    pub encoding_dim: usize,
    /// Sequence generator hidden size.
    pub hidden_dim: usize,
    /// Per-direction hidden size of each pointer BiLSTM.
    pub pointer_hidden: usize,
    pub n_slots: usize,
    pub n_steps: usize,
    pub coarse_labels: usize,
    pub fine_labels: usize,
    pub dropout_rate: f64,
    #[serde(default)]
    pub tuple_feed: TupleFeed,
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("encoding_dim", self.encoding_dim),
            ("hidden_dim", self.hidden_dim),
            ("pointer_hidden", self.pointer_hidden),
            ("n_slots", self.n_slots),
            ("n_steps", self.n_steps),
            ("coarse_labels", self.coarse_labels),
            ("fine_labels", self.fine_labels),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("decoder {name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }

    /// Width of a pointer block's hidden rows.
    pub fn pointer_out(&self) -> usize {
        2 * self.pointer_hidden
    }

    /// Width of one slot's span vector `[start pooled ; end pooled]`.
    pub fn span_dim(&self) -> usize {
        2 * self.pointer_out()
    }

    pub fn tuple_dim(&self) -> usize {
        self.n_slots * self.span_dim()
    }

    pub fn attention_dim(&self) -> usize {
        self.hidden_dim
    }
}

#[derive(Debug, Clone)]
struct PointerBlock {
    rnn: BiLstm,
    start: Linear,
    end: Linear,
}

#[derive(Debug, Clone)]
struct IntentHeads {
    coarse: Linear,
    fine: Linear,
}

/// Output nodes of one pointer block.
#[derive(Debug, Clone, Copy)]
pub struct PointerVars {
    pub start: Var,
    pub end: Var,
    /// `n x 2D_H`, zero rows at masked positions.
    pub hidden: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct SlotVars {
    pub start: Var,
    pub end: Var,
    pub coarse: Var,
    pub fine: Var,
}

#[derive(Debug, Clone)]
pub struct StepVars {
    pub slots: Vec<SlotVars>,
    pub attention: Var,
    pub tuple: Var,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub config: DecoderConfig,
    attn_query: Linear,
    attn_key: Linear,
    attn_score: ParamId,
    generator: LstmCell,
    pointers: Vec<PointerBlock>,
    heads: Vec<IntentHeads>,
}

fn pointer_in_dim(cfg: &DecoderConfig, slot: usize) -> usize {
    let base = cfg.hidden_dim + cfg.encoding_dim;
    if slot == 0 {
        base
    } else {
        cfg.pointer_out() + base
    }
}

impl Decoder {
    pub fn new<R: Rng>(store: &mut ParamStore, config: DecoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let tup = config.tuple_dim();
        let a = config.attention_dim();
        let attn_query = Linear::new(store, "decoder.attention.query", config.hidden_dim + tup, a, rng);
        let attn_key = Linear::new(store, "decoder.attention.key", config.encoding_dim, a, rng);
        let attn_score = store.add("decoder.attention.score", glorot_uniform(rng, a, 1));
        let generator =
            LstmCell::new(store, "decoder.generator", config.encoding_dim + tup, config.hidden_dim, rng);
        let mut pointers = Vec::with_capacity(config.n_slots);
        let mut heads = Vec::with_capacity(config.n_slots);
        for k in 0..config.n_slots {
            let name = format!("decoder.pointer{}", k + 1);
            let rnn = BiLstm::new(store, &format!("{name}.rnn"), pointer_in_dim(&config, k), config.pointer_hidden, rng);
            let start = Linear::new(store, &format!("{name}.start"), config.pointer_out(), 1, rng);
            let end = Linear::new(store, &format!("{name}.end"), config.pointer_out(), 1, rng);
            pointers.push(PointerBlock { rnn, start, end });
        }
        for k in 0..config.n_slots {
            let name = format!("decoder.intent{}", k + 1);
            let input = tup + config.hidden_dim;
            let coarse = Linear::new(store, &format!("{name}.coarse"), input, config.coarse_labels, rng);
            let fine = Linear::new(store, &format!("{name}.fine"), input, config.fine_labels, rng);
            heads.push(IntentHeads { coarse, fine });
        }
        Ok(Self { config, attn_query, attn_key, attn_score, generator, pointers, heads })
    }

    pub fn bind(store: &ParamStore, config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let missing = |what: String| Error::Validation(format!("checkpoint lacks parameter {what}"));
        let linear = |name: String| Linear::bind(store, &name).ok_or_else(|| missing(name));
        let attn_query = linear("decoder.attention.query".into())?;
        let attn_key = linear("decoder.attention.key".into())?;
        let attn_score = store
            .find("decoder.attention.score")
            .ok_or_else(|| missing("decoder.attention.score".into()))?;
        let generator = LstmCell::bind(store, "decoder.generator")
            .ok_or_else(|| missing("decoder.generator".into()))?;
        let mut pointers = Vec::new();
        let mut heads = Vec::new();
        for k in 0..config.n_slots {
            let name = format!("decoder.pointer{}", k + 1);
            let rnn = BiLstm::bind(store, &format!("{name}.rnn")).ok_or_else(|| missing(name.clone()))?;
            pointers.push(PointerBlock {
                rnn,
                start: linear(format!("{name}.start"))?,
                end: linear(format!("{name}.end"))?,
            });
            let name = format!("decoder.intent{}", k + 1);
            heads.push(IntentHeads {
                coarse: linear(format!("{name}.coarse"))?,
                fine: linear(format!("{name}.fine"))?,
            });
        }
        if attn_query.in_dim != config.hidden_dim + config.tuple_dim()
            || heads[0].coarse.out_dim != config.coarse_labels
            || heads[0].fine.out_dim != config.fine_labels
        {
            return Err(Error::Shape("decoder parameters do not match decoder config".into()));
        }
        Ok(Self { config, attn_query, attn_key, attn_score, generator, pointers, heads })
    }

    /// Additive attention: `e_j = v . tanh(W_q [h ; tup] + b_q + W_k V_j + b_k)`,
    /// masked softmax over positions, context `sum_j alpha_j V_j`.
    ///
    /// Returns `(context 1 x D_e, alpha 1 x n)`.
    pub fn attend(
        &self,
        g: &mut Graph,
        h_prev: Var,
        tup_prev: Var,
        encoding: Var,
        mask: &[bool],
    ) -> Result<(Var, Var)> {
        check_mask(g, encoding, mask)?;
        let query_in = g.concat_cols(&[h_prev, tup_prev]);
        let query = self.attn_query.forward(g, query_in);
        let keys = self.attn_key.forward(g, encoding);
        let mixed = g.add_row(keys, query);
        let mixed = g.tanh(mixed);
        let v = g.param(self.attn_score);
        let scores = g.matmul(mixed, v);
        let scores = g.transpose(scores);
        let alpha = g.masked_softmax(scores, mask);
        let context = g.matmul(alpha, encoding);
        Ok((context, alpha))
    }

    /// `h^D = LSTM([a^E ; tup], state)`.
    pub fn generator_step(&self, g: &mut Graph, context: Var, tup: Var, state: LstmState) -> LstmState {
        let input = g.concat_cols(&[context, tup]);
        self.generator.step(g, input, state)
    }

    pub fn zero_state(&self, g: &mut Graph) -> LstmState {
        self.generator.zero_state(g)
    }

    pub fn zero_tuple(&self, g: &mut Graph) -> Var {
        g.constant(Matrix::zeros(1, self.config.tuple_dim()))
    }

    /// Pointer block for `slot` (0-based) over per-token `inputs`.
    ///
    /// The BiLSTM runs over the unmasked rows only, so padding never leaks
    /// into real positions.
    pub fn pointer_block(&self, g: &mut Graph, slot: usize, inputs: Var, mask: &[bool]) -> Result<PointerVars> {
        check_mask(g, inputs, mask)?;
        let block = &self.pointers[slot];
        let n = mask.len();
        let real: Vec<usize> = (0..n).filter(|&j| mask[j]).collect();
        let rows = g.gather_rows(inputs, &real);
        let hidden_real = block.rnn.forward(g, rows);
        let start_logits = block.start.forward(g, hidden_real);
        let end_logits = block.end.forward(g, hidden_real);
        let dist = |g: &mut Graph, logits: Var| {
            let full = g.scatter_rows(logits, &real, n);
            let row = g.transpose(full);
            g.masked_softmax(row, mask)
        };
        let start = dist(g, start_logits);
        let end = dist(g, end_logits);
        let hidden = g.scatter_rows(hidden_real, &real, n);
        Ok(PointerVars { start, end, hidden })
    }

    /// Emits the per-slot start/end distributions and the chained hidden sequences.
    fn pointers(&self, g: &mut Graph, h_d: Var, encoding: Var, mask: &[bool]) -> Result<Vec<PointerVars>> {
        let n = mask.len();
        let ones = g.constant(Matrix::from_vec(n, 1, vec![1.0; n]));
        let h_rows = g.matmul(ones, h_d);
        let mut out: Vec<PointerVars> = Vec::with_capacity(self.config.n_slots);
        for k in 0..self.config.n_slots {
            let inputs = match out.last() {
                None => g.concat_cols(&[h_rows, encoding]),
                Some(prev) => g.concat_cols(&[prev.hidden, h_rows, encoding]),
            };
            out.push(self.pointer_block(g, k, inputs, mask)?);
        }
        Ok(out)
    }

    /// Per-slot `(coarse_dist, fine_dist)` from `[tup ; h^D]`.
    pub fn classify_intents(&self, g: &mut Graph, tup: Var, h_d: Var) -> Vec<(Var, Var)> {
        let input = g.concat_cols(&[tup, h_d]);
        self.heads
            .iter()
            .map(|h| {
                let c = h.coarse.forward(g, input);
                let f = h.fine.forward(g, input);
                (g.softmax(c), g.softmax(f))
            })
            .collect()
    }

    /// Runs all decoding steps over an encoding (`n x D_e`, masked rows allowed).
    ///
    /// With `teacher` set, the tuple vectors fed into the history are pooled
    /// at the gold `(start, end)` of every slot (one entry per step).
    pub fn forward_graph<R: Rng>(
        &self,
        g: &mut Graph,
        encoding: Var,
        mask: &[bool],
        teacher: Option<&[Vec<(usize, usize)>]>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Vec<StepVars>> {
        check_mask(g, encoding, mask)?;
        if g.shape(encoding).1 != self.config.encoding_dim {
            return Err(Error::Shape(format!(
                "encoding width {} does not match decoder encoding_dim {}",
                g.shape(encoding).1,
                self.config.encoding_dim
            )));
        }
        if let Some(t) = teacher {
            if t.len() != self.config.n_steps || t.iter().any(|s| s.len() != self.config.n_slots) {
                return Err(Error::Shape("teacher spans must cover every step and slot".into()));
            }
        }
        let n = mask.len();
        let mut history: Vec<Var> = Vec::with_capacity(self.config.n_steps);
        let mut state = self.zero_state(g);
        let mut steps = Vec::with_capacity(self.config.n_steps);

        for t in 0..self.config.n_steps {
            let tup_in = match self.config.tuple_feed {
                TupleFeed::Accumulated => accumulate_tuple(g, &history, self.config.tuple_dim()),
                TupleFeed::Previous => match history.last() {
                    Some(&v) => v,
                    None => self.zero_tuple(g),
                },
            };
            let (context, attention) = self.attend(g, state.h, tup_in, encoding, mask)?;
            state = self.generator_step(g, context, tup_in, state);
            let mut h_d = state.h;
            if let Some(rng) = dropout_rng.as_deref_mut() {
                h_d = dropout(g, h_d, self.config.dropout_rate, rng);
            }

            let pointers = self.pointers(g, h_d, encoding, mask)?;
            let spans: Vec<Var> =
                pointers.iter().map(|p| span_vector(g, p.start, p.end, p.hidden)).collect();
            let tuple = g.concat_cols(&spans);
            let labels = self.classify_intents(g, tuple, h_d);

            let emitted = match teacher {
                Some(gold) => {
                    let mut parts = Vec::with_capacity(self.config.n_slots);
                    for (p, &(s, e)) in pointers.iter().zip(&gold[t]) {
                        if s >= n || e >= n || !mask[s] || !mask[e] {
                            return Err(Error::GoldOnMask(if s >= n || !mask[s] { s } else { e }));
                        }
                        let s1 = g.constant(one_hot_row(n, s));
                        let e1 = g.constant(one_hot_row(n, e));
                        parts.push(span_vector(g, s1, e1, p.hidden));
                    }
                    g.concat_cols(&parts)
                }
                None => tuple,
            };
            history.push(emitted);

            let slots = pointers
                .iter()
                .zip(labels)
                .map(|(p, (coarse, fine))| SlotVars { start: p.start, end: p.end, coarse, fine })
                .collect();
            steps.push(StepVars { slots, attention, tuple });
        }
        Ok(steps)
    }
}

fn check_mask(g: &Graph, rows: Var, mask: &[bool]) -> Result<()> {
    let n = g.shape(rows).0;
    if mask.len() != n {
        return Err(Error::Shape(format!("mask length {} does not match {n} rows", mask.len())));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::AllMasked);
    }
    Ok(())
}

fn one_hot_row(n: usize, at: usize) -> Matrix {
    let mut m = Matrix::zeros(1, n);
    m.data[at] = 1.0;
    m
}

/// `tup = sum of previously emitted tuple vectors`; zero for an empty history.
pub fn accumulate_tuple(g: &mut Graph, history: &[Var], dim: usize) -> Var {
    match history {
        [] => g.constant(Matrix::zeros(1, dim)),
        [first, rest @ ..] => rest.iter().fold(*first, |acc, &v| g.add(acc, v)),
    }
}

/// `[sum_j start_j h_j ; sum_j end_j h_j]`.
pub fn span_vector(g: &mut Graph, start: Var, end: Var, hidden: Var) -> Var {
    let s = g.matmul(start, hidden);
    let e = g.matmul(end, hidden);
    g.concat_cols(&[s, e])
}

/// Probability vectors of one slot at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDistributions {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedSlot {
    pub start: usize,
    pub end: usize,
    pub coarse: usize,
    pub fine: usize,
    pub primary: bool,
}

/// Lowest index of the maximum over the allowed positions.
pub fn argmax_where(values: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if !allowed(i) {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Hard decoding: start = argmax, end = argmax over positions `>= start`,
/// labels = argmax; ties go to the lowest index; slot 1 is primary.
pub fn decode_greedy(slots: &[SlotDistributions], mask: &[bool]) -> Vec<DecodedSlot> {
    slots
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let start = argmax_where(&d.start, |i| mask[i]).unwrap_or(0);
            let end = argmax_where(&d.end, |i| i >= start && mask[i]).unwrap_or(start);
            DecodedSlot {
                start,
                end,
                coarse: argmax_where(&d.coarse, |_| true).unwrap_or(0),
                fine: argmax_where(&d.fine, |_| true).unwrap_or(0),
                primary: k == 0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn config(n_slots: usize) -> DecoderConfig {
        DecoderConfig {
            encoding_dim: 3,
            hidden_dim: 4,
            pointer_hidden: 2,
            n_slots,
            n_steps: 1,
            coarse_labels: 3,
            fine_labels: 4,
            dropout_rate: 0.0,
            tuple_feed: TupleFeed::Accumulated,
        }
    }

    fn decoder(cfg: DecoderConfig) -> (ParamStore, Decoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Decoder::new(&mut store, cfg, &mut rng).unwrap();
        (store, d)
    }

    fn dist(v: &[f64]) -> SlotDistributions {
        SlotDistributions { start: v.to_vec(), end: v.to_vec(), coarse: vec![1.0], fine: vec![1.0] }
    }

    #[test]
    fn single_token_attention_is_degenerate() {
        let (store, d) = decoder(config(2));
        let mut g = Graph::new(&store);
        let enc = g.constant(Matrix::row_vector(vec![0.3, -0.2, 0.9]));
        let h = g.constant(Matrix::row_vector(vec![0.1, 0.2, 0.3, 0.4]));
        let tup = d.zero_tuple(&mut g);
        let (ctx, alpha) = d.attend(&mut g, h, tup, enc, &[true]).unwrap();
        assert_eq!(g.value(alpha).data, vec![1.0]);
        assert_eq!(g.value(ctx).data, vec![0.3, -0.2, 0.9]);
    }

    #[test]
    fn identical_tokens_share_attention() {
        let (store, d) = decoder(config(2));
        let mut g = Graph::new(&store);
        let enc = g.constant(Matrix::from_rows(&[vec![0.5, 0.1, -0.4], vec![0.5, 0.1, -0.4]]));
        let h = g.constant(Matrix::row_vector(vec![0.7, -0.2, 0.0, 1.1]));
        let tup = d.zero_tuple(&mut g);
        let (_, alpha) = d.attend(&mut g, h, tup, enc, &[true, true]).unwrap();
        assert_eq!(g.value(alpha).data, vec![0.5, 0.5]);
    }

    #[test]
    fn all_masked_attention_errors() {
        let (store, d) = decoder(config(1));
        let mut g = Graph::new(&store);
        let enc = g.constant(Matrix::zeros(2, 3));
        let h = g.constant(Matrix::zeros(1, 4));
        let tup = d.zero_tuple(&mut g);
        assert!(matches!(d.attend(&mut g, h, tup, enc, &[false, false]), Err(Error::AllMasked)));
        let rows = g.constant(Matrix::zeros(2, 7));
        assert!(matches!(d.pointer_block(&mut g, 0, rows, &[false, false]), Err(Error::AllMasked)));
    }

    #[test]
    fn zero_weights_and_state_give_zero_hidden() {
        let (mut store, d) = decoder(config(1));
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new(&store);
        let ctx = g.constant(Matrix::row_vector(vec![1.0, -2.0, 3.0]));
        let tup = d.zero_tuple(&mut g);
        let s0 = d.zero_state(&mut g);
        let s1 = d.generator_step(&mut g, ctx, tup, s0);
        assert!(g.value(s1.h).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn accumulate_tuple_sums_history() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let empty = accumulate_tuple(&mut g, &[], 3);
        assert_eq!(g.value(empty).data, vec![0.0; 3]);
        let u = g.constant(Matrix::row_vector(vec![1.0, 2.0, 3.0]));
        let w = g.constant(Matrix::row_vector(vec![0.5, -1.0, 4.0]));
        let one = accumulate_tuple(&mut g, &[u], 3);
        assert_eq!(g.value(one).data, vec![1.0, 2.0, 3.0]);
        let two = accumulate_tuple(&mut g, &[u, w], 3);
        assert_eq!(g.value(two).data, vec![1.5, 1.0, 7.0]);
    }

    #[test]
    fn single_position_pointer_is_certain() {
        let (store, d) = decoder(config(2));
        let mut g = Graph::new(&store);
        let rows = g.constant(Matrix::row_vector(vec![0.1; 7]));
        let p = d.pointer_block(&mut g, 0, rows, &[true]).unwrap();
        assert_eq!(g.value(p.start).data, vec![1.0]);
        assert_eq!(g.value(p.end).data, vec![1.0]);
    }

    #[test]
    fn padded_positions_get_zero_probability() {
        let (store, d) = decoder(config(2));
        let mut g = Graph::new(&store);
        let rows = g.constant(Matrix::from_rows(&(0..6).map(|i| vec![0.1 * i as f64; 7]).collect::<Vec<_>>()));
        let mask = [true, true, true, false, false, false];
        let p = d.pointer_block(&mut g, 0, rows, &mask).unwrap();
        for v in [p.start, p.end] {
            let dist = &g.value(v).data;
            assert_eq!(&dist[3..], &[0.0, 0.0, 0.0]);
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(g.value(p.hidden).row(4).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn span_vector_with_delta_weights_selects_rows() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let hm: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 10.0 + i as f64]).collect();
        let h = g.constant(Matrix::from_rows(&hm));
        let s = g.constant(one_hot_row(6, 2));
        let e = g.constant(one_hot_row(6, 5));
        let v = span_vector(&mut g, s, e, h);
        assert_eq!(g.value(v).data, vec![2.0, 12.0, 5.0, 15.0]);

        let h2 = g.constant(Matrix::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]));
        let u = g.constant(Matrix::row_vector(vec![0.5, 0.5]));
        let v = span_vector(&mut g, u, u, h2);
        assert_eq!(g.value(v).data, vec![2.0, 4.0, 2.0, 4.0]);
    }

    #[test]
    fn single_coarse_class_is_certain_and_zero_heads_are_uniform() {
        let mut cfg = config(2);
        cfg.coarse_labels = 1;
        let (mut store, d) = decoder(cfg);
        for name in ["decoder.intent1.fine.weight", "decoder.intent1.fine.bias"] {
            let id = store.find(name).unwrap();
            store.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new(&store);
        let tup = g.constant(Matrix::row_vector(vec![0.3; d.config.tuple_dim()]));
        let h = g.constant(Matrix::row_vector(vec![-0.2; 4]));
        let out = d.classify_intents(&mut g, tup, h);
        assert_eq!(out.len(), 2);
        assert_eq!(g.value(out[0].0).data, vec![1.0]);
        assert_eq!(g.value(out[0].1).data, vec![0.25; 4]);
    }

    #[test]
    fn greedy_end_is_constrained_after_start() {
        let d = SlotDistributions {
            start: vec![0.05, 0.05, 0.6, 0.1, 0.05, 0.05, 0.1],
            end: vec![0.5, 0.05, 0.05, 0.05, 0.05, 0.05, 0.25],
            coarse: vec![0.2, 0.8],
            fine: vec![0.5, 0.5],
        };
        let out = decode_greedy(&[d], &[true; 7]);
        assert_eq!((out[0].start, out[0].end), (2, 6));
        assert_eq!(out[0].coarse, 1);
        assert_eq!(out[0].fine, 0);
        assert!(out[0].primary);
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let third = 1.0 / 3.0;
        let out = decode_greedy(&[dist(&[third, third, third]), dist(&[1.0])], &[true, true, true]);
        assert_eq!(out[0].start, 0);
        assert!(!out[1].primary);
        let out = decode_greedy(&[dist(&[1.0])], &[true]);
        assert_eq!((out[0].start, out[0].end), (0, 0));
    }

    #[test]
    fn forward_emits_one_distribution_set_per_slot_and_step() {
        for (slots, steps, feed) in [(1, 1, TupleFeed::Accumulated), (3, 2, TupleFeed::Previous), (2, 3, TupleFeed::Accumulated)] {
            let mut cfg = config(slots);
            cfg.n_steps = steps;
            cfg.tuple_feed = feed;
            let (store, d) = decoder(cfg);
            let mut g = Graph::new(&store);
            let enc = g.constant(Matrix::from_rows(&(0..5).map(|i| vec![0.1 * i as f64, 0.2, -0.1]).collect::<Vec<_>>()));
            let out = d
                .forward_graph::<ChaCha8Rng>(&mut g, enc, &[true, true, true, true, false], None, None)
                .unwrap();
            assert_eq!(out.len(), steps);
            for s in &out {
                assert_eq!(s.slots.len(), slots);
                assert_eq!(g.shape(s.tuple), (1, d.config.tuple_dim()));
                for sl in &s.slots {
                    assert_eq!(g.value(sl.start).data[4], 0.0);
                    assert_eq!(g.shape(sl.coarse), (1, 3));
                }
            }
        }
    }

    #[test]
    fn teacher_spans_must_avoid_padding() {
        let mut cfg = config(1);
        cfg.n_steps = 2;
        let (store, d) = decoder(cfg);
        let mut g = Graph::new(&store);
        let enc = g.constant(Matrix::zeros(3, 3));
        let gold = vec![vec![(0, 2)], vec![(0, 1)]];
        let err = d
            .forward_graph::<ChaCha8Rng>(&mut g, enc, &[true, true, false], Some(&gold), None)
            .unwrap_err();
        assert!(matches!(err, Error::GoldOnMask(2)));
    }
}
