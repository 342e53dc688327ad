//! Sentence encoders producing one vector per whitespace token.
//!
//! The trainable baseline is an embedding table with an optional
//! bidirectional LSTM on top. External contextual encoders (BERT-family
//! models and the like) plug in through [`EncoderAdapter`].

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::nn::{uniform, BiLstm};

const EMBED_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Adds a bidirectional LSTM (`embed_dim / 2` per direction) over the embeddings.
    pub contextual: bool,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 {
            return Err(Error::Config("encoder vocab_size and embed_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.contextual && !self.embed_dim.is_multiple_of(2) {
            return Err(Error::Config("contextual encoder needs an even embed_dim".into()));
        }
        Ok(())
    }
}

/// Per-token vectors plus a validity mask (`true` = real token).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncoding {
    pub vectors: Matrix,
    pub mask: Vec<bool>,
}

impl TokenEncoding {
    pub fn new(vectors: Matrix, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != vectors.rows {
            return Err(Error::Shape(format!(
                "mask length {} does not match {} encoding rows",
                mask.len(),
                vectors.rows
            )));
        }
        if !vectors.is_finite() {
            return Err(Error::Validation("encoding contains non-finite entries".into()));
        }
        Ok(Self { vectors, mask })
    }

    pub fn unmasked(vectors: Matrix) -> Result<Self> {
        let n = vectors.rows;
        Self::new(vectors, vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.vectors.rows
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }
}

/// Embedding table with optional BiLSTM context layer.
#[derive(Debug, Clone)]
pub struct BaselineEncoder {
    pub config: EncoderConfig,
    embedding: ParamId,
    context: Option<BiLstm>,
}

impl BaselineEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let embedding = store.add(
            "encoder.embedding",
            uniform(rng, config.vocab_size, config.embed_dim, EMBED_INIT),
        );
        let context = config
            .contextual
            .then(|| BiLstm::new(store, "encoder.context", config.embed_dim, config.embed_dim / 2, rng));
        Ok(Self { config, embedding, context })
    }

    /// Re-binds to parameters of a loaded store.
    pub fn bind(store: &ParamStore, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let missing = |what: &str| Error::Validation(format!("checkpoint lacks parameter {what}"));
        let embedding = store.find("encoder.embedding").ok_or_else(|| missing("encoder.embedding"))?;
        if store.get(embedding).shape() != (config.vocab_size, config.embed_dim) {
            return Err(Error::Shape("embedding table does not match encoder config".into()));
        }
        let context = if config.contextual {
            Some(BiLstm::bind(store, "encoder.context").ok_or_else(|| missing("encoder.context"))?)
        } else {
            None
        };
        Ok(Self { config, embedding, context })
    }

    pub fn out_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Builds the encoding on `g`. `dropout_rng` enables training-mode dropout.
    pub fn encode_graph<R: Rng>(
        &self,
        g: &mut Graph,
        tokens: &[usize],
        dropout_rng: Option<&mut R>,
    ) -> Result<Var> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::OutOfVocab { index: bad, vocab_size: self.config.vocab_size });
        }
        if tokens.is_empty() {
            return Ok(g.constant(Matrix::zeros(0, self.config.embed_dim)));
        }
        let table = g.param(self.embedding);
        let mut x = g.gather_rows(table, tokens);
        if let Some(rng) = dropout_rng {
            x = dropout(g, x, self.config.dropout_rate, rng);
        }
        if let Some(ctx) = &self.context {
            x = ctx.forward(g, x);
        }
        Ok(x)
    }

    /// Evaluates the encoder outside of training. Dropout is applied only
    /// when `training_mode` is set.
    pub fn encode<R: Rng>(
        &self,
        store: &ParamStore,
        tokens: &[usize],
        training_mode: bool,
        rng: &mut R,
    ) -> Result<TokenEncoding> {
        let mut g = Graph::new(store);
        let v = self.encode_graph(&mut g, tokens, training_mode.then_some(rng))?;
        TokenEncoding::unmasked(g.value(v).clone())
    }
}

/// Inverted dropout with a mask drawn from `rng`.
pub fn dropout<R: Rng>(g: &mut Graph, x: Var, rate: f64, rng: &mut R) -> Var {
    if rate <= 0.0 {
        return x;
    }
    let (rows, cols) = g.shape(x);
    let keep = 1.0 - rate;
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = g.constant(Matrix::from_vec(rows, cols, data));
    g.mul(x, mask)
}

/// Subword-level output of an external encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordEncoding {
    /// One row per subword piece.
    pub vectors: Matrix,
    /// Whitespace-token index owning each subword row.
    pub word_ids: Vec<usize>,
}

/// Contract for external contextual encoders.
pub trait EncoderAdapter: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn encode_subwords(&self, tokens: &[String]) -> Result<SubwordEncoding>;
}

/// Mean-pools subword vectors so that there is exactly one row per whitespace token.
pub fn adapter_encode(raw_tokens: &[String], adapter: &dyn EncoderAdapter) -> Result<TokenEncoding> {
    let sub = adapter.encode_subwords(raw_tokens)?;
    let n = raw_tokens.len();
    let dim = adapter.dim();
    if sub.vectors.rows != sub.word_ids.len() {
        return Err(Error::AdapterContract(format!(
            "{}: {} subword rows but {} word ids",
            adapter.name(),
            sub.vectors.rows,
            sub.word_ids.len()
        )));
    }
    if sub.vectors.rows > 0 && sub.vectors.cols != dim {
        return Err(Error::AdapterContract(format!(
            "{}: vectors have width {}, adapter declares {dim}",
            adapter.name(),
            sub.vectors.cols
        )));
    }
    let mut sums = Matrix::zeros(n, dim);
    let mut counts = vec![0usize; n];
    for (r, &w) in sub.word_ids.iter().enumerate() {
        if w >= n {
            return Err(Error::AdapterContract(format!(
                "{}: subword row {r} points at token {w} of {n}",
                adapter.name()
            )));
        }
        counts[w] += 1;
        for c in 0..dim {
            let v = sums.get(w, c) + sub.vectors.get(r, c);
            sums.set(w, c, v);
        }
    }
    let pooled = counts.iter().filter(|&&c| c > 0).count();
    if pooled != n {
        return Err(Error::AdapterContract(format!(
            "{}: pooled {pooled} token vectors for {n} tokens",
            adapter.name()
        )));
    }
    for (w, &c) in counts.iter().enumerate() {
        for col in 0..dim {
            let v = sums.get(w, col) / c as f64;
            sums.set(w, col, v);
        }
    }
    TokenEncoding::unmasked(sums)
        .map_err(|e| Error::AdapterContract(format!("{}: {e}", adapter.name())))
}

/// Name-keyed set of available adapters.
#[derive(Default)]
pub struct AdapterRegistry {
    adapters: BTreeMap<String, Box<dyn EncoderAdapter>>,
}

impl AdapterRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, adapter: Box<dyn EncoderAdapter>) {
        self.adapters.insert(adapter.name().to_string(), adapter);
    }

    pub fn names(&self) -> Vec<&str> {
        self.adapters.keys().map(String::as_str).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn EncoderAdapter> {
        self.adapters
            .get(name)
            .map(Box::as_ref)
            .ok_or_else(|| Error::AdapterUnavailable(name.to_string()))
    }

    pub fn encode(&self, name: &str, raw_tokens: &[String]) -> Result<TokenEncoding> {
        adapter_encode(raw_tokens, self.get(name)?)
    }
}

/// Test double: token `i` maps to the one-hot vector `e_i`.
#[derive(Debug, Clone)]
pub struct OneHotAdapter {
    pub dim: usize,
}

impl EncoderAdapter for OneHotAdapter {
    fn name(&self) -> &str {
        "one-hot"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_subwords(&self, tokens: &[String]) -> Result<SubwordEncoding> {
        if tokens.len() > self.dim {
            return Err(Error::AdapterContract(format!(
                "one-hot: {} tokens exceed dimension {}",
                tokens.len(),
                self.dim
            )));
        }
        let mut vectors = Matrix::zeros(tokens.len(), self.dim);
        for i in 0..tokens.len() {
            vectors.set(i, i, 1.0);
        }
        Ok(SubwordEncoding { vectors, word_ids: (0..tokens.len()).collect() })
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn encoder(contextual: bool, dropout_rate: f64) -> (ParamStore, BaselineEncoder) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = EncoderConfig { vocab_size: 10, embed_dim: 16, contextual, dropout_rate };
        let enc = BaselineEncoder::new(&mut store, cfg, &mut rng).unwrap();
        (store, enc)
    }

    #[test]
    fn shape_is_tokens_by_dim() {
        for contextual in [false, true] {
            let (store, enc) = encoder(contextual, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let out = enc.encode(&store, &[2, 3, 4, 5, 6], false, &mut rng).unwrap();
            assert_eq!(out.vectors.shape(), (5, 16));
            assert!(out.mask.iter().all(|&m| m));
        }
    }

    #[test]
    fn empty_input_gives_empty_matrix() {
        let (store, enc) = encoder(true, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = enc.encode(&store, &[], false, &mut rng).unwrap();
        assert_eq!(out.vectors.shape(), (0, 16));
        assert!(out.is_empty());
    }

    #[test]
    fn inference_is_deterministic_and_training_applies_dropout() {
        let (store, enc) = encoder(false, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = enc.encode(&store, &[2, 3, 4], false, &mut rng).unwrap();
        let b = enc.encode(&store, &[2, 3, 4], false, &mut rng).unwrap();
        assert_eq!(a, b);
        let t = enc.encode(&store, &[2, 3, 4], true, &mut rng).unwrap();
        assert_ne!(a, t);
        assert!(t.vectors.data.contains(&0.0));
    }

    #[test]
    fn embeddings_are_initialized_in_range() {
        let (store, _) = encoder(false, 0.0);
        let table = store.get(store.find("encoder.embedding").unwrap());
        assert!(table.data.iter().all(|v| v.abs() <= EMBED_INIT));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let (store, enc) = encoder(false, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = enc.encode(&store, &[1, 10], false, &mut rng).unwrap_err();
        assert!(matches!(err, Error::OutOfVocab { index: 10, vocab_size: 10 }));
    }

    #[test]
    fn config_invariants() {
        let ok = EncoderConfig { vocab_size: 4, embed_dim: 4, contextual: true, dropout_rate: 0.5 };
        assert!(ok.validate().is_ok());
        assert!(EncoderConfig { dropout_rate: 1.0, ..ok.clone() }.validate().is_err());
        assert!(EncoderConfig { embed_dim: 0, ..ok.clone() }.validate().is_err());
        assert!(EncoderConfig { embed_dim: 5, ..ok }.validate().is_err());
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn one_hot_adapter_rows_are_one_hot() {
        let out = adapter_encode(&words(8), &OneHotAdapter { dim: 8 }).unwrap();
        assert_eq!(out.len(), 8);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(out.vectors.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    struct Broken;

    impl EncoderAdapter for Broken {
        fn name(&self) -> &str {
            "broken"
        }
        fn dim(&self) -> usize {
            2
        }
        fn encode_subwords(&self, tokens: &[String]) -> Result<SubwordEncoding> {
            let n = tokens.len() - 1;
            Ok(SubwordEncoding { vectors: Matrix::zeros(n, 2), word_ids: (0..n).collect() })
        }
    }

    #[test]
    fn short_adapter_output_violates_contract() {
        let err = adapter_encode(&words(8), &Broken).unwrap_err();
        assert!(matches!(err, Error::AdapterContract(ref m) if m.contains("7 token vectors for 8")));
    }

    /// Splits each token into two-character pieces; piece vector = [piece index, token index].
    struct Pieces;

    impl EncoderAdapter for Pieces {
        fn name(&self) -> &str {
            "pieces"
        }
        fn dim(&self) -> usize {
            2
        }
        fn encode_subwords(&self, tokens: &[String]) -> Result<SubwordEncoding> {
            let mut rows = Vec::new();
            let mut word_ids = Vec::new();
            for (w, t) in tokens.iter().enumerate() {
                let pieces = t.chars().count().div_ceil(2);
                for p in 0..pieces {
                    rows.push(vec![p as f64, w as f64]);
                    word_ids.push(w);
                }
            }
            Ok(SubwordEncoding { vectors: Matrix::from_rows(&rows), word_ids })
        }
    }

    #[test]
    fn subwords_are_mean_pooled() {
        let toks: Vec<String> = ["ab", "abcdef", "x"].iter().map(|s| s.to_string()).collect();
        let out = adapter_encode(&toks, &Pieces).unwrap();
        assert_eq!(out.vectors.row(0), &[0.0, 0.0]);
        assert_eq!(out.vectors.row(1), &[1.0, 1.0]);
        assert_eq!(out.vectors.row(2), &[0.0, 2.0]);
    }

    #[test]
    fn registry_reports_missing_adapters() {
        let mut reg = AdapterRegistry::new();
        reg.register(Box::new(OneHotAdapter { dim: 4 }));
        assert_eq!(reg.names(), vec!["one-hot"]);
        assert_eq!(reg.encode("one-hot", &words(3)).unwrap().len(), 3);
        let err = reg.encode("roberta-base", &words(3)).unwrap_err();
        assert!(err.to_string().contains("install or register"));
    }
}
