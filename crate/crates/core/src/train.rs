//! Teacher-forced training with Adam, best-dev checkpointing and loss curves.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, ParamStore};
use crate::corpus::{DatasetSplit, MultiIntentExample, Vocab};
use crate::error::{Error, Result};
use crate::model::{pad_tokens, GoldTarget, Model, ModelConfig};
use crate::objective::{total_loss, LossBreakdown, LossVars};
use crate::taxonomy::Taxonomy;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            weight_decay: 1e-5,
            dropout_rate: 0.5,
            epochs: 5,
            batch_size: 16,
            seed: 0,
            optimizer: Optimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout_rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Matrix]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = params.get_mut(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.data.iter_mut().enumerate() {
                let g = grads[i].data[j] + self.weight_decay * *w;
                m.data[j] = self.beta1 * m.data[j] + (1.0 - self.beta1) * g;
                v.data[j] = self.beta2 * v.data[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m.data[j] / bc1;
                let v_hat = v.data[j] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Example with token ids and gold indices resolved.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub ids: Vec<usize>,
    pub gold: GoldTarget,
}

pub fn prepare(
    split: &DatasetSplit,
    vocab: &Vocab,
    taxonomy: &Taxonomy,
    config: &ModelConfig,
) -> Result<Vec<PreparedExample>> {
    split.validate()?;
    split.validate_labels(taxonomy)?;
    split.examples.iter().map(|ex| prepare_example(ex, vocab, taxonomy, config)).collect()
}

pub fn prepare_example(
    ex: &MultiIntentExample,
    vocab: &Vocab,
    taxonomy: &Taxonomy,
    config: &ModelConfig,
) -> Result<PreparedExample> {
    if ex.tokens.is_empty() {
        return Err(Error::Validation(format!("example {} has no tokens", ex.id)));
    }
    let gold = GoldTarget::from_example(ex, taxonomy, config.decoder.n_slots, config.decoder.n_steps)?;
    Ok(PreparedExample { ids: vocab.encode(&ex.tokens), gold })
}

/// Teacher-forced loss graph of one (possibly padded) example.
pub fn example_loss<R: Rng>(
    model: &Model,
    g: &mut Graph,
    ids: &[usize],
    mask: &[bool],
    gold: &GoldTarget,
    dropout_rng: Option<&mut R>,
) -> Result<LossVars> {
    let steps = model.forward_graph(g, ids, mask, Some(gold), dropout_rng)?;
    let slots: Vec<_> = steps.into_iter().map(|s| s.slots).collect();
    total_loss(g, &slots, gold, mask)
}

/// Mean loss over a batch and the matching mean gradient.
///
/// Each example is padded to the longest sentence in the batch.
pub fn batch_gradient<R: Rng>(
    model: &Model,
    batch: &[&PreparedExample],
    mut dropout_rng: Option<&mut R>,
) -> Result<(LossBreakdown, Vec<Matrix>)> {
    let mut grads = model.params.zeros_like();
    let max_len = batch.iter().map(|e| e.ids.len()).max().unwrap_or(0);
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut parts = Vec::with_capacity(batch.len());
    for ex in batch {
        let (ids, mask) = pad_tokens(&ex.ids, max_len);
        let mut g = Graph::new(&model.params);
        let loss = example_loss(model, &mut g, &ids, &mask, &ex.gold, dropout_rng.as_deref_mut())?;
        parts.push(loss.values(&g));
        g.backward(loss.total).accumulate_into(&mut grads, scale);
    }
    Ok((LossBreakdown::mean(&parts), grads))
}

/// Mean teacher-forced loss without dropout.
pub fn mean_loss(model: &Model, examples: &[PreparedExample]) -> Result<LossBreakdown> {
    let parts = examples
        .iter()
        .map(|ex| {
            let mut g = Graph::new(&model.params);
            let mask = vec![true; ex.ids.len()];
            Ok(example_loss::<ChaCha8Rng>(model, &mut g, &ex.ids, &mask, &ex.gold, None)?.values(&g))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossBreakdown::mean(&parts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub dev_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub records: Vec<EpochRecord>,
}

pub const LOSS_CURVE_HEADER: &str = "epoch,train_total,train_primary,train_non_primary,train_span,dev_total";

impl LossCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOSS_CURVE_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.train.total, r.train.l_primary, r.train.l_non_primary, r.train.l_span, r.dev_total
            );
        }
        out
    }
}

pub fn emit_loss_curve(curve: &LossCurve, path: impl AsRef<Path>) -> Result<()> {
    if curve.records.is_empty() {
        return Err(Error::Validation("loss curve has no epochs".into()));
    }
    let path = path.as_ref();
    std::fs::write(path, curve.to_csv()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub vocab: Vocab,
    pub taxonomy: Taxonomy,
    pub seed: u64,
    pub epoch: usize,
    pub params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct VocabRecord {
    tokens: Vec<String>,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct TaxonomyRecord {
    sha256: String,
    content: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocab: VocabRecord,
    taxonomy: TaxonomyRecord,
    seed: u64,
    epoch: usize,
    params: ParamStore,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model> {
        Model::from_params(self.model_config.clone(), self.params.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        let taxonomy = serde_json::from_str(&self.taxonomy.to_json_string())
            .map_err(|e| Error::parse("taxonomy", e))?;
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            vocab: VocabRecord { tokens: self.vocab.tokens().to_vec(), sha256: self.vocab.content_hash() },
            taxonomy: TaxonomyRecord { sha256: self.taxonomy.content_hash(), content: taxonomy },
            seed: self.seed,
            epoch: self.epoch,
            params: self.params.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::parse("checkpoint", e))
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::parse(context, e))?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::parse(context, "missing format_version"))?;
        if found != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::VersionMismatch { found: found as u32, expected: CHECKPOINT_VERSION });
        }
        let file: CheckpointFile = serde_json::from_value(value).map_err(|e| Error::parse(context, e))?;
        let vocab = Vocab::from_tokens(file.vocab.tokens)?;
        let computed = vocab.content_hash();
        if computed != file.vocab.sha256 {
            return Err(Error::VocabHashMismatch { stored: file.vocab.sha256, computed });
        }
        let taxonomy = Taxonomy::from_json_str(&file.taxonomy.content.to_string(), context)?;
        if taxonomy.content_hash() != file.taxonomy.sha256 {
            return Err(Error::TaxonomyMismatch(format!(
                "checkpoint records taxonomy {}, embedded taxonomy hashes to {}",
                file.taxonomy.sha256,
                taxonomy.content_hash()
            )));
        }
        let ckpt = Self {
            model_config: file.model_config,
            train_config: file.train_config,
            vocab,
            taxonomy,
            seed: file.seed,
            epoch: file.epoch,
            params: file.params,
        };
        ckpt.model()?;
        Ok(ckpt)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest dev loss.
    pub checkpoint: Checkpoint,
    /// Parameters after the last epoch.
    pub final_params: ParamStore,
    pub curve: LossCurve,
}

impl TrainOutcome {
    /// Checkpoint holding the last-epoch parameters.
    pub fn final_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            epoch: self.curve.records.len(),
            params: self.final_params.clone(),
            ..self.checkpoint.clone()
        }
    }
}

pub fn train(
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    vocab: &Vocab,
    taxonomy: &Taxonomy,
    model_config: ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(train_split, dev_split, vocab, taxonomy, model_config, cfg, |_| {})
}

/// Like [`train`], calling `observer` after every epoch.
pub fn train_with_observer(
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    vocab: &Vocab,
    taxonomy: &Taxonomy,
    model_config: ModelConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_split.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    if dev_split.is_empty() {
        return Err(Error::Validation("dev split is empty".into()));
    }
    let model_config = model_config.with_dropout(cfg.dropout_rate);
    if model_config.encoder.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "encoder vocab_size {} does not match vocabulary of {} tokens",
            model_config.encoder.vocab_size,
            vocab.len()
        )));
    }
    if (model_config.decoder.coarse_labels, model_config.decoder.fine_labels) != taxonomy.sizes() {
        return Err(Error::TaxonomyMismatch("label head sizes differ from the taxonomy".into()));
    }
    let train_set = prepare(train_split, vocab, taxonomy, &model_config)?;
    let dev_set = prepare(dev_split, vocab, taxonomy, &model_config)?;

    let mut model = Model::new(model_config.clone(), cfg.seed)?;
    let mut adam = Adam::new(&model.params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let use_dropout = cfg.dropout_rate > 0.0;
    let mut curve = LossCurve::default();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch_id = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 3];
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_gradient(&model, &batch, use_dropout.then_some(&mut rng))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { batch: batch_id, breakdown: loss.to_string() });
            }
            adam.step(&mut model.params, &grads);
            let w = batch.len() as f64;
            sums[0] += loss.l_primary * w;
            sums[1] += loss.l_non_primary * w;
            sums[2] += loss.l_span * w;
            batch_id += 1;
        }
        let n = train_set.len() as f64;
        let train_loss = LossBreakdown::from_components(sums[0] / n, sums[1] / n, sums[2] / n);
        let dev_total = mean_loss(&model, &dev_set)?.total;
        if !dev_total.is_finite() {
            return Err(Error::NonFiniteLoss { batch: batch_id, breakdown: format!("dev total={dev_total}") });
        }
        if best.as_ref().is_none_or(|(b, _, _)| dev_total < *b) {
            best = Some((dev_total, epoch, model.params.clone()));
        }
        let record = EpochRecord { epoch, train: train_loss, dev_total };
        observer(&record);
        curve.records.push(record);
    }

    let (_, epoch, params) = best.expect("at least one epoch ran");
    let checkpoint = Checkpoint {
        model_config,
        train_config: cfg.clone(),
        vocab: vocab.clone(),
        taxonomy: taxonomy.clone(),
        seed: cfg.seed,
        epoch,
        params,
    };
    Ok(TrainOutcome { checkpoint, final_params: model.params, curve })
}
