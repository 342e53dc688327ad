//! Flat `key = value` run configuration.

use std::path::Path;

use crate::corpus::Vocab;
use crate::decoder::{DecoderConfig, TupleFeed};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::taxonomy::Taxonomy;
use crate::train::TrainConfig;

pub const KNOWN_KEYS: &[&str] = &[
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "batch_size",
    "contextual",
    "dropout_rate",
    "embed_dim",
    "epochs",
    "hidden_dim",
    "learning_rate",
    "min_count",
    "n_slots",
    "n_steps",
    "optimizer",
    "pointer_hidden",
    "seed",
    "tuple_feed",
    "weight_decay",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub pointer_hidden: usize,
    /// Taken from the training split when unset.
    pub n_slots: Option<usize>,
    pub n_steps: usize,
    pub contextual: bool,
    pub tuple_feed: TupleFeed,
    pub min_count: usize,
    /// Falls back to `MLMCID_SEED`, then 0, when unset.
    pub seed: Option<u64>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 64,
            pointer_hidden: 32,
            n_slots: None,
            n_steps: 1,
            contextual: false,
            tuple_feed: TupleFeed::Accumulated,
            min_count: 1,
            seed: None,
            train: TrainConfig::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::Config(format!("invalid value {value:?} for {key}: {e}")))
}

impl RunConfig {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text, context)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str, context: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{context}:{}: expected key = value, got {line:?}", i + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("{context}:{}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    /// Applies a `key=value` assignment.
    pub fn assign(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "pointer_hidden" => self.pointer_hidden = parse_value(key, value)?,
            "n_slots" => self.n_slots = Some(parse_value(key, value)?),
            "n_steps" => self.n_steps = parse_value(key, value)?,
            "contextual" => self.contextual = parse_value(key, value)?,
            "tuple_feed" => {
                self.tuple_feed = match value {
                    "accumulated" => TupleFeed::Accumulated,
                    "previous" => TupleFeed::Previous,
                    _ => return Err(Error::Config(format!("tuple_feed must be accumulated or previous, got {value:?}"))),
                }
            }
            "min_count" => self.min_count = parse_value(key, value)?,
            "seed" => self.seed = Some(parse_value(key, value)?),
            "learning_rate" => t.learning_rate = parse_value(key, value)?,
            "weight_decay" => t.weight_decay = parse_value(key, value)?,
            "dropout_rate" => t.dropout_rate = parse_value(key, value)?,
            "epochs" => t.epochs = parse_value(key, value)?,
            "batch_size" => t.batch_size = parse_value(key, value)?,
            "adam_beta1" => t.beta1 = parse_value(key, value)?,
            "adam_beta2" => t.beta2 = parse_value(key, value)?,
            "adam_eps" => t.adam_eps = parse_value(key, value)?,
            "optimizer" => {
                if value != "adam" {
                    return Err(Error::Config(format!("unsupported optimizer {value:?} (known: adam)")));
                }
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?}; known keys: {}",
                    KNOWN_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Seed from the config, else `env_seed`, else 0.
    pub fn resolve_seed(&self, env_seed: Option<&str>) -> Result<u64> {
        match (self.seed, env_seed) {
            (Some(s), _) => Ok(s),
            (None, Some(v)) => parse_value("MLMCID_SEED", v.trim()),
            (None, None) => Ok(0),
        }
    }

    pub fn model_config(&self, vocab: &Vocab, taxonomy: &Taxonomy, n_slots: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                vocab_size: vocab.len(),
                embed_dim: self.embed_dim,
                contextual: self.contextual,
                dropout_rate: self.train.dropout_rate,
            },
            decoder: DecoderConfig {
                encoding_dim: self.embed_dim,
                hidden_dim: self.hidden_dim,
                pointer_hidden: self.pointer_hidden,
                n_slots: self.n_slots.unwrap_or(n_slots),
                n_steps: self.n_steps,
                coarse_labels: taxonomy.num_coarse(),
                fine_labels: taxonomy.num_fine(),
                dropout_rate: self.train.dropout_rate,
                tuple_feed: self.tuple_feed,
            },
        }
    }
}

fn strip_prefix(e: &Error) -> String {
    let s = e.to_string();
    s.strip_prefix("configuration error: ").map(str::to_string).unwrap_or(s)
}
