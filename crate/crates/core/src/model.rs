//! Encoder plus pointer-network decoder over one shared parameter store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, ParamStore};
use crate::corpus::{IntentSpanTriplet, MultiIntentExample, Vocab, PAD};
use crate::decoder::{decode_greedy, DecodedSlot, Decoder, DecoderConfig, SlotDistributions, StepVars};
use crate::encoder::{BaselineEncoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    /// Sizes the label heads from `taxonomy` and the embedding from `vocab`.
    pub fn for_task(
        vocab: &Vocab,
        taxonomy: &Taxonomy,
        embed_dim: usize,
        hidden_dim: usize,
        pointer_hidden: usize,
        n_slots: usize,
    ) -> Self {
        Self {
            encoder: EncoderConfig { vocab_size: vocab.len(), embed_dim, contextual: false, dropout_rate: 0.0 },
            decoder: DecoderConfig {
                encoding_dim: embed_dim,
                hidden_dim,
                pointer_hidden,
                n_slots,
                n_steps: 1,
                coarse_labels: taxonomy.num_coarse(),
                fine_labels: taxonomy.num_fine(),
                dropout_rate: 0.0,
                tuple_feed: Default::default(),
            },
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.encoder.dropout_rate = rate;
        self.decoder.dropout_rate = rate;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        if self.encoder.embed_dim != self.decoder.encoding_dim {
            return Err(Error::Config(format!(
                "encoder width {} does not match decoder encoding_dim {}",
                self.encoder.embed_dim, self.decoder.encoding_dim
            )));
        }
        Ok(())
    }
}

/// Gold pointer and label indices of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldSlot {
    pub start: usize,
    pub end: usize,
    pub coarse: usize,
    pub fine: usize,
}

/// Gold targets indexed `[step][slot]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTarget {
    pub steps: Vec<Vec<GoldSlot>>,
}

impl GoldTarget {
    /// Triplets are read step-major: step `t` slot `k` is `triplets[t * n_slots + k]`.
    pub fn from_example(
        ex: &MultiIntentExample,
        taxonomy: &Taxonomy,
        n_slots: usize,
        n_steps: usize,
    ) -> Result<Self> {
        if ex.triplets.len() != n_slots * n_steps {
            return Err(Error::Validation(format!(
                "example {} has {} triplets, model expects {n_steps} step(s) of {n_slots} slot(s)",
                ex.id,
                ex.triplets.len()
            )));
        }
        let slots = ex
            .triplets
            .iter()
            .map(|t| {
                Ok(GoldSlot {
                    start: t.start,
                    end: t.end,
                    coarse: taxonomy.coarse_index(&t.coarse)?,
                    fine: taxonomy.fine_index(&t.fine)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { steps: slots.chunks(n_slots).map(<[GoldSlot]>::to_vec).collect() })
    }

    pub fn spans(&self) -> Vec<Vec<(usize, usize)>> {
        self.steps.iter().map(|s| s.iter().map(|g| (g.start, g.end)).collect()).collect()
    }
}

/// Evaluated distributions of every step and slot plus the hard decoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub steps: Vec<Vec<SlotDistributions>>,
    pub decoded: Vec<Vec<DecodedSlot>>,
}

impl ModelOutput {
    /// Decoded slots of every step as named triplets.
    pub fn triplets(&self, taxonomy: &Taxonomy) -> Vec<IntentSpanTriplet> {
        self.decoded
            .iter()
            .flatten()
            .map(|d| IntentSpanTriplet {
                start: d.start,
                end: d.end,
                coarse: taxonomy.coarse_name(d.coarse).unwrap_or_default().to_string(),
                fine: taxonomy.fine_name(d.fine).unwrap_or_default().to_string(),
                primary: d.primary,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    encoder: BaselineEncoder,
    decoder: Decoder,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = BaselineEncoder::new(&mut params, config.encoder.clone(), &mut rng)?;
        let decoder = Decoder::new(&mut params, config.decoder.clone(), &mut rng)?;
        Ok(Self { config, params, encoder, decoder })
    }

    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let encoder = BaselineEncoder::bind(&params, config.encoder.clone())?;
        let decoder = Decoder::bind(&params, config.decoder.clone())?;
        Ok(Self { config, params, encoder, decoder })
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Builds the full forward graph. Only unmasked tokens are encoded; masked
    /// rows of the encoding are zero.
    pub fn forward_graph<R: Rng>(
        &self,
        g: &mut Graph,
        tokens: &[usize],
        mask: &[bool],
        teacher: Option<&GoldTarget>,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Vec<StepVars>> {
        if tokens.is_empty() {
            return Err(Error::Validation("cannot run the model on an empty sentence".into()));
        }
        if mask.len() != tokens.len() {
            return Err(Error::Shape(format!(
                "mask length {} does not match {} tokens",
                mask.len(),
                tokens.len()
            )));
        }
        let real: Vec<usize> = (0..tokens.len()).filter(|&j| mask[j]).collect();
        if real.is_empty() {
            return Err(Error::AllMasked);
        }
        let real_tokens: Vec<usize> = real.iter().map(|&j| tokens[j]).collect();
        let enc = self.encoder.encode_graph(g, &real_tokens, dropout_rng.as_deref_mut())?;
        let enc = if real.len() == tokens.len() { enc } else { g.scatter_rows(enc, &real, tokens.len()) };
        let spans = teacher.map(GoldTarget::spans);
        self.decoder.forward_graph(g, enc, mask, spans.as_deref(), dropout_rng)
    }

    /// Inference pass (no dropout, no teacher forcing).
    pub fn forward(&self, tokens: &[usize], mask: &[bool]) -> Result<ModelOutput> {
        let mut g = Graph::new(&self.params);
        let steps = self.forward_graph::<ChaCha8Rng>(&mut g, tokens, mask, None, None)?;
        let row = |m: &Matrix| m.data.clone();
        let steps: Vec<Vec<SlotDistributions>> = steps
            .iter()
            .map(|s| {
                s.slots
                    .iter()
                    .map(|v| SlotDistributions {
                        start: row(g.value(v.start)),
                        end: row(g.value(v.end)),
                        coarse: row(g.value(v.coarse)),
                        fine: row(g.value(v.fine)),
                    })
                    .collect()
            })
            .collect();
        let decoded = steps.iter().map(|s| decode_greedy(s, mask)).collect();
        Ok(ModelOutput { steps, decoded })
    }

    /// Encodes `raw` tokens with `vocab` and runs inference.
    pub fn predict(&self, vocab: &Vocab, raw: &[String]) -> Result<ModelOutput> {
        let ids = vocab.encode(raw);
        self.forward(&ids, &vec![true; ids.len()])
    }
}

/// Right-pads `tokens` with the pad index up to `len`.
pub fn pad_tokens(tokens: &[usize], len: usize) -> (Vec<usize>, Vec<bool>) {
    let mut ids = tokens.to_vec();
    let mut mask = vec![true; tokens.len()];
    ids.resize(len.max(tokens.len()), PAD);
    mask.resize(ids.len(), false);
    (ids, mask)
}
