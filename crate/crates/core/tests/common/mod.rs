#![allow(dead_code)]

use std::path::PathBuf;

use mlmcid::autograd::Graph;
use mlmcid::config::RunConfig;
use mlmcid::corpus::{build_vocab, load_jsonl, DatasetSplit, SplitName, Vocab};
use mlmcid::decoder::{DecoderConfig, TupleFeed};
use mlmcid::encoder::EncoderConfig;
use mlmcid::model::{GoldSlot, GoldTarget, Model, ModelConfig};
use mlmcid::taxonomy::{load_taxonomy, Taxonomy};
use mlmcid::train::{example_loss, train, TrainConfig, TrainOutcome};
use rand_chacha::ChaCha8Rng;

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(rel: &str) -> PathBuf {
    crate_dir().join("data/fixtures").join(rel)
}

pub struct Fixture {
    pub taxonomy: Taxonomy,
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub test: DatasetSplit,
    pub vocab: Vocab,
}

/// `name` is one of `toy1`, `toy2`, `toy3`.
pub fn load_fixture(name: &str) -> Fixture {
    let tax = if name == "toy3" { "toy3_taxonomy.json" } else { "toy_taxonomy.json" };
    let taxonomy = load_taxonomy(fixture(tax)).unwrap();
    let train = load_jsonl(fixture(&format!("{name}/train.jsonl")), SplitName::Train).unwrap();
    let dev = load_jsonl(fixture(&format!("{name}/dev.jsonl")), SplitName::Dev).unwrap();
    let test = load_jsonl(fixture(&format!("{name}/test.jsonl")), SplitName::Test).unwrap();
    let vocab = build_vocab(&train, 1);
    Fixture { taxonomy, train, dev, test, vocab }
}

pub fn toy_run_config() -> RunConfig {
    RunConfig::load(crate_dir().join("configs/toy.conf")).unwrap()
}

pub fn train_fixture(f: &Fixture, epochs: usize) -> TrainOutcome {
    let mut cfg = toy_run_config();
    cfg.train.epochs = epochs;
    cfg.train.seed = cfg.seed.unwrap_or(0);
    let n_slots = f.train.n_slots().unwrap();
    let mc = cfg.model_config(&f.vocab, &f.taxonomy, n_slots);
    train(&f.train, &f.dev, &f.vocab, &f.taxonomy, mc, &cfg.train).unwrap()
}

/// Toy model: D_e = D_h = D_H = 4.
pub fn toy_model_config(vocab_size: usize, n_slots: usize, coarse: usize, fine: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig { vocab_size, embed_dim: 4, contextual: false, dropout_rate: 0.0 },
        decoder: DecoderConfig {
            encoding_dim: 4,
            hidden_dim: 4,
            pointer_hidden: 4,
            n_slots,
            n_steps: 1,
            coarse_labels: coarse,
            fine_labels: fine,
            dropout_rate: 0.0,
            tuple_feed: TupleFeed::Accumulated,
        },
    }
}

pub fn gold(steps: &[&[(usize, usize, usize, usize)]]) -> GoldTarget {
    GoldTarget {
        steps: steps
            .iter()
            .map(|s| s.iter().map(|&(start, end, coarse, fine)| GoldSlot { start, end, coarse, fine }).collect())
            .collect(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: usize,
    pub worst_pair: (f64, f64),
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn loss_at(model: &Model, ids: &[usize], mask: &[bool], gold: &GoldTarget) -> f64 {
    let mut g = Graph::new(&model.params);
    let l = example_loss::<ChaCha8Rng>(model, &mut g, ids, mask, gold, None).unwrap();
    g.scalar(l.total)
}

/// Compares the analytic gradient of the total loss to the fourth-order
/// central difference on every parameter scalar.
pub fn grad_check(model: &mut Model, ids: &[usize], mask: &[bool], gold: &GoldTarget, h: f64) -> GradCheck {
    let mut analytic = model.params.zeros_like();
    {
        let mut g = Graph::new(&model.params);
        let l = example_loss::<ChaCha8Rng>(model, &mut g, ids, mask, gold, None).unwrap();
        g.backward(l.total).accumulate_into(&mut analytic, 1.0);
    }
    let mut out = GradCheck { checked: 0, max_rel_err: 0.0, worst_param: 0, worst_pair: (0.0, 0.0) };
    let ids_list: Vec<_> = model.params.ids().collect();
    for (i, &pid) in ids_list.iter().enumerate() {
        for j in 0..model.params.get(pid).data.len() {
            let orig = model.params.get(pid).data[j];
            let mut at = |delta: f64| {
                model.params.get_mut(pid).data[j] = orig + delta;
                loss_at(model, ids, mask, gold)
            };
            let numeric = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            model.params.get_mut(pid).data[j] = orig;
            let e = rel_err(analytic[i].data[j], numeric);
            if e > out.max_rel_err {
                out.max_rel_err = e;
                out.worst_param = i;
                out.worst_pair = (analytic[i].data[j], numeric);
            }
            out.checked += 1;
        }
    }
    out
}

/// Fraction of examples whose every slot span matches exactly, and fraction
/// of slots whose coarse and fine labels both match.
pub fn fit_quality(model: &Model, f: &Fixture, split: &DatasetSplit) -> (f64, f64) {
    let mut span_hits = 0;
    let mut label_hits = 0;
    let mut slots = 0;
    for ex in &split.examples {
        let out = model.predict(&f.vocab, &ex.tokens).unwrap();
        let pred = out.triplets(&f.taxonomy);
        if pred.iter().zip(&ex.triplets).all(|(p, g)| p.span() == g.span()) {
            span_hits += 1;
        }
        for (p, g) in pred.iter().zip(&ex.triplets) {
            slots += 1;
            if p.coarse == g.coarse && p.fine == g.fine {
                label_hits += 1;
            }
        }
    }
    (span_hits as f64 / split.len() as f64, label_hits as f64 / slots as f64)
}

pub fn default_train_config() -> TrainConfig {
    TrainConfig::default()
}
