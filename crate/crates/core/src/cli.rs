//! `mlmcid` command line: synthesize, train, eval, predict.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::corpus::{
    build_corpus, build_vocab, load_jsonl, load_pool, save_jsonl, tokenize, PrimaryPolicy, SplitCounts, SplitName,
    SynthesisConfig, DEFAULT_JOINER,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_report, report_to_json};
use crate::taxonomy::load_taxonomy;
use crate::train::{emit_loss_curve, load_checkpoint, save_checkpoint, train_with_observer};

pub const SEED_ENV: &str = "MLMCID_SEED";
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mlmcid", version, about = "Multi-label multi-class intent detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build train/dev/test multi-intent splits from a single-intent pool.
    Synthesize(SynthesizeArgs),
    /// Train a model and write a checkpoint plus loss curve.
    Train(TrainArgs),
    /// Score a checkpoint on a test split.
    Eval(EvalArgs),
    /// Decode the intents of one sentence.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TRAIN,DEV,TEST example counts.
    #[arg(long)]
    pub counts: SplitCounts,
    #[arg(long, default_value_t = 2)]
    pub n_intents: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "second-span-primary")]
    pub primary_policy: PrimaryPolicy,
    #[arg(long, default_value = DEFAULT_JOINER)]
    pub joiner: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    #[arg(long)]
    pub taxonomy: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated overlap thresholds; empty for none.
    #[arg(long, default_value = "0.5,0.6,0.7,0.8,0.9")]
    pub thresholds: String,
    /// Expected taxonomy; must match the checkpoint's.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub text: String,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

/// Parses `std::env::args`, runs the command and returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    match run(cli, env_seed.as_deref(), &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Synthesize(a) => cmd_synthesize(&a, env_seed, out),
        Command::Train(a) => cmd_train(&a, env_seed, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn parse_seed(env_seed: Option<&str>) -> Result<u64> {
    RunConfig::default().resolve_seed(env_seed)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_output(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_synthesize(a: &SynthesizeArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()> {
    let taxonomy = load_taxonomy(&a.taxonomy)?;
    let pool = load_pool(&a.pool)?;
    let seed = match a.seed {
        Some(s) => s,
        None => parse_seed(env_seed)?,
    };
    let config = SynthesisConfig {
        counts: a.counts,
        n_intents: a.n_intents,
        seed,
        joiner: a.joiner.clone(),
        primary_policy: a.primary_policy,
    };
    let splits = build_corpus(&pool, &taxonomy, &config)?;
    create_dir(&a.out)?;
    let mut files = serde_json::Map::new();
    for split in &splits {
        let name = format!("{}.jsonl", split.name.as_str());
        let path = a.out.join(&name);
        save_jsonl(split, &path)?;
        files.insert(name, json!({ "examples": split.len(), "sha256": sha256_file(&path)? }));
    }
    let manifest = json!({
        "seed": seed,
        "counts": { "train": a.counts.train, "dev": a.counts.dev, "test": a.counts.test },
        "n_intents": a.n_intents,
        "primary_policy": a.primary_policy.as_str(),
        "joiner": a.joiner,
        "pool_sha256": sha256_file(&a.pool)?,
        "taxonomy_sha256": taxonomy.content_hash(),
        "files": files,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = a.out.join("manifest.json");
    std::fs::write(&path, format!("{text}\n")).map_err(|e| Error::io(&path, e))?;
    write_output(out, &format!("wrote {} train, {} dev, {} test examples to {}", a.counts.train, a.counts.dev, a.counts.test, a.out.display()))
}

pub fn cmd_train(a: &TrainArgs, env_seed: Option<&str>, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &a.overrides {
        cfg.assign(o)?;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
    }
    cfg.train.seed = cfg.resolve_seed(env_seed)?;

    let taxonomy = load_taxonomy(&a.taxonomy)?;
    let train_split = load_jsonl(&a.train, SplitName::Train)?;
    let dev_split = load_jsonl(&a.dev, SplitName::Dev)?;
    let n_slots = train_split
        .n_slots()
        .ok_or_else(|| Error::Validation("training split is empty or mixes slot counts".into()))?;
    let vocab = build_vocab(&train_split, cfg.min_count);
    let model_config = cfg.model_config(&vocab, &taxonomy, n_slots);

    let quiet = a.quiet;
    let outcome = train_with_observer(&train_split, &dev_split, &vocab, &taxonomy, model_config, &cfg.train, |r| {
        if !quiet {
            eprintln!("epoch {} train {} dev_total={}", r.epoch, r.train, r.dev_total);
        }
    })?;
    create_dir(&a.out)?;
    let ckpt_path = a.out.join("checkpoint.json");
    save_checkpoint(&outcome.checkpoint, &ckpt_path)?;
    let curve_path = a.out.join("loss_curve.csv");
    emit_loss_curve(&outcome.curve, &curve_path)?;
    write_output(
        out,
        &format!(
            "best epoch {} of {}; wrote {} and {}",
            outcome.checkpoint.epoch,
            cfg.train.epochs,
            ckpt_path.display(),
            curve_path.display()
        ),
    )
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let v: f64 = s.parse().map_err(|e| Error::Config(format!("bad threshold {s:?}: {e}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("threshold {v} outside [0, 1]")));
            }
            Ok(v)
        })
        .collect()
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let thresholds = parse_thresholds(&a.thresholds)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if let Some(p) = &a.taxonomy {
        let expected = load_taxonomy(p)?;
        if expected.content_hash() != ckpt.taxonomy.content_hash() {
            return Err(Error::TaxonomyMismatch(format!(
                "{} hashes to {}, checkpoint was trained on {}",
                p.display(),
                expected.content_hash(),
                ckpt.taxonomy.content_hash()
            )));
        }
    }
    let test = load_jsonl(&a.test, SplitName::Test)?;
    let report = evaluate(&ckpt, &test, &thresholds)?;
    match &a.out {
        Some(p) => {
            render_report(&report, p)?;
            write_output(out, &format!("wrote metrics for {} examples to {}", report.n_examples, p.display()))
        }
        None => write_output(out, &report_to_json(&report)),
    }
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let tokens = tokenize(&a.text);
    if tokens.is_empty() {
        return Err(Error::Validation("--text is empty".into()));
    }
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let model = ckpt.model()?;
    let output = model.predict(&ckpt.vocab, &tokens)?;
    let intents: Vec<_> = output
        .triplets(&ckpt.taxonomy)
        .into_iter()
        .map(|t| json!({ "start": t.start, "end": t.end, "coarse": t.coarse, "fine": t.fine, "primary": t.primary }))
        .collect();
    write_output(out, &json!({ "intents": intents }).to_string())
}
