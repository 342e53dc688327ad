//! Multi-intent datasets: tokenization, MixSNIPS-style synthesis from
//! single-intent pools, JSONL IO, k-shot subsetting and vocabularies.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::taxonomy::{Granularity, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Es,
    Th,
    Other,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Es => "es",
            Language::Th => "th",
            Language::Other => "other",
        }
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "en" => Ok(Language::En),
            "es" => Ok(Language::Es),
            "th" => Ok(Language::Th),
            "other" => Ok(Language::Other),
            _ => Err(format!("unknown language {s:?} (expected en, es, th or other)")),
        }
    }
}

/// Single-intent source utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub text: String,
    pub fine_intent: String,
    pub language: Language,
    /// Primary-intent annotation, used by [`PrimaryPolicy::Annotated`].
    pub primary: Option<bool>,
}

impl Utterance {
    pub fn new(text: impl Into<String>, fine_intent: impl Into<String>) -> Self {
        Self { text: text.into(), fine_intent: fine_intent.into(), language: Language::En, primary: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntentSpanTriplet {
    pub start: usize,
    pub end: usize,
    pub coarse: String,
    pub fine: String,
    pub primary: bool,
}

impl IntentSpanTriplet {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIntentExample {
    pub id: String,
    pub tokens: Vec<String>,
    /// Slot order: the primary triplet is always at index 0.
    pub triplets: Vec<IntentSpanTriplet>,
    pub language: Language,
    /// Set when primary and non-primary could not be told apart.
    pub both_primary: bool,
}

impl MultiIntentExample {
    /// Structural invariants: spans in range, exactly one primary flag at
    /// slot 0, pairwise-disjoint spans.
    pub fn validate(&self) -> Result<()> {
        let id = &self.id;
        if self.triplets.is_empty() {
            return Err(Error::Validation(format!("example {id}: no intents")));
        }
        for (k, t) in self.triplets.iter().enumerate() {
            if t.start > t.end || t.end >= self.tokens.len() {
                return Err(Error::Validation(format!(
                    "example {id}: slot {k} span ({}, {}) invalid for {} tokens",
                    t.start,
                    t.end,
                    self.tokens.len()
                )));
            }
        }
        let primaries = self.triplets.iter().filter(|t| t.primary).count();
        if primaries != 1 {
            return Err(Error::Validation(format!(
                "example {id}: expected exactly one primary intent, found {primaries}"
            )));
        }
        if !self.triplets[0].primary {
            return Err(Error::Validation(format!("example {id}: primary intent must occupy slot 1")));
        }
        for a in 0..self.triplets.len() {
            for b in a + 1..self.triplets.len() {
                let (x, y) = (&self.triplets[a], &self.triplets[b]);
                if x.start <= y.end && y.start <= x.end {
                    return Err(Error::Validation(format!(
                        "example {id}: spans of slots {a} and {b} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks labels against a taxonomy, including `coarse == coarse_of(fine)`.
    pub fn validate_labels(&self, taxonomy: &Taxonomy) -> Result<()> {
        for t in &self.triplets {
            let coarse = taxonomy.coarse_of_name(&t.fine)?;
            if coarse != t.coarse {
                return Err(Error::Validation(format!(
                    "example {}: fine label {:?} belongs to {:?}, not {:?}",
                    self.id, t.fine, coarse, t.coarse
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub examples: Vec<MultiIntentExample>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, examples: Vec<MultiIntentExample>) -> Self {
        Self { name, examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Runs the example validator over the whole split and checks id uniqueness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for ex in &self.examples {
            ex.validate()?;
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::Validation(format!("duplicate example id {:?} in {}", ex.id, self.name)));
            }
        }
        Ok(())
    }

    pub fn validate_labels(&self, taxonomy: &Taxonomy) -> Result<()> {
        self.examples.iter().try_for_each(|ex| ex.validate_labels(taxonomy))
    }

    /// Number of intent slots, if every example agrees.
    pub fn n_slots(&self) -> Option<usize> {
        let first = self.examples.first()?.triplets.len();
        self.examples.iter().all(|e| e.triplets.len() == first).then_some(first)
    }
}

/// Whitespace tokenizer. Punctuation stays attached; case is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrimaryPolicy {
    #[default]
    SecondSpanPrimary,
    FirstSpanPrimary,
    Annotated,
}

impl PrimaryPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            PrimaryPolicy::SecondSpanPrimary => "second-span-primary",
            PrimaryPolicy::FirstSpanPrimary => "first-span-primary",
            PrimaryPolicy::Annotated => "annotated",
        }
    }
}

impl FromStr for PrimaryPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "second-span-primary" => Ok(PrimaryPolicy::SecondSpanPrimary),
            "first-span-primary" => Ok(PrimaryPolicy::FirstSpanPrimary),
            "annotated" => Ok(PrimaryPolicy::Annotated),
            _ => Err(format!(
                "unknown primary policy {s:?} (expected second-span-primary, first-span-primary or annotated)"
            )),
        }
    }
}

pub const DEFAULT_JOINER: &str = ", ";

/// Splices single-intent utterances into one multi-intent example.
///
/// Joiner tokens belong to no span. The primary triplet is placed in slot 1
/// and the remaining triplets follow in textual order.
pub fn synthesize(
    id: impl Into<String>,
    utterances: &[&Utterance],
    taxonomy: &Taxonomy,
    joiner: &str,
    policy: PrimaryPolicy,
) -> Result<MultiIntentExample> {
    let id = id.into();
    let first = utterances
        .first()
        .ok_or_else(|| Error::Validation("cannot synthesize from zero utterances".into()))?;
    let language = first.language;

    let mut coarse_seen: Vec<&str> = Vec::with_capacity(utterances.len());
    for u in utterances {
        if u.language != language {
            return Err(Error::Validation(format!(
                "cannot mix languages {} and {}",
                language.as_str(),
                u.language.as_str()
            )));
        }
        let coarse = taxonomy.coarse_of_name(&u.fine_intent)?;
        if coarse_seen.contains(&coarse) {
            return Err(Error::CoarseCollision(coarse.to_string()));
        }
        coarse_seen.push(coarse);
    }

    let joiner_tokens = tokenize(joiner);
    let mut tokens = Vec::new();
    let mut spans = Vec::with_capacity(utterances.len());
    for (i, u) in utterances.iter().enumerate() {
        if i > 0 {
            tokens.extend(joiner_tokens.iter().cloned());
        }
        let utt_tokens = tokenize(&u.text);
        if utt_tokens.is_empty() {
            return Err(Error::Validation(format!("utterance for {:?} has empty text", u.fine_intent)));
        }
        let start = tokens.len();
        tokens.extend(utt_tokens);
        spans.push((start, tokens.len() - 1));
    }

    let n = utterances.len();
    let (primary_idx, both_primary) = match policy {
        _ if n == 1 => (0, false),
        PrimaryPolicy::FirstSpanPrimary => (0, false),
        PrimaryPolicy::SecondSpanPrimary => (1, false),
        PrimaryPolicy::Annotated => {
            let marked: Vec<usize> =
                (0..n).filter(|&i| utterances[i].primary == Some(true)).collect();
            if marked.len() == 1 {
                (marked[0], false)
            } else {
                (n - 1, true)
            }
        }
    };

    let mut order = vec![primary_idx];
    order.extend((0..n).filter(|&i| i != primary_idx));
    let triplets = order
        .into_iter()
        .map(|i| IntentSpanTriplet {
            start: spans[i].0,
            end: spans[i].1,
            coarse: coarse_seen[i].to_string(),
            fine: utterances[i].fine_intent.trim().to_string(),
            primary: i == primary_idx,
        })
        .collect();

    Ok(MultiIntentExample { id, tokens, triplets, language, both_primary })
}

pub fn synthesize_pair(
    id: impl Into<String>,
    u1: &Utterance,
    u2: &Utterance,
    taxonomy: &Taxonomy,
    joiner: &str,
    policy: PrimaryPolicy,
) -> Result<MultiIntentExample> {
    synthesize(id, &[u1, u2], taxonomy, joiner, policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, dev: usize, test: usize) -> Self {
        Self { train, dev, test }
    }

    pub fn get(&self, split: SplitName) -> usize {
        match split {
            SplitName::Train => self.train,
            SplitName::Dev => self.dev,
            SplitName::Test => self.test,
        }
    }
}

impl FromStr for SplitCounts {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("expected TRAIN,DEV,TEST counts, got {s:?}"));
        }
        let parse = |p: &str| p.parse::<usize>().map_err(|e| format!("bad count {p:?}: {e}"));
        Ok(Self { train: parse(parts[0])?, dev: parse(parts[1])?, test: parse(parts[2])? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisConfig {
    pub counts: SplitCounts,
    pub n_intents: usize,
    pub seed: u64,
    pub joiner: String,
    pub primary_policy: PrimaryPolicy,
}

impl SynthesisConfig {
    pub fn new(counts: SplitCounts, n_intents: usize, seed: u64) -> Self {
        Self {
            counts,
            n_intents,
            seed,
            joiner: DEFAULT_JOINER.to_string(),
            primary_policy: PrimaryPolicy::default(),
        }
    }
}

const MAX_DRAWS_PER_EXAMPLE: usize = 1000;

/// Samples train/dev/test splits of multi-intent examples from a single-intent pool.
///
/// Each example draws `n_intents` pool utterances with pairwise-distinct
/// coarse labels and a common language. No ordered combination of pool
/// entries is used twice across all splits.
pub fn build_corpus(
    pool: &[Utterance],
    taxonomy: &Taxonomy,
    config: &SynthesisConfig,
) -> Result<[DatasetSplit; 3]> {
    let n = config.n_intents;
    if n == 0 {
        return Err(Error::Config("n_intents must be at least 1".into()));
    }
    if config.counts.train == 0 || config.counts.dev == 0 || config.counts.test == 0 {
        return Err(Error::Config("split counts must be positive".into()));
    }
    let coarse: Vec<&str> = pool
        .iter()
        .map(|u| taxonomy.coarse_of_name(&u.fine_intent))
        .collect::<Result<_>>()?;
    for u in pool {
        if u.text.trim().is_empty() {
            return Err(Error::Validation(format!("pool utterance for {:?} has empty text", u.fine_intent)));
        }
    }
    let mut coarse_per_language: BTreeMap<Language, BTreeSet<&str>> = BTreeMap::new();
    for (u, c) in pool.iter().zip(&coarse) {
        coarse_per_language.entry(u.language).or_default().insert(c);
    }
    let widest = coarse_per_language.values().map(BTreeSet::len).max().unwrap_or(0);
    if widest < n {
        return Err(Error::SynthesisExhausted(format!(
            "pool offers at most {widest} distinct coarse labels in one language, {n} needed"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut used: HashSet<Vec<usize>> = HashSet::new();
    let mut splits = Vec::with_capacity(3);

    for split in SplitName::ALL {
        let target = config.counts.get(split);
        let mut examples = Vec::with_capacity(target);
        for i in 0..target {
            let combo = (0..MAX_DRAWS_PER_EXAMPLE)
                .find_map(|_| {
                    let c = draw_combination(&mut rng, pool, &coarse, n)?;
                    (!used.contains(&c)).then_some(c)
                })
                .ok_or_else(|| {
                    Error::SynthesisExhausted(format!(
                        "no unused combination found for {split} example {i} of {target}"
                    ))
                })?;
            let members: Vec<&Utterance> = combo.iter().map(|&k| &pool[k]).collect();
            let id = format!("{}-{:05}", split.as_str(), i);
            examples.push(synthesize(id, &members, taxonomy, &config.joiner, config.primary_policy)?);
            used.insert(combo);
        }
        splits.push(DatasetSplit::new(split, examples));
    }

    let [train, dev, test]: [DatasetSplit; 3] = splits.try_into().expect("three splits");
    Ok([train, dev, test])
}

fn draw_combination(
    rng: &mut ChaCha8Rng,
    pool: &[Utterance],
    coarse: &[&str],
    n: usize,
) -> Option<Vec<usize>> {
    let first = rng.gen_range(0..pool.len());
    let language = pool[first].language;
    let mut chosen = vec![first];
    while chosen.len() < n {
        let candidates: Vec<usize> = (0..pool.len())
            .filter(|&k| {
                pool[k].language == language && chosen.iter().all(|&c| coarse[c] != coarse[k])
            })
            .collect();
        if candidates.is_empty() {
            return None;
        }
        chosen.push(candidates[rng.gen_range(0..candidates.len())]);
    }
    Some(chosen)
}

/// At most `k` examples per label of the primary triplet, drawn uniformly
/// without replacement. The result keeps the original example order.
pub fn sample_k_shot(split: &DatasetSplit, k: usize, key: Granularity, seed: u64) -> DatasetSplit {
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in split.examples.iter().enumerate() {
        let Some(primary) = ex.triplets.first() else { continue };
        let label = match key {
            Granularity::Coarse => primary.coarse.as_str(),
            Granularity::Fine => primary.fine.as_str(),
        };
        by_label.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for indices in by_label.values_mut() {
        let take = k.min(indices.len());
        let (chosen, _) = indices.partial_shuffle(&mut rng, take);
        keep.extend_from_slice(chosen);
    }
    keep.sort_unstable();
    DatasetSplit::new(split.name, keep.into_iter().map(|i| split.examples[i].clone()).collect())
}

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Token-to-index mapping with `PAD = 0` and `UNK = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Validation("vocabulary must start with <pad>, <unk>".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn index_or_unk(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_or_unk(t)).collect()
    }

    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}

/// Tokens with frequency >= `min_count`, most frequent first, ties broken lexicographically.
pub fn build_vocab(split: &DatasetSplit, min_count: usize) -> Vocab {
    let min_count = min_count.max(1);
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for ex in &split.examples {
        for t in &ex.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocab::from_tokens(tokens).expect("vocabulary built from unique tokens")
}

#[derive(Serialize)]
struct IntentRecord<'a> {
    start: usize,
    end: usize,
    coarse: &'a str,
    fine: &'a str,
    primary: bool,
}

#[derive(Serialize)]
struct ExampleRecord<'a> {
    id: &'a str,
    tokens: &'a [String],
    language: &'a str,
    intents: Vec<IntentRecord<'a>>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    both_primary: bool,
}

pub fn example_to_json(ex: &MultiIntentExample) -> String {
    let record = ExampleRecord {
        id: &ex.id,
        tokens: &ex.tokens,
        language: ex.language.as_str(),
        intents: ex
            .triplets
            .iter()
            .map(|t| IntentRecord {
                start: t.start,
                end: t.end,
                coarse: &t.coarse,
                fine: &t.fine,
                primary: t.primary,
            })
            .collect(),
        both_primary: ex.both_primary,
    };
    serde_json::to_string(&record).expect("example serializes")
}

/// JSONL text for a split: one object per line, LF-terminated.
pub fn split_to_jsonl(split: &DatasetSplit) -> String {
    let mut out = String::new();
    for ex in &split.examples {
        out.push_str(&example_to_json(ex));
        out.push('\n');
    }
    out
}

pub fn save_jsonl(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(split_to_jsonl(split).as_bytes()).map_err(|e| Error::io(path, e))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::Schema { line, message: format!("missing field {name}") })
}

fn as_str<'a>(v: &'a Value, name: &str, line: usize) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::Schema { line, message: format!("field {name} must be a string") })
}

fn as_index(v: &Value, name: &str, line: usize) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::Schema { line, message: format!("field {name} must be a non-negative integer") })
}

fn parse_example(text: &str, line: usize) -> Result<MultiIntentExample> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::Schema { line, message: format!("invalid JSON: {e}") })?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Schema { line, message: "expected a JSON object".into() })?;
    let id = as_str(field(obj, "id", line)?, "id", line)?.to_string();
    let tokens = field(obj, "tokens", line)?
        .as_array()
        .ok_or_else(|| Error::Schema { line, message: "field tokens must be an array".into() })?
        .iter()
        .map(|t| as_str(t, "tokens", line).map(str::to_string))
        .collect::<Result<Vec<_>>>()?;
    let language = as_str(field(obj, "language", line)?, "language", line)?
        .parse::<Language>()
        .map_err(|message| Error::Schema { line, message })?;
    let intents = field(obj, "intents", line)?
        .as_array()
        .ok_or_else(|| Error::Schema { line, message: "field intents must be an array".into() })?;
    let mut triplets = Vec::with_capacity(intents.len());
    for intent in intents {
        let io = intent
            .as_object()
            .ok_or_else(|| Error::Schema { line, message: "intents entries must be objects".into() })?;
        triplets.push(IntentSpanTriplet {
            start: as_index(field(io, "start", line)?, "start", line)?,
            end: as_index(field(io, "end", line)?, "end", line)?,
            coarse: as_str(field(io, "coarse", line)?, "coarse", line)?.to_string(),
            fine: as_str(field(io, "fine", line)?, "fine", line)?.to_string(),
            primary: field(io, "primary", line)?
                .as_bool()
                .ok_or_else(|| Error::Schema { line, message: "field primary must be a boolean".into() })?,
        });
    }
    let both_primary = match obj.get("both_primary") {
        None => false,
        Some(v) => v
            .as_bool()
            .ok_or_else(|| Error::Schema { line, message: "field both_primary must be a boolean".into() })?,
    };
    let ex = MultiIntentExample { id, tokens, triplets, language, both_primary };
    ex.validate().map_err(|e| match e {
        Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
        other => other,
    })?;
    Ok(ex)
}

pub fn parse_jsonl(text: &str, name: SplitName) -> Result<DatasetSplit> {
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        examples.push(parse_example(line, i + 1)?);
    }
    let split = DatasetSplit::new(name, examples);
    split.validate()?;
    Ok(split)
}

pub fn load_jsonl(path: impl AsRef<Path>, name: SplitName) -> Result<DatasetSplit> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, name).map_err(|e| match e {
        Error::Schema { line, message } => {
            Error::Schema { line, message: format!("{message} ({})", path.display()) }
        }
        other => other,
    })
}

#[derive(Deserialize)]
struct PoolRecord {
    text: String,
    intent: String,
    #[serde(default = "default_language")]
    language: String,
    #[serde(default)]
    primary: Option<bool>,
}

fn default_language() -> String {
    "en".into()
}

/// Single-intent pool file: JSONL of `{"text", "intent", "language"?, "primary"?}`.
pub fn load_pool(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pool = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoolRecord = serde_json::from_str(line)
            .map_err(|e| Error::Schema { line: i + 1, message: e.to_string() })?;
        let language = rec
            .language
            .parse::<Language>()
            .map_err(|message| Error::Schema { line: i + 1, message })?;
        pool.push(Utterance { text: rec.text, fine_intent: rec.intent, language, primary: rec.primary });
    }
    Ok(pool)
}
