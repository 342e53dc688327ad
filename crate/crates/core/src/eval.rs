//! Accuracy and macro-F1 for primary and slot-averaged intents, with
//! span-overlap gating.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetSplit, IntentSpanTriplet};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;
use crate::train::Checkpoint;

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Jaccard overlap of two inclusive token ranges.
pub fn span_overlap(pred: (usize, usize), gold: (usize, usize)) -> f64 {
    let (ps, pe) = (pred.0.min(pred.1), pred.0.max(pred.1));
    let (gs, ge) = (gold.0.min(gold.1), gold.0.max(gold.1));
    let lo = ps.max(gs);
    let hi = pe.min(ge);
    let inter = if lo <= hi { hi - lo + 1 } else { 0 };
    let union = (pe - ps + 1) + (ge - gs + 1) - inter;
    inter as f64 / union as f64
}

/// Fraction of positions where `preds` equals `golds`; 0 for empty input.
pub fn accuracy<L: PartialEq>(preds: &[L], golds: &[L]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    if golds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Unweighted mean of per-label `F1 = 2tp / (2tp + fp + fn)` over
/// `label_space`, summed in label-space order. Labels with an empty
/// denominator score 0.
pub fn macro_f1<L: PartialEq>(preds: &[L], golds: &[L], label_space: &[L]) -> Result<f64> {
    check_lengths(preds.len(), golds.len())?;
    if label_space.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for label in label_space {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, g) in preds.iter().zip(golds) {
            match (p == label, g == label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            sum += (2 * tp) as f64 / denom as f64;
        }
    }
    Ok(sum / label_space.len() as f64)
}

fn check_lengths(p: usize, g: usize) -> Result<()> {
    if p != g {
        return Err(Error::Validation(format!("{p} predictions for {g} gold labels")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GranularityMetrics {
    pub primary: ViewMetrics,
    pub average: ViewMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdedAccuracy {
    pub primary: f64,
    pub average: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GranularityThresholded {
    pub coarse: ThresholdedAccuracy,
    pub fine: ThresholdedAccuracy,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub coarse: GranularityMetrics,
    pub fine: GranularityMetrics,
    /// Keyed by two-decimal threshold; a slot counts when coarse and fine
    /// both match and the span overlap reaches the threshold.
    pub thresholded: BTreeMap<String, ThresholdedAccuracy>,
    /// Same gating with a single granularity's label match.
    pub thresholded_by_granularity: BTreeMap<String, GranularityThresholded>,
    pub n_examples: usize,
}

pub fn threshold_key(th: f64) -> String {
    format!("{th:.2}")
}

/// Scores slot-aligned predictions against gold triplets.
pub fn score(
    predictions: &[Vec<IntentSpanTriplet>],
    golds: &[Vec<IntentSpanTriplet>],
    taxonomy: &Taxonomy,
    thresholds: &[f64],
) -> Result<MetricsReport> {
    check_lengths(predictions.len(), golds.len())?;
    if let Some(&th) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Validation(format!("threshold {th} outside [0, 1]")));
    }
    let n_slots = golds.first().map_or(0, Vec::len);
    for (p, g) in predictions.iter().zip(golds) {
        if g.len() != n_slots || p.len() != n_slots {
            return Err(Error::Validation(format!(
                "every example must carry {n_slots} slots (found {} predicted, {} gold)",
                p.len(),
                g.len()
            )));
        }
    }

    let coarse_space: Vec<&str> = taxonomy.coarse_labels();
    let fine_space: Vec<&str> = taxonomy.fine_labels();
    let granularity = |coarse: bool| -> Result<GranularityMetrics> {
        let space = if coarse { &coarse_space } else { &fine_space };
        let mut per_slot = Vec::with_capacity(n_slots);
        for k in 0..n_slots {
            let p = slot_labels(predictions, k, coarse);
            let g = slot_labels(golds, k, coarse);
            per_slot.push(ViewMetrics { accuracy: accuracy(&p, &g)?, macro_f1: macro_f1(&p, &g, space)? });
        }
        let primary = per_slot.first().copied().unwrap_or_default();
        let slots = per_slot.len().max(1) as f64;
        let average = ViewMetrics {
            accuracy: slot_average(predictions, golds, |p, g| label_match(p, g, coarse, !coarse)),
            macro_f1: per_slot.iter().map(|v| v.macro_f1).sum::<f64>() / slots,
        };
        Ok(GranularityMetrics { primary, average })
    };

    let mut report = MetricsReport {
        coarse: granularity(true)?,
        fine: granularity(false)?,
        n_examples: golds.len(),
        ..Default::default()
    };
    for &th in thresholds {
        let gated = |coarse: bool, fine: bool| ThresholdedAccuracy {
            primary: primary_fraction(predictions, golds, |p, g| {
                label_match(p, g, coarse, fine) && span_overlap(p.span(), g.span()) >= th
            }),
            average: slot_average(predictions, golds, |p, g| {
                label_match(p, g, coarse, fine) && span_overlap(p.span(), g.span()) >= th
            }),
        };
        report.thresholded.insert(threshold_key(th), gated(true, true));
        report
            .thresholded_by_granularity
            .insert(threshold_key(th), GranularityThresholded { coarse: gated(true, false), fine: gated(false, true) });
    }
    Ok(report)
}

fn slot_labels(rows: &[Vec<IntentSpanTriplet>], k: usize, coarse: bool) -> Vec<&str> {
    rows.iter().map(|r| if coarse { r[k].coarse.as_str() } else { r[k].fine.as_str() }).collect()
}

fn label_match(p: &IntentSpanTriplet, g: &IntentSpanTriplet, coarse: bool, fine: bool) -> bool {
    (!coarse || p.coarse == g.coarse) && (!fine || p.fine == g.fine)
}

fn primary_fraction(
    preds: &[Vec<IntentSpanTriplet>],
    golds: &[Vec<IntentSpanTriplet>],
    hit: impl Fn(&IntentSpanTriplet, &IntentSpanTriplet) -> bool,
) -> f64 {
    if golds.is_empty() || golds[0].is_empty() {
        return 0.0;
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| hit(&p[0], &g[0])).count();
    hits as f64 / golds.len() as f64
}

/// Mean over examples and slots of slot-aligned correctness.
fn slot_average(
    preds: &[Vec<IntentSpanTriplet>],
    golds: &[Vec<IntentSpanTriplet>],
    hit: impl Fn(&IntentSpanTriplet, &IntentSpanTriplet) -> bool,
) -> f64 {
    let total: usize = golds.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let hits: usize = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| p.iter().zip(g).filter(|(a, b)| hit(a, b)).count())
        .sum();
    hits as f64 / total as f64
}

/// Decodes every test example with the checkpoint's model and scores it.
pub fn evaluate(checkpoint: &Checkpoint, test: &DatasetSplit, thresholds: &[f64]) -> Result<MetricsReport> {
    test.validate()?;
    test.validate_labels(&checkpoint.taxonomy).map_err(|e| match e {
        Error::UnknownLabel { .. } => Error::TaxonomyMismatch(format!("test split does not fit the checkpoint taxonomy: {e}")),
        other => other,
    })?;
    let model = checkpoint.model()?;
    let mut preds = Vec::with_capacity(test.len());
    for ex in &test.examples {
        let out = model.predict(&checkpoint.vocab, &ex.tokens)?;
        preds.push(out.triplets(&checkpoint.taxonomy));
    }
    let golds: Vec<Vec<IntentSpanTriplet>> = test.examples.iter().map(|e| e.triplets.clone()).collect();
    score(&preds, &golds, &checkpoint.taxonomy, thresholds)
}

pub fn report_to_json(report: &MetricsReport) -> String {
    serde_json::to_string_pretty(report).expect("metrics serialize")
}

pub fn render_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = report_to_json(report);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
