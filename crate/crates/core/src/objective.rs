//! Training loss: intent cross-entropy for the primary and non-primary
//! slots plus pointer-position negative log-likelihood.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Matrix, Var};
use crate::decoder::SlotVars;
use crate::error::{Error, Result};
use crate::model::GoldTarget;

/// Lower clamp applied to probabilities before taking logs.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_primary: f64,
    pub l_non_primary: f64,
    pub l_span: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_components(l_primary: f64, l_non_primary: f64, l_span: f64) -> Self {
        Self { l_primary, l_non_primary, l_span, total: l_primary + l_non_primary + l_span }
    }

    /// Component-wise mean, with the total recomputed from the means.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let avg = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::from_components(avg(|b| b.l_primary), avg(|b| b.l_non_primary), avg(|b| b.l_span))
    }

    pub fn is_finite(&self) -> bool {
        [self.l_primary, self.l_non_primary, self.l_span, self.total].iter().all(|v| v.is_finite())
    }
}

impl std::fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "total={} primary={} non_primary={} span={}",
            self.total, self.l_primary, self.l_non_primary, self.l_span
        )
    }
}

/// Loss nodes of one example.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub primary: Var,
    pub non_primary: Var,
    pub span: Var,
    pub total: Var,
}

impl LossVars {
    pub fn values(&self, g: &Graph) -> LossBreakdown {
        LossBreakdown {
            l_primary: g.scalar(self.primary),
            l_non_primary: g.scalar(self.non_primary),
            l_span: g.scalar(self.span),
            total: g.scalar(self.total),
        }
    }
}

fn neg_log_at(g: &mut Graph, dist: Var, index: usize) -> Result<Var> {
    let classes = g.shape(dist).1;
    if index >= classes {
        return Err(Error::LabelOutOfRange { index, classes });
    }
    let p = g.pick(dist, 0, index);
    let l = g.log_clamp(p, LOG_EPS);
    Ok(g.scale(l, -1.0))
}

fn check_steps(steps: &[Vec<SlotVars>], gold: &GoldTarget) -> Result<()> {
    if steps.len() != gold.steps.len() || steps.iter().zip(&gold.steps).any(|(s, g)| s.len() != g.len()) {
        return Err(Error::Shape("predicted and gold step/slot counts differ".into()));
    }
    Ok(())
}

/// Step-averaged `-log p(coarse) - log p(fine)` summed over `slots`.
pub fn intent_loss(
    g: &mut Graph,
    steps: &[Vec<SlotVars>],
    gold: &GoldTarget,
    slots: std::ops::Range<usize>,
) -> Result<Var> {
    check_steps(steps, gold)?;
    let mut terms = Vec::new();
    for (pred, gold) in steps.iter().zip(&gold.steps) {
        for k in slots.clone().filter(|&k| k < pred.len()) {
            terms.push(neg_log_at(g, pred[k].coarse, gold[k].coarse)?);
            terms.push(neg_log_at(g, pred[k].fine, gold[k].fine)?);
        }
    }
    Ok(step_mean(g, &terms, steps.len()))
}

/// Step-averaged `-sum_slots [log start[gold] + log end[gold]]`.
///
/// Gold positions on masked tokens are rejected.
pub fn span_loss(g: &mut Graph, steps: &[Vec<SlotVars>], gold: &GoldTarget, mask: &[bool]) -> Result<Var> {
    check_steps(steps, gold)?;
    let mut terms = Vec::new();
    for (pred, gold) in steps.iter().zip(&gold.steps) {
        for (p, gs) in pred.iter().zip(gold) {
            for pos in [gs.start, gs.end] {
                if pos >= mask.len() || !mask[pos] {
                    return Err(Error::GoldOnMask(pos));
                }
            }
            terms.push(neg_log_at(g, p.start, gs.start)?);
            terms.push(neg_log_at(g, p.end, gs.end)?);
        }
    }
    Ok(step_mean(g, &terms, steps.len()))
}

fn step_mean(g: &mut Graph, terms: &[Var], n_steps: usize) -> Var {
    if terms.is_empty() {
        return g.constant(Matrix::zeros(1, 1));
    }
    let sum = g.add_scalars(terms);
    g.scale(sum, 1.0 / n_steps.max(1) as f64)
}

/// Per-example loss: slot 1 feeds the primary term, every other slot the
/// non-primary term.
pub fn total_loss(g: &mut Graph, steps: &[Vec<SlotVars>], gold: &GoldTarget, mask: &[bool]) -> Result<LossVars> {
    let n_slots = steps.first().map_or(0, Vec::len);
    let primary = intent_loss(g, steps, gold, 0..1)?;
    let non_primary = intent_loss(g, steps, gold, 1..n_slots)?;
    let span = span_loss(g, steps, gold, mask)?;
    let total = g.add_scalars(&[primary, non_primary, span]);
    Ok(LossVars { primary, non_primary, span, total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::ParamStore;
    use crate::model::GoldSlot;

    fn slot(g: &mut Graph, start: Vec<f64>, end: Vec<f64>, coarse: Vec<f64>, fine: Vec<f64>) -> SlotVars {
        SlotVars {
            start: g.constant(Matrix::row_vector(start)),
            end: g.constant(Matrix::row_vector(end)),
            coarse: g.constant(Matrix::row_vector(coarse)),
            fine: g.constant(Matrix::row_vector(fine)),
        }
    }

    fn gold(slots: &[(usize, usize, usize, usize)]) -> GoldTarget {
        GoldTarget {
            steps: vec![slots
                .iter()
                .map(|&(start, end, coarse, fine)| GoldSlot { start, end, coarse, fine })
                .collect()],
        }
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let one = |n: usize, at: usize| (0..n).map(|i| if i == at { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let s1 = slot(&mut g, one(4, 0), one(4, 1), one(2, 1), one(3, 2));
        let s2 = slot(&mut g, one(4, 2), one(4, 3), one(2, 0), one(3, 0));
        let l = total_loss(&mut g, &[vec![s1, s2]], &gold(&[(0, 1, 1, 2), (2, 3, 0, 0)]), &[true; 4]).unwrap();
        assert_eq!(l.values(&g), LossBreakdown::from_components(0.0, 0.0, 0.0));
    }

    #[test]
    fn uniform_intents_cost_two_ln_four() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let s = slot(&mut g, vec![1.0], vec![1.0], vec![0.25; 4], vec![0.25; 4]);
        let l = intent_loss(&mut g, &[vec![s]], &gold(&[(0, 0, 2, 3)]), 0..1).unwrap();
        let oracle = -(0.25f64).ln() - (0.25f64).ln();
        assert!((g.scalar(l) - oracle).abs() < 1e-12);
        assert!((g.scalar(l) - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn uniform_pointers_cost_four_ln_five() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let u = vec![0.2; 5];
        let s1 = slot(&mut g, u.clone(), u.clone(), vec![1.0], vec![1.0]);
        let s2 = slot(&mut g, u.clone(), u, vec![1.0], vec![1.0]);
        let l = span_loss(&mut g, &[vec![s1, s2]], &gold(&[(0, 1, 0, 0), (3, 4, 0, 0)]), &[true; 5]).unwrap();
        assert!((g.scalar(l) - 4.0 * 5f64.ln()).abs() < 1e-12);
        assert!((g.scalar(l) - 6.4378).abs() < 1e-4);
    }

    #[test]
    fn gold_on_padding_is_an_error() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let s = slot(&mut g, vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![1.0], vec![1.0]);
        let err = span_loss(&mut g, &[vec![s]], &gold(&[(2, 2, 0, 0)]), &[true, true, false]).unwrap_err();
        assert!(matches!(err, Error::GoldOnMask(2)));
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let s = slot(&mut g, vec![1.0], vec![1.0], vec![0.5, 0.5], vec![1.0]);
        let err = intent_loss(&mut g, &[vec![s]], &gold(&[(0, 0, 2, 0)]), 0..1).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { index: 2, classes: 2 }));
    }

    #[test]
    fn batch_mean_and_component_sum() {
        let b = LossBreakdown::mean(&[
            LossBreakdown::from_components(1.0, 0.0, 2.0),
            LossBreakdown::from_components(3.0, 4.0, 0.0),
        ]);
        assert_eq!(b, LossBreakdown::from_components(2.0, 2.0, 1.0));
        assert_eq!(LossBreakdown::from_components(1.0, 2.0, 3.0).total, 6.0);
    }

    #[test]
    fn toy_distributions_match_per_term_oracle() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let s1 = slot(&mut g, vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6], vec![0.6, 0.4], vec![0.1, 0.2, 0.7]);
        let s2 = slot(&mut g, vec![0.3, 0.3, 0.4], vec![0.2, 0.2, 0.6], vec![0.9, 0.1], vec![0.5, 0.25, 0.25]);
        let s3 = slot(&mut g, vec![0.2, 0.5, 0.3], vec![0.0, 0.5, 0.5], vec![0.3, 0.7], vec![0.3, 0.3, 0.4]);
        let gt = gold(&[(0, 2, 0, 2), (1, 1, 1, 0), (1, 2, 1, 2)]);
        let l = total_loss(&mut g, &[vec![s1, s2, s3]], &gt, &[true; 3]).unwrap().values(&g);
        let p = -(0.6f64.ln() + 0.7f64.ln());
        let np = -(0.1f64.ln() + 0.5f64.ln()) - (0.7f64.ln() + 0.4f64.ln());
        let sp = -(0.7f64.ln() + 0.6f64.ln()) - (0.3f64.ln() + 0.2f64.ln()) - (0.5f64.ln() + 0.5f64.ln());
        assert!((l.l_primary - p).abs() < 1e-10);
        assert!((l.l_non_primary - np).abs() < 1e-10);
        assert!((l.l_span - sp).abs() < 1e-10);
        assert!((l.total - (p + np + sp)).abs() < 1e-10);
        assert_eq!(l.total, l.l_primary + l.l_non_primary + l.l_span);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let s = slot(&mut g, vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0]);
        let l = intent_loss(&mut g, &[vec![s]], &gold(&[(0, 0, 0, 0)]), 0..1).unwrap();
        assert!((g.scalar(l) + LOG_EPS.ln()).abs() < 1e-9);
    }
}
