//! Pseudo-label selection, loss terms, and the baseline threshold policies.

use log::warn;

use crate::confidence::{map_confidence, ClassConfidenceState, Mapping};
use crate::error::{Error, Result};
use crate::types::{ProbabilityVector, RunConfig, UnlabeledPrediction};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    pub selected: Vec<bool>,
    /// Argmax class of the weak view; meaningful only where selected.
    pub pseudo_label: Vec<usize>,
}

impl SelectionMask {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn per_class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for (&s, &c) in self.selected.iter().zip(&self.pseudo_label) {
            if s {
                counts[c] += 1;
            }
        }
        counts
    }

    /// A mask that selects nothing.
    pub fn empty(len: usize) -> Self {
        Self { selected: vec![false; len], pseudo_label: vec![0; len] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub supervised: f64,
    pub unsupervised: f64,
    pub total: f64,
    pub selected_count: usize,
}

/// A cross-entropy average plus how many terms hit the probability floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub value: f64,
    pub clamped: usize,
}

fn ce_term(q: &ProbabilityVector, y: usize, clamped: &mut usize) -> f64 {
    let p = q.get(y);
    if p < PROB_FLOOR {
        *clamped += 1;
        -PROB_FLOOR.ln()
    } else {
        -p.ln()
    }
}

/// Keeps instance `i` iff `p_i ≥ thresholds[c_i]`.
pub fn select_pseudo_labels(preds: &[UnlabeledPrediction], thresholds: &[f64]) -> SelectionMask {
    let selected = preds.iter().map(|p| p.confidence >= thresholds[p.argmax_class]).collect();
    let pseudo_label = preds.iter().map(|p| p.argmax_class).collect();
    SelectionMask { selected, pseudo_label }
}

/// Single global threshold, as in FixMatch and plain pseudo-labeling.
pub fn fixed_threshold_mask(preds: &[UnlabeledPrediction], tau: f64) -> SelectionMask {
    let selected = preds.iter().map(|p| p.confidence >= tau).collect();
    let pseudo_label = preds.iter().map(|p| p.argmax_class).collect();
    SelectionMask { selected, pseudo_label }
}

/// Masked cross-entropy between pseudo-labels and strong-view predictions,
/// averaged over the full unlabeled batch size.
pub fn unsupervised_loss(strong_probs: &[ProbabilityVector], mask: &SelectionMask, unlabeled_batch: usize) -> Result<CrossEntropy> {
    if strong_probs.len() != mask.len() {
        return Err(Error::ShapeMismatch { expected: mask.len(), found: strong_probs.len() });
    }
    if unlabeled_batch == 0 {
        return Err(Error::InvalidInput("unlabeled batch size must be positive".into()));
    }
    let mut clamped = 0;
    let mut sum = 0.0;
    for ((q, &sel), &y) in strong_probs.iter().zip(&mask.selected).zip(&mask.pseudo_label) {
        if sel {
            sum += ce_term(q, y, &mut clamped);
        }
    }
    if clamped > 0 {
        warn!("unsupervised loss: {clamped} probabilities clamped to {PROB_FLOOR}");
    }
    Ok(CrossEntropy { value: sum / unlabeled_batch as f64, clamped })
}

pub fn supervised_loss(labels: &[usize], probs: &[ProbabilityVector], batch: usize) -> Result<CrossEntropy> {
    if labels.len() != probs.len() {
        return Err(Error::ShapeMismatch { expected: labels.len(), found: probs.len() });
    }
    if batch == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }
    let mut clamped = 0;
    let sum: f64 = labels.iter().zip(probs).map(|(&y, q)| ce_term(q, y, &mut clamped)).sum();
    if clamped > 0 {
        warn!("supervised loss: {clamped} probabilities clamped to {PROB_FLOOR}");
    }
    Ok(CrossEntropy { value: sum / batch as f64, clamped })
}

/// Count-normalized flexible thresholds: `σ(c)` counts confident predictions
/// per class, `β = σ / max σ`, and the threshold is `β/(2-β) · τ_base`.
pub fn flexmatch_thresholds(preds: &[UnlabeledPrediction], tau_base: f64, classes: usize) -> Vec<f64> {
    let mut sigma = vec![0usize; classes];
    for p in preds.iter().filter(|p| p.confidence >= tau_base) {
        sigma[p.argmax_class] += 1;
    }
    let max = sigma.iter().copied().max().unwrap_or(0);
    sigma
        .iter()
        .map(|&s| {
            let beta = if max == 0 { 0.0 } else { s as f64 / max as f64 };
            map_confidence(beta, Mapping::Concave, 2.0).expect("beta lies in [0, 1]") * tau_base
        })
        .collect()
}

/// Sum over the batch of squared L2 distances between paired predictions.
pub fn consistency_penalty(a: &[ProbabilityVector], b: &[ProbabilityVector]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch { expected: a.len(), found: b.len() });
    }
    let mut total = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        if pa.len() != pb.len() {
            return Err(Error::ShapeMismatch { expected: pa.len(), found: pb.len() });
        }
        total += pa.as_slice().iter().zip(pb.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(total)
}

pub fn total_loss(supervised: f64, unsupervised: f64, weight_supervised: f64, weight_unsupervised: f64) -> f64 {
    weight_supervised * supervised + weight_unsupervised * unsupervised
}

/// Which rule turns epoch statistics into per-class thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Class-level dynamic thresholds from the confidence state.
    DyConfid,
    /// The same threshold for every class.
    Fixed(f64),
    /// Simplified count-normalized flexible thresholds.
    FlexMatch(f64),
    /// No pseudo-labels at all.
    Disabled,
}

impl ThresholdPolicy {
    /// Thresholds to apply during the epoch that follows `state`.
    /// `previous_preds` are the weak-view predictions that produced `state`.
    pub fn thresholds(&self, state: &ClassConfidenceState, previous_preds: &[UnlabeledPrediction], cfg: &RunConfig) -> Vec<f64> {
        let c = cfg.classes;
        match *self {
            ThresholdPolicy::DyConfid if cfg.pin_thresholds => vec![state.comprehensive_threshold; c],
            ThresholdPolicy::DyConfid => state.class_thresholds.clone(),
            ThresholdPolicy::Fixed(tau) => vec![tau; c],
            ThresholdPolicy::FlexMatch(base) => flexmatch_thresholds(previous_preds, base, c),
            ThresholdPolicy::Disabled => vec![f64::INFINITY; c],
        }
    }

    /// The global threshold reported next to the per-class ones.
    pub fn reported_tau(&self, state: &ClassConfidenceState) -> f64 {
        match *self {
            ThresholdPolicy::DyConfid => state.comprehensive_threshold,
            ThresholdPolicy::Fixed(tau) | ThresholdPolicy::FlexMatch(tau) => tau,
            ThresholdPolicy::Disabled => f64::INFINITY,
        }
    }
}
