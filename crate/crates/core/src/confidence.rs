//! Class-level confidence as a learning-status estimate, and the thresholds
//! derived from it.
//!
//! Per epoch, every weak-view prediction on unlabeled data is assigned to its
//! argmax class. The class-level confidence `P_c` is the mean max-probability
//! within class `c`. A mapping `M` turns `P_c` into a class threshold that is
//! clamped into `[min(τ, 1-τ), max(τ, 1-τ)]`, where `τ` is either fixed or
//! `exp(-a · P_ave²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RunConfig, ThresholdMode, UnlabeledPrediction};

/// Shape of the confidence-to-threshold mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    /// `M(x) = x`
    Linear,
    /// `M(x) = min(1, x / (k - x))`; `k = 2` gives `x / (2 - x)`.
    Concave,
    /// `M(x) = exp(-5 (1 - x)²)`
    Exponential,
}

impl Mapping {
    pub fn as_str(self) -> &'static str {
        match self {
            Mapping::Linear => "linear",
            Mapping::Concave => "concave",
            Mapping::Exponential => "exponential",
        }
    }
}

/// Splits predictions into per-class index sets by argmax class.
pub fn partition_by_argmax(preds: &[UnlabeledPrediction], classes: usize) -> Result<Vec<Vec<usize>>> {
    let mut sets = vec![Vec::new(); classes];
    for (i, p) in preds.iter().enumerate() {
        if p.argmax_class >= classes {
            return Err(Error::ClassOutOfRange { index: p.argmax_class, classes });
        }
        sets[p.argmax_class].push(i);
    }
    Ok(sets)
}

/// Mean confidence per class set; empty classes get 0.
pub fn class_confidence(partition: &[Vec<usize>], preds: &[UnlabeledPrediction]) -> Vec<f64> {
    partition
        .iter()
        .map(|set| {
            if set.is_empty() {
                0.0
            } else {
                let sum: f64 = set.iter().map(|&i| preds[i].confidence).sum();
                sum / set.len() as f64
            }
        })
        .collect()
}

pub fn map_confidence(x: f64, mapping: Mapping, k: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("confidence {x} outside [0, 1]")));
    }
    Ok(match mapping {
        Mapping::Linear => x,
        Mapping::Concave => {
            if !(k.is_finite() && k >= 1.0) {
                return Err(Error::InvalidInput(format!("mapping constant {k} must be ≥ 1")));
            }
            let denom = k - x;
            if denom <= 0.0 {
                1.0
            } else {
                (x / denom).min(1.0)
            }
        }
        Mapping::Exponential => (-5.0 * (1.0 - x).powi(2)).exp(),
    })
}

/// The comprehensive threshold `τ`.
pub fn comprehensive_threshold(average_confidence: f64, mode: ThresholdMode, constant: f64) -> f64 {
    match mode {
        ThresholdMode::Fixed { tau } => tau,
        ThresholdMode::Comprehensive => (-constant * average_confidence * average_confidence).exp(),
    }
}

/// Lower and upper clamp for class thresholds given `τ`.
pub fn clamp_bounds(tau: f64) -> (f64, f64) {
    (tau.min(1.0 - tau), tau.max(1.0 - tau))
}

pub fn class_thresholds(confidence: &[f64], tau: f64, mapping: Mapping, k: f64) -> Result<Vec<f64>> {
    let (lo, hi) = clamp_bounds(tau);
    confidence
        .iter()
        .map(|&p| map_confidence(p, mapping, k).map(|m| m.clamp(lo, hi)))
        .collect()
}

/// Learning-status snapshot at the end of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfidenceState {
    pub epoch: usize,
    pub per_class_confidence: Vec<f64>,
    pub per_class_count: Vec<usize>,
    pub average_confidence: f64,
    pub comprehensive_threshold: f64,
    pub class_thresholds: Vec<f64>,
}

impl ClassConfidenceState {
    /// State before any statistics exist: every class threshold sits at the
    /// floor `min(τ, 1-τ)` with `P_ave = 0`.
    pub fn initial(cfg: &RunConfig) -> Self {
        let tau = comprehensive_threshold(0.0, cfg.threshold_mode, cfg.comprehensive_constant);
        let (lo, _) = clamp_bounds(tau);
        Self {
            epoch: 0,
            per_class_confidence: vec![0.0; cfg.classes],
            per_class_count: vec![0; cfg.classes],
            average_confidence: 0.0,
            comprehensive_threshold: tau,
            class_thresholds: vec![lo; cfg.classes],
        }
    }

    fn from_parts(confidence: Vec<f64>, counts: Vec<usize>, cfg: &RunConfig, epoch: usize) -> Result<Self> {
        let observed: Vec<f64> = confidence
            .iter()
            .zip(&counts)
            .filter(|(_, &n)| n > 0)
            .map(|(&p, _)| p)
            .collect();
        if observed.is_empty() {
            return Err(Error::InvalidInput("no predictions to estimate confidence from".into()));
        }
        let average = observed.iter().sum::<f64>() / observed.len() as f64;
        let tau = comprehensive_threshold(average, cfg.threshold_mode, cfg.comprehensive_constant);
        let thresholds = class_thresholds(&confidence, tau, cfg.mapping, cfg.mapping_constant)?;
        Ok(Self {
            epoch,
            per_class_confidence: confidence,
            per_class_count: counts,
            average_confidence: average,
            comprehensive_threshold: tau,
            class_thresholds: thresholds,
        })
    }
}

/// Builds the epoch state from the full list of weak-view predictions.
pub fn update_state(preds: &[UnlabeledPrediction], cfg: &RunConfig, epoch: usize) -> Result<ClassConfidenceState> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("update_state needs at least one prediction".into()));
    }
    let partition = partition_by_argmax(preds, cfg.classes)?;
    let confidence = class_confidence(&partition, preds);
    let counts = partition.iter().map(Vec::len).collect();
    ClassConfidenceState::from_parts(confidence, counts, cfg, epoch)
}

/// Running per-class sums over one epoch. Finalizing gives the same state as
/// [`update_state`] on the same predictions in the same order.
#[derive(Debug, Clone)]
pub struct ConfidenceAccumulator {
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl ConfidenceAccumulator {
    pub fn new(classes: usize) -> Self {
        Self { sums: vec![0.0; classes], counts: vec![0; classes] }
    }

    pub fn push(&mut self, pred: &UnlabeledPrediction) -> Result<()> {
        let c = pred.argmax_class;
        if c >= self.sums.len() {
            return Err(Error::ClassOutOfRange { index: c, classes: self.sums.len() });
        }
        self.sums[c] += pred.confidence;
        self.counts[c] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn finalize(&self, cfg: &RunConfig, epoch: usize) -> Result<ClassConfidenceState> {
        let confidence = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect();
        ClassConfidenceState::from_parts(confidence, self.counts.clone(), cfg, epoch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ProbabilityVector;
    use proptest::prelude::*;

    fn pred(id: u64, probs: &[f64]) -> UnlabeledPrediction {
        UnlabeledPrediction::new(id, ProbabilityVector::new(probs.to_vec()).unwrap())
    }

    /// Two-class prediction with the given argmax class and confidence.
    fn pred2(class: usize, conf: f64) -> UnlabeledPrediction {
        let mut p = vec![1.0 - conf; 2];
        p[class] = conf;
        pred(0, &p)
    }

    #[test]
    fn partition_examples() {
        let preds = vec![pred2(0, 0.9), pred2(1, 0.8), pred2(0, 0.7)];
        let sets = partition_by_argmax(&preds, 4).unwrap();
        assert_eq!(sets, vec![vec![0, 2], vec![1], vec![], vec![]]);

        assert_eq!(partition_by_argmax(&[], 3).unwrap(), vec![Vec::<usize>::new(); 3]);

        let tie = vec![pred(0, &[0.5, 0.5])];
        assert_eq!(partition_by_argmax(&tie, 2).unwrap(), vec![vec![0], vec![]]);
    }

    #[test]
    fn partition_rejects_out_of_range() {
        let preds = vec![pred(0, &[0.1, 0.1, 0.8])];
        assert!(matches!(
            partition_by_argmax(&preds, 2),
            Err(Error::ClassOutOfRange { index: 2, classes: 2 })
        ));
    }

    #[test]
    fn class_confidence_examples() {
        let preds = vec![pred2(0, 0.7)];
        let p = class_confidence(&partition_by_argmax(&preds, 4).unwrap(), &preds);
        assert_eq!(p[0], 0.7);
        assert_eq!(p[3], 0.0);

        let preds = vec![pred2(0, 0.6), pred2(0, 0.8)];
        let p = class_confidence(&partition_by_argmax(&preds, 2).unwrap(), &preds);
        assert!((p[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn mapping_examples() {
        assert_eq!(map_confidence(1.0, Mapping::Concave, 2.0).unwrap(), 1.0);
        assert!((map_confidence(0.8, Mapping::Concave, 2.0).unwrap() - 0.8 / 1.2).abs() < 1e-15);
        assert!((map_confidence(0.0, Mapping::Exponential, 2.0).unwrap() - 0.006_737_946_999_085_467).abs() < 1e-15);
        assert_eq!(map_confidence(0.0, Mapping::Linear, 2.0).unwrap(), 0.0);
        assert_eq!(map_confidence(1.0, Mapping::Exponential, 2.0).unwrap(), 1.0);
        assert!(map_confidence(1.1, Mapping::Linear, 2.0).is_err());
        assert!(map_confidence(-0.1, Mapping::Concave, 2.0).is_err());
        assert!(map_confidence(f64::NAN, Mapping::Concave, 2.0).is_err());
    }

    #[test]
    fn mapping_constant_extremes() {
        // k = 1 saturates at x = 0.5; k = 3 tops out at 0.5.
        assert_eq!(map_confidence(0.5, Mapping::Concave, 1.0).unwrap(), 1.0);
        assert_eq!(map_confidence(1.0, Mapping::Concave, 1.0).unwrap(), 1.0);
        assert_eq!(map_confidence(1.0, Mapping::Concave, 3.0).unwrap(), 0.5);
        assert!(map_confidence(0.5, Mapping::Concave, 0.5).is_err());
    }

    #[test]
    fn comprehensive_examples() {
        let c = ThresholdMode::Comprehensive;
        assert_eq!(comprehensive_threshold(0.0, c, 2.0), 1.0);
        assert!((comprehensive_threshold(0.5, c, 2.0) - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert_eq!(comprehensive_threshold(0.3, ThresholdMode::Fixed { tau: 0.8 }, 2.0), 0.8);
    }

    #[test]
    fn class_threshold_examples() {
        let t = class_thresholds(&[0.3, 0.95, 0.8], 0.8, Mapping::Concave, 2.0).unwrap();
        assert!((t[0] - 0.2).abs() < 1e-15);
        assert!((t[1] - 0.8).abs() < 1e-15);
        assert!((t[2] - 0.8 / 1.2).abs() < 1e-15);
    }

    #[test]
    fn update_state_all_confident_comprehensive() {
        let cfg = RunConfig { classes: 3, threshold_mode: ThresholdMode::Comprehensive, ..Default::default() };
        let preds: Vec<_> = (0..6)
            .map(|i| {
                let mut p = vec![0.0; 3];
                p[i % 3] = 1.0;
                pred(i as u64, &p)
            })
            .collect();
        let s = update_state(&preds, &cfg, 4).unwrap();
        let tau = (-2.0f64).exp();
        assert!((s.comprehensive_threshold - 0.135_335_283_236_612_7).abs() < 1e-15);
        assert_eq!(s.average_confidence, 1.0);
        for t in &s.class_thresholds {
            assert_eq!(*t, tau.max(1.0 - tau));
        }
        assert_eq!(s.epoch, 4);
        assert_eq!(s.per_class_count, vec![2, 2, 2]);
    }

    #[test]
    fn update_state_uniform_fixed() {
        let cfg = RunConfig { classes: 4, ..Default::default() };
        let preds: Vec<_> = (0..8).map(|i| pred(i, &[0.25; 4])).collect();
        let s = update_state(&preds, &cfg, 0).unwrap();
        // Ties send every prediction to class 0; other classes are empty.
        assert_eq!(s.per_class_count, vec![8, 0, 0, 0]);
        assert_eq!(s.per_class_confidence[0], 0.25);
        let m: f64 = 0.25 / 1.75;
        assert!((s.class_thresholds[0] - m.max(0.2)).abs() < 1e-15);
        assert!((s.class_thresholds[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn update_state_composes_operations() {
        let cfg = RunConfig { classes: 2, ..Default::default() };
        let preds = vec![pred2(0, 0.6), pred2(0, 0.8), pred2(1, 0.9)];
        let s = update_state(&preds, &cfg, 1).unwrap();
        let part = partition_by_argmax(&preds, 2).unwrap();
        let p = class_confidence(&part, &preds);
        assert_eq!(s.per_class_confidence, p);
        assert_eq!(s.average_confidence, (p[0] + p[1]) / 2.0);
        assert_eq!(s.class_thresholds, class_thresholds(&p, 0.8, Mapping::Concave, 2.0).unwrap());
    }

    #[test]
    fn empty_classes_are_excluded_from_average() {
        let cfg = RunConfig { classes: 5, ..Default::default() };
        let preds = vec![pred(0, &[0.6, 0.1, 0.1, 0.1, 0.1])];
        let s = update_state(&preds, &cfg, 0).unwrap();
        assert_eq!(s.average_confidence, 0.6);
    }

    #[test]
    fn update_state_rejects_empty() {
        assert!(update_state(&[], &RunConfig::default(), 0).is_err());
    }

    #[test]
    fn initial_state_uses_floor() {
        let s = ClassConfidenceState::initial(&RunConfig::default());
        assert!(s.class_thresholds.iter().all(|&t| (t - 0.2).abs() < 1e-15));
        let comp = RunConfig { threshold_mode: ThresholdMode::Comprehensive, ..Default::default() };
        let s = ClassConfidenceState::initial(&comp);
        assert_eq!(s.comprehensive_threshold, 1.0);
        assert!(s.class_thresholds.iter().all(|&t| t == 0.0));
    }

    fn arb_mapping() -> impl Strategy<Value = Mapping> {
        prop_oneof![Just(Mapping::Linear), Just(Mapping::Concave), Just(Mapping::Exponential)]
    }

    fn arb_pred(classes: usize) -> impl Strategy<Value = UnlabeledPrediction> {
        prop::collection::vec(0.001f64..1.0, classes).prop_map(|raw| {
            let s: f64 = raw.iter().sum();
            pred(0, &raw.iter().map(|v| v / s).collect::<Vec<_>>())
        })
    }

    proptest! {
        #[test]
        fn mapping_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, m in arb_mapping(), k in 1.0f64..4.0) {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            let mx = map_confidence(x, m, k).unwrap();
            let my = map_confidence(y, m, k).unwrap();
            prop_assert!(mx <= my);
            prop_assert!((0.0..=1.0).contains(&mx));
        }

        #[test]
        fn concave_never_exceeds_identity(x in 0.0f64..=1.0) {
            prop_assert!(map_confidence(x, Mapping::Concave, 2.0).unwrap() <= x);
        }

        #[test]
        fn thresholds_stay_in_clamp(ps in prop::collection::vec(0.0f64..=1.0, 1..12), tau in 0.01f64..=1.0, m in arb_mapping()) {
            let (lo, hi) = clamp_bounds(tau);
            for t in class_thresholds(&ps, tau, m, 2.0).unwrap() {
                prop_assert!(t >= lo && t <= hi);
            }
        }

        #[test]
        fn comprehensive_decreases(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            let c = ThresholdMode::Comprehensive;
            prop_assert!(comprehensive_threshold(x, c, 2.0) >= comprehensive_threshold(y, c, 2.0));
        }

        #[test]
        fn update_state_is_pure_and_matches_accumulator(preds in prop::collection::vec(arb_pred(4), 1..40)) {
            let cfg = RunConfig { classes: 4, threshold_mode: ThresholdMode::Comprehensive, ..Default::default() };
            let a = update_state(&preds, &cfg, 3).unwrap();
            let b = update_state(&preds, &cfg, 3).unwrap();
            prop_assert_eq!(&a, &b);
            let mut acc = ConfidenceAccumulator::new(4);
            for p in &preds {
                acc.push(p).unwrap();
            }
            prop_assert_eq!(acc.finalize(&cfg, 3).unwrap(), a.clone());
            let (lo, hi) = clamp_bounds(a.comprehensive_threshold);
            prop_assert!(a.class_thresholds.iter().all(|&t| t >= lo && t <= hi));
        }
    }
}
