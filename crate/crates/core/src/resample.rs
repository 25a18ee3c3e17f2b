//! Confidence-based re-sampling of the training pools.
//!
//! An instance whose class is still poorly learned (`P_c ≤ τ`) gets raw weight
//! `2 - W(e)·P_c·p_i`; a well-learned one gets `1 - W(e)·P_c·p_i`. Raw weights
//! are normalized into a categorical distribution that is drawn from with
//! replacement until the next refresh.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;

use crate::confidence::ClassConfidenceState;
use crate::error::{Error, Result};
use crate::types::{ResampleStrategy, RunConfig};

/// Smallest raw weight any instance may receive.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// Warm-up factor `exp(-5 (1 - e/E_max)²)`.
pub fn warmup(epoch: usize, max_epochs: usize) -> Result<f64> {
    if max_epochs == 0 || epoch > max_epochs {
        return Err(Error::InvalidInput(format!("epoch {epoch} outside [0, {max_epochs}]")));
    }
    let r = 1.0 - epoch as f64 / max_epochs as f64;
    Ok((-5.0 * r * r).exp())
}

/// Raw sampling weight of one instance (before flooring and normalization).
pub fn instance_weight(class_confidence: f64, confidence: f64, warmup: f64, tau: f64) -> f64 {
    let damp = warmup * class_confidence * confidence;
    if class_confidence > tau {
        1.0 - damp
    } else {
        2.0 - damp
    }
}

/// What the sampler needs to know about a pool member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingInput {
    pub id: usize,
    /// True class for labeled data, argmax class for unlabeled data.
    pub class: usize,
    /// Current max-probability of the model on this instance.
    pub confidence: f64,
}

/// Normalized per-instance weights `1/count(class)`.
pub fn inverse_frequency_weights(classes: &[usize]) -> Vec<f64> {
    let n = classes.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n];
    for &c in classes {
        counts[c] += 1;
    }
    let raw: Vec<f64> = classes.iter().map(|&c| 1.0 / counts[c] as f64).collect();
    normalize(&raw)
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// A categorical distribution over pool members plus its private generator.
#[derive(Debug, Clone)]
pub struct SamplerState {
    members: Vec<usize>,
    weights: Vec<f64>,
    normalized: Vec<f64>,
    warmup: f64,
    built_at_epoch: usize,
    refresh_every: usize,
    index: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl SamplerState {
    pub fn uniform(members: Vec<usize>, epoch: usize, refresh_every: usize, rng: ChaCha8Rng) -> Result<Self> {
        let weights = vec![1.0; members.len()];
        Self::from_weights(members, weights, 1.0, epoch, refresh_every, rng)
    }

    pub fn from_weights(
        members: Vec<usize>,
        weights: Vec<f64>,
        warmup: f64,
        epoch: usize,
        refresh_every: usize,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidInput("cannot sample from an empty pool".into()));
        }
        if weights.len() != members.len() {
            return Err(Error::ShapeMismatch { expected: members.len(), found: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Numeric("sampling weights must be positive and finite".into()));
        }
        let normalized = normalize(&weights);
        let index = WeightedIndex::new(&normalized).map_err(|e| Error::Numeric(format!("sampler weights: {e}")))?;
        Ok(Self { members, weights, normalized, warmup, built_at_epoch: epoch, refresh_every, index, rng })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn warmup(&self) -> f64 {
        self.warmup
    }

    pub fn built_at_epoch(&self) -> usize {
        self.built_at_epoch
    }

    pub fn needs_refresh(&self, epoch: usize) -> bool {
        epoch.saturating_sub(self.built_at_epoch) >= self.refresh_every
    }

    /// `n` i.i.d. draws with replacement, returned as member ids.
    pub fn draw_batch(&mut self, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.members[self.index.sample(&mut self.rng)]).collect()
    }

    /// Mean raw weight per class, `None` for classes with no members.
    pub fn class_mean_weights(&self, class_of: impl Fn(usize) -> usize, classes: usize) -> Vec<Option<f64>> {
        let mut sums = vec![0.0; classes];
        let mut counts = vec![0usize; classes];
        for (&m, &w) in self.members.iter().zip(&self.weights) {
            let c = class_of(m);
            sums[c] += w;
            counts[c] += 1;
        }
        sums.iter().zip(&counts).map(|(&s, &n)| (n > 0).then(|| s / n as f64)).collect()
    }
}

/// Builds the sampler for one pool at epoch `epoch`.
pub fn build_sampler(
    inputs: &[SamplingInput],
    state: &ClassConfidenceState,
    epoch: usize,
    cfg: &RunConfig,
    rng: ChaCha8Rng,
) -> Result<SamplerState> {
    let members: Vec<usize> = inputs.iter().map(|i| i.id).collect();
    let refresh = cfg.resample_refresh_epochs;
    if !cfg.resample_enabled {
        return SamplerState::uniform(members, epoch, refresh, rng);
    }
    match cfg.resample_strategy {
        ResampleStrategy::Confidence => {
            let w = warmup(epoch.min(cfg.epochs), cfg.epochs)?;
            let tau = state.comprehensive_threshold;
            let mut weights = Vec::with_capacity(inputs.len());
            for input in inputs {
                let class_conf = *state
                    .per_class_confidence
                    .get(input.class)
                    .ok_or(Error::ClassOutOfRange { index: input.class, classes: cfg.classes })?;
                let raw = instance_weight(class_conf, input.confidence, w, tau);
                weights.push(raw.max(WEIGHT_FLOOR));
            }
            assert!(weights.iter().any(|&w| w > 0.0), "all sampling weights are zero");
            SamplerState::from_weights(members, weights, w, epoch, refresh, rng)
        }
        ResampleStrategy::InverseFrequency => {
            let classes: Vec<usize> = inputs.iter().map(|i| i.class).collect();
            let weights = inverse_frequency_weights(&classes);
            SamplerState::from_weights(members, weights, 1.0, epoch, refresh, rng)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::types::ThresholdMode;
    use proptest::prelude::*;

    fn state_with(confidence: Vec<f64>, tau: f64) -> ClassConfidenceState {
        let c = confidence.len();
        ClassConfidenceState {
            epoch: 0,
            per_class_confidence: confidence,
            per_class_count: vec![1; c],
            average_confidence: 0.0,
            comprehensive_threshold: tau,
            class_thresholds: vec![tau; c],
        }
    }

    #[test]
    fn warmup_examples() {
        assert_eq!(warmup(100, 100).unwrap(), 1.0);
        assert!((warmup(0, 100).unwrap() - 0.006_737_946_999_085_467).abs() < 1e-15);
        assert!((warmup(50, 100).unwrap() - 0.286_504_796_860_190_1).abs() < 1e-15);
        assert!(warmup(101, 100).is_err());
    }

    #[test]
    fn warmup_increases() {
        let vals: Vec<f64> = (0..=40).map(|e| warmup(e, 40).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn instance_weight_examples() {
        assert!((instance_weight(0.9, 0.9, 1.0, 0.8) - 0.19).abs() < 1e-15);
        assert!((instance_weight(0.5, 0.6, 1.0, 0.8) - 1.70).abs() < 1e-15);
        assert_eq!(instance_weight(0.9, 0.9, 0.0, 0.8), 1.0);
        assert_eq!(instance_weight(0.5, 0.6, 0.0, 0.8), 2.0);
    }

    #[test]
    fn symmetric_inputs_give_uniform_weights() {
        let cfg = RunConfig { classes: 2, resample_enabled: true, epochs: 10, ..Default::default() };
        let inputs: Vec<_> = (0..6).map(|i| SamplingInput { id: i, class: i % 2, confidence: 0.7 }).collect();
        let s = build_sampler(&inputs, &state_with(vec![0.7, 0.7], 0.8), 10, &cfg, rng::stream(0, &[])).unwrap();
        for &p in s.normalized() {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn low_status_class_is_favored() {
        let cfg = RunConfig { classes: 2, resample_enabled: true, epochs: 10, ..Default::default() };
        let inputs = vec![
            SamplingInput { id: 0, class: 0, confidence: 0.9 },
            SamplingInput { id: 1, class: 1, confidence: 0.4 },
        ];
        let s = build_sampler(&inputs, &state_with(vec![0.9, 0.4], 0.8), 10, &cfg, rng::stream(0, &[])).unwrap();
        assert!((s.weights()[0] - 0.19).abs() < 1e-15);
        assert!((s.weights()[1] - 1.84).abs() < 1e-15);
        let ratio = s.normalized()[1] / s.normalized()[0];
        assert!((ratio - 1.84 / 0.19).abs() < 1e-12);
        assert!((ratio - 9.684).abs() < 1e-3);
        let sum: f64 = s.normalized().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disabled_means_uniform() {
        let cfg = RunConfig { classes: 2, resample_enabled: false, ..Default::default() };
        let inputs = vec![
            SamplingInput { id: 4, class: 0, confidence: 0.9 },
            SamplingInput { id: 9, class: 1, confidence: 0.4 },
        ];
        let s = build_sampler(&inputs, &state_with(vec![0.9, 0.4], 0.8), 10, &cfg, rng::stream(0, &[])).unwrap();
        assert_eq!(s.normalized(), &[0.5, 0.5]);
        assert_eq!(s.members(), &[4, 9]);
    }

    #[test]
    fn corner_case_is_floored() {
        let cfg = RunConfig {
            classes: 1,
            resample_enabled: true,
            epochs: 5,
            threshold_mode: ThresholdMode::Fixed { tau: 0.8 },
            ..Default::default()
        };
        let inputs = vec![
            SamplingInput { id: 0, class: 0, confidence: 1.0 },
            SamplingInput { id: 1, class: 0, confidence: 0.5 },
        ];
        let s = build_sampler(&inputs, &state_with(vec![1.0], 0.8), 5, &cfg, rng::stream(0, &[])).unwrap();
        assert_eq!(s.weights()[0], WEIGHT_FLOOR);
        assert!(s.normalized()[0] > 0.0);
    }

    #[test]
    fn uniform_draw_frequencies() {
        let mut s = SamplerState::uniform(vec![0, 1, 2, 3], 0, 50, rng::stream(11, &[])).unwrap();
        let mut counts = [0usize; 4];
        let n = 100_000;
        for id in s.draw_batch(n) {
            counts[id] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn point_mass_dominates() {
        let mut s = SamplerState::from_weights(vec![0, 1, 2], vec![1e-9, 1.0, 1e-9], 1.0, 0, 50, rng::stream(3, &[])).unwrap();
        let draws = s.draw_batch(10_000);
        assert!(draws.iter().filter(|&&d| d == 1).count() >= 9_990);
    }

    #[test]
    fn same_seed_same_draws() {
        let mk = || SamplerState::from_weights(vec![5, 6, 7], vec![0.2, 1.0, 1.7], 1.0, 0, 50, rng::stream(42, &[9])).unwrap();
        assert_eq!(mk().draw_batch(500), mk().draw_batch(500));
    }

    #[test]
    fn refresh_cadence() {
        let s = SamplerState::uniform(vec![0], 10, 50, rng::stream(0, &[])).unwrap();
        assert!(!s.needs_refresh(59));
        assert!(s.needs_refresh(60));
    }

    #[test]
    fn inverse_frequency_examples() {
        let mut classes = vec![0usize; 563];
        classes.extend(std::iter::repeat_n(1usize, 59));
        let w = inverse_frequency_weights(&classes);
        let ratio = w[600] / w[0];
        assert!((ratio - 563.0 / 59.0).abs() < 1e-9);
        assert!((ratio - 9.54).abs() < 0.01);

        let w = inverse_frequency_weights(&[0, 1, 1, 0]);
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let w = inverse_frequency_weights(&[2, 2, 2]);
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(SamplerState::from_weights(vec![0, 1], vec![1.0, 0.0], 1.0, 0, 1, rng::stream(0, &[])).is_err());
        assert!(SamplerState::uniform(vec![], 0, 1, rng::stream(0, &[])).is_err());
    }

    proptest! {
        #[test]
        fn raw_weights_in_range(pc in 0.0f64..=1.0, p in 0.0f64..=1.0, w in 1e-6f64..=1.0, tau in 0.0f64..=1.0) {
            let raw = instance_weight(pc, p, w, tau).max(WEIGHT_FLOOR);
            prop_assert!(raw > 0.0 && raw <= 2.0);
        }

        #[test]
        fn lower_branch_outweighs_upper(w in 1e-6f64..=1.0, p in 0.0f64..=1.0, tau in 0.01f64..0.99,
                                        hi_frac in 0.0f64..1.0, lo_frac in 0.0f64..=1.0) {
            let pc_hi = tau + (1.0 - tau) * hi_frac + f64::EPSILON;
            let pc_lo = tau * lo_frac;
            prop_assume!(pc_hi > tau && pc_hi <= 1.0);
            prop_assert!(instance_weight(pc_lo, p, w, tau) > instance_weight(pc_hi, p, w, tau));
        }
    }
}
