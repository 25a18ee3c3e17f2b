//! Domain types shared across the crate: point clouds, instances, class
//! probability vectors and the run-level configuration.

use serde::{Deserialize, Serialize};

use crate::confidence::Mapping;
use crate::error::{Error, Result};

/// Minimum number of points in a cloud.
pub const MIN_POINTS: usize = 8;

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// A set of 3D points, centered in the unit ball by the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::InvalidInput(format!(
                "point cloud needs at least {MIN_POINTS} points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Applies `f` to every point. The caller guarantees finiteness is kept.
    pub(crate) fn map_points(&self, mut f: impl FnMut(usize, [f64; 3]) -> [f64; 3]) -> Self {
        let points = self.points.iter().enumerate().map(|(i, &p)| f(i, p)).collect();
        Self { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Labeled,
    Unlabeled,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Labeled => "labeled",
            Split::Unlabeled => "unlabeled",
            Split::Test => "test",
        }
    }
}

/// One dataset member. The ground-truth class of unlabeled instances is kept
/// for evaluation but is not visible through [`Instance::label`].
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u64,
    pub cloud: PointCloud,
    pub split: Split,
    class: usize,
}

impl Instance {
    pub fn new(id: u64, cloud: PointCloud, class: usize, split: Split) -> Self {
        Self { id, cloud, split, class }
    }

    /// Label as seen by training code: `None` for unlabeled instances.
    pub fn label(&self) -> Option<usize> {
        match self.split {
            Split::Labeled | Split::Test => Some(self.class),
            Split::Unlabeled => None,
        }
    }

    /// Ground truth regardless of split. Evaluation and serialization only.
    pub fn evaluation_label(&self) -> usize {
        self.class
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("probability {i} is {p}, outside [0, 1]")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Numerically stable softmax. Fails only on non-finite logits.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
        }
        Ok(Self { probs: softmax(logits) })
    }

    pub fn uniform(classes: usize) -> Self {
        Self { probs: vec![1.0 / classes as f64; classes] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.probs[class]
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max(&self) -> f64 {
        self.probs[self.argmax()]
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weak-view prediction for one unlabeled instance.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledPrediction {
    pub instance_id: u64,
    pub probs: ProbabilityVector,
    pub argmax_class: usize,
    pub confidence: f64,
}

impl UnlabeledPrediction {
    pub fn new(instance_id: u64, probs: ProbabilityVector) -> Self {
        let argmax_class = probs.argmax();
        let confidence = probs.get(argmax_class);
        Self { instance_id, probs, argmax_class, confidence }
    }
}

/// Upper limit of the comprehensive threshold: either a configured constant
/// or derived each epoch from the average class-level confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdMode {
    Fixed { tau: f64 },
    Comprehensive,
}

/// Which distribution drives the re-sampler when it is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleStrategy {
    /// Class-level confidence weighting with warm-up.
    Confidence,
    /// Quantity-based baseline: weight 1/count(class).
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub classes: usize,
    /// Labeled examples per step.
    pub batch_size: usize,
    /// Unlabeled-to-labeled ratio; each step draws `mu * batch_size` unlabeled.
    pub mu: usize,
    pub epochs: usize,
    pub threshold_mode: ThresholdMode,
    pub mapping: Mapping,
    pub mapping_constant: f64,
    pub comprehensive_constant: f64,
    pub resample_enabled: bool,
    pub resample_strategy: ResampleStrategy,
    pub resample_labeled: bool,
    pub resample_unlabeled: bool,
    pub resample_refresh_epochs: usize,
    pub lr_initial: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub seed: u64,
    pub loss_weight_supervised: f64,
    pub loss_weight_unsupervised: f64,
    /// Replace every class threshold by the comprehensive one (ablation).
    pub pin_thresholds: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            batch_size: 48,
            mu: 4,
            epochs: 500,
            threshold_mode: ThresholdMode::Fixed { tau: 0.8 },
            mapping: Mapping::Concave,
            mapping_constant: 2.0,
            comprehensive_constant: 2.0,
            resample_enabled: false,
            resample_strategy: ResampleStrategy::Confidence,
            resample_labeled: true,
            resample_unlabeled: true,
            resample_refresh_epochs: 50,
            lr_initial: 0.01,
            lr_min: 0.0001,
            momentum: 0.9,
            seed: 0,
            loss_weight_supervised: 1.0,
            loss_weight_unsupervised: 1.0,
            pin_thresholds: false,
        }
    }
}

impl RunConfig {
    pub fn unlabeled_batch_size(&self) -> usize {
        self.mu * self.batch_size
    }
}

/// Checks every invariant and reports all violations at once.
pub fn validate_config(cfg: RunConfig) -> Result<RunConfig> {
    let mut errs = Vec::new();
    if cfg.classes < 2 {
        errs.push(format!("classes: need at least 2 classes, got {}", cfg.classes));
    }
    if cfg.batch_size < 1 {
        errs.push("batch_size: B ≥ 1 required".to_string());
    }
    if cfg.mu < 1 {
        errs.push("mu: μ ≥ 1 required".to_string());
    }
    if cfg.epochs < 1 {
        errs.push("epochs: E_max ≥ 1 required".to_string());
    }
    if let ThresholdMode::Fixed { tau } = cfg.threshold_mode {
        if !(tau > 0.5 && tau < 1.0) {
            errs.push(format!("threshold_mode.tau: τ out of (0.5,1), got {tau}"));
        }
    }
    if !(cfg.mapping_constant.is_finite() && cfg.mapping_constant >= 1.0) {
        errs.push(format!("mapping_constant: must be ≥ 1, got {}", cfg.mapping_constant));
    }
    if !(cfg.comprehensive_constant.is_finite() && cfg.comprehensive_constant > 0.0) {
        errs.push(format!(
            "comprehensive_constant: must be > 0, got {}",
            cfg.comprehensive_constant
        ));
    }
    if cfg.resample_refresh_epochs < 1 {
        errs.push("resample_refresh_epochs: must be ≥ 1".to_string());
    }
    if !(cfg.lr_initial.is_finite() && cfg.lr_initial > 0.0) {
        errs.push(format!("lr_initial: must be > 0, got {}", cfg.lr_initial));
    }
    if !(cfg.lr_min.is_finite() && cfg.lr_min >= 0.0 && cfg.lr_min <= cfg.lr_initial) {
        errs.push(format!("lr_min: must lie in [0, lr_initial], got {}", cfg.lr_min));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        errs.push(format!("momentum: must lie in [0, 1), got {}", cfg.momentum));
    }
    for (name, w) in [
        ("loss_weight_supervised", cfg.loss_weight_supervised),
        ("loss_weight_unsupervised", cfg.loss_weight_unsupervised),
    ] {
        if !(w.is_finite() && w >= 0.0) {
            errs.push(format!("{name}: must be ≥ 0, got {w}"));
        }
    }
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}
