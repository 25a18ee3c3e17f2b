//! Per-class confidence versus test accuracy.

use serde::Serialize;

use crate::harness::metrics::EpochMetrics;

/// Pearson correlation; `None` when either side has zero variance, when
/// lengths differ, or when fewer than two finite pairs remain.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() {
        return None;
    }
    let pairs: Vec<(f64, f64)> =
        xs.iter().zip(ys).map(|(&x, &y)| (x, y)).filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassPoint {
    pub class: usize,
    pub confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub epoch: usize,
    pub points: Vec<ClassPoint>,
    /// `None` when undefined.
    pub r: Option<f64>,
}

/// Scatter data and Pearson r for one epoch's per-class figures.
pub fn correlation_at(m: &EpochMetrics) -> CorrelationReport {
    let points: Vec<ClassPoint> = m
        .classes
        .iter()
        .map(|c| ClassPoint { class: c.class, confidence: c.confidence, accuracy: c.test_accuracy })
        .collect();
    let r = pearson(&m.class_confidences(), &m.class_accuracies());
    CorrelationReport { epoch: m.epoch, points, r }
}

/// Report for the final epoch of a run; `None` for an empty series.
pub fn correlation_report(metrics: &[EpochMetrics]) -> Option<CorrelationReport> {
    metrics.last().map(correlation_at)
}

impl CorrelationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,p_c,test_accuracy\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.class, p.confidence, p.accuracy));
        }
        out
    }
}
