//! Per-epoch metrics and their CSV files.
//!
//! `metrics.csv`, one row per epoch:
//! `epoch,lr,loss_supervised,loss_unsupervised,loss_total,tau,selected,unlabeled_seen,utilization,overall_accuracy,mean_class_accuracy`
//!
//! `class_metrics.csv`, one row per (epoch, class):
//! `epoch,class,count,p_c,tau,tau_c,pseudo_labels,test_accuracy`
//!
//! `sampler.csv`, one row per (refresh epoch, pool, class):
//! `epoch,pool,class,mean_weight`
//!
//! Floats use the shortest representation that parses back to the same
//! value, so files are bit-exact records of the run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CLASS_METRICS_FILE: &str = "class_metrics.csv";
pub const SAMPLER_FILE: &str = "sampler.csv";

const METRICS_COLUMNS: [&str; 11] = [
    "epoch",
    "lr",
    "loss_supervised",
    "loss_unsupervised",
    "loss_total",
    "tau",
    "selected",
    "unlabeled_seen",
    "utilization",
    "overall_accuracy",
    "mean_class_accuracy",
];
const CLASS_COLUMNS: [&str; 8] = ["epoch", "class", "count", "p_c", "tau", "tau_c", "pseudo_labels", "test_accuracy"];
const SAMPLER_COLUMNS: [&str; 4] = ["epoch", "pool", "class", "mean_weight"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEpochMetrics {
    pub class: usize,
    /// Unlabeled weak-view predictions with this argmax during the epoch.
    pub count: usize,
    pub confidence: f64,
    /// Threshold applied to this class during the epoch.
    pub threshold: f64,
    pub pseudo_labels: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Step means over the epoch.
    pub loss_supervised: f64,
    pub loss_unsupervised: f64,
    pub loss_total: f64,
    pub tau: f64,
    pub selected: usize,
    pub unlabeled_seen: usize,
    pub utilization: f64,
    pub overall_accuracy: f64,
    pub mean_class_accuracy: f64,
    pub classes: Vec<ClassEpochMetrics>,
}

impl EpochMetrics {
    pub fn class_confidences(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.confidence).collect()
    }

    pub fn class_thresholds(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.threshold).collect()
    }

    pub fn class_accuracies(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.test_accuracy).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerRecord {
    pub epoch: usize,
    pub pool: String,
    pub class: usize,
    pub mean_weight: f64,
}

/// Overall accuracy, per-class accuracy and their unweighted mean. Classes
/// without test instances get NaN and are left out of the mean.
pub fn accuracy_summary(predicted: &[usize], truth: &[usize], classes: usize) -> Result<(f64, Vec<f64>, f64)> {
    if predicted.len() != truth.len() {
        return Err(Error::ShapeMismatch { expected: truth.len(), found: predicted.len() });
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("accuracy over an empty test set".to_string()));
    }
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t >= classes {
            return Err(Error::ClassOutOfRange { index: t, classes });
        }
        totals[t] += 1;
        hits[t] += usize::from(p == t);
    }
    let overall = hits.iter().sum::<usize>() as f64 / truth.len() as f64;
    let per_class: Vec<f64> =
        hits.iter().zip(&totals).map(|(&h, &n)| if n == 0 { f64::NAN } else { h as f64 / n as f64 }).collect();
    let present: Vec<f64> = per_class.iter().copied().filter(|a| !a.is_nan()).collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok((overall, per_class, mean))
}

fn to_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn metrics_csv(epochs: &[EpochMetrics]) -> String {
    to_csv(
        &METRICS_COLUMNS,
        epochs.iter().map(|m| {
            vec![
                m.epoch.to_string(),
                m.lr.to_string(),
                m.loss_supervised.to_string(),
                m.loss_unsupervised.to_string(),
                m.loss_total.to_string(),
                m.tau.to_string(),
                m.selected.to_string(),
                m.unlabeled_seen.to_string(),
                m.utilization.to_string(),
                m.overall_accuracy.to_string(),
                m.mean_class_accuracy.to_string(),
            ]
        }),
    )
}

pub fn class_metrics_csv(epochs: &[EpochMetrics]) -> String {
    to_csv(
        &CLASS_COLUMNS,
        epochs.iter().flat_map(|m| {
            m.classes.iter().map(move |c| {
                vec![
                    m.epoch.to_string(),
                    c.class.to_string(),
                    c.count.to_string(),
                    c.confidence.to_string(),
                    m.tau.to_string(),
                    c.threshold.to_string(),
                    c.pseudo_labels.to_string(),
                    c.test_accuracy.to_string(),
                ]
            })
        }),
    )
}

pub fn sampler_csv(records: &[SamplerRecord]) -> String {
    to_csv(
        &SAMPLER_COLUMNS,
        records.iter().map(|r| vec![r.epoch.to_string(), r.pool.clone(), r.class.to_string(), r.mean_weight.to_string()]),
    )
}

/// Rows of a CSV keyed by column name, with missing columns reported.
struct Table {
    file: String,
    columns: Vec<usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(file: &str, text: &str, wanted: &[&str]) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        let columns = wanted
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == *name)
                    .ok_or_else(|| Error::Format(format!("{file}: missing column {name}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { file: file.to_string(), columns, rows })
    }

    fn get<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let raw = &self.rows[row][self.columns[col]];
        raw.parse().map_err(|_| Error::Format(format!("{}: row {}: bad value {raw:?}", self.file, row + 1)))
    }
}

/// Rebuilds the epoch series from the two metrics files.
pub fn parse_metrics(metrics: &str, class_metrics: &str) -> Result<Vec<EpochMetrics>> {
    let t = Table::parse(METRICS_FILE, metrics, &METRICS_COLUMNS)?;
    let mut epochs = Vec::with_capacity(t.rows.len());
    let mut index = BTreeMap::new();
    for r in 0..t.rows.len() {
        let m = EpochMetrics {
            epoch: t.get(r, 0)?,
            lr: t.get(r, 1)?,
            loss_supervised: t.get(r, 2)?,
            loss_unsupervised: t.get(r, 3)?,
            loss_total: t.get(r, 4)?,
            tau: t.get(r, 5)?,
            selected: t.get(r, 6)?,
            unlabeled_seen: t.get(r, 7)?,
            utilization: t.get(r, 8)?,
            overall_accuracy: t.get(r, 9)?,
            mean_class_accuracy: t.get(r, 10)?,
            classes: Vec::new(),
        };
        if index.insert(m.epoch, epochs.len()).is_some() {
            return Err(Error::Format(format!("{METRICS_FILE}: duplicate epoch {}", m.epoch)));
        }
        epochs.push(m);
    }
    let c = Table::parse(CLASS_METRICS_FILE, class_metrics, &CLASS_COLUMNS)?;
    for r in 0..c.rows.len() {
        let epoch: usize = c.get(r, 0)?;
        let &k = index
            .get(&epoch)
            .ok_or_else(|| Error::Format(format!("{CLASS_METRICS_FILE}: epoch {epoch} not in {METRICS_FILE}")))?;
        epochs[k].classes.push(ClassEpochMetrics {
            class: c.get(r, 1)?,
            count: c.get(r, 2)?,
            confidence: c.get(r, 3)?,
            threshold: c.get(r, 5)?,
            pseudo_labels: c.get(r, 6)?,
            test_accuracy: c.get(r, 7)?,
        });
    }
    Ok(epochs)
}

/// Reads `metrics.csv` and `class_metrics.csv` from a run directory.
pub fn read_metrics(dir: &Path) -> Result<Vec<EpochMetrics>> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|e| Error::Format(format!("{}: {e}", dir.join(name).display())))
    };
    parse_metrics(&read(METRICS_FILE)?, &read(CLASS_METRICS_FILE)?)
}
