//! Multi-method, multi-seed comparisons and the ablation grids.

use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::confidence::Mapping;
use crate::data;
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::train::{run_on_dataset, write_run, RunSummary};
use crate::types::ThresholdMode;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub label: String,
    pub runs: usize,
    pub overall_mean: f64,
    pub overall_std: f64,
    pub mean_class_mean: f64,
    pub mean_class_std: f64,
    pub utilization_mean: f64,
    pub confidence_std_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub runs: Vec<RunSummary>,
    pub rows: Vec<MethodRow>,
}

/// Mean and sample standard deviation; the deviation is NaN for one value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn row(label: &str, runs: &[&RunSummary]) -> MethodRow {
    let pick = |f: fn(&RunSummary) -> f64| runs.iter().map(|r| f(r)).collect::<Vec<_>>();
    let (overall_mean, overall_std) = mean_std(&pick(|r| r.final_overall_accuracy));
    let (mean_class_mean, mean_class_std) = mean_std(&pick(|r| r.final_mean_class_accuracy));
    MethodRow {
        label: label.to_string(),
        runs: runs.len(),
        overall_mean,
        overall_std,
        mean_class_mean,
        mean_class_std,
        utilization_mean: mean_std(&pick(|r| r.mean_utilization)).0,
        confidence_std_mean: mean_std(&pick(|r| r.final_confidence_std)).0,
    }
}

/// Runs every config over its seeds on one shared dataset. Per-run files go
/// to `out/<label>/seed-<s>` when `out` is given.
pub fn compare(configs: &[ExperimentConfig], out: Option<&Path>) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(Error::config(format!("compare: need at least 2 configs, got {}", configs.len())));
    }
    let mut errs = Vec::new();
    for (k, c) in configs.iter().enumerate() {
        errs.extend(c.validate().into_iter().map(|e| format!("config {k}: {e}")));
        if c.data != configs[0].data {
            errs.push(format!("config {k} ({}): data spec differs from config 0", c.label()));
        }
    }
    let mut labels: Vec<String> = configs.iter().map(|c| c.label()).collect();
    labels.sort();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        errs.push(format!("duplicate label {:?}; set distinct `name`s", w[0]));
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }

    let dataset = data::generate(&configs[0].data)?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for c in configs {
        let start = runs.len();
        for seed in c.effective_seeds() {
            let cfg = c.with_seed(seed);
            let artifact = run_on_dataset(&cfg, &dataset)?;
            if let Some(dir) = out {
                write_run(&artifact, &dir.join(sanitize(&c.label())).join(format!("seed-{seed}")))?;
            }
            runs.push(artifact.summary);
        }
        let mine: Vec<&RunSummary> = runs[start..].iter().collect();
        rows.push(row(&c.label(), &mine));
    }
    let cmp = Comparison { runs, rows };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.csv"), cmp.to_csv())?;
        std::fs::write(dir.join("runs.csv"), cmp.runs_csv())?;
    }
    Ok(cmp)
}

/// Directory-safe form of a label.
pub fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

impl Comparison {
    pub fn row(&self, label: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// `method,runs,overall_mean,overall_std,mean_class_mean,mean_class_std,utilization_mean,confidence_std_mean`
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "runs",
            "overall_mean",
            "overall_std",
            "mean_class_mean",
            "mean_class_std",
            "utilization_mean",
            "confidence_std_mean",
        ])
        .expect("write to memory");
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.runs.to_string(),
                r.overall_mean.to_string(),
                r.overall_std.to_string(),
                r.mean_class_mean.to_string(),
                r.mean_class_std.to_string(),
                r.utilization_mean.to_string(),
                r.confidence_std_mean.to_string(),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }

    /// One row per run: `method,seed,overall_accuracy,mean_class_accuracy,utilization,confidence_std,correlation`.
    pub fn runs_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "seed", "overall_accuracy", "mean_class_accuracy", "utilization", "confidence_std", "correlation"])
            .expect("write to memory");
        for r in &self.runs {
            w.write_record([
                r.label.clone(),
                r.seed.to_string(),
                r.final_overall_accuracy.to_string(),
                r.final_mean_class_accuracy.to_string(),
                r.mean_utilization.to_string(),
                r.final_confidence_std.to_string(),
                r.confidence_accuracy_r.map_or_else(String::new, |v| v.to_string()),
            ])
            .expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grid {
    /// DyConfidMatch against the baselines.
    Methods,
    /// Linear, concave and exponential confidence mappings.
    Mapping,
    /// Mapping constant k in {1, 2, 3}.
    Constant,
    /// Threshold and re-sampling components toggled one by one.
    Components,
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "methods" => Ok(Grid::Methods),
            "mapping" => Ok(Grid::Mapping),
            "constant" => Ok(Grid::Constant),
            "components" => Ok(Grid::Components),
            other => Err(Error::config(format!("grid: unknown grid {other:?} (methods, mapping, constant, components)"))),
        }
    }
}

fn named(base: &ExperimentConfig, name: &str, edit: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut c = base.clone();
    c.name = Some(name.to_string());
    c.out_dir = None;
    edit(&mut c);
    c
}

/// Baselines keep the shared hyperparameters but lose the DyConfidMatch
/// components.
fn baseline(base: &ExperimentConfig, method: Method) -> ExperimentConfig {
    named(base, &method.to_string(), |c| {
        c.method = method;
        c.run.resample_enabled = false;
        c.run.pin_thresholds = false;
    })
}

/// Configs of one grid, all sharing `base`'s data, seeds and schedule.
pub fn grid(base: &ExperimentConfig, grid: Grid) -> Vec<ExperimentConfig> {
    let dy = |name: &str, edit: &dyn Fn(&mut ExperimentConfig)| {
        named(base, name, |c| {
            c.method = Method::DyConfidMatch;
            edit(c);
        })
    };
    match grid {
        Grid::Methods => vec![
            dy("dyconfidmatch", &|_| {}),
            baseline(base, Method::FixMatch { tau: 0.9 }),
            baseline(base, Method::FixMatch { tau: 0.3 }),
            baseline(base, Method::FlexMatchStyle { tau_base: 0.95 }),
            baseline(base, Method::PseudoLabel { tau: 0.95 }),
            baseline(base, Method::SupervisedOnly),
        ],
        Grid::Mapping => [Mapping::Linear, Mapping::Concave, Mapping::Exponential]
            .into_iter()
            .map(|m| dy(&format!("mapping-{}", m.as_str()), &move |c| c.run.mapping = m))
            .collect(),
        Grid::Constant => [1.0, 2.0, 3.0]
            .into_iter()
            .map(|k| dy(&format!("k-{k}"), &move |c| c.run.mapping_constant = k))
            .collect(),
        Grid::Components => vec![
            baseline(base, Method::FixMatch { tau: 0.9 }),
            dy("comprehensive", &|c| {
                c.run.threshold_mode = ThresholdMode::Comprehensive;
                c.run.pin_thresholds = true;
                c.run.resample_enabled = false;
            }),
            dy("comprehensive+resample", &|c| {
                c.run.threshold_mode = ThresholdMode::Comprehensive;
                c.run.pin_thresholds = true;
                c.run.resample_enabled = true;
            }),
            dy("comprehensive+class", &|c| {
                c.run.threshold_mode = ThresholdMode::Comprehensive;
                c.run.pin_thresholds = false;
                c.run.resample_enabled = false;
            }),
            dy("full", &|c| {
                c.run.threshold_mode = ThresholdMode::Comprehensive;
                c.run.pin_thresholds = false;
                c.run.resample_enabled = true;
            }),
        ],
    }
}
