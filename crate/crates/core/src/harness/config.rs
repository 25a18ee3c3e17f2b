//! Experiment configuration: TOML schema, dotted-path overrides and
//! cross-field validation.
//!
//! ```toml
//! name = "dyconfid"          # label used in tables and plots (optional)
//! seeds = [0, 1, 2]          # repeat seeds for `compare`; empty means [run.seed]
//! out_dir = "runs/dyconfid"  # optional
//!
//! [method]
//! kind = "fixmatch"          # dyconfidmatch | fixmatch | pseudolabel | flexmatch | supervised
//! tau = 0.9                  # fixmatch / pseudolabel; flexmatch uses tau_base
//!
//! [run]                      # RunConfig fields
//! [data]                     # DatasetSpec fields
//! [augment]                  # AugmentConfig fields
//! [model]
//! hidden = 32
//! ```
//!
//! Unknown keys are rejected at every level.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confidence::Mapping;
use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::model::augment::AugmentConfig;
use crate::pseudolabel::ThresholdPolicy;
use crate::types::{validate_config, ResampleStrategy, RunConfig, ThresholdMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Method {
    #[serde(rename = "dyconfidmatch")]
    DyConfidMatch,
    #[serde(rename = "fixmatch")]
    FixMatch { tau: f64 },
    /// Hard pseudo-labels above `tau`, trained on the weak view itself.
    #[serde(rename = "pseudolabel")]
    PseudoLabel { tau: f64 },
    #[serde(rename = "flexmatch")]
    FlexMatchStyle { tau_base: f64 },
    #[serde(rename = "supervised")]
    SupervisedOnly,
}

impl Method {
    pub fn policy(&self) -> ThresholdPolicy {
        match *self {
            Method::DyConfidMatch => ThresholdPolicy::DyConfid,
            Method::FixMatch { tau } | Method::PseudoLabel { tau } => ThresholdPolicy::Fixed(tau),
            Method::FlexMatchStyle { tau_base } => ThresholdPolicy::FlexMatch(tau_base),
            Method::SupervisedOnly => ThresholdPolicy::Disabled,
        }
    }

    /// Whether the unsupervised loss is taken on a strong view.
    pub fn uses_strong_view(&self) -> bool {
        !matches!(self, Method::PseudoLabel { .. })
    }

    fn validate(&self) -> Vec<String> {
        let check = |name: &str, v: f64| {
            (!(v > 0.0 && v < 1.0)).then(|| format!("method.{name}: must lie in (0, 1), got {v}"))
        };
        match *self {
            Method::FixMatch { tau } | Method::PseudoLabel { tau } => check("tau", tau).into_iter().collect(),
            Method::FlexMatchStyle { tau_base } => check("tau_base", tau_base).into_iter().collect(),
            Method::DyConfidMatch | Method::SupervisedOnly => Vec::new(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::DyConfidMatch => write!(f, "dyconfidmatch"),
            Method::FixMatch { tau } => write!(f, "fixmatch:{tau}"),
            Method::PseudoLabel { tau } => write!(f, "pseudolabel:{tau}"),
            Method::FlexMatchStyle { tau_base } => write!(f, "flexmatch:{tau_base}"),
            Method::SupervisedOnly => write!(f, "supervised"),
        }
    }
}

/// Parses the `Display` form, e.g. `fixmatch:0.9`. Thresholded methods
/// without a value default to 0.95.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, value) = match s.split_once(':') {
            Some((n, v)) => (n, Some(v)),
            None => (s, None),
        };
        let tau = || -> Result<f64> {
            match value {
                None => Ok(0.95),
                Some(v) => v.parse().map_err(|_| Error::config(format!("method: bad threshold {v:?}"))),
            }
        };
        let no_value = |m: Method| match value {
            None => Ok(m),
            Some(_) => Err(Error::config(format!("method: {name} takes no threshold"))),
        };
        match name {
            "dyconfidmatch" => no_value(Method::DyConfidMatch),
            "supervised" => no_value(Method::SupervisedOnly),
            "fixmatch" => Ok(Method::FixMatch { tau: tau()? }),
            "pseudolabel" => Ok(Method::PseudoLabel { tau: tau()? }),
            "flexmatch" => Ok(Method::FlexMatchStyle { tau_base: tau()? }),
            other => Err(Error::config(format!(
                "method: unknown method {other:?} (dyconfidmatch, fixmatch, pseudolabel, flexmatch, supervised)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub method: Method,
    pub run: RunConfig,
    pub data: DatasetSpec,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: None,
            seeds: Vec::new(),
            out_dir: None,
            method: Method::DyConfidMatch,
            run: RunConfig::default(),
            data: DatasetSpec::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// The desk-scale long-tail benchmark with DyConfidMatch settings.
    pub fn benchmark() -> Self {
        let run = RunConfig {
            classes: 8,
            batch_size: 8,
            mu: 4,
            epochs: 60,
            threshold_mode: ThresholdMode::Comprehensive,
            mapping: Mapping::Concave,
            mapping_constant: 2.0,
            comprehensive_constant: 2.0,
            resample_enabled: true,
            resample_strategy: ResampleStrategy::Confidence,
            resample_refresh_epochs: 6,
            lr_initial: 0.1,
            lr_min: 0.001,
            ..RunConfig::default()
        };
        Self { seeds: vec![0, 1, 2, 3, 4], run, ..Self::default() }
    }

    /// Display label: `name` if set, else the method.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method.to_string())
    }

    /// Repeat seeds; `[run.seed]` when none are listed.
    pub fn effective_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.run.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// Copy of this config running `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.run.seed = seed;
        c
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = match validate_config(self.run.clone()) {
            Ok(_) => Vec::new(),
            Err(Error::Config(e)) => e.into_iter().map(|m| format!("run.{m}")).collect(),
            Err(e) => vec![e.to_string()],
        };
        errs.extend(self.data.validate());
        errs.extend(self.augment.validate());
        errs.extend(self.method.validate());
        if self.model.hidden == 0 {
            errs.push("model.hidden: must be ≥ 1".to_string());
        }
        if self.run.classes != self.data.classes() {
            errs.push(format!(
                "run.classes: {} does not match the {} classes of data.counts",
                self.run.classes,
                self.data.classes()
            ));
        }
        if self.run.pin_thresholds && self.method != Method::DyConfidMatch {
            errs.push(format!("run.pin_thresholds: only applies to dyconfidmatch, not {}", self.method));
        }
        errs
    }

    /// Parses, applies `key=value` overrides, then validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        let errs = cfg.validate();
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }
}

/// Sets a dotted path such as `run.epochs=10`. The value is read as a TOML
/// literal when possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("--set {assignment:?}: expected key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!("--set {assignment:?}: empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let (last, parents) = keys.split_last().expect("at least one key");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("--set {assignment:?}: {k} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_round_trips_through_display() {
        for m in [
            Method::DyConfidMatch,
            Method::FixMatch { tau: 0.9 },
            Method::PseudoLabel { tau: 0.7 },
            Method::FlexMatchStyle { tau_base: 0.95 },
            Method::SupervisedOnly,
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("fixmatch".parse::<Method>().unwrap(), Method::FixMatch { tau: 0.95 });
        assert!("supervised:0.3".parse::<Method>().is_err());
        assert!("mixmatch".parse::<Method>().is_err());
    }

    #[test]
    fn benchmark_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::benchmark();
        assert!(cfg.validate().is_empty(), "{:?}", cfg.validate());
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string(), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml_str("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["bogus = 1", "[run]\nepoch = 3", "[method]\nkind = \"fixmatch\"\ntau = 0.9\nextra = 1"] {
            let err = ExperimentConfig::from_toml_str(text, &[]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn method_table_parses() {
        let cfg = ExperimentConfig::from_toml_str("[method]\nkind = \"fixmatch\"\ntau = 0.3", &[]).unwrap();
        assert_eq!(cfg.method, Method::FixMatch { tau: 0.3 });
        assert!(ExperimentConfig::from_toml_str("[method]\nkind = \"fixmatch\"", &[]).is_err());
    }

    #[test]
    fn overrides_apply_with_types() {
        let o = ["run.epochs=7", "run.mapping=linear", "name = abc", "method.kind=flexmatch", "method.tau_base=0.8"]
            .map(String::from);
        let cfg = ExperimentConfig::from_toml_str("", &o).unwrap();
        assert_eq!(cfg.run.epochs, 7);
        assert_eq!(cfg.run.mapping, Mapping::Linear);
        assert_eq!(cfg.name.as_deref(), Some("abc"));
        assert_eq!(cfg.method, Method::FlexMatchStyle { tau_base: 0.8 });
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for o in ["run.epochs", "run..x=1", "run.epochs.x=1", "run.epochs=\"ten\""] {
            let err = ExperimentConfig::from_toml_str("", &[o.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{o}");
        }
    }

    #[test]
    fn cross_field_violations_reported_together() {
        let o = ["run.classes=3", "method.kind=fixmatch", "method.tau=1.5", "run.pin_thresholds=true", "model.hidden=0"]
            .map(String::from);
        let Err(Error::Config(errs)) = ExperimentConfig::from_toml_str("", &o) else { panic!() };
        for key in ["run.classes", "method.tau", "run.pin_thresholds", "model.hidden"] {
            assert!(errs.iter().any(|e| e.starts_with(key)), "{key} missing from {errs:?}");
        }
    }

    #[test]
    fn run_errors_are_prefixed() {
        let Err(Error::Config(errs)) = ExperimentConfig::from_toml_str("[run]\nepochs = 0", &[]) else { panic!() };
        assert!(errs.iter().any(|e| e.starts_with("run.epochs")), "{errs:?}");
    }

    #[test]
    fn effective_seeds() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.seed = 9;
        assert_eq!(cfg.effective_seeds(), vec![9]);
        cfg.seeds = vec![1, 2];
        assert_eq!(cfg.effective_seeds(), vec![1, 2]);
        assert_eq!(cfg.with_seed(5).run.seed, 5);
    }
}
