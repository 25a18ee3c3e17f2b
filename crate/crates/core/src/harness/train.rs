//! The training loop: one deterministic run of one method on one seed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::confidence::{ClassConfidenceState, ConfidenceAccumulator};
use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Method};
use crate::harness::metrics::{
    self, accuracy_summary, ClassEpochMetrics, EpochMetrics, SamplerRecord, CLASS_METRICS_FILE, METRICS_FILE,
    SAMPLER_FILE,
};
use crate::harness::report::pearson;
use crate::model::augment::{strong_augment, weak_augment};
use crate::model::checkpoint::Checkpoint;
use crate::model::optim::{sgd_step, OptimizerState};
use crate::model::{forward, loss_and_gradient, predict, LossSpec, ModelParams};
use crate::pseudolabel::select_pseudo_labels;
use crate::resample::{build_sampler, SamplerState, SamplingInput};
use crate::rng::{self, tag};
use crate::types::{PointCloud, Split, UnlabeledPrediction};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.toml";

/// Final-epoch figures of one run. Non-finite values are written as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub method: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_overall_accuracy: f64,
    pub final_mean_class_accuracy: f64,
    /// Utilization averaged over all epochs.
    pub mean_utilization: f64,
    /// Population standard deviation of the final per-class confidences.
    pub final_confidence_std: f64,
    /// max/min of the final per-class thresholds.
    pub final_threshold_ratio: Option<f64>,
    /// Pearson r between final per-class confidence and test accuracy.
    pub confidence_accuracy_r: Option<f64>,
    pub final_class_accuracy: Vec<f64>,
    pub final_class_confidence: Vec<f64>,
    pub final_class_threshold: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub config: ExperimentConfig,
    pub metrics: Vec<EpochMetrics>,
    pub sampler: Vec<SamplerRecord>,
    pub final_state: ClassConfidenceState,
    pub checkpoint: Checkpoint,
    pub summary: RunSummary,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn summarize(config: &ExperimentConfig, metrics: &[EpochMetrics]) -> RunSummary {
    let last = metrics.last().expect("at least one epoch");
    let conf = last.class_confidences();
    let thr = last.class_thresholds();
    let acc = last.class_accuracies();
    let lo = thr.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = thr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    RunSummary {
        label: config.label(),
        method: config.method.to_string(),
        seed: config.run.seed,
        epochs: metrics.len(),
        final_overall_accuracy: last.overall_accuracy,
        final_mean_class_accuracy: last.mean_class_accuracy,
        mean_utilization: metrics.iter().map(|m| m.utilization).sum::<f64>() / metrics.len() as f64,
        final_confidence_std: population_std(&conf),
        final_threshold_ratio: finite(hi / lo),
        confidence_accuracy_r: pearson(&conf, &acc),
        final_class_accuracy: acc,
        final_class_confidence: conf,
        final_class_threshold: thr.into_iter().map(finite).collect(),
    }
}

/// Generates the dataset and runs `config` on it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifact> {
    let dataset = data::generate(&config.data)?;
    run_on_dataset(config, &dataset)
}

struct Pools<'a> {
    dataset: &'a Dataset,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    test: Vec<usize>,
}

impl Pools<'_> {
    fn cloud(&self, i: usize) -> &PointCloud {
        &self.dataset.instances[i].cloud
    }

    fn class(&self, i: usize) -> usize {
        self.dataset.instances[i].evaluation_label()
    }
}

/// Clean-view confidences of `members`; the class is the true label when
/// `labeled`, else the predicted one.
fn sampling_inputs(params: &ModelParams, pools: &Pools, members: &[usize], labeled: bool) -> Result<Vec<SamplingInput>> {
    members
        .iter()
        .map(|&i| {
            let p = predict(params, pools.cloud(i))?;
            let class = if labeled { pools.class(i) } else { p.argmax() };
            Ok(SamplingInput { id: i, class, confidence: p.max() })
        })
        .collect()
}

fn log_sampler(log: &mut Vec<SamplerRecord>, s: &SamplerState, pool: &str, class_of: impl Fn(usize) -> usize, classes: usize) {
    for (class, w) in s.class_mean_weights(class_of, classes).into_iter().enumerate() {
        if let Some(mean_weight) = w {
            log.push(SamplerRecord { epoch: s.built_at_epoch(), pool: pool.to_string(), class, mean_weight });
        }
    }
}

/// Runs `config` on an existing dataset. Fully determined by the dataset,
/// the config and `config.run.seed`.
pub fn run_on_dataset(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunArtifact> {
    let errs = config.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    if dataset.classes != config.run.classes {
        return Err(Error::config(format!(
            "run.classes: {} does not match the dataset's {} classes",
            config.run.classes, dataset.classes
        )));
    }
    let run = &config.run;
    let classes = run.classes;
    let seed = run.seed;
    let pools = Pools {
        dataset,
        labeled: dataset.pool(Split::Labeled),
        unlabeled: dataset.pool(Split::Unlabeled),
        test: dataset.pool(Split::Test),
    };
    if pools.labeled.is_empty() || pools.test.is_empty() {
        return Err(Error::InvalidInput("dataset needs labeled and test instances".to_string()));
    }
    let test_truth: Vec<usize> = pools.test.iter().map(|&i| pools.class(i)).collect();

    let policy = config.method.policy();
    let strong_view = config.method.uses_strong_view();
    let semi = !pools.unlabeled.is_empty() && config.method != Method::SupervisedOnly;
    let spec = LossSpec {
        batch_size: run.batch_size,
        unlabeled_batch: run.unlabeled_batch_size(),
        weight_supervised: run.loss_weight_supervised,
        weight_unsupervised: run.loss_weight_unsupervised,
    };
    let steps = pools.labeled.len().div_ceil(run.batch_size);

    let mut params = ModelParams::init(config.model.hidden, classes, &mut rng::stream(seed, &[tag::INIT]));
    let mut opt = OptimizerState::new(run, &params);
    let mut state = ClassConfidenceState::initial(run);
    let mut prev_preds: Vec<UnlabeledPrediction> = Vec::new();
    let refresh = run.resample_refresh_epochs;
    let mut lab_sampler =
        SamplerState::uniform(pools.labeled.clone(), 0, refresh, rng::stream(seed, &[tag::LABELED_SAMPLER, 0]))?;
    let mut unl_sampler = if semi {
        Some(SamplerState::uniform(pools.unlabeled.clone(), 0, refresh, rng::stream(seed, &[tag::UNLABELED_SAMPLER, 0]))?)
    } else {
        None
    };

    let mut history = Vec::with_capacity(run.epochs);
    let mut sampler_log = Vec::new();
    let mut last_refresh = 0;

    for epoch in 0..run.epochs {
        let e = epoch as u64;
        let mut body = || -> Result<(EpochMetrics, ClassConfidenceState, Vec<UnlabeledPrediction>)> {
            opt.epoch = epoch;
            if run.resample_enabled && epoch - last_refresh >= refresh {
                last_refresh = epoch;
                if run.resample_labeled {
                    let inputs = sampling_inputs(&params, &pools, &pools.labeled, true)?;
                    lab_sampler =
                        build_sampler(&inputs, &state, epoch, run, rng::stream(seed, &[tag::LABELED_SAMPLER, e]))?;
                    log_sampler(&mut sampler_log, &lab_sampler, "labeled", |i| pools.class(i), classes);
                }
                if let (true, Some(s)) = (run.resample_unlabeled, unl_sampler.as_mut()) {
                    let inputs = sampling_inputs(&params, &pools, &pools.unlabeled, false)?;
                    *s = build_sampler(&inputs, &state, epoch, run, rng::stream(seed, &[tag::UNLABELED_SAMPLER, e]))?;
                    let predicted: std::collections::HashMap<usize, usize> =
                        inputs.iter().map(|i| (i.id, i.class)).collect();
                    log_sampler(&mut sampler_log, s, "unlabeled", |i| predicted[&i], classes);
                }
            }

            let thresholds = policy.thresholds(&state, &prev_preds, run);
            let mut acc = ConfidenceAccumulator::new(classes);
            let mut epoch_preds = Vec::new();
            let mut pseudo_per_class = vec![0usize; classes];
            let (mut ls, mut lu, mut lt) = (0.0, 0.0, 0.0);

            for step in 0..steps {
                let s = step as u64;
                let labeled_views: Vec<(PointCloud, usize)> = lab_sampler
                    .draw_batch(run.batch_size)
                    .into_iter()
                    .enumerate()
                    .map(|(k, i)| {
                        let mut r = rng::stream(seed, &[tag::LABELED_VIEW, e, s, k as u64]);
                        (weak_augment(pools.cloud(i), &config.augment, &mut r), pools.class(i))
                    })
                    .collect();

                let mut pseudo_views: Vec<(PointCloud, usize)> = Vec::new();
                if let Some(sampler) = unl_sampler.as_mut() {
                    let drawn = sampler.draw_batch(spec.unlabeled_batch);
                    let mut weak_views = Vec::with_capacity(drawn.len());
                    let mut preds = Vec::with_capacity(drawn.len());
                    for (k, &i) in drawn.iter().enumerate() {
                        let mut r = rng::stream(seed, &[tag::WEAK, e, s, k as u64]);
                        let view = weak_augment(pools.cloud(i), &config.augment, &mut r);
                        let out = forward(&params, &view)?;
                        let pred = UnlabeledPrediction::new(pools.dataset.instances[i].id, out.probs);
                        acc.push(&pred)?;
                        preds.push(pred);
                        weak_views.push(view);
                    }
                    let mask = select_pseudo_labels(&preds, &thresholds);
                    for (k, view) in weak_views.into_iter().enumerate() {
                        if !mask.selected[k] {
                            continue;
                        }
                        let y = mask.pseudo_label[k];
                        pseudo_per_class[y] += 1;
                        let target = if strong_view {
                            let mut r = rng::stream(seed, &[tag::STRONG, e, s, k as u64]);
                            strong_augment(pools.cloud(drawn[k]), &config.augment, &mut r)
                        } else {
                            view
                        };
                        pseudo_views.push((target, y));
                    }
                    epoch_preds.extend(preds);
                }

                let labeled_refs: Vec<(&PointCloud, usize)> = labeled_views.iter().map(|(c, y)| (c, *y)).collect();
                let pseudo_refs: Vec<(&PointCloud, usize)> = pseudo_views.iter().map(|(c, y)| (c, *y)).collect();
                let (loss, grads) = loss_and_gradient(&params, &labeled_refs, &pseudo_refs, &spec)?;
                sgd_step(&mut params, &grads, &mut opt)?;
                ls += loss.supervised;
                lu += loss.unsupervised;
                lt += loss.total;
            }

            let next_state = if acc.total() > 0 { acc.finalize(run, epoch)? } else { state.clone() };
            let predicted = pools
                .test
                .iter()
                .map(|&i| predict(&params, pools.cloud(i)).map(|p| p.argmax()))
                .collect::<Result<Vec<_>>>()?;
            let (overall, per_class, mean_class) = accuracy_summary(&predicted, &test_truth, classes)?;
            let selected: usize = pseudo_per_class.iter().sum();
            let seen = acc.total();
            let n = steps as f64;
            let metrics = EpochMetrics {
                epoch,
                lr: opt.lr(),
                loss_supervised: ls / n,
                loss_unsupervised: lu / n,
                loss_total: lt / n,
                tau: policy.reported_tau(&state),
                selected,
                unlabeled_seen: seen,
                utilization: if seen == 0 { 0.0 } else { selected as f64 / seen as f64 },
                overall_accuracy: overall,
                mean_class_accuracy: mean_class,
                classes: (0..classes)
                    .map(|c| ClassEpochMetrics {
                        class: c,
                        count: next_state.per_class_count[c],
                        confidence: next_state.per_class_confidence[c],
                        threshold: thresholds[c],
                        pseudo_labels: pseudo_per_class[c],
                        test_accuracy: per_class[c],
                    })
                    .collect(),
            };
            Ok((metrics, next_state, epoch_preds))
        };
        let (m, next_state, preds) = body().map_err(|err| err.at_epoch(epoch))?;
        log::debug!(
            "{} seed {seed} epoch {epoch}: loss {:.4} util {:.3} acc {:.3} mca {:.3}",
            config.label(),
            m.loss_total,
            m.utilization,
            m.overall_accuracy,
            m.mean_class_accuracy
        );
        history.push(m);
        state = next_state;
        prev_preds = preds;
    }

    let summary = summarize(config, &history);
    log::info!(
        "{} seed {seed}: acc {:.4} mean class acc {:.4} utilization {:.4}",
        summary.label,
        summary.final_overall_accuracy,
        summary.final_mean_class_accuracy,
        summary.mean_utilization
    );
    Ok(RunArtifact {
        config: config.clone(),
        metrics: history,
        sampler: sampler_log,
        final_state: state,
        checkpoint: Checkpoint { epoch: run.epochs, params, optimizer: opt },
        summary,
    })
}

/// Writes every file of a run into `dir`, creating it if needed.
pub fn write_run(artifact: &RunArtifact, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(METRICS_FILE), metrics::metrics_csv(&artifact.metrics))?;
    std::fs::write(dir.join(CLASS_METRICS_FILE), metrics::class_metrics_csv(&artifact.metrics))?;
    std::fs::write(dir.join(SAMPLER_FILE), metrics::sampler_csv(&artifact.sampler))?;
    std::fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&artifact.summary)? + "\n")?;
    std::fs::write(dir.join(CONFIG_FILE), artifact.config.to_toml_string())?;
    artifact.checkpoint.save(&dir.join(CHECKPOINT_FILE))
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let text = std::fs::read_to_string(dir.join(SUMMARY_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
