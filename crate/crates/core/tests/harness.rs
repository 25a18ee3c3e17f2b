use dyconfid::data::{self, DatasetSpec};
use dyconfid::harness::metrics::{read_metrics, CLASS_METRICS_FILE, METRICS_FILE, SAMPLER_FILE};
use dyconfid::harness::train::{read_summary, CHECKPOINT_FILE, CONFIG_FILE, SUMMARY_FILE};
use dyconfid::harness::{compare, correlation_report, emit_plots, run_experiment, run_on_dataset, write_run};
use dyconfid::harness::{ExperimentConfig, Method};
use dyconfid::model::checkpoint::Checkpoint;
use dyconfid::types::ThresholdMode;
use dyconfid::Error;

fn tiny() -> ExperimentConfig {
    let mut c = ExperimentConfig::benchmark();
    c.data.counts = vec![40, 20, 10, 10, 8, 8, 8, 8];
    c.data.labeled_fraction = 0.25;
    c.data.test_per_class = 4;
    c.data.points = 16;
    c.model.hidden = 8;
    c.run.epochs = 4;
    c.run.resample_refresh_epochs = 2;
    c.seeds = vec![0, 1];
    c
}

#[test]
fn supervised_sanity_on_easy_dataset() {
    let mut c = ExperimentConfig::benchmark();
    c.method = Method::SupervisedOnly;
    c.run.resample_enabled = false;
    c.run.epochs = 20;
    c.data.counts = vec![100; 8];
    c.data.labeled_fraction = 1.0;
    for shape in &mut c.data.shapes {
        shape.noise = 0.02;
    }
    let dataset = data::generate(&c.data).unwrap();
    let accs: Vec<f64> = (0..5)
        .map(|seed| run_on_dataset(&c.with_seed(seed), &dataset).unwrap().summary.final_overall_accuracy)
        .collect();
    assert!(accs.iter().all(|&a| a >= 0.95), "supervised accuracy {accs:?}");
}

#[test]
fn shipped_benchmark_config_matches_builtin() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/benchmark.toml");
    let cfg = ExperimentConfig::load(std::path::Path::new(path), &[]).unwrap();
    assert_eq!(cfg, ExperimentConfig::benchmark());
}

#[test]
fn every_epoch_is_logged() {
    let c = tiny();
    let run = run_experiment(&c).unwrap();
    assert_eq!(run.metrics.len(), c.run.epochs);
    let labeled: usize = c.data.labeled_per_class().iter().sum();
    let steps = labeled.div_ceil(c.run.batch_size);
    for (e, m) in run.metrics.iter().enumerate() {
        assert_eq!(m.epoch, e);
        assert_eq!(m.classes.len(), 8);
        assert!(m.utilization >= 0.0 && m.utilization <= 1.0);
        assert_eq!(m.unlabeled_seen, steps * c.run.unlabeled_batch_size());
        let per_class: usize = m.classes.iter().map(|k| k.pseudo_labels).sum();
        assert_eq!(per_class, m.selected);
        let mean = m.classes.iter().map(|k| k.test_accuracy).sum::<f64>() / 8.0;
        assert!((mean - m.mean_class_accuracy).abs() < 1e-12);
    }
    // Comprehensive mode starts at τ = 1, so the first epoch uses every prediction.
    assert_eq!(run.metrics[0].utilization, 1.0);
    assert!(!run.sampler.is_empty());
    assert!(run.sampler.iter().all(|r| r.epoch % 2 == 0 && r.epoch > 0));
}

#[test]
fn run_files_are_written_and_reproducible() {
    let c = tiny();
    let dir = tempfile::tempdir().unwrap();
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    write_run(&a, &dir.path().join("a")).unwrap();
    write_run(&b, &dir.path().join("b")).unwrap();
    for f in [METRICS_FILE, CLASS_METRICS_FILE, SAMPLER_FILE, SUMMARY_FILE, CHECKPOINT_FILE, CONFIG_FILE] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!x.is_empty(), "{f} empty");
        assert_eq!(x, y, "{f} differs");
    }
    let back = read_metrics(&dir.path().join("a")).unwrap();
    assert_eq!(back.len(), a.metrics.len());
    assert_eq!(back[3].mean_class_accuracy, a.metrics[3].mean_class_accuracy);
    assert_eq!(read_summary(&dir.path().join("a")).unwrap(), a.summary);
    assert_eq!(Checkpoint::load(&dir.path().join("a").join(CHECKPOINT_FILE)).unwrap(), a.checkpoint);
    let cfg = ExperimentConfig::load(&dir.path().join("a").join(CONFIG_FILE), &[]).unwrap();
    assert_eq!(cfg, c);
}

#[test]
fn seeds_change_the_run() {
    let c = tiny();
    let a = run_experiment(&c.with_seed(0)).unwrap();
    let b = run_experiment(&c.with_seed(1)).unwrap();
    assert_ne!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn reduction_to_fixmatch_with_resampling_enabled_differs() {
    // Re-sampling is the only switch between these two runs.
    let mut dy = tiny();
    dy.run.threshold_mode = ThresholdMode::Fixed { tau: 0.9 };
    dy.run.pin_thresholds = true;
    dy.run.resample_enabled = false;
    let mut fix = dy.clone();
    fix.method = Method::FixMatch { tau: 0.9 };
    fix.run.pin_thresholds = false;
    let a = run_experiment(&dy).unwrap();
    let b = run_experiment(&fix).unwrap();
    assert_eq!(a.metrics, b.metrics);
    dy.run.resample_enabled = true;
    let c = run_experiment(&dy).unwrap();
    assert_ne!(c.metrics, b.metrics);
}

#[test]
fn supervised_only_selects_nothing() {
    let mut c = tiny();
    c.method = Method::SupervisedOnly;
    c.run.resample_enabled = false;
    let run = run_experiment(&c).unwrap();
    assert!(run.metrics.iter().all(|m| m.selected == 0 && m.loss_unsupervised == 0.0));
}

#[test]
fn flexmatch_and_pseudolabel_run() {
    for method in [Method::FlexMatchStyle { tau_base: 0.95 }, Method::PseudoLabel { tau: 0.6 }] {
        let mut c = tiny();
        c.method = method;
        c.run.resample_enabled = false;
        let run = run_experiment(&c).unwrap();
        assert_eq!(run.metrics.len(), 4, "{method}");
    }
}

#[test]
fn diverging_run_reports_its_epoch() {
    let mut c = tiny();
    c.run.lr_initial = 1.7e308;
    c.run.lr_min = 1.7e308;
    let err = run_experiment(&c).unwrap_err();
    assert!(matches!(err, Error::AtEpoch { epoch: 0, .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn dataset_mismatch_is_a_config_error() {
    let c = tiny();
    let other = data::generate(&DatasetSpec { counts: vec![5, 5], shapes: c.data.shapes[..2].to_vec(), ..c.data.clone() })
        .unwrap();
    assert_eq!(run_on_dataset(&c, &other).unwrap_err().exit_code(), 2);
}

#[test]
fn compare_writes_tables_and_plots_render() {
    let a = tiny();
    let mut b = tiny();
    b.method = Method::FixMatch { tau: 0.9 };
    b.run.resample_enabled = false;
    let dir = tempfile::tempdir().unwrap();
    let cmp = compare(&[a, b], Some(dir.path())).unwrap();
    assert_eq!(cmp.rows.len(), 2);
    assert_eq!(cmp.runs.len(), 4);
    assert_eq!(cmp.row("fixmatch:0.9").unwrap().runs, 2);
    let table = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("method,runs,overall_mean,overall_std,mean_class_mean,mean_class_std"));
    for (label, seed) in [("dyconfidmatch", 0), ("fixmatch_0.9", 1)] {
        assert!(dir.path().join(label).join(format!("seed-{seed}")).join(METRICS_FILE).is_file());
    }

    let series: Vec<_> = ["dyconfidmatch", "fixmatch_0.9"]
        .iter()
        .map(|l| (l.to_string(), read_metrics(&dir.path().join(l).join("seed-0")).unwrap()))
        .collect();
    let report = correlation_report(&series[0].1).unwrap();
    assert_eq!(report.points.len(), 8);
    let plots = dir.path().join("plots");
    let first = emit_plots(&series, &plots).unwrap();
    let bytes: Vec<Vec<u8>> = first.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let second = emit_plots(&series, &plots).unwrap();
    assert_eq!(first, second);
    for (p, b) in second.iter().zip(&bytes) {
        assert_eq!(&std::fs::read(p).unwrap(), b, "{} not reproducible", p.display());
    }
}
