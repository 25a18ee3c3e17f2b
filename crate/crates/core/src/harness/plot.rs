//! SVG charts rendered from metrics series. Output depends only on the
//! metrics, so identical inputs give byte-identical files.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::harness::metrics::EpochMetrics;

const SIZE: (u32, u32) = (800, 480);

/// A labeled metrics series, one per run.
pub type Series = (String, Vec<EpochMetrics>);

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("plot: {e}"))
}

fn line_chart(title: &str, y_desc: &str, runs: &[Series], value: fn(&EpochMetrics) -> f64) -> Result<String> {
    let x_max = runs.iter().flat_map(|(_, m)| m.iter().map(|e| e.epoch)).max().unwrap_or(0).max(1) as f64;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(0.0..x_max, 0.0..1.0)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("epoch").y_desc(y_desc).draw().map_err(plot_err)?;
        for (k, (label, metrics)) in runs.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            let points = metrics.iter().map(|m| (m.epoch as f64, value(m))).filter(|p| p.1.is_finite());
            chart
                .draw_series(LineSeries::new(points, color.stroke_width(2)))
                .map_err(plot_err)?
                .label(label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Grouped bars of a final-epoch per-class quantity. Non-finite values are
/// left out.
fn class_bars(title: &str, y_desc: &str, runs: &[Series], value: fn(&EpochMetrics) -> Vec<f64>) -> Result<String> {
    let finals: Vec<(&str, Vec<f64>)> =
        runs.iter().map(|(l, m)| (l.as_str(), m.last().map(value).unwrap_or_default())).collect();
    let classes = finals.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(1);
    let groups = finals.len().max(1) as f64;
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(0.0..classes as f64, 0.0..1.0)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_desc("class")
            .y_desc(y_desc)
            .x_labels(classes + 1)
            .x_label_formatter(&|x| format!("{}", x.floor() as i64))
            .draw()
            .map_err(plot_err)?;
        let width = 0.8 / groups;
        for (k, (label, values)) in finals.iter().enumerate() {
            let color = Palette99::pick(k).to_rgba();
            let bars = values.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(c, &v)| {
                let x0 = c as f64 + 0.1 + k as f64 * width;
                Rectangle::new([(x0, 0.0), (x0 + width, v.clamp(0.0, 1.0))], color.filled())
            });
            chart
                .draw_series(bars)
                .map_err(plot_err)?
                .label(*label)
                .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(svg)
}

/// Renders every chart as `(file name, svg text)`. Empty input gives no
/// charts; a run without epochs is an error.
pub fn render_plots(runs: &[Series]) -> Result<Vec<(&'static str, String)>> {
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((label, _)) = runs.iter().find(|(_, m)| m.is_empty()) {
        return Err(Error::InvalidInput(format!("plot: run {label:?} has no epochs")));
    }
    Ok(vec![
        ("utilization.svg", line_chart("Unlabeled utilization", "utilization", runs, |m| m.utilization)?),
        ("accuracy.svg", line_chart("Mean class accuracy", "mean class accuracy", runs, |m| m.mean_class_accuracy)?),
        ("overall_accuracy.svg", line_chart("Overall accuracy", "overall accuracy", runs, |m| m.overall_accuracy)?),
        ("thresholds.svg", class_bars("Final class thresholds", "threshold", runs, EpochMetrics::class_thresholds)?),
        ("confidence.svg", class_bars("Final class confidence", "confidence", runs, EpochMetrics::class_confidences)?),
    ])
}

/// Writes the charts into `dir` and returns their paths.
pub fn emit_plots(runs: &[Series], dir: &Path) -> Result<Vec<PathBuf>> {
    let charts = render_plots(runs)?;
    if charts.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    charts
        .into_iter()
        .map(|(name, svg)| {
            let path = dir.join(name);
            std::fs::write(&path, svg)?;
            Ok(path)
        })
        .collect()
}
