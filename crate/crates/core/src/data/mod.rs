//! Synthetic long-tail point-cloud benchmark.
//!
//! Each class is a geometric primitive sampled as a point set, perturbed by
//! per-axis scale jitter and Gaussian noise, then centered and scaled into the
//! unit ball. The noise level sets how hard a class is to learn.

pub mod container;

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::types::{Instance, PointCloud, Split, MIN_POINTS};

/// Noise at or above this level makes classes indistinguishable.
pub const MAX_NOISE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Sphere,
    Cube,
    Plane,
    Line,
    Cylinder,
    Cross,
    Helix,
    Torus,
}

impl Primitive {
    fn sample<R: Rng>(self, rng: &mut R) -> [f64; 3] {
        let u = |rng: &mut R| rng.random_range(-1.0..=1.0);
        match self {
            Primitive::Sphere => {
                let d: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-12);
                d.map(|v| v / n)
            }
            Primitive::Cube => {
                let face = rng.random_range(0..6usize);
                let mut p = [u(rng), u(rng), u(rng)];
                p[face % 3] = if face < 3 { -1.0 } else { 1.0 };
                p
            }
            Primitive::Plane => [u(rng), u(rng), 0.0],
            Primitive::Line => [0.0, 0.0, u(rng)],
            Primitive::Cylinder => {
                let a = rng.random_range(0.0..TAU);
                [0.6 * a.cos(), 0.6 * a.sin(), u(rng)]
            }
            Primitive::Cross => {
                let mut p = [0.0; 3];
                p[rng.random_range(0..3usize)] = u(rng);
                p
            }
            Primitive::Helix => {
                let t: f64 = rng.random_range(0.0..=1.0);
                let a = 4.0 * PI * t;
                [0.6 * a.cos(), 0.6 * a.sin(), 2.0 * t - 1.0]
            }
            Primitive::Torus => {
                let a = rng.random_range(0.0..TAU);
                let b = rng.random_range(0.0..TAU);
                let ring = 0.7 + 0.25 * b.cos();
                [ring * a.cos(), ring * a.sin(), 0.25 * b.sin()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub primitive: Primitive,
    /// Per-coordinate Gaussian noise, relative to the unit-sized shape.
    pub noise: f64,
    /// Per-axis scale factors are drawn from `[1 - j, 1 + j]`.
    #[serde(default)]
    pub scale_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub shapes: Vec<ShapeSpec>,
    /// Training-pool size per class (labeled + unlabeled).
    pub counts: Vec<usize>,
    pub labeled_fraction: f64,
    /// Balanced held-out test instances per class, generated in addition.
    pub test_per_class: usize,
    pub points: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let shape = |primitive, noise| ShapeSpec { primitive, noise, scale_jitter: 0.15 };
        Self {
            shapes: vec![
                shape(Primitive::Sphere, 0.08),
                shape(Primitive::Cube, 0.08),
                shape(Primitive::Cylinder, 0.08),
                shape(Primitive::Torus, 0.08),
                shape(Primitive::Plane, 0.08),
                shape(Primitive::Helix, 0.08),
                shape(Primitive::Line, 0.08),
                shape(Primitive::Cross, 0.08),
            ],
            counts: vec![400, 200, 100, 50, 25, 12, 12, 12],
            labeled_fraction: 0.1,
            test_per_class: 50,
            points: 64,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.counts.len() < 2 {
            errs.push("data.counts: need at least 2 classes".to_string());
        }
        if self.shapes.len() != self.counts.len() {
            errs.push(format!(
                "data.shapes: {} shapes for {} classes",
                self.shapes.len(),
                self.counts.len()
            ));
        }
        if let Some(c) = self.counts.iter().position(|&n| n == 0) {
            errs.push(format!("data.counts: class {c} has no instances"));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            errs.push(format!("data.labeled_fraction: must lie in (0, 1], got {}", self.labeled_fraction));
        }
        if self.test_per_class == 0 {
            errs.push("data.test_per_class: must be ≥ 1".to_string());
        }
        if self.points < MIN_POINTS {
            errs.push(format!("data.points: need at least {MIN_POINTS}, got {}", self.points));
        }
        for (c, s) in self.shapes.iter().enumerate() {
            if !(s.noise >= 0.0 && s.noise < MAX_NOISE) {
                errs.push(format!("data.shapes[{c}].noise: must lie in [0, {MAX_NOISE}), got {}", s.noise));
            }
            if !(s.scale_jitter >= 0.0 && s.scale_jitter < 1.0) {
                errs.push(format!("data.shapes[{c}].scale_jitter: must lie in [0, 1), got {}", s.scale_jitter));
            }
        }
        errs
    }

    /// Labeled instances per class: `round(count · fraction)`, at least 1.
    pub fn labeled_per_class(&self) -> Vec<usize> {
        self.counts
            .iter()
            .map(|&n| ((n as f64 * self.labeled_fraction).round() as usize).clamp(1, n))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub classes: usize,
    pub counts: Vec<usize>,
    pub seed: u64,
    pub instances: Vec<Instance>,
}

impl Dataset {
    /// Indices (into `instances`) of every member of `split`.
    pub fn pool(&self, split: Split) -> Vec<usize> {
        self.instances.iter().enumerate().filter(|(_, i)| i.split == split).map(|(k, _)| k).collect()
    }
}

fn sample_cloud(shape: &ShapeSpec, points: usize, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    let j = shape.scale_jitter;
    let axis: [f64; 3] = std::array::from_fn(|_| if j > 0.0 { rng.random_range(1.0 - j..=1.0 + j) } else { 1.0 });
    let (s, c) = rng.random_range(0.0..TAU).sin_cos();
    let noise = Normal::new(0.0, shape.noise).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut pts: Vec<[f64; 3]> = (0..points)
        .map(|_| {
            let p = shape.primitive.sample(rng);
            let q = [p[0] * axis[0], p[1] * axis[1], p[2] * axis[2]];
            let r = [c * q[0] - s * q[1], s * q[0] + c * q[1], q[2]];
            r.map(|v| v + noise.sample(rng))
        })
        .collect();
    let n = pts.len() as f64;
    let centroid: [f64; 3] = std::array::from_fn(|k| pts.iter().map(|p| p[k]).sum::<f64>() / n);
    for p in &mut pts {
        for k in 0..3 {
            p[k] -= centroid[k];
        }
    }
    let radius = pts.iter().map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()).fold(0.0, f64::max);
    if radius > 0.0 {
        for p in &mut pts {
            *p = p.map(|v| v / radius);
        }
    }
    PointCloud::new(pts)
}

/// Deterministic in `spec.seed`. Training-pool instances come first, class by
/// class, the first `labeled_per_class[c]` of each class being labeled; the
/// balanced test set follows.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    let errs = spec.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let labeled = spec.labeled_per_class();
    let mut layout = Vec::new();
    for (c, &n) in spec.counts.iter().enumerate() {
        for k in 0..n {
            layout.push((c, if k < labeled[c] { Split::Labeled } else { Split::Unlabeled }));
        }
    }
    for c in 0..spec.classes() {
        layout.extend(std::iter::repeat_n((c, Split::Test), spec.test_per_class));
    }
    let instances = layout
        .into_iter()
        .enumerate()
        .map(|(id, (c, split))| {
            let mut r = rng::stream(spec.seed, &[tag::DATA, id as u64]);
            let cloud = sample_cloud(&spec.shapes[c], spec.points, &mut r)?;
            Ok(Instance::new(id as u64, cloud, c, split))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { classes: spec.classes(), counts: spec.counts.clone(), seed: spec.seed, instances })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec { counts: vec![20, 10, 6, 4, 3, 2, 2, 2], test_per_class: 3, points: 16, ..Default::default() }
    }

    #[test]
    fn stratified_labeling_default_benchmark() {
        let spec = DatasetSpec::default();
        assert_eq!(spec.labeled_per_class(), vec![40, 20, 10, 5, 3, 1, 1, 1]);
    }

    #[test]
    fn generated_counts_and_splits() {
        let spec = small_spec();
        let d = generate(&spec).unwrap();
        let labeled = spec.labeled_per_class();
        for (c, (&count, &lab)) in spec.counts.iter().zip(&labeled).enumerate() {
            let of = |s: Split| d.instances.iter().filter(|i| i.evaluation_label() == c && i.split == s).count();
            assert_eq!(of(Split::Labeled) + of(Split::Unlabeled), count);
            assert_eq!(of(Split::Labeled), lab);
            assert_eq!(of(Split::Test), 3);
        }
        for inst in &d.instances {
            assert_eq!(inst.cloud.len(), 16);
            assert!(inst.cloud.points().iter().all(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn full_supervision() {
        let spec = DatasetSpec { labeled_fraction: 1.0, ..small_spec() };
        let d = generate(&spec).unwrap();
        assert!(d.pool(Split::Unlabeled).is_empty());
        assert_eq!(d.pool(Split::Labeled).len(), spec.counts.iter().sum::<usize>());
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate(&small_spec()).unwrap(), generate(&small_spec()).unwrap());
        let other = DatasetSpec { seed: 8, ..small_spec() };
        assert_ne!(generate(&small_spec()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn splits_partition_instances() {
        let d = generate(&small_spec()).unwrap();
        let mut all: Vec<usize> = [Split::Labeled, Split::Unlabeled, Split::Test].iter().flat_map(|&s| d.pool(s)).collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.instances.len()).collect::<Vec<_>>());
    }

    #[test]
    fn infeasible_specs_rejected() {
        let bad = DatasetSpec { counts: vec![5, 0], shapes: small_spec().shapes[..2].to_vec(), ..small_spec() };
        assert!(matches!(generate(&bad), Err(Error::Config(_))));
        let mut noisy = small_spec();
        noisy.shapes[0].noise = 0.3;
        assert!(generate(&noisy).is_err());
        let mismatched = DatasetSpec { counts: vec![5, 5, 5], ..small_spec() };
        assert!(generate(&mismatched).is_err());
        let no_test = DatasetSpec { test_per_class: 0, ..small_spec() };
        assert!(generate(&no_test).is_err());
    }
}
