//! Weak and strong stochastic views of a point cloud.
//!
//! Weak: rotation about the vertical (z) axis and an isotropic scale.
//! Strong: rotation, scale, translation, clipped per-point jitter, then a
//! second independent scale.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::types::PointCloud;

/// Augmentation magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub weak_scale: [f64; 2],
    pub strong_scale: [f64; 2],
    pub strong_translate: f64,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    pub strong_rescale: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            weak_scale: [0.8, 1.2],
            strong_scale: [0.6, 1.4],
            strong_translate: 0.2,
            jitter_sigma: 0.02,
            jitter_clip: 0.05,
            strong_rescale: [0.8, 1.2],
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, [lo, hi]) in [
            ("weak_scale", self.weak_scale),
            ("strong_scale", self.strong_scale),
            ("strong_rescale", self.strong_rescale),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                errs.push(format!("augment.{name}: need 0 < lo ≤ hi, got [{lo}, {hi}]"));
            }
        }
        for (name, v) in [
            ("strong_translate", self.strong_translate),
            ("jitter_sigma", self.jitter_sigma),
            ("jitter_clip", self.jitter_clip),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("augment.{name}: must be ≥ 0, got {v}"));
            }
        }
        errs
    }
}

fn uniform<R: Rng>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn rotate_z(p: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakTransform {
    pub angle: f64,
    pub scale: f64,
}

impl WeakTransform {
    pub fn identity() -> Self {
        Self { angle: 0.0, scale: 1.0 }
    }

    pub fn sample<R: Rng>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let angle = rng.random_range(0.0..TAU);
        let scale = uniform(rng, cfg.weak_scale);
        Self { angle, scale }
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map_points(|_, p| rotate_z(p, self.angle).map(|v| v * self.scale))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongTransform {
    pub angle: f64,
    pub scale: f64,
    pub translation: [f64; 3],
    /// One displacement per point, each of norm at most the clip radius.
    pub jitter: Vec<[f64; 3]>,
    pub rescale: f64,
}

impl StrongTransform {
    pub fn sample<R: Rng>(cfg: &AugmentConfig, points: usize, rng: &mut R) -> Self {
        let angle = rng.random_range(0.0..TAU);
        let scale = uniform(rng, cfg.strong_scale);
        let t = cfg.strong_translate;
        let translation = std::array::from_fn(|_| uniform(rng, [-t, t]));
        let normal = Normal::new(0.0, cfg.jitter_sigma).expect("jitter sigma is validated");
        let jitter = (0..points)
            .map(|_| {
                let d: [f64; 3] = std::array::from_fn(|_| normal.sample(rng));
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if n > cfg.jitter_clip {
                    d.map(|v| v * cfg.jitter_clip / n)
                } else {
                    d
                }
            })
            .collect();
        let rescale = uniform(rng, cfg.strong_rescale);
        Self { angle, scale, translation, jitter, rescale }
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map_points(|i, p| {
            let r = rotate_z(p, self.angle);
            std::array::from_fn(|k| self.rescale * (self.scale * r[k] + self.translation[k] + self.jitter[i][k]))
        })
    }
}

pub fn weak_augment<R: Rng>(cloud: &PointCloud, cfg: &AugmentConfig, rng: &mut R) -> PointCloud {
    WeakTransform::sample(cfg, rng).apply(cloud)
}

pub fn strong_augment<R: Rng>(cloud: &PointCloud, cfg: &AugmentConfig, rng: &mut R) -> PointCloud {
    StrongTransform::sample(cfg, cloud.len(), rng).apply(cloud)
}
