//! Momentum SGD with a per-epoch cosine-annealed learning rate.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelParams};
use crate::types::RunConfig;

/// `lr_min + ½(lr_initial − lr_min)(1 + cos(π·e/E_max))`, held at `lr_min`
/// past the end of the schedule.
pub fn cosine_lr(epoch: usize, max_epochs: usize, lr_initial: f64, lr_min: f64) -> f64 {
    if epoch >= max_epochs {
        return lr_min;
    }
    let progress = epoch as f64 / max_epochs as f64;
    lr_min + 0.5 * (lr_initial - lr_min) * (1.0 + (PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr_initial: f64,
    pub lr_min: f64,
    pub max_epochs: usize,
    pub momentum: f64,
    pub epoch: usize,
    pub velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(cfg: &RunConfig, params: &ModelParams) -> Self {
        Self {
            lr_initial: cfg.lr_initial,
            lr_min: cfg.lr_min,
            max_epochs: cfg.epochs,
            momentum: cfg.momentum,
            epoch: 0,
            velocity: vec![0.0; params.len()],
        }
    }

    pub fn lr(&self) -> f64 {
        cosine_lr(self.epoch, self.max_epochs, self.lr_initial, self.lr_min)
    }
}

/// `v ← μ·v + g; θ ← θ − lr·v`. Leaves `params` untouched on failure.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, opt: &mut OptimizerState) -> Result<()> {
    params.check_grads(grads)?;
    if opt.velocity.len() != params.len() {
        return Err(Error::ShapeMismatch { expected: params.len(), found: opt.velocity.len() });
    }
    if let Some(i) = grads.values.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at parameter {i}")));
    }
    let lr = opt.lr();
    let velocity: Vec<f64> = opt.velocity.iter().zip(&grads.values).map(|(v, g)| opt.momentum * v + g).collect();
    let updated: Vec<f64> = params.values().iter().zip(&velocity).map(|(p, v)| p - lr * v).collect();
    if let Some(i) = updated.iter().position(|p| !p.is_finite()) {
        return Err(Error::Numeric(format!("update made parameter {i} non-finite")));
    }
    params.values_mut().copy_from_slice(&updated);
    opt.velocity = velocity;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(cosine_lr(0, 100, 0.01, 0.0001), 0.01);
        assert_eq!(cosine_lr(100, 100, 0.01, 0.0001), 0.0001);
        assert!((cosine_lr(50, 100, 0.01, 0.0001) - 0.00505).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_non_increasing_and_bounded() {
        let lrs: Vec<f64> = (0..=137).map(|e| cosine_lr(e, 137, 0.01, 0.0001)).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(lrs.iter().all(|&l| (0.0001..=0.01).contains(&l)));
    }

    #[test]
    fn momentum_step() {
        let cfg = RunConfig { epochs: 10, lr_initial: 0.1, lr_min: 0.1, momentum: 0.5, ..Default::default() };
        let mut p = ModelParams::zeros(1, 2);
        let mut opt = OptimizerState::new(&cfg, &p);
        let g = Gradients { values: vec![1.0; p.len()] };
        sgd_step(&mut p, &g, &mut opt).unwrap();
        assert!(p.values().iter().all(|&v| (v + 0.1).abs() < 1e-15));
        sgd_step(&mut p, &g, &mut opt).unwrap();
        // second velocity is 1.5
        assert!(p.values().iter().all(|&v| (v + 0.25).abs() < 1e-15));
    }

    #[test]
    fn rejects_non_finite() {
        let cfg = RunConfig::default();
        let mut p = ModelParams::zeros(1, 2);
        let before = p.clone();
        let mut opt = OptimizerState::new(&cfg, &p);
        let mut g = Gradients::zeros_like(&p);
        g.values[0] = f64::NAN;
        assert!(sgd_step(&mut p, &g, &mut opt).is_err());
        assert_eq!(p, before);
        g.values[0] = f64::MAX;
        opt.velocity[0] = f64::MAX;
        assert!(sgd_step(&mut p, &g, &mut opt).is_err());
    }
}
