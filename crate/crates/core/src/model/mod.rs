//! A small permutation-invariant point-cloud classifier with hand-written
//! gradients.
//!
//! Every point goes through the same two tanh layers (3 → H → H). The
//! per-channel maximum over points feeds a linear head (H → C). Only the
//! points that win a channel's max receive gradient.

pub mod augment;
pub mod checkpoint;
pub mod optim;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pseudolabel::{supervised_loss, total_loss, unsupervised_loss, LossBreakdown, SelectionMask};
use crate::types::{PointCloud, ProbabilityVector};

#[derive(Debug, Clone, Copy)]
struct Layout {
    hidden: usize,
    classes: usize,
}

impl Layout {
    fn w1(&self) -> usize {
        0
    }
    fn b1(&self) -> usize {
        3 * self.hidden
    }
    fn w2(&self) -> usize {
        4 * self.hidden
    }
    fn b2(&self) -> usize {
        4 * self.hidden + self.hidden * self.hidden
    }
    fn w3(&self) -> usize {
        5 * self.hidden + self.hidden * self.hidden
    }
    fn b3(&self) -> usize {
        self.w3() + self.classes * self.hidden
    }
    fn len(&self) -> usize {
        self.b3() + self.classes
    }
}

/// All weights in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    hidden: usize,
    classes: usize,
    values: Vec<f64>,
}

/// Gradient buffer with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self { values: vec![0.0; params.values.len()] }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl ModelParams {
    pub fn zeros(hidden: usize, classes: usize) -> Self {
        let layout = Layout { hidden, classes };
        Self { hidden, classes, values: vec![0.0; layout.len()] }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(hidden, classes);
        let l = p.layout();
        let mut fill = |start: usize, len: usize, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut p.values[start..start + len] {
                *v = rng.random_range(-bound..bound);
            }
        };
        fill(l.w1(), 3 * hidden, 3, hidden);
        fill(l.w2(), hidden * hidden, hidden, hidden);
        fill(l.w3(), classes * hidden, hidden, classes);
        p
    }

    pub fn from_values(hidden: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        let expected = Layout { hidden, classes }.len();
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: values.len() });
        }
        Ok(Self { hidden, classes, values })
    }

    fn layout(&self) -> Layout {
        Layout { hidden: self.hidden, classes: self.classes }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zeroes the classifier head, which makes every prediction uniform.
    pub fn zero_head(&mut self) {
        let l = self.layout();
        for v in &mut self.values[l.w3()..] {
            *v = 0.0;
        }
    }

    fn check_grads(&self, grads: &Gradients) -> Result<()> {
        if grads.values.len() != self.values.len() {
            return Err(Error::ShapeMismatch { expected: self.values.len(), found: grads.values.len() });
        }
        Ok(())
    }
}

/// What backward needs from a forward pass: the pooled features and the
/// point that won each channel.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pooled: Vec<f64>,
    winner: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub probs: ProbabilityVector,
    pub cache: ForwardCache,
}

fn hidden1(params: &ModelParams, p: &[f64; 3], out: &mut [f64]) {
    let l = params.layout();
    let v = &params.values;
    for (j, o) in out.iter_mut().enumerate() {
        let w = &v[l.w1() + 3 * j..l.w1() + 3 * j + 3];
        *o = (v[l.b1() + j] + w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).tanh();
    }
}

pub fn forward(params: &ModelParams, cloud: &PointCloud) -> Result<ForwardOutput> {
    let l = params.layout();
    let h = params.hidden;
    let v = &params.values;
    let mut a1 = vec![0.0; h];
    let mut pooled = vec![f64::NEG_INFINITY; h];
    let mut winner = vec![0usize; h];
    let w2 = &v[l.w2()..l.w2() + h * h];
    let b2 = &v[l.b2()..l.b2() + h];
    for (pi, p) in cloud.points().iter().enumerate() {
        hidden1(params, p, &mut a1);
        for j in 0..h {
            let row = &w2[j * h..(j + 1) * h];
            let z: f64 = b2[j] + row.iter().zip(&a1).map(|(w, a)| w * a).sum::<f64>();
            let a = z.tanh();
            if a > pooled[j] {
                pooled[j] = a;
                winner[j] = pi;
            }
        }
    }
    let mut logits = Vec::with_capacity(params.classes);
    for c in 0..params.classes {
        let row = &v[l.w3() + c * h..l.w3() + (c + 1) * h];
        logits.push(v[l.b3() + c] + row.iter().zip(&pooled).map(|(w, x)| w * x).sum::<f64>());
    }
    let probs = ProbabilityVector::from_logits(&logits).map_err(|_| {
        Error::Numeric(format!(
            "non-finite activation: logits {logits:?}, max |param| {}",
            v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        ))
    })?;
    Ok(ForwardOutput { logits, probs, cache: ForwardCache { pooled, winner } })
}

pub fn predict(params: &ModelParams, cloud: &PointCloud) -> Result<ProbabilityVector> {
    forward(params, cloud).map(|o| o.probs)
}

/// Adds the gradient of a scalar loss with respect to all parameters, given
/// `d loss / d logits` for one cloud.
pub fn backward(params: &ModelParams, cloud: &PointCloud, cache: &ForwardCache, dlogits: &[f64], grads: &mut Gradients) -> Result<()> {
    params.check_grads(grads)?;
    if dlogits.len() != params.classes {
        return Err(Error::ShapeMismatch { expected: params.classes, found: dlogits.len() });
    }
    let l = params.layout();
    let h = params.hidden;
    let v = &params.values;
    let g = &mut grads.values;

    let mut dz2 = vec![0.0; h];
    for (c, &d) in dlogits.iter().enumerate() {
        g[l.b3() + c] += d;
        let base = l.w3() + c * h;
        for j in 0..h {
            g[base + j] += d * cache.pooled[j];
            dz2[j] += v[base + j] * d;
        }
    }
    for (dz, &p) in dz2.iter_mut().zip(&cache.pooled) {
        *dz *= 1.0 - p * p;
    }

    let mut winners: Vec<usize> = cache.winner.clone();
    winners.sort_unstable();
    winners.dedup();
    let mut a1 = vec![0.0; h];
    let mut da1 = vec![0.0; h];
    for &pi in &winners {
        let x = &cloud.points()[pi];
        hidden1(params, x, &mut a1);
        da1.iter_mut().for_each(|d| *d = 0.0);
        for j in (0..h).filter(|&j| cache.winner[j] == pi) {
            let d = dz2[j];
            g[l.b2() + j] += d;
            let base = l.w2() + j * h;
            for i in 0..h {
                g[base + i] += d * a1[i];
                da1[i] += v[base + i] * d;
            }
        }
        for i in 0..h {
            let dz1 = da1[i] * (1.0 - a1[i] * a1[i]);
            g[l.b1() + i] += dz1;
            for k in 0..3 {
                g[l.w1() + 3 * i + k] += dz1 * x[k];
            }
        }
    }
    Ok(())
}

/// Denominators and weights of the composed training loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub batch_size: usize,
    pub unlabeled_batch: usize,
    pub weight_supervised: f64,
    pub weight_unsupervised: f64,
}

/// `w_s·ℓ_s + w_u·ℓ_u` on one step and its exact gradient. `labeled` holds
/// (cloud, label); `pseudo` holds (strong view, pseudo-label) for selected
/// unlabeled elements only, so unselected ones contribute nothing.
pub fn loss_and_gradient(
    params: &ModelParams,
    labeled: &[(&PointCloud, usize)],
    pseudo: &[(&PointCloud, usize)],
    spec: &LossSpec,
) -> Result<(LossBreakdown, Gradients)> {
    let mut grads = Gradients::zeros_like(params);
    let ce = |items: &[(&PointCloud, usize)], denom: usize, weight: f64, grads: &mut Gradients| -> Result<Vec<ProbabilityVector>> {
        let mut probs = Vec::with_capacity(items.len());
        for &(cloud, y) in items {
            if y >= params.classes {
                return Err(Error::ClassOutOfRange { index: y, classes: params.classes });
            }
            let out = forward(params, cloud)?;
            let scale = weight / denom as f64;
            if scale != 0.0 {
                let mut d: Vec<f64> = out.probs.as_slice().iter().map(|&p| p * scale).collect();
                d[y] -= scale;
                backward(params, cloud, &out.cache, &d, grads)?;
            }
            probs.push(out.probs);
        }
        Ok(probs)
    };
    let lab_probs = ce(labeled, spec.batch_size, spec.weight_supervised, &mut grads)?;
    let pseudo_probs = ce(pseudo, spec.unlabeled_batch, spec.weight_unsupervised, &mut grads)?;

    let labels: Vec<usize> = labeled.iter().map(|&(_, y)| y).collect();
    let ls = if labeled.is_empty() { 0.0 } else { supervised_loss(&labels, &lab_probs, spec.batch_size)?.value };
    let mask = SelectionMask { selected: vec![true; pseudo.len()], pseudo_label: pseudo.iter().map(|&(_, y)| y).collect() };
    let lu = unsupervised_loss(&pseudo_probs, &mask, spec.unlabeled_batch)?.value;
    let breakdown = LossBreakdown {
        supervised: ls,
        unsupervised: lu,
        total: total_loss(ls, lu, spec.weight_supervised, spec.weight_unsupervised),
        selected_count: pseudo.len(),
    };
    Ok((breakdown, grads))
}
