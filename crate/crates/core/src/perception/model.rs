//! Target model: a multinomial logistic regression head on pooled features, plus the
//! training-set statistics the feature-space scorers need.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector};
use crate::error::{LensError, Result};
use crate::param_space::ParamGrid;
use crate::scene_sim::{auto_expose, render, ExposureConstants, LightCondition, Scene};
use crate::seed;

const MODULE: &str = "perception";

/// Percentile of training activations used as the ReAct clipping threshold.
pub const REACT_PERCENTILE: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub steps: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            steps: 500,
            learning_rate: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `classes × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub bank_features: Vec<FeatureVector>,
    pub bank_labels: Vec<usize>,
    pub react_threshold: f64,
    /// Orthonormal principal directions of the training features, one per entry.
    pub vim_basis: Vec<Vec<f64>>,
    pub vim_alpha: f64,
    /// L2-normalized copy of `bank_features`, kept for nearest-neighbour queries.
    pub(crate) bank_unit: Vec<Vec<f64>>,
}

impl ClassifierModel {
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        logits_of(&self.weights, &self.bias, self.dim, x)
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Projection residual ‖(I − PPᵀ)x‖ against the principal basis.
    pub fn vim_residual(&self, x: &[f64]) -> f64 {
        let mut r = x.to_vec();
        for b in &self.vim_basis {
            let c: f64 = b.iter().zip(x).map(|(u, v)| u * v).sum();
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= c * bi);
        }
        norm(&r)
    }

    /// Assembles a model from trained head parameters and its training features,
    /// fitting the ReAct threshold, the principal subspace (d = D/2) and alpha.
    pub fn from_parts(
        classes: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        bank_features: Vec<FeatureVector>,
        bank_labels: Vec<usize>,
    ) -> Result<Self> {
        let dim = bank_features.first().map_or(0, FeatureVector::dim);
        if dim == 0 || weights.len() != classes * dim || bias.len() != classes {
            return Err(LensError::invariant(MODULE, "inconsistent model shapes"));
        }
        let react_threshold = percentile(
            bank_features.iter().flat_map(|f| f.values().iter().copied()).collect(),
            REACT_PERCENTILE,
        );
        let vim_basis = principal_basis(&bank_features, dim / 2);
        let mut model = ClassifierModel {
            classes,
            dim,
            weights,
            bias,
            bank_unit: bank_features.iter().map(|f| unit(f.values())).collect(),
            bank_features,
            bank_labels,
            react_threshold,
            vim_basis,
            vim_alpha: 0.0,
        };
        let n = model.bank_features.len() as f64;
        let mean_max_logit = model
            .bank_features
            .iter()
            .map(|f| model.logits(f.values()).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / n;
        let mean_residual = model
            .bank_features
            .iter()
            .map(|f| model.vim_residual(f.values()))
            .sum::<f64>()
            / n;
        model.vim_alpha = if mean_residual > 0.0 {
            mean_max_logit / mean_residual
        } else {
            0.0
        };
        if !model.weights.iter().chain(&model.bias).all(|v| v.is_finite()) || !model.react_threshold.is_finite() {
            return Err(LensError::invariant(MODULE, "non-finite model parameters"));
        }
        Ok(model)
    }
}

pub(crate) fn logits_of(weights: &[f64], bias: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(c, b)| {
            b + weights[c * dim..(c + 1) * dim]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        v.to_vec()
    }
}

/// Linear-interpolated percentile (0..=100).
pub fn percentile(mut values: Vec<f64>, pct: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let pos = pct / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Top-`d` eigenvectors of the (uncentered) second-moment matrix of the features.
fn principal_basis(features: &[FeatureVector], d: usize) -> Vec<Vec<f64>> {
    let dim = features[0].dim();
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for f in features {
        let v = f.values();
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] += v[i] * v[j];
            }
        }
    }
    m /= features.len() as f64;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .take(d)
        .map(|i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect()
}

/// Mean cross-entropy plus (l2/2)·‖W‖², and its gradient w.r.t. (W, b).
pub fn loss_and_gradient(
    weights: &[f64],
    bias: &[f64],
    features: &[FeatureVector],
    labels: &[usize],
    l2: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let classes = bias.len();
    let dim = weights.len() / classes;
    let n = features.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = vec![0.0; classes];
    let mut loss = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        let x = f.values();
        let z = logits_of(weights, bias, dim, x);
        let lse = super::scorers::logsumexp(&z);
        loss += lse - z[y];
        for c in 0..classes {
            let p = (z[c] - lse).exp();
            let g = (p - if c == y { 1.0 } else { 0.0 }) / n;
            gb[c] += g;
            gw[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(x)
                .for_each(|(w, v)| *w += g * v);
        }
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    gw.iter_mut().zip(weights).for_each(|(g, w)| *g += l2 * w);
    (loss, gw, gb)
}

/// Full-batch gradient descent from zero weights. Returns the head parameters and
/// the loss before each step.
pub fn fit_head(
    features: &[FeatureVector],
    labels: &[usize],
    classes: usize,
    hyper: &TrainHyper,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if classes < 2 {
        return Err(LensError::config(MODULE, "need at least 2 classes"));
    }
    if features.is_empty() || features.len() != labels.len() {
        return Err(LensError::config(MODULE, "empty or mismatched training set"));
    }
    let mut counts = vec![0usize; classes];
    for &y in labels {
        if y >= classes {
            return Err(LensError::config(
                MODULE,
                format!("label {y} outside {classes} classes"),
            ));
        }
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(LensError::config(MODULE, format!("class {c} has no training samples")));
    }
    let dim = features[0].dim();
    let mut w = vec![0.0; classes * dim];
    let mut b = vec![0.0; classes];
    let mut history = Vec::with_capacity(hyper.steps);
    for _ in 0..hyper.steps {
        let (loss, gw, gb) = loss_and_gradient(&w, &b, features, labels, hyper.l2);
        history.push(loss);
        w.iter_mut().zip(&gw).for_each(|(w, g)| *w -= hyper.learning_rate * g);
        b.iter_mut().zip(&gb).for_each(|(b, g)| *b -= hyper.learning_rate * g);
    }
    Ok((w, b, history))
}

/// Training captures: every scene under every light at its auto-exposure top-1
/// option, with noise keyed by (seed, scene, light).
pub fn training_set(
    scenes: &[Scene],
    lights: &[LightCondition],
    grid: &ParamGrid,
    constants: &ExposureConstants,
    seed_value: u64,
) -> (Vec<FeatureVector>, Vec<usize>) {
    let mut feats = Vec::with_capacity(scenes.len() * lights.len());
    let mut labels = Vec::with_capacity(scenes.len() * lights.len());
    for scene in scenes {
        for light in lights {
            let top = auto_expose(scene, light, grid, constants)[0];
            let noise = seed::derive(seed_value, &["train-capture", &scene.scene_id, light.id.as_str()]);
            let img = render(scene, light, &grid.options()[top], constants, noise);
            feats.push(extract_features(&img));
            labels.push(scene.class_id);
        }
    }
    (feats, labels)
}

pub fn train(
    scenes: &[Scene],
    lights: &[LightCondition],
    grid: &ParamGrid,
    constants: &ExposureConstants,
    hyper: &TrainHyper,
    seed_value: u64,
) -> Result<ClassifierModel> {
    let classes = scenes.iter().map(|s| s.class_id + 1).max().unwrap_or(0);
    if lights.is_empty() {
        return Err(LensError::config(MODULE, "no lights to train under"));
    }
    let (feats, labels) = training_set(scenes, lights, grid, constants, seed_value);
    let (w, b, _) = fit_head(&feats, &labels, classes, hyper)?;
    ClassifierModel::from_parts(classes, w, b, feats, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(n: usize, dim: usize, classes: usize, seed: u64) -> (Vec<FeatureVector>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = (0..n)
            .map(|_| FeatureVector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let labels = (0..n).map(|i| i % classes).collect();
        (feats, labels)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (feats, labels) = random_batch(12, 5, 3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Vec<f64> = (0..15).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
        let l2 = 1e-2;
        let (_, gw, gb) = loss_and_gradient(&w, &b, &feats, &labels, l2);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..w.len() {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[i] += h;
            wm[i] -= h;
            let fd = (loss_and_gradient(&wp, &b, &feats, &labels, l2).0
                - loss_and_gradient(&wm, &b, &feats, &labels, l2).0)
                / (2.0 * h);
            worst = worst.max((fd - gw[i]).abs() / fd.abs().max(gw[i].abs()).max(1e-8));
        }
        for i in 0..b.len() {
            let (mut bp, mut bm) = (b.clone(), b.clone());
            bp[i] += h;
            bm[i] -= h;
            let fd = (loss_and_gradient(&w, &bp, &feats, &labels, l2).0
                - loss_and_gradient(&w, &bm, &feats, &labels, l2).0)
                / (2.0 * h);
            worst = worst.max((fd - gb[i]).abs() / fd.abs().max(gb[i].abs()).max(1e-8));
        }
        assert!(worst < 1e-4, "relative error {worst}");
    }

    #[test]
    fn separable_toy_problem_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..200 {
            let y = i % 2;
            let sign = if y == 0 { -1.0 } else { 1.0 };
            let v = vec![
                sign * rng.random_range(0.5..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            feats.push(FeatureVector(v));
            labels.push(y);
        }
        let (w, b, _) = fit_head(&feats, &labels, 2, &TrainHyper::default()).unwrap();
        let correct = feats
            .iter()
            .zip(&labels)
            .filter(|(f, &y)| argmax(&logits_of(&w, &b, 3, f.values())) == y)
            .count();
        assert!(correct as f64 / 200.0 >= 0.99);
    }

    #[test]
    fn missing_class_is_rejected() {
        let (feats, _) = random_batch(6, 3, 3, 4);
        let labels = vec![0, 1, 0, 1, 0, 1];
        assert!(fit_head(&feats, &labels, 3, &TrainHyper::default()).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(vec![1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
        assert!((percentile((0..=10).map(f64::from).collect(), 90.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn principal_basis_is_orthonormal() {
        let (feats, _) = random_batch(80, 8, 2, 5);
        let basis = principal_basis(&feats, 4);
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-6);
            }
        }
    }
}
