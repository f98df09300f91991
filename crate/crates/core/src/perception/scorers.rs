//! Per-capture quality scores. Higher is better for every scorer.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureVector};
use super::model::{argmax, logits_of, norm, unit, ClassifierModel};
use crate::error::{LensError, Result};
use crate::scene_sim::CapturedImage;

const MODULE: &str = "perception";

pub const DEFAULT_KNN_K: usize = 10;
pub const DEFAULT_ASH_KEEP: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerId {
    Confidence,
    Knn,
    React,
    Ash,
    Vim,
}

pub const ALL_SCORERS: [ScorerId; 5] = [
    ScorerId::Confidence,
    ScorerId::Knn,
    ScorerId::React,
    ScorerId::Ash,
    ScorerId::Vim,
];

impl ScorerId {
    pub fn as_str(self) -> &'static str {
        match self {
            ScorerId::Confidence => "confidence",
            ScorerId::Knn => "knn",
            ScorerId::React => "react",
            ScorerId::Ash => "ash",
            ScorerId::Vim => "vim",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_SCORERS
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| LensError::config(MODULE, format!("unknown scorer {s:?}")))
    }
}

impl fmt::Display for ScorerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub value: f64,
    pub scorer: ScorerId,
}

pub fn logsumexp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = logsumexp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Maximum softmax probability.
pub fn max_softmax(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    1.0 / z.iter().map(|v| (v - m).exp()).sum::<f64>()
}

/// Everything the scorers need about one capture, computed once.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub features: FeatureVector,
    pub logits: Vec<f64>,
    pub predicted: usize,
}

impl Evaluated {
    pub fn new(model: &ClassifierModel, features: FeatureVector) -> Self {
        let logits = model.logits(features.values());
        let predicted = argmax(&logits);
        Evaluated {
            features,
            logits,
            predicted,
        }
    }

    pub fn of_image(model: &ClassifierModel, image: &CapturedImage) -> Self {
        Self::new(model, extract_features(image))
    }
}

/// Scores a capture with the chosen scorer at default hyperparameters.
pub fn score(model: &ClassifierModel, eval: &Evaluated, scorer: ScorerId) -> Result<QualityScore> {
    let value = match scorer {
        ScorerId::Confidence => max_softmax(&eval.logits),
        ScorerId::Knn => knn_value(model, &eval.features, DEFAULT_KNN_K)?,
        ScorerId::React => react_value(model, &eval.features, model.react_threshold),
        ScorerId::Ash => ash_value(model, &eval.features, DEFAULT_ASH_KEEP),
        ScorerId::Vim => vim_value(model, &eval.features, &eval.logits),
    };
    Ok(QualityScore { value, scorer })
}

/// VisiT confidence: the maximum softmax probability, with the predicted class.
pub fn confidence(model: &ClassifierModel, image: &CapturedImage) -> (QualityScore, usize) {
    let e = Evaluated::of_image(model, image);
    (
        QualityScore {
            value: max_softmax(&e.logits),
            scorer: ScorerId::Confidence,
        },
        e.predicted,
    )
}

pub fn score_knn(model: &ClassifierModel, image: &CapturedImage, k: usize) -> Result<QualityScore> {
    Ok(QualityScore {
        value: knn_value(model, &extract_features(image), k)?,
        scorer: ScorerId::Knn,
    })
}

pub fn score_react(model: &ClassifierModel, image: &CapturedImage) -> QualityScore {
    QualityScore {
        value: react_value(model, &extract_features(image), model.react_threshold),
        scorer: ScorerId::React,
    }
}

pub fn score_ash(model: &ClassifierModel, image: &CapturedImage, keep_fraction: f64) -> QualityScore {
    QualityScore {
        value: ash_value(model, &extract_features(image), keep_fraction),
        scorer: ScorerId::Ash,
    }
}

pub fn score_vim(model: &ClassifierModel, image: &CapturedImage) -> QualityScore {
    let e = Evaluated::of_image(model, image);
    QualityScore {
        value: vim_value(model, &e.features, &e.logits),
        scorer: ScorerId::Vim,
    }
}

/// Negative distance from the normalized query to its k-th nearest normalized
/// training feature.
pub fn knn_value(model: &ClassifierModel, features: &FeatureVector, k: usize) -> Result<f64> {
    let n = model.bank_unit.len();
    if k == 0 || k > n {
        return Err(LensError::config(MODULE, format!("knn k = {k} outside [1, {n}]")));
    }
    let q = unit(features.values());
    let mut d: Vec<f64> = model
        .bank_unit
        .iter()
        .map(|b| b.iter().zip(&q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .collect();
    let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(-kth.sqrt())
}

/// Energy of the logits after clipping features from above at `threshold`.
pub fn react_value(model: &ClassifierModel, features: &FeatureVector, threshold: f64) -> f64 {
    let clipped: Vec<f64> = features.values().iter().map(|&v| v.min(threshold)).collect();
    logsumexp(&logits_of(&model.weights, &model.bias, model.dim, &clipped))
}

/// Keeps the top ⌈keep·D⌉ features by magnitude, rescales survivors to preserve the
/// total absolute activation, and returns the energy of the resulting logits.
pub fn ash_value(model: &ClassifierModel, features: &FeatureVector, keep_fraction: f64) -> f64 {
    let shaped = ash_shape(features.values(), keep_fraction);
    logsumexp(&logits_of(&model.weights, &model.bias, model.dim, &shaped))
}

pub fn ash_shape(x: &[f64], keep_fraction: f64) -> Vec<f64> {
    let d = x.len();
    let keep = ((keep_fraction * d as f64).ceil() as usize).clamp(1, d);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    let before: f64 = x.iter().map(|v| v.abs()).sum();
    let mut out = vec![0.0; d];
    for &i in &order[..keep] {
        out[i] = x[i];
    }
    let after: f64 = out.iter().map(|v| v.abs()).sum();
    if after > 0.0 {
        let s = before / after;
        out.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// log(1 − p_virtual), where the virtual logit alpha·‖residual‖ joins the class logits.
pub fn vim_value(model: &ClassifierModel, features: &FeatureVector, logits: &[f64]) -> f64 {
    let v = model.vim_alpha * model.vim_residual(features.values());
    vim_from_logits(logits, v)
}

pub fn vim_from_logits(logits: &[f64], virtual_logit: f64) -> f64 {
    let mut ext = logits.to_vec();
    ext.push(virtual_logit);
    logsumexp(logits) - logsumexp(&ext)
}

/// ‖PPᵀz‖ for the model's principal basis.
pub fn projection_norm(model: &ClassifierModel, z: &[f64]) -> f64 {
    let mut p = vec![0.0; z.len()];
    for b in &model.vim_basis {
        let c: f64 = b.iter().zip(z).map(|(u, v)| u * v).sum();
        p.iter_mut().zip(b).for_each(|(pi, bi)| *pi += c * bi);
    }
    norm(&p)
}
