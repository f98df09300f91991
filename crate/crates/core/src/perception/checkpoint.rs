//! Portable model checkpoint: a JSON document whose array payloads are base64
//! little-endian blobs (f64 for parameters and features, u32 for labels).

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::model::ClassifierModel;
use crate::error::{LensError, Result};

const MODULE: &str = "perception";
pub const CHECKPOINT_FORMAT: &str = "lens-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: String,
    version: u32,
    classes: usize,
    dim: usize,
    bank_size: usize,
    vim_dim: usize,
    react_threshold: f64,
    vim_alpha: f64,
    weights_f64le: String,
    bias_f64le: String,
    bank_features_f64le: String,
    bank_labels_u32le: String,
    vim_basis_f64le: String,
}

fn encode_f64(v: impl IntoIterator<Item = f64>) -> String {
    B64.encode(v.into_iter().flat_map(f64::to_le_bytes).collect::<Vec<u8>>())
}

fn decode_f64(name: &str, s: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = B64
        .decode(s)
        .map_err(|e| LensError::format(MODULE, format!("{name}: bad base64: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(LensError::format(
            MODULE,
            format!("{name}: {} bytes, expected {}", bytes.len(), expected * 8),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn to_json(model: &ClassifierModel) -> String {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        classes: model.classes,
        dim: model.dim,
        bank_size: model.bank_features.len(),
        vim_dim: model.vim_basis.len(),
        react_threshold: model.react_threshold,
        vim_alpha: model.vim_alpha,
        weights_f64le: encode_f64(model.weights.iter().copied()),
        bias_f64le: encode_f64(model.bias.iter().copied()),
        bank_features_f64le: encode_f64(model.bank_features.iter().flat_map(|f| f.values().to_vec())),
        bank_labels_u32le: B64.encode(
            model
                .bank_labels
                .iter()
                .flat_map(|&l| (l as u32).to_le_bytes())
                .collect::<Vec<u8>>(),
        ),
        vim_basis_f64le: encode_f64(model.vim_basis.iter().flatten().copied()),
    };
    serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
}

pub fn from_json(s: &str) -> Result<ClassifierModel> {
    let ck: Checkpoint = serde_json::from_str(s).map_err(|e| LensError::format(MODULE, format!("checkpoint: {e}")))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(LensError::format(
            MODULE,
            format!("unsupported checkpoint {} v{}", ck.format, ck.version),
        ));
    }
    let weights = decode_f64("weights", &ck.weights_f64le, ck.classes * ck.dim)?;
    let bias = decode_f64("bias", &ck.bias_f64le, ck.classes)?;
    let bank = decode_f64("bank_features", &ck.bank_features_f64le, ck.bank_size * ck.dim)?;
    let basis = decode_f64("vim_basis", &ck.vim_basis_f64le, ck.vim_dim * ck.dim)?;
    let label_bytes = B64
        .decode(&ck.bank_labels_u32le)
        .map_err(|e| LensError::format(MODULE, format!("bank_labels: bad base64: {e}")))?;
    if label_bytes.len() != ck.bank_size * 4 {
        return Err(LensError::format(MODULE, "bank_labels: wrong length"));
    }
    let bank_labels: Vec<usize> = label_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
        .collect();
    if bank_labels.iter().any(|&l| l >= ck.classes) {
        return Err(LensError::format(MODULE, "bank label outside class range"));
    }
    let bank_features: Vec<FeatureVector> = if ck.dim == 0 {
        Vec::new()
    } else {
        bank.chunks_exact(ck.dim).map(|c| FeatureVector(c.to_vec())).collect()
    };
    let vim_basis: Vec<Vec<f64>> = if ck.dim == 0 {
        Vec::new()
    } else {
        basis.chunks_exact(ck.dim).map(<[f64]>::to_vec).collect()
    };
    Ok(ClassifierModel {
        classes: ck.classes,
        dim: ck.dim,
        weights,
        bias,
        bank_unit: bank_features.iter().map(|f| super::model::unit(f.values())).collect(),
        bank_features,
        bank_labels,
        react_threshold: ck.react_threshold,
        vim_basis,
        vim_alpha: ck.vim_alpha,
    })
}

pub fn save(path: &Path, model: &ClassifierModel) -> Result<()> {
    fs::write(path, to_json(model)).map_err(|e| LensError::io(path, e))
}

pub fn load(path: &Path) -> Result<ClassifierModel> {
    let s = fs::read_to_string(path).map_err(|e| LensError::io(path, e))?;
    from_json(&s)
}
