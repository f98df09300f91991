use std::fs;
use std::path::{Path, PathBuf};

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LensError, Result};
use crate::param_space::{parse_decimal, CaptureCostModel, GridSpec, ParamGrid};
use crate::perception::scorers::DEFAULT_KNN_K;
use crate::perception::{ScorerId, TrainHyper};
use crate::scene_sim::{ExposureConstants, LightCondition, LightId, PatternStyle, SceneMode, ALL_LIGHTS};
use crate::selection::{AeAggregation, CsaKind, Policy};

const MODULE: &str = "bench_cli";

/// Radiometric settings; the two exposure scales are solved from these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExposureSettings {
    pub f_ref: f64,
    pub iso_ref: f64,
    pub sigma_read: f64,
    pub sigma_shot: f64,
    pub emissive_scale: f64,
    pub ambient_coupling: f64,
}

impl Default for ExposureSettings {
    fn default() -> Self {
        let c = ExposureConstants::default();
        ExposureSettings {
            f_ref: c.f_ref,
            iso_ref: c.iso_ref,
            sigma_read: c.sigma_read,
            sigma_shot: c.sigma_shot,
            emissive_scale: c.emissive_scale,
            ambient_coupling: c.ambient_coupling,
        }
    }
}

impl ExposureSettings {
    pub fn constants(&self) -> Result<ExposureConstants> {
        let c = ExposureConstants {
            f_ref: self.f_ref,
            iso_ref: self.iso_ref,
            exposure_scale: 1.0,
            luminous_exposure_scale: 1.0,
            sigma_read: self.sigma_read,
            sigma_shot: self.sigma_shot,
            emissive_scale: self.emissive_scale,
            ambient_coupling: self.ambient_coupling,
        }
        .calibrated();
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsaSpec {
    pub algorithm: CsaKind,
    pub k: Vec<usize>,
}

impl Default for CsaSpec {
    fn default() -> Self {
        CsaSpec {
            algorithm: CsaKind::Full,
            k: Vec::new(),
        }
    }
}

/// Everything a benchmark run depends on. Loaded from TOML; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub num_classes: usize,
    /// Evaluation scenes per class.
    pub samples_per_class: usize,
    /// Training scenes per class (independent samples of the same classes).
    pub train_samples_per_class: usize,
    pub scene_size: usize,
    pub mode: SceneMode,
    pub lights: Vec<LightId>,
    pub grid: GridSpec,
    pub exposure: ExposureSettings,
    pub pattern: PatternStyle,
    pub train: TrainHyper,
    pub scorer: ScorerId,
    pub policies: Vec<String>,
    pub csa: CsaSpec,
    pub ae_aggregation: AeAggregation,
    /// Per-shot capture overhead in seconds, as a decimal string.
    pub capture_overhead_s: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 picks the rayon default. Does not affect results.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            num_classes: 20,
            samples_per_class: 5,
            train_samples_per_class: 10,
            scene_size: 32,
            mode: SceneMode::Luminous,
            lights: ALL_LIGHTS.iter().map(|l| l.id).collect(),
            grid: GridSpec::default(),
            exposure: ExposureSettings::default(),
            pattern: PatternStyle::default(),
            train: TrainHyper::default(),
            scorer: ScorerId::Confidence,
            policies: ["oracle_s", "oracle_f", "ae", "random", "lens_full"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            csa: CsaSpec::default(),
            ae_aggregation: AeAggregation::Top1,
            capture_overhead_s: "0".into(),
            seeds: vec![1, 2, 3, 4, 5],
            out_dir: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(s).map_err(|e| LensError::config(MODULE, format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| LensError::config(MODULE, format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(LensError::config(MODULE, "num_classes must be >= 2"));
        }
        if self.samples_per_class == 0 || self.train_samples_per_class == 0 {
            return Err(LensError::config(MODULE, "sample counts must be >= 1"));
        }
        if self.scene_size < 8 {
            return Err(LensError::config(MODULE, "scene_size must be >= 8"));
        }
        if self.lights.is_empty() {
            return Err(LensError::config(MODULE, "light set is empty"));
        }
        if self.seeds.is_empty() {
            return Err(LensError::config(MODULE, "seed list is empty"));
        }
        let grid = self.param_grid()?;
        for &k in &self.csa.k {
            if k == 0 || k > grid.len() {
                return Err(LensError::config(
                    MODULE,
                    format!("csa k = {k} outside [1, {}]", grid.len()),
                ));
            }
        }
        self.exposure.constants()?;
        self.pattern.validate()?;
        self.cost_model()?;
        self.policy_list()?;
        if self.scorer == ScorerId::Knn {
            self.validate_knn_bank()?;
        }
        if self.train.steps == 0
            || !self.train.learning_rate.is_finite()
            || self.train.learning_rate <= 0.0
            || self.train.l2 < 0.0
        {
            return Err(LensError::config(MODULE, "invalid training hyperparameters"));
        }
        Ok(())
    }

    /// Training features available to the kNN scorer.
    pub fn feature_bank_size(&self) -> usize {
        self.num_classes * self.train_samples_per_class * self.lights.len()
    }

    /// Rejects a kNN scorer whose feature bank is smaller than its k.
    pub fn validate_knn_bank(&self) -> Result<()> {
        let bank = self.feature_bank_size();
        if bank < DEFAULT_KNN_K {
            return Err(LensError::config(
                MODULE,
                format!("knn needs >= {DEFAULT_KNN_K} training features, config yields {bank}"),
            ));
        }
        Ok(())
    }

    pub fn param_grid(&self) -> Result<ParamGrid> {
        ParamGrid::from_spec(self.grid.clone()).map_err(|e| LensError::config(MODULE, e.to_string()))
    }

    pub fn cost_model(&self) -> Result<CaptureCostModel> {
        let overhead: Rational64 =
            parse_decimal(&self.capture_overhead_s).map_err(|e| LensError::config(MODULE, e.to_string()))?;
        CaptureCostModel::with_overhead(overhead)
    }

    pub fn light_conditions(&self) -> Vec<LightCondition> {
        self.lights.iter().map(|l| l.condition()).collect()
    }

    /// Configured policies plus one Lens policy per configured CSA k.
    pub fn policy_list(&self) -> Result<Vec<Policy>> {
        let n = self.param_grid()?.len();
        let mut out = Vec::new();
        for s in &self.policies {
            let p = match Policy::parse(s)? {
                Policy::Lens { csa: CsaKind::Full, .. } => Policy::Lens {
                    csa: CsaKind::Full,
                    k: n,
                },
                Policy::Lens { k, .. } if k == 0 || k > n => {
                    return Err(LensError::config(MODULE, format!("policy {s}: k outside [1, {n}]")))
                }
                p => p,
            };
            if !out.contains(&p) {
                out.push(p);
            }
        }
        if self.csa.algorithm != CsaKind::Full {
            for &k in &self.csa.k {
                let p = Policy::Lens {
                    csa: self.csa.algorithm,
                    k,
                };
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        if out.is_empty() {
            return Err(LensError::config(MODULE, "policy list is empty"));
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form, ignoring fields that cannot change
    /// results (output directory, worker count).
    pub fn fingerprint(&self) -> String {
        let mut semantic = self.clone();
        semantic.out_dir = PathBuf::new();
        semantic.jobs = 0;
        let canonical = serde_json::to_string(&semantic).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
