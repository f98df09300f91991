//! Synthetic scenes and the exposure pipeline that turns a scene, a light setting
//! and sensor parameters into an 8-bit capture.
//!
//! Radiometry, per pixel at column `x` of a `W`-wide scene:
//!
//! ```text
//! irradiance = (left/255)·(1 − x/(W−1)) + (right/255)·x/(W−1)
//! radiance   = pattern·irradiance                         (reflective)
//!            = emissive_scale·pattern + ε·irradiance      (luminous)
//! H          = radiance · shutter · gain(iso) · (f_ref/f)² · scale(mode)
//! pixel      = quantize8(clip(H + N(0, σ_read·gain + σ_shot·√H), 0, 1))
//! ```
//!
//! `scale(mode)` is solved so that a uniform 0.5 pattern under full light at
//! ISO 2000, 1/60 s, f9.0 has mean pre-noise exposure 0.5.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use num_rational::Rational64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::param_space::{ParamGrid, ParamId, SensorParams};
use crate::seed;

const MODULE: &str = "scene_sim";

pub const DEFAULT_SIZE: usize = 32;
/// Mid-gray exposure target used by the auto-exposure baseline.
pub const AE_TARGET: f64 = 0.18;
pub const AE_SHOTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LightId {
    L1,
    L2,
    L3,
    L4,
    L6,
    L7,
}

impl LightId {
    pub fn as_str(self) -> &'static str {
        match self {
            LightId::L1 => "L1",
            LightId::L2 => "L2",
            LightId::L3 => "L3",
            LightId::L4 => "L4",
            LightId::L6 => "L6",
            LightId::L7 => "L7",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_LIGHTS
            .iter()
            .find(|l| l.id.as_str() == s)
            .map(|l| l.id)
            .ok_or_else(|| LensError::config(MODULE, format!("unknown light id {s:?}")))
    }

    pub fn condition(self) -> LightCondition {
        *ALL_LIGHTS.iter().find(|l| l.id == self).expect("all ids listed")
    }
}

impl std::fmt::Display for LightId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Left/right lamp intensities. (0, 0) is not a valid setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LightCondition {
    pub id: LightId,
    pub left: u8,
    pub right: u8,
}

pub const ALL_LIGHTS: [LightCondition; 6] = [
    LightCondition {
        id: LightId::L1,
        left: 255,
        right: 255,
    },
    LightCondition {
        id: LightId::L2,
        left: 127,
        right: 127,
    },
    LightCondition {
        id: LightId::L3,
        left: 255,
        right: 0,
    },
    LightCondition {
        id: LightId::L4,
        left: 0,
        right: 255,
    },
    LightCondition {
        id: LightId::L6,
        left: 127,
        right: 0,
    },
    LightCondition {
        id: LightId::L7,
        left: 0,
        right: 127,
    },
];

impl LightCondition {
    /// Irradiance at column `x` of a `width`-wide scene.
    pub fn irradiance(&self, x: usize, width: usize) -> f64 {
        let t = if width > 1 { x as f64 / (width - 1) as f64 } else { 0.5 };
        f64::from(self.left) / 255.0 * (1.0 - t) + f64::from(self.right) / 255.0 * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneMode {
    /// Light-emitting content; ambient light couples in weakly.
    Luminous,
    /// Content lit by the lamps.
    Reflective,
}

impl SceneMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SceneMode::Luminous => "luminous",
            SceneMode::Reflective => "reflective",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "luminous" => Ok(SceneMode::Luminous),
            "reflective" => Ok(SceneMode::Reflective),
            _ => Err(LensError::config(MODULE, format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub class_id: usize,
    pub mode: SceneMode,
    pub height: usize,
    pub width: usize,
    /// Row-major values in [0, 1].
    pub pattern: Vec<f32>,
}

impl Scene {
    pub fn with_mode(&self, mode: SceneMode) -> Scene {
        Scene { mode, ..self.clone() }
    }

    pub fn mean_pattern(&self) -> f64 {
        self.pattern.iter().map(|&v| f64::from(v)).sum::<f64>() / self.pattern.len() as f64
    }
}

/// Radiometric constants of the simulated camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExposureConstants {
    pub f_ref: f64,
    /// ISO with unit gain; gain(iso) = iso / iso_ref, so 250 → 0.125 and 16000 → 8.
    pub iso_ref: f64,
    pub exposure_scale: f64,
    pub luminous_exposure_scale: f64,
    pub sigma_read: f64,
    pub sigma_shot: f64,
    pub emissive_scale: f64,
    pub ambient_coupling: f64,
}

impl Default for ExposureConstants {
    fn default() -> Self {
        ExposureConstants {
            f_ref: 9.0,
            iso_ref: 2000.0,
            exposure_scale: 1.0,
            luminous_exposure_scale: 1.0,
            sigma_read: 0.01,
            sigma_shot: 0.02,
            emissive_scale: 30.0,
            ambient_coupling: 0.05,
        }
        .calibrated()
    }
}

/// Reference capture used for calibration: ISO 2000, 1/60 s, f9.0.
fn calibration_params() -> SensorParams {
    SensorParams::new(
        2000,
        crate::param_space::Shutter::from_ratio(Rational64::new(1, 60)).expect("positive"),
        9.0,
    )
}

impl ExposureConstants {
    pub fn gain(&self, iso: u32) -> f64 {
        f64::from(iso) / self.iso_ref
    }

    /// Exposure product shutter·gain·(f_ref/f)².
    pub fn exposure_product(&self, p: &SensorParams) -> f64 {
        let ap = self.f_ref / p.aperture_f;
        p.shutter_s.as_f64() * self.gain(p.iso) * ap * ap
    }

    pub fn scale(&self, mode: SceneMode) -> f64 {
        match mode {
            SceneMode::Reflective => self.exposure_scale,
            SceneMode::Luminous => self.luminous_exposure_scale,
        }
    }

    /// Solves both mode scales so the calibration scene (uniform 0.5, full light,
    /// reference params) has mean pre-noise exposure 0.5.
    pub fn calibrated(mut self) -> Self {
        let product = self.exposure_product(&calibration_params());
        let reflective_radiance = 0.5;
        let luminous_radiance = self.emissive_scale * 0.5 + self.ambient_coupling;
        self.exposure_scale = 0.5 / (reflective_radiance * product);
        self.luminous_exposure_scale = 0.5 / (luminous_radiance * product);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("f_ref", self.f_ref),
            ("iso_ref", self.iso_ref),
            ("exposure_scale", self.exposure_scale),
            ("luminous_exposure_scale", self.luminous_exposure_scale),
            ("sigma_read", self.sigma_read),
            ("sigma_shot", self.sigma_shot),
            ("emissive_scale", self.emissive_scale),
            ("ambient_coupling", self.ambient_coupling),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(LensError::config(
                    MODULE,
                    format!("{name} must be finite and > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// An 8-bit capture of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedImage {
    pub scene_id: String,
    pub mode: SceneMode,
    pub light: LightId,
    pub params: SensorParams,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl CapturedImage {
    /// Pixel value in [0, 1].
    pub fn value(&self, idx: usize) -> f64 {
        f64::from(self.pixels[idx]) / 255.0
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| f64::from(p)).sum::<f64>() / (255.0 * self.pixels.len() as f64)
    }

    /// Binary PGM (P5) bytes.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Per-pixel radiance of a scene under a light.
pub fn radiance(scene: &Scene, light: &LightCondition, constants: &ExposureConstants) -> Vec<f64> {
    let w = scene.width;
    scene
        .pattern
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let irr = light.irradiance(i % w, w);
            let v = f64::from(v);
            match scene.mode {
                SceneMode::Reflective => v * irr,
                SceneMode::Luminous => constants.emissive_scale * v + constants.ambient_coupling * irr,
            }
        })
        .collect()
}

/// Pre-noise exposure H for every pixel.
pub fn pre_noise_exposure(
    scene: &Scene,
    light: &LightCondition,
    params: &SensorParams,
    constants: &ExposureConstants,
) -> Vec<f64> {
    let k = constants.exposure_product(params) * constants.scale(scene.mode);
    radiance(scene, light, constants).into_iter().map(|r| r * k).collect()
}

pub fn render(
    scene: &Scene,
    light: &LightCondition,
    params: &SensorParams,
    constants: &ExposureConstants,
    noise_seed: u64,
) -> CapturedImage {
    let gain = constants.gain(params.iso);
    let mut rng = seed::stream(noise_seed, &["capture-noise"]);
    let pixels = pre_noise_exposure(scene, light, params, constants)
        .into_iter()
        .map(|h| {
            let std = constants.sigma_read * gain + constants.sigma_shot * h.max(0.0).sqrt();
            let z: f64 = rng.sample(StandardNormal);
            quantize(h + std * z)
        })
        .collect();
    CapturedImage {
        scene_id: scene.scene_id.clone(),
        mode: scene.mode,
        light: light.id,
        params: *params,
        height: scene.height,
        width: scene.width,
        pixels,
    }
}

/// Noise-free render (still clipped and quantized).
pub fn render_clean(
    scene: &Scene,
    light: &LightCondition,
    params: &SensorParams,
    constants: &ExposureConstants,
) -> CapturedImage {
    let pixels = pre_noise_exposure(scene, light, params, constants)
        .into_iter()
        .map(quantize)
        .collect();
    CapturedImage {
        scene_id: scene.scene_id.clone(),
        mode: scene.mode,
        light: light.id,
        params: *params,
        height: scene.height,
        width: scene.width,
        pixels,
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Emulates the camera's auto-exposure: ranks grid options by log distance between
/// their exposure product and the product that puts mean exposure at mid-gray.
/// Returns the five closest option ids (ties: lower ISO, then canonical order).
pub fn auto_expose(
    scene: &Scene,
    light: &LightCondition,
    grid: &ParamGrid,
    constants: &ExposureConstants,
) -> Vec<ParamId> {
    let rad = radiance(scene, light, constants);
    let mean_rad = rad.iter().sum::<f64>() / rad.len() as f64;
    let k = mean_rad * constants.scale(scene.mode);
    let mut ranked: Vec<(f64, u32, ParamId)> = grid
        .options()
        .iter()
        .enumerate()
        .map(|(id, p)| {
            let product = constants.exposure_product(p);
            // Black scene: no finite target, prefer the brightest settings.
            let dist = if k > 0.0 {
                ((product * k).ln() - AE_TARGET.ln()).abs()
            } else {
                -product.ln()
            };
            (dist, p.iso, id)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    ranked.into_iter().take(AE_SHOTS).map(|(_, _, id)| id).collect()
}

/// Shape and variability of generated patterns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatternStyle {
    /// Number of cosine components in a class template.
    pub components: usize,
    /// Highest spatial frequency (cycles per side) used by templates and jitter.
    pub max_frequency: usize,
    /// Template values span [0.5 − contrast/2, 0.5 + contrast/2].
    pub contrast: f64,
    /// Amplitude of the per-sample low-frequency perturbation, relative to contrast.
    pub jitter: f64,
    /// Max per-sample brightness offset (absolute, uniform in ±offset).
    pub offset: f64,
}

impl Default for PatternStyle {
    fn default() -> Self {
        PatternStyle {
            components: 4,
            max_frequency: 3,
            contrast: 0.03,
            jitter: 0.6,
            offset: 0.1,
        }
    }
}

impl PatternStyle {
    /// A full-contrast style whose class templates can meet the separation target.
    pub fn high_contrast() -> Self {
        PatternStyle {
            contrast: 0.8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.max_frequency == 0 {
            return Err(LensError::config(
                MODULE,
                "pattern needs >= 1 component and max_frequency >= 1",
            ));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(LensError::config(MODULE, "pattern contrast must be in (0, 1]"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) || !(0.0..=0.5).contains(&self.offset) {
            return Err(LensError::config(
                MODULE,
                "pattern jitter must be >= 0 and offset in [0, 0.5]",
            ));
        }
        Ok(())
    }

    /// Whether two templates can differ by more than `SEPARATION_DELTA` at all.
    pub fn separation_reachable(&self) -> bool {
        self.contrast > SEPARATION_DELTA
    }
}

/// Which half of the generated data a scene belongs to. Both halves share the
/// class templates but draw independent per-sample jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Test,
    Train,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Test => "test",
            Split::Train => "train",
        }
    }
}

pub fn scene_id(split: Split, class_id: usize, sample: usize) -> String {
    match split {
        Split::Test => format!("c{class_id:03}s{sample:03}"),
        Split::Train => format!("train-c{class_id:03}s{sample:03}"),
    }
}

/// Generates the evaluation scene set: `num_classes × samples_per_class` scenes.
pub fn generate_dataset(
    num_classes: usize,
    samples_per_class: usize,
    mode: SceneMode,
    master_seed: u64,
) -> Result<Vec<Scene>> {
    generate_split(
        num_classes,
        samples_per_class,
        mode,
        master_seed,
        Split::Test,
        &PatternStyle::default(),
        DEFAULT_SIZE,
    )
}

pub fn generate_split(
    num_classes: usize,
    samples_per_class: usize,
    mode: SceneMode,
    master_seed: u64,
    split: Split,
    style: &PatternStyle,
    size: usize,
) -> Result<Vec<Scene>> {
    if num_classes < 2 {
        return Err(LensError::config(MODULE, "need at least 2 classes"));
    }
    if samples_per_class == 0 {
        return Err(LensError::config(MODULE, "samples_per_class must be >= 1"));
    }
    if size < 2 {
        return Err(LensError::config(MODULE, "scene size must be >= 2"));
    }
    let templates = class_templates(num_classes, master_seed, style, size);
    let mut scenes = Vec::with_capacity(num_classes * samples_per_class);
    for (class_id, template) in templates.iter().enumerate() {
        for sample in 0..samples_per_class {
            let mut rng = seed::stream(
                master_seed,
                &["sample", split.tag(), &class_id.to_string(), &sample.to_string()],
            );
            let perturb = low_frequency_field(&mut rng, style.components, style.max_frequency, size);
            let offset = rng.random_range(-1.0..=1.0) * style.offset;
            let amp = style.jitter * style.contrast * 0.5;
            let pattern = template
                .iter()
                .zip(&perturb)
                .map(|(&t, &p)| (t + amp * p + offset).clamp(0.0, 1.0) as f32)
                .collect();
            scenes.push(Scene {
                scene_id: scene_id(split, class_id, sample),
                class_id,
                mode,
                height: size,
                width: size,
                pattern,
            });
        }
    }
    Ok(scenes)
}

/// Minimum fraction of pixels that must differ by more than `SEPARATION_DELTA`
/// between any two class templates.
pub const SEPARATION_FRACTION: f64 = 0.10;
pub const SEPARATION_DELTA: f64 = 0.1;
const MAX_TEMPLATE_ATTEMPTS: usize = 1000;

pub fn templates_separated(a: &[f64], b: &[f64]) -> bool {
    let differing = a
        .iter()
        .zip(b)
        .filter(|(x, y)| (*x - *y).abs() > SEPARATION_DELTA)
        .count();
    differing as f64 >= SEPARATION_FRACTION * a.len() as f64
}

fn class_templates(num_classes: usize, master_seed: u64, style: &PatternStyle, size: usize) -> Vec<Vec<f64>> {
    let template = |field: Vec<f64>| -> Vec<f64> {
        field
            .into_iter()
            .map(|v| (0.5 + 0.5 * style.contrast * v).clamp(0.0, 1.0))
            .collect()
    };
    let attempts = if style.separation_reachable() {
        MAX_TEMPLATE_ATTEMPTS
    } else {
        1
    };
    let mut templates: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    for class_id in 0..num_classes {
        let mut chosen = None;
        for attempt in 0..attempts {
            let mut rng = seed::stream(master_seed, &["template", &class_id.to_string(), &attempt.to_string()]);
            let t = template(low_frequency_field(
                &mut rng,
                style.components,
                style.max_frequency,
                size,
            ));
            if !style.separation_reachable() || templates.iter().all(|o| templates_separated(o, &t)) {
                chosen = Some(t);
                break;
            }
        }
        // Unreachable with sane styles; keep the last candidate rather than loop forever.
        let t = chosen.unwrap_or_else(|| {
            log::warn!("class {class_id}: template separation not reached");
            let mut rng = seed::stream(master_seed, &["template", &class_id.to_string(), "fallback"]);
            template(low_frequency_field(
                &mut rng,
                style.components,
                style.max_frequency,
                size,
            ))
        });
        templates.push(t);
    }
    templates
}

/// Sum of random 2-D cosines, rescaled to span [-1, 1].
fn low_frequency_field<R: Rng>(rng: &mut R, components: usize, max_freq: usize, size: usize) -> Vec<f64> {
    let comps: Vec<(f64, f64, f64, f64)> = (0..components.max(1))
        .map(|_| {
            let fx = rng.random_range(0..=max_freq) as f64;
            let fy = rng.random_range(if fx == 0.0 { 1 } else { 0 }..=max_freq.max(1)) as f64;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.5..1.0);
            (fx, fy, phase, amp)
        })
        .collect();
    let n = size as f64;
    let mut field: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            comps
                .iter()
                .map(|&(fx, fy, ph, a)| a * (std::f64::consts::TAU * (fx * x + fy * y) / n + ph).cos())
                .sum()
        })
        .collect();
    let (lo, hi) = field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if span > 0.0 {
        for v in &mut field {
            *v = 2.0 * (*v - lo) / span - 1.0;
        }
    } else {
        field.iter_mut().for_each(|v| *v = 0.0);
    }
    field
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSetFile {
    format: String,
    version: u32,
    scenes: Vec<SceneRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    scene_id: String,
    class_id: usize,
    mode: SceneMode,
    height: usize,
    width: usize,
    /// Row-major little-endian f32 values, base64.
    pattern_f32le: String,
}

const SCENE_FORMAT: &str = "lens-scenes";
const SCENE_VERSION: u32 = 1;

pub fn scenes_to_json(scenes: &[Scene]) -> String {
    let file = SceneSetFile {
        format: SCENE_FORMAT.into(),
        version: SCENE_VERSION,
        scenes: scenes
            .iter()
            .map(|s| SceneRecord {
                scene_id: s.scene_id.clone(),
                class_id: s.class_id,
                mode: s.mode,
                height: s.height,
                width: s.width,
                pattern_f32le: B64.encode(s.pattern.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<u8>>()),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("scene set serializes")
}

pub fn scenes_from_json(s: &str) -> Result<Vec<Scene>> {
    let file: SceneSetFile =
        serde_json::from_str(s).map_err(|e| LensError::format(MODULE, format!("scene set: {e}")))?;
    if file.format != SCENE_FORMAT || file.version != SCENE_VERSION {
        return Err(LensError::format(
            MODULE,
            format!("unsupported scene set {} v{}", file.format, file.version),
        ));
    }
    file.scenes
        .into_iter()
        .map(|r| {
            let bytes = B64
                .decode(&r.pattern_f32le)
                .map_err(|e| LensError::format(MODULE, format!("{}: bad base64: {e}", r.scene_id)))?;
            if bytes.len() != r.height * r.width * 4 {
                return Err(LensError::format(
                    MODULE,
                    format!(
                        "{}: pattern has {} bytes, expected {}",
                        r.scene_id,
                        bytes.len(),
                        r.height * r.width * 4
                    ),
                ));
            }
            let pattern: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if pattern.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(LensError::format(
                    MODULE,
                    format!("{}: pattern value outside [0, 1]", r.scene_id),
                ));
            }
            Ok(Scene {
                scene_id: r.scene_id,
                class_id: r.class_id,
                mode: r.mode,
                height: r.height,
                width: r.width,
                pattern,
            })
        })
        .collect()
}

pub fn write_scene_set(path: &Path, scenes: &[Scene]) -> Result<()> {
    fs::write(path, scenes_to_json(scenes)).map_err(|e| LensError::io(path, e))
}

pub fn read_scene_set(path: &Path) -> Result<Vec<Scene>> {
    let s = fs::read_to_string(path).map_err(|e| LensError::io(path, e))?;
    scenes_from_json(&s)
}

pub fn write_pgm(path: &Path, image: &CapturedImage) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| LensError::io(path, e))?;
    f.write_all(&image.to_pgm()).map_err(|e| LensError::io(path, e))
}
