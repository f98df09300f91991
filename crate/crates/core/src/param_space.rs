//! Sensor parameter space: options, the canonical 27-option grid, capture costs and
//! the grid partition used by grid-based candidate selection.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LensError, Result};

const MODULE: &str = "param_space";

/// Index of an option in its grid's canonical order.
pub type ParamId = usize;

/// Exposure duration in seconds, kept as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Shutter(Rational64);

impl Shutter {
    pub fn new(numer: i64, denom: i64) -> Result<Self> {
        if denom == 0 {
            return Err(LensError::config(MODULE, "shutter denominator is zero"));
        }
        Self::from_ratio(Rational64::new(numer, denom))
    }

    pub fn from_ratio(r: Rational64) -> Result<Self> {
        if !r.is_positive() {
            return Err(LensError::config(MODULE, format!("shutter must be > 0, got {r}")));
        }
        Ok(Shutter(r))
    }

    pub fn seconds(self) -> Rational64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        ratio_to_f64(self.0)
    }
}

impl fmt::Display for Shutter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Shutter {
    type Err = LensError;

    /// Accepts `"1/60"`, `"2"` or a plain decimal such as `"0.5"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n
                .trim()
                .parse()
                .map_err(|_| LensError::format(MODULE, format!("bad shutter numerator in {s:?}")))?;
            let d: i64 = d
                .trim()
                .parse()
                .map_err(|_| LensError::format(MODULE, format!("bad shutter denominator in {s:?}")))?;
            return Shutter::new(n, d);
        }
        Shutter::from_ratio(parse_decimal(s)?)
    }
}

impl Serialize for Shutter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Shutter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a plain decimal string ("0.002", "3", "-1.5") into an exact rational.
pub fn parse_decimal(s: &str) -> Result<Rational64> {
    let bad = || LensError::format(MODULE, format!("not a decimal number: {s:?}"));
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) || frac_part.len() > 15 {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() {
        0
    } else {
        digits.parse().map_err(|_| bad())?
    };
    let denom = 10i64.pow(frac_part.len() as u32);
    let r = Rational64::new(numer, denom);
    Ok(if neg { -r } else { r })
}

/// Exact decimal rendering of `r`, rounded half away from zero to at most
/// `max_frac` fractional digits, trailing zeros trimmed.
pub fn format_decimal(r: Rational64, max_frac: u32) -> String {
    let scale = 10i128.pow(max_frac);
    let (n, d) = (i128::from(*r.numer()), i128::from(*r.denom()));
    let scaled = n.abs() * scale;
    let mut q = scaled / d;
    if (scaled % d) * 2 >= d {
        q += 1;
    }
    let sign = if n < 0 && q != 0 { "-" } else { "" };
    let int = q / scale;
    let frac = q % scale;
    if frac == 0 {
        return format!("{sign}{int}");
    }
    let digits = format!("{frac:0width$}", width = max_frac as usize);
    format!("{sign}{int}.{}", digits.trim_end_matches('0'))
}

pub fn ratio_to_f64(r: Rational64) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Renders seconds as a decimal with six significant digits, trailing zeros trimmed.
pub fn format_seconds(r: Rational64) -> String {
    let v = ratio_to_f64(r);
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One (ISO, shutter, aperture) configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub iso: u32,
    #[serde(rename = "shutter")]
    pub shutter_s: Shutter,
    #[serde(rename = "aperture")]
    pub aperture_f: f64,
}

impl SensorParams {
    pub fn new(iso: u32, shutter_s: Shutter, aperture_f: f64) -> Self {
        SensorParams {
            iso,
            shutter_s,
            aperture_f,
        }
    }
}

impl fmt::Display for SensorParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ISO{} {}s f{:.1}", self.iso, self.shutter_s, self.aperture_f)
    }
}

/// Serialized form of a grid: the three level lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub iso_levels: Vec<u32>,
    pub shutter_levels: Vec<Shutter>,
    pub aperture_levels: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            iso_levels: vec![250, 2000, 16000],
            shutter_levels: vec![
                Shutter(Rational64::new(1, 4)),
                Shutter(Rational64::new(1, 60)),
                Shutter(Rational64::new(1, 1000)),
            ],
            aperture_levels: vec![5.0, 9.0, 16.0],
        }
    }
}

/// The discrete parameter space P. Options are the Cartesian product of the level
/// lists in row-major order (ISO outer, shutter middle, aperture inner); an option's
/// position is its `ParamId` everywhere downstream, including tie-breaking.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    spec: GridSpec,
    options: Vec<SensorParams>,
}

impl ParamGrid {
    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        if spec.iso_levels.is_empty() || spec.shutter_levels.is_empty() || spec.aperture_levels.is_empty() {
            return Err(LensError::config(MODULE, "every grid axis needs at least one level"));
        }
        if spec.iso_levels.contains(&0) {
            return Err(LensError::config(MODULE, "ISO levels must be positive"));
        }
        if spec.aperture_levels.iter().any(|&a| !(a.is_finite() && a > 0.0)) {
            return Err(LensError::config(MODULE, "aperture levels must be finite and > 0"));
        }
        if has_duplicates(&spec.iso_levels)
            || has_duplicates(&spec.shutter_levels)
            || spec
                .aperture_levels
                .iter()
                .enumerate()
                .any(|(i, a)| spec.aperture_levels[..i].contains(a))
        {
            return Err(LensError::config(MODULE, "duplicate level on a grid axis"));
        }
        let mut options =
            Vec::with_capacity(spec.iso_levels.len() * spec.shutter_levels.len() * spec.aperture_levels.len());
        for &iso in &spec.iso_levels {
            for &shutter in &spec.shutter_levels {
                for &aperture in &spec.aperture_levels {
                    options.push(SensorParams::new(iso, shutter, aperture));
                }
            }
        }
        Ok(ParamGrid { spec, options })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn options(&self) -> &[SensorParams] {
        &self.options
    }

    pub fn len(&self) -> usize {
        self.options.len()
    }

    pub fn is_empty(&self) -> bool {
        self.options.is_empty()
    }

    pub fn get(&self, id: ParamId) -> Option<&SensorParams> {
        self.options.get(id)
    }

    /// Axis level indices (iso, shutter, aperture) of an option.
    pub fn axis_indices(&self, id: ParamId) -> (usize, usize, usize) {
        let na = self.spec.aperture_levels.len();
        let ns = self.spec.shutter_levels.len();
        (id / (ns * na), (id / na) % ns, id % na)
    }

    pub fn index_of(&self, p: &SensorParams) -> Option<ParamId> {
        self.options.iter().position(|o| o == p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.spec).expect("grid spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: GridSpec =
            serde_json::from_str(s).map_err(|e| LensError::format(MODULE, format!("grid json: {e}")))?;
        Self::from_spec(spec)
    }
}

fn has_duplicates<T: PartialEq>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, x)| v[..i].contains(x))
}

/// The 3×3×3 grid: ISO {250, 2000, 16000}, shutter {1/4, 1/60, 1/1000} s,
/// aperture {f5.0, f9.0, f16}.
pub fn build_default_grid() -> ParamGrid {
    ParamGrid::from_spec(GridSpec::default()).expect("default grid is valid")
}

/// Capture time model: shutter duration plus a fixed per-shot overhead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureCostModel {
    pub per_shot_overhead_s: Rational64,
}

impl Default for CaptureCostModel {
    fn default() -> Self {
        CaptureCostModel {
            per_shot_overhead_s: Rational64::zero(),
        }
    }
}

impl CaptureCostModel {
    pub fn with_overhead(overhead: Rational64) -> Result<Self> {
        if overhead.is_negative() {
            return Err(LensError::config(MODULE, "per-shot overhead must be >= 0"));
        }
        Ok(CaptureCostModel {
            per_shot_overhead_s: overhead,
        })
    }
}

pub fn capture_cost(p: &SensorParams, model: &CaptureCostModel) -> Rational64 {
    p.shutter_s.seconds() + model.per_shot_overhead_s
}

pub fn total_cost<'a>(params: impl IntoIterator<Item = &'a SensorParams>, model: &CaptureCostModel) -> Rational64 {
    params
        .into_iter()
        .fold(Rational64::zero(), |acc, p| acc + capture_cost(p, model))
}

/// A block of the partitioned grid, holding option ids in canonical order.
pub type Cell = Vec<ParamId>;

/// Splits the grid into cells for grid-based candidate selection: one cell for
/// k < 8, a 2×2×2 split for 8 <= k < N, singletons for k = N. In the 2×2×2 case
/// each axis splits into {lowest level} and {remaining levels}. Cells come back
/// in row-major order of their bins.
pub fn partition_grid(grid: &ParamGrid, k: usize) -> Result<Vec<Cell>> {
    let n = grid.len();
    if k == 0 || k > n {
        return Err(LensError::config(MODULE, format!("k = {k} outside [1, {n}]")));
    }
    if k == n {
        return Ok((0..n).map(|i| vec![i]).collect());
    }
    if k < 8 {
        return Ok(vec![(0..n).collect()]);
    }
    let spec = grid.spec();
    if spec.iso_levels.len() < 2 || spec.shutter_levels.len() < 2 || spec.aperture_levels.len() < 2 {
        return Err(LensError::config(
            MODULE,
            "2x2x2 partition needs at least two levels per axis",
        ));
    }
    let bin = |level: usize| usize::from(level > 0);
    let mut cells: Vec<Cell> = vec![Vec::new(); 8];
    for id in 0..n {
        let (i, s, a) = grid.axis_indices(id);
        cells[bin(i) * 4 + bin(s) * 2 + bin(a)].push(id);
    }
    Ok(cells)
}
