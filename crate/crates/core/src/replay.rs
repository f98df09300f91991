//! Replay of externally produced score matrices: per-option scores, correctness
//! and costs in CSV, evaluated with the same policies as the simulator.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use sha2::{Digest, Sha256};

use crate::bench::harness::{evaluate_tables, SeedOutcomes};
use crate::bench::report::{summarize, BenchReport};
use crate::error::{LensError, Result};
use crate::exec::Jobs;
use crate::param_space::{format_decimal, parse_decimal, ParamGrid, ParamId, SensorParams, Shutter};
use crate::perception::ScorerId;
use crate::scene_sim::AE_SHOTS;
use crate::selection::{AeAggregation, AeShot, OptionTable, Policy};

const MODULE: &str = "replay";

pub const HEADER: [&str; 9] = [
    "scene_id", "light_id", "param_id", "iso", "shutter", "aperture", "score", "correct", "cost_s",
];

/// Fractional digits allowed in `cost_s`; keeps exact cost sums within i64.
pub const MAX_COST_DECIMALS: usize = 9;

/// One CSV row. `param_id` ≥ grid size marks an auto-exposure shot.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub param_id: ParamId,
    pub params: SensorParams,
    pub score: f64,
    pub correct: bool,
    pub cost: Rational64,
}

/// All rows of one (scene, light): one per grid option, plus optional AE shots.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGroup {
    pub scene_id: String,
    pub light_id: String,
    /// Indexed by param_id.
    pub options: Vec<ScoreRow>,
    /// AE shots in rank order.
    pub ae: Vec<ScoreRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub dataset_id: String,
    pub scorer_id: Option<ScorerId>,
    pub model_id: Option<String>,
    pub groups: Vec<ScoreGroup>,
}

impl ScoreMatrix {
    pub fn has_ae(&self) -> bool {
        !self.groups.is_empty() && self.groups.iter().all(|g| !g.ae.is_empty())
    }

    pub fn tables(&self, grid: &ParamGrid) -> Vec<OptionTable> {
        self.groups
            .iter()
            .map(|g| OptionTable {
                scene_id: g.scene_id.clone(),
                light_id: g.light_id.clone(),
                scores: g.options.iter().map(|r| r.score).collect(),
                correct: g.options.iter().map(|r| r.correct).collect(),
                costs: g.options.iter().map(|r| r.cost).collect(),
                ae: g
                    .ae
                    .iter()
                    .map(|r| AeShot {
                        grid_id: grid.index_of(&r.params),
                        score: r.score,
                        correct: r.correct,
                        cost: r.cost,
                    })
                    .collect(),
            })
            .collect()
    }

    /// Builds a matrix from simulated option tables. AE shots must map to grid
    /// options.
    pub fn from_tables(
        dataset_id: &str,
        scorer: Option<ScorerId>,
        tables: &[OptionTable],
        grid: &ParamGrid,
    ) -> Result<Self> {
        let n = grid.len();
        let mut groups = Vec::with_capacity(tables.len());
        for t in tables {
            if t.scores.len() != n {
                return Err(LensError::invariant(MODULE, "table does not match the grid"));
            }
            let options = (0..n)
                .map(|id| ScoreRow {
                    param_id: id,
                    params: grid.options()[id],
                    score: t.scores[id],
                    correct: t.correct[id],
                    cost: t.costs[id],
                })
                .collect();
            let ae =
                t.ae.iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let id = s
                            .grid_id
                            .ok_or_else(|| LensError::invariant(MODULE, "AE shot outside the grid"))?;
                        Ok(ScoreRow {
                            param_id: n + i,
                            params: grid.options()[id],
                            score: s.score,
                            correct: s.correct,
                            cost: s.cost,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
            groups.push(ScoreGroup {
                scene_id: t.scene_id.clone(),
                light_id: t.light_id.clone(),
                options,
                ae,
            });
        }
        Ok(ScoreMatrix {
            dataset_id: dataset_id.to_string(),
            scorer_id: scorer,
            model_id: None,
            groups,
        })
    }

    /// CSV in the replay interchange format. Scores use shortest round-trip
    /// formatting, costs exact decimals (at most `MAX_COST_DECIMALS` digits).
    pub fn to_csv(&self) -> String {
        let mut out = HEADER.join(",");
        out.push('\n');
        for g in &self.groups {
            for r in g.options.iter().chain(&g.ae) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    g.scene_id,
                    g.light_id,
                    r.param_id,
                    r.params.iso,
                    r.params.shutter_s,
                    r.params.aperture_f,
                    r.score,
                    u8::from(r.correct),
                    format_decimal(r.cost, MAX_COST_DECIMALS as u32),
                ));
            }
        }
        out
    }

    /// SHA-256 of the canonical CSV form.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.to_csv().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> LensError {
    LensError::parse(MODULE, line, msg)
}

fn parse_row(rec: &csv::StringRecord, line: usize, n: usize) -> Result<(String, String, ScoreRow)> {
    if rec.len() != HEADER.len() {
        return Err(parse_err(
            line,
            format!("expected {} fields, found {}", HEADER.len(), rec.len()),
        ));
    }
    let field = |i: usize| rec.get(i).expect("length checked");
    let param_id: ParamId = field(2)
        .parse()
        .map_err(|_| parse_err(line, format!("bad param_id {:?}", field(2))))?;
    if param_id >= n + AE_SHOTS {
        return Err(parse_err(
            line,
            format!("param_id {param_id} outside [0, {}]", n + AE_SHOTS - 1),
        ));
    }
    let iso: u32 = field(3)
        .parse()
        .map_err(|_| parse_err(line, format!("bad iso {:?}", field(3))))?;
    let shutter: Shutter = field(4)
        .parse()
        .map_err(|_| parse_err(line, format!("bad shutter {:?}", field(4))))?;
    let aperture: f64 = field(5)
        .parse()
        .map_err(|_| parse_err(line, format!("bad aperture {:?}", field(5))))?;
    if !(aperture.is_finite() && aperture > 0.0) {
        return Err(parse_err(line, "aperture must be finite and positive"));
    }
    let score: f64 = field(6)
        .parse()
        .map_err(|_| parse_err(line, format!("bad score {:?}", field(6))))?;
    if !score.is_finite() {
        return Err(parse_err(line, format!("non-finite score {:?}", field(6))));
    }
    let correct = match field(7) {
        "0" => false,
        "1" => true,
        other => return Err(parse_err(line, format!("correct must be 0 or 1, found {other:?}"))),
    };
    let cost_text = field(8);
    let frac = cost_text.split_once('.').map_or(0, |(_, f)| f.len());
    if frac > MAX_COST_DECIMALS {
        return Err(parse_err(
            line,
            format!("cost_s has more than {MAX_COST_DECIMALS} decimals"),
        ));
    }
    let cost = parse_decimal(cost_text).map_err(|_| parse_err(line, format!("bad cost_s {cost_text:?}")))?;
    if !cost.is_positive() {
        return Err(parse_err(line, "cost_s must be > 0"));
    }
    Ok((
        field(0).to_string(),
        field(1).to_string(),
        ScoreRow {
            param_id,
            params: SensorParams::new(iso, shutter, aperture),
            score,
            correct,
            cost,
        },
    ))
}

/// Parses and validates CSV text against `grid`.
pub fn parse_scores(text: &str, dataset_id: &str, grid: &ParamGrid) -> Result<ScoreMatrix> {
    let n = grid.len();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(LensError::format(MODULE, format!("unreadable header: {e}"))),
        None => return Err(LensError::format(MODULE, "empty score file")),
    };
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(LensError::format(
            MODULE,
            format!(
                "unknown header {:?}; expected {}",
                header.iter().collect::<Vec<_>>().join(","),
                HEADER.join(",")
            ),
        ));
    }

    struct Pending {
        scene_id: String,
        light_id: String,
        rows: Vec<(usize, ScoreRow)>,
    }
    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let (scene_id, light_id, row) = parse_row(&rec, line, n)?;
        if row.param_id < n {
            let expected = &grid.options()[row.param_id];
            if row.params != *expected {
                return Err(parse_err(
                    line,
                    format!("param_id {} does not match grid option {expected}", row.param_id),
                ));
            }
        }
        let key = (scene_id, light_id);
        let slot = match index.get(&key) {
            Some(&i) => i,
            None => {
                index.insert(key.clone(), order.len());
                order.push(Pending {
                    scene_id: key.0,
                    light_id: key.1,
                    rows: Vec::new(),
                });
                order.len() - 1
            }
        };
        order[slot].rows.push((line, row));
    }
    if order.is_empty() {
        return Err(LensError::format(MODULE, "score file has no data rows"));
    }

    let mut groups = Vec::with_capacity(order.len());
    for p in order {
        let name = format!("({}, {})", p.scene_id, p.light_id);
        let mut options: Vec<Option<ScoreRow>> = vec![None; n];
        let mut ae: Vec<Option<ScoreRow>> = vec![None; AE_SHOTS];
        for (line, row) in p.rows {
            let slot = if row.param_id < n {
                &mut options[row.param_id]
            } else {
                &mut ae[row.param_id - n]
            };
            if slot.is_some() {
                return Err(LensError::format(
                    MODULE,
                    format!("group {name}: duplicate param_id {} at line {line}", row.param_id),
                ));
            }
            *slot = Some(row);
        }
        let missing: Vec<String> = options
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .map(|(i, _)| i.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(LensError::format(
                MODULE,
                format!("group {name}: missing param_id {}", missing.join(", ")),
            ));
        }
        let ae_count = ae.iter().take_while(|r| r.is_some()).count();
        if ae[ae_count..].iter().any(Option::is_some) {
            return Err(LensError::format(
                MODULE,
                format!("group {name}: AE rows must be consecutive from param_id {n}"),
            ));
        }
        groups.push(ScoreGroup {
            scene_id: p.scene_id,
            light_id: p.light_id,
            options: options.into_iter().map(|r| r.expect("checked")).collect(),
            ae: ae.into_iter().take(ae_count).map(|r| r.expect("checked")).collect(),
        });
    }
    Ok(ScoreMatrix {
        dataset_id: dataset_id.to_string(),
        scorer_id: None,
        model_id: None,
        groups,
    })
}

pub fn load_scores(path: &Path, grid: &ParamGrid) -> Result<ScoreMatrix> {
    let text = fs::read_to_string(path).map_err(|e| LensError::io(path, e))?;
    let dataset = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scores");
    parse_scores(&text, dataset, grid)
}

pub fn write_scores(path: &Path, matrix: &ScoreMatrix) -> Result<()> {
    fs::write(path, matrix.to_csv()).map_err(|e| LensError::io(path, e))
}

/// Runs `policies` over the matrix once per seed. Seeds only drive CSA sampling.
pub fn replay_outcomes(
    matrix: &ScoreMatrix,
    policies: &[Policy],
    grid: &ParamGrid,
    seeds: &[u64],
    ae: AeAggregation,
    jobs: Jobs,
) -> Result<Vec<SeedOutcomes>> {
    if seeds.is_empty() {
        return Err(LensError::config(MODULE, "seed list is empty"));
    }
    if policies.contains(&Policy::Ae) && !matrix.has_ae() {
        return Err(LensError::config(
            MODULE,
            "policy ae requested but the score matrix has no AE rows (param_id 27..31) for every group",
        ));
    }
    let tables = matrix.tables(grid);
    seeds
        .iter()
        .map(|&s| evaluate_tables(&tables, policies, grid, s, ae, jobs))
        .collect()
}

pub fn replay_evaluate(
    matrix: &ScoreMatrix,
    policies: &[Policy],
    grid: &ParamGrid,
    seeds: &[u64],
    ae: AeAggregation,
    jobs: Jobs,
) -> Result<BenchReport> {
    let runs = replay_outcomes(matrix, policies, grid, seeds, ae, jobs)?;
    let lights: Vec<String> = matrix.groups.iter().map(|g| g.light_id.clone()).collect();
    Ok(BenchReport {
        source: "replay".into(),
        fingerprint: matrix.fingerprint(),
        scorer: matrix.scorer_id,
        mode: None,
        ae_aggregation: ae,
        seeds: seeds.to_vec(),
        groups_per_seed: matrix.groups.len(),
        oracle_f_choice: runs.iter().map(|r| r.oracle_f_choice).collect(),
        policies: summarize(policies, &lights, &runs)?,
        ablation: None,
        confidence_separation: None,
    })
}

/// Total per-option cost over all groups; handy for cost summaries.
pub fn option_cost_totals(matrix: &ScoreMatrix) -> Vec<Rational64> {
    let n = matrix.groups.first().map_or(0, |g| g.options.len());
    let mut out = vec![Rational64::zero(); n];
    for g in &matrix.groups {
        for (acc, r) in out.iter_mut().zip(&g.options) {
            *acc += r.cost;
        }
    }
    out
}
