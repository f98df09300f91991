//! End-to-end commands: gen, train, run, sweep, heatmap, ablate.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::BenchConfig;
use super::harness::{confidence_separation, evaluate_tables, SeedOutcomes, SeedRun, Workspace};
use super::report::{mean_std, summarize, AblationRow, BenchReport, COST_DECIMALS};
use crate::error::{LensError, Result};
use crate::param_space::{format_decimal, ParamGrid};
use crate::perception::{checkpoint, ScorerId, ALL_SCORERS};
use crate::replay::{write_scores, ScoreMatrix};
use crate::scene_sim::{write_scene_set, LightCondition, LightId};
use crate::selection::{outcome_record, CsaKind, OptionTable, Policy};

const MODULE: &str = "bench_cli";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LensError::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| LensError::io(path, e))
}

/// Prepares every configured seed, computing the given scorers.
pub fn prepare_all(ws: &Workspace, scorers: &[ScorerId]) -> Result<Vec<SeedRun>> {
    ws.config
        .seeds
        .iter()
        .map(|&s| {
            log::info!("seed {s}: generating, training and capturing");
            ws.prepare_seed(s, scorers)
        })
        .collect()
}

/// Per-seed option tables and policy outcomes under one scorer.
pub fn simulate(
    ws: &Workspace,
    runs: &[SeedRun],
    scorer: ScorerId,
    policies: &[Policy],
) -> Result<(Vec<Vec<OptionTable>>, Vec<SeedOutcomes>)> {
    let mut all_tables = Vec::with_capacity(runs.len());
    let mut outcomes = Vec::with_capacity(runs.len());
    for run in runs {
        let tables = run.tables(scorer, &ws.costs)?;
        outcomes.push(evaluate_tables(
            &tables,
            policies,
            ws.grid(),
            run.seed,
            ws.config.ae_aggregation,
            ws.jobs,
        )?);
        all_tables.push(tables);
    }
    Ok((all_tables, outcomes))
}

fn table_lights(runs: &[SeedRun]) -> Vec<String> {
    runs.first()
        .map(|r| r.groups.iter().map(|g| g.light_id.as_str().to_string()).collect())
        .unwrap_or_default()
}

/// Builds the main report from prepared runs.
pub fn build_report(ws: &Workspace, runs: &[SeedRun], scorer: ScorerId, policies: &[Policy]) -> Result<BenchReport> {
    let (_, outcomes) = simulate(ws, runs, scorer, policies)?;
    Ok(BenchReport {
        source: "simulation".into(),
        fingerprint: ws.config.fingerprint(),
        scorer: Some(scorer),
        mode: Some(ws.config.mode),
        ae_aggregation: ws.config.ae_aggregation,
        seeds: ws.config.seeds.clone(),
        groups_per_seed: runs.first().map_or(0, |r| r.groups.len()),
        oracle_f_choice: outcomes.iter().map(|o| o.oracle_f_choice).collect(),
        policies: summarize(policies, &table_lights(runs), &outcomes)?,
        ablation: None,
        confidence_separation: Some(confidence_separation(runs.iter().flat_map(|r| &r.groups))),
    })
}

/// Lens-full under each scorer.
pub fn ablation_rows(ws: &Workspace, runs: &[SeedRun], scorers: &[ScorerId]) -> Result<Vec<AblationRow>> {
    let lens = Policy::Lens {
        csa: CsaKind::Full,
        k: ws.grid().len(),
    };
    let mut rows = Vec::with_capacity(scorers.len());
    for &scorer in scorers {
        let (_, outcomes) = simulate(ws, runs, scorer, &[lens])?;
        let per_seed: Vec<f64> = outcomes
            .iter()
            .map(|o| o.outcomes.iter().map(|row| row[0].accuracy).sum::<f64>() / o.outcomes.len() as f64)
            .collect();
        let (m, s) = mean_std(&per_seed);
        rows.push(AblationRow {
            scorer: scorer.as_str().to_string(),
            policy: lens.id(),
            accuracy_mean: m,
            accuracy_std: s,
            accuracy_per_seed: per_seed,
        });
    }
    Ok(rows)
}

fn jsonl_for(
    ws: &Workspace,
    run: &SeedRun,
    tables: &[OptionTable],
    outcomes: &SeedOutcomes,
    scorer: ScorerId,
) -> String {
    let mut out = String::new();
    for ((g, table), row) in run.groups.iter().zip(tables).zip(&outcomes.outcomes) {
        for o in row {
            // Random is an expectation over options, not a single decision.
            if o.policy == Policy::Random {
                continue;
            }
            let rec = outcome_record(table, o, ws.grid(), scorer, |id| g.predicted[id]);
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Generate → train → evaluate → report. Writes `report.json`, and per seed
/// `results_seed{N}.jsonl` and `scores_seed{N}.csv` (the replay format).
pub fn cmd_run(config: &BenchConfig) -> Result<BenchReport> {
    let ws = Workspace::new(config)?;
    let scorer = config.scorer;
    let policies = config.policy_list()?;
    let runs = prepare_all(&ws, &[scorer])?;
    let (tables, outcomes) = simulate(&ws, &runs, scorer, &policies)?;
    let report = build_report(&ws, &runs, scorer, &policies)?;
    let dir = &config.out_dir;
    ensure_dir(dir)?;
    for ((run, t), o) in runs.iter().zip(&tables).zip(&outcomes) {
        write_file(
            &dir.join(format!("results_seed{}.jsonl", run.seed)),
            jsonl_for(&ws, run, t, o, scorer),
        )?;
        let matrix = ScoreMatrix::from_tables(&format!("sim_seed{}", run.seed), Some(scorer), t, ws.grid())?;
        write_scores(&dir.join(format!("scores_seed{}.csv", run.seed)), &matrix)?;
    }
    write_file(&dir.join("report.json"), report.to_json())?;
    Ok(report)
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub csa: CsaKind,
    pub k: usize,
    pub mean_cost_s: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub accuracy_per_seed: Vec<f64>,
}

pub const SWEEP_HEADER: &str = "csa,k,mean_cost_s,accuracy_mean,accuracy_std";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.csa.as_str(),
            r.k,
            r.mean_cost_s,
            r.accuracy_mean,
            r.accuracy_std
        ));
    }
    s
}

/// Accuracy/cost of each CSA at each k over the configured seeds.
pub fn sweep_rows(ws: &Workspace, runs: &[SeedRun], csas: &[CsaKind], ks: &[usize]) -> Result<Vec<SweepRow>> {
    let n = ws.grid().len();
    let mut policies = Vec::new();
    for &csa in csas {
        if csa == CsaKind::Full {
            policies.push(Policy::Lens { csa, k: n });
            continue;
        }
        for &k in ks {
            if k == 0 || k > n {
                return Err(LensError::config(MODULE, format!("k = {k} outside [1, {n}]")));
            }
            policies.push(Policy::Lens { csa, k });
        }
    }
    let (_, outcomes) = simulate(ws, runs, ws.config.scorer, &policies)?;
    let summary = summarize(&policies, &table_lights(runs), &outcomes)?;
    Ok(policies
        .iter()
        .zip(summary)
        .map(|(p, row)| {
            let (csa, k) = match *p {
                Policy::Lens { csa, k } => (csa, k),
                _ => unreachable!("sweep only evaluates lens policies"),
            };
            SweepRow {
                csa,
                k,
                mean_cost_s: row.mean_cost_decimal,
                accuracy_mean: row.accuracy_mean,
                accuracy_std: row.accuracy_std,
                accuracy_per_seed: row.accuracy_per_seed,
            }
        })
        .collect())
}

/// Writes `sweep.csv`. Empty `csas`/`ks` fall back to all CSAs and k = 1..=N.
pub fn cmd_sweep(config: &BenchConfig, csas: &[CsaKind], ks: &[usize]) -> Result<Vec<SweepRow>> {
    let ws = Workspace::new(config)?;
    if config.seeds.len() < 5 {
        log::warn!("sweep over {} seeds; at least 5 are recommended", config.seeds.len());
    }
    let csas: Vec<CsaKind> = if csas.is_empty() {
        vec![CsaKind::Csa1, CsaKind::Csa2, CsaKind::Csa3]
    } else {
        csas.to_vec()
    };
    let ks: Vec<usize> = if !ks.is_empty() {
        ks.to_vec()
    } else if !config.csa.k.is_empty() {
        config.csa.k.clone()
    } else {
        (1..=ws.grid().len()).collect()
    };
    let runs = prepare_all(&ws, &[config.scorer])?;
    let rows = sweep_rows(&ws, &runs, &csas, &ks)?;
    ensure_dir(&config.out_dir)?;
    write_file(&config.out_dir.join("sweep.csv"), sweep_csv(&rows))?;
    Ok(rows)
}

/// Column labels of a heatmap: one per (ISO, shutter) pair in canonical order.
pub fn heatmap_columns(grid: &ParamGrid) -> Vec<String> {
    let spec = grid.spec();
    spec.iso_levels
        .iter()
        .flat_map(|iso| spec.shutter_levels.iter().map(move |s| format!("iso{iso}@{s}")))
        .collect()
}

/// Scores laid out with one row per aperture and one column per (ISO, shutter).
pub fn heatmap_csv(grid: &ParamGrid, scores: &[f64]) -> Result<String> {
    if scores.len() != grid.len() {
        return Err(LensError::invariant(MODULE, "heatmap needs one score per option"));
    }
    let spec = grid.spec();
    let cols = spec.shutter_levels.len();
    let mut cells = vec![vec![f64::NAN; spec.iso_levels.len() * cols]; spec.aperture_levels.len()];
    for (id, &v) in scores.iter().enumerate() {
        let (i, s, a) = grid.axis_indices(id);
        cells[a][i * cols + s] = v;
    }
    let mut out = format!("aperture,{}\n", heatmap_columns(grid).join(","));
    for (a, row) in cells.iter().enumerate() {
        out.push_str(&format!("f/{}", spec.aperture_levels[a]));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// The 27 scores for one (scene, light) under the given model and scorer.
pub fn heatmap_scores(
    ws: &Workspace,
    model: &crate::perception::ClassifierModel,
    seed_value: u64,
    scene_id: &str,
    light: &LightCondition,
    scorer: ScorerId,
) -> Result<Vec<f64>> {
    let scenes = ws.test_scenes(seed_value)?;
    let scene = scenes
        .iter()
        .find(|s| s.scene_id == scene_id)
        .ok_or_else(|| LensError::config(MODULE, format!("unknown scene {scene_id:?}")))?;
    let cs = Workspace::capture_seed(seed_value, ws.config.mode, scene_id, light.id);
    let g = ws.evaluate_options(model, scene, light, cs, &[scorer])?;
    Ok(g.scores.into_iter().next().expect("one scorer"))
}

/// Writes one heatmap CSV per (scene, light) for the configured scorer. `None`
/// selects every scene or every configured light.
pub fn cmd_heatmap(
    config: &BenchConfig,
    seed_value: u64,
    scene_id: Option<&str>,
    light: Option<LightId>,
) -> Result<Vec<PathBuf>> {
    let ws = Workspace::new(config)?;
    let scenes = ws.test_scenes(seed_value)?;
    let ids: Vec<String> = match scene_id {
        Some(id) => {
            if !scenes.iter().any(|s| s.scene_id == id) {
                return Err(LensError::config(MODULE, format!("unknown scene {id:?}")));
            }
            vec![id.to_string()]
        }
        None => scenes.iter().map(|s| s.scene_id.clone()).collect(),
    };
    let lights: Vec<LightCondition> = match light {
        Some(l) => vec![l.condition()],
        None => ws.lights.clone(),
    };
    let model = ws.train_model(seed_value)?;
    ensure_dir(&config.out_dir)?;
    let mut written = Vec::new();
    for id in &ids {
        for l in &lights {
            let scores = heatmap_scores(&ws, &model, seed_value, id, l, config.scorer)?;
            let path = config
                .out_dir
                .join(format!("heatmap_{id}_{}_{}.csv", l.id.as_str(), config.scorer.as_str()));
            write_file(&path, heatmap_csv(ws.grid(), &scores)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

pub const ABLATION_HEADER: &str = "row,accuracy_mean,accuracy_std";

pub fn ablation_csv(report: &BenchReport) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in report.ablation.iter().flatten() {
        s.push_str(&format!("lens_{},{},{}\n", r.scorer, r.accuracy_mean, r.accuracy_std));
    }
    for r in &report.policies {
        s.push_str(&format!("{},{},{}\n", r.policy, r.accuracy_mean, r.accuracy_std));
    }
    s
}

/// Lens-full with every scorer, plus the baselines under the configured scorer.
/// Writes `ablation.json` and `ablation.csv`.
pub fn cmd_ablate(config: &BenchConfig) -> Result<BenchReport> {
    config.validate_knn_bank()?;
    let ws = Workspace::new(config)?;
    let runs = prepare_all(&ws, &ALL_SCORERS)?;
    let baselines = [Policy::OracleS, Policy::OracleF, Policy::Ae, Policy::Random];
    let mut report = build_report(&ws, &runs, config.scorer, &baselines)?;
    report.ablation = Some(ablation_rows(&ws, &runs, &ALL_SCORERS)?);
    ensure_dir(&config.out_dir)?;
    write_file(&config.out_dir.join("ablation.json"), report.to_json())?;
    write_file(&config.out_dir.join("ablation.csv"), ablation_csv(&report))?;
    Ok(report)
}

/// Writes the evaluation and training scene sets for one seed.
pub fn cmd_gen(config: &BenchConfig, seed_value: u64) -> Result<Vec<PathBuf>> {
    let ws = Workspace::new(config)?;
    ensure_dir(&config.out_dir)?;
    let test = config.out_dir.join(format!("scenes_seed{seed_value}.json"));
    let train = config.out_dir.join(format!("train_scenes_seed{seed_value}.json"));
    write_scene_set(&test, &ws.test_scenes(seed_value)?)?;
    write_scene_set(&train, &ws.train_scenes(seed_value)?)?;
    Ok(vec![test, train])
}

/// Trains the model for one seed and writes its checkpoint.
pub fn cmd_train(config: &BenchConfig, seed_value: u64) -> Result<PathBuf> {
    let ws = Workspace::new(config)?;
    let model = ws.train_model(seed_value)?;
    ensure_dir(&config.out_dir)?;
    let path = config.out_dir.join(format!("model_seed{seed_value}.json"));
    checkpoint::save(&path, &model)?;
    Ok(path)
}

/// Exact decimal rendering used in CSV cost columns.
pub fn cost_text(r: num_rational::Rational64) -> String {
    format_decimal(r, COST_DECIMALS)
}
