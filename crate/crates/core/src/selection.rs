//! Candidate selection (CSA1/2/3), the Lens argmax, and the baseline/oracle policies.
//!
//! Policies come in two flavours. The camera-facing functions ([`lens_select`],
//! [`policy_ae`]) render and score captures themselves. The table-facing
//! [`evaluate_group`] works on a precomputed per-option table, which is what the
//! benchmark harness and replay both use so that they share one code path.

use std::fmt;

use num_rational::Rational64;
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LensError, Result};
use crate::param_space::{
    capture_cost, format_seconds, partition_grid, ratio_to_f64, CaptureCostModel, ParamGrid, ParamId, SensorParams,
};
use crate::perception::{score, ClassifierModel, Evaluated, QualityScore, ScorerId};
use crate::scene_sim::{auto_expose, render, CapturedImage, ExposureConstants, LightCondition, Scene};
use crate::seed;

const MODULE: &str = "selection";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsaKind {
    Full,
    Csa1,
    Csa2,
    Csa3,
}

impl CsaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CsaKind::Full => "full",
            CsaKind::Csa1 => "csa1",
            CsaKind::Csa2 => "csa2",
            CsaKind::Csa3 => "csa3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CsaKind::Full),
            "csa1" => Ok(CsaKind::Csa1),
            "csa2" => Ok(CsaKind::Csa2),
            "csa3" => Ok(CsaKind::Csa3),
            _ => Err(LensError::config(MODULE, format!("unknown csa {s:?}"))),
        }
    }
}

/// The candidate options a Lens run will capture.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePlan {
    pub algorithm: CsaKind,
    pub k: usize,
    /// Option ids in canonical order.
    pub chosen: Vec<ParamId>,
    pub total_cost_s: Rational64,
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(LensError::config(MODULE, format!("k = {k} outside [1, {n}]")));
    }
    Ok(())
}

fn finish(algorithm: CsaKind, mut chosen: Vec<ParamId>, costs: &[Rational64]) -> CandidatePlan {
    chosen.sort_unstable();
    let total_cost_s = chosen.iter().fold(Rational64::zero(), |acc, &i| acc + costs[i]);
    CandidatePlan {
        algorithm,
        k: chosen.len(),
        chosen,
        total_cost_s,
    }
}

pub fn grid_costs(grid: &ParamGrid, cost: &CaptureCostModel) -> Vec<Rational64> {
    grid.options().iter().map(|p| capture_cost(p, cost)).collect()
}

pub fn plan_full(grid: &ParamGrid, cost: &CaptureCostModel) -> CandidatePlan {
    finish(CsaKind::Full, (0..grid.len()).collect(), &grid_costs(grid, cost))
}

/// CSA1: k options uniformly at random without replacement.
pub fn plan_csa1<R: Rng>(grid: &ParamGrid, k: usize, cost: &CaptureCostModel, rng: &mut R) -> Result<CandidatePlan> {
    let costs = grid_costs(grid, cost);
    Ok(finish(CsaKind::Csa1, sample_ids(grid.len(), k, rng)?, &costs))
}

pub fn sample_ids<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Vec<ParamId>> {
    check_k(k, n)?;
    let mut ids: Vec<ParamId> = (0..n).collect();
    let (picked, _) = ids.partial_shuffle(rng, k);
    Ok(picked.to_vec())
}

/// CSA2: partitions the grid into cells and deals the k picks round-robin over
/// the cells in order, sampling without replacement inside each cell.
pub fn plan_csa2<R: Rng>(grid: &ParamGrid, k: usize, cost: &CaptureCostModel, rng: &mut R) -> Result<CandidatePlan> {
    let costs = grid_costs(grid, cost);
    Ok(finish(CsaKind::Csa2, grid_round_robin(grid, k, rng)?, &costs))
}

pub fn grid_round_robin<R: Rng>(grid: &ParamGrid, k: usize, rng: &mut R) -> Result<Vec<ParamId>> {
    check_k(k, grid.len())?;
    let mut cells = partition_grid(grid, k)?;
    for cell in &mut cells {
        cell.shuffle(rng);
    }
    let mut cursors = vec![0usize; cells.len()];
    let mut picked = Vec::with_capacity(k);
    while picked.len() < k {
        let mut progressed = false;
        for (cell, cur) in cells.iter().zip(cursors.iter_mut()) {
            if picked.len() == k {
                break;
            }
            if *cur < cell.len() {
                picked.push(cell[*cur]);
                *cur += 1;
                progressed = true;
            }
        }
        if !progressed {
            return Err(LensError::invariant(MODULE, "grid cells exhausted before k picks"));
        }
    }
    Ok(picked)
}

/// CSA3: the k cheapest options; ties at the cost boundary are broken uniformly
/// at random.
pub fn plan_csa3<R: Rng>(grid: &ParamGrid, k: usize, cost: &CaptureCostModel, rng: &mut R) -> Result<CandidatePlan> {
    let costs = grid_costs(grid, cost);
    Ok(finish(CsaKind::Csa3, cheapest_k(&costs, k, rng)?, &costs))
}

pub fn cheapest_k<C: PartialOrd + Copy, R: Rng>(costs: &[C], k: usize, rng: &mut R) -> Result<Vec<ParamId>> {
    check_k(k, costs.len())?;
    let mut order: Vec<ParamId> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let boundary = costs[order[k - 1]];
    let below: Vec<ParamId> = order.iter().copied().filter(|&i| costs[i] < boundary).collect();
    let mut tied: Vec<ParamId> = order.iter().copied().filter(|&i| costs[i] == boundary).collect();
    let need = k - below.len();
    let (extra, _) = tied.partial_shuffle(rng, need);
    let mut picked = below;
    picked.extend_from_slice(extra);
    Ok(picked)
}

pub fn make_plan<R: Rng>(
    kind: CsaKind,
    grid: &ParamGrid,
    k: usize,
    cost: &CaptureCostModel,
    rng: &mut R,
) -> Result<CandidatePlan> {
    match kind {
        CsaKind::Full => Ok(plan_full(grid, cost)),
        CsaKind::Csa1 => plan_csa1(grid, k, cost, rng),
        CsaKind::Csa2 => plan_csa2(grid, k, cost, rng),
        CsaKind::Csa3 => plan_csa3(grid, k, cost, rng),
    }
}

/// Candidate ids for a CSA over an arbitrary per-option cost vector (replay).
pub fn plan_ids<R: Rng>(
    kind: CsaKind,
    grid: &ParamGrid,
    k: usize,
    costs: &[Rational64],
    rng: &mut R,
) -> Result<Vec<ParamId>> {
    let mut ids = match kind {
        CsaKind::Full => (0..grid.len()).collect(),
        CsaKind::Csa1 => sample_ids(grid.len(), k, rng)?,
        CsaKind::Csa2 => grid_round_robin(grid, k, rng)?,
        CsaKind::Csa3 => cheapest_k(costs, k, rng)?,
    };
    ids.sort_unstable();
    Ok(ids)
}

/// Argmax of `score` over `candidates`; ties go to the lowest option id.
pub fn argmax_candidate(candidates: &[ParamId], score: impl Fn(ParamId) -> f64) -> Option<ParamId> {
    let mut best: Option<(ParamId, f64)> = None;
    for &id in candidates {
        let s = score(id);
        best = match best {
            None => Some((id, s)),
            Some((bid, bs)) if s > bs || (s == bs && id < bid) => Some((id, s)),
            keep => keep,
        };
    }
    best.map(|(id, _)| id)
}

/// One policy decision for one (scene, light).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionResult {
    pub scene_id: String,
    pub light_id: String,
    pub policy: String,
    pub param_id: ParamId,
    pub iso: u32,
    pub shutter: String,
    pub aperture: f64,
    pub scorer: ScorerId,
    pub score: f64,
    pub predicted_class: usize,
    pub correct: bool,
    pub candidates_evaluated: usize,
    pub capture_cost_s: f64,
}

/// The simulated camera: grid, radiometry and cost model.
#[derive(Debug, Clone)]
pub struct Camera {
    pub grid: ParamGrid,
    pub constants: ExposureConstants,
    pub cost: CaptureCostModel,
}

impl Camera {
    /// Capture noise for one option, keyed by the per-(scene, light) capture seed.
    pub fn option_noise_seed(capture_seed: u64, id: ParamId) -> u64 {
        seed::derive(capture_seed, &["option", &id.to_string()])
    }

    pub fn capture(&self, scene: &Scene, light: &LightCondition, id: ParamId, capture_seed: u64) -> CapturedImage {
        render(
            scene,
            light,
            &self.grid.options()[id],
            &self.constants,
            Self::option_noise_seed(capture_seed, id),
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn result_for(
    scene: &Scene,
    light: &LightCondition,
    policy: &str,
    params: &SensorParams,
    param_id: ParamId,
    quality: QualityScore,
    predicted: usize,
    candidates: usize,
    cost: Rational64,
) -> SelectionResult {
    SelectionResult {
        scene_id: scene.scene_id.clone(),
        light_id: light.id.as_str().to_string(),
        policy: policy.to_string(),
        param_id,
        iso: params.iso,
        shutter: params.shutter_s.to_string(),
        aperture: params.aperture_f,
        scorer: quality.scorer,
        score: quality.value,
        predicted_class: predicted,
        correct: predicted == scene.class_id,
        candidates_evaluated: candidates,
        capture_cost_s: ratio_to_f64(cost),
    }
}

/// Captures every candidate, scores each capture, keeps the best one. The cost is
/// the whole plan's, since every candidate was shot.
pub fn lens_select_with<F>(
    scene: &Scene,
    light: &LightCondition,
    plan: &CandidatePlan,
    camera: &Camera,
    capture_seed: u64,
    scorer_id: ScorerId,
    score_fn: F,
) -> Result<SelectionResult>
where
    F: Fn(&CapturedImage) -> Result<(f64, usize)>,
{
    if plan.chosen.is_empty() {
        return Err(LensError::config(MODULE, "empty candidate plan"));
    }
    let mut scored = Vec::with_capacity(plan.chosen.len());
    for &id in &plan.chosen {
        let img = camera.capture(scene, light, id, capture_seed);
        scored.push((id, score_fn(&img)?));
    }
    let pos = |id: ParamId| scored.iter().position(|(i, _)| *i == id).expect("candidate scored");
    let best = argmax_candidate(&plan.chosen, |id| scored[pos(id)].1 .0).expect("non-empty plan");
    let (value, predicted) = scored[pos(best)].1;
    Ok(result_for(
        scene,
        light,
        &format!("lens_{}", plan.algorithm.as_str()),
        &camera.grid.options()[best],
        best,
        QualityScore {
            value,
            scorer: scorer_id,
        },
        predicted,
        plan.chosen.len(),
        plan.total_cost_s,
    ))
}

pub fn lens_select(
    scene: &Scene,
    light: &LightCondition,
    plan: &CandidatePlan,
    camera: &Camera,
    scorer: ScorerId,
    model: &ClassifierModel,
    capture_seed: u64,
) -> Result<SelectionResult> {
    lens_select_with(scene, light, plan, camera, capture_seed, scorer, |img| {
        let e = Evaluated::of_image(model, img);
        Ok((score(model, &e, scorer)?.value, e.predicted))
    })
}

/// How the five auto-exposure shots turn into one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeAggregation {
    /// The camera's first-ranked shot.
    #[default]
    Top1,
    /// The highest-scoring of the five shots.
    BestOf5,
}

impl AeAggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            AeAggregation::Top1 => "top1",
            AeAggregation::BestOf5 => "best_of5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(AeAggregation::Top1),
            "best_of5" => Ok(AeAggregation::BestOf5),
            _ => Err(LensError::config(MODULE, format!("unknown ae aggregation {s:?}"))),
        }
    }
}

/// Auto-exposure baseline: shoots the five AE-ranked options and predicts from
/// the top-ranked one (or the best-scoring one). Cost covers all five shots.
pub fn policy_ae(
    scene: &Scene,
    light: &LightCondition,
    camera: &Camera,
    model: &ClassifierModel,
    scorer: ScorerId,
    capture_seed: u64,
    aggregation: AeAggregation,
) -> Result<SelectionResult> {
    let ranked = auto_expose(scene, light, &camera.grid, &camera.constants);
    let costs = grid_costs(&camera.grid, &camera.cost);
    let cost = ranked.iter().fold(Rational64::zero(), |acc, &i| acc + costs[i]);
    let mut evals = Vec::with_capacity(ranked.len());
    for &id in &ranked {
        let e = Evaluated::of_image(model, &camera.capture(scene, light, id, capture_seed));
        let q = score(model, &e, scorer)?;
        evals.push((id, q, e.predicted));
    }
    let pick = match aggregation {
        AeAggregation::Top1 => 0,
        AeAggregation::BestOf5 => {
            let mut best = 0;
            for (i, e) in evals.iter().enumerate() {
                if e.1.value > evals[best].1.value {
                    best = i;
                }
            }
            best
        }
    };
    let (id, q, predicted) = evals[pick];
    Ok(result_for(
        scene,
        light,
        "ae",
        &camera.grid.options()[id],
        id,
        q,
        predicted,
        ranked.len(),
        cost,
    ))
}

/// Random baseline: the exact mean correctness over all options.
pub fn policy_random(correct: &[bool]) -> f64 {
    if correct.is_empty() {
        return 0.0;
    }
    correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64
}

/// Oracle-S: the first correct option in canonical order, if any.
pub fn oracle_s(correct: &[bool]) -> (ParamId, bool) {
    match correct.iter().position(|&c| c) {
        Some(i) => (i, true),
        None => (0, false),
    }
}

/// Oracle-F: the single option with the most correct rows pooled over all models
/// and scenes. Ties go to the cheaper option, then the lower id.
pub fn oracle_f<C: PartialOrd + Copy>(tensors: &[Vec<Vec<bool>>], costs: &[C]) -> Result<ParamId> {
    let n = costs.len();
    if n == 0 {
        return Err(LensError::config(MODULE, "no options"));
    }
    let mut counts = vec![0usize; n];
    for rows in tensors {
        for row in rows {
            if row.len() != n {
                return Err(LensError::format(
                    MODULE,
                    format!("option axis mismatch: row has {} options, expected {n}", row.len()),
                ));
            }
            for (c, &ok) in counts.iter_mut().zip(row) {
                *c += usize::from(ok);
            }
        }
    }
    let mut best = 0;
    for i in 1..n {
        let better = counts[i] > counts[best]
            || (counts[i] == counts[best] && costs[i].partial_cmp(&costs[best]) == Some(std::cmp::Ordering::Less));
        if better {
            best = i;
        }
    }
    Ok(best)
}

/// A benchmark policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    OracleS,
    OracleF,
    Ae,
    Random,
    Lens { csa: CsaKind, k: usize },
}

impl Policy {
    pub fn id(&self) -> String {
        match self {
            Policy::OracleS => "oracle_s".into(),
            Policy::OracleF => "oracle_f".into(),
            Policy::Ae => "ae".into(),
            Policy::Random => "random".into(),
            Policy::Lens { csa: CsaKind::Full, .. } => "lens_full".into(),
            Policy::Lens { csa, k } => format!("lens_{}_k{k}", csa.as_str()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "oracle_s" => return Ok(Policy::OracleS),
            "oracle_f" => return Ok(Policy::OracleF),
            "ae" => return Ok(Policy::Ae),
            "random" => return Ok(Policy::Random),
            "lens_full" | "lens" => {
                return Ok(Policy::Lens {
                    csa: CsaKind::Full,
                    k: 0,
                })
            }
            _ => {}
        }
        let bad = || LensError::config(MODULE, format!("unknown policy {s:?}"));
        let rest = s.strip_prefix("lens_").ok_or_else(bad)?;
        let (csa, k) = rest.split_once("_k").ok_or_else(bad)?;
        Ok(Policy::Lens {
            csa: CsaKind::parse(csa)?,
            k: k.parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

/// One auto-exposure shot in an option table. In simulation every shot is one of
/// the grid options; replayed data may carry shots outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AeShot {
    pub grid_id: Option<ParamId>,
    pub score: f64,
    pub correct: bool,
    pub cost: Rational64,
}

/// Per-option outcomes for one (scene, light): the input of table-based policy
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionTable {
    pub scene_id: String,
    pub light_id: String,
    pub scores: Vec<f64>,
    pub correct: Vec<bool>,
    pub costs: Vec<Rational64>,
    /// Auto-exposure shots in camera rank order (empty when unavailable).
    pub ae: Vec<AeShot>,
}

/// What a policy picked: a grid option or one of the auto-exposure shots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chosen {
    Grid(ParamId),
    Ae(usize),
}

/// Outcome of one policy on one table.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutcome {
    pub policy: Policy,
    pub chosen: Chosen,
    /// 0/1 for single-pick policies, the mean over options for Random.
    pub accuracy: f64,
    pub cost: Rational64,
    pub candidates: usize,
}

/// Per-run context for table evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub grid: &'a ParamGrid,
    pub master_seed: u64,
    pub oracle_f_choice: Option<ParamId>,
    pub ae: AeAggregation,
}

/// Seed of the CSA stream for one (scene, light, policy).
pub fn csa_seed(master: u64, scene_id: &str, light_id: &str, policy: &Policy) -> u64 {
    seed::derive(master, &["csa", scene_id, light_id, &policy.id()])
}

pub fn evaluate_group(table: &OptionTable, policy: Policy, ctx: &EvalContext<'_>) -> Result<PolicyOutcome> {
    let n = table.scores.len();
    if n == 0 || table.correct.len() != n || table.costs.len() != n {
        return Err(LensError::invariant(MODULE, "inconsistent option table"));
    }
    let single = |id: ParamId, cost: Rational64, candidates: usize| PolicyOutcome {
        policy,
        chosen: Chosen::Grid(id),
        accuracy: if table.correct[id] { 1.0 } else { 0.0 },
        cost,
        candidates,
    };
    Ok(match policy {
        Policy::OracleS => {
            let (id, _) = oracle_s(&table.correct);
            single(id, table.costs[id], n)
        }
        Policy::OracleF => {
            let id = ctx
                .oracle_f_choice
                .ok_or_else(|| LensError::invariant(MODULE, "oracle_f choice not computed"))?;
            single(id, table.costs[id], 1)
        }
        Policy::Random => {
            let total = table.costs.iter().fold(Rational64::zero(), |a, c| a + c);
            PolicyOutcome {
                policy,
                chosen: Chosen::Grid(0),
                accuracy: policy_random(&table.correct),
                cost: total / Rational64::from_integer(n as i64),
                candidates: 1,
            }
        }
        Policy::Ae => {
            if table.ae.is_empty() {
                return Err(LensError::config(MODULE, "auto-exposure shots not available"));
            }
            let cost = table.ae.iter().fold(Rational64::zero(), |a, s| a + s.cost);
            let pick = match ctx.ae {
                AeAggregation::Top1 => 0,
                AeAggregation::BestOf5 => {
                    let mut best = 0;
                    for (i, s) in table.ae.iter().enumerate() {
                        if s.score > table.ae[best].score {
                            best = i;
                        }
                    }
                    best
                }
            };
            PolicyOutcome {
                policy,
                chosen: Chosen::Ae(pick),
                accuracy: if table.ae[pick].correct { 1.0 } else { 0.0 },
                cost,
                candidates: table.ae.len(),
            }
        }
        Policy::Lens { csa, k } => {
            let mut rng = seed::stream(
                csa_seed(ctx.master_seed, &table.scene_id, &table.light_id, &policy),
                &[],
            );
            let ids = plan_ids(csa, ctx.grid, k, &table.costs, &mut rng)?;
            let cost = ids.iter().fold(Rational64::zero(), |a, &i| a + table.costs[i]);
            let id = argmax_candidate(&ids, |i| table.scores[i]).expect("non-empty plan");
            single(id, cost, ids.len())
        }
    })
}

/// Renders a result record for a simulated table outcome. `predicted` maps a grid
/// option to the class the model predicted for its capture.
pub fn outcome_record(
    table: &OptionTable,
    outcome: &PolicyOutcome,
    grid: &ParamGrid,
    scorer: ScorerId,
    predicted: impl Fn(ParamId) -> usize,
) -> SelectionResult {
    let (id, score) = match outcome.chosen {
        Chosen::Grid(id) => (id, table.scores[id]),
        Chosen::Ae(i) => (table.ae[i].grid_id.unwrap_or(0), table.ae[i].score),
    };
    let p = &grid.options()[id];
    SelectionResult {
        scene_id: table.scene_id.clone(),
        light_id: table.light_id.clone(),
        policy: outcome.policy.id(),
        param_id: id,
        iso: p.iso,
        shutter: p.shutter_s.to_string(),
        aperture: p.aperture_f,
        scorer,
        score,
        predicted_class: predicted(id),
        correct: outcome.accuracy >= 1.0,
        candidates_evaluated: outcome.candidates,
        capture_cost_s: ratio_to_f64(outcome.cost),
    }
}

pub fn describe_plan(plan: &CandidatePlan) -> String {
    format!(
        "{} k={} cost={}s",
        plan.algorithm.as_str(),
        plan.k,
        format_seconds(plan.total_cost_s)
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::build_default_grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn csa1_extremes() {
        let g = build_default_grid();
        let c = CaptureCostModel::default();
        let all = plan_csa1(&g, 27, &c, &mut rng(1)).unwrap();
        assert_eq!(all.chosen, (0..27).collect::<Vec<_>>());
        assert_eq!(all.total_cost_s, Rational64::new(2409, 1000));
        let a = plan_csa1(&g, 1, &c, &mut rng(5)).unwrap();
        let b = plan_csa1(&g, 1, &c, &mut rng(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chosen.len(), 1);
        assert!(plan_csa1(&g, 0, &c, &mut rng(1)).is_err());
        assert!(plan_csa1(&g, 28, &c, &mut rng(1)).is_err());
    }

    #[test]
    fn csa2_covers_cells() {
        let g = build_default_grid();
        let c = CaptureCostModel::default();
        let all = plan_csa2(&g, 27, &c, &mut rng(2)).unwrap();
        assert_eq!(all.chosen, (0..27).collect::<Vec<_>>());
        let cells = partition_grid(&g, 8).unwrap();
        for s in 0..50 {
            let p = plan_csa2(&g, 8, &c, &mut rng(s)).unwrap();
            for cell in &cells {
                assert_eq!(p.chosen.iter().filter(|id| cell.contains(id)).count(), 1);
            }
        }
        // Second round skips the exhausted singleton cell.
        let p = plan_csa2(&g, 12, &c, &mut rng(3)).unwrap();
        assert_eq!(p.chosen.len(), 12);
        let mut d = p.chosen.clone();
        d.dedup();
        assert_eq!(d.len(), 12);
        assert!(plan_csa2(&g, 0, &c, &mut rng(1)).is_err());
    }

    #[test]
    fn csa3_cost_ordering() {
        let g = build_default_grid();
        let c = CaptureCostModel::default();
        let p18 = plan_csa3(&g, 18, &c, &mut rng(4)).unwrap();
        assert_eq!(p18.total_cost_s, Rational64::new(159, 1000));
        assert!(p18
            .chosen
            .iter()
            .all(|&i| g.options()[i].shutter_s.seconds() < Rational64::new(1, 4)));
        let p9 = plan_csa3(&g, 9, &c, &mut rng(4)).unwrap();
        assert_eq!(p9.total_cost_s, Rational64::new(9, 1000));
        assert!(p9
            .chosen
            .iter()
            .all(|&i| g.options()[i].shutter_s.seconds() == Rational64::new(1, 1000)));
    }

    #[test]
    fn csa3_boundary_ties_are_uniform() {
        // k = 10: nine 1/1000 s options plus one of the nine 1/60 s options, each
        // with probability 1/9.
        let g = build_default_grid();
        let c = CaptureCostModel::default();
        let sixtieth: Vec<ParamId> = (0..27)
            .filter(|&i| g.options()[i].shutter_s.seconds() == Rational64::new(1, 60))
            .collect();
        let mut counts = vec![0usize; 27];
        let trials = 20_000;
        for s in 0..trials {
            let p = plan_csa3(&g, 10, &c, &mut rng(s)).unwrap();
            let extra: Vec<_> = p.chosen.iter().filter(|i| sixtieth.contains(i)).collect();
            assert_eq!(extra.len(), 1);
            counts[*extra[0]] += 1;
        }
        for &i in &sixtieth {
            let f = counts[i] as f64 / trials as f64;
            assert!((f - 1.0 / 9.0).abs() < 0.02, "option {i}: {f}");
        }
    }

    #[test]
    fn argmax_tie_breaks_to_lowest_id() {
        let scores = [0.5, 0.9, 0.9, 0.1];
        assert_eq!(argmax_candidate(&[3, 2, 1, 0], |i| scores[i]), Some(1));
        assert_eq!(argmax_candidate(&[3], |i| scores[i]), Some(3));
        assert_eq!(argmax_candidate(&[], |i| scores[i]), None);
    }

    #[test]
    fn random_and_oracles() {
        assert_eq!(policy_random(&[true; 27]), 1.0);
        assert_eq!(policy_random(&[false; 27]), 0.0);
        let mut nine = [false; 27];
        nine[..9].iter_mut().for_each(|c| *c = true);
        assert!((policy_random(&nine) - 1.0 / 3.0).abs() < 1e-15);

        assert_eq!(oracle_s(&[false; 27]), (0, false));
        let mut one = [false; 27];
        one[13] = true;
        assert_eq!(oracle_s(&one), (13, true));
    }

    #[test]
    fn oracle_f_rules() {
        let g = build_default_grid();
        let costs = grid_costs(&g, &CaptureCostModel::default());
        let row = |ids: &[usize]| (0..27).map(|i| ids.contains(&i)).collect::<Vec<bool>>();
        let t = vec![vec![row(&[5]); 4], vec![row(&[5]); 3]];
        assert_eq!(oracle_f(&t, &costs).unwrap(), 5);
        // Option 0 (1/4 s) and option 7 (1/1000 s) tie: the shorter shutter wins.
        let t = vec![vec![row(&[0, 7]); 5]];
        assert_eq!(oracle_f(&t, &costs).unwrap(), 7);
        let bad = vec![vec![vec![true; 26]]];
        assert!(oracle_f(&bad, &costs).is_err());
    }

    #[test]
    fn policy_ids_round_trip() {
        for p in [
            Policy::OracleS,
            Policy::OracleF,
            Policy::Ae,
            Policy::Random,
            Policy::Lens {
                csa: CsaKind::Csa2,
                k: 6,
            },
            Policy::Lens {
                csa: CsaKind::Csa3,
                k: 18,
            },
        ] {
            assert_eq!(Policy::parse(&p.id()).unwrap(), p);
        }
        assert_eq!(
            Policy::Lens {
                csa: CsaKind::Full,
                k: 27
            }
            .id(),
            "lens_full"
        );
        assert!(Policy::parse("lens_csa9_k2").is_err());
        assert!(Policy::parse("best").is_err());
    }

    #[test]
    fn injected_scorer_wins() {
        use crate::scene_sim::{generate_dataset, LightId, SceneMode};
        let camera = Camera {
            grid: build_default_grid(),
            constants: ExposureConstants::default(),
            cost: CaptureCostModel::default(),
        };
        let scene = generate_dataset(2, 1, SceneMode::Reflective, 1).unwrap().remove(0);
        let light = LightId::L1.condition();
        let plan = plan_full(&camera.grid, &camera.cost);
        // Score = 1 only for the ISO 2000, 1/60 s, f9.0 capture.
        let r = lens_select_with(&scene, &light, &plan, &camera, 3, ScorerId::Confidence, |img| {
            let hit =
                img.params.iso == 2000 && img.params.shutter_s.to_string() == "1/60" && img.params.aperture_f == 9.0;
            Ok((if hit { 1.0 } else { 0.0 }, 0))
        })
        .unwrap();
        assert_eq!(r.param_id, 13);
        assert_eq!(r.candidates_evaluated, 27);
        assert!((r.capture_cost_s - 2.409).abs() < 1e-12);

        let single = CandidatePlan {
            algorithm: CsaKind::Csa1,
            k: 1,
            chosen: vec![20],
            total_cost_s: Rational64::new(1, 60),
        };
        let r = lens_select_with(&scene, &light, &single, &camera, 3, ScorerId::Confidence, |_| {
            Ok((-5.0, 1))
        })
        .unwrap();
        assert_eq!(r.param_id, 20);
        assert!(r.correct == (scene.class_id == 1));
    }
}
