//! Benchmark report: per-policy accuracy over seeds, cost, per-light breakdown,
//! scorer ablation and the config fingerprint.

use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::harness::{ConfidenceSeparation, SeedOutcomes};
use crate::error::{LensError, Result};
use crate::param_space::{format_decimal, ratio_to_f64, ParamId};
use crate::perception::ScorerId;
use crate::scene_sim::SceneMode;
use crate::selection::{AeAggregation, Policy};

const MODULE: &str = "bench_cli";

/// Fractional digits kept when rendering exact mean costs.
pub const COST_DECIMALS: u32 = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRow {
    pub policy: String,
    pub accuracy_mean: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub accuracy_std: f64,
    pub accuracy_per_seed: Vec<f64>,
    /// Mean capture cost per (scene, light) in seconds.
    pub mean_cost_s: f64,
    /// The same mean, rendered exactly to `COST_DECIMALS` digits.
    pub mean_cost_decimal: String,
    pub mean_candidates: f64,
    /// Accuracy per light id, averaged over seeds.
    pub per_light: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationRow {
    pub scorer: String,
    pub policy: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub accuracy_per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    /// "simulation" or "replay".
    pub source: String,
    /// Config fingerprint (simulation) or matrix fingerprint (replay).
    pub fingerprint: String,
    /// Scorer behind the Lens rows; unknown for replayed matrices without one.
    pub scorer: Option<ScorerId>,
    pub mode: Option<SceneMode>,
    pub ae_aggregation: AeAggregation,
    pub seeds: Vec<u64>,
    pub groups_per_seed: usize,
    pub oracle_f_choice: Vec<ParamId>,
    pub policies: Vec<PolicyRow>,
    pub ablation: Option<Vec<AblationRow>>,
    pub confidence_separation: Option<ConfidenceSeparation>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LensError::format(MODULE, format!("report: {e}")))
    }

    pub fn row(&self, policy: &str) -> Option<&PolicyRow> {
        self.policies.iter().find(|r| r.policy == policy)
    }

    pub fn accuracy(&self, policy: &str) -> Option<f64> {
        self.row(policy).map(|r| r.accuracy_mean)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates per-seed outcomes into one row per policy. `table_lights[t]` is the
/// light id of table t (same table order in every seed).
pub fn summarize(policies: &[Policy], table_lights: &[String], runs: &[SeedOutcomes]) -> Result<Vec<PolicyRow>> {
    if runs.is_empty() {
        return Err(LensError::invariant(MODULE, "no seeds to summarize"));
    }
    let light_ids: Vec<&String> = {
        let mut v: Vec<&String> = table_lights.iter().collect();
        v.sort();
        v.dedup();
        v
    };
    let mut rows = Vec::with_capacity(policies.len());
    for (p, policy) in policies.iter().enumerate() {
        let mut per_seed = Vec::with_capacity(runs.len());
        let mut cost_sum = Rational64::zero();
        let mut candidates = 0.0;
        let mut light_acc: BTreeMap<String, f64> = BTreeMap::new();
        for run in runs {
            if run.outcomes.len() != table_lights.len() {
                return Err(LensError::invariant(MODULE, "table count differs between seeds"));
            }
            let n = run.outcomes.len();
            if n == 0 {
                return Err(LensError::invariant(MODULE, "no tables"));
            }
            let mut acc = 0.0;
            let mut seed_cost = Rational64::zero();
            let mut seed_cand = 0usize;
            let mut by_light: BTreeMap<&String, (f64, usize)> = BTreeMap::new();
            for (t, row) in run.outcomes.iter().enumerate() {
                let o = &row[p];
                debug_assert_eq!(o.policy, *policy);
                acc += o.accuracy;
                seed_cost += o.cost;
                seed_cand += o.candidates;
                let e = by_light.entry(&table_lights[t]).or_insert((0.0, 0));
                e.0 += o.accuracy;
                e.1 += 1;
            }
            per_seed.push(acc / n as f64);
            cost_sum += seed_cost / Rational64::from_integer(n as i64);
            candidates += seed_cand as f64 / n as f64;
            for (l, (a, c)) in by_light {
                *light_acc.entry(l.clone()).or_insert(0.0) += a / c as f64;
            }
        }
        let seeds = runs.len();
        let mean_cost = cost_sum / Rational64::from_integer(seeds as i64);
        let (accuracy_mean, accuracy_std) = mean_std(&per_seed);
        let per_light = light_ids
            .iter()
            .map(|l| ((*l).clone(), light_acc.get(*l).copied().unwrap_or(0.0) / seeds as f64))
            .collect();
        rows.push(PolicyRow {
            policy: policy.id(),
            accuracy_mean,
            accuracy_std,
            accuracy_per_seed: per_seed,
            mean_cost_s: ratio_to_f64(mean_cost),
            mean_cost_decimal: format_decimal(mean_cost, COST_DECIMALS),
            mean_candidates: candidates / seeds as f64,
            per_light,
        });
    }
    Ok(rows)
}

/// The mean-cost of one policy as an exact rational, for callers that need it.
pub fn mean_cost_exact(policy_index: usize, runs: &[SeedOutcomes]) -> Rational64 {
    let mut total = Rational64::zero();
    for run in runs {
        let n = run.outcomes.len().max(1) as i64;
        let s = run
            .outcomes
            .iter()
            .fold(Rational64::zero(), |a, row| a + row[policy_index].cost);
        total += s / Rational64::from_integer(n);
    }
    total / Rational64::from_integer(runs.len().max(1) as i64)
}
