#![allow(dead_code)]

use lens_core::bench::BenchConfig;
use lens_core::param_space::{build_default_grid, CaptureCostModel};
use lens_core::scene_sim::LightId;
use lens_core::selection::{grid_costs, AeShot, OptionTable};
use rand::Rng;

/// A config small enough for debug-mode integration tests.
pub fn small_config(seeds: &[u64]) -> BenchConfig {
    BenchConfig {
        num_classes: 4,
        samples_per_class: 3,
        train_samples_per_class: 5,
        lights: vec![LightId::L1, LightId::L3, LightId::L7],
        seeds: seeds.to_vec(),
        ..BenchConfig::default()
    }
}

/// Random option tables over the default grid and costs. `ae` adds five AE shots
/// that copy grid rows.
pub fn random_tables<R: Rng>(rng: &mut R, groups: usize, p_correct: f64, ae: bool) -> Vec<OptionTable> {
    let grid = build_default_grid();
    let costs = grid_costs(&grid, &CaptureCostModel::default());
    (0..groups)
        .map(|g| {
            let n = grid.len();
            // Coarse scores so that ties happen.
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 8.0).collect();
            let correct: Vec<bool> = (0..n).map(|_| rng.random_bool(p_correct)).collect();
            let shots = if ae {
                (0..5)
                    .map(|_| {
                        let id = rng.random_range(0..n);
                        AeShot {
                            grid_id: Some(id),
                            score: scores[id],
                            correct: correct[id],
                            cost: costs[id],
                        }
                    })
                    .collect()
            } else {
                Vec::new()
            };
            OptionTable {
                scene_id: format!("s{g:03}"),
                light_id: ["L1", "L3", "L6"][g % 3].to_string(),
                scores,
                correct,
                costs: costs.clone(),
                ae: shots,
            }
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One criterion-4 trial: 3 models × 50 scenes × 27 options of random booleans.
/// Checks `oracle_f` against exhaustive enumeration, and each model's replayed
/// report against directly computed policy accuracies. Returns a description of
/// the first mismatch.
pub fn bruteforce_trial(seed: u64) -> Result<(), String> {
    use lens_core::exec::Jobs;
    use lens_core::replay::{parse_scores, replay_evaluate, ScoreMatrix};
    use lens_core::selection::{oracle_f, AeAggregation, CsaKind, Policy};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let grid = build_default_grid();
    let n = grid.len();
    let p = rng.random_range(0.05..0.6);
    let models: Vec<Vec<OptionTable>> = (0..3).map(|_| random_tables(&mut rng, 50, p, false)).collect();
    let tensors: Vec<Vec<Vec<bool>>> = models
        .iter()
        .map(|m| m.iter().map(|t| t.correct.clone()).collect())
        .collect();
    let costs = &models[0][0].costs;

    // Exhaustive: score every fixed option, keep the best by (count, -cost, -id).
    let mut best: Option<(usize, usize)> = None;
    for id in 0..n {
        let count = tensors.iter().flatten().filter(|row| row[id]).count();
        best = match best {
            None => Some((id, count)),
            Some((b, bc)) if count > bc || (count == bc && costs[id] < costs[b]) => Some((id, count)),
            keep => keep,
        };
    }
    let got = oracle_f(&tensors, costs).map_err(|e| e.to_string())?;
    if got != best.unwrap().0 {
        return Err(format!("oracle_f picked {got}, enumeration {}", best.unwrap().0));
    }

    let policies = [
        Policy::OracleS,
        Policy::OracleF,
        Policy::Random,
        Policy::Lens {
            csa: CsaKind::Full,
            k: n,
        },
    ];
    for (m, tables) in models.iter().enumerate() {
        let csv = ScoreMatrix::from_tables("bf", None, tables, &grid)
            .map_err(|e| e.to_string())?
            .to_csv();
        let matrix = parse_scores(&csv, "bf", &grid).map_err(|e| e.to_string())?;
        let report = replay_evaluate(
            &matrix,
            &policies,
            &grid,
            &[seed],
            AeAggregation::Top1,
            Jobs::SEQUENTIAL,
        )
        .map_err(|e| e.to_string())?;
        let rows = tables.len() as f64;
        let oracle_s = tables.iter().filter(|t| t.correct.iter().any(|&c| c)).count() as f64 / rows;
        let random = tables
            .iter()
            .map(|t| t.correct.iter().filter(|&&c| c).count() as f64 / n as f64)
            .sum::<f64>()
            / rows;
        let per_option: Vec<f64> = (0..n)
            .map(|id| tables.iter().filter(|t| t.correct[id]).count() as f64 / rows)
            .collect();
        let oracle_f_acc = per_option.iter().cloned().fold(0.0, f64::max);
        let lens = tables
            .iter()
            .filter(|t| {
                let mut b = 0;
                for i in 1..n {
                    if t.scores[i] > t.scores[b] {
                        b = i;
                    }
                }
                t.correct[b]
            })
            .count() as f64
            / rows;
        for (name, want) in [
            ("oracle_s", oracle_s),
            ("oracle_f", oracle_f_acc),
            ("random", random),
            ("lens_full", lens),
        ] {
            let have = report.accuracy(name).ok_or(format!("missing {name}"))?;
            if (have - want).abs() > 1e-12 {
                return Err(format!("model {m} {name}: replay {have} vs enumeration {want}"));
            }
        }
    }
    Ok(())
}
