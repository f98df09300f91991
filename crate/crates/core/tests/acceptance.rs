//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::fs;
use std::process::ExitCode;

use lens_core::bench::commands::{ablation_rows, build_report, prepare_all, simulate};
use lens_core::bench::harness::{confidence_separation, SeedRun};
use lens_core::bench::{cmd_run, BenchConfig, Workspace};
use lens_core::exec::Jobs;
use lens_core::param_space::{build_default_grid, format_decimal, ratio_to_f64, CaptureCostModel};
use lens_core::perception::model::{fit_head, loss_and_gradient, TrainHyper};
use lens_core::perception::scorers::{projection_norm, softmax};
use lens_core::perception::{FeatureVector, ScorerId, ALL_SCORERS};
use lens_core::replay::{replay_evaluate, ScoreMatrix};
use lens_core::scene_sim::{pre_noise_exposure, LightId, SceneMode, ALL_LIGHTS};
use lens_core::selection::{make_plan, AeAggregation, Chosen, CsaKind, Policy};
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = (bool, String);

const TOL: f64 = 1e-12;

fn default_config() -> BenchConfig {
    BenchConfig::default()
}

/// Prepared default-benchmark runs shared by several criteria.
struct Shared {
    ws: Workspace,
    runs: Vec<SeedRun>,
}

fn c1_costs() -> Verdict {
    let grid = build_default_grid();
    let cost = CaptureCostModel::default();
    let full = make_plan(CsaKind::Full, &grid, 27, &cost, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let csa3 = make_plan(CsaKind::Csa3, &grid, 18, &cost, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let trials = 10_000u64;
    let mut means = Vec::new();
    for csa in [CsaKind::Csa1, CsaKind::Csa2] {
        let total: f64 = (0..trials)
            .map(|s| {
                ratio_to_f64(
                    make_plan(csa, &grid, 6, &cost, &mut ChaCha8Rng::seed_from_u64(s))
                        .unwrap()
                        .total_cost_s,
                )
            })
            .sum();
        means.push(total / trials as f64);
    }
    let ok = full.total_cost_s == Rational64::new(2409, 1000)
        && csa3.total_cost_s == Rational64::new(159, 1000)
        && means.iter().all(|m| (m - 0.5353).abs() <= 0.02);
    (
        ok,
        format!(
            "full {} s, csa3 k=18 {} s, csa1 k=6 mean {:.4} s, csa2 k=6 mean {:.4} s over {trials} seeds",
            format_decimal(full.total_cost_s, 9),
            format_decimal(csa3.total_cost_s, 9),
            means[0],
            means[1]
        ),
    )
}

fn random_config(rng: &mut ChaCha8Rng) -> BenchConfig {
    let mut lights: Vec<LightId> = ALL_LIGHTS
        .iter()
        .map(|l| l.id)
        .filter(|_| rng.random_bool(0.4))
        .collect();
    if lights.is_empty() {
        lights.push(LightId::L1);
    }
    let num_classes = rng.random_range(2..=5);
    let mut train_samples_per_class = rng.random_range(2..=4);
    // kNN needs a feature bank of at least its k.
    while num_classes * train_samples_per_class * lights.len() < 10 {
        train_samples_per_class += 1;
    }
    let csa = [CsaKind::Csa1, CsaKind::Csa2, CsaKind::Csa3][rng.random_range(0..3)];
    BenchConfig {
        num_classes,
        samples_per_class: rng.random_range(1..=3),
        train_samples_per_class,
        mode: if rng.random_bool(0.5) {
            SceneMode::Luminous
        } else {
            SceneMode::Reflective
        },
        lights,
        scorer: ALL_SCORERS[rng.random_range(0..ALL_SCORERS.len())],
        ae_aggregation: if rng.random_bool(0.5) {
            AeAggregation::Top1
        } else {
            AeAggregation::BestOf5
        },
        csa: lens_core::bench::config::CsaSpec {
            algorithm: csa,
            k: vec![rng.random_range(1..=27), rng.random_range(1..=27)],
        },
        seeds: vec![rng.random_range(1..1000), rng.random_range(1000..2000)],
        ..BenchConfig::default()
    }
}

fn oracle_s_on_top(report: &lens_core::bench::BenchReport) -> Option<String> {
    let top = report.row("oracle_s")?;
    for row in &report.policies {
        for (s, (&a, &o)) in row.accuracy_per_seed.iter().zip(&top.accuracy_per_seed).enumerate() {
            if a > o + TOL {
                return Some(format!("{} beats oracle_s on seed index {s}", row.policy));
            }
        }
    }
    None
}

fn c2_oracle_dominance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let configs = 20;
    for i in 0..configs {
        let cfg = random_config(&mut rng);
        let ws = Workspace::new(&cfg).unwrap();
        let runs = prepare_all(&ws, &[cfg.scorer]).unwrap();
        let policies = cfg.policy_list().unwrap();
        let report = build_report(&ws, &runs, cfg.scorer, &policies).unwrap();
        if let Some(msg) = oracle_s_on_top(&report) {
            return (false, format!("simulated config {i}: {msg}"));
        }
        for run in &runs {
            let tables = run.tables(cfg.scorer, &ws.costs).unwrap();
            let matrix = ScoreMatrix::from_tables("acc", Some(cfg.scorer), &tables, ws.grid()).unwrap();
            let rep = replay_evaluate(
                &matrix,
                &policies,
                ws.grid(),
                &[run.seed],
                cfg.ae_aggregation,
                Jobs::SEQUENTIAL,
            )
            .unwrap();
            if let Some(msg) = oracle_s_on_top(&rep) {
                return (false, format!("replay of config {i}: {msg}"));
            }
        }
    }
    let grid = build_default_grid();
    let matrices = 20;
    for i in 0..matrices {
        let p = rng.random_range(0.05..0.9);
        let tables = common::random_tables(&mut rng, 30, p, true);
        let matrix = ScoreMatrix::from_tables("rand", None, &tables, &grid).unwrap();
        let mut policies = vec![Policy::OracleS, Policy::OracleF, Policy::Ae, Policy::Random];
        policies.push(Policy::Lens {
            csa: CsaKind::Full,
            k: 27,
        });
        for k in [3, 9, 18] {
            policies.push(Policy::Lens { csa: CsaKind::Csa3, k });
        }
        let rep = replay_evaluate(
            &matrix,
            &policies,
            &grid,
            &[1, 2, 3],
            AeAggregation::BestOf5,
            Jobs::SEQUENTIAL,
        )
        .unwrap();
        if let Some(msg) = oracle_s_on_top(&rep) {
            return (false, format!("random matrix {i}: {msg}"));
        }
    }
    (
        true,
        format!("{configs} random simulated configs and their replays, {matrices} random score matrices"),
    )
}

fn c3_exhaustive_equals_full(shared: &Shared) -> Verdict {
    let policies = [
        Policy::Lens {
            csa: CsaKind::Full,
            k: 27,
        },
        Policy::Lens {
            csa: CsaKind::Csa1,
            k: 27,
        },
        Policy::Lens {
            csa: CsaKind::Csa2,
            k: 27,
        },
    ];
    let (_, outcomes) = simulate(&shared.ws, &shared.runs, ScorerId::Confidence, &policies).unwrap();
    let mut checked = 0;
    for seed in &outcomes {
        for row in &seed.outcomes {
            let chosen = |o: &lens_core::selection::PolicyOutcome| match &o.chosen {
                Chosen::Grid(id) => Some(*id),
                _ => None,
            };
            if chosen(&row[1]) != chosen(&row[0]) || chosen(&row[2]) != chosen(&row[0]) || chosen(&row[0]).is_none() {
                return (false, format!("seed {}: selections differ", seed.seed));
            }
            checked += 1;
        }
    }
    (
        true,
        format!("{checked} (scene, light, seed) groups, identical choices"),
    )
}

fn c4_oracle_f_bruteforce() -> Verdict {
    for trial in 0..100u64 {
        if let Err(e) = common::bruteforce_trial(trial) {
            return (false, format!("trial {trial}: {e}"));
        }
    }
    (
        true,
        "100 trials of 3 models x 50 scenes x 27 options, simulation and replay".into(),
    )
}

fn c5_ordering(shared: &Shared) -> Verdict {
    let policies = shared.ws.config.policy_list().unwrap();
    let r = build_report(&shared.ws, &shared.runs, ScorerId::Confidence, &policies).unwrap();
    let acc = |p: &str| r.accuracy(p).unwrap();
    let (os, lens, ae, rnd) = (acc("oracle_s"), acc("lens_full"), acc("ae"), acc("random"));
    let ok = os > lens && lens > ae.max(rnd) && lens >= ae + 0.10 && lens >= rnd + 0.10;
    (
        ok,
        format!(
            "oracle_s {os:.4} > lens_full {lens:.4} > max(ae {ae:.4}, random {rnd:.4}); oracle_f {:.4}; {} seeds",
            acc("oracle_f"),
            r.seeds.len()
        ),
    )
}

fn c6_confidence_gap(shared: &Shared) -> Verdict {
    let sep = confidence_separation(shared.runs.iter().flat_map(|r| &r.groups));
    (
        sep.gap >= 0.1,
        format!(
            "correct {:.4} (n={}), incorrect {:.4} (n={}), gap {:.4}",
            sep.correct_mean, sep.correct_count, sep.incorrect_mean, sep.incorrect_count, sep.gap
        ),
    )
}

fn c7_ablation(shared: &Shared) -> Verdict {
    let rows = ablation_rows(&shared.ws, &shared.runs, &ALL_SCORERS).unwrap();
    let conf = rows.iter().find(|r| r.scorer == "confidence").unwrap().accuracy_mean;
    let ok = rows.len() == 5 && rows.iter().all(|r| conf >= r.accuracy_mean - 0.02);
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{} {:.4}", r.scorer, r.accuracy_mean))
        .collect();
    (ok, format!("{} rows: {}", rows.len(), table.join(", ")))
}

fn c8_numerics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (classes, dim, n) = (4, 16, 24);
    let feats: Vec<FeatureVector> = (0..n)
        .map(|_| FeatureVector((0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()))
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let w: Vec<f64> = (0..classes * dim).map(|_| rng.random_range(-0.3..0.3)).collect();
    let b: Vec<f64> = (0..classes).map(|_| rng.random_range(-0.3..0.3)).collect();
    let l2 = 1e-4;
    let (_, gw, gb) = loss_and_gradient(&w, &b, &feats, &labels, l2);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let rel = |fd: f64, g: f64| (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);
    for i in 0..w.len() {
        let (mut p, mut m) = (w.clone(), w.clone());
        p[i] += h;
        m[i] -= h;
        let fd = (loss_and_gradient(&p, &b, &feats, &labels, l2).0 - loss_and_gradient(&m, &b, &feats, &labels, l2).0)
            / (2.0 * h);
        worst = worst.max(rel(fd, gw[i]));
    }
    for i in 0..b.len() {
        let (mut p, mut m) = (b.clone(), b.clone());
        p[i] += h;
        m[i] -= h;
        let fd = (loss_and_gradient(&w, &p, &feats, &labels, l2).0 - loss_and_gradient(&w, &m, &feats, &labels, l2).0)
            / (2.0 * h);
        worst = worst.max(rel(fd, gb[i]));
    }

    let mut softmax_err: f64 = 0.0;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..rng.random_range(2..12))
            .map(|_| rng.random_range(-50.0..50.0))
            .collect();
        softmax_err = softmax_err.max((softmax(&z).iter().sum::<f64>() - 1.0).abs());
    }

    let ws = Workspace::new(&common::small_config(&[8])).unwrap();
    let model = ws.train_model(8).unwrap();
    let mut contraction = true;
    for _ in 0..1000 {
        let z: Vec<f64> = (0..model.dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        contraction &= projection_norm(&model, &z) <= nz + 1e-9;
    }

    let (_, _, history) = fit_head(&feats, &labels, classes, &TrainHyper::default()).unwrap();
    let start = history.len() / 10;
    let monotone = history[start..].windows(2).all(|p| p[1] <= p[0] + 1e-12);

    let ok = worst < 1e-4 && softmax_err <= 1e-9 && contraction && monotone;
    (
        ok,
        format!(
            "gradient rel err {worst:.2e}, softmax sum err {softmax_err:.2e}, projection contracts: {contraction}, \
             loss non-increasing over last 90%: {monotone}"
        ),
    )
}

fn c9_determinism() -> Verdict {
    let dirs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (dir, jobs) in dirs.iter().zip([1, 1, 4]) {
        let cfg = BenchConfig {
            out_dir: dir.path().to_path_buf(),
            jobs,
            ..default_config()
        };
        cmd_run(&cfg).unwrap();
    }
    let seeds = default_config().seeds;
    let mut files = vec!["report.json".to_string()];
    for s in &seeds {
        files.push(format!("results_seed{s}.jsonl"));
        files.push(format!("scores_seed{s}.csv"));
    }
    for f in &files {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        if fs::read(dirs[1].path().join(f)).unwrap() != a {
            return (false, format!("{f} differs between identical runs"));
        }
        if fs::read(dirs[2].path().join(f)).unwrap() != a {
            return (false, format!("{f} differs between jobs=1 and jobs=4"));
        }
    }
    (
        true,
        format!(
            "{} files byte-identical across 2 runs at jobs=1 and 1 at jobs=4",
            files.len()
        ),
    )
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn c10_mode_contrast(shared: &Shared) -> Verdict {
    let ws = &shared.ws;
    let constants = &ws.camera.constants;
    let reference = ws.grid().options()[13];
    let scenes = ws.test_scenes(ws.config.seeds[0]).unwrap();
    let (full, dim) = (LightId::L1.condition(), LightId::L6.condition());
    let total = |mode: SceneMode, light| -> f64 {
        scenes
            .iter()
            .map(|s| {
                pre_noise_exposure(&s.with_mode(mode), light, &reference, constants)
                    .iter()
                    .sum::<f64>()
            })
            .sum()
    };
    let lum = total(SceneMode::Luminous, &dim) / total(SceneMode::Luminous, &full);
    let refl = total(SceneMode::Reflective, &dim) / total(SceneMode::Reflective, &full);

    let refl_cfg = BenchConfig {
        mode: SceneMode::Reflective,
        ..ws.config.clone()
    };
    let refl_ws = Workspace::new(&refl_cfg).unwrap();
    let refl_runs = prepare_all(&refl_ws, &[ScorerId::Confidence]).unwrap();
    let one_sided = [LightId::L3, LightId::L4, LightId::L6, LightId::L7];
    let (mut changed, mut count) = (0usize, 0usize);
    for (a, b) in shared.runs.iter().zip(&refl_runs) {
        for (ga, gb) in a.groups.iter().zip(&b.groups) {
            assert_eq!((&ga.scene_id, ga.light_id), (&gb.scene_id, gb.light_id));
            if !one_sided.contains(&ga.light_id) {
                continue;
            }
            count += 1;
            changed += usize::from(argmax(&ga.confidence) != argmax(&gb.confidence));
        }
    }
    let frac = changed as f64 / count.max(1) as f64;
    let ok = (1.0 - lum).abs() < 0.10 && (refl - 0.25).abs() <= 0.05 * 0.25 && count > 0 && frac >= 0.05;
    (
        ok,
        format!(
            "L1->L6 exposure ratio luminous {lum:.4}, reflective {refl:.4}; argmax changed for {changed}/{count} \
             ({:.1}%) one-sided (scene, light) pairs",
            frac * 100.0
        ),
    )
}

fn main() -> ExitCode {
    let cfg = default_config();
    let ws = Workspace::new(&cfg).unwrap();
    let runs = prepare_all(&ws, &ALL_SCORERS).unwrap();
    let shared = Shared { ws, runs };

    let results: Vec<(usize, &str, Verdict)> = vec![
        (1, "capture cost accounting", c1_costs()),
        (2, "oracle-s dominance", c2_oracle_dominance()),
        (
            3,
            "exhaustive csa1/csa2 equal lens-full",
            c3_exhaustive_equals_full(&shared),
        ),
        (4, "oracle-f brute force", c4_oracle_f_bruteforce()),
        (5, "default benchmark ordering", c5_ordering(&shared)),
        (6, "confidence separation", c6_confidence_gap(&shared)),
        (7, "scorer ablation", c7_ablation(&shared)),
        (8, "numerical checks", c8_numerics()),
        (9, "determinism", c9_determinism()),
        (10, "scene mode contrast", c10_mode_contrast(&shared)),
    ];
    let mut failed = 0;
    for (n, name, (ok, detail)) in &results {
        println!(
            "criterion {n:>2} [{name}]: {} ({detail})",
            if *ok { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
