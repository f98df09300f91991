mod common;

use std::fs;

use lens_core::bench::commands::{heatmap_scores, prepare_all, sweep_rows};
use lens_core::bench::{cmd_run, BenchConfig, Workspace};
use lens_core::exec::Jobs;
use lens_core::perception::ScorerId;
use lens_core::replay::{load_scores, replay_evaluate};
use lens_core::scene_sim::{LightId, SceneMode};
use lens_core::seed;
use lens_core::selection::{CsaKind, Policy, SelectionResult};

fn run_in(dir: &std::path::Path, mut cfg: BenchConfig) -> lens_core::bench::BenchReport {
    cfg.out_dir = dir.to_path_buf();
    cmd_run(&cfg).unwrap()
}

#[test]
fn replay_of_exported_scores_reproduces_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::small_config(&[3, 8]);
    cfg.csa.algorithm = CsaKind::Csa2;
    cfg.csa.k = vec![6, 12];
    let sim = run_in(dir.path(), cfg.clone());
    let grid = cfg.param_grid().unwrap();
    let policies = cfg.policy_list().unwrap();
    for (i, &s) in cfg.seeds.iter().enumerate() {
        let matrix = load_scores(&dir.path().join(format!("scores_seed{s}.csv")), &grid).unwrap();
        assert!(matrix.has_ae());
        let rep = replay_evaluate(&matrix, &policies, &grid, &[s], cfg.ae_aggregation, Jobs::SEQUENTIAL).unwrap();
        for row in &sim.policies {
            assert_eq!(
                rep.row(&row.policy).unwrap().accuracy_per_seed,
                vec![row.accuracy_per_seed[i]],
                "seed {s} policy {}",
                row.policy
            );
        }
        assert_eq!(rep.oracle_f_choice, vec![sim.oracle_f_choice[i]]);
    }
}

#[test]
fn results_jsonl_round_trips_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), common::small_config(&[5]));
    let text = fs::read_to_string(dir.path().join("results_seed5.jsonl")).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let rec: SelectionResult = serde_json::from_str(line).unwrap();
        assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    }
}

#[test]
fn report_is_byte_identical_across_runs_and_jobs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = common::small_config(&[1, 2]);
    cfg.jobs = 1;
    run_in(a.path(), cfg.clone());
    cfg.jobs = 4;
    run_in(b.path(), cfg);
    for f in ["report.json", "results_seed1.jsonl", "scores_seed2.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn sweep_costs_and_exhaustive_points() {
    let cfg = common::small_config(&[1, 2, 3, 4, 5]);
    let ws = Workspace::new(&cfg).unwrap();
    let runs = prepare_all(&ws, &[ScorerId::Confidence]).unwrap();
    let ks: Vec<usize> = (1..=27).collect();
    let rows = sweep_rows(
        &ws,
        &runs,
        &[CsaKind::Full, CsaKind::Csa1, CsaKind::Csa2, CsaKind::Csa3],
        &ks,
    )
    .unwrap();
    let full = rows.iter().find(|r| r.csa == CsaKind::Full).unwrap();
    let at = |csa: CsaKind, k: usize| rows.iter().find(|r| r.csa == csa && r.k == k).unwrap();
    assert_eq!(at(CsaKind::Csa3, 18).mean_cost_s, "0.159");
    assert_eq!(full.mean_cost_s, "2.409");
    for csa in [CsaKind::Csa1, CsaKind::Csa2] {
        assert_eq!(at(csa, 27).accuracy_per_seed, full.accuracy_per_seed, "{csa:?}");
    }
    let costs: Vec<f64> = ks
        .iter()
        .map(|&k| at(CsaKind::Csa3, k).mean_cost_s.parse().unwrap())
        .collect();
    assert!(costs.windows(2).all(|w| w[0] <= w[1]), "{costs:?}");
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn twenty_scenes(mode: SceneMode) -> BenchConfig {
    BenchConfig {
        num_classes: 20,
        samples_per_class: 1,
        train_samples_per_class: 5,
        mode,
        seeds: vec![1],
        ..BenchConfig::default()
    }
}

#[test]
fn heatmaps_are_model_specific() {
    let ws = Workspace::new(&twenty_scenes(SceneMode::Luminous)).unwrap();
    let a = ws.train_model_with(1, seed::derive(1, &["train"])).unwrap();
    let b = ws.train_model_with(1, seed::derive(2, &["train"])).unwrap();
    let light = LightId::L1.condition();
    let mut differing = 0;
    for scene in ws.test_scenes(1).unwrap() {
        let sa = heatmap_scores(&ws, &a, 1, &scene.scene_id, &light, ScorerId::Confidence).unwrap();
        let sb = heatmap_scores(&ws, &b, 1, &scene.scene_id, &light, ScorerId::Confidence).unwrap();
        assert!(sa.iter().chain(&sb).all(|v| v.is_finite()));
        differing += usize::from(argmax(&sa) != argmax(&sb));
    }
    assert!(differing >= 1, "no scene changed its argmax cell between models");
}

#[test]
fn heatmaps_are_scene_mode_specific() {
    let lum = Workspace::new(&twenty_scenes(SceneMode::Luminous)).unwrap();
    let refl = Workspace::new(&twenty_scenes(SceneMode::Reflective)).unwrap();
    let (ml, mr) = (lum.train_model(1).unwrap(), refl.train_model(1).unwrap());
    let light = LightId::L1.condition();
    let grid = lum.grid().clone();
    let mut differing = 0;
    for scene in lum.test_scenes(1).unwrap() {
        let sl = heatmap_scores(&lum, &ml, 1, &scene.scene_id, &light, ScorerId::Confidence).unwrap();
        let sr = heatmap_scores(&refl, &mr, 1, &scene.scene_id, &light, ScorerId::Confidence).unwrap();
        let shutter = |id: usize| grid.axis_indices(id).1;
        differing += usize::from(shutter(argmax(&sl)) != shutter(argmax(&sr)));
    }
    assert!(differing >= 1, "no scene changed its argmax shutter between modes");
}

#[test]
fn lens_never_beats_oracle_s_on_simulated_runs() {
    for s in 0..4u64 {
        let mut cfg = common::small_config(&[s * 11 + 1]);
        cfg.mode = if s % 2 == 0 {
            SceneMode::Luminous
        } else {
            SceneMode::Reflective
        };
        cfg.csa.algorithm = CsaKind::Csa1;
        cfg.csa.k = vec![4, 20];
        let ws = Workspace::new(&cfg).unwrap();
        let runs = prepare_all(&ws, &[ScorerId::Confidence]).unwrap();
        let policies = cfg.policy_list().unwrap();
        let rep = lens_core::bench::commands::build_report(&ws, &runs, ScorerId::Confidence, &policies).unwrap();
        let top = rep.accuracy(&Policy::OracleS.id()).unwrap();
        for row in &rep.policies {
            assert!(row.accuracy_mean <= top + 1e-12, "{} > oracle_s", row.policy);
        }
    }
}
