//! Per-seed orchestration: generate scenes, train the model, capture and score
//! every option for every (scene, light), and evaluate policies over the
//! resulting option tables.

use num_rational::Rational64;
use num_traits::Zero;

use super::config::BenchConfig;
use crate::error::{LensError, Result};
use crate::exec::{par_map, Jobs};
use crate::param_space::{ParamGrid, ParamId};
use crate::perception::scorers::max_softmax;
use crate::perception::{score, train, ClassifierModel, Evaluated, ScorerId};
use crate::scene_sim::{
    auto_expose, generate_split, ExposureConstants, LightCondition, LightId, Scene, SceneMode, Split,
};
use crate::seed;
use crate::selection::{
    evaluate_group, grid_costs, oracle_f, AeAggregation, AeShot, Camera, EvalContext, OptionTable, Policy,
    PolicyOutcome,
};

const MODULE: &str = "bench_cli";

/// Resolved, validated run settings shared by every seed.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: BenchConfig,
    pub camera: Camera,
    pub costs: Vec<Rational64>,
    pub lights: Vec<LightCondition>,
    pub jobs: Jobs,
}

impl Workspace {
    pub fn new(config: &BenchConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.param_grid()?;
        let cost = config.cost_model()?;
        let constants: ExposureConstants = config.exposure.constants()?;
        Ok(Workspace {
            costs: grid_costs(&grid, &cost),
            camera: Camera { grid, constants, cost },
            lights: config.light_conditions(),
            jobs: Jobs(config.jobs),
            config: config.clone(),
        })
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.camera.grid
    }

    pub fn test_scenes(&self, seed_value: u64) -> Result<Vec<Scene>> {
        let c = &self.config;
        generate_split(
            c.num_classes,
            c.samples_per_class,
            c.mode,
            seed_value,
            Split::Test,
            &c.pattern,
            c.scene_size,
        )
    }

    pub fn train_scenes(&self, seed_value: u64) -> Result<Vec<Scene>> {
        let c = &self.config;
        generate_split(
            c.num_classes,
            c.train_samples_per_class,
            c.mode,
            seed_value,
            Split::Train,
            &c.pattern,
            c.scene_size,
        )
    }

    /// Trains on auto-exposure top-1 captures of the training split.
    pub fn train_model(&self, seed_value: u64) -> Result<ClassifierModel> {
        self.train_model_with(seed_value, seed::derive(seed_value, &["train"]))
    }

    /// As `train_model`, with an explicit training-capture noise seed.
    pub fn train_model_with(&self, seed_value: u64, noise_seed: u64) -> Result<ClassifierModel> {
        let scenes = self.train_scenes(seed_value)?;
        train(
            &scenes,
            &self.lights,
            self.grid(),
            &self.camera.constants,
            &self.config.train,
            noise_seed,
        )
    }

    /// Seed for all captures of one (scene, light); shared by every policy.
    pub fn capture_seed(seed_value: u64, mode: SceneMode, scene_id: &str, light: LightId) -> u64 {
        seed::derive(seed_value, &["capture", mode.as_str(), scene_id, light.as_str()])
    }

    /// Captures every grid option and scores each with the requested scorers.
    pub fn evaluate_options(
        &self,
        model: &ClassifierModel,
        scene: &Scene,
        light: &LightCondition,
        capture_seed: u64,
        scorers: &[ScorerId],
    ) -> Result<GroupEval> {
        let n = self.grid().len();
        let mut predicted = Vec::with_capacity(n);
        let mut confidence = Vec::with_capacity(n);
        let mut scores = vec![Vec::with_capacity(n); scorers.len()];
        for id in 0..n {
            let img = self.camera.capture(scene, light, id, capture_seed);
            let e = Evaluated::of_image(model, &img);
            predicted.push(e.predicted);
            confidence.push(max_softmax(&e.logits));
            for (s, &scorer) in scorers.iter().enumerate() {
                scores[s].push(score(model, &e, scorer)?.value);
            }
        }
        Ok(GroupEval {
            scene_id: scene.scene_id.clone(),
            light_id: light.id,
            class_id: scene.class_id,
            predicted,
            confidence,
            scores,
            ae_ranked: auto_expose(scene, light, self.grid(), &self.camera.constants),
        })
    }

    /// Full per-seed pass: scenes, model, and every option of every (scene, light).
    pub fn prepare_seed(&self, seed_value: u64, scorers: &[ScorerId]) -> Result<SeedRun> {
        let scenes = self.test_scenes(seed_value)?;
        let model = self.train_model(seed_value)?;
        let pairs: Vec<(usize, usize)> = (0..scenes.len())
            .flat_map(|s| (0..self.lights.len()).map(move |l| (s, l)))
            .collect();
        let mode = self.config.mode;
        let groups = par_map(&pairs, self.jobs, |&(s, l)| {
            let scene = &scenes[s];
            let light = &self.lights[l];
            let cs = Self::capture_seed(seed_value, mode, &scene.scene_id, light.id);
            self.evaluate_options(&model, scene, light, cs, scorers)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(SeedRun {
            seed: seed_value,
            scorers: scorers.to_vec(),
            groups,
            model,
        })
    }
}

/// Every option of one (scene, light), captured and scored.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupEval {
    pub scene_id: String,
    pub light_id: LightId,
    pub class_id: usize,
    pub predicted: Vec<usize>,
    /// Max softmax probability per option, always computed.
    pub confidence: Vec<f64>,
    /// `scores[s][id]` for the run's scorers, in order.
    pub scores: Vec<Vec<f64>>,
    /// Auto-exposure ranking (five ids, best first).
    pub ae_ranked: Vec<ParamId>,
}

impl GroupEval {
    pub fn correct(&self) -> Vec<bool> {
        self.predicted.iter().map(|&p| p == self.class_id).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub scorers: Vec<ScorerId>,
    pub groups: Vec<GroupEval>,
    pub model: ClassifierModel,
}

impl SeedRun {
    fn scorer_index(&self, scorer: ScorerId) -> Result<usize> {
        self.scorers
            .iter()
            .position(|&s| s == scorer)
            .ok_or_else(|| LensError::invariant(MODULE, format!("scorer {scorer} was not computed")))
    }

    /// Option tables under one scorer, in group order.
    pub fn tables(&self, scorer: ScorerId, costs: &[Rational64]) -> Result<Vec<OptionTable>> {
        let s = self.scorer_index(scorer)?;
        Ok(self
            .groups
            .iter()
            .map(|g| {
                let correct = g.correct();
                let scores = g.scores[s].clone();
                let ae = g
                    .ae_ranked
                    .iter()
                    .map(|&id| AeShot {
                        grid_id: Some(id),
                        score: scores[id],
                        correct: correct[id],
                        cost: costs[id],
                    })
                    .collect();
                OptionTable {
                    scene_id: g.scene_id.clone(),
                    light_id: g.light_id.as_str().to_string(),
                    scores,
                    correct,
                    costs: costs.to_vec(),
                    ae,
                }
            })
            .collect())
    }
}

/// Outcomes of every policy on every table for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcomes {
    pub seed: u64,
    pub oracle_f_choice: ParamId,
    /// `outcomes[t][p]`: table t, policy p.
    pub outcomes: Vec<Vec<PolicyOutcome>>,
}

/// Oracle-F over a set of tables. Tie costs are the per-option cost summed over
/// tables, so per-row costs from replayed data are honoured.
pub fn oracle_f_for(tables: &[OptionTable]) -> Result<ParamId> {
    let n = tables.first().map_or(0, |t| t.costs.len());
    let mut summed = vec![Rational64::zero(); n];
    for t in tables {
        if t.costs.len() != n {
            return Err(LensError::invariant(MODULE, "tables disagree on option count"));
        }
        for (acc, c) in summed.iter_mut().zip(&t.costs) {
            *acc += c;
        }
    }
    let rows: Vec<Vec<bool>> = tables.iter().map(|t| t.correct.clone()).collect();
    oracle_f(&[rows], &summed)
}

/// Evaluates every policy on every table with one master seed.
pub fn evaluate_tables(
    tables: &[OptionTable],
    policies: &[Policy],
    grid: &ParamGrid,
    master_seed: u64,
    ae: AeAggregation,
    jobs: Jobs,
) -> Result<SeedOutcomes> {
    let choice = oracle_f_for(tables)?;
    let ctx = EvalContext {
        grid,
        master_seed,
        oracle_f_choice: Some(choice),
        ae,
    };
    let outcomes = par_map(tables, jobs, |t| {
        policies
            .iter()
            .map(|&p| evaluate_group(t, p, &ctx))
            .collect::<Result<Vec<_>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(SeedOutcomes {
        seed: master_seed,
        oracle_f_choice: choice,
        outcomes,
    })
}

/// Mean confidence of correct and incorrect captures over every option.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfidenceSeparation {
    pub correct_mean: f64,
    pub incorrect_mean: f64,
    pub gap: f64,
    pub correct_count: usize,
    pub incorrect_count: usize,
}

pub fn confidence_separation<'a>(groups: impl IntoIterator<Item = &'a GroupEval>) -> ConfidenceSeparation {
    let (mut cs, mut cn, mut is, mut inn) = (0.0, 0usize, 0.0, 0usize);
    for g in groups {
        for (&p, &c) in g.predicted.iter().zip(&g.confidence) {
            if p == g.class_id {
                cs += c;
                cn += 1;
            } else {
                is += c;
                inn += 1;
            }
        }
    }
    let correct_mean = if cn > 0 { cs / cn as f64 } else { 0.0 };
    let incorrect_mean = if inn > 0 { is / inn as f64 } else { 0.0 };
    ConfidenceSeparation {
        correct_mean,
        incorrect_mean,
        gap: correct_mean - incorrect_mean,
        correct_count: cn,
        incorrect_count: inn,
    }
}
