use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lens_core::bench::{cmd_ablate, cmd_gen, cmd_heatmap, cmd_run, cmd_sweep, cmd_train, BenchConfig, BenchReport};
use lens_core::error::{LensError, Result};
use lens_core::exec::Jobs;
use lens_core::perception::ScorerId;
use lens_core::replay::{load_scores, replay_evaluate};
use lens_core::scene_sim::{LightId, SceneMode};
use lens_core::selection::{AeAggregation, CsaKind};

const MODULE: &str = "bench_cli";

/// Model-specific camera sensor parameter selection benchmark.
#[derive(Debug, Parser)]
#[command(name = "lens", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML config file; unspecified keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single master seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Scene mode: luminous or reflective.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Quality scorer: confidence, knn, react, ash or vim.
    #[arg(long, global = true)]
    scorer: Option<String>,
    /// Candidate selection algorithm: full, csa1, csa2 or csa3. Repeatable for sweep.
    #[arg(long, global = true)]
    csa: Vec<String>,
    /// Candidate budget. Repeatable.
    #[arg(long, global = true)]
    k: Vec<usize>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// How the five AE shots are aggregated: top1 or best_of5.
    #[arg(long, global = true)]
    ae_aggregation: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the evaluation and training scene sets for one seed.
    Gen,
    /// Train the target model for one seed and write its checkpoint.
    Train,
    /// Evaluate every configured policy and write the report.
    Run,
    /// Cost/accuracy sweep over CSAs and candidate budgets.
    Sweep,
    /// Export per-option quality scores as aperture x (iso, shutter) grids.
    Heatmap {
        /// Scene id (e.g. c000s000); all scenes when omitted.
        #[arg(long)]
        scene: Option<String>,
        /// Light id (L1..L7); all configured lights when omitted.
        #[arg(long)]
        light: Option<String>,
    },
    /// Lens-full under every scorer, plus the baselines.
    Ablate,
    /// Evaluate policies on a precomputed score matrix.
    Replay {
        /// Score matrix CSV.
        #[arg(long)]
        scores: PathBuf,
        /// Dataset label; defaults to the file stem.
        #[arg(long)]
        dataset_id: Option<String>,
    },
}

fn build_config(g: &Global) -> Result<BenchConfig> {
    let mut cfg = match &g.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    if let Some(m) = &g.mode {
        cfg.mode = SceneMode::parse(m)?;
    }
    if let Some(s) = &g.scorer {
        cfg.scorer = ScorerId::parse(s)?;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(a) = &g.ae_aggregation {
        cfg.ae_aggregation = AeAggregation::parse(a)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn csa_list(g: &Global) -> Result<Vec<CsaKind>> {
    g.csa.iter().map(|s| CsaKind::parse(s)).collect()
}

/// For run/ablate: one CSA plus its k list becomes extra Lens policies.
fn apply_csa(cfg: &mut BenchConfig, g: &Global) -> Result<()> {
    let csas = csa_list(g)?;
    match csas.as_slice() {
        [] if g.k.is_empty() => Ok(()),
        [] => Err(LensError::config(MODULE, "--k needs --csa")),
        [CsaKind::Full] => Ok(()),
        [csa] => {
            if g.k.is_empty() {
                return Err(LensError::config(MODULE, format!("--csa {} needs --k", csa.as_str())));
            }
            cfg.csa.algorithm = *csa;
            cfg.csa.k = g.k.clone();
            cfg.validate()
        }
        _ => Err(LensError::config(
            MODULE,
            "only one --csa is allowed here; use sweep for several",
        )),
    }
}

fn first_seed(cfg: &BenchConfig) -> u64 {
    cfg.seeds[0]
}

fn print_report(report: &BenchReport) {
    println!(
        "{:<14} {:>9} {:>9} {:>14} {:>10}",
        "policy", "acc_mean", "acc_std", "mean_cost_s", "candidates"
    );
    for r in &report.policies {
        println!(
            "{:<14} {:>9.4} {:>9.4} {:>14} {:>10.2}",
            r.policy, r.accuracy_mean, r.accuracy_std, r.mean_cost_decimal, r.mean_candidates
        );
    }
    for r in report.ablation.iter().flatten() {
        println!(
            "lens[{:<10}] {:>9.4} {:>9.4}",
            r.scorer, r.accuracy_mean, r.accuracy_std
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = build_config(g)?;
    match cli.command {
        Command::Gen => {
            for p in cmd_gen(&cfg, first_seed(&cfg))? {
                println!("{}", p.display());
            }
        }
        Command::Train => {
            println!("{}", cmd_train(&cfg, first_seed(&cfg))?.display());
        }
        Command::Run => {
            apply_csa(&mut cfg, g)?;
            let report = cmd_run(&cfg)?;
            print_report(&report);
            println!("wrote {}", cfg.out_dir.join("report.json").display());
        }
        Command::Sweep => {
            let rows = cmd_sweep(&cfg, &csa_list(g)?, &g.k)?;
            for r in &rows {
                println!(
                    "{} k={:<2} cost={} acc={:.4}±{:.4}",
                    r.csa.as_str(),
                    r.k,
                    r.mean_cost_s,
                    r.accuracy_mean,
                    r.accuracy_std
                );
            }
            println!("wrote {}", cfg.out_dir.join("sweep.csv").display());
        }
        Command::Heatmap { scene, light } => {
            let light = light.as_deref().map(LightId::parse).transpose()?;
            for p in cmd_heatmap(&cfg, first_seed(&cfg), scene.as_deref(), light)? {
                println!("{}", p.display());
            }
        }
        Command::Ablate => {
            let report = cmd_ablate(&cfg)?;
            print_report(&report);
            println!("wrote {}", cfg.out_dir.join("ablation.json").display());
        }
        Command::Replay { scores, dataset_id } => {
            apply_csa(&mut cfg, g)?;
            let grid = cfg.param_grid()?;
            let mut matrix = load_scores(&scores, &grid)?;
            if let Some(id) = dataset_id {
                matrix.dataset_id = id;
            }
            let report = replay_evaluate(
                &matrix,
                &cfg.policy_list()?,
                &grid,
                &cfg.seeds,
                cfg.ae_aggregation,
                Jobs(cfg.jobs),
            )?;
            print_report(&report);
            std::fs::create_dir_all(&cfg.out_dir).map_err(|e| LensError::io(&cfg.out_dir, e))?;
            let path = cfg.out_dir.join("replay_report.json");
            std::fs::write(&path, report.to_json()).map_err(|e| LensError::io(&path, e))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
