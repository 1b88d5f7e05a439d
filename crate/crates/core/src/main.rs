use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, LevelFilter};

use semucb::covid::{self, CovidConfig};
use semucb::envgen::{longest_path_length, EnvSpec, EnvironmentFile};
use semucb::harness::{
    compute_gap_statistics, emit_reports, grid_search_lambda, run_experiment, theorem1_bound, BoundInputs,
    ExperimentConfig,
};
use semucb::policies::PolicyKind;
use semucb::{Error, Result};

#[derive(Parser)]
#[command(name = "semucb", version, about = "Causal combinatorial semi-bandit experiments")]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random environment and write it as JSON.
    GenEnv {
        /// Environment spec (JSON); the 20-arm default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment and write regret, MSE and selection reports.
    Run(Overrides),
    /// Grid-search the regularization weight.
    Grid(Overrides),
    /// Evaluate the regret bound for an environment file.
    Bound {
        /// Environment file.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        horizon: usize,
        /// Defaults to the largest payoff weight of the true graph.
        #[arg(long)]
        w_max: Option<f64>,
        /// Optional JSON destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the regional case-count pipeline.
    Covid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_experiment(o: &Overrides) -> Result<(ExperimentConfig, PathBuf)> {
    let mut config = ExperimentConfig::read(&o.config)?;
    if let Some(seeds) = &o.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(names) = &o.policy {
        config.policies = names.iter().map(|n| n.parse()).collect::<Result<Vec<PolicyKind>>>()?;
    }
    if let Some(h) = o.horizon {
        config.horizon = h;
    }
    let out = o
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    config.validate()?;
    Ok((config, out))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::GenEnv { config, out, seed } => {
            let mut spec = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
                    serde_json::from_str::<EnvSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => EnvSpec::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            let model = spec.generate()?;
            EnvironmentFile::from_model(&model, spec.seed).write(&out)?;
            info!("wrote {}-arm environment with {} edges to {}", model.n(), model.adjacency.edge_count(), out.display());
        }
        Command::Run(o) => {
            let (config, out) = load_experiment(&o)?;
            let results = run_experiment(&config)?;
            let summary = emit_reports(&config, &results, &out)?;
            for p in &summary.policies {
                info!("{:<10} final regret {:.3} ± {:.3}", p.policy.as_str(), p.mean_final_regret, p.std_final_regret);
            }
            if let Some(b) = summary.mean_bound {
                info!("mean regret bound {b:.3e}");
            }
            info!("reports written to {}", out.display());
        }
        Command::Grid(o) => {
            let (config, out) = load_experiment(&o)?;
            let result = grid_search_lambda(&config)?;
            for row in &result.table {
                info!("lambda {:>10.4e}  mse {:.6e}", row.lambda, row.score);
            }
            info!("best lambda {}", result.best_lambda);
            write_json(&out.join("grid.json"), &result)?;
        }
        Command::Bound {
            config,
            budget,
            horizon,
            w_max,
            out,
        } => {
            let model = EnvironmentFile::read(&config)?.to_model()?;
            let gaps = compute_gap_statistics(&model, budget)?;
            let w_max = match w_max {
                Some(w) => w,
                None => model.adjacency.payoff_weights()?.max(),
            };
            let inputs = BoundInputs {
                w_max,
                s: budget,
                p: longest_path_length(&model.adjacency)?,
                n: model.n(),
                delta_min: gaps.delta_min,
                delta_max: gaps.delta_max,
                horizon: horizon as f64,
            };
            let bound = theorem1_bound(&inputs)?;
            println!("{bound}");
            if let Some(path) = out {
                write_json(&path, &serde_json::json!({ "inputs": inputs, "bound": bound }))?;
            }
        }
        Command::Covid { config, out } => {
            let cfg = CovidConfig::read(&config)?;
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
            let summary = covid::run_from_config(&cfg, &out)?;
            info!(
                "lambda {} validation error {:.3}; mean ratios after warm-up: semucb {:.3}, naive {:.3}",
                summary.best_lambda,
                summary.mean_validation_error,
                summary.mean_ratio_after_warm_up.0,
                summary.mean_ratio_after_warm_up.1
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { LevelFilter::Error } else { LevelFilter::Info };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
