use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_gap_statistics, theorem1_bound, BoundInputs, EpisodeResult, ExperimentConfig};
use crate::envgen::longest_path_length;
use crate::error::{Error, Result};
use crate::policies::PolicyKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub seeds: usize,
    pub mean_final_regret: f64,
    /// Sample standard deviation across seeds; zero for a single seed.
    pub std_final_regret: f64,
    pub final_regrets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBound {
    pub seed: u64,
    pub inputs: BoundInputs,
    pub bound: f64,
    pub semucb_final_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: usize,
    pub policies: Vec<PolicySummary>,
    /// Regret bound per seed, evaluated with the w_max measured online.
    pub bounds: Vec<SeedBound>,
    pub mean_bound: Option<f64>,
    /// Why the bound is missing for some or all seeds.
    pub bound_notes: Vec<String>,
    pub w_max: Option<f64>,
    pub unconverged_solves: usize,
    pub spectral_rescales: usize,
    /// Seed whose SEM-UCB (or first listed) run fills selections.csv.
    pub selections_seed: Option<u64>,
    pub selections_policy: Option<PolicyKind>,
    pub notes: Vec<String>,
    pub config: ExperimentConfig,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates episode results; evaluates the regret bound for every seed
/// that has a SEM-UCB run.
pub fn summarize(config: &ExperimentConfig, results: &[EpisodeResult]) -> Result<Summary> {
    let mut policies = Vec::new();
    for &kind in &config.policies {
        let finals: Vec<f64> = results
            .iter()
            .filter(|r| r.policy == kind)
            .map(|r| r.report.final_regret())
            .collect();
        if finals.is_empty() {
            continue;
        }
        let (mean, std) = mean_std(&finals);
        policies.push(PolicySummary {
            policy: kind,
            seeds: finals.len(),
            mean_final_regret: mean,
            std_final_regret: std,
            final_regrets: finals,
        });
    }

    let mut bounds = Vec::new();
    let mut bound_notes = Vec::new();
    let semucb_runs: Vec<&EpisodeResult> = results.iter().filter(|r| r.policy == PolicyKind::Semucb).collect();
    for run in &semucb_runs {
        let model = config.environment(run.seed)?;
        let outcome = compute_gap_statistics(&model, config.budget).and_then(|gaps| {
            let inputs = BoundInputs {
                w_max: run.w_max.unwrap_or(0.0),
                s: config.budget,
                p: longest_path_length(&model.adjacency)?,
                n: model.n(),
                delta_min: gaps.delta_min,
                delta_max: gaps.delta_max,
                horizon: config.horizon as f64,
            };
            Ok((inputs, theorem1_bound(&inputs)?))
        });
        match outcome {
            Ok((inputs, bound)) => bounds.push(SeedBound {
                seed: run.seed,
                inputs,
                bound,
                semucb_final_regret: run.report.final_regret(),
            }),
            Err(e) => bound_notes.push(format!("seed {}: {e}", run.seed)),
        }
    }
    if semucb_runs.is_empty() {
        bound_notes.push("no SEM-UCB run, so no measured w_max".into());
    }
    let mean_bound = (!bounds.is_empty()).then(|| bounds.iter().map(|b| b.bound).sum::<f64>() / bounds.len() as f64);
    let w_max = semucb_runs.iter().filter_map(|r| r.w_max).reduce(f64::max);

    let shown = selections_run(results);
    let mut notes = Vec::new();
    if config.policies.contains(&PolicyKind::Cucb) {
        notes.push(
            "cucb is a structure-blind combinatorial UCB on normalized overall rewards of the selected arms".into(),
        );
    }
    Ok(Summary {
        horizon: config.horizon,
        policies,
        bounds,
        mean_bound,
        bound_notes,
        w_max,
        unconverged_solves: semucb_runs.iter().map(|r| r.unconverged_solves).sum(),
        spectral_rescales: semucb_runs.iter().map(|r| r.rescales).sum(),
        selections_seed: shown.map(|r| r.seed),
        selections_policy: shown.map(|r| r.policy),
        notes,
        config: config.clone(),
    })
}

fn selections_run(results: &[EpisodeResult]) -> Option<&EpisodeResult> {
    results
        .iter()
        .find(|r| r.policy == PolicyKind::Semucb)
        .or_else(|| results.first())
}

fn create_writer(dir: &Path, name: &str) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes `regret.csv`, `mse.csv`, `selections.csv` and `summary.json`
/// into `dir`, creating it if needed.
pub fn emit_reports(config: &ExperimentConfig, results: &[EpisodeResult], dir: &Path) -> Result<Summary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut regret = create_writer(dir, "regret.csv")?;
    regret.write_record(["policy", "seed", "t", "mu", "cumulative_regret", "time_avg_regret"])?;
    for run in results {
        let report = &run.report;
        for t in 1..=report.rounds() {
            regret.write_record([
                run.policy.as_str().to_string(),
                run.seed.to_string(),
                t.to_string(),
                report.per_round_expected_payoff[t - 1].to_string(),
                report.cumulative_regret[t - 1].to_string(),
                report.time_averaged_regret(t).to_string(),
            ])?;
        }
    }
    regret.flush().map_err(|e| Error::io(dir.join("regret.csv"), e))?;

    let mut mse = create_writer(dir, "mse.csv")?;
    mse.write_record(["seed", "t", "mse"])?;
    for run in results {
        if let Some(series) = &run.report.recovery_mse {
            for (t, value) in series.iter().enumerate() {
                mse.write_record([run.seed.to_string(), (t + 1).to_string(), value.to_string()])?;
            }
        }
    }
    mse.flush().map_err(|e| Error::io(dir.join("mse.csv"), e))?;

    let mut selections = create_writer(dir, "selections.csv")?;
    selections.write_record(["t", "arm", "selected"])?;
    if let Some(run) = selections_run(results) {
        for (t, x) in run.report.selections.iter().enumerate() {
            for (arm, &bit) in x.bits().iter().enumerate() {
                selections.write_record([(t + 1).to_string(), arm.to_string(), u8::from(bit).to_string()])?;
            }
        }
    }
    selections.flush().map_err(|e| Error::io(dir.join("selections.csv"), e))?;

    let summary = summarize(config, results)?;
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
