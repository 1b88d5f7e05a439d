//! Regional case-count workflow: smoothing, per-region density estimation
//! on a no-travel calibration window, cross-validated DTV graph learning,
//! SEM-UCB region selection and the comparison against picking the regions
//! with the most cases.

mod cv;
mod kde;
mod panel;
mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::info;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_learn::{estimate_from_stats, RegularizerSpec, SolverSettings, SufficientStats};
use crate::harness::{default_lambda_grid, GridResult, GridRow};
use crate::policies::{Policy, SemUcb, SemUcbConfig};
use crate::sem::{compute_exogenous, AdjacencyMatrix, DecisionVector};
use crate::{derive_seed, seeded_rng};

pub use cv::{
    contributions, make_cv_split, naive_comparison, predict_day, prediction_error, CvSplit, PredictionErrors,
    RatioRow, BLOCK_DAYS,
};
pub use kde::{estimate_region_distribution, silverman_bandwidth, KdeSampler, MIN_CALIBRATION_DAYS};
pub use panel::{ingest_csv, moving_average, read_region_names, RegionPanel, DATE_FORMAT};
pub use synthetic::{cyclic_five_region_panel, SyntheticPanel};

const SAMPLE_STREAM: u64 = 10;
const SPLIT_STREAM: u64 = 11;
const POLICY_STREAM: u64 = 12;

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// Everything the pipeline needs besides file locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    /// Inclusive no-travel window used to fit the region-specific densities.
    pub calibration_start: NaiveDate,
    pub calibration_end: NaiveDate,
    /// Inclusive experiment window.
    pub experiment_start: NaiveDate,
    pub experiment_end: NaiveDate,
    pub budget: usize,
    pub window: usize,
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
    pub solver: SolverSettings,
}

impl Default for PipelineSettings {
    /// Calibration from four weeks before 18 May to 3 June 2020; experiment
    /// from 10 August to 15 October 2020; six regions; 7-day smoothing.
    fn default() -> Self {
        Self {
            calibration_start: date(2020, 4, 20),
            calibration_end: date(2020, 6, 3),
            experiment_start: date(2020, 8, 10),
            experiment_end: date(2020, 10, 15),
            budget: 6,
            window: 7,
            lambda_grid: default_lambda_grid(),
            seed: 0,
            solver: SolverSettings::cyclic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovidConfig {
    pub data: PathBuf,
    #[serde(default)]
    pub regions_file: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub settings: PipelineSettings,
}

impl CovidConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub smoothed: RegionPanel,
    /// Experiment-window panel with the sampled region-specific cases.
    pub experiment: RegionPanel,
    pub split: CvSplit,
    pub grid: GridResult,
    /// Graph fitted on the training days with the selected λ.
    pub adjacency: AdjacencyMatrix,
    /// `(day, Error(t))`, 1-based days, for days with at least one
    /// validation day seen.
    pub error_curve: Vec<(usize, f64)>,
    pub selections: Vec<DecisionVector>,
    pub ratios: Vec<RatioRow>,
    pub bandwidths: Vec<f64>,
    pub spectral_rescales: usize,
}

impl PipelineOutcome {
    /// Mean SEM-UCB and naive ratios over days after the first `skip`,
    /// ignoring missing days.
    pub fn mean_ratios(&self, skip: usize) -> (f64, f64) {
        let pick = |f: fn(&RatioRow) -> Option<f64>| {
            let v: Vec<f64> = self.ratios.iter().skip(skip).filter_map(f).collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        (pick(|r| r.semucb), pick(|r| r.naive))
    }

    pub fn validation_error(&self) -> f64 {
        self.grid
            .table
            .iter()
            .find(|row| row.lambda == self.grid.best_lambda)
            .map(|row| row.score)
            .unwrap_or(f64::NAN)
    }
}

fn window_range(panel: &RegionPanel, start: NaiveDate, end: NaiveDate, what: &str) -> Result<std::ops::Range<usize>> {
    let (Some(a), Some(b)) = (panel.day_index(start), panel.day_index(end)) else {
        return Err(Error::Config(format!(
            "{what} window {start}..{end} is not inside the panel ({}..{})",
            panel.dates[0],
            panel.dates[panel.n_days() - 1]
        )));
    };
    if b < a {
        return Err(Error::Config(format!("{what} window ends before it starts")));
    }
    Ok(a..b + 1)
}

fn fit_on_days(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    days: &[usize],
    reg: &RegularizerSpec,
    solver: &SolverSettings,
) -> Result<crate::graph_learn::SolveOutcome> {
    let mut stats = SufficientStats::new(y.nrows());
    for &d in days {
        stats.push(z.column(d).as_slice(), y.column(d).as_slice())?;
    }
    estimate_from_stats(&stats, reg, solver, None)
}

/// Runs the full workflow on an in-memory panel of raw overall cases.
pub fn run_pipeline(panel: &RegionPanel, settings: &PipelineSettings) -> Result<PipelineOutcome> {
    if settings.lambda_grid.is_empty() || settings.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::Config("lambda grid must be nonempty with values >= 0".into()));
    }
    let n = panel.n_regions();
    if settings.budget == 0 || settings.budget > n {
        return Err(Error::Config(format!("budget {} outside 1..={n}", settings.budget)));
    }
    let smoothed = panel.smoothed(settings.window)?;
    let calibration = window_range(
        &smoothed,
        settings.calibration_start,
        settings.calibration_end,
        "calibration",
    )?;
    let samplers = estimate_region_distribution(&smoothed, calibration)?;
    let mut experiment = smoothed.slice_days(window_range(
        &smoothed,
        settings.experiment_start,
        settings.experiment_end,
        "experiment",
    )?)?;
    let t_total = experiment.n_days();
    if t_total < n {
        return Err(Error::InsufficientData(format!(
            "experiment has {t_total} days but the warm-up needs {n}"
        )));
    }

    let mut rng = seeded_rng(derive_seed(settings.seed, SAMPLE_STREAM));
    let mut z = DMatrix::zeros(n, t_total);
    for t in 0..t_total {
        for (i, sampler) in samplers.iter().enumerate() {
            z[(i, t)] = sampler.sample(&mut rng);
        }
    }
    experiment.region_specific_cases = Some(z.clone());
    let y = experiment.overall_cases.clone();

    let split = make_cv_split(t_total, &mut seeded_rng(derive_seed(settings.seed, SPLIT_STREAM)))?;
    let scores: Vec<f64> = settings
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let fit = fit_on_days(&y, &z, &split.train, &RegularizerSpec::dtv(lambda), &settings.solver)?;
            Ok(prediction_error(&y, &z, &fit.adjacency, &split.validation)?.mean)
        })
        .collect::<Result<_>>()?;
    let grid = GridResult::from_table(
        settings
            .lambda_grid
            .iter()
            .zip(scores)
            .map(|(&lambda, score)| GridRow { lambda, score })
            .collect(),
    )?;
    let reg = RegularizerSpec::dtv(grid.best_lambda);
    info!("cross-validated lambda {}", grid.best_lambda);
    let final_fit = fit_on_days(&y, &z, &split.train, &reg, &settings.solver)?;
    let mut spectral_rescales = usize::from(final_fit.rescaled);

    // Error(t): graph from the training days up to t, validation days up to t
    let mut error_curve = Vec::new();
    let mut stats = SufficientStats::new(n);
    let mut warm: Option<DMatrix<f64>> = None;
    for t in 0..t_total {
        if !split.is_validation(t) {
            stats.push(z.column(t).as_slice(), y.column(t).as_slice())?;
        }
        let seen: Vec<usize> = split.validation.iter().copied().filter(|&v| v <= t).collect();
        if seen.is_empty() || stats.columns() == 0 {
            continue;
        }
        let fit = estimate_from_stats(&stats, &reg, &settings.solver, warm.as_ref())?;
        spectral_rescales += usize::from(fit.rescaled);
        error_curve.push((t + 1, prediction_error(&y, &z, &fit.adjacency, &seen)?.mean));
        warm = Some(fit.adjacency.weights().clone());
    }

    let mut policy_rng = seeded_rng(derive_seed(settings.seed, POLICY_STREAM));
    let config = SemUcbConfig {
        budget: settings.budget,
        regularizer: reg,
        solver: settings.solver.clone(),
        solve_every_k: 1,
    };
    let mut policy = SemUcb::new(n, config, &mut policy_rng)?;
    let mut selections = Vec::with_capacity(t_total);
    for t in 1..=t_total {
        let x = policy.select(t, &mut policy_rng)?;
        let full: DVector<f64> = z.column(t - 1).into_owned();
        // bandit statistics see the selected regions; the graph sees all
        let chosen = compute_exogenous(&full, &x)?;
        policy.observe_split(&x, &chosen, &full, &y.column(t - 1).into_owned())?;
        selections.push(x);
    }
    spectral_rescales += policy.rescales();

    let ratios = naive_comparison(&y, &z, &final_fit.adjacency, &selections, settings.budget)?;
    Ok(PipelineOutcome {
        smoothed,
        experiment,
        split,
        grid,
        adjacency: final_fit.adjacency,
        error_curve,
        selections,
        ratios,
        bandwidths: samplers.iter().map(KdeSampler::bandwidth).collect(),
        spectral_rescales,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovidSummary {
    pub regions: Vec<String>,
    pub best_lambda: f64,
    pub cv_table: Vec<GridRow>,
    pub validation_days: Vec<usize>,
    pub mean_validation_error: f64,
    pub mean_ratio_after_warm_up: (f64, f64),
    pub adjacency: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub clipped_negatives: usize,
    pub spectral_rescales: usize,
    pub notes: Vec<String>,
}

/// Writes `panel_smoothed.csv`, `errors.csv`, `selections.csv`,
/// `ratios.csv` and `summary.json`.
pub fn write_outputs(outcome: &PipelineOutcome, names: &[(String, String)], dir: &Path) -> Result<CovidSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.smoothed.write_csv(&dir.join("panel_smoothed.csv"))?;

    let writer = |name: &str| -> Result<csv::Writer<fs::File>> {
        let path = dir.join(name);
        Ok(csv::Writer::from_writer(fs::File::create(&path).map_err(|e| Error::io(&path, e))?))
    };

    let mut errors = writer("errors.csv")?;
    errors.write_record(["day", "error"])?;
    for (day, e) in &outcome.error_curve {
        errors.write_record([day.to_string(), e.to_string()])?;
    }
    errors.flush().map_err(|e| Error::io(dir.join("errors.csv"), e))?;

    let exp = &outcome.experiment;
    let mut selections = writer("selections.csv")?;
    selections.write_record(["day", "date", "region", "name", "semucb", "naive"])?;
    for (t, (x, row)) in outcome.selections.iter().zip(&outcome.ratios).enumerate() {
        for (i, region) in exp.regions.iter().enumerate() {
            let name = names
                .iter()
                .find(|(abbr, _)| abbr == region)
                .map(|(_, full)| full.as_str())
                .unwrap_or("");
            selections.write_record([
                (t + 1).to_string(),
                exp.dates[t].format(DATE_FORMAT).to_string(),
                region.clone(),
                name.to_string(),
                u8::from(x.is_selected(i)).to_string(),
                u8::from(row.naive_selection.contains(&i)).to_string(),
            ])?;
        }
    }
    selections.flush().map_err(|e| Error::io(dir.join("selections.csv"), e))?;

    let mut ratios = writer("ratios.csv")?;
    ratios.write_record(["day", "semucb_ratio", "naive_ratio"])?;
    let cell = |v: Option<f64>| v.map(|r| r.to_string()).unwrap_or_default();
    for row in &outcome.ratios {
        ratios.write_record([(row.day + 1).to_string(), cell(row.semucb), cell(row.naive)])?;
    }
    ratios.flush().map_err(|e| Error::io(dir.join("ratios.csv"), e))?;

    let n = exp.n_regions();
    let summary = CovidSummary {
        regions: exp.regions.clone(),
        best_lambda: outcome.grid.best_lambda,
        cv_table: outcome.grid.table.clone(),
        validation_days: outcome.split.validation.iter().map(|d| d + 1).collect(),
        mean_validation_error: outcome.validation_error(),
        mean_ratio_after_warm_up: outcome.mean_ratios(n),
        adjacency: outcome.adjacency.weights().transpose().as_slice().to_vec(),
        bandwidths: outcome.bandwidths.clone(),
        clipped_negatives: exp.clipped_negatives,
        spectral_rescales: outcome.spectral_rescales,
        notes: vec![
            "contribution of region j on day t is (1^T (I - A)^-1)[j] * z_t[j], an interpretation".into(),
            "region-specific cases are KDE samples; predictions use the same sampled stream".into(),
            "adjacency is row-major".into(),
        ],
    };
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Reads the configured files, runs the pipeline and writes its outputs.
pub fn run_from_config(config: &CovidConfig, out: &Path) -> Result<CovidSummary> {
    let panel = ingest_csv(&config.data)?;
    let names = match &config.regions_file {
        Some(path) => read_region_names(path)?,
        None => Vec::new(),
    };
    let outcome = run_pipeline(&panel, &config.settings)?;
    write_outputs(&outcome, &names, out)
}

#[cfg(test)]
mod tests;
