use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::panel::RegionPanel;
use super::PipelineSettings;
use crate::error::Result;
use crate::graph_learn::spectral_radius;
use crate::sem::{AdjacencyMatrix, StructureMode};
use crate::seeded_rng;

/// A panel with a known cyclic coupling, laid out as an uncoupled
/// calibration stretch, a coupled burn-in and a coupled experiment window.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: RegionPanel,
    pub adjacency: AdjacencyMatrix,
    /// True region-specific cases for every day.
    pub region_specific: DMatrix<f64>,
    pub settings: PipelineSettings,
}

/// Five regions. Region 0 mostly receives cases from the others, so it has
/// the largest overall counts but a small contribution; regions 3 and 4 are
/// the main spreaders. The coupling is rescaled to spectral radius `rho`.
pub fn cyclic_five_region_panel(rho: f64, experiment_days: usize, seed: u64) -> Result<SyntheticPanel> {
    let mut w = DMatrix::zeros(5, 5);
    for (i, j, v) in [
        (0, 1, 0.3),
        (0, 2, 0.3),
        (0, 3, 0.6),
        (0, 4, 0.6),
        (1, 3, 0.4),
        (2, 4, 0.4),
        (4, 0, 0.15),
        (1, 2, 0.1),
    ] {
        w[(i, j)] = v;
    }
    w *= rho / spectral_radius(&w);
    let adjacency = AdjacencyMatrix::new(w, StructureMode::GeneralDirected)?;
    let beta = DVector::from_column_slice(&[90.0, 70.0, 70.0, 60.0, 60.0]);

    let (calibration, burn_in) = (30, 10);
    let total = calibration + burn_in + experiment_days;
    let start = NaiveDate::from_ymd_opt(2021, 3, 1).expect("valid date");
    let dates: Vec<NaiveDate> = (0..total as i64).map(|k| start + chrono::Duration::days(k)).collect();

    let mut rng = seeded_rng(seed);
    let mut z = DMatrix::zeros(5, total);
    let mut y = DMatrix::zeros(5, total);
    for t in 0..total {
        let zt = DVector::from_fn(5, |i, _| beta[i] * rng.random_range(0.7..1.3));
        let yt = if t < calibration { zt.clone() } else { adjacency.solve(&zt)? };
        z.set_column(t, &zt);
        y.set_column(t, &yt);
    }
    let regions = (0..5).map(|i| format!("R{i}")).collect();
    let panel = RegionPanel::new(regions, dates.clone(), y)?;
    let settings = PipelineSettings {
        calibration_start: dates[0],
        calibration_end: dates[calibration - 1],
        experiment_start: dates[calibration + burn_in],
        experiment_end: dates[total - 1],
        budget: 2,
        seed,
        ..PipelineSettings::default()
    };
    Ok(SyntheticPanel {
        panel,
        adjacency,
        region_specific: z,
        settings,
    })
}
