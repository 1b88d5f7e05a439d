use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::panel::RegionPanel;
use crate::error::{Error, Result};

/// Shortest calibration window accepted for density estimation.
pub const MIN_CALIBRATION_DAYS: usize = 7;

/// Gaussian kernel density over one region's calibration values. Draws are
/// clipped to `[0, 1.5 · max observed]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeSampler {
    values: Vec<f64>,
    bandwidth: f64,
    upper: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `0.9 · min(σ, IQR / 1.34) · n^(−1/5)`, falling back to the nonzero spread
/// measure and then to a small floor relative to the data scale.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sigma > 0.0, iqr > 0.0) {
        (true, true) => sigma.min(iqr),
        _ => sigma.max(iqr),
    };
    let floor = 1e-3 * mean.abs().max(1.0);
    (0.9 * spread * n.powf(-0.2)).max(floor)
}

impl KdeSampler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("no calibration values".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("calibration values must be finite and nonnegative".into()));
        }
        let upper = 1.5 * values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            values: values.to_vec(),
            bandwidth: silverman_bandwidth(values),
            upper,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let center = self.values[rng.random_range(0..self.values.len())];
        let noise: f64 = StandardNormal.sample(rng);
        (center + self.bandwidth * noise).clamp(0.0, self.upper)
    }
}

/// One sampler per region, fitted on the smoothed overall cases of the day
/// range `calibration` (no inter-region coupling is assumed there).
pub fn estimate_region_distribution(
    smoothed: &RegionPanel,
    calibration: std::ops::Range<usize>,
) -> Result<Vec<KdeSampler>> {
    if calibration.end > smoothed.n_days() {
        return Err(Error::Parameter(format!(
            "calibration days {calibration:?} outside the {}-day panel",
            smoothed.n_days()
        )));
    }
    if calibration.len() < MIN_CALIBRATION_DAYS {
        return Err(Error::InsufficientData(format!(
            "calibration window has {} days, need at least {MIN_CALIBRATION_DAYS}",
            calibration.len()
        )));
    }
    (0..smoothed.n_regions())
        .map(|i| {
            let values: Vec<f64> = calibration.clone().map(|t| smoothed.overall_cases[(i, t)]).collect();
            KdeSampler::fit(&values)
        })
        .collect()
}
