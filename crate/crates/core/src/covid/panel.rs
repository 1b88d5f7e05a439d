use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Daily case counts for `N` regions over `T` consecutive days.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPanel {
    /// Region identifiers in first-appearance order.
    pub regions: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `N × T` overall daily new cases.
    pub overall_cases: DMatrix<f64>,
    /// `N × T` region-specific daily new cases, when reconstructed.
    pub region_specific_cases: Option<DMatrix<f64>>,
    /// Negative counts clipped to zero during ingestion.
    pub clipped_negatives: usize,
}

impl RegionPanel {
    pub fn new(regions: Vec<String>, dates: Vec<NaiveDate>, overall_cases: DMatrix<f64>) -> Result<Self> {
        let panel = Self {
            regions,
            dates,
            overall_cases,
            region_specific_cases: None,
            clipped_negatives: 0,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, t) = (self.n_regions(), self.n_days());
        if self.overall_cases.shape() != (n, t) {
            return Err(Error::Dimension {
                expected: n * t,
                got: self.overall_cases.len(),
            });
        }
        if let Some(z) = &self.region_specific_cases {
            if z.shape() != (n, t) {
                return Err(Error::Dimension {
                    expected: n * t,
                    got: z.len(),
                });
            }
        }
        check_daily(&self.dates)?;
        if self.overall_cases.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("overall cases must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Columns `days` (a range of day indices) as a new panel.
    pub fn slice_days(&self, days: std::ops::Range<usize>) -> Result<Self> {
        if days.end > self.n_days() || days.is_empty() {
            return Err(Error::Parameter(format!("day range {days:?} outside 0..{}", self.n_days())));
        }
        let width = days.len();
        Ok(Self {
            regions: self.regions.clone(),
            dates: self.dates[days.clone()].to_vec(),
            overall_cases: self.overall_cases.columns(days.start, width).into_owned(),
            region_specific_cases: self
                .region_specific_cases
                .as_ref()
                .map(|z| z.columns(days.start, width).into_owned()),
            clipped_negatives: self.clipped_negatives,
        })
    }

    /// Index of `date`, if it lies in the panel.
    pub fn day_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Trailing moving average of every region's overall cases.
    pub fn smoothed(&self, window: usize) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.n_regions() {
            let row: Vec<f64> = self.overall_cases.row(i).iter().copied().collect();
            for (t, v) in moving_average(&row, window)?.into_iter().enumerate() {
                out.overall_cases[(i, t)] = v;
            }
        }
        Ok(out)
    }

    /// Writes the overall cases in the `date,region,new_cases` long format.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["date", "region", "new_cases"])?;
        for (t, date) in self.dates.iter().enumerate() {
            for (i, region) in self.regions.iter().enumerate() {
                w.write_record([
                    date.format(DATE_FORMAT).to_string(),
                    region.clone(),
                    self.overall_cases[(i, t)].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_daily(dates: &[NaiveDate]) -> Result<()> {
    if dates.is_empty() {
        return Err(Error::Ingest("panel has no dates".into()));
    }
    for pair in dates.windows(2) {
        if (pair[1] - pair[0]).num_days() != 1 {
            return Err(Error::Ingest(format!("non-daily gap between {} and {}", pair[0], pair[1])));
        }
    }
    Ok(())
}

/// Reads a `date,region,new_cases` CSV into a dense panel. Negative counts
/// are clipped to zero and counted.
pub fn ingest_csv(path: &Path) -> Result<RegionPanel> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["date", "region", "new_cases"] {
        return Err(Error::Ingest(format!(
            "{}: expected header date,region,new_cases, found {}",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut regions: Vec<String> = Vec::new();
    let mut region_index: HashMap<String, usize> = HashMap::new();
    let mut cells: HashMap<(NaiveDate, usize), f64> = HashMap::new();
    let mut clipped = 0;
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Ingest(format!("line {line}: expected 3 fields, found {}", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT)
            .map_err(|e| Error::Ingest(format!("line {line}: bad date {:?}: {e}", &record[0])))?;
        let region = record[1].to_string();
        if region.is_empty() {
            return Err(Error::Ingest(format!("line {line}: empty region")));
        }
        let mut value: f64 = record[2]
            .parse()
            .map_err(|_| Error::Ingest(format!("line {line}: bad count {:?}", &record[2])))?;
        if !value.is_finite() {
            return Err(Error::Ingest(format!("line {line}: non-finite count")));
        }
        if value < 0.0 {
            clipped += 1;
            value = 0.0;
        }
        let next = regions.len();
        let idx = *region_index.entry(region.clone()).or_insert_with(|| {
            regions.push(region.clone());
            next
        });
        if cells.insert((date, idx), value).is_some() {
            return Err(Error::Ingest(format!("line {line}: duplicate cell for {date} {region}")));
        }
    }
    if clipped > 0 {
        warn!("{}: clipped {clipped} negative counts to zero", path.display());
    }

    let mut dates: Vec<NaiveDate> = cells.keys().map(|(d, _)| *d).collect();
    dates.sort_unstable();
    dates.dedup();
    check_daily(&dates)?;

    let mut overall = DMatrix::zeros(regions.len(), dates.len());
    for (t, date) in dates.iter().enumerate() {
        for (i, region) in regions.iter().enumerate() {
            let value = cells
                .get(&(*date, i))
                .ok_or_else(|| Error::Ingest(format!("missing cell for {date} {region}")))?;
            overall[(i, t)] = *value;
        }
    }
    let mut panel = RegionPanel::new(regions, dates, overall)?;
    panel.clipped_negatives = clipped;
    Ok(panel)
}

/// `(abbreviation, name)` pairs from a `regions.csv` mapping file.
pub fn read_region_names(path: &Path) -> Result<Vec<(String, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Ingest(format!("{}: expected abbreviation,name rows", path.display())));
        }
        out.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(out)
}

/// Trailing mean over the last `min(window, t + 1)` values at each `t`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::Parameter("moving-average window must be >= 1".into()));
    }
    let out = (0..series.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            series[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64
        })
        .collect();
    Ok(out)
}
