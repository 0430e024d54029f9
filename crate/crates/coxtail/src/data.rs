//! Dataset representation, CSV ingestion, validation and ordering.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A right-censored survival dataset: observation times `t_i = min(X_i, C_i)`,
/// failure indicators `delta_i` and covariate vectors `z_i`.
///
/// The sample carries a fixed permutation putting observations in descending
/// time order `t_(1) >= ... >= t_(n)`. Ties are broken by putting events
/// before censorings, then by input row order. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurvivalSample {
    times: Vec<f64>,
    status: Vec<bool>,
    covariates: Vec<f64>, // row-major, n * p
    n_covariates: usize,
    order: Vec<usize>,
}

/// Summary counts for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDiagnostics {
    pub n: usize,
    pub event_count: usize,
    pub censoring_rate: f64,
    pub max_time: f64,
    pub max_time_censored: bool,
}

impl SurvivalSample {
    /// Build and validate a sample. `covariates` is row-major with
    /// `n_covariates` columns; it may be empty when `n_covariates == 0`.
    pub fn new(
        times: Vec<f64>,
        status: Vec<bool>,
        covariates: Vec<f64>,
        n_covariates: usize,
    ) -> Result<Self> {
        let n = times.len();
        if status.len() != n {
            return Err(Error::domain(format!(
                "status length {} does not match time length {}",
                status.len(),
                n
            )));
        }
        if covariates.len() != n * n_covariates {
            return Err(Error::domain(format!(
                "covariate matrix has {} cells, expected {} ({} rows x {} columns)",
                covariates.len(),
                n * n_covariates,
                n,
                n_covariates
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::domain(format!(
                    "time at row {i} must be strictly positive and finite (got {t})"
                )));
            }
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("covariates must be finite (missing cells are rejected)"));
        }

        let mut order: Vec<usize> = (0..n).collect();
        // Descending time; events before censorings at equal time; stable on
        // full ties (sort_by is stable, so input order is preserved).
        order.sort_by(|&a, &b| {
            times[b]
                .partial_cmp(&times[a])
                .expect("times are finite")
                .then_with(|| status[b].cmp(&status[a]))
        });

        Ok(Self { times, status, covariates, n_covariates, order })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn is_event(&self, i: usize) -> bool {
        self.status[i]
    }

    pub fn covariates_of(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.n_covariates..(i + 1) * self.n_covariates]
    }

    /// Permutation of row indices giving descending time order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Row index of the observation with descending rank `r` (1-based:
    /// rank 1 is the largest time).
    pub fn row_at_rank(&self, r: usize) -> usize {
        self.order[r - 1]
    }

    /// Observation time at descending rank `r` (1-based).
    pub fn time_at_rank(&self, r: usize) -> f64 {
        self.times[self.order[r - 1]]
    }

    pub fn event_count(&self) -> usize {
        self.status.iter().filter(|&&d| d).count()
    }

    pub fn max_time(&self) -> Option<f64> {
        self.order.first().map(|&i| self.times[i])
    }

    /// Smallest observed time >= `tau`, used to snap user thresholds onto
    /// the observed grid. `None` when every observation is below `tau`.
    pub fn snap_time_up(&self, tau: f64) -> Option<f64> {
        self.order
            .iter()
            .rev()
            .map(|&i| self.times[i])
            .find(|&t| t >= tau)
    }

    pub fn diagnostics(&self) -> Result<DatasetDiagnostics> {
        let n = self.n();
        if n == 0 {
            return Err(Error::domain("diagnostics are undefined on an empty sample"));
        }
        let event_count = self.event_count();
        let first = self.order[0];
        Ok(DatasetDiagnostics {
            n,
            event_count,
            censoring_rate: 1.0 - event_count as f64 / n as f64,
            max_time: self.times[first],
            max_time_censored: !self.status[first],
        })
    }
}

/// Read a dataset from CSV with header `time,status,z1,...,zp`.
///
/// Cells are `.`-decimal numerics; lines starting with `#` are skipped.
/// `status` must be `0` or `1` and times strictly positive.
pub fn load_dataset<R: Read>(reader: R) -> Result<SurvivalSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    if headers.len() < 2 || headers[0].trim() != "time" || headers[1].trim() != "status" {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with `time,status` (got `{}`)", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let n_covariates = headers.len() - 2;

    let mut times = Vec::new();
    let mut status = Vec::new();
    let mut covariates = Vec::new();

    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        let parse_cell = |idx: usize| -> Result<f64> {
            record[idx].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cell `{}` (column `{}`) is not numeric", &record[idx], &headers[idx]),
            })
        };

        let t = parse_cell(0)?;
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain(format!(
                "time must be strictly positive and finite at line {line} (got {t})"
            )));
        }
        let s = parse_cell(1)?;
        let delta = if s == 0.0 {
            false
        } else if s == 1.0 {
            true
        } else {
            return Err(Error::domain(format!("status must be 0 or 1 at line {line} (got {s})")));
        };
        times.push(t);
        status.push(delta);
        for idx in 2..headers.len() {
            covariates.push(parse_cell(idx)?);
        }
    }

    SurvivalSample::new(times, status, covariates, n_covariates)
}

pub fn load_dataset_path(path: &std::path::Path) -> Result<SurvivalSample> {
    load_dataset(std::fs::File::open(path)?)
}

/// Serialize a sample back to the CSV interchange format (input row order).
pub fn write_dataset<W: Write>(sample: &SurvivalSample, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "status".to_string()];
    for j in 1..=sample.n_covariates() {
        header.push(format!("z{j}"));
    }
    wtr.write_record(&header).map_err(io_err)?;
    for i in 0..sample.n() {
        let mut row = vec![format!("{}", sample.time(i)), format!("{}", u8::from(sample.is_event(i)))];
        for v in sample.covariates_of(i) {
            row.push(format!("{v}"));
        }
        wtr.write_record(&row).map_err(io_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> Error {
    Error::domain(format!("csv write failed: {e}"))
}
