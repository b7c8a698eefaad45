use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::harness::{BenchmarkRow, TrackRow, Variant};
use crate::tracking::ErrorSummary;

use super::{load_with, with_path, write_bytes};

/// Relative slack allowed between a stored `error_m` and the distance
/// implied by the position columns.
const ERROR_COLUMN_SLACK: f64 = 1e-9;

#[derive(Debug, Serialize, Deserialize)]
struct TrackRecord {
    k: u64,
    x_hat: f64,
    y_hat: f64,
    x_true: Option<f64>,
    y_true: Option<f64>,
    error_m: Option<f64>,
}

/// One benchmark run as written to the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub variant: Variant,
    pub scenario: String,
    pub seed: u64,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

impl From<&BenchmarkRow> for BenchmarkRecord {
    fn from(row: &BenchmarkRow) -> Self {
        BenchmarkRecord {
            variant: row.variant,
            scenario: row.scenario.clone(),
            seed: row.seed,
            mean: row.summary.mean,
            median: row.summary.median,
            p95: row.summary.p95,
            max: row.summary.max,
        }
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

fn write_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::param("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn read_csv<T: DeserializeOwned>(text: &str, trim: csv::Trim) -> Result<Vec<(usize, T)>> {
    let mut r = csv::ReaderBuilder::new().trim(trim).from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec.deserialize(Some(&headers)).map_err(|e| Error::parse(line, e.to_string()))?));
    }
    Ok(out)
}

/// Header `k,x_hat,y_hat,x_true,y_true,error_m`; truth columns are empty
/// for frames without ground truth.
pub fn format_track_csv(rows: &[TrackRow]) -> Result<String> {
    if rows.is_empty() {
        return Ok("k,x_hat,y_hat,x_true,y_true,error_m\n".into());
    }
    write_csv(rows.iter().map(|r| TrackRecord {
        k: r.k,
        x_hat: r.estimate.x,
        y_hat: r.estimate.y,
        x_true: r.truth.map(|t| t.x),
        y_true: r.truth.map(|t| t.y),
        error_m: r.error(),
    }))
}

pub fn parse_track_csv(text: &str) -> Result<Vec<TrackRow>> {
    let mut rows: Vec<TrackRow> = Vec::new();
    for (line, rec) in read_csv::<TrackRecord>(text, csv::Trim::All)? {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(line, format!("{what} must be finite")))
            }
        };
        if rows.last().is_some_and(|prev| rec.k <= prev.k) {
            return Err(Error::parse(line, format!("frame index {} is not increasing", rec.k)));
        }
        let estimate = Point::new(finite(rec.x_hat, "x_hat")?, finite(rec.y_hat, "y_hat")?);
        let truth = match (rec.x_true, rec.y_true) {
            (Some(x), Some(y)) => Some(Point::new(finite(x, "x_true")?, finite(y, "y_true")?)),
            (None, None) => None,
            _ => return Err(Error::parse(line, "x_true and y_true must both be present or both empty")),
        };
        let row = TrackRow { k: rec.k, estimate, truth };
        match (row.error(), rec.error_m) {
            (None, None) => {}
            (Some(e), Some(stored)) if (e - stored).abs() <= ERROR_COLUMN_SLACK * e.max(1.0) => {}
            _ => return Err(Error::parse(line, "error_m does not match the position columns")),
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn format_benchmark_csv(records: &[BenchmarkRecord]) -> Result<String> {
    if records.is_empty() {
        return Ok("variant,scenario,seed,mean,median,p95,max\n".into());
    }
    write_csv(records)
}

pub fn parse_benchmark_csv(text: &str) -> Result<Vec<BenchmarkRecord>> {
    // scenario names keep their whitespace
    Ok(read_csv(text, csv::Trim::None)?.into_iter().map(|(_, r)| r).collect())
}

/// Empirical CDF as `error_m,fraction` rows.
pub fn format_cdf_csv(summary: &ErrorSummary) -> Result<String> {
    #[derive(Serialize)]
    struct Row {
        error_m: f64,
        fraction: f64,
    }
    write_csv(summary.cdf.iter().map(|&(error_m, fraction)| Row { error_m, fraction }))
}

pub fn load_track_csv(path: impl AsRef<Path>) -> Result<Vec<TrackRow>> {
    load_with(path.as_ref(), parse_track_csv)
}

pub fn save_track_csv(path: impl AsRef<Path>, rows: &[TrackRow]) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_track_csv(rows))?)
}

pub fn load_benchmark_csv(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord>> {
    load_with(path.as_ref(), parse_benchmark_csv)
}

pub fn save_benchmark_csv(path: impl AsRef<Path>, records: &[BenchmarkRecord]) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_benchmark_csv(records))?)
}

pub fn save_cdf_csv(path: impl AsRef<Path>, summary: &ErrorSummary) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, with_path(path, format_cdf_csv(summary))?)
}
