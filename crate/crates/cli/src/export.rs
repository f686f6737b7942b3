//! CSV and JSON result tables.
//!
//! Floats are written with 17 significant digits in CSV, so every value parses
//! back to the same bits. An infeasible cell has `pcrb_theta` = NaN in CSV and
//! null in JSON.

use std::f64::consts::LN_2;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use isac_beamkit::bench::ResultRow;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const COLUMNS: [&str; 10] = [
    "sweep_var",
    "value",
    "scheme",
    "trial",
    "pcrb_theta",
    "rate_nats",
    "rate_bits",
    "iterations",
    "feasible",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Exported form of a [`ResultRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub sweep_var: String,
    pub value: f64,
    pub scheme: String,
    pub trial: usize,
    pub pcrb_theta: Option<f64>,
    pub rate_nats: f64,
    pub rate_bits: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub wall_ms: f64,
}

impl Record {
    pub fn from_row(r: &ResultRow) -> Self {
        Record {
            sweep_var: r.sweep_var.clone(),
            value: r.value,
            scheme: r.scheme.clone(),
            trial: r.trial,
            pcrb_theta: if r.pcrb_theta.is_nan() { None } else { Some(r.pcrb_theta) },
            rate_nats: r.rate_nats,
            rate_bits: r.rate_nats / LN_2,
            iterations: r.iterations,
            feasible: r.feasible,
            wall_ms: r.wall_ms,
        }
    }

    pub fn to_row(&self) -> ResultRow {
        ResultRow {
            sweep_var: self.sweep_var.clone(),
            value: self.value,
            scheme: self.scheme.clone(),
            trial: self.trial,
            pcrb_theta: self.pcrb_theta.unwrap_or(f64::NAN),
            rate_nats: self.rate_nats,
            iterations: self.iterations,
            feasible: self.feasible,
            wall_ms: self.wall_ms,
        }
    }

    /// Internal consistency of a re-loaded record.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |what: &str| Err(CliError::Config(format!("row {} ({}): {what}", self.trial, self.scheme)));
        if self.rate_bits.to_bits() != (self.rate_nats / LN_2).to_bits() {
            return bad("rate_bits is not rate_nats / ln 2");
        }
        match (self.feasible, self.pcrb_theta) {
            (true, Some(p)) if p.is_finite() && p > 0.0 => {}
            (false, None) => {}
            _ => return bad("pcrb_theta must be positive exactly when the cell is feasible"),
        }
        if !(self.value.is_finite() && self.rate_nats.is_finite() && self.rate_nats >= 0.0 && self.wall_ms >= 0.0) {
            return bad("non-finite or negative field");
        }
        Ok(())
    }

    fn csv_fields(&self) -> [String; 10] {
        [
            self.sweep_var.clone(),
            fmt_f64(self.value),
            self.scheme.clone(),
            self.trial.to_string(),
            fmt_f64(self.pcrb_theta.unwrap_or(f64::NAN)),
            fmt_f64(self.rate_nats),
            fmt_f64(self.rate_bits),
            self.iterations.to_string(),
            self.feasible.to_string(),
            fmt_f64(self.wall_ms),
        ]
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record(Record::from_row(r).csv_fields()).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn rows_to_json(rows: &[ResultRow]) -> Result<Vec<u8>, CliError> {
    let recs: Vec<Record> = rows.iter().map(Record::from_row).collect();
    let mut out = serde_json::to_vec_pretty(&recs).map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

/// Writes a result table.
pub fn export(rows: &[ResultRow], path: &Path, format: Format) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Usage("nothing to export".into()));
    }
    let bytes = match format {
        Format::Csv => rows_to_csv(rows)?,
        Format::Json => rows_to_json(rows)?,
    };
    write_bytes(path, &bytes)
}

fn parse_f64(field: &str, name: &str) -> Result<f64, CliError> {
    field
        .parse()
        .map_err(|_| CliError::Config(format!("{name}: `{field}` is not a number")))
}

fn parse_int(field: &str, name: &str) -> Result<usize, CliError> {
    field
        .parse()
        .map_err(|_| CliError::Config(format!("{name}: `{field}` is not a count")))
}

/// Reads a table written by [`export`] and validates every record.
pub fn read_records(path: &Path, format: Format) -> Result<Vec<Record>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let recs = match format {
        Format::Json => serde_json::from_str::<Vec<Record>>(&text).map_err(|e| CliError::Config(e.to_string()))?,
        Format::Csv => {
            let mut rd = csv::Reader::from_reader(text.as_bytes());
            let header = rd.headers().map_err(|e| CliError::Config(e.to_string()))?.clone();
            if header.iter().ne(COLUMNS) {
                return Err(CliError::Config(format!("unexpected CSV header {header:?}")));
            }
            let mut out = Vec::new();
            for rec in rd.records() {
                let rec = rec.map_err(|e| CliError::Config(e.to_string()))?;
                let pcrb = parse_f64(&rec[4], "pcrb_theta")?;
                out.push(Record {
                    sweep_var: rec[0].to_string(),
                    value: parse_f64(&rec[1], "value")?,
                    scheme: rec[2].to_string(),
                    trial: parse_int(&rec[3], "trial")?,
                    pcrb_theta: if pcrb.is_nan() { None } else { Some(pcrb) },
                    rate_nats: parse_f64(&rec[5], "rate_nats")?,
                    rate_bits: parse_f64(&rec[6], "rate_bits")?,
                    iterations: parse_int(&rec[7], "iterations")?,
                    feasible: rec[8]
                        .parse()
                        .map_err(|_| CliError::Config(format!("feasible: `{}` is not a bool", &rec[8])))?,
                    wall_ms: parse_f64(&rec[9], "wall_ms")?,
                });
            }
            out
        }
    };
    for r in &recs {
        r.validate()?;
    }
    Ok(recs)
}

/// (θ, power) curve as CSV or JSON.
pub fn pattern_bytes(curve: &[(f64, f64)], format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let err = |e: csv::Error| CliError::Io(e.to_string());
            w.write_record(["theta", "power"]).map_err(err)?;
            for &(t, p) in curve {
                w.write_record([fmt_f64(t), fmt_f64(p)]).map_err(err)?;
            }
            w.into_inner().map_err(|e| CliError::Io(e.to_string()))
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Point {
                theta: f64,
                power: f64,
            }
            let pts: Vec<Point> = curve.iter().map(|&(theta, power)| Point { theta, power }).collect();
            let mut out = serde_json::to_vec_pretty(&pts).map_err(|e| CliError::Io(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
    }
}
