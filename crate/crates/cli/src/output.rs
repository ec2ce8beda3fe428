//! Result files: CSV tables, fit summaries, provenance records and gnuplot
//! scripts.
//!
//! Fit summaries are always computed from the CSV bytes, never from the
//! in-memory results, so refitting a CSV file reproduces them exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use qtomo::harness::{CampaignResult, FloorPoint, FloorStatus};
use qtomo::{fit_power_law, ScalingFit};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const CAMPAIGN_CSV: &str = "campaign.csv";
pub const NOISE_CSV: &str = "noise_floors.csv";
pub const FIT_JSON: &str = "fit.json";
pub const PROVENANCE_JSON: &str = "provenance.json";
pub const GNUPLOT_SCRIPT: &str = "plot.gp";

pub const CAMPAIGN_HEADER: [&str; 6] =
    ["protocol", "N", "reps", "mean_infidelity", "stderr", "seed"];
pub const NOISE_HEADER: [&str; 8] = [
    "protocol",
    "E",
    "status",
    "N",
    "reps",
    "mean_infidelity",
    "stderr",
    "seed",
];

/// Positional decimal with 17 significant digits, enough to recover every
/// `f64` exactly.
pub fn decimal(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else {
            format!("{x}")
        };
    }
    let sci = format!("{:.16e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let body = if exp >= 16 {
        format!("{digits}{}", "0".repeat((exp - 16) as usize))
    } else if exp >= 0 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    if x < 0.0 {
        format!("-{body}")
    } else {
        body
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("writing to memory cannot fail")
}

pub fn campaign_csv(results: &[CampaignResult]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(CAMPAIGN_HEADER).expect("in-memory write");
    for result in results {
        let label = result.protocol.to_string();
        for row in &result.rows {
            w.write_record([
                label.clone(),
                row.n.to_string(),
                row.reps.to_string(),
                decimal(row.mean_infidelity),
                decimal(row.stderr),
                result.seed.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

/// One line of a noise-floor table: the floor of `protocol` at magnitude `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRow {
    pub protocol: String,
    pub point: FloorPoint,
    pub reps: usize,
    pub seed: u64,
}

pub fn noise_csv(rows: &[NoiseRow]) -> Vec<u8> {
    let mut w = csv_writer();
    w.write_record(NOISE_HEADER).expect("in-memory write");
    for row in rows {
        let (status, n, mean, stderr) = match row.point.status {
            FloorStatus::Converged { n, floor, stderr } => {
                ("converged", n, decimal(floor), decimal(stderr))
            }
            FloorStatus::NotConverged { n, mean_infidelity } => {
                ("not_converged", n, decimal(mean_infidelity), String::new())
            }
        };
        w.write_record([
            row.protocol.clone(),
            decimal(row.point.e),
            status.to_string(),
            n.to_string(),
            row.reps.to_string(),
            mean,
            stderr,
            row.seed.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitVariable {
    N,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub beta: f64,
    pub p: f64,
    pub sigma_p: f64,
    pub sigma_log_beta: f64,
    /// Smallest and largest fitted abscissa.
    pub range: [f64; 2],
}

impl From<ScalingFit> for FitSummary {
    fn from(f: ScalingFit) -> FitSummary {
        FitSummary {
            beta: f.beta,
            p: f.p,
            sigma_p: f.sigma_p,
            sigma_log_beta: f.sigma_log_beta,
            range: [f.n_min, f.n_max],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub protocol: String,
    /// Number of fitted points.
    pub points: usize,
    /// `None` with fewer than three points.
    pub fit: Option<FitSummary>,
}

/// Power-law fits `y = β x^p`, one per protocol, in order of first
/// appearance in the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub variable: FitVariable,
    pub fits: Vec<FitEntry>,
}

impl FitReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("serializable");
        out.push(b'\n');
        out
    }
}

fn bad_csv(msg: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("malformed CSV: {msg}"))
}

fn field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<T, CliError> {
    let raw = record.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        bad_csv(format!(
            "line {}: bad {name} {raw:?}",
            record.position().map_or(0, |p| p.line())
        ))
    })
}

/// Parses a campaign or noise-floor table, recognised by its header, and
/// fits every protocol in it.
pub fn fit_csv(bytes: &[u8]) -> Result<FitReport, CliError> {
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    let header = reader.headers().map_err(bad_csv)?.clone();
    let header: Vec<&str> = header.iter().collect();
    let (variable, x_col, y_col) = if header == CAMPAIGN_HEADER {
        (FitVariable::N, 1, 3)
    } else if header == NOISE_HEADER {
        (FitVariable::E, 1, 5)
    } else {
        return Err(bad_csv(format!("unrecognised header {header:?}")));
    };
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(bad_csv)?;
        let protocol = record.get(0).unwrap_or("").to_string();
        let x: f64 = field(&record, x_col, header[x_col])?;
        let y: f64 = field(&record, y_col, header[y_col])?;
        let keep = match variable {
            FitVariable::N => true,
            FitVariable::E => record.get(2) == Some("converged") && x > 0.0,
        };
        let idx = match groups.iter().position(|(p, _)| *p == protocol) {
            Some(i) => i,
            None => {
                groups.push((protocol, Vec::new()));
                groups.len() - 1
            }
        };
        if keep {
            groups[idx].1.push((x, y));
        }
    }
    let fits = groups
        .into_iter()
        .map(|(protocol, pts)| {
            let fit = if pts.len() >= 3 {
                Some(
                    fit_power_law(&pts)
                        .map_err(|e| CliError::Runtime(format!("fit of {protocol}: {e}")))?
                        .into(),
                )
            } else {
                None
            };
            Ok(FitEntry {
                protocol,
                points: pts.len(),
                fit,
            })
        })
        .collect::<Result<_, CliError>>()?;
    Ok(FitReport { variable, fits })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub version: String,
    pub config: RunConfig,
    /// Digest of each campaign specification, in output order.
    pub spec_hashes: Vec<String>,
}

impl Provenance {
    pub fn new(config: &RunConfig, spec_hashes: Vec<String>) -> Provenance {
        Provenance {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            spec_hashes,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("serializable");
        out.push(b'\n');
        out
    }
}

fn gnuplot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Log-log plot of column `y` against column `x`, one curve per protocol.
pub fn gnuplot_script(
    csv_name: &str,
    protocols: &[String],
    x: (usize, &str),
    y: (usize, &str),
    err: usize,
) -> String {
    let list = protocols.join(" ");
    format!(
        "set datafile separator \",\"\n\
         set logscale xy\n\
         set format y \"%g\"\n\
         set xlabel {xl}\n\
         set ylabel {yl}\n\
         set key top right\n\
         plot for [p in {list}] {file} every ::1 using {xc}:(strcol(1) eq p ? ${yc} : NaN):{ec} with yerrorlines title p\n",
        xl = gnuplot_quote(x.1),
        yl = gnuplot_quote(y.1),
        list = gnuplot_quote(&list),
        file = gnuplot_quote(csv_name),
        xc = x.0,
        yc = y.0,
        ec = err,
    )
}

/// Writes `bytes` to `dir/name` through a temporary file in `dir` and a
/// rename, so readers never observe a partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let io_err =
        |e: std::io::Error| CliError::Runtime(format!("cannot write {}: {e}", target.display()));
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(&target).map_err(|e| io_err(e.error))?;
    Ok(target)
}
