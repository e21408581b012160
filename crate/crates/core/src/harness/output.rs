//! Result files: `raw.csv`, `summary.csv` and the `run.json` sidecar.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back gives the exact in-memory values. Empty fields mean "not
//! applicable".

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{BallDistance, ExperimentResult, RateSlope, ReplicateRow, SummaryRow, WallTime};
use super::HarnessError;

pub const RAW_FILE: &str = "raw.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUN_FILE: &str = "run.json";

pub const RAW_HEADER: &str = "statistic,point,n,eps,replicate,seed,value";
pub const SUMMARY_HEADER: &str = "statistic,point,theta,x,n,eps,replicates,center,sigma2,mean,emp_var,var_ratio,ks";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn joined(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_raw_csv<W: Write>(rows: &[ReplicateRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{RAW_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{},{}", r.statistic, opt(r.point), r.n, r.eps, r.replicate, r.seed, r.value)?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.statistic,
            opt(r.point),
            joined(&r.theta),
            joined(&r.x),
            r.n,
            r.eps,
            r.replicates,
            opt(r.center),
            opt(r.sigma2),
            r.mean,
            r.emp_var,
            opt(r.var_ratio),
            opt(r.ks)
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunSidecar<'a> {
    status: &'static str,
    failure: Option<&'a str>,
    version: &'a str,
    config_hash: &'a str,
    config: &'a str,
    advisories: &'a [String],
    wall_times: &'a [WallTime],
    ball_distances: &'a [BallDistance],
    rate_slopes: &'a [RateSlope],
    identity_max_diff: Option<f64>,
    raw_rows: usize,
    summary_rows: usize,
}

/// The `run.json` text.
pub fn run_json(res: &ExperimentResult) -> String {
    let sidecar = RunSidecar {
        status: if res.is_complete() { "complete" } else { "failed" },
        failure: res.failure.as_deref(),
        version: res.version,
        config_hash: &res.config_hash,
        config: &res.config.to_toml_string(),
        advisories: &res.advisories,
        wall_times: &res.wall_times,
        ball_distances: &res.ball_distances,
        rate_slopes: &res.rate_slopes,
        identity_max_diff: res.identity_max_diff,
        raw_rows: res.raw.len(),
        summary_rows: res.summary.len(),
    };
    serde_json::to_string_pretty(&sidecar).expect("sidecar serializes")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<(), HarnessError> {
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
}

/// Writes the three result files into an existing directory.
pub fn write_results(res: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }
    write_file(dir.join(RAW_FILE), |w| write_raw_csv(&res.raw, w))?;
    write_file(dir.join(SUMMARY_FILE), |w| write_summary_csv(&res.summary, w))?;
    write_file(dir.join(RUN_FILE), |w| writeln!(w, "{}", run_json(res)))
}

/// Problems reading a results file back.
#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: &'static str, found: String },
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
}

fn field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<T, ParseError> {
    s.parse().map_err(|_| ParseError::Field { line, message: format!("bad {name} `{s}`") })
}

fn opt_field<T: std::str::FromStr>(s: &str, line: usize, name: &str) -> Result<Option<T>, ParseError> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s, line, name).map(Some)
    }
}

fn floats(s: &str, line: usize, name: &str) -> Result<Vec<f64>, ParseError> {
    s.split_whitespace().map(|t| field(t, line, name)).collect()
}

fn split_rows<'a>(text: &'a str, header: &'static str, width: usize) -> Result<Vec<(usize, Vec<&'a str>)>, ParseError> {
    let mut lines = text.lines();
    let found = lines.next().unwrap_or_default();
    if found != header {
        return Err(ParseError::Header { expected: header, found: found.to_string() });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != width {
                return Err(ParseError::Field { line: i + 2, message: format!("expected {width} columns, found {}", cols.len()) });
            }
            Ok((i + 2, cols))
        })
        .collect()
}

pub fn parse_raw_csv(text: &str) -> Result<Vec<ReplicateRow>, ParseError> {
    split_rows(text, RAW_HEADER, 7)?
        .into_iter()
        .map(|(line, c)| {
            Ok(ReplicateRow {
                statistic: c[0].to_string(),
                point: opt_field(c[1], line, "point")?,
                n: field(c[2], line, "n")?,
                eps: field(c[3], line, "eps")?,
                replicate: field(c[4], line, "replicate")?,
                seed: field(c[5], line, "seed")?,
                value: field(c[6], line, "value")?,
            })
        })
        .collect()
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, ParseError> {
    split_rows(text, SUMMARY_HEADER, 13)?
        .into_iter()
        .map(|(line, c)| {
            Ok(SummaryRow {
                statistic: c[0].to_string(),
                point: opt_field(c[1], line, "point")?,
                theta: floats(c[2], line, "theta")?,
                x: floats(c[3], line, "x")?,
                n: field(c[4], line, "n")?,
                eps: field(c[5], line, "eps")?,
                replicates: field(c[6], line, "replicates")?,
                center: opt_field(c[7], line, "center")?,
                sigma2: opt_field(c[8], line, "sigma2")?,
                mean: field(c[9], line, "mean")?,
                emp_var: field(c[10], line, "emp_var")?,
                var_ratio: opt_field(c[11], line, "var_ratio")?,
                ks: opt_field(c[12], line, "ks")?,
            })
        })
        .collect()
}
