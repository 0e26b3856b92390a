//! CSV and manifest files backing the heatmaps and time traces.
//!
//! Grid CSV: `alpha,beta,n_runs,mean_q,stderr_q,mean_tau,stderr_tau`, one row
//! per cell sorted by `(alpha, beta)`. Trace CSV: `alpha,beta,t,mean_q,stderr_q`,
//! sorted by `(alpha, beta, t)`. Reals use six significant digits, so equal
//! results produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{CellResult, GridResult, SweepConfig};

pub const GRID_HEADER: &str = "alpha,beta,n_runs,mean_q,stderr_q,mean_tau,stderr_tau";
pub const TRACE_HEADER: &str = "alpha,beta,t,mean_q,stderr_q";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("tracing is disabled in the config; set `trace` to record traces")]
    NoTrace,
}

/// Formats like C's `%.6g`: six significant digits, trailing zeros dropped.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if x.is_nan() {
        return "NaN".to_owned();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_owned();
    }
    if x == 0.0 {
        return "0".to_owned();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..DIGITS).contains(&exp) {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        trim_zeros(&format!("{:.*}", (DIGITS - 1 - exp) as usize, x)).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sorted_cells(grid: &GridResult) -> Vec<&CellResult> {
    let mut cells: Vec<&CellResult> = grid.cells.iter().collect();
    cells.sort_by(|a, b| {
        a.summary
            .alpha
            .total_cmp(&b.summary.alpha)
            .then(a.summary.beta.total_cmp(&b.summary.beta))
    });
    cells
}

pub fn render_grid_csv(grid: &GridResult) -> String {
    let mut out = String::new();
    out.push_str(GRID_HEADER);
    out.push('\n');
    for cell in sorted_cells(grid) {
        let s = &cell.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_sig(s.alpha),
            format_sig(s.beta),
            s.n_runs,
            format_sig(s.mean_q),
            format_sig(s.stderr_q),
            format_sig(s.mean_tau),
            format_sig(s.stderr_tau),
        )
        .expect("writing to a String");
    }
    out
}

pub fn render_trace_csv(grid: &GridResult) -> Result<String, OutputError> {
    if grid.config.trace.is_none() {
        return Err(OutputError::NoTrace);
    }
    let mut out = String::new();
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for cell in sorted_cells(grid) {
        let points = cell.trace.as_ref().ok_or(OutputError::NoTrace)?;
        for p in points {
            writeln!(
                out,
                "{},{},{},{},{}",
                format_sig(cell.summary.alpha),
                format_sig(cell.summary.beta),
                p.t,
                format_sig(p.mean_q),
                format_sig(p.stderr_q),
            )
            .expect("writing to a String");
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_grid_csv(grid: &GridResult, path: &Path) -> Result<(), OutputError> {
    write_file(path, &render_grid_csv(grid))
}

pub fn write_trace_csv(grid: &GridResult, path: &Path) -> Result<(), OutputError> {
    write_file(path, &render_trace_csv(grid)?)
}

/// Provenance record written next to the data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: SweepConfig,
    pub master_seed: u64,
    /// RFC 3339, UTC.
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn start(config: &SweepConfig) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: config.clone(),
            master_seed: config.master_seed,
            started_at: now(),
            finished_at: String::new(),
            files: Vec::new(),
        }
    }

    pub fn finish(&mut self, files: Vec<String>) {
        self.files = files;
        self.finished_at = now();
    }

    pub fn write(&self, path: &Path) -> Result<(), OutputError> {
        let json = serde_json::to_string_pretty(self).expect("manifest is always serializable");
        write_file(path, &(json + "\n"))
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_grid, TraceSpec};
    use crate::metrics::{CellSummary, TraceScale, TraceSummary};

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(2.0 / 3.0), "0.666667");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.05), "0.05");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(-0.25), "-0.25");
        assert_eq!(format_sig(123456.7), "123457");
        assert_eq!(format_sig(1234567.0), "1.23457e6");
        assert_eq!(format_sig(0.000123456789), "0.000123457");
        assert_eq!(format_sig(1.5e-7), "1.5e-7");
        assert_eq!(format_sig(999999.7), "1e6");
        assert_eq!(format_sig(f64::NAN), "NaN");
    }

    fn cell(ai: usize, bi: usize, alpha: f64, beta: f64, traced: bool) -> CellResult {
        CellResult {
            alpha_index: ai,
            beta_index: bi,
            summary: CellSummary {
                alpha,
                beta,
                n_runs: 3,
                mean_q: 0.6,
                stderr_q: 0.01,
                mean_tau: 0.5,
                stderr_tau: 0.02,
            },
            trace: traced.then(|| {
                vec![
                    TraceSummary { t: 10, mean_q: 0.55, stderr_q: 0.01 },
                    TraceSummary { t: 100, mean_q: 0.6, stderr_q: 0.01 },
                ]
            }),
        }
    }

    #[test]
    fn grid_rows_sorted_by_value() {
        let mut config = SweepConfig::new(vec![2.0, 0.5], vec![0.9, 0.1]);
        config.trace = Some(TraceSpec { points: 2, scale: TraceScale::Linear });
        let grid = GridResult {
            config,
            cells: vec![
                cell(0, 0, 2.0, 0.9, true),
                cell(0, 1, 2.0, 0.1, true),
                cell(1, 0, 0.5, 0.9, true),
                cell(1, 1, 0.5, 0.1, true),
            ],
        };
        let csv = render_grid_csv(&grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], GRID_HEADER);
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "0.5,0.1,3,0.6,0.01,0.5,0.02");
        assert!(lines[4].starts_with("2,0.9,"));

        let trace = render_trace_csv(&grid).unwrap();
        let lines: Vec<&str> = trace.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 9);
        assert_eq!(lines[1], "0.5,0.1,10,0.55,0.01");
        assert_eq!(lines[2], "0.5,0.1,100,0.6,0.01");
    }

    #[test]
    fn trace_requires_tracing() {
        let grid = GridResult {
            config: SweepConfig::new(vec![1.0], vec![0.5]),
            cells: vec![cell(0, 0, 1.0, 0.5, false)],
        };
        assert!(matches!(render_trace_csv(&grid), Err(OutputError::NoTrace)));
        assert_eq!(render_grid_csv(&grid).lines().count(), 2);
    }

    #[test]
    fn files_are_written_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = SweepConfig::new(vec![1.0], vec![0.2, 0.6]);
        config.n_items = 10;
        config.steps = 500;
        config.n_runs = 4;
        config.trace = Some(TraceSpec { points: 5, scale: TraceScale::Log });
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_grid_csv(&run_grid(&config).unwrap(), &a).unwrap();
        write_grid_csv(&run_grid(&config).unwrap(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        let grid = run_grid(&config).unwrap();
        let t = dir.path().join("t.csv");
        write_trace_csv(&grid, &t).unwrap();
        let text = fs::read_to_string(&t).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);

        let bad = dir.path().join("missing").join("x.csv");
        assert!(matches!(write_grid_csv(&grid, &bad), Err(OutputError::Io { .. })));
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let config = SweepConfig::new(vec![1.0], vec![0.5]);
        let mut m = RunManifest::start(&config);
        m.finish(vec!["grid.csv".into()]);
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        let back: RunManifest = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(!back.finished_at.is_empty());
    }
}
