//! Delay sweeps, CSV output and quadratic fits.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ExperimentConfig, SweepMode};
use crate::protocol::{run_one_round, run_two_rounds, ProtocolError, RoundConfig, RoundResult, TwoRoundConfig};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("delay {delay_ms} ms, mode {mode}: {source}")]
    Point {
        delay_ms: f64,
        mode: &'static str,
        #[source]
        source: ProtocolError,
    },
    #[error("quadratic fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("CSV line {line}: {message}")]
    Csv { line: usize, message: String },
}

pub const CSV_HEADER: &str = "delay_ms,mode,f_x,f_y,f_z,F_e,s00,s10,s01,s11";

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delay_ms: f64,
    pub mode: SweepMode,
    pub f_x: f64,
    pub f_y: f64,
    pub f_z: f64,
    pub f_e: f64,
    /// Input-averaged `[s00, s10, s01, s11]`; absent for unencoded runs.
    pub syndromes: Option<[f64; 4]>,
}

impl SweepRow {
    pub fn from_result(delay_ms: f64, mode: SweepMode, r: &RoundResult) -> Self {
        Self {
            delay_ms,
            mode,
            f_x: r.f_x,
            f_y: r.f_y,
            f_z: r.f_z,
            f_e: r.entanglement_fidelity,
            syndromes: r.mean_syndromes(),
        }
    }
}

fn run_point(cfg: &ExperimentConfig, delay_ms: f64, mode: SweepMode) -> Result<SweepRow, SweepError> {
    let result = match mode {
        SweepMode::OneRound(m) => run_one_round(&RoundConfig {
            gate_error: cfg.gate_error,
            ancilla_order: cfg.ancilla_order,
            ..RoundConfig::new(m, cfg.channel.clone(), delay_ms)
        }),
        SweepMode::TwoRounds => run_two_rounds(&TwoRoundConfig {
            ideal_ancillae: cfg.two_rounds.ideal_ancillae,
            gate_error: cfg.two_rounds.gate_error,
            ancilla_order: cfg.ancilla_order,
            ..TwoRoundConfig::new(cfg.channel.clone(), delay_ms)
        }),
    }
    .map_err(|source| SweepError::Point {
        delay_ms,
        mode: mode.name(),
        source,
    })?;
    Ok(SweepRow::from_result(delay_ms, mode, &result))
}

/// Runs every (delay, mode) point. Points are evaluated in parallel; rows come
/// back ordered by delay, then by the configured mode order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, SweepError> {
    let points: Vec<(f64, SweepMode)> = cfg
        .delays_ms
        .iter()
        .flat_map(|&d| cfg.modes.iter().map(move |&m| (d, m)))
        .collect();
    points.par_iter().map(|&(d, m)| run_point(cfg, d, m)).collect()
}

/// `%g`-style formatting with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    }
}

/// Values below this magnitude are floating-point residue and print as `0`.
pub const CSV_ZERO: f64 = 1e-12;

fn cell(x: f64) -> String {
    format_sig6(if x.abs() < CSV_ZERO { 0.0 } else { x })
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            format_sig6(r.delay_ms),
            r.mode.name(),
            cell(r.f_x),
            cell(r.f_y),
            cell(r.f_z),
            cell(r.f_e)
        );
        match r.syndromes {
            Some(s) => {
                for v in s {
                    let _ = write!(out, ",{}", cell(v));
                }
            }
            None => out.push_str(",,,,"),
        }
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>, SweepError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(SweepError::Csv {
                line: 1,
                message: format!("expected header '{CSV_HEADER}'"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SweepError::Csv { line: line_no, message };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(err(format!("expected 10 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
        let mode = cols[1].parse::<SweepMode>().map_err(&err)?;
        let syndromes = if cols[6..].iter().all(|c| c.trim().is_empty()) {
            None
        } else {
            Some([num(cols[6])?, num(cols[7])?, num(cols[8])?, num(cols[9])?])
        };
        rows.push(SweepRow {
            delay_ms: num(cols[0])?,
            mode,
            f_x: num(cols[2])?,
            f_y: num(cols[3])?,
            f_z: num(cols[4])?,
            f_e: num(cols[5])?,
            syndromes,
        });
    }
    Ok(rows)
}

/// A gnuplot script plotting `F_e` against delay, one curve per mode.
pub fn gnuplot_script(csv_path: &str, modes: &[SweepMode]) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str("set xlabel 'delay (ms)'\nset ylabel 'entanglement fidelity'\nset yrange [0:1.05]\n");
    let curves: Vec<String> = modes
        .iter()
        .map(|m| {
            format!(
                "'{csv_path}' using 1:(strcol(2) eq '{name}' ? $6 : 1/0) with linespoints title '{name}'",
                name = m.name()
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", curves.join(", \\\n     "));
    s
}

/// Least-squares `F_e = c0 + c1 t + c2 t^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// `F_e - fit` at each point, in row order.
    pub residuals: Vec<f64>,
}

impl QuadraticFit {
    pub fn rms_residual(&self) -> f64 {
        (self.residuals.iter().map(|r| r * r).sum::<f64>() / self.residuals.len() as f64).sqrt()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.c0 + self.c1 * t + self.c2 * t * t
    }
}

/// Fits the rows of one mode.
pub fn fit_quadratic(rows: &[SweepRow], mode: SweepMode) -> Result<QuadraticFit, SweepError> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.mode == mode).map(|r| (r.delay_ms, r.f_e)).collect();
    fit_points(&pts)
}

pub fn fit_points(pts: &[(f64, f64)]) -> Result<QuadraticFit, SweepError> {
    if pts.len() < 3 {
        return Err(SweepError::TooFewPoints(pts.len()));
    }
    let a = DMatrix::from_fn(pts.len(), 3, |i, k| pts[i].0.powi(k as i32));
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).map_err(|_| SweepError::TooFewPoints(pts.len()))?;
    let residuals = (&b - &a * &c).iter().copied().collect();
    Ok(QuadraticFit {
        c0: c[0],
        c1: c[1],
        c2: c[2],
        residuals,
    })
}

/// Human-readable fit table, one line per mode.
pub fn fit_report(rows: &[SweepRow], modes: &[SweepMode]) -> String {
    let mut s = String::from("mode,c0,c1,c2,rms_residual\n");
    for &m in modes {
        if let Ok(fit) = fit_quadratic(rows, m) {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                m.name(),
                format_sig6(fit.c0),
                format_sig6(fit.c1),
                format_sig6(fit.c2),
                format_sig6(fit.rms_residual())
            );
        }
    }
    s
}

/// Index (1 = s10, 2 = s01, 3 = s11) of the error syndrome carrying the most
/// weight over all rows of `mode`.
pub fn dominant_error_syndrome(rows: &[SweepRow], mode: SweepMode) -> Option<usize> {
    let mut totals = [0.0; 4];
    let mut any = false;
    for s in rows.iter().filter(|r| r.mode == mode).filter_map(|r| r.syndromes) {
        any = true;
        for k in 0..4 {
            totals[k] += s[k];
        }
    }
    if !any {
        return None;
    }
    (1..4).max_by(|&a, &b| totals[a].total_cmp(&totals[b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::protocol::Mode;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.123456789), "0.123457");
        assert_eq!(format_sig6(-0.5), "-0.5");
        assert_eq!(format_sig6(1.234e-9), "1.234e-9");
        assert_eq!(format_sig6(-1e-17), "-1e-17");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(1234567.0), "1.23457e6");
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(-0.0000001), "-1e-7");
    }

    #[test]
    fn identity_channel_point() {
        let cfg = parse_config("[system]\nbuiltin: malonic\n[sweep]\nmodes = corrected, unencoded\ndelays = 0\n").unwrap();
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].f_e - 1.0).abs() < 1e-12);
        assert!((rows[0].syndromes.unwrap()[0] - 1.0).abs() < 1e-12);
        assert_eq!(rows[1].syndromes, None);
        let csv = to_csv(&rows);
        assert_eq!(csv, format!("{CSV_HEADER}\n0,corrected,1,1,1,1,1,0,0,0\n0,unencoded,1,1,1,1,,,,\n"));
    }

    #[test]
    fn fits() {
        let pts: Vec<(f64, f64)> = (0..7).map(|k| k as f64 * 0.5).map(|t| (t, 0.9 - 0.2 * t + 0.03 * t * t)).collect();
        let fit = fit_points(&pts).unwrap();
        assert!((fit.c0 - 0.9).abs() < 1e-10 && (fit.c1 + 0.2).abs() < 1e-10 && (fit.c2 - 0.03).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = (0..4).map(|k| (k as f64, 1.0)).collect();
        let fit = fit_points(&flat).unwrap();
        assert!((fit.c0 - 1.0).abs() < 1e-12 && fit.c1.abs() < 1e-12 && fit.c2.abs() < 1e-12);
        let a = 0.37;
        let decay: Vec<(f64, f64)> = (0..9).map(|k| k as f64 * 0.25).map(|t| (t, 1.0 - a * t * t)).collect();
        let fit = fit_points(&decay).unwrap();
        assert!((fit.c0 - 1.0).abs() < 1e-8 && fit.c1.abs() < 1e-8 && (fit.c2 + a).abs() < 1e-8);
        assert!(matches!(fit_points(&pts[..2]), Err(SweepError::TooFewPoints(2))));
    }

    #[test]
    fn dominant_syndrome_picks_largest_error_slot() {
        let row = |s: [f64; 4]| SweepRow {
            delay_ms: 0.0,
            mode: SweepMode::OneRound(Mode::Corrected),
            f_x: 1.0,
            f_y: 1.0,
            f_z: 1.0,
            f_e: 1.0,
            syndromes: Some(s),
        };
        let rows = vec![row([0.9, 0.05, 0.0, 0.05]), row([0.7, 0.0, 0.1, 0.2])];
        assert_eq!(dominant_error_syndrome(&rows, SweepMode::OneRound(Mode::Corrected)), Some(3));
        assert_eq!(dominant_error_syndrome(&rows, SweepMode::TwoRounds), None);
    }
}
