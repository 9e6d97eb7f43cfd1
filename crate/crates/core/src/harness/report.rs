//! CSV and JSON emission. Numbers carry 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::HarnessError;

use super::round::RoundReport;
use super::sweep::{CurvePoint, OracleRow, ResourceCell};

pub const ROUNDS_HEADER: &str =
    "round,client_id,selected,reason,K,W_hz,p_w,T_F_s,T_U_s,E_U_j,tau_s,ste";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLike,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json-like" => Ok(OutputFormat::JsonLike),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

/// `%.9g`-style rendering.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Round a value to what [`fmt_num`] would print.
fn rounded(x: f64) -> Value {
    if x.is_finite() {
        json!(fmt_num(x).parse::<f64>().expect("formatted number parses"))
    } else {
        Value::String(fmt_num(x))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn rounds_csv(reports: &[RoundReport]) -> String {
    let mut out = String::new();
    out.push_str(ROUNDS_HEADER);
    out.push('\n');
    for r in reports {
        for row in &r.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.round,
                row.client_id,
                u8::from(row.selected),
                row.reason,
                row.tokens.map(|k| k.to_string()).unwrap_or_default(),
                opt(row.bandwidth),
                opt(row.power),
                fmt_num(row.forward_latency),
                opt(row.uplink_latency),
                opt(row.uplink_energy),
                fmt_num(r.tau),
                fmt_num(r.ste),
            )
            .expect("writing to a String");
        }
    }
    out
}

fn rounds_json(reports: &[RoundReport]) -> Value {
    let rows: Vec<Value> = reports
        .iter()
        .flat_map(|r| {
            r.rows.iter().map(move |row| {
                json!({
                    "round": r.round,
                    "client_id": row.client_id,
                    "selected": row.selected,
                    "reason": row.reason,
                    "K": row.tokens,
                    "W_hz": row.bandwidth.map(rounded),
                    "p_w": row.power.map(rounded),
                    "T_F_s": rounded(row.forward_latency),
                    "T_U_s": row.uplink_latency.map(rounded),
                    "E_U_j": row.uplink_energy.map(rounded),
                    "tau_s": rounded(r.tau),
                    "ste": rounded(r.ste),
                })
            })
        })
        .collect();
    Value::Array(rows)
}

pub fn summary_json(reports: &[RoundReport]) -> Value {
    let rounds: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "round": r.round,
                "candidates": r.candidates.len(),
                "selected": r.selected.len(),
                "feasible": r.decision.feasible_count(),
                "iterations": r.trace.entries.len(),
                "converged": r.trace.converged,
                "downlink_s": rounded(r.downlink_delay),
                "tau_s": rounded(r.tau),
                "ste": rounded(r.ste),
                "elapsed_s": rounded(r.elapsed),
            })
        })
        .collect();
    let mean = if reports.is_empty() {
        0.0
    } else {
        reports.iter().map(|r| r.ste).sum::<f64>() / reports.len() as f64
    };
    json!({ "rounds": rounds, "mean_ste": rounded(mean) })
}

pub fn trace_csv(reports: &[RoundReport]) -> String {
    let mut out = String::from("round,iteration,ste,tau_s\n");
    for r in reports {
        if r.trace.entries.is_empty() {
            continue;
        }
        writeln!(out, "{},0,{},", r.round, fmt_num(r.trace.initial_ste)).unwrap();
        for (i, e) in r.trace.entries.iter().enumerate() {
            writeln!(out, "{},{},{},{}", r.round, i + 1, fmt_num(e.ste), fmt_num(e.tau)).unwrap();
        }
    }
    out
}

pub fn ste_curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("K,ste,feasible\n");
    for p in points {
        writeln!(out, "{},{},{}", p.tokens, fmt_num(p.ste), u8::from(p.feasible)).unwrap();
    }
    out
}

pub fn resources_csv(cells: &[ResourceCell]) -> String {
    let mut out = String::from("W_tot_hz,E_max_j,mean_K,selected,feasible\n");
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_num(c.total_bandwidth),
            fmt_num(c.energy_budget),
            fmt_num(c.mean_tokens),
            c.selected,
            c.feasible
        )
        .unwrap();
    }
    out
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("instance,clients,solver_ste,oracle_ste,ratio,closure\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.instance,
            r.clients,
            fmt_num(r.solver_ste),
            fmt_num(r.oracle_ste),
            fmt_num(r.ratio),
            u8::from(r.closure)
        )
        .unwrap();
    }
    out
}

fn json_text<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("values serialize");
    s.push('\n');
    s
}

/// Write `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io(&path))?;
    Ok(path)
}

/// Write the per-client table, the summary and the convergence traces.
pub fn emit_reports(
    reports: &[RoundReport],
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Infeasible("no rounds to report".into()));
    }
    let table = match format {
        OutputFormat::Csv => write_output(dir, "rounds.csv", &rounds_csv(reports))?,
        OutputFormat::JsonLike => {
            write_output(dir, "rounds.json", &json_text(&rounds_json(reports)))?
        }
    };
    Ok(vec![
        table,
        write_output(dir, "summary.json", &json_text(&summary_json(reports)))?,
        write_output(dir, "trace.csv", &trace_csv(reports))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.2), "0.2");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(123456789.0), "123456789");
        assert_eq!(fmt_num(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_num(5e7), "50000000");
        assert_eq!(fmt_num(1e-5), "1e-05");
        assert_eq!(fmt_num(0.0001234), "0.0001234");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(9.999999999), "10");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse(), Ok(OutputFormat::Csv));
        assert_eq!("json-like".parse(), Ok(OutputFormat::JsonLike));
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
