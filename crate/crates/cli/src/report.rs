use std::io::Write;

use serde::Serialize;
use serde_json::Value;

use wassheat::C64;

pub const GENERIC_HEADER: [&str; 9] = ["check_id", "lhs", "rhs", "abs_err", "rel_err", "tolerance", "stderr", "z_score", "pass"];
pub const HEAT_HEADER: [&str; 7] = ["check_id", "closed_form", "mc_mean", "mc_stderr", "z_score", "n_paths", "runtime_ms"];

/// One comparison `lhs ≈ rhs`. Deterministic checks leave `stderr` and `z` empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub check_id: String,
    pub lhs: C64,
    pub rhs: C64,
    pub tolerance: f64,
    pub stderr: Option<f64>,
    pub z: Option<f64>,
    pub pass: bool,
}

impl Row {
    pub fn abs_err(&self) -> f64 {
        (self.lhs - self.rhs).norm()
    }

    pub fn rel_err(&self) -> f64 {
        let scale = self.rhs.norm();
        if scale > 0.0 {
            self.abs_err() / scale
        } else {
            self.abs_err()
        }
    }
}

/// Heat rows carry the path count and an optional timing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatRow {
    pub check_id: String,
    pub closed_form: C64,
    pub mc_mean: C64,
    pub mc_stderr: f64,
    pub z_score: f64,
    pub n_paths: usize,
    pub runtime_ms: Option<u64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Generic(Vec<Row>),
    Heat(Vec<HeatRow>),
}

impl Rows {
    pub fn passed(&self) -> usize {
        match self {
            Rows::Generic(r) => r.iter().filter(|r| r.pass).count(),
            Rows::Heat(r) => r.iter().filter(|r| r.pass).count(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Rows::Generic(r) => r.len(),
            Rows::Heat(r) => r.len(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passed() == self.len()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub scenario: &'static str,
    pub seed: u64,
    pub rows: Rows,
    /// Scenario-specific data for the JSON report.
    pub extra: Value,
    pub runtime_ms: Option<u64>,
}

/// Shortest round-trip form, switching to exponent notation for very small or
/// large magnitudes.
pub fn fmt_f(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// `re+imi`; real values print without the imaginary part.
pub fn fmt_c(z: C64) -> String {
    if z.im == 0.0 {
        fmt_f(z.re)
    } else if z.im.is_sign_negative() {
        format!("{}-{}i", fmt_f(z.re), fmt_f(-z.im))
    } else {
        format!("{}+{}i", fmt_f(z.re), fmt_f(z.im))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &Rows, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match rows {
        Rows::Generic(rows) => {
            w.write_record(GENERIC_HEADER)?;
            for r in rows {
                w.write_record([
                    r.check_id.clone(),
                    fmt_c(r.lhs),
                    fmt_c(r.rhs),
                    fmt_f(r.abs_err()),
                    fmt_f(r.rel_err()),
                    fmt_f(r.tolerance),
                    fmt_opt(r.stderr),
                    fmt_opt(r.z),
                    r.pass.to_string(),
                ])?;
            }
        }
        Rows::Heat(rows) => {
            w.write_record(HEAT_HEADER)?;
            for r in rows {
                w.write_record([
                    r.check_id.clone(),
                    fmt_c(r.closed_form),
                    fmt_c(r.mc_mean),
                    fmt_f(r.mc_stderr),
                    fmt_f(r.z_score),
                    r.n_paths.to_string(),
                    r.runtime_ms.map(|t| t.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn c_json(z: C64) -> Value {
    serde_json::json!([z.re, z.im])
}

pub fn to_json(report: &Report, config: &impl Serialize) -> Value {
    let rows: Vec<Value> = match &report.rows {
        Rows::Generic(rows) => rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "check_id": r.check_id,
                    "lhs": c_json(r.lhs),
                    "rhs": c_json(r.rhs),
                    "abs_err": r.abs_err(),
                    "rel_err": r.rel_err(),
                    "tolerance": r.tolerance,
                    "stderr": r.stderr,
                    "z_score": r.z,
                    "pass": r.pass,
                })
            })
            .collect(),
        Rows::Heat(rows) => rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "check_id": r.check_id,
                    "closed_form": c_json(r.closed_form),
                    "mc_mean": c_json(r.mc_mean),
                    "mc_stderr": r.mc_stderr,
                    "z_score": r.z_score,
                    "n_paths": r.n_paths,
                    "runtime_ms": r.runtime_ms,
                    "pass": r.pass,
                })
            })
            .collect(),
    };
    let mut v = serde_json::json!({
        "scenario": report.scenario,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": report.seed,
        "config": config,
        "rows": rows,
        "passed": report.rows.passed(),
        "total": report.rows.len(),
        "extra": report.extra,
    });
    if let Some(t) = report.runtime_ms {
        v["runtime_ms"] = t.into();
    }
    v
}
