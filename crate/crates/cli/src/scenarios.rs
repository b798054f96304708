use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

use wassheat::calculus::{eval_f, laplacian_w};
use wassheat::coupling::{optimal_coupling, taylor_first_order};
use wassheat::heat::{ito_residual, semigroup_agreement, FlowParams};
use wassheat::io;
use wassheat::kernel::{ExponentialKernel, KernelRef};
use wassheat::measure::{DiscreteMeasure, Measure};
use wassheat::product_measure::{duality_check, ibp_measure_check, PkrReport, ProductMeasureSpec};
use wassheat::reconstruction::{recover_kernel, ExtensionPath};
use wassheat::rng::{stream_id, RngStream};
use wassheat::spectral::{decay_check, ibp_check, ibp_tolerance, lambda_sq_value, DecayCondition, SpectralCoefficients};
use wassheat::{Error, C64};

use crate::config::{ExperimentConfig, Scenario};
use crate::report::{HeatRow, Report, Row, Rows};

/// Run failures, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input data (exit 2).
    Input(String),
    /// Numerical failure while running (exit 1).
    Numeric(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotStabilized(_) | Error::IllConditioned(_) => Failure::Numeric(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type Res<T> = std::result::Result<T, Failure>;

const DEFAULT_Z_MAX: f64 = 3.0;

fn read(name: &str, path: &Option<PathBuf>) -> Res<String> {
    let path = path.as_ref().ok_or_else(|| Failure::Input(format!("missing input '{name}'")))?;
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn tagged<T>(name: &str, r: wassheat::Result<T>) -> Res<T> {
    r.map_err(|e| match Failure::from(e) {
        Failure::Input(m) => Failure::Input(format!("{name}: {m}")),
        other => other,
    })
}

fn need<T: Copy>(name: &str, v: Option<T>) -> Res<T> {
    v.ok_or_else(|| Failure::Input(format!("missing parameter '{name}'")))
}

fn coefficients(name: &str, path: &Option<PathBuf>) -> Res<SpectralCoefficients> {
    tagged(name, io::parse_coefficients(&read(name, path)?))
}

fn discrete(name: &str, path: &Option<PathBuf>) -> Res<DiscreteMeasure> {
    tagged(name, io::parse_discrete_measure(&read(name, path)?))
}

fn kernel(name: &str, path: &Option<PathBuf>) -> Res<KernelRef> {
    tagged(name, io::parse_kernel(&read(name, path)?))
}

/// The coefficients restricted to degree `k`.
fn single_degree(a: &SpectralCoefficients, k: usize) -> Res<SpectralCoefficients> {
    let e = a.degree(k)?;
    Ok(SpectralCoefficients::new().with_degree(e.grid.clone(), e.values.clone())?)
}

pub fn run(cfg: &ExperimentConfig) -> Res<Report> {
    let start = Instant::now();
    let (rows, extra) = match cfg.scenario {
        Scenario::Eigencheck => eigencheck(cfg)?,
        Scenario::Heat => heat(cfg)?,
        Scenario::Ito => ito(cfg)?,
        Scenario::Recover => recover(cfg)?,
        Scenario::IbpSpectral => ibp_spectral(cfg)?,
        Scenario::PkrDuality | Scenario::PkrIbp => pkr(cfg)?,
        Scenario::Taylor => taylor(cfg)?,
        Scenario::W2 => w2(cfg)?,
    };
    Ok(Report {
        scenario: cfg.scenario.name(),
        seed: cfg.seed(),
        rows,
        extra,
        runtime_ms: cfg.timing.then(|| start.elapsed().as_millis() as u64),
    })
}

/// Random exponential kernels: `Δ_{w,ε}F_Φ = −λ²F_Φ`. With a measure input
/// the cases use that measure, otherwise random ones.
fn eigencheck(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let fixed = match &cfg.inputs.measure {
        Some(_) => Some(discrete("measure", &cfg.inputs.measure)?),
        None => None,
    };
    let cases = cfg.params.cases.unwrap_or(100);
    let mut rows = Vec::with_capacity(cases);
    for case in 0..cases {
        let mut rng = RngStream::new(cfg.seed(), case as u64);
        let index = |rng: &mut RngStream, lo: usize, hi: usize| lo + ((hi - lo + 1) as f64 * rng.uniform()) as usize;
        let k = index(&mut rng, 1, 4);
        let m = match &fixed {
            Some(m) => m.clone(),
            None => {
                let (d, n) = (index(&mut rng, 1, 3), index(&mut rng, 1, 6));
                let pts = (0..n).map(|_| (0..d).map(|_| 2.0 * rng.uniform() - 1.0).collect()).collect();
                let w = (0..n).map(|_| 0.1 + 0.9 * rng.uniform()).collect();
                DiscreteMeasure::new(pts, Some(w))?
            }
        };
        let eps = cfg.params.eps.unwrap_or(if case % 2 == 0 { 0.0 } else { 0.5 });
        let xi: Vec<Vec<f64>> = (0..k).map(|_| (0..m.dim()).map(|_| 0.7 * rng.normal()).collect()).collect();
        let phi = ExponentialKernel::new(xi.clone())?;
        let lam = lambda_sq_value(&xi, eps);
        let lhs = laplacian_w(&phi, &m, eps)?;
        let rhs = -lam * eval_f(&phi, &m)?;
        let tolerance = 1e-10 * (1.0 + lam);
        let pass = (lhs - rhs).norm() <= tolerance;
        rows.push(Row {
            check_id: format!("case_{case}_k{k}_d{}", m.dim()),
            lhs,
            rhs,
            tolerance,
            stderr: None,
            z: None,
            pass,
        });
    }
    Ok((Rows::Generic(rows), json!({ "cases": cases })))
}

/// `𝔼 U₀(σ_t)` by Monte Carlo against the closed-form semigroup, per degree
/// and for the full superposition.
fn heat(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let a = coefficients("coeffs", &cfg.inputs.coeffs)?;
    let m = discrete("measure", &cfg.inputs.measure)?;
    let p = &cfg.params;
    let flow = FlowParams::new(need("beta", p.beta)?, need("eps", p.eps)?, need("t", p.t)?)?;
    let paths = p.paths.unwrap_or(10_000);
    let z_max = p.z_max.unwrap_or(DEFAULT_Z_MAX);
    let mut checks: Vec<(String, SpectralCoefficients)> = Vec::new();
    for (k, _) in a.degrees() {
        checks.push((format!("degree_{k}"), single_degree(&a, k)?));
    }
    if checks.len() != 1 {
        checks.push(("total".into(), a.clone()));
    }
    let mut rows = Vec::new();
    for (i, (id, c)) in checks.iter().enumerate() {
        let start = Instant::now();
        let r = semigroup_agreement(c, &m, &flow, paths, cfg.seed(), stream_id(i as u64, 0))?;
        rows.push(HeatRow {
            check_id: id.clone(),
            closed_form: r.closed_form,
            mc_mean: r.mc.mean,
            mc_stderr: r.mc.stderr,
            z_score: r.z,
            n_paths: paths,
            runtime_ms: cfg.timing.then(|| start.elapsed().as_millis() as u64),
            pass: r.z <= z_max,
        });
    }
    Ok((Rows::Heat(rows), json!({ "beta": flow.beta, "eps": flow.eps, "t": flow.t, "z_max": z_max })))
}

/// Mean Itô residual over `[s, r]`; passes within three standard errors plus
/// the exact Euler bias.
fn ito(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let a = coefficients("coeffs", &cfg.inputs.coeffs)?;
    let m = discrete("measure", &cfg.inputs.measure)?;
    let p = &cfg.params;
    let (beta, eps, s, r) = (need("beta", p.beta)?, need("eps", p.eps)?, need("s", p.s)?, need("r", p.r)?);
    let paths = p.paths.unwrap_or(10_000);
    let steps = p.steps.unwrap_or(128);
    let z_max = p.z_max.unwrap_or(DEFAULT_Z_MAX);
    let rep = ito_residual(&a, &m, beta, eps, s, r, paths, steps, cfg.seed(), stream_id(0, 0))?;
    let e = rep.estimate;
    let row = Row {
        check_id: "ito_residual".into(),
        lhs: e.mean,
        rhs: C64::new(0.0, 0.0),
        tolerance: z_max * e.stderr + rep.euler_bias,
        stderr: Some(e.stderr),
        z: Some(wassheat::stats::z_score(e.mean, e.stderr)),
        pass: rep.passes(z_max),
    };
    let extra = json!({
        "euler_bias": rep.euler_bias,
        "halving_shift": rep.halving_shift,
        "steps": steps,
        "paths": paths,
    });
    Ok((Rows::Generic(vec![row]), extra))
}

/// `Φ_k` recovered at each point tuple, compared with the kernel in the file.
fn recover(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let f = tagged("functional", io::parse_functional(&read("functional", &cfg.inputs.functional)?))?;
    let pts = tagged("points", io::parse_points(&read("points", &cfg.inputs.points)?))?;
    let p = &cfg.params;
    let k = need("k", p.k)?;
    let path = match p.path.as_deref() {
        None | Some("known") => ExtensionPath::Known,
        Some("far") => ExtensionPath::Far(p.y_far),
        Some(other) => return Err(Failure::Input(format!("unknown extension path '{other}'"))),
    };
    let rtol = p.rtol.unwrap_or(1e-9);
    let truth = f.underlying().and_then(|ks| ks.iter().find(|(j, _)| *j == k).map(|(_, phi)| phi.clone()));
    let mut rows = Vec::with_capacity(pts.len());
    for (i, x) in pts.iter().enumerate() {
        if x.len() != k {
            return Err(Failure::Input(format!("point tuple {i} has {} points, expected k = {k}", x.len())));
        }
        let lhs = recover_kernel(&f, k, x, path)?;
        let rhs = match &truth {
            Some(phi) => {
                let xr: Vec<&[f64]> = x.iter().map(|v| v.as_slice()).collect();
                if let Some(bad) = xr.iter().find(|v| v.len() != phi.dim()) {
                    return Err(Failure::Input(format!("point of dimension {} for a kernel on R^{}", bad.len(), phi.dim())));
                }
                phi.value(&xr)
            }
            None => C64::new(0.0, 0.0),
        };
        let tolerance = rtol * (1.0 + rhs.norm());
        rows.push(Row {
            check_id: format!("point_{i}"),
            lhs,
            rhs,
            tolerance,
            stderr: None,
            z: None,
            pass: (lhs - rhs).norm() <= tolerance,
        });
    }
    Ok((Rows::Generic(rows), json!({ "k": k, "path": p.path.clone().unwrap_or_else(|| "known".into()) })))
}

/// Integration by parts on spectral coefficients, plus an optional decay check.
fn ibp_spectral(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let a = coefficients("coeffs", &cfg.inputs.coeffs)?;
    let b = match &cfg.inputs.coeffs_b {
        Some(_) => coefficients("coeffs_b", &cfg.inputs.coeffs_b)?,
        None => a.clone(),
    };
    let (lhs, rhs) = ibp_check(&a, &b)?;
    let tolerance = ibp_tolerance(lhs);
    let mut rows = vec![Row {
        check_id: "ibp".into(),
        lhs,
        rhs,
        tolerance,
        stderr: None,
        z: None,
        pass: (lhs - rhs).norm() <= tolerance,
    }];
    let mut extra = json!({});
    if let Some(name) = &cfg.params.decay {
        let cond = DecayCondition::parse(name)?;
        let dc = a
            .decay
            .ok_or_else(|| Failure::Input("decay check needs 'decay' constants in the coefficients file".into()))?;
        let rep = decay_check(&a, dc.c, dc.delta, cond);
        for line in &rep.lines {
            rows.push(Row {
                check_id: format!("decay_{name}_k{}", line.k),
                lhs: C64::new(line.integral, 0.0),
                rhs: C64::new(line.bound, 0.0),
                tolerance: line.bound * 1e-12,
                stderr: None,
                z: None,
                pass: line.integral <= line.bound * (1.0 + 1e-12),
            });
        }
        extra = json!({ "decay": name, "C": dc.c, "delta": dc.delta, "first_violation": rep.first_violation });
    }
    Ok((Rows::Generic(rows), extra))
}

fn pkr(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let phi = kernel("phi", &cfg.inputs.phi)?;
    let psi = kernel("psi", &cfg.inputs.psi)?;
    let p = &cfg.params;
    let k = need("k", p.k)?;
    for (name, f) in [("phi", &phi), ("psi", &psi)] {
        if f.arity() != k {
            return Err(Failure::Input(format!("{name} has arity {}, expected k = {k}", f.arity())));
        }
    }
    if phi.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: phi.dim(), found: psi.dim() }.into());
    }
    let samples = p.samples.unwrap_or(100_000);
    let z_max = p.z_max.unwrap_or(DEFAULT_Z_MAX);
    let spec = ProductMeasureSpec::new(k, need("R", p.radius)?, phi.dim(), samples, cfg.seed())?.with_stream_base(stream_id(0, 0));
    let (id, rep): (&str, PkrReport) = match cfg.scenario {
        Scenario::PkrDuality => ("duality", duality_check(phi.as_ref(), psi.as_ref(), &spec, p.nodes)?),
        _ => ("ibp", ibp_measure_check(phi.as_ref(), psi.as_ref(), &spec)?),
    };
    let row = Row {
        check_id: id.into(),
        lhs: rep.lhs,
        rhs: rep.rhs,
        tolerance: z_max * rep.stderr,
        stderr: Some(rep.stderr),
        z: Some(rep.z),
        pass: rep.z <= z_max,
    };
    Ok((Rows::Generic(vec![row]), json!({ "k": k, "R": spec.radius, "samples": samples, "z_max": z_max })))
}

fn taylor(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let phi = kernel("kernel", &cfg.inputs.kernel)?;
    let m = discrete("left", &cfg.inputs.left)?;
    let nu = discrete("right", &cfg.inputs.right)?;
    let r = taylor_first_order(phi.as_ref(), &m, &nu)?;
    let row = Row {
        check_id: "taylor_remainder".into(),
        lhs: C64::new(r.remainder, 0.0),
        rhs: C64::new(r.bound, 0.0),
        tolerance: 1e-12,
        stderr: None,
        z: None,
        pass: r.remainder <= r.bound + 1e-12,
    };
    Ok((Rows::Generic(vec![row]), json!({ "w2": r.w2 })))
}

fn w2(cfg: &ExperimentConfig) -> Res<(Rows, serde_json::Value)> {
    let m = discrete("left", &cfg.inputs.left)?;
    let nu = discrete("right", &cfg.inputs.right)?;
    let (g, w2) = optimal_coupling(&m, &nu)?;
    let err = g.marginal_error();
    let row = Row {
        check_id: "coupling_marginals".into(),
        lhs: C64::new(err, 0.0),
        rhs: C64::new(0.0, 0.0),
        tolerance: 1e-12,
        stderr: None,
        z: None,
        pass: err <= 1e-12,
    };
    let pairs: Vec<_> = g.pairs.iter().map(|&(i, j, w)| json!([i, j, w])).collect();
    Ok((Rows::Generic(vec![row]), json!({ "w2": w2, "cost": g.cost(), "pairs": pairs })))
}
