use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wassheat::io;
use wassheat::product_measure::PKR_GUARD;
use wassheat::reconstruction::{MAX_DEGREE, OK_GUARD};

pub const SCHEMA_VERSION: u32 = 1;
const TENSOR_GUARD: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Eigencheck,
    Heat,
    Ito,
    Recover,
    IbpSpectral,
    PkrDuality,
    PkrIbp,
    Taylor,
    W2,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eigencheck => "eigencheck",
            Self::Heat => "heat",
            Self::Ito => "ito",
            Self::Recover => "recover",
            Self::IbpSpectral => "ibp-spectral",
            Self::PkrDuality => "pkr-duality",
            Self::PkrIbp => "pkr-ibp",
            Self::Taylor => "taylor",
            Self::W2 => "w2",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs_b: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cases: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    /// `known` or `far` for the recover scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_far: Option<f64>,
    /// Decay condition checked by ibp-spectral.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub params: Params,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            seed: None,
            output: None,
            timing: false,
            inputs: Inputs::default(),
            params: Params::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Makes relative input and output paths relative to `dir`.
    pub fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = dir.join(&*path);
                }
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.measure,
            &mut i.coeffs,
            &mut i.coeffs_b,
            &mut i.functional,
            &mut i.points,
            &mut i.phi,
            &mut i.psi,
            &mut i.kernel,
            &mut i.left,
            &mut i.right,
            &mut self.output,
        ] {
            fix(p);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn required_inputs(&self) -> Vec<(&'static str, &Option<PathBuf>)> {
        let i = &self.inputs;
        match self.scenario {
            Scenario::Eigencheck => vec![],
            Scenario::Heat | Scenario::Ito => vec![("coeffs", &i.coeffs), ("measure", &i.measure)],
            Scenario::Recover => vec![("functional", &i.functional), ("points", &i.points)],
            Scenario::IbpSpectral => vec![("coeffs", &i.coeffs)],
            Scenario::PkrDuality | Scenario::PkrIbp => vec![("phi", &i.phi), ("psi", &i.psi)],
            Scenario::Taylor => vec![("kernel", &i.kernel), ("left", &i.left), ("right", &i.right)],
            Scenario::W2 => vec![("left", &i.left), ("right", &i.right)],
        }
    }

    fn required_params(&self) -> Vec<(&'static str, bool)> {
        let p = &self.params;
        match self.scenario {
            Scenario::Heat => vec![("beta", p.beta.is_some()), ("eps", p.eps.is_some()), ("t", p.t.is_some())],
            Scenario::Ito => vec![
                ("beta", p.beta.is_some()),
                ("eps", p.eps.is_some()),
                ("s", p.s.is_some()),
                ("r", p.r.is_some()),
            ],
            Scenario::Recover => vec![("k", p.k.is_some())],
            Scenario::PkrDuality | Scenario::PkrIbp => vec![("k", p.k.is_some()), ("R", p.radius.is_some())],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub level: Level,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.level {
            Level::Error => "error",
            Level::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.level == Level::Error)
}

/// Schema and cross-field checks without running anything. Input files are
/// parsed when present so that size guards can be reported.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut error = |m: String| out.push(Diagnostic { level: Level::Error, message: m });
    if cfg.schema_version != SCHEMA_VERSION {
        error(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version));
    }
    for (name, path) in cfg.required_inputs() {
        match path {
            None => error(format!("{} needs input '{name}'", cfg.scenario.name())),
            Some(p) if !p.exists() => error(format!("input '{name}' not found: {}", p.display())),
            _ => {}
        }
    }
    for (name, present) in cfg.required_params() {
        if !present {
            error(format!("{} needs parameter '{name}'", cfg.scenario.name()));
        }
    }
    let p = &cfg.params;
    let positive = [("beta", p.beta), ("R", p.radius), ("z_max", p.z_max), ("rtol", p.rtol), ("y_far", p.y_far)];
    for (name, v) in positive {
        if let Some(v) = v {
            if !(v.is_finite() && v > 0.0) {
                error(format!("{name} must be positive, got {v}"));
            }
        }
    }
    for (name, v) in [("eps", p.eps), ("t", p.t)] {
        if let Some(v) = v {
            if !(v.is_finite() && v >= 0.0) {
                error(format!("{name} must be nonnegative, got {v}"));
            }
        }
    }
    if let (Some(s), Some(r)) = (p.s, p.r) {
        if !(s > 0.0 && r > s) {
            error(format!("need 0 < s < r, got s = {s}, r = {r}"));
        }
    }
    if p.k == Some(0) {
        error("k must be at least 1".into());
    }
    for (name, v, min) in [("paths", p.paths, 2), ("samples", p.samples, 2), ("steps", p.steps, 1), ("cases", p.cases, 1)] {
        if let Some(v) = v {
            if v < min {
                error(format!("{name} must be at least {min}, got {v}"));
            }
        }
    }
    if let Some(path) = &p.path {
        if path != "known" && path != "far" {
            error(format!("path must be 'known' or 'far', got '{path}'"));
        }
    }
    if let Some(d) = &p.decay {
        if let Err(e) = wassheat::spectral::DecayCondition::parse(d) {
            error(e.to_string());
        }
    }

    let mut warn = |m: String| out.push(Diagnostic { level: Level::Warning, message: m });
    if cfg.seed.is_none() {
        warn("seed missing; defaulting to 0".into());
    }
    guard_warnings(cfg, &mut warn);
    out
}

fn read(path: &Option<PathBuf>) -> Option<String> {
    path.as_ref().and_then(|p| std::fs::read_to_string(p).ok())
}

fn guard_warnings(cfg: &ExperimentConfig, warn: &mut impl FnMut(String)) {
    let p = &cfg.params;
    match cfg.scenario {
        Scenario::Recover => {
            let degree = read(&cfg.inputs.functional)
                .and_then(|t| io::parse_functional(&t).ok())
                .and_then(|f| f.max_degree());
            if let Some(n) = degree.or(p.k) {
                if n > MAX_DEGREE {
                    warn(format!("Vandermonde degree bound N = {n} > {MAX_DEGREE} will be refused"));
                }
            }
            if let Some(k) = p.k {
                if k > MAX_DEGREE {
                    warn(format!("recovery at k = {k}: Vandermonde N > {MAX_DEGREE} will be refused"));
                }
                if k > OK_GUARD {
                    warn(format!("inclusion-exclusion over 2^{k} subsets exceeds the arity guard {OK_GUARD}"));
                }
            }
        }
        Scenario::PkrDuality | Scenario::PkrIbp => {
            if let Some(k) = p.k {
                if k > PKR_GUARD {
                    warn(format!("P^{{k,R}} with k = {k} has {} signed terms; guard is k ≤ {PKR_GUARD}", (2f64.powi(k as i32) - 1.0).powi(2)));
                }
            }
        }
        Scenario::Taylor => {
            let arity = read(&cfg.inputs.kernel).and_then(|t| io::parse_kernel(&t).ok()).map(|k| k.arity());
            for side in [&cfg.inputs.left, &cfg.inputs.right] {
                let n = read(side).and_then(|t| io::parse_discrete_measure(&t).ok()).map(|m| m.len());
                if let (Some(k), Some(n)) = (arity, n) {
                    let terms = (n as f64).powi(k as i32);
                    if terms > TENSOR_GUARD {
                        warn(format!("tensor sum of {n}^{k} = {terms:e} terms exceeds the 1e7 guard"));
                    }
                }
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"scenario":"heat","extra":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"scenario":"heat","params":{"gamma":1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"scenario":"nope"}"#).is_err());
        let c = ExperimentConfig::from_json(r#"{"schema_version":1,"scenario":"pkr-ibp","params":{"R":1.5,"k":2}}"#).unwrap();
        assert_eq!(c.params.radius, Some(1.5));
        assert_eq!(c.scenario, Scenario::PkrIbp);
    }

    #[test]
    fn validation_diagnostics() {
        let mut c = ExperimentConfig::new(Scenario::Eigencheck);
        let d = validate(&c);
        assert!(!has_errors(&d));
        assert!(d.iter().any(|d| d.level == Level::Warning && d.message.contains("seed")));

        c.seed = Some(1);
        c.params.eps = Some(-0.1);
        assert!(validate(&c).iter().any(|d| d.level == Level::Error && d.message.contains("eps")));

        let mut r = ExperimentConfig::new(Scenario::Recover);
        r.seed = Some(1);
        r.params.k = Some(13);
        let d = validate(&r);
        assert!(d.iter().any(|d| d.level == Level::Warning && d.message.contains("Vandermonde")));
        // Missing input files are errors.
        assert!(has_errors(&d));

        let mut h = ExperimentConfig::new(Scenario::Heat);
        h.seed = Some(1);
        h.schema_version = 2;
        let d = validate(&h);
        assert!(d.iter().any(|d| d.message.contains("schema_version")));
        assert!(d.iter().any(|d| d.message.contains("'beta'")));
    }

    #[test]
    fn rebase_paths() {
        let mut c = ExperimentConfig::new(Scenario::W2);
        c.inputs.left = Some("a.json".into());
        c.inputs.right = Some("/abs/b.json".into());
        c.rebase(Path::new("/cfg"));
        assert_eq!(c.inputs.left, Some(PathBuf::from("/cfg/a.json")));
        assert_eq!(c.inputs.right, Some(PathBuf::from("/abs/b.json")));
    }
}
