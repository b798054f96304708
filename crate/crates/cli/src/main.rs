mod config;
mod report;
mod scenarios;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{has_errors, validate, ExperimentConfig, Level, Scenario};
use report::{to_json, write_csv, Report, Rows};
use scenarios::Failure;

#[derive(Parser)]
#[command(name = "wassheat", version, about = "Heat flow and spectral checks for functionals on Wasserstein space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; every Monte Carlo block derives its stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path; a JSON report is written next to it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock times in the reports.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PkrMode {
    Duality,
    Ibp,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenfunction relation for random exponential kernels.
    Eigencheck {
        #[arg(long)]
        cases: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        measure: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo heat flow against the closed-form semigroup.
    Heat {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long = "t")]
        t: f64,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        z_max: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Itô formula residual along simulated paths.
    Ito {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long = "s")]
        s: f64,
        #[arg(long = "r")]
        r: f64,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        z_max: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Recover the degree-k kernel of a functional at point tuples.
    Recover {
        #[arg(long)]
        functional: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        points: PathBuf,
        /// `known` (kernels from the file) or `far` (far-point extension).
        #[arg(long)]
        path: Option<String>,
        #[arg(long)]
        y_far: Option<f64>,
        #[arg(long)]
        rtol: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Integration by parts on spectral coefficients.
    IbpSpectral {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        coeffs_b: Option<PathBuf>,
        /// uniform, grad1, cross, third or strong3.
        #[arg(long)]
        decay: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Product-measure duality or integration-by-parts check.
    Pkr {
        #[arg(long)]
        phi: PathBuf,
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long = "R")]
        radius: f64,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, value_enum, default_value = "duality")]
        mode: PkrMode,
        #[arg(long)]
        z_max: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// First-order Taylor remainder against its W2 bound.
    Taylor {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Optimal coupling and W2 distance between two discrete measures.
    W2 {
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check an experiment config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn with_common(mut cfg: ExperimentConfig, c: Common) -> ExperimentConfig {
    cfg.seed = c.seed;
    cfg.output = c.out;
    cfg.timing = c.timing;
    cfg
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg =
        ExperimentConfig::from_json(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    cfg.rebase(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

/// Either a config to run or a validation request.
enum Action {
    Run(Box<ExperimentConfig>),
    Validate(PathBuf),
}

fn action(cmd: Command) -> Result<Action, Failure> {
    use Scenario as S;
    let cfg = match cmd {
        Command::Validate { config } => return Ok(Action::Validate(config)),
        Command::Run { config } => return load_config(&config).map(|c| Action::Run(Box::new(c))),
        Command::Eigencheck { cases, eps, measure, common } => {
            let mut c = ExperimentConfig::new(S::Eigencheck);
            c.inputs.measure = measure;
            c.params.cases = cases;
            c.params.eps = eps;
            with_common(c, common)
        }
        Command::Heat { coeffs, measure, beta, eps, t, paths, z_max, common } => {
            let mut c = ExperimentConfig::new(S::Heat);
            c.inputs.coeffs = Some(coeffs);
            c.inputs.measure = Some(measure);
            c.params.beta = Some(beta);
            c.params.eps = Some(eps);
            c.params.t = Some(t);
            c.params.paths = paths;
            c.params.z_max = z_max;
            with_common(c, common)
        }
        Command::Ito { coeffs, measure, beta, eps, s, r, paths, steps, z_max, common } => {
            let mut c = ExperimentConfig::new(S::Ito);
            c.inputs.coeffs = Some(coeffs);
            c.inputs.measure = Some(measure);
            c.params.beta = Some(beta);
            c.params.eps = Some(eps);
            c.params.s = Some(s);
            c.params.r = Some(r);
            c.params.paths = paths;
            c.params.steps = steps;
            c.params.z_max = z_max;
            with_common(c, common)
        }
        Command::Recover { functional, k, points, path, y_far, rtol, common } => {
            let mut c = ExperimentConfig::new(S::Recover);
            c.inputs.functional = Some(functional);
            c.inputs.points = Some(points);
            c.params.k = Some(k);
            c.params.path = path;
            c.params.y_far = y_far;
            c.params.rtol = rtol;
            with_common(c, common)
        }
        Command::IbpSpectral { coeffs, coeffs_b, decay, common } => {
            let mut c = ExperimentConfig::new(S::IbpSpectral);
            c.inputs.coeffs = Some(coeffs);
            c.inputs.coeffs_b = coeffs_b;
            c.params.decay = decay;
            with_common(c, common)
        }
        Command::Pkr { phi, psi, k, radius, samples, nodes, mode, z_max, common } => {
            let mut c = ExperimentConfig::new(match mode {
                PkrMode::Duality => S::PkrDuality,
                PkrMode::Ibp => S::PkrIbp,
            });
            c.inputs.phi = Some(phi);
            c.inputs.psi = Some(psi);
            c.params.k = Some(k);
            c.params.radius = Some(radius);
            c.params.samples = samples;
            c.params.nodes = nodes;
            c.params.z_max = z_max;
            with_common(c, common)
        }
        Command::Taylor { kernel, left, right, common } => {
            let mut c = ExperimentConfig::new(S::Taylor);
            c.inputs.kernel = Some(kernel);
            c.inputs.left = Some(left);
            c.inputs.right = Some(right);
            with_common(c, common)
        }
        Command::W2 { left, right, common } => {
            let mut c = ExperimentConfig::new(S::W2);
            c.inputs.left = Some(left);
            c.inputs.right = Some(right);
            with_common(c, common)
        }
    };
    Ok(Action::Run(Box::new(cfg)))
}

fn json_path(csv: &Path) -> PathBuf {
    let p = csv.with_extension("json");
    if p == csv {
        csv.with_extension("report.json")
    } else {
        p
    }
}

fn write_outputs(cfg: &ExperimentConfig, report: &Report) -> Result<(), Failure> {
    let io_err = |p: &Path, e: String| Failure::Input(format!("cannot write {}: {e}", p.display()));
    match &cfg.output {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| io_err(path, e.to_string()))?;
            write_csv(&report.rows, file).map_err(|e| io_err(path, e.to_string()))?;
            let jp = json_path(path);
            let text = serde_json::to_string_pretty(&to_json(report, cfg)).expect("report serializes");
            std::fs::write(&jp, text + "\n").map_err(|e| io_err(&jp, e.to_string()))?;
        }
        None => write_csv(&report.rows, std::io::stdout().lock()).map_err(|e| io_err(Path::new("<stdout>"), e.to_string()))?,
    }
    Ok(())
}

fn summary(report: &Report) -> String {
    let mut s = format!("{}: {}/{} checks passed", report.scenario, report.rows.passed(), report.rows.len());
    if let Some(w) = report.extra.get("w2").and_then(|v| v.as_f64()) {
        s.push_str(&format!(", W2 = {w}"));
    }
    s
}

fn execute(cfg: ExperimentConfig) -> Result<bool, Failure> {
    let diags = validate(&cfg);
    for d in &diags {
        eprintln!("{d}");
    }
    if has_errors(&diags) {
        return Err(Failure::Input("invalid configuration".into()));
    }
    let report = scenarios::run(&cfg)?;
    write_outputs(&cfg, &report)?;
    eprintln!("{}", summary(&report));
    let ok = report.rows.all_pass();
    if !ok {
        if let Rows::Heat(_) = report.rows {
            eprintln!("hint: a z-score above z_max with few paths is often noise; rerun with more --paths");
        }
    }
    Ok(ok)
}

fn init_threads() {
    if let Some(n) = std::env::var("WASSHEAT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let result = action(cli.command).and_then(|a| match a {
        Action::Validate(path) => {
            let cfg = load_config(&path)?;
            let diags = validate(&cfg);
            for d in &diags {
                println!("{d}");
            }
            if has_errors(&diags) {
                return Err(Failure::Input(format!("{} has errors", path.display())));
            }
            let warnings = diags.iter().filter(|d| d.level == Level::Warning).count();
            println!("ok: {} ({warnings} warnings)", cfg.scenario.name());
            Ok(true)
        }
        Action::Run(cfg) => execute(*cfg),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
