//! Experiment harness: configuration, method dispatch, reference values and
//! trace output.

mod reference;

pub use reference::{
    compute_reference, hex, read_sidecar, solve_reference, write_sidecar, Fingerprint, Reference,
};

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};

use crate::accel::{AcceleratorConfig, ArmijoConfig, Regularization};
use crate::data::{self, DataFormat};
use crate::driver::{
    run_hybrid, run_proximal_gradient, CostModel, EventKind, RunOptions, RunTrace, SafeguardConfig,
};
use crate::engine::{max_step_size, DualUpdatePolicy, SamplerConfig};
use crate::error::{Error, Result};
use crate::problem::{FiniteSumProblem, Formulation, LogisticRegression};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gd,
    Lsvrg,
    Saga,
    LsvrgAa,
    LsvrgLbfgs,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Lsvrg => "lsvrg",
            Self::Saga => "saga",
            Self::LsvrgAa => "lsvrg+aa",
            Self::LsvrgLbfgs => "lsvrg+lbfgs",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Self::Gd),
            "lsvrg" => Ok(Self::Lsvrg),
            "saga" => Ok(Self::Saga),
            "lsvrg+aa" => Ok(Self::LsvrgAa),
            "lsvrg+lbfgs" => Ok(Self::LsvrgLbfgs),
            _ => Err(invalid("method", format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepChoice {
    /// `1/L` for gradient descent, `0.9 * max_step_size` otherwise.
    Auto,
    Fixed(f64),
}

impl FromStr for StepChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        s.parse()
            .map(Self::Fixed)
            .map_err(|_| invalid("lambda", format!("expected `auto` or a number, got `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Uniform,
    Lipschitz,
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

fn parse<T: FromStr>(name: &'static str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| invalid(name, format!("cannot parse `{value}`")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub format: DataFormat,
    pub label_column: Option<usize>,
    pub standardize: bool,
    pub formulation: Formulation,
    pub method: Method,
    pub lambda: StepChoice,
    pub sampling: Sampling,
    /// Defaults to `1/N`.
    pub rho: Option<f64>,
    pub memory: usize,
    pub c: f64,
    pub d: f64,
    pub delta: f64,
    /// Defaults to `N`.
    pub k0: Option<usize>,
    pub k_max: usize,
    pub xi: f64,
    pub xi_bt: f64,
    /// Scale of the trace-proportional Anderson regularization.
    pub aa_regularization: f64,
    pub seed: u64,
    pub tol: f64,
    pub record_stride: usize,
    pub out: Option<PathBuf>,
    /// Where the reference objective is cached; defaults to `<data>.fstar`.
    pub reference_cache: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            format: DataFormat::Libsvm,
            label_column: None,
            standardize: false,
            formulation: Formulation::ProxSplit,
            method: Method::LsvrgLbfgs,
            lambda: StepChoice::Auto,
            sampling: Sampling::Uniform,
            rho: None,
            memory: 5,
            c: 1e6,
            d: 1e6,
            delta: 1e-6,
            k0: None,
            k_max: 100_000,
            xi: 0.01,
            xi_bt: 0.3,
            aa_regularization: 1e-10,
            seed: 0,
            tol: 1e-12,
            record_stride: 1,
            out: None,
            reference_cache: None,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting. Keys use the long flag names with
    /// `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "data" => self.data = PathBuf::from(value),
            "format" => {
                self.format = match value.to_ascii_lowercase().as_str() {
                    "libsvm" => DataFormat::Libsvm,
                    "csv" => DataFormat::Csv,
                    _ => return Err(invalid("format", format!("unknown format `{value}`"))),
                }
            }
            "label_column" => self.label_column = Some(parse("label_column", value)?),
            "standardize" => self.standardize = parse("standardize", value)?,
            "formulation" => {
                self.formulation = match value.to_ascii_lowercase().as_str() {
                    "split" | "prox" => Formulation::ProxSplit,
                    "smooth" => Formulation::SmoothOnly,
                    _ => {
                        return Err(invalid(
                            "formulation",
                            format!("unknown formulation `{value}`"),
                        ))
                    }
                }
            }
            "method" => self.method = value.parse()?,
            "lambda" => self.lambda = value.parse()?,
            "sampling" => {
                self.sampling = match value.to_ascii_lowercase().as_str() {
                    "uniform" => Sampling::Uniform,
                    "lipschitz" => Sampling::Lipschitz,
                    _ => return Err(invalid("sampling", format!("unknown sampling `{value}`"))),
                }
            }
            "rho" => self.rho = Some(parse("rho", value)?),
            "memory" => self.memory = parse("memory", value)?,
            "c" => self.c = parse("C", value)?,
            "d" => self.d = parse("D", value)?,
            "delta" => self.delta = parse("delta", value)?,
            "k0" => self.k0 = Some(parse("k0", value)?),
            "kmax" | "k_max" => self.k_max = parse("kmax", value)?,
            "xi" => self.xi = parse("xi", value)?,
            "xi_bt" => self.xi_bt = parse("xi_bt", value)?,
            "aa_reg" | "aa_regularization" => {
                self.aa_regularization = parse("aa_regularization", value)?
            }
            "seed" => self.seed = parse("seed", value)?,
            "tol" => self.tol = parse("tol", value)?,
            "record_every" | "record_stride" => self.record_stride = parse("record_stride", value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "reference_cache" => self.reference_cache = Some(PathBuf::from(value)),
            other => return Err(invalid("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text (one per line, `#` starts a comment).
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "config".into(),
                line: i + 1,
                reason: format!("expected key = value, got `{line}`"),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        self.apply_text(&text)
    }
}

/// End-of-run figures printed by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub method: Method,
    pub f_star: f64,
    pub final_objective: f64,
    pub final_subopt: f64,
    pub final_merit: f64,
    pub iterations: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub passes: f64,
    pub flops: f64,
    /// Cumulative FLOPs in units of one gradient-descent step.
    pub weighted_iterations: f64,
    pub stopped_by_tolerance: bool,
}

impl fmt::Display for ExperimentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method               {}", self.method)?;
        writeln!(f, "reference objective  {:.12e}", self.f_star)?;
        writeln!(f, "final objective      {:.12e}", self.final_objective)?;
        writeln!(f, "final suboptimality  {:.6e}", self.final_subopt)?;
        writeln!(f, "final merit          {:.6e}", self.final_merit)?;
        writeln!(f, "iterations           {}", self.iterations)?;
        writeln!(f, "accepted candidates  {}", self.accepts)?;
        writeln!(f, "rejected candidates  {}", self.rejects)?;
        writeln!(f, "passes over data     {:.4}", self.passes)?;
        writeln!(f, "total flops          {:.6e}", self.flops)?;
        writeln!(f, "weighted iterations  {:.4}", self.weighted_iterations)?;
        write!(
            f,
            "stopped by           {}",
            if self.stopped_by_tolerance {
                "tolerance"
            } else {
                "iteration limit"
            }
        )
    }
}

/// Step size for `method`, resolving `auto`.
pub fn resolve_step<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    method: Method,
    lambda: StepChoice,
    sampler: &SamplerConfig,
) -> Result<f64> {
    match (lambda, method) {
        (StepChoice::Fixed(v), _) => Ok(v),
        (StepChoice::Auto, Method::Gd) => Ok(1.0 / problem.smoothness_modulus()),
        (StepChoice::Auto, _) => Ok(0.9 * max_step_size(problem.lipschitz(), sampler)?),
    }
}

/// Runs `cfg.method` on an already-built problem. The dataset fields of
/// `cfg` are ignored.
pub fn run_method<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    cfg: &ExperimentConfig,
    f_star: Option<f64>,
) -> Result<RunTrace> {
    let n = problem.n_components();
    let sampler = match cfg.sampling {
        Sampling::Uniform => SamplerConfig::uniform(n)?,
        Sampling::Lipschitz => SamplerConfig::lipschitz(problem.lipschitz())?,
    };
    let step = resolve_step(problem, cfg.method, cfg.lambda, &sampler)?;
    let opts = RunOptions {
        cost: CostModel::new(cfg.xi_bt)?,
        f_star,
        record_stride: cfg.record_stride,
        ..Default::default()
    };
    let rho = cfg.rho.unwrap_or(1.0 / n as f64);
    let accelerator = match cfg.method {
        Method::LsvrgAa => AcceleratorConfig::Anderson {
            memory: cfg.memory,
            regularization: Regularization::TraceScaled(cfg.aa_regularization),
            map_step: None,
        },
        Method::LsvrgLbfgs => AcceleratorConfig::Lbfgs {
            memory: cfg.memory,
            armijo: ArmijoConfig::default(),
        },
        _ => AcceleratorConfig::None,
    };
    let policy = match cfg.method {
        Method::Saga => DualUpdatePolicy::Saga,
        _ => DualUpdatePolicy::loopless_svrg(rho)?,
    };
    let safeguard = SafeguardConfig {
        c: cfg.c,
        d: cfg.d,
        delta: cfg.delta,
        k0: cfg.k0.unwrap_or(n),
        k_max: cfg.k_max,
        tol: cfg.tol,
        accelerator,
    };
    info!(
        "{}: N = {n}, d = {}, step = {step:e}",
        cfg.method,
        problem.dim()
    );
    match cfg.method {
        Method::Gd => run_proximal_gradient(problem, step, cfg.k_max, cfg.tol, &opts),
        _ => run_hybrid(
            problem, step, &sampler, &policy, &safeguard, cfg.seed, &opts,
        ),
    }
}

/// Builds the logistic problem described by `cfg`.
pub fn load_problem(cfg: &ExperimentConfig) -> Result<LogisticRegression> {
    let mut ds = data::load(&cfg.data, cfg.format, cfg.label_column)?;
    if cfg.standardize {
        ds = data::standardize(&ds);
    }
    info!(
        "loaded {}: {} samples, {} features",
        ds.provenance.source,
        ds.n_samples(),
        ds.n_features()
    );
    LogisticRegression::from_dataset(&ds, cfg.xi, cfg.formulation)
}

/// Reference objective for `problem`, read from or written to `cache_path`.
pub fn reference_with_sidecar(problem: &LogisticRegression, cache_path: &Path) -> Result<f64> {
    let key = problem.fingerprint();
    if let Some(v) = read_sidecar(cache_path, &key) {
        info!(
            "reference objective {v:e} read from {}",
            cache_path.display()
        );
        return Ok(v);
    }
    let r = compute_reference(problem)?;
    info!(
        "reference objective {:e} after {} lBFGS iterations",
        r.value, r.iterations
    );
    if let Err(e) = write_sidecar(cache_path, &key, r.value) {
        warn!("could not cache reference objective: {e}");
    }
    Ok(r.value)
}

pub fn summarize(method: Method, trace: &RunTrace, n: usize, d: usize) -> ExperimentSummary {
    let last_eval = trace
        .records
        .iter()
        .rev()
        .find(|r| r.objective.is_finite())
        .unwrap_or(trace.last());
    let last = trace.last();
    let f_star = trace.f_star.unwrap_or(f64::NAN);
    ExperimentSummary {
        method,
        f_star,
        final_objective: last_eval.objective,
        final_subopt: trace.suboptimality(last_eval.objective),
        final_merit: last_eval.merit,
        iterations: last.k,
        accepts: trace.count(EventKind::Accept),
        rejects: trace.count(EventKind::Reject),
        passes: last.passes,
        flops: last.flops,
        weighted_iterations: last.flops / CostModel::default().gradient_descent(n, d),
        stopped_by_tolerance: trace.stop == crate::driver::StopReason::Tolerance,
    }
}

/// Loads the data, computes the reference objective, runs the method and
/// writes the trace CSV.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let problem = load_problem(cfg)?;
    let cache_path = cfg.reference_cache.clone().unwrap_or_else(|| {
        let mut p = cfg.data.clone().into_os_string();
        p.push(".fstar");
        PathBuf::from(p)
    });
    let f_star = reference_with_sidecar(&problem, &cache_path)?;
    let trace = run_method(&problem, cfg, Some(f_star))?;
    if let Some(out) = &cfg.out {
        let file = File::create(out).map_err(|e| Error::Io {
            path: out.display().to_string(),
            reason: e.to_string(),
        })?;
        trace
            .write_csv(BufWriter::new(file))
            .map_err(|e| Error::Io {
                path: out.display().to_string(),
                reason: e.to_string(),
            })?;
    }
    Ok(summarize(
        cfg.method,
        &trace,
        problem.n_components(),
        problem.dim(),
    ))
}
