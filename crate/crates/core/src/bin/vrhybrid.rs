use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vrhybrid::bench::{run_experiment, ExperimentConfig};
use vrhybrid::Result;

/// Runs gradient descent, L-SVRG, SAGA or a safeguarded hybrid on a logistic
/// regression dataset and writes the trace as CSV.
#[derive(Debug, Parser)]
#[command(name = "vrhybrid", version)]
struct Cli {
    /// key = value file; flags given on the command line override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// libsvm or csv
    #[arg(long)]
    format: Option<String>,
    /// CSV label column (0-based, default last)
    #[arg(long)]
    label_column: Option<usize>,
    /// gd, lsvrg, saga, lsvrg+aa or lsvrg+lbfgs
    #[arg(long)]
    method: Option<String>,
    /// step size or `auto`
    #[arg(long)]
    lambda: Option<String>,
    /// L-SVRG refresh probability (default 1/N)
    #[arg(long)]
    rho: Option<f64>,
    /// accelerator memory
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long = "D")]
    d: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// basic steps after a rejected candidate (default N)
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long)]
    kmax: Option<usize>,
    /// regularization weight
    #[arg(long)]
    xi: Option<f64>,
    /// lBFGS backtracking overhead in the cost model
    #[arg(long)]
    xi_bt: Option<f64>,
    /// Anderson Tikhonov scale relative to trace(R^T R)
    #[arg(long)]
    aa_reg: Option<f64>,
    /// split (regularizer in the prox) or smooth
    #[arg(long)]
    formulation: Option<String>,
    /// uniform or lipschitz
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    standardize: bool,
    /// merit tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// evaluate objective and merit every this many basic steps
    #[arg(long)]
    record_every: Option<usize>,
    /// reference objective cache (default <data>.fstar)
    #[arg(long)]
    reference_cache: Option<PathBuf>,
    /// trace CSV path
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    let mut set = |key: &str, value: Option<String>| match value {
        Some(v) => cfg.set(key, &v),
        None => Ok(()),
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set("data", path(&cli.data))?;
    set("format", cli.format.clone())?;
    set("label_column", cli.label_column.map(|v| v.to_string()))?;
    set("method", cli.method.clone())?;
    set("lambda", cli.lambda.clone())?;
    set("rho", cli.rho.map(|v| v.to_string()))?;
    set("memory", cli.memory.map(|v| v.to_string()))?;
    set("c", cli.c.map(|v| v.to_string()))?;
    set("d", cli.d.map(|v| v.to_string()))?;
    set("delta", cli.delta.map(|v| v.to_string()))?;
    set("k0", cli.k0.map(|v| v.to_string()))?;
    set("kmax", cli.kmax.map(|v| v.to_string()))?;
    set("xi", cli.xi.map(|v| v.to_string()))?;
    set("xi_bt", cli.xi_bt.map(|v| v.to_string()))?;
    set("aa_reg", cli.aa_reg.map(|v| v.to_string()))?;
    set("formulation", cli.formulation.clone())?;
    set("sampling", cli.sampling.clone())?;
    set("seed", cli.seed.map(|v| v.to_string()))?;
    set("standardize", cli.standardize.then(|| "true".to_string()))?;
    set("tol", cli.tol.map(|v| v.to_string()))?;
    set("record_every", cli.record_every.map(|v| v.to_string()))?;
    set("reference_cache", path(&cli.reference_cache))?;
    set("out", path(&cli.out))?;
    if cfg.data.as_os_str().is_empty() {
        return Err(vrhybrid::Error::InvalidParameter {
            name: "data",
            reason: "no dataset given (--data)".into(),
        });
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match build_config(&cli).and_then(|cfg| run_experiment(&cfg)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
