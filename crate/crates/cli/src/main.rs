#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mumimo::channel::{db_to_linear, SystemConfig};
use mumimo::harness::{csv_string, run_experiment_with, workers_from_env, ExperimentSpec, Scale};
use mumimo::optimizer::{optimal_k_uniform, user_count_root};
use mumimo::pilot::{design_pilot, PilotDesignSpec};
use mumimo::throughput::{asymptotic_throughput, mc_throughput, uniform_gains};
use mumimo::Error;

/// Training design and throughput bounds for multiuser MIMO uplinks.
#[derive(Parser, Debug)]
#[command(name = "mumimo", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment spec (JSON) and write CSV and JSON results.
    Sweep {
        spec: PathBuf,
        /// Fill unspecified sizes with N = 100, T = 200 instead of N = 50, T = 100.
        #[arg(long)]
        paper_scale: bool,
        /// Worker threads (default: MIMO_WORKERS or all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the optimal user count under uniform fading.
    OptimalK {
        /// Training fraction; a grid over (0, 1) when omitted.
        #[arg(long)]
        alpha: Option<f64>,
        /// Coherence length T.
        #[arg(long, default_value_t = 200)]
        coherence: usize,
        /// Received SNR ρ0 d² (linear).
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
    },
    /// Build a pilot matrix from a design spec (JSON) and print it as JSON.
    Pilot { spec: PathBuf },
    /// Compare Monte Carlo and large-system throughput of the uniform design.
    AsymptoticCheck {
        #[arg(long, default_value_t = 100)]
        antennas: usize,
        #[arg(long, default_value_t = 200)]
        coherence: usize,
        /// β = K/N.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = -18.0, allow_hyphen_values = true)]
        rho0_db: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Largest accepted relative gap.
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
    /// Run reduced-size health checks.
    Selftest,
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sweep(common: &Common, path: &Path, paper_scale: bool, workers: Option<usize>) -> Result<()> {
    let mut spec = ExperimentSpec::load(path)?;
    if paper_scale {
        spec.scale = Scale::Paper;
    }
    if let Some(t) = common.trials {
        spec.trials = Some(t);
    }
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    if let Some(o) = &common.out {
        spec.output = Some(o.clone());
    }
    spec.validate()?;
    let rows = run_experiment_with(&spec, workers.or_else(workers_from_env))?;
    for row in &rows {
        for r in &row.results {
            if let Some(e) = &r.error {
                eprintln!("{} = {}: {} failed: {e}", sweep_name(&spec), row.swept, r.design);
            }
        }
    }
    if spec.output.is_none() {
        write_output(None, &csv_string(&rows)?)?;
    }
    Ok(())
}

fn sweep_name(spec: &ExperimentSpec) -> String {
    serde_json::to_value(spec.sweep).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn optimal_k(common: &Common, alpha: Option<f64>, t: usize, snr: f64) -> Result<()> {
    let alphas: Vec<f64> = match alpha {
        Some(a) => vec![a],
        None => (1..10).map(|j| (j * t / 10) as f64 / t as f64).collect(),
    };
    let mut text = String::new();
    for a in alphas {
        let k = optimal_k_uniform(a, t, snr, 1.0)?;
        let x = user_count_root(a)?;
        text.push_str(&format!("alpha={a:.4} x*={x:.10} K_opt={k}\n"));
    }
    write_output(common.out.as_deref(), &text)
}

fn pilot(common: &Common, path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
    let mut spec: PilotDesignSpec =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("pilot spec: {e}")))?;
    if let Some(s) = common.seed {
        spec.seed = s;
    }
    let xp = design_pilot(&spec)?;
    let mut json = serde_json::to_string_pretty(&xp)?;
    json.push('\n');
    write_output(common.out.as_deref(), &json)
}

#[allow(clippy::too_many_arguments)]
fn asymptotic_check(
    common: &Common,
    n: usize,
    t: usize,
    beta: f64,
    rho0_db: f64,
    gamma: f64,
    tolerance: f64,
) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::Validation(format!("beta must be positive, got {beta}")).into());
    }
    let k = ((beta * n as f64).round() as usize).max(1);
    let trials = common.trials.unwrap_or(5000);
    let seed = common.seed.unwrap_or(0);
    let mut text = String::from("alpha,monte_carlo,ci,asymptotic,relative_gap\n");
    let mut worst = 0.0_f64;
    for j in 1..10 {
        let at = j * t / 10;
        let cfg = SystemConfig::new(n, k, t, at as f64 / t as f64, 1.0, 1.0 / db_to_linear(rho0_db))?;
        let gp = (1.0 - cfg.alpha * gamma) / (1.0 - cfg.alpha);
        let gains = uniform_gains(&cfg, 1.0, gamma, gp);
        let mc = mc_throughput(&cfg, &gains, gains.lambdas.len(), trials, seed)?;
        let asy = asymptotic_throughput(&cfg, 1.0, gamma, gp)?;
        let gap = (mc.rate_bits_per_symbol - asy.rate_bits_per_symbol).abs() / mc.rate_bits_per_symbol.max(1e-300);
        worst = worst.max(gap);
        text.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            cfg.alpha,
            mc.rate_bits_per_symbol,
            mc.ci(),
            asy.rate_bits_per_symbol,
            gap
        ));
    }
    write_output(common.out.as_deref(), &text)?;
    if worst > tolerance {
        return Err(Error::Numeric(format!("largest relative gap {worst:.4} exceeds {tolerance}")).into());
    }
    Ok(())
}

fn selftest(common: &Common) -> Result<()> {
    let checks = mumimo::selftest::run_quick(common.seed.unwrap_or(0));
    let mut text = String::new();
    for c in &checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        text.push_str(&format!("{tag} {} ({:.2}s): {}\n", c.name, c.seconds, c.detail));
    }
    write_output(common.out.as_deref(), &text)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        bail!(Error::Numeric(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Sweep { spec, paper_scale, workers } => sweep(common, &spec, paper_scale, workers),
        Command::OptimalK { alpha, coherence, snr } => optimal_k(common, alpha, coherence, snr),
        Command::Pilot { spec } => pilot(common, &spec),
        Command::AsymptoticCheck { antennas, coherence, beta, rho0_db, gamma, tolerance } => {
            asymptotic_check(common, antennas, coherence, beta, rho0_db, gamma, tolerance)
        }
        Command::Selftest => selftest(common),
    }
}

/// 1 for bad input, 2 for numeric failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Numeric(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
