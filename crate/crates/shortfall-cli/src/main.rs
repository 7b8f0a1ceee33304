//! Command-line front end: scenario optimization, limit curves, scenario
//! ensembles, and liquidation simulation, all file based and reproducible.

mod grid;

use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use shortfall::core::{fmt_sig12, load_scenarios};
use shortfall::liquidation::{simulate_liquidation, write_liquidation_csv, ImpactParams};
use shortfall::montecarlo::{
    compare_to_replica, estimate_crossing, feasibility_curve, run_ensemble,
    write_feasibility_csv, BetaSpec, EnsembleReport, EnsembleSpec,
};
use shortfall::portfolio_opt::{
    optimize_es, optimize_ml, optimize_regularized_es, optimize_regularized_es_from_eta,
    optimize_regularized_ml, SolutionReport,
};
use shortfall::replica::{
    phase_boundary_unregularized, solve_saddle, sweep_curves, write_curves_csv, SaddleInput,
    SaddleOutcome, SaddlePoint,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "shortfall",
    version,
    about = "Portfolio optimization under expected shortfall with impact regularization"
)]
struct Cli {
    /// Worker threads for parallel sections; 0 keeps the default. Results
    /// are identical for every setting.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario file and report the optimal portfolio
    Optimize(OptimizeArgs),
    /// Large-system curves over the parameter grid, or the phase boundary
    Replica(ReplicaArgs),
    /// Random scenario ensembles: statistics, feasibility, comparisons
    Mc(McArgs),
    /// Run a liquidation schedule through the impact model
    Liquidate(LiquidateArgs),
}

/// Report envelope shared by every command; identical inputs produce
/// byte-identical envelopes.
#[derive(Serialize)]
struct Report<C: Serialize, R: Serialize> {
    schema: u32,
    version: &'static str,
    command: &'static str,
    config: C,
    result: R,
}

impl<C: Serialize, R: Serialize> Report<C, R> {
    fn new(command: &'static str, config: C, result: R) -> Self {
        Self {
            schema: 1,
            version: VERSION,
            command,
            config,
            result,
        }
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Writes bytes to stdout; a closed pipe downstream is not an error.
fn print_bytes(bytes: &[u8]) -> Result<(), String> {
    let mut out = io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(e.to_string()),
    }
}

/// Prints the report and mirrors it to `--out` when given.
fn emit_report(out: Option<&Path>, json: &str) -> Result<(), String> {
    print_bytes(format!("{json}\n").as_bytes())?;
    if let Some(path) = out {
        fs::write(path, format!("{json}\n"))
            .map_err(|e| format!("writing {}: {e}", path.display()))?;
    }
    Ok(())
}

/// Writes a CSV artifact to `--out` with the report on stdout, or streams
/// the CSV itself to stdout when no path was given.
fn emit_artifact(out: Option<&Path>, artifact: &[u8], json: &str) -> Result<(), String> {
    match out {
        Some(path) => {
            fs::write(path, artifact).map_err(|e| format!("writing {}: {e}", path.display()))?;
            print_bytes(format!("{json}\n").as_bytes())?;
        }
        None => print_bytes(artifact)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global();
    }
    let outcome = match cli.command {
        Command::Optimize(args) => cmd_optimize(args),
        Command::Replica(args) => cmd_replica(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Liquidate(args) => cmd_liquidate(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scenario CSV with header asset_1,...,asset_N, one row per scenario
    #[arg(long)]
    scenarios: PathBuf,
    /// Confidence level in (0, 1) of the expected-shortfall objective
    #[arg(long)]
    beta: Option<f64>,
    /// Optimize the worst sample loss instead of expected shortfall
    #[arg(long, conflicts_with = "beta")]
    ml: bool,
    /// Dimensionless regularizer; 0 keeps the plain objective
    #[arg(long, conflicts_with = "eta")]
    eta_tilde: Option<f64>,
    /// Impact-coefficient form of the regularizer
    #[arg(long)]
    eta: Option<f64>,
    /// Budget scale: weights sum to this value times the asset count
    #[arg(long, default_value_t = 1.0)]
    w_budget: f64,
    /// Mirror the JSON report to this path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct OptimizeConfig {
    scenarios: String,
    mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_tilde: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    w_budget: f64,
}

fn cmd_optimize(args: OptimizeArgs) -> Result<u8, String> {
    let scenarios = load_scenarios(&args.scenarios)
        .map_err(|e| format!("{}: {e}", args.scenarios.display()))?;
    let solve_err = |e: shortfall::portfolio_opt::PortfolioError| e.to_string();

    let (mode, report) = if args.ml {
        if args.eta_tilde.is_some() {
            return Err("the worst-loss mode takes --eta, not --eta-tilde".into());
        }
        match args.eta {
            Some(eta) if eta != 0.0 => {
                let sol = optimize_regularized_ml(&scenarios, eta, args.w_budget)
                    .map_err(solve_err)?;
                ("ml", SolutionReport::from_ml_solution(&sol))
            }
            _ => {
                let out = optimize_ml(&scenarios, args.w_budget).map_err(solve_err)?;
                ("ml", SolutionReport::from_ml_outcome(&out))
            }
        }
    } else {
        let beta = args
            .beta
            .ok_or("either --beta or --ml must be given")?;
        match (args.eta, args.eta_tilde) {
            (Some(eta), _) if eta != 0.0 => {
                let sol = optimize_regularized_es_from_eta(&scenarios, beta, eta, args.w_budget)
                    .map_err(solve_err)?;
                ("es", SolutionReport::from_es_solution(&sol))
            }
            (_, Some(eta_tilde)) if eta_tilde != 0.0 => {
                let sol = optimize_regularized_es(&scenarios, beta, eta_tilde, args.w_budget)
                    .map_err(solve_err)?;
                ("es", SolutionReport::from_es_solution(&sol))
            }
            _ => {
                let out = optimize_es(&scenarios, beta, args.w_budget).map_err(solve_err)?;
                ("es", SolutionReport::from_es_outcome(&out))
            }
        }
    };

    let code = if report.status == "Unbounded" { 2 } else { 0 };
    let config = OptimizeConfig {
        scenarios: args.scenarios.display().to_string(),
        mode,
        beta: args.beta,
        eta_tilde: args.eta_tilde,
        eta: args.eta,
        w_budget: args.w_budget,
    };
    emit_report(
        args.out.as_deref(),
        &Report::new("optimize", config, report).to_json(),
    )?;
    Ok(code)
}

#[derive(Args)]
struct ReplicaArgs {
    /// Confidence level; accepts a grid with --phase-boundary
    #[arg(long)]
    beta: String,
    /// Regularizer values: list, start:stop:step, or start:stop:log[:count]
    #[arg(long)]
    eta_tilde: Option<String>,
    /// Aspect-ratio grid in the same syntax
    #[arg(long)]
    t: Option<String>,
    /// Emit the critical aspect ratio per confidence level instead
    #[arg(long)]
    phase_boundary: bool,
    /// Write the CSV here (report on stdout); otherwise the CSV streams
    /// to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReplicaConfig {
    mode: &'static str,
    beta: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_tilde: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct SweepResult {
    rows: usize,
    converged: usize,
    diverged: usize,
    failed: usize,
}

fn cmd_replica(args: ReplicaArgs) -> Result<u8, String> {
    if args.phase_boundary {
        let betas = grid::parse_values(&args.beta)?;
        if args.eta_tilde.is_some() || args.t.is_some() {
            return Err("--phase-boundary takes only a --beta grid".into());
        }
        let mut csv = String::from("beta,t_star\n");
        let mut found = 0usize;
        for &beta in &betas {
            if let Ok(t_star) = phase_boundary_unregularized(beta) {
                csv.push_str(&format!("{},{}\n", fmt_sig12(beta), fmt_sig12(t_star)));
                found += 1;
            }
        }
        let config = ReplicaConfig {
            mode: "phase-boundary",
            beta: betas.clone(),
            eta_tilde: None,
            t: None,
        };
        let result = SweepResult {
            rows: betas.len(),
            converged: found,
            diverged: 0,
            failed: betas.len() - found,
        };
        let json = Report::new("replica", config, result).to_json();
        emit_artifact(args.out.as_deref(), csv.as_bytes(), &json)?;
        return Ok(if found == 0 { 1 } else { 0 });
    }

    let beta = grid::parse_single(&args.beta)?;
    let etas = grid::parse_values(
        args.eta_tilde
            .as_deref()
            .ok_or("--eta-tilde is required for a sweep")?,
    )?;
    let ts = grid::parse_values(args.t.as_deref().ok_or("--t is required for a sweep")?)?;
    let rows = sweep_curves(beta, &etas, &ts).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_curves_csv(&rows, &mut csv).map_err(|e| e.to_string())?;
    let count = |s: &str| rows.iter().filter(|r| r.status == s).count();
    let result = SweepResult {
        rows: rows.len(),
        converged: count("converged"),
        diverged: count("diverged"),
        failed: count("failed"),
    };
    let all_failed = result.failed == result.rows;
    let config = ReplicaConfig {
        mode: "sweep",
        beta: vec![beta],
        eta_tilde: Some(etas),
        t: Some(ts),
    };
    let json = Report::new("replica", config, result).to_json();
    emit_artifact(args.out.as_deref(), &csv, &json)?;
    Ok(if all_failed { 1 } else { 0 })
}

#[derive(Args)]
struct McArgs {
    /// Number of assets
    #[arg(long = "N")]
    n_assets: usize,
    /// Number of scenarios per realization
    #[arg(long = "T")]
    n_samples: Option<usize>,
    /// Confidence level
    #[arg(long)]
    beta: Option<f64>,
    /// Feasibility at the worst-loss limit (confidence 1 - 1/T per point)
    #[arg(long, conflicts_with = "beta")]
    ml_limit: bool,
    /// Dimensionless regularizer
    #[arg(long, default_value_t = 0.0)]
    eta_tilde: f64,
    /// Budget scale
    #[arg(long, default_value_t = 1.0)]
    w_budget: f64,
    /// Realizations per ensemble or per grid point
    #[arg(long)]
    runs: usize,
    /// Stream seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep feasibility over an aspect-ratio grid instead
    #[arg(long, conflicts_with = "compare")]
    feasibility: bool,
    /// Compare ensemble aggregates against the large-system prediction
    #[arg(long)]
    compare: bool,
    /// Aspect-ratio grid for --feasibility
    #[arg(long)]
    t: Option<String>,
    /// Acceptance tolerance on the mean squared weight deviation
    #[arg(long, default_value_t = 0.10)]
    q0_tol: f64,
    /// Acceptance tolerance on the quantile-shift deviation
    #[arg(long, default_value_t = 0.50)]
    eps_tol: f64,
    /// Explicit saddle point `eps_tilde,q0_tilde,delta` overriding the solve
    #[arg(long)]
    replica_point: Option<String>,
    /// CSV (feasibility) or JSON mirror path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct McFeasibilityConfig {
    n_assets: usize,
    t: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    ml_limit: bool,
    runs: usize,
    seed: u64,
}

#[derive(Serialize)]
struct FeasibilityResult {
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    crossing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sse: Option<f64>,
}

#[derive(Serialize)]
struct SaddleEcho {
    eps_tilde: f64,
    q0_tilde: f64,
    delta: f64,
    q0: f64,
    eps: f64,
}

#[derive(Serialize)]
struct CompareConfig {
    n_assets: usize,
    n_samples: usize,
    beta: f64,
    eta_tilde: f64,
    w_budget: f64,
    runs: usize,
    seed: u64,
    q0_tol: f64,
    eps_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    replica_point: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct CompareResult {
    saddle: SaddleEcho,
    comparison: shortfall::montecarlo::ReplicaComparison,
    feasible_fraction: f64,
}

fn cmd_mc(args: McArgs) -> Result<u8, String> {
    if args.feasibility {
        let ts = grid::parse_values(
            args.t
                .as_deref()
                .ok_or("--feasibility needs an aspect-ratio grid via --t")?,
        )?;
        let beta_spec = if args.ml_limit {
            BetaSpec::MlLimit
        } else {
            BetaSpec::Fixed(args.beta.ok_or("--feasibility needs --beta or --ml-limit")?)
        };
        let points = feasibility_curve(beta_spec, args.n_assets, &ts, args.runs, args.seed)
            .map_err(|e| e.to_string())?;
        let pairs: Vec<(f64, f64)> = points
            .iter()
            .map(|p| (p.t, p.feasible_fraction))
            .collect();
        let fit = estimate_crossing(&pairs).ok();
        let mut csv = Vec::new();
        write_feasibility_csv(&points, &mut csv).map_err(|e| e.to_string())?;
        let config = McFeasibilityConfig {
            n_assets: args.n_assets,
            t: ts,
            beta: args.beta,
            ml_limit: args.ml_limit,
            runs: args.runs,
            seed: args.seed,
        };
        let result = FeasibilityResult {
            points: points.len(),
            crossing: fit.map(|f| f.crossing),
            slope: fit.map(|f| f.slope),
            sse: fit.map(|f| f.sse),
        };
        let json = Report::new("mc", config, result).to_json();
        emit_artifact(args.out.as_deref(), &csv, &json)?;
        return Ok(0);
    }

    let spec = EnsembleSpec {
        n_assets: args.n_assets,
        n_samples: args.n_samples.ok_or("--T is required")?,
        beta: args.beta.ok_or("--beta is required")?,
        eta_tilde: args.eta_tilde,
        w_budget: args.w_budget,
        n_realizations: args.runs,
        seed: args.seed,
    };
    let stats = run_ensemble(&spec).map_err(|e| e.to_string())?;

    if args.compare {
        let outcome = match &args.replica_point {
            Some(triple) => {
                let vals = grid::parse_values(triple)?;
                if vals.len() != 3 {
                    return Err("--replica-point takes eps_tilde,q0_tilde,delta".into());
                }
                SaddleOutcome::Converged(SaddlePoint {
                    eps_tilde: vals[0],
                    q0_tilde: vals[1],
                    delta: vals[2],
                })
            }
            None => {
                let t = spec.aspect_ratio();
                let input = SaddleInput::with_budget(t, spec.beta, spec.eta_tilde, spec.w_budget)
                    .map_err(|e| e.to_string())?;
                solve_saddle(&input, None).map_err(|e| e.to_string())?
            }
        };
        let comparison = compare_to_replica(&stats, &outcome, args.q0_tol, args.eps_tol)
            .map_err(|e| e.to_string())?;
        let point = outcome.converged().expect("comparison requires convergence");
        let config = CompareConfig {
            n_assets: spec.n_assets,
            n_samples: spec.n_samples,
            beta: spec.beta,
            eta_tilde: spec.eta_tilde,
            w_budget: spec.w_budget,
            runs: spec.n_realizations,
            seed: spec.seed,
            q0_tol: args.q0_tol,
            eps_tol: args.eps_tol,
            replica_point: args
                .replica_point
                .as_deref()
                .map(grid::parse_values)
                .transpose()?,
        };
        let result = CompareResult {
            saddle: SaddleEcho {
                eps_tilde: point.eps_tilde,
                q0_tilde: point.q0_tilde,
                delta: point.delta,
                q0: point.q0(),
                eps: point.eps(),
            },
            comparison,
            feasible_fraction: stats.feasible_fraction,
        };
        emit_report(
            args.out.as_deref(),
            &Report::new("mc", config, result).to_json(),
        )?;
        return Ok(0);
    }

    let json = EnsembleReport::new(&spec, &stats, VERSION).to_json();
    emit_report(args.out.as_deref(), &json)?;
    Ok(0)
}

#[derive(Args)]
struct LiquidateArgs {
    /// Liquidated amounts per step: header asset_1,...,asset_N, one row
    /// per step; zero rows mean no trading
    #[arg(long)]
    schedule: PathBuf,
    /// Return stream consumed column by column, scenario CSV format
    #[arg(long)]
    returns: PathBuf,
    /// Initial prices as a comma list
    #[arg(long)]
    p0: Option<String>,
    /// Uniform initial price applied to every asset
    #[arg(long, conflicts_with = "p0", default_value_t = 1.0)]
    p0_value: f64,
    /// Shared impact coefficient
    #[arg(long, conflicts_with = "eta_per_asset", default_value_t = 0.0)]
    eta: f64,
    /// Per-asset impact coefficients as a comma list
    #[arg(long)]
    eta_per_asset: Option<String>,
    /// Write the simulation CSV here (report on stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct LiquidateConfig {
    schedule: String,
    returns: String,
    p0: Vec<f64>,
    eta: Vec<f64>,
}

#[derive(Serialize)]
struct LiquidateResult {
    steps: usize,
    total_proceeds: f64,
    final_prices: Vec<f64>,
}

/// Reads a schedule CSV; the scenario header convention with any number of
/// data rows, including none.
fn read_schedule(path: &Path) -> Result<(usize, Vec<Vec<f64>>), String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| format!("{}: missing header row", path.display()))?;
    let names: Vec<&str> = header.trim().split(',').collect();
    for (k, name) in names.iter().enumerate() {
        let expected = format!("asset_{}", k + 1);
        if name.trim() != expected {
            return Err(format!(
                "{}: line 1: expected header column `{expected}`, got `{name}`",
                path.display()
            ));
        }
    }
    let n = names.len();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != n {
            return Err(format!(
                "{}: line {}: expected {n} fields, got {}",
                path.display(),
                idx + 1,
                fields.len()
            ));
        }
        let mut row = Vec::with_capacity(n);
        for (col, field) in fields.iter().enumerate() {
            row.push(field.trim().parse::<f64>().map_err(|e| {
                format!(
                    "{}: line {}, column {}: invalid number `{field}`: {e}",
                    path.display(),
                    idx + 1,
                    col + 1
                )
            })?);
        }
        rows.push(row);
    }
    Ok((n, rows))
}

fn cmd_liquidate(args: LiquidateArgs) -> Result<u8, String> {
    let (n, schedule) = read_schedule(&args.schedule)?;
    let returns = load_scenarios(&args.returns)
        .map_err(|e| format!("{}: {e}", args.returns.display()))?;
    if returns.n_assets() != n {
        return Err(format!(
            "schedule has {n} assets but returns have {}",
            returns.n_assets()
        ));
    }
    let p0: Vec<f64> = match &args.p0 {
        Some(list) => grid::parse_values(list)?,
        None => vec![args.p0_value; n],
    };
    let impact = match &args.eta_per_asset {
        Some(list) => ImpactParams::PerAsset(grid::parse_values(list)?),
        None => ImpactParams::Uniform(args.eta),
    };
    let run =
        simulate_liquidation(&schedule, &returns, &p0, &impact).map_err(|e| e.to_string())?;
    let mut csv = Vec::new();
    write_liquidation_csv(&run, &mut csv).map_err(|e| e.to_string())?;

    let eta_echo = match &impact {
        ImpactParams::Uniform(e) => vec![*e; n],
        ImpactParams::PerAsset(es) => es.clone(),
    };
    let config = LiquidateConfig {
        schedule: args.schedule.display().to_string(),
        returns: args.returns.display().to_string(),
        p0: p0.clone(),
        eta: eta_echo,
    };
    let result = LiquidateResult {
        steps: run.cash.len(),
        total_proceeds: run.total_proceeds,
        final_prices: run.price_path.last().expect("path never empty").prices.clone(),
    };
    let json = Report::new("liquidate", config, result).to_json();
    emit_artifact(args.out.as_deref(), &csv, &json)?;
    Ok(0)
}
