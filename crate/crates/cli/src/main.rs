use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sphereflow_cli::commands::{self, default_verify_domain, index_label, output_dir, termination_label};
use sphereflow_cli::config::{parse_config, parse_domain};
use sphereflow_cli::{CliError, Result, RunSpec};
use sphereflow_core::{make_domain, Termination};

#[derive(Parser)]
#[command(name = "sphereflow", version, about = "Norm-preserving nonlinear heat flow: runs, sweeps and checks")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for random initial data and verify suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent sweep subruns.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Time-series format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow described by --config.
    Run,
    /// Flow to a stationary state and report λ(v), E(v) and the residual.
    Stationary {
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Run a property suite: nonlinearity, modified, surjectivity, resolvent, yosida, energy, theta or all.
    Verify { suite: String },
    /// Cross product over dt, p and μ lists, one subdirectory per point.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        dt: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
    },
    /// Lowest eigenvalues of the discrete Laplacian with continuum values.
    Spectrum {
        #[arg(short, long, default_value_t = 10)]
        m: usize,
        /// Box lengths; overrides the config domain.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<f64>,
        /// Interior nodes per axis; overrides the config domain.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
}

fn load(cli: &Cli) -> Result<RunSpec> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let mut spec = parse_config(path)?;
    if let Some(seed) = cli.seed {
        spec.flow.seed = seed;
        if let sphereflow_cli::InitialCondition::Random { seed: s } = &mut spec.initial {
            *s = seed;
        }
    }
    Ok(spec)
}

fn execute(cli: &Cli) -> Result<bool> {
    let Format::Csv = cli.format;
    match &cli.command {
        Command::Run => {
            let spec = load(cli)?;
            let out = output_dir(cli.out.as_deref(), Some(&spec));
            let summary = commands::cmd_run(&spec, &out)?;
            println!(
                "{}: {} steps, E = {:.12e}, λ = {:.12e}, residual = {:.3e} -> {}",
                termination_label(summary.termination),
                summary.steps,
                summary.final_energy,
                summary.final_lambda,
                summary.final_residual,
                out.display()
            );
            if let Some(msg) = &summary.failure {
                eprintln!("solver failure: {msg}");
            }
            Ok(summary.termination != Termination::SolverFailure)
        }
        Command::Stationary { tol } => {
            let spec = load(cli)?;
            let out = output_dir(cli.out.as_deref(), Some(&spec));
            let r = commands::cmd_stationary(&spec, &out, *tol)?;
            println!(
                "λ(v) = {:.15e}\nE(v) = {:.15e}\nresidual = {:.3e}\nconverged = {} after {} steps\nλ₁h = {:.15e}",
                r.multiplier, r.energy, r.residual, r.converged, r.iterations, r.lambda1_h
            );
            Ok(r.converged)
        }
        Command::Verify { suite } => {
            let domain = match &cli.config {
                Some(path) => parse_domain(path)?,
                None => default_verify_domain(),
            };
            let out = cli.out.clone();
            let (reports, ok) = commands::cmd_verify(suite, cli.seed.unwrap_or(0), &domain, out.as_deref())?;
            for r in &reports {
                let status = match (r.pass, r.informational) {
                    (true, _) => "PASS",
                    (false, true) => "INFO",
                    (false, false) => "FAIL",
                };
                println!("[{status}] {:<28} trials={:<6} worst_margin={:+.3e} tol={:.0e}", r.name, r.trials, r.worst_margin, r.tolerance);
            }
            Ok(ok)
        }
        Command::Sweep { dt, p, mu } => {
            let spec = load(cli)?;
            let out = output_dir(cli.out.as_deref(), Some(&spec));
            let points = commands::sweep_points(&spec, dt, p, mu);
            let rows = commands::cmd_sweep(&spec, &out, &points, cli.jobs)?;
            println!("{:>10} {:>6} {:>10} {:>22} {:>12}  termination", "dt", "p", "mu", "final energy", "residual");
            for (pt, s) in &rows {
                let mu = pt.mu.map_or("-".to_string(), |m| m.to_string());
                println!(
                    "{:>10} {:>6} {:>10} {:>22.15e} {:>12.3e}  {}",
                    pt.dt,
                    pt.p,
                    mu,
                    s.final_energy,
                    s.final_residual,
                    termination_label(s.termination)
                );
            }
            Ok(rows.iter().all(|(_, s)| s.termination != Termination::SolverFailure))
        }
        Command::Spectrum { m, lengths, sizes } => {
            let domain = if !lengths.is_empty() || !sizes.is_empty() {
                make_domain(lengths.len(), lengths, sizes).map_err(|e| CliError::Validation(e.to_string()))?
            } else {
                let path =
                    cli.config.as_ref().ok_or_else(|| CliError::Validation("--config or --lengths/--sizes required".into()))?;
                parse_domain(path)?
            };
            let modes = commands::cmd_spectrum(&domain, *m, cli.out.as_deref())?;
            println!("{:>5} {:>12} {:>24} {:>24}", "rank", "index", "eigenvalue", "continuum");
            for (rank, mode) in modes.iter().enumerate() {
                println!("{:>5} {:>12} {:>24.15e} {:>24.15e}", rank + 1, index_label(&mode.index), mode.eigenvalue, mode.continuum);
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
