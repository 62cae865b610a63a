use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pulsefront_cli::commands::{self, EigMode, SimulateArgs, SteadyMode, StripArgs};
use pulsefront_cli::{sweep, verify, CliError, Context, GlobalOptions, Outcome};

#[derive(Parser)]
#[command(name = "pulsefront", version, about = "Fronts and steady states of two-phenotype reaction-diffusion systems in periodic media")]
struct Cli {
    /// Scenario file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output root; run directories are created below it.
    #[arg(long, global = true, env = "PULSEFRONT_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Eigensolver tolerance, overriding the scenario.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenvalue of the linearized operator.
    Eig(EigArgs),
    /// Dispersion relation and minimal speed.
    Speed(SpeedArgs),
    /// Periodic steady state or the bifurcation branch.
    Steady(SteadyArgs),
    /// Truncated-strip front problem.
    Strip(StripCli),
    /// Time simulation of a front on a finite line.
    Simulate(SimulateCli),
    /// Run the invariant battery.
    Verify,
    /// Phase diagram over a parameter grid.
    Sweep {
        /// Scenario file with a `[sweep]` section; defaults to --scenario.
        file: Option<PathBuf>,
    },
}

#[derive(Args)]
struct EigArgs {
    /// Dirichlet problem on (-R, R).
    #[arg(long, value_name = "R", conflicts_with_all = ["drift", "eps"])]
    dirichlet: Option<f64>,
    /// Exponential drift lambda of the periodic operator.
    #[arg(long, requires = "eps", allow_hyphen_values = true)]
    drift: Option<f64>,
    #[arg(long, requires = "drift")]
    eps: Option<f64>,
}

#[derive(Args)]
struct SpeedArgs {
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Search window for the decay rate, as lo:hi.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    lambda_range: Option<(f64, f64)>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
#[group(multiple = false)]
struct SteadyArgs {
    /// Continuation in beta, as lo:hi:n.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    branch: Option<(f64, f64, usize)>,
    #[arg(long)]
    march: bool,
    #[arg(long)]
    newton: bool,
}

#[derive(Args)]
struct StripCli {
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long, conflicts_with = "c")]
    nu: Option<f64>,
    /// Solve at a fixed speed instead of normalizing.
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
}

#[derive(Args)]
struct SimulateCli {
    /// Domain width in periods.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Write every k-th emitted state.
    #[arg(long)]
    emit_stride: Option<usize>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
    Ok((a.parse().map_err(|_| format!("bad number `{a}`"))?, b.parse().map_err(|_| format!("bad number `{b}`"))?))
}

fn parse_triple(s: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:n".into());
    }
    Ok((
        parts[0].parse().map_err(|_| format!("bad number `{}`", parts[0]))?,
        parts[1].parse().map_err(|_| format!("bad number `{}`", parts[1]))?,
        parts[2].parse().map_err(|_| format!("bad count `{}`", parts[2]))?,
    ))
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let global = GlobalOptions { out: cli.out, jobs: cli.jobs, tol: cli.tol };
    if let Command::Sweep { file } = &cli.command {
        let path = file.as_ref().or(cli.scenario.as_ref()).ok_or_else(|| CliError::Config("sweep needs a file".into()))?;
        return sweep::cmd_sweep(path, &global);
    }
    let path = cli.scenario.ok_or_else(|| CliError::Config("--scenario is required".into()))?;
    let ctx = Context::load(&path, &global)?;
    match cli.command {
        Command::Eig(a) => {
            let mode = match (a.dirichlet, a.drift, a.eps) {
                (Some(r), _, _) => EigMode::Dirichlet { half_width: r },
                (None, Some(lambda), Some(epsilon)) => EigMode::Drift { lambda, epsilon },
                _ => EigMode::Periodic,
            };
            commands::cmd_eig(&ctx, mode)
        }
        Command::Speed(a) => commands::cmd_speed(&ctx, a.eps, a.lambda_range, a.samples),
        Command::Steady(a) => {
            let mode = match (a.branch, a.march, a.newton) {
                (Some((lo, hi, steps)), _, _) => SteadyMode::Branch { lo, hi, steps },
                (None, true, _) => SteadyMode::March,
                (None, _, true) => SteadyMode::Newton,
                _ => SteadyMode::Default,
            };
            commands::cmd_steady(&ctx, mode)
        }
        Command::Strip(a) => commands::cmd_strip(&ctx, StripArgs { epsilon: a.eps, k: a.k, nu: a.nu, c: a.c }),
        Command::Simulate(a) => commands::cmd_simulate(
            &ctx,
            SimulateArgs { width: a.width, t_max: a.tmax, kappa: a.kappa, emit_stride: a.emit_stride },
        ),
        Command::Verify => verify::cmd_verify(&ctx),
        Command::Sweep { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    // Usage errors count as configuration errors.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
