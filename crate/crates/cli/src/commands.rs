use pulsefront::frontsim::{
    extinction_rate_fit, front_speed, pulsating_residual, simulate_with, InitialData, SimulationOptions, SimulationRun,
};
use pulsefront::io::{fmt_sig, write_columns, write_csv, write_strip_dump};
use pulsefront::spectral::{
    dirichlet_grid, dirichlet_principal_eig, dispersion_curve, periodic_principal_eig, SpectralError,
};
use pulsefront::steady::{
    continuation_branch, steady_newton, steady_time_march, MarchOptions, MarchOutcome, NewtonOptions, SteadyError,
    SteadyState,
};
use pulsefront::strip::{
    solve_cooperative, solve_with_normalization, strip_constants, IterationOptions, NormalizationOptions, StripGrid,
    StripProblem,
};

use crate::{CliError, Context, Outcome};

pub fn lambda1(ctx: &Context) -> Result<f64, CliError> {
    Ok(periodic_principal_eig(&ctx.field, &ctx.grid(), 0.0, 0.0, &ctx.eig_opts()).map_err(CliError::solver)?.lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigMode {
    Periodic,
    Dirichlet { half_width: f64 },
    Drift { lambda: f64, epsilon: f64 },
}

pub fn cmd_eig(ctx: &Context, mode: EigMode) -> Result<Outcome, CliError> {
    let mut rec = ctx.record("eig");
    let opts = ctx.eig_opts();
    let (label, name, pair) = match mode {
        EigMode::Periodic => ("lambda1", "eig_periodic.csv".to_string(), periodic_principal_eig(&ctx.field, &ctx.grid(), 0.0, 0.0, &opts)),
        EigMode::Dirichlet { half_width } => {
            if !(half_width > 0.0) {
                return Err(CliError::Config(format!("--dirichlet needs a positive radius, got {half_width}")));
            }
            rec.param("dirichlet", half_width);
            let grid = dirichlet_grid(&ctx.field, half_width, ctx.config.grid.n_cells).map_err(CliError::solver)?;
            ("lambda1_R", format!("eig_dirichlet_{half_width}.csv"), dirichlet_principal_eig(&ctx.field, &grid, &opts))
        }
        EigMode::Drift { lambda, epsilon } => {
            rec.param("drift", lambda).param("eps", epsilon);
            let pair = periodic_principal_eig(&ctx.field, &ctx.grid(), lambda, epsilon, &opts);
            ("k", format!("eig_drift_{lambda}_{epsilon}.csv"), pair)
        }
    };
    let pair = pair.map_err(CliError::solver)?;
    let path = ctx.path(&name);
    write_columns(&path, &["x", "phi", "psi"], &[&pair.x, &pair.phi, &pair.psi])?;
    rec.metric(label, pair.lambda).metric("residual", pair.residual).artifact(&path);
    rec.finish(&ctx.run_dir)?;
    let mut out = Outcome::default();
    out.line(format!("{label} = {}", fmt_sig(pair.lambda)));
    Ok(out)
}

pub fn cmd_speed(ctx: &Context, epsilon: f64, range: Option<(f64, f64)>, samples: Option<usize>) -> Result<Outcome, CliError> {
    let mut opts = ctx.dispersion_opts();
    if let Some((lo, hi)) = range {
        opts.lambda_lo = lo;
        opts.lambda_hi = hi;
    }
    if let Some(n) = samples {
        opts.n_samples = n;
    }
    if !(epsilon >= 0.0 && epsilon <= 1.0) {
        return Err(CliError::Config(format!("--eps must lie in [0, 1], got {epsilon}")));
    }
    let curve = dispersion_curve(&ctx.field, &ctx.grid(), epsilon, &opts).map_err(|e| match e {
        SpectralError::BadParameter(m) => CliError::Config(m),
        other => CliError::solver(other),
    })?;
    let path = ctx.path(&format!("dispersion_{epsilon}.csv"));
    write_columns(&path, &["lambda", "k", "c"], &[&curve.lambdas, &curve.k_values, &curve.c_values])?;
    let mut rec = ctx.record("speed");
    rec.param("eps", epsilon).param("lambda_range", format!("{}:{}", opts.lambda_lo, opts.lambda_hi)).param("samples", opts.n_samples);
    rec.metric("c_bar", curve.c_bar).metric("lambda_star", curve.lambda_star).metric("lambda1", curve.lambda1).artifact(&path);
    rec.finish(&ctx.run_dir)?;
    let mut out = Outcome::default();
    out.line(format!("lambda1 = {}", fmt_sig(curve.lambda1)));
    out.line(format!("lambda_star = {}", fmt_sig(curve.lambda_star)));
    out.line(format!("c_bar = {}", fmt_sig(curve.c_bar)));
    Ok(out)
}

/// Result of a steady-state solve: a positive state or extinction.
#[derive(Debug, Clone, PartialEq)]
pub enum SteadyResult {
    Nontrivial(SteadyState),
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteadyMode {
    /// Time march, then a Newton polish.
    Default,
    March,
    Newton,
    Branch { lo: f64, hi: f64, steps: usize },
}

fn flat_guess(ctx: &Context) -> Vec<f64> {
    vec![0.5 * ctx.field.bounds().steady_box(); ctx.config.grid.n_cells]
}

fn newton_opts(ctx: &Context) -> NewtonOptions {
    NewtonOptions { tol: ctx.config.solver.newton_tol, ..Default::default() }
}

pub fn solve_steady(ctx: &Context, march_only: bool) -> Result<SteadyResult, CliError> {
    let grid = ctx.grid();
    let init = flat_guess(ctx);
    let opts = MarchOptions { tol: ctx.config.solver.march_tol, allow_extinction: true, ..Default::default() };
    let marched = match steady_time_march(&ctx.field, &grid, &init, &init, &opts).map_err(CliError::solver)? {
        MarchOutcome::Converged(s) => s,
        MarchOutcome::CollapsedToZero { .. } => return Ok(SteadyResult::Trivial),
    };
    if march_only {
        return Ok(SteadyResult::Nontrivial(marched));
    }
    Ok(SteadyResult::Nontrivial(steady_newton(&ctx.field, &grid, &marched.p, &marched.q, &newton_opts(ctx)).unwrap_or(marched)))
}

pub fn cmd_steady(ctx: &Context, mode: SteadyMode) -> Result<Outcome, CliError> {
    let mut rec = ctx.record("steady");
    let mut out = Outcome::default();
    let result = match mode {
        SteadyMode::Branch { lo, hi, steps } => {
            rec.param("branch", format!("{lo}:{hi}:{steps}"));
            let branch = continuation_branch(&ctx.field, &ctx.grid(), lo, hi, steps, &ctx.eig_opts(), &newton_opts(ctx))
                .map_err(|e| match e {
                    SteadyError::BadInput(m) => CliError::Config(m),
                    other => CliError::solver(other),
                })?;
            let path = ctx.path("branch.csv");
            write_csv(&path, &["beta", "norm"], branch.iter().map(|b| vec![b.beta, b.norm]))?;
            rec.metric("points", branch.len() as f64).artifact(&path);
            rec.finish(&ctx.run_dir)?;
            out.line(format!("branch points = {}", branch.len()));
            if let Some(b) = branch.iter().find(|b| b.beta == 0.0) {
                out.line(format!("norm at beta = 0: {}", fmt_sig(b.norm)));
            }
            return Ok(out);
        }
        SteadyMode::March => solve_steady(ctx, true)?,
        SteadyMode::Default => solve_steady(ctx, false)?,
        SteadyMode::Newton => {
            let init = flat_guess(ctx);
            match steady_newton(&ctx.field, &ctx.grid(), &init, &init, &newton_opts(ctx)) {
                Ok(s) => SteadyResult::Nontrivial(s),
                Err(SteadyError::ConvergedToTrivial) => SteadyResult::Trivial,
                Err(e) => return Err(CliError::solver(e)),
            }
        }
    };
    rec.param("mode", format!("{mode:?}"));
    match result {
        SteadyResult::Trivial => {
            rec.metric("sup_norm", 0.0);
            rec.finish(&ctx.run_dir)?;
            out.line("steady = trivial");
        }
        SteadyResult::Nontrivial(s) => {
            let path = ctx.path("steady.csv");
            write_columns(&path, &["x", "p", "q"], &[&s.x, &s.p, &s.q])?;
            rec.metric("sup_norm", s.sup_norm()).metric("residual", s.residual).artifact(&path);
            rec.finish(&ctx.run_dir)?;
            out.line(format!("steady = {}", s.method.tag()));
            out.line(format!("sup_norm = {}", fmt_sig(s.sup_norm())));
            out.line(format!("min = {}", fmt_sig(s.min_p().min(s.min_q()))));
            out.line(format!("residual = {}", fmt_sig(s.residual)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StripArgs {
    pub epsilon: Option<f64>,
    pub k: Option<f64>,
    pub nu: Option<f64>,
    /// Solve at this speed instead of searching for the normalization.
    pub c: Option<f64>,
}

pub fn cmd_strip(ctx: &Context, args: StripArgs) -> Result<Outcome, CliError> {
    let epsilon = args.epsilon.unwrap_or(ctx.config.solver.epsilon);
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(CliError::Config(format!("--eps must lie in (0, 1], got {epsilon}")));
    }
    let n_x = ctx.config.grid.strip_n_x;
    let x_grid = pulsefront::PeriodicGrid::new(n_x, ctx.config.period).map_err(CliError::solver)?;
    let steady = pulsefront::strip::steady_on_grid(&ctx.field, &x_grid).map_err(CliError::solver)?;
    let consts = strip_constants(&ctx.field, &steady, &x_grid, epsilon, &ctx.eig_opts(), &ctx.dispersion_opts())
        .map_err(CliError::solver)?;
    let k = args.k.unwrap_or(1.1 * consts.k0);
    let nu = args.nu.unwrap_or(0.5 * consts.nu0);
    if k <= consts.k0 {
        return Err(CliError::Config(format!("--K = {k} must exceed K0 = {}", consts.k0)));
    }
    if !(nu > 0.0 && nu < consts.nu0) {
        return Err(CliError::Config(format!("--nu = {nu} must lie in (0, nu0 = {})", consts.nu0)));
    }
    let a0 = 1.05 * consts.a0_star;
    let a = a0 + consts.a_bar(k, nu) + 1.0;
    let grid = StripGrid::new(a, n_x, ctx.config.period).map_err(CliError::solver)?;
    let problem = StripProblem::new(&ctx.field, grid, &steady, epsilon, k).map_err(CliError::solver)?;
    let solution = match args.c {
        Some(c) => solve_cooperative(&problem, c, None, &IterationOptions::default()).map_err(CliError::solver)?,
        None => {
            solve_with_normalization(&problem, nu, a0, consts.c_bar + epsilon, &NormalizationOptions::default())
                .map_err(CliError::solver)?
                .solution
        }
    };
    let norm = solution.window_norm(a0);
    let bin = ctx.path("strip.bin");
    write_strip_dump(&bin, &solution)?;
    let summary = ctx.path("strip_summary.csv");
    write_csv(
        &summary,
        &["c", "epsilon", "K", "nu", "iterations", "norm_window"],
        [vec![solution.c, epsilon, k, nu, solution.iterations as f64, norm]],
    )?;
    let mut rec = ctx.record("strip");
    rec.param("eps", epsilon).param("K", k).param("nu", nu).param("a", grid.half_width());
    if let Some(c) = args.c {
        rec.param("c", c);
    }
    rec.metric("c", solution.c).metric("norm_window", norm).metric("c_bar_eps", consts.c_bar);
    rec.artifact(&bin).artifact(&summary);
    rec.finish(&ctx.run_dir)?;
    let cert = solution.certificate;
    let mut out = Outcome::default();
    out.line(format!("c = {}", fmt_sig(solution.c)));
    out.line(format!("norm_window = {}", fmt_sig(norm)));
    out.line(format!("c_bar_eps = {}", fmt_sig(consts.c_bar)));
    out.line(format!("iterations = {}", solution.iterations));
    out.line(format!(
        "monotone iterates = {}, s-monotone = {}, bounds = {}",
        cert.iterates_nonincreasing, cert.s_monotone, cert.within_bounds
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulateArgs {
    pub width: Option<usize>,
    pub t_max: Option<f64>,
    pub kappa: Option<f64>,
    /// Write every k-th emitted state to the snapshot file.
    pub emit_stride: Option<usize>,
}

/// Front-tracking level and simulation options for a scenario: a plateau of
/// height `nu0` on the first period when `lambda1 < 0`, uniform data for
/// extinction runs.
pub fn simulation_setup(ctx: &Context, lambda1: f64, args: &SimulateArgs) -> Result<(SimulationOptions, f64), CliError> {
    let s = &ctx.config.simulation;
    let mut opts = SimulationOptions {
        width_periods: args.width.unwrap_or(s.width_periods),
        n_per_period: s.n_per_period,
        t_max: args.t_max.unwrap_or(s.t_max),
        dt: if s.dt > 0.0 { Some(s.dt) } else { None },
        emit_every: s.emit_every,
        kappa: args.kappa.unwrap_or(s.kappa),
        initial: InitialData::Uniform { height: 0.5 * ctx.field.bounds().steady_box() },
        guard_boundary: false,
    };
    if lambda1 >= 0.0 {
        return Ok((opts, f64::NAN));
    }
    let steady = match solve_steady(ctx, false)? {
        SteadyResult::Nontrivial(s) => s,
        SteadyResult::Trivial => return Err(CliError::Solver("no positive steady state although lambda1 < 0".into())),
    };
    let nu0 = 1f64
        .min(-lambda1 / (4.0 * ctx.field.bounds().gamma_inf))
        .min(steady.min_p().min(steady.min_q()));
    opts.initial = InitialData::Plateau { height: nu0, periods: 1.0 };
    opts.guard_boundary = true;
    Ok((opts, 0.5 * nu0))
}

/// Speed, pulsation residual and decay fit of a finished run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub lambda1: f64,
    pub c_bar0: f64,
    pub fitted_speed: f64,
    pub speed_stderr: f64,
    pub r2: f64,
    pub pulsating_residual: f64,
    pub control_residual: f64,
    pub decay_rate: f64,
}

pub fn run_metrics(ctx: &Context, run: &SimulationRun, lambda1: f64, nu: f64) -> Result<RunMetrics, CliError> {
    let mut m = RunMetrics {
        lambda1,
        c_bar0: f64::NAN,
        fitted_speed: f64::NAN,
        speed_stderr: f64::NAN,
        r2: f64::NAN,
        pulsating_residual: f64::NAN,
        control_residual: f64::NAN,
        decay_rate: f64::NAN,
    };
    if lambda1 < 0.0 {
        m.c_bar0 = dispersion_curve(&ctx.field, &ctx.grid(), 0.0, &ctx.dispersion_opts()).map_err(CliError::solver)?.c_bar;
        let fit = front_speed(&run.trajectory(nu)).map_err(CliError::solver)?;
        m.fitted_speed = fit.slope;
        m.speed_stderr = fit.stderr;
        m.r2 = fit.r2;
        m.pulsating_residual = pulsating_residual(run, fit.slope, nu, 8).map_err(CliError::solver)?.residual;
        m.control_residual = pulsating_residual(run, 1.5 * fit.slope, nu, 8).map_err(CliError::solver)?.residual;
    } else if lambda1 > 0.0 {
        m.decay_rate = extinction_rate_fit(run, lambda1).map_err(CliError::solver)?.rate;
    }
    Ok(m)
}

pub fn cmd_simulate(ctx: &Context, args: SimulateArgs) -> Result<Outcome, CliError> {
    let l1 = lambda1(ctx)?;
    let (opts, nu) = simulation_setup(ctx, l1, &args)?;
    let stride = args.emit_stride.unwrap_or(20).max(1);
    let snap_path = ctx.path("snapshots.csv");
    let mut writer = csv::Writer::from_path(&snap_path)?;
    writer.write_record(["t", "x", "u", "v"])?;
    let h = ctx.config.period / opts.n_per_period as f64;
    let mut emitted = 0usize;
    let mut write_err = None;
    let run = simulate_with(&ctx.field, &opts, |s| {
        if emitted % stride == 0 && write_err.is_none() {
            for (i, (u, v)) in s.u.iter().zip(&s.v).enumerate() {
                let row = [fmt_sig(s.t), fmt_sig(i as f64 * h), fmt_sig(*u), fmt_sig(*v)];
                if let Err(e) = writer.write_record(&row) {
                    write_err = Some(e);
                    break;
                }
            }
        }
        emitted += 1;
    })
    .map_err(CliError::solver)?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    writer.flush()?;
    let m = run_metrics(ctx, &run, l1, nu)?;
    let metrics_path = ctx.path("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics_path)?;
    w.write_record(["scenario_id", "lambda1", "c_bar0", "fitted_speed", "speed_stderr", "pulsating_residual", "decay_rate"])?;
    let mut row = vec![ctx.hash.clone()];
    row.extend([m.lambda1, m.c_bar0, m.fitted_speed, m.speed_stderr, m.pulsating_residual, m.decay_rate].map(fmt_sig));
    w.write_record(&row)?;
    w.flush()?;

    let mut rec = ctx.record("simulate");
    rec.param("width", opts.width_periods).param("t_max", opts.t_max).param("kappa", opts.kappa).param("emit_stride", stride);
    rec.metric("lambda1", m.lambda1).metric("clip_events", run.clip_events as f64);
    for (k, v) in [("c_bar0", m.c_bar0), ("fitted_speed", m.fitted_speed), ("pulsating_residual", m.pulsating_residual), ("decay_rate", m.decay_rate)] {
        if v.is_finite() {
            rec.metric(k, v);
        }
    }
    rec.artifact(&snap_path).artifact(&metrics_path);
    rec.finish(&ctx.run_dir)?;

    let mut out = Outcome::default();
    out.line(format!("lambda1 = {}", fmt_sig(m.lambda1)));
    if l1 < 0.0 {
        out.line(format!("c_bar0 = {}", fmt_sig(m.c_bar0)));
        out.line(format!("fitted_speed = {} +- {}", fmt_sig(m.fitted_speed), fmt_sig(m.speed_stderr)));
        out.line(format!("pulsating_residual = {}", fmt_sig(m.pulsating_residual)));
    } else if l1 > 0.0 {
        out.line(format!("decay_rate = {}", fmt_sig(m.decay_rate)));
    }
    out.line(format!("clip_events = {}", run.clip_events));
    Ok(out)
}
