//! The invariant battery behind `pulsefront verify`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pulsefront::frontsim::{extinction_rate_fit, front_speed, pulsating_residual, simulate};
use pulsefront::io::fmt_sig;
use pulsefront::spectral::{
    a0_star, dirichlet_convergence, dispersion_curve, monotonicity_check_eps, periodic_principal_eig,
    strip_rayleigh_bound, SpectralError,
};

use crate::commands::{lambda1, simulation_setup, solve_steady, SimulateArgs, SteadyResult};
use crate::{CliError, Context, Outcome};

/// Half-width of the near-critical band in which the dichotomy is not tested.
pub const CRITICAL_BAND: f64 = 1e-3;
pub const DIRICHLET_RADII: [f64; 4] = [5.0, 10.0, 20.0, 40.0];
pub const EPS_LADDER: [f64; 5] = [0.0, 0.1, 0.2, 0.5, 1.0];
pub const PULSATION_TOL: f64 = 0.02;
pub const CONTROL_FACTOR: f64 = 5.0;
pub const DECAY_REL_TOL: f64 = 0.05;
pub const CACHE_FILE: &str = "steady_cache.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn tag(&self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: Status,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, ok: bool, value: f64, threshold: f64, detail: String) -> Self {
        Self { name, status: Status::from_bool(ok), value, threshold, detail }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        Self { name, status: Status::Skipped, value: f64::NAN, threshold: f64::NAN, detail: detail.into() }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Self { name, status: Status::Fail, value: f64::NAN, threshold: f64::NAN, detail: err.to_string() }
    }
}

/// Steady state as stored in the cache: the two components on the period grid.
#[derive(Debug, Clone, PartialEq)]
pub enum CachedSteady {
    Trivial,
    Nontrivial { p: Vec<f64>, q: Vec<f64> },
}

impl CachedSteady {
    fn from_result(r: SteadyResult) -> Self {
        match r {
            SteadyResult::Trivial => CachedSteady::Trivial,
            SteadyResult::Nontrivial(s) => CachedSteady::Nontrivial { p: s.p, q: s.q },
        }
    }
}

/// Writes the cache with round-trip float formatting so that a reload is exact.
pub fn write_cache(path: &Path, steady: &CachedSteady) -> Result<(), CliError> {
    let mut text = String::from("kind,p,q\n");
    match steady {
        CachedSteady::Trivial => text.push_str("trivial,0.0,0.0\n"),
        CachedSteady::Nontrivial { p, q } => {
            for (a, b) in p.iter().zip(q) {
                let _ = writeln!(text, "nontrivial,{a:?},{b:?}");
            }
        }
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a cache written by [`write_cache`] for a grid of `n` nodes.
pub fn read_cache(path: &Path, n: usize) -> Result<CachedSteady, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    if lines.next() != Some("kind,p,q") {
        return Err("bad header".into());
    }
    let (mut p, mut q) = (Vec::new(), Vec::new());
    let mut trivial = false;
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(format!("line {}: expected 3 fields", k + 2));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", k + 2));
        let (a, b) = (parse(fields[1])?, parse(fields[2])?);
        match fields[0] {
            "trivial" => trivial = true,
            "nontrivial" if a.is_finite() && b.is_finite() => {
                p.push(a);
                q.push(b);
            }
            other => return Err(format!("line {}: bad row kind {other:?}", k + 2)),
        }
    }
    match (trivial, p.len()) {
        (true, 0) => Ok(CachedSteady::Trivial),
        (false, len) if len == n => Ok(CachedSteady::Nontrivial { p, q }),
        _ => Err(format!("expected {n} nodes, found {}", p.len())),
    }
}

/// Loads the steady state from the run directory, rebuilding a missing or
/// corrupt cache. The returned flag is true when the cache was rebuilt over a
/// corrupt file.
pub fn cached_steady(ctx: &Context) -> Result<(CachedSteady, bool), CliError> {
    let path = ctx.path(CACHE_FILE);
    let n = ctx.config.grid.n_cells;
    let corrupt = if path.exists() {
        match read_cache(&path, n) {
            Ok(s) => return Ok((s, false)),
            Err(e) => {
                eprintln!("warning: steady cache {} unreadable ({e}); rebuilding", path.display());
                true
            }
        }
    } else {
        false
    };
    let steady = CachedSteady::from_result(solve_steady(ctx, false)?);
    write_cache(&path, &steady)?;
    Ok((steady, corrupt))
}

fn dirichlet_check(ctx: &Context, l1: f64) -> CheckResult {
    const NAME: &str = "dirichlet_sandwich";
    let rows = match dirichlet_convergence(&ctx.field, ctx.config.grid.n_cells, l1, &DIRICHLET_RADII, &ctx.eig_opts()) {
        Ok(r) => r,
        Err(e) => return CheckResult::failed(NAME, e),
    };
    let slack = 1e-9 * (1.0 + l1.abs());
    let above = rows.iter().all(|r| r.gap >= -slack);
    let nonincreasing = rows.windows(2).all(|w| w[1].lambda1_r <= w[0].lambda1_r + slack);
    let base = rows[0].gap_times_r;
    let worst = rows.iter().map(|r| r.gap_times_r).fold(f64::NEG_INFINITY, f64::max);
    let ratio = if base > 0.0 { worst / base } else { 1.0 };
    let ok = above && nonincreasing && worst <= 2.0 * base.max(0.0) + slack;
    let detail = format!(
        "gap*R = {}; above = {above}; nonincreasing = {nonincreasing}",
        rows.iter().map(|r| fmt_sig(r.gap_times_r)).collect::<Vec<_>>().join(" ")
    );
    CheckResult::new(NAME, ok, ratio, 2.0, detail)
}

fn rayleigh_check(ctx: &Context, l1: f64) -> CheckResult {
    const NAME: &str = "rayleigh_bound";
    if l1 >= 0.0 {
        return CheckResult::skipped(NAME, "lambda1 >= 0");
    }
    let grid = ctx.grid();
    let eig = match periodic_principal_eig(&ctx.field, &grid, 0.0, 0.0, &ctx.eig_opts()) {
        Ok(e) => e,
        Err(e) => return CheckResult::failed(NAME, e),
    };
    let star = a0_star(l1);
    let mut worst = f64::NEG_INFINITY;
    for a0 in [star, 2.0 * star] {
        for eps in [0.0, 0.5, 1.0] {
            match strip_rayleigh_bound(&ctx.field, &grid, &eig, a0, eps, 4000) {
                Ok(b) => worst = worst.max(b.quadrature_value - b.bound_value),
                Err(e) => return CheckResult::failed(NAME, e),
            }
        }
    }
    CheckResult::new(NAME, worst <= 1e-6, worst, 1e-6, "max(quadrature - bound) over a0, eps".into())
}

fn eps_check(ctx: &Context, l1: f64) -> CheckResult {
    const NAME: &str = "eps_monotonicity";
    if l1 >= 0.0 {
        return CheckResult::skipped(NAME, "lambda1 >= 0");
    }
    if l1.abs() < CRITICAL_BAND {
        return CheckResult::skipped(NAME, "near-critical lambda1");
    }
    match monotonicity_check_eps(&ctx.field, &ctx.grid(), &EPS_LADDER, &ctx.dispersion_opts()) {
        Ok(rows) => {
            let min_step = rows.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::INFINITY, f64::min);
            let detail = rows.iter().map(|(e, c)| format!("{e}:{}", fmt_sig(*c))).collect::<Vec<_>>().join(" ");
            CheckResult::new(NAME, true, min_step, 0.0, detail)
        }
        Err(e @ SpectralError::NotMonotone { .. }) => CheckResult::new(NAME, false, f64::NAN, 0.0, e.to_string()),
        Err(e) => CheckResult::failed(NAME, e),
    }
}

fn dichotomy_check(ctx: &Context, l1: f64, steady: Option<&CachedSteady>) -> CheckResult {
    const NAME: &str = "dichotomy";
    if l1.abs() < CRITICAL_BAND {
        return CheckResult::skipped(NAME, format!("|lambda1| = {} inside the near-critical band", fmt_sig(l1.abs())));
    }
    match steady {
        None => CheckResult::skipped(NAME, "no steady state computed"),
        Some(CachedSteady::Trivial) => CheckResult::new(NAME, l1 > 0.0, 0.0, 0.0, "steady state trivial".into()),
        Some(CachedSteady::Nontrivial { p, q }) => {
            let c_box = ctx.field.bounds().steady_box();
            let sup = p.iter().chain(q).copied().fold(0.0, f64::max);
            let min = p.iter().chain(q).copied().fold(f64::INFINITY, f64::min);
            let in_box = sup <= c_box * (1.0 + 1e-6);
            let ok = l1 < 0.0 && in_box && min > 0.0;
            let detail = format!("nontrivial; min = {}; box = {}; in box = {in_box}", fmt_sig(min), fmt_sig(c_box));
            CheckResult::new(NAME, ok, sup, c_box, detail)
        }
    }
}

/// Front speed and pulsation checks from one simulation, or the decay-rate
/// check when the scenario goes extinct.
fn dynamic_checks(ctx: &Context, l1: f64) -> Vec<CheckResult> {
    if l1.abs() < CRITICAL_BAND {
        return vec![
            CheckResult::skipped("front_speed", "near-critical lambda1"),
            CheckResult::skipped("pulsation", "near-critical lambda1"),
            CheckResult::skipped("extinction_rate", "near-critical lambda1"),
        ];
    }
    let (opts, nu) = match simulation_setup(ctx, l1, &SimulateArgs::default()) {
        Ok(v) => v,
        Err(e) => return vec![CheckResult::failed("simulation", e)],
    };
    let run = match simulate(&ctx.field, &opts) {
        Ok(r) => r,
        Err(e) => return vec![CheckResult::failed("simulation", e)],
    };
    if l1 > 0.0 {
        let decay = match extinction_rate_fit(&run, l1) {
            Ok(d) => {
                let rel = d.relative_error();
                let detail = format!("rate = {} lambda1 = {}", fmt_sig(d.rate), fmt_sig(l1));
                CheckResult::new("extinction_rate", rel <= DECAY_REL_TOL, rel, DECAY_REL_TOL, detail)
            }
            Err(e) => CheckResult::failed("extinction_rate", e),
        };
        return vec![
            CheckResult::skipped("front_speed", "lambda1 > 0"),
            CheckResult::skipped("pulsation", "lambda1 > 0"),
            decay,
        ];
    }
    let c_bar0 = match dispersion_curve(&ctx.field, &ctx.grid(), 0.0, &ctx.dispersion_opts()) {
        Ok(c) => c.c_bar,
        Err(e) => return vec![CheckResult::failed("front_speed", e)],
    };
    let fit = match front_speed(&run.trajectory(nu)) {
        Ok(f) => f,
        Err(e) => return vec![CheckResult::failed("front_speed", e)],
    };
    let speed_ok = fit.slope > 0.0 && fit.slope <= 1.02 * c_bar0 && fit.r2 >= 0.99;
    let speed = CheckResult::new(
        "front_speed",
        speed_ok,
        fit.slope,
        1.02 * c_bar0,
        format!("c_bar0 = {} r2 = {}", fmt_sig(c_bar0), fmt_sig(fit.r2)),
    );
    let pulse = match (pulsating_residual(&run, fit.slope, nu, 8), pulsating_residual(&run, 1.5 * fit.slope, nu, 8)) {
        (Ok(r), Ok(ctrl)) => {
            let ok = r.residual <= PULSATION_TOL && ctrl.residual >= CONTROL_FACTOR * r.residual;
            CheckResult::new("pulsation", ok, r.residual, PULSATION_TOL, format!("control residual = {}", fmt_sig(ctrl.residual)))
        }
        (Err(e), _) | (_, Err(e)) => CheckResult::failed("pulsation", e),
    };
    vec![speed, pulse, CheckResult::skipped("extinction_rate", "lambda1 < 0")]
}

/// Runs every check; the steady state comes from the cache when present.
pub fn run_checks(ctx: &Context) -> Result<Vec<CheckResult>, CliError> {
    let l1 = lambda1(ctx)?;
    // Near the threshold the steady problem is too flat to solve and the
    // dichotomy check is skipped anyway.
    let steady = if l1.abs() < CRITICAL_BAND { None } else { Some(cached_steady(ctx)?.0) };
    let (mut static_checks, dynamic) = rayon::join(
        || vec![dirichlet_check(ctx, l1), rayleigh_check(ctx, l1), eps_check(ctx, l1), dichotomy_check(ctx, l1, steady.as_ref())],
        || dynamic_checks(ctx, l1),
    );
    static_checks.extend(dynamic);
    Ok(static_checks)
}

pub fn cmd_verify(ctx: &Context) -> Result<Outcome, CliError> {
    let checks = run_checks(ctx)?;
    let path = ctx.path("verify.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["check", "status", "value", "threshold", "detail"])?;
    let mut out = Outcome::default();
    out.line(format!("{:<18} {:<8} {:>20} {:>20}  detail", "check", "status", "value", "threshold"));
    for c in &checks {
        w.write_record([c.name, c.status.tag(), &fmt_sig(c.value), &fmt_sig(c.threshold), &c.detail])?;
        out.line(format!(
            "{:<18} {:<8} {:>20} {:>20}  {}",
            c.name,
            c.status.tag(),
            fmt_sig(c.value),
            fmt_sig(c.threshold),
            c.detail
        ));
        out.failed |= c.status == Status::Fail;
    }
    w.flush()?;
    let mut rec = ctx.record("verify");
    for c in &checks {
        rec.param(c.name, c.status.tag());
    }
    rec.metric("failed", checks.iter().filter(|c| c.status == Status::Fail).count() as f64);
    rec.artifact(&path);
    rec.finish(&ctx.run_dir)?;
    Ok(out)
}
