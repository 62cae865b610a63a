//! Acceptance battery: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fmt::Display;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{cosine_field, dense_operator, dense_principal, opposed_field, random_field};
use pulsefront::config::ScenarioConfig;
use pulsefront::frontsim::{
    extinction_rate_fit, front_speed, kappa_uniform_gradient_check, lower_envelope_check, pulsating_residual, simulate,
    InitialData, ProbeBox, SimulationOptions, SimulationRun,
};
use pulsefront::spectral::{
    a0_star, dirichlet_convergence, dispersion_curve, monotonicity_check_eps, periodic_principal_eig,
    strip_rayleigh_bound, DispersionOptions, EigenOptions,
};
use pulsefront::steady::{continuation_branch, steady_time_march, MarchOptions, MarchOutcome, NewtonOptions};
use pulsefront::strip::{
    default_setup, solve_cooperative, solve_with_normalization, IterationOptions, NormalizationOptions, StripGrid,
    StripProblem, StripSetup,
};
use pulsefront::{CoefficientField, PeriodicGrid, TrigPoly};
use pulsefront_cli::verify::cmd_verify;
use pulsefront_cli::{Context, GlobalOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Verdict = Result<String, String>;

const TIGHT: EigenOptions = EigenOptions { tol: 1e-13, max_iter: 5000 };

fn err(e: impl Display) -> String {
    e.to_string()
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn constant(r_u: f64, r_v: f64, mu: f64, period: f64) -> CoefficientField {
    CoefficientField::new(
        period,
        TrigPoly::constant(r_u),
        TrigPoly::constant(r_v),
        TrigPoly::constant(1.0),
        TrigPoly::constant(1.0),
        TrigPoly::constant(mu),
        1,
    )
    .unwrap()
}

/// `field` with `shift` added to both growth rates.
fn shifted(field: &CoefficientField, shift: f64) -> CoefficientField {
    let add = |c: &TrigPoly| TrigPoly { mean: c.mean + shift, harmonics: c.harmonics.clone() };
    CoefficientField::new(
        field.period(),
        add(&field.r_u),
        add(&field.r_v),
        field.gamma_u.clone(),
        field.gamma_v.clone(),
        field.mu.clone(),
        64,
    )
    .unwrap()
}

fn grid(field: &CoefficientField, n: usize) -> PeriodicGrid {
    PeriodicGrid::new(n, field.period()).unwrap()
}

fn lambda1(field: &CoefficientField, n: usize) -> Result<f64, String> {
    Ok(periodic_principal_eig(field, &grid(field, n), 0.0, 0.0, &TIGHT).map_err(err)?.lambda)
}

/// Persistent test fields: the heterogeneous scenario, a cosine field and a constant one.
fn persistent_fields() -> Vec<(&'static str, CoefficientField)> {
    vec![("opposed", opposed_field()), ("cosine", cosine_field()), ("constant", constant(1.0, 1.0, 0.1, 1.0))]
}

fn setup(field: &CoefficientField, n_x: usize) -> Result<StripSetup, String> {
    default_setup(field, n_x, 0.5, &EigenOptions::default(), &DispersionOptions::default()).map_err(err)
}

fn front_run(field: &CoefficientField, nu0: f64, width: usize, npp: usize, t_max: f64) -> Result<SimulationRun, String> {
    let opts = SimulationOptions {
        width_periods: width,
        n_per_period: npp,
        t_max,
        initial: InitialData::Plateau { height: nu0, periods: 1.0 },
        ..SimulationOptions::default()
    };
    simulate(field, &opts).map_err(err)
}

fn c1_constant_eigenvalues() -> Verdict {
    let mut worst = 0.0f64;
    for (r, mu) in [(1.0, 0.1), (0.3, 0.7), (-0.5, 0.3), (2.0, 0.01)] {
        worst = worst.max((lambda1(&constant(r, r, mu, 1.0), 256)? + r).abs());
    }
    for (ru, rv, mu) in [(1.0, 0.0, 0.5), (0.3, -0.7, 0.1), (2.0, 1.5, 0.05), (-0.2, 0.4, 1.0)] {
        let expected = -((ru + rv) / 2.0 - mu + (((ru - rv) / 2.0f64).powi(2) + mu * mu).sqrt());
        worst = worst.max((lambda1(&constant(ru, rv, mu, 1.0), 256)? - expected).abs());
    }
    verdict(worst <= 1e-8, format!("max |error| = {worst:.2e} over 8 constant fields"))
}

fn c2_dense_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let f = random_field(&mut rng);
        let n = [16, 32, 48, 64][trial % 4];
        let ours = periodic_principal_eig(&f, &grid(&f, n), 0.0, 0.0, &TIGHT).map_err(err)?.lambda;
        worst = worst.max((ours - dense_principal(dense_operator(&f, n, 0.0, 0.0))).abs());
    }
    verdict(worst <= 1e-10, format!("max |inverse power - dense| = {worst:.2e} over 10 random fields"))
}

fn c3_dirichlet_sandwich() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, f) in persistent_fields().into_iter().chain([("extinct", constant(-0.5, -0.5, 0.3, 1.0))]) {
        let l1 = lambda1(&f, 256)?;
        let rows = dirichlet_convergence(&f, 256, l1, &[5.0, 10.0, 20.0, 40.0], &TIGHT).map_err(err)?;
        let slack = 1e-9 * (1.0 + l1.abs());
        let above = rows.iter().all(|r| r.lambda1_r >= l1 - slack);
        let monotone = rows.windows(2).all(|w| w[1].lambda1_r <= w[0].lambda1_r + slack);
        let base = rows[0].gap_times_r;
        let worst = rows.iter().map(|r| r.gap_times_r).fold(f64::NEG_INFINITY, f64::max);
        ok &= above && monotone && worst <= 2.0 * base + slack;
        notes.push(format!("{name}: max gap*R / gap*R(5) = {:.3}", worst / base));
    }
    verdict(ok, notes.join("; "))
}

fn c4_kpp_speed() -> Verdict {
    let f = constant(1.0, 1.0, 0.1, 1.0);
    let mut worst = 0.0f64;
    for eps in [0.0, 0.1, 0.2] {
        let c = dispersion_curve(&f, &grid(&f, 256), eps, &DispersionOptions::default()).map_err(err)?.c_bar;
        worst = worst.max((c - 2.0 * (1.0 + eps).sqrt()).abs());
    }
    let mut monotone = true;
    for (_, field) in persistent_fields() {
        let rows = monotonicity_check_eps(&field, &grid(&field, 128), &[0.0, 0.1, 0.2, 0.5, 1.0], &DispersionOptions::default())
            .map_err(err)?;
        monotone &= rows.windows(2).all(|w| w[1].1 > w[0].1);
    }
    verdict(worst <= 1e-6 && monotone, format!("max |c_bar - 2 sqrt(1 + eps)| = {worst:.2e}; eps-monotone on 3 fields: {monotone}"))
}

fn c5_rayleigh_bound() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    for (_, f) in persistent_fields() {
        let g = grid(&f, 128);
        let eig = periodic_principal_eig(&f, &g, 0.0, 0.0, &TIGHT).map_err(err)?;
        let star = a0_star(eig.lambda);
        for a0 in [star, 2.0 * star] {
            for eps in [0.0, 0.5, 1.0] {
                let b = strip_rayleigh_bound(&f, &g, &eig, a0, eps, 4000).map_err(err)?;
                let bound = eig.lambda + 2.5 * (1.0 + eps) / (a0 * a0);
                worst = worst.max(b.quadrature_value - bound);
            }
        }
    }
    verdict(worst <= 1e-6, format!("max(quadrature - bound) = {worst:.3e} over 3 fields x 2 a0 x 3 eps"))
}

fn c6_dichotomy() -> Verdict {
    let mut ok = true;
    let mut seen = Vec::new();
    for base in [cosine_field(), opposed_field()] {
        let l0 = lambda1(&base, 128)?;
        for target in [-0.4, -0.15, 5e-4, 0.15, 0.4] {
            let f = shifted(&base, l0 - target);
            let l1 = lambda1(&f, 128)?;
            if l1.abs() < 1e-3 {
                seen.push("skip");
                continue;
            }
            let g = grid(&f, 128);
            let start = vec![0.5 * f.bounds().steady_box(); g.len()];
            let opts = MarchOptions { allow_extinction: true, ..Default::default() };
            match steady_time_march(&f, &g, &start, &start, &opts).map_err(err)? {
                MarchOutcome::Converged(s) => {
                    ok &= l1 < 0.0 && s.is_positive() && s.within_box(f.bounds().steady_box(), 1e-6);
                    seen.push("nontrivial");
                }
                MarchOutcome::CollapsedToZero { .. } => {
                    ok &= l1 > 0.0;
                    seen.push("trivial");
                }
            }
        }
    }
    verdict(ok, format!("outcomes at lambda1 = -0.4 .. 0.4 (two fields): {}", seen.join(" ")))
}

fn c7_branch() -> Verdict {
    let base = opposed_field();
    let f = shifted(&base, lambda1(&base, 128)? + 0.3);
    let g = grid(&f, 128);
    let l1 = lambda1(&f, 128)?;
    let branch = continuation_branch(&f, &g, l1 + 1e-3, 1.0, 40, &EigenOptions::default(), &NewtonOptions::default())
        .map_err(err)?;
    let near: Vec<(f64, f64)> = branch.iter().take(6).map(|b| ((b.beta - l1).ln(), b.norm.ln())).collect();
    let n = near.len() as f64;
    let (mx, my) = near.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let slope = near.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / near.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    let at_zero = branch.iter().find(|b| b.beta == 0.0).ok_or("beta = 0 missing from the branch")?;
    let start = vec![0.5 * f.bounds().steady_box(); g.len()];
    let opts = MarchOptions { allow_extinction: true, ..Default::default() };
    let direct = match steady_time_march(&f, &g, &start, &start, &opts).map_err(err)? {
        MarchOutcome::Converged(s) => s,
        MarchOutcome::CollapsedToZero { t } => return Err(format!("direct solve collapsed at t = {t}")),
    };
    let dist = at_zero.steady.distance(&direct);
    verdict(
        slope > 0.0 && dist <= 1e-6,
        format!("log-log slope near lambda1 = {slope:.3}; |branch(0) - direct| = {dist:.2e}"),
    )
}

fn c8_strip() -> Verdict {
    let f = constant(1.0, 1.0, 0.1, 1.0);
    let s = setup(&f, 32)?;
    let eps = 0.5;
    let grid = StripGrid::new(s.a, 32, 1.0).map_err(err)?;
    let problem = StripProblem::new(&f, grid, &s.steady, eps, s.k).map_err(err)?;
    let c_upper = s.constants.c_bar + eps;
    let out = solve_with_normalization(&problem, s.nu, s.a0, c_upper, &NormalizationOptions::default()).map_err(err)?;
    let sol = &out.solution;
    let cert = sol.certificate;
    let (n_s, n_x) = (sol.grid.n_s(), sol.grid.n_x());
    let mut inside = true;
    for i in 1..n_s - 1 {
        for j in 0..n_x {
            let k = i * n_x + j;
            inside &= sol.u[k] > 0.0 && sol.u[k] < s.k * s.steady.p[j] && sol.v[k] > 0.0 && sol.v[k] < s.k * s.steady.q[j];
        }
    }
    let norm_err = (sol.window_norm(s.a0) - s.nu).abs();

    let pair_grid = StripGrid::new(s.a0 + 2.0, 32, 1.0).map_err(err)?;
    let pair = StripProblem::new(&f, pair_grid, &s.steady, eps, s.k).map_err(err)?;
    let opts = IterationOptions::default();
    let slow = solve_cooperative(&pair, 0.5, None, &opts).map_err(err)?;
    let fast = solve_cooperative(&pair, 1.5, Some(&slow), &opts).map_err(err)?;
    let excess = fast.max_excess_over(&slow);

    let ok = cert.iterates_nonincreasing
        && cert.s_monotone
        && inside
        && out.c_star > 0.0
        && out.c_star < c_upper
        && norm_err <= 1e-6
        && excess <= 1e-10;
    verdict(
        ok,
        format!(
            "c* = {:.6} in (0, {c_upper:.6}); |norm - nu| = {norm_err:.1e}; nonincreasing = {}; s-monotone = {}; 0 < w < K(p, q) = {inside}; c-pair excess = {excess:.1e}",
            out.c_star, cert.iterates_nonincreasing, cert.s_monotone
        ),
    )
}

fn decay_rate(field: &CoefficientField, width: usize, l1: f64) -> Result<f64, String> {
    let opts = SimulationOptions {
        width_periods: width,
        initial: InitialData::Uniform { height: 0.5 * field.bounds().steady_box() },
        guard_boundary: false,
        ..SimulationOptions::default()
    };
    let run = simulate(field, &opts).map_err(err)?;
    Ok(extinction_rate_fit(&run, l1).map_err(err)?.rate)
}

fn c9_extinction_rate() -> Verdict {
    let flat = decay_rate(&constant(-0.5, -0.5, 0.3, 1.0), 200, 0.5)?;
    let periodic = CoefficientField::new(
        2.0,
        TrigPoly::with_cosine(-0.4, 0.6, 1),
        TrigPoly::with_cosine(-0.8, -0.3, 1),
        TrigPoly::constant(1.0),
        TrigPoly::constant(1.0),
        TrigPoly::constant(0.2),
        64,
    )
    .unwrap();
    let l1 = lambda1(&periodic, 256)?;
    let het = decay_rate(&periodic, 100, l1)?;
    let (e1, e2) = ((flat - 0.5).abs() / 0.5, (het - l1).abs() / l1);
    verdict(
        e1 <= 0.05 && e2 <= 0.05,
        format!("constant: rate {flat:.5} vs 0.5; periodic: rate {het:.5} vs lambda1 {l1:.5}"),
    )
}

/// The heterogeneous front used by criteria 10 to 12, with its level `nu`.
struct Front {
    field: CoefficientField,
    setup: StripSetup,
    run: SimulationRun,
    nu: f64,
}

fn heterogeneous_fronts() -> Result<Vec<(&'static str, Front)>, String> {
    [("opposed", opposed_field(), 32, 80), ("cosine", cosine_field(), 32, 160)]
        .into_par_iter()
        .map(|(name, field, npp, width)| {
            let setup = setup(&field, 32)?;
            let run = front_run(&field, setup.constants.nu0, width, npp, 60.0)?;
            let nu = 0.5 * setup.constants.nu0;
            Ok((name, Front { field, setup, run, nu }))
        })
        .collect()
}

fn c10_front_speed(fronts: &[(&str, Front)]) -> Verdict {
    let started = Instant::now();
    let f = constant(1.0, 1.0, 0.1, 4.0);
    let s = setup(&f, 64)?;
    let run = front_run(&f, s.constants.nu0, 40, 40, 60.0)?;
    let homogeneous = front_speed(&run.trajectory(0.5 * s.constants.nu0)).map_err(err)?.slope;
    let seconds = started.elapsed().as_secs_f64();
    let mut ok = (homogeneous - 2.0).abs() <= 0.06 && seconds <= 120.0;
    let mut notes = vec![format!("homogeneous speed {homogeneous:.4} vs 2 ({seconds:.1} s)")];
    for (name, fr) in fronts {
        let fit = front_speed(&fr.run.trajectory(fr.nu)).map_err(err)?;
        let cb = dispersion_curve(&fr.field, &grid(&fr.field, 256), 0.0, &DispersionOptions::default()).map_err(err)?.c_bar;
        ok &= fit.slope > 0.0 && fit.slope <= 1.02 * cb && fit.r2 >= 0.99;
        notes.push(format!("{name}: speed {:.4} <= 1.02 x {cb:.4}, R^2 {:.5}", fit.slope, fit.r2));
    }
    verdict(ok, notes.join("; "))
}

fn c11_pulsation(fronts: &[(&str, Front)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, fr) in fronts {
        let speed = front_speed(&fr.run.trajectory(fr.nu)).map_err(err)?.slope;
        let res = pulsating_residual(&fr.run, speed, fr.nu, 8).map_err(err)?.residual;
        let control = pulsating_residual(&fr.run, 1.5 * speed, fr.nu, 8).map_err(err)?.residual;
        ok &= res <= 0.02 && control >= 5.0 * res;
        notes.push(format!("{name}: residual {res:.4}, control at 1.5c {control:.4}"));
    }
    verdict(ok, notes.join("; "))
}

fn c12_envelope(fronts: &[(&str, Front)]) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, fr) in fronts {
        let b = 1.05 * fr.setup.constants.a0_star;
        let rep = lower_envelope_check(&fr.run, &fr.field, 10.0, b, None, &EigenOptions::default()).map_err(err)?;
        ok &= !rep.skipped && rep.min_ratio >= 1.0 - 1e-3;
        notes.push(format!("{name}: alpha0 {:.3e}, crossed at t = {:.2}, min ratio after {:.6}", rep.alpha0, rep.crossing_time, rep.min_ratio));
    }
    verdict(ok, notes.join("; "))
}

fn c13_kappa() -> Verdict {
    let f = constant(1.0, 1.0, 0.1, 1.0);
    let s = setup(&f, 32)?;
    let base = SimulationOptions {
        width_periods: 80,
        n_per_period: 20,
        t_max: 30.0,
        initial: InitialData::Plateau { height: s.constants.nu0, periods: 1.0 },
        ..SimulationOptions::default()
    };
    let kappas = [1.0, 0.1, 0.01, 0.001];
    let rep = kappa_uniform_gradient_check(&f, &kappas, &base, ProbeBox::default(), 0.5 * s.constants.nu0).map_err(err)?;
    let rows: Vec<String> = rep.rows.iter().map(|r| format!("{}:{:.3e}", r.kappa, r.ratio)).collect();
    let rel = rep.max_relative();
    verdict(
        !rep.skipped && rel < 2.0,
        format!("max ratio / ratio(kappa = 1) = {rel:.3}; max/min spread {:.2}; ratios {}", rep.spread(), rows.join(" ")),
    )
}

fn c14_determinism() -> Verdict {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/heterogeneous.txt");
    let config = ScenarioConfig::from_file(&scenario).map_err(err)?;
    let dir = tempfile::tempdir().map_err(err)?;
    let mut outputs = Vec::new();
    for sub in ["first", "second"] {
        let global = GlobalOptions { out: Some(dir.path().join(sub)), ..GlobalOptions::default() };
        let ctx = Context::from_config(config.clone(), &global).map_err(err)?;
        let out = cmd_verify(&ctx).map_err(err)?;
        let csv = fs::read(ctx.path("verify.csv")).map_err(err)?;
        outputs.push((out, csv));
    }
    let same = outputs[0] == outputs[1];
    verdict(
        same && !outputs[0].0.failed,
        format!("stdout and verify.csv identical across runs: {same}; all checks pass: {}", !outputs[0].0.failed),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panic: {}", msg.unwrap_or_default()))
    })
}

fn main() -> ExitCode {
    let independent: Vec<(usize, &str, fn() -> Verdict)> = vec![
        (1, "constant-coefficient eigenvalues", c1_constant_eigenvalues),
        (2, "dense-oracle equivalence", c2_dense_oracle),
        (3, "Dirichlet sandwich and rate", c3_dirichlet_sandwich),
        (4, "KPP speed and eps-monotonicity", c4_kpp_speed),
        (5, "Rayleigh strip bound", c5_rayleigh_bound),
        (6, "steady-state dichotomy", c6_dichotomy),
        (7, "branch behaviour", c7_branch),
        (8, "strip monotone iteration", c8_strip),
        (9, "extinction rate", c9_extinction_rate),
        (13, "kappa-uniform interior gradient", c13_kappa),
        (14, "determinism", c14_determinism),
    ];
    let (mut results, fronts) = rayon::join(
        || independent.into_par_iter().map(|(n, name, f)| (n, name, guarded(f))).collect::<Vec<_>>(),
        || catch_unwind(heterogeneous_fronts).unwrap_or_else(|_| Err("panic while simulating".into())),
    );
    match fronts {
        Ok(fronts) => {
            results.push((10, "front formation and speed bound", guarded(|| c10_front_speed(&fronts))));
            results.push((11, "pulsating constraint", guarded(|| c11_pulsation(&fronts))));
            results.push((12, "forward lower envelope", guarded(|| c12_envelope(&fronts))));
        }
        Err(e) => {
            for (n, name) in [(10, "front formation and speed bound"), (11, "pulsating constraint"), (12, "forward lower envelope")] {
                results.push((n, name, Err(format!("front simulation failed: {e}"))));
            }
        }
    }
    results.sort_by_key(|r| r.0);
    let mut failures = 0;
    for (n, name, v) in &results {
        match v {
            Ok(d) => println!("criterion {n:>2}: PASS - {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {n:>2}: FAIL - {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
