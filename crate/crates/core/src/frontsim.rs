//! Time-domain simulation on `[0, W]`, `W = m L`, with homogeneous Dirichlet
//! data at both ends, and the front measurements built on it.
//!
//! With `kappa = 0` the system is integrated by Crank-Nicolson diffusion and
//! explicit reaction. With `kappa > 0` it integrates the damped-wave variant
//! `kappa u_tt + u_t - u_xx = f(u, v)` through the velocity `w = u_t`:
//!
//! ```text
//! ((kappa + dt) - dt^2 D2) w' = kappa w + dt (D2 u + f),   u' = u + dt w'
//! ```

use thiserror::Error;

use crate::fields::{CoefficientField, FieldSamples};
use crate::grid::IntervalGrid;
use crate::linalg::{LinalgError, TridiagLu};
use crate::spectral::{dirichlet_principal_eig, EigenOptions, SpectralError};
use crate::steady::CLIP_THRESHOLD;

/// Level used by the contamination guard at the right boundary.
pub const CONTAMINATION_LEVEL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrontError {
    #[error("blow-up at t = {t}: sup = {sup:e} exceeds {limit:e}")]
    BlowUp { t: f64, sup: f64, limit: f64 },
    #[error("u + v = {value:e} next to the right boundary at t = {t}")]
    BoundaryContamination { t: f64, value: f64 },
    #[error("no front: the level is never reached")]
    NoFront,
    #[error("need {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("linear fit rejected: R^2 = {r2}")]
    PoorFit { r2: f64 },
    #[error("probe time {t} not covered by stored states")]
    ProbeOutOfRange { t: f64 },
    #[error("threshold never crossed")]
    NeverCrossed,
    #[error("decay window too short: {got} samples in range, need {needed}")]
    WindowTooShort { got: usize, needed: usize },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("simulation not converged: {0}")]
    SimulationUnconverged(String),
    #[error("invalid option: {0}")]
    BadOption(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    /// `u = v = height` on `(0, periods L]`, zero elsewhere.
    Plateau { height: f64, periods: f64 },
    /// `u = v = height` at every interior node.
    Uniform { height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub width_periods: usize,
    pub n_per_period: usize,
    pub t_max: f64,
    /// `None` picks `min(h^2 / 2, sqrt(kappa) h / 2)`.
    pub dt: Option<f64>,
    pub emit_every: f64,
    pub kappa: f64,
    pub initial: InitialData,
    pub guard_boundary: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            width_periods: 40,
            n_per_period: 20,
            t_max: 60.0,
            dt: None,
            emit_every: 0.05,
            kappa: 0.0,
            initial: InitialData::Plateau { height: 0.1, periods: 1.0 },
            guard_boundary: true,
        }
    }
}

/// State at one emitted time, on all nodes `x_i = i h`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    pub step: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Velocities `u_t`, `v_t`; empty when `kappa = 0`.
    pub ut: Vec<f64>,
    pub vt: Vec<f64>,
}

impl SimulationState {
    pub fn sup_sum(&self) -> f64 {
        self.u.iter().zip(&self.v).map(|(a, b)| a + b).fold(0.0, f64::max)
    }

    pub fn mass(&self, h: f64) -> f64 {
        h * self.u.iter().chain(&self.v).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub period: f64,
    pub n_per_period: usize,
    pub h: f64,
    pub dt: f64,
    pub kappa: f64,
    pub states: Vec<SimulationState>,
    pub clip_events: usize,
    pub initial_sup: f64,
    /// `max(2 r_inf / gamma0, initial sup)`.
    pub box_bound: f64,
    /// Largest `sup (u + v)` for `t >= 5 / min(1, gamma0)`.
    pub late_sup: f64,
}

impl SimulationRun {
    pub fn n_nodes(&self) -> usize {
        self.states.first().map_or(0, |s| s.u.len())
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn width(&self) -> f64 {
        (self.n_nodes() - 1) as f64 * self.h
    }

    /// `(t, X_nu(t))` for every state where the level is reached.
    pub fn trajectory(&self, nu: f64) -> Vec<(f64, f64)> {
        self.states
            .iter()
            .filter_map(|s| front_position(&s.u, &s.v, self.h, nu).map(|x| (s.t, x)))
            .collect()
    }

    /// `(t, sup (u + v))` for every stored state.
    pub fn sup_series(&self) -> Vec<(f64, f64)> {
        self.states.iter().map(|s| (s.t, s.sup_sum())).collect()
    }

    pub fn box_absorbing(&self) -> bool {
        self.late_sup <= self.box_bound * (1.0 + 1e-3)
    }

    /// Linear interpolation in time between stored states.
    pub fn interpolate(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>), FrontError> {
        let first = self.states.first().ok_or(FrontError::ProbeOutOfRange { t })?;
        let last = self.states.last().unwrap();
        let slack = 1e-9 * self.dt;
        if t < first.t - slack || t > last.t + slack {
            return Err(FrontError::ProbeOutOfRange { t });
        }
        let k = self.states.partition_point(|s| s.t <= t).clamp(1, self.states.len() - 1);
        let (a, b) = (&self.states[k - 1], &self.states[k]);
        let theta = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p + theta * (q - p)).collect::<Vec<_>>();
        Ok((mix(&a.u, &b.u), mix(&a.v, &b.v)))
    }
}

/// Rightmost `x` with `u + v >= nu`, interpolated linearly between nodes.
pub fn front_position(u: &[f64], v: &[f64], h: f64, nu: f64) -> Option<f64> {
    let i = (0..u.len()).rev().find(|&i| u[i] + v[i] >= nu)?;
    if i + 1 == u.len() {
        return Some(i as f64 * h);
    }
    let (a, b) = (u[i] + v[i], u[i + 1] + v[i + 1]);
    Some((i as f64 + (a - nu) / (a - b)) * h)
}

struct Stepper {
    samples: FieldSamples,
    h: f64,
    dt: f64,
    kappa: f64,
    lu: TridiagLu,
}

impl Stepper {
    fn new(samples: FieldSamples, h: f64, dt: f64, kappa: f64) -> Result<Self, FrontError> {
        let n = samples.len();
        let r = dt / (h * h);
        let (diag, off) = if kappa == 0.0 {
            (1.0 + r, -0.5 * r)
        } else {
            (kappa + dt + 2.0 * dt * r, -dt * r)
        };
        let lu = TridiagLu::factor(&vec![off; n], &vec![diag; n], &vec![off; n])?;
        Ok(Self { samples, h, dt, kappa, lu })
    }

    /// Advances interior values `u[1..N]`; the end nodes stay zero.
    fn step(&self, u: &mut [f64], v: &mut [f64], ut: &mut [f64], vt: &mut [f64]) -> usize {
        let n = u.len() - 2;
        let h2 = self.h * self.h;
        let mut bu = vec![0.0; n];
        let mut bv = vec![0.0; n];
        for k in 0..n {
            let i = k + 1;
            let f = self.samples.reaction(k, u[i], v[i]);
            let du = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
            let dv = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / h2;
            if self.kappa == 0.0 {
                bu[k] = u[i] + self.dt * (0.5 * du + f[0]);
                bv[k] = v[i] + self.dt * (0.5 * dv + f[1]);
            } else {
                bu[k] = self.kappa * ut[i] + self.dt * (du + f[0]);
                bv[k] = self.kappa * vt[i] + self.dt * (dv + f[1]);
            }
        }
        self.lu.solve(&mut bu);
        self.lu.solve(&mut bv);
        let mut clips = 0;
        for k in 0..n {
            let i = k + 1;
            if self.kappa == 0.0 {
                u[i] = bu[k];
                v[i] = bv[k];
            } else {
                ut[i] = bu[k];
                vt[i] = bv[k];
                u[i] += self.dt * bu[k];
                v[i] += self.dt * bv[k];
            }
            for w in [&mut u[i], &mut v[i]] {
                if *w < 0.0 {
                    if *w < CLIP_THRESHOLD {
                        clips += 1;
                    }
                    *w = 0.0;
                }
            }
        }
        clips
    }
}

pub fn default_dt(h: f64, kappa: f64) -> f64 {
    let parabolic = 0.5 * h * h;
    if kappa > 0.0 {
        parabolic.min(0.5 * kappa.sqrt() * h)
    } else {
        parabolic
    }
}

/// Runs the simulation and keeps every emitted state.
pub fn simulate(field: &CoefficientField, opts: &SimulationOptions) -> Result<SimulationRun, FrontError> {
    simulate_with(field, opts, |_| {})
}

/// As [`simulate`], calling `observe` on each emitted state as it is produced.
pub fn simulate_with(
    field: &CoefficientField,
    opts: &SimulationOptions,
    mut observe: impl FnMut(&SimulationState),
) -> Result<SimulationRun, FrontError> {
    if opts.n_per_period < 2 || opts.width_periods < 2 {
        return Err(FrontError::BadOption("need n_per_period >= 2 and width_periods >= 2".into()));
    }
    if !(opts.t_max > 0.0 && opts.emit_every > 0.0 && opts.kappa >= 0.0) {
        return Err(FrontError::BadOption("t_max, emit_every must be positive and kappa nonnegative".into()));
    }
    let period = field.period();
    let h = period / opts.n_per_period as f64;
    let cells = opts.width_periods * opts.n_per_period;
    let requested = opts.dt.unwrap_or_else(|| default_dt(h, opts.kappa));
    if opts.kappa > 0.0 && requested > 0.5 * opts.kappa.sqrt() * h * (1.0 + 1e-12) {
        return Err(FrontError::BadOption(format!("dt = {requested} exceeds sqrt(kappa) h / 2")));
    }
    let n_steps = (opts.t_max / requested).ceil() as usize;
    let dt = opts.t_max / n_steps as f64;
    let stride = ((opts.emit_every / dt).round() as usize).max(1);

    let interior = IntervalGrid::new(0.0, cells as f64 * h, cells - 1).map_err(SpectralError::from)?;
    let samples = field.sample_at(&interior.interior_nodes());
    let stepper = Stepper::new(samples, h, dt, opts.kappa)?;

    let mut u = vec![0.0; cells + 1];
    for (i, w) in u.iter_mut().enumerate().take(cells).skip(1) {
        *w = match opts.initial {
            InitialData::Plateau { height, periods } if i as f64 * h <= periods * period + 1e-12 => height,
            InitialData::Plateau { .. } => 0.0,
            InitialData::Uniform { height } => height,
        };
    }
    let mut v = u.clone();
    let (mut ut, mut vt) = if opts.kappa > 0.0 { (vec![0.0; cells + 1], vec![0.0; cells + 1]) } else { (Vec::new(), Vec::new()) };

    let b = field.bounds();
    let initial_sup = u.iter().zip(&v).map(|(a, c)| a + c).fold(0.0, f64::max);
    let box_bound = (2.0 * b.r_inf / b.gamma0).max(initial_sup);
    let blow_limit = 10.0 * b.steady_box().max(initial_sup);
    let transient = 5.0 / b.gamma0.min(1.0);

    let snapshot = |t: f64, step: usize, u: &[f64], v: &[f64], ut: &[f64], vt: &[f64]| SimulationState {
        t,
        step,
        u: u.to_vec(),
        v: v.to_vec(),
        ut: ut.to_vec(),
        vt: vt.to_vec(),
    };
    let first = snapshot(0.0, 0, &u, &v, &ut, &vt);
    observe(&first);
    let mut states = vec![first];
    let mut clip_events = 0;
    let mut late_sup = 0.0f64;
    for step in 1..=n_steps {
        clip_events += stepper.step(&mut u, &mut v, &mut ut, &mut vt);
        if step % stride != 0 && step != n_steps {
            continue;
        }
        let t = step as f64 * dt;
        let state = snapshot(t, step, &u, &v, &ut, &vt);
        let sup = state.sup_sum();
        if !(sup <= blow_limit) {
            return Err(FrontError::BlowUp { t, sup, limit: blow_limit });
        }
        if t >= transient {
            late_sup = late_sup.max(sup);
        }
        let edge = u[cells - 1] + v[cells - 1];
        if opts.guard_boundary && edge > CONTAMINATION_LEVEL {
            return Err(FrontError::BoundaryContamination { t, value: edge });
        }
        observe(&state);
        states.push(state);
    }
    Ok(SimulationRun {
        period,
        n_per_period: opts.n_per_period,
        h,
        dt,
        kappa: opts.kappa,
        states,
        clip_events,
        initial_sup,
        box_bound,
        late_sup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    pub n: usize,
}

fn least_squares(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let (mt, mx) = points.iter().fold((0.0, 0.0), |(a, b), &(t, x)| (a + t / n, b + x / n));
    let (mut stt, mut stx, mut sxx) = (0.0, 0.0, 0.0);
    for &(t, x) in points {
        stt += (t - mt) * (t - mt);
        stx += (t - mt) * (x - mx);
        sxx += (x - mx) * (x - mx);
    }
    let slope = stx / stt;
    let ssr = (sxx - slope * stx).max(0.0);
    let r2 = if sxx > 0.0 { 1.0 - ssr / sxx } else { 1.0 };
    let stderr = if points.len() > 2 { (ssr / (n - 2.0) / stt).sqrt() } else { f64::INFINITY };
    LinearFit { slope, intercept: mx - slope * mt, stderr, r2, n: points.len() }
}

/// Fraction of the time span dropped before fitting a front speed.
pub const TRANSIENT_FRACTION: f64 = 0.3;
pub const MIN_SPEED_SAMPLES: usize = 50;

/// Least-squares slope of `X(t)` after discarding the first 30% of the time span.
pub fn front_speed(trajectory: &[(f64, f64)]) -> Result<LinearFit, FrontError> {
    let (Some(first), Some(last)) = (trajectory.first(), trajectory.last()) else {
        return Err(FrontError::NoFront);
    };
    let cut = first.0 + TRANSIENT_FRACTION * (last.0 - first.0);
    let kept: Vec<_> = trajectory.iter().copied().filter(|p| p.0 >= cut).collect();
    if kept.len() < MIN_SPEED_SAMPLES {
        return Err(FrontError::TooFewSamples { needed: MIN_SPEED_SAMPLES, got: kept.len() });
    }
    let fit = least_squares(&kept);
    if !(fit.r2 >= 0.99) {
        return Err(FrontError::PoorFit { r2: fit.r2 });
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulsationReport {
    pub speed: f64,
    /// Largest relative residual over all probes and both components.
    pub residual: f64,
    pub probe_times: Vec<f64>,
    pub per_probe: Vec<f64>,
}

/// `max_t sup_x |w(t + L/c, x) - w(t, x - L)| / sup w` for `w = u, v` at
/// `n_probes` times spread over the second half of the run.
///
/// Only `x >= max(L, X_nu(t) / 2)` is compared, which keeps the stationary
/// layer at the left Dirichlet end out of the measurement.
pub fn pulsating_residual(run: &SimulationRun, speed: f64, nu: f64, n_probes: usize) -> Result<PulsationReport, FrontError> {
    if !(speed > 0.0) || n_probes == 0 {
        return Err(FrontError::BadOption(format!("speed = {speed}, probes = {n_probes}")));
    }
    let lag = run.period / speed;
    let t_end = run.states.last().map_or(0.0, |s| s.t);
    let (t0, t1) = (0.5 * t_end, t_end - lag);
    if t1 <= t0 {
        return Err(FrontError::ProbeOutOfRange { t: t0 + lag });
    }
    let shift = run.n_per_period;
    let mut per_probe = Vec::with_capacity(n_probes);
    let mut probe_times = Vec::with_capacity(n_probes);
    for k in 0..n_probes {
        let t = if n_probes == 1 { t0 } else { t0 + (t1 - t0) * k as f64 / (n_probes - 1) as f64 };
        let (u0, v0) = run.interpolate(t)?;
        let (u1, v1) = run.interpolate(t + lag)?;
        let front = front_position(&u0, &v0, run.h, nu).ok_or(FrontError::NoFront)?;
        let start = shift.max((0.5 * front / run.h).ceil() as usize);
        let mut worst = 0.0f64;
        for (a, b) in [(&u0, &u1), (&v0, &v1)] {
            let sup = b[start..].iter().copied().fold(0.0, f64::max);
            if sup <= 0.0 {
                continue;
            }
            let diff = (start..a.len()).map(|i| (b[i] - a[i - shift]).abs()).fold(0.0, f64::max);
            worst = worst.max(diff / sup);
        }
        probe_times.push(t);
        per_probe.push(worst);
    }
    let residual = per_probe.iter().copied().fold(0.0, f64::max);
    Ok(PulsationReport { speed, residual, probe_times, per_probe })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub b: f64,
    pub window_left: f64,
    pub lambda1_b: f64,
    pub c_b: f64,
    pub alpha0: f64,
    pub alpha: f64,
    /// Set when `alpha > alpha0`; no ratio is computed then.
    pub skipped: bool,
    pub crossing_time: f64,
    /// Smallest `min(u / (alpha phi), v / (alpha psi))` after the crossing.
    pub min_ratio: f64,
}

/// `alpha0 = min(1, -lambda1_b / (2 (1 + 2 C_b) gamma_inf), mu0 / (2 gamma_inf))`.
pub fn envelope_alpha0(lambda1_b: f64, c_b: f64, gamma_inf: f64, mu0: f64) -> f64 {
    1f64.min(-lambda1_b / (2.0 * (1.0 + 2.0 * c_b) * gamma_inf)).min(mu0 / (2.0 * gamma_inf))
}

/// Checks that once `(u, v) >= alpha Phi^b` on the window `(l, l + 2b)`, it
/// stays there. `alpha = None` uses `alpha0`.
pub fn lower_envelope_check(
    run: &SimulationRun,
    field: &CoefficientField,
    window_left: f64,
    b: f64,
    alpha: Option<f64>,
    eig: &EigenOptions,
) -> Result<EnvelopeReport, FrontError> {
    let i0 = (window_left / run.h).round() as usize;
    let cells = (2.0 * b / run.h).round() as usize;
    if cells < 4 || i0 + cells >= run.n_nodes() {
        return Err(FrontError::BadOption(format!("window ({window_left}, {}) outside the domain", window_left + 2.0 * b)));
    }
    let (l, r) = (i0 as f64 * run.h, (i0 + cells) as f64 * run.h);
    let grid = IntervalGrid::new(l, r, cells - 1).map_err(SpectralError::from)?;
    let pair = dirichlet_principal_eig(field, &grid, eig)?;
    if pair.lambda >= 0.0 {
        return Err(FrontError::NotApplicable(format!("lambda1_b = {} is not negative", pair.lambda)));
    }
    let scale = pair.phi.iter().chain(&pair.psi).copied().fold(0.0, f64::max);
    let (phi, psi): (Vec<f64>, Vec<f64>) = (pair.phi.iter().map(|p| p / scale).collect(), pair.psi.iter().map(|p| p / scale).collect());
    let c_b = pair.ratio_bound();
    let bounds = field.bounds();
    let alpha0 = envelope_alpha0(pair.lambda, c_b, bounds.gamma_inf, bounds.mu0);
    let alpha = alpha.unwrap_or(alpha0);
    let mut report = EnvelopeReport {
        b: 0.5 * (r - l),
        window_left: l,
        lambda1_b: pair.lambda,
        c_b,
        alpha0,
        alpha,
        skipped: alpha > alpha0,
        crossing_time: f64::NAN,
        min_ratio: f64::NAN,
    };
    if report.skipped {
        return Ok(report);
    }
    let ratio = |s: &SimulationState| {
        (0..phi.len())
            .map(|k| {
                let i = i0 + 1 + k;
                (s.u[i] / (alpha * phi[k])).min(s.v[i] / (alpha * psi[k]))
            })
            .fold(f64::INFINITY, f64::min)
    };
    let start = run.states.iter().position(|s| ratio(s) >= 1.0).ok_or(FrontError::NeverCrossed)?;
    report.crossing_time = run.states[start].t;
    report.min_ratio = run.states[start..].iter().map(ratio).fold(f64::INFINITY, f64::min);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// `-d/dt ln sup (u + v)`.
    pub rate: f64,
    pub stderr: f64,
    pub n: usize,
    pub lambda1: f64,
}

impl DecayFit {
    pub fn relative_error(&self) -> f64 {
        (self.rate - self.lambda1).abs() / self.lambda1.abs()
    }
}

pub const DECAY_WINDOW: (f64, f64) = (1e-10, 1e-2);
pub const MIN_DECAY_SAMPLES: usize = 30;

/// Slope of `ln sup (u + v)` over states with sup in `[1e-10, 1e-2]`.
pub fn extinction_rate_fit(run: &SimulationRun, lambda1: f64) -> Result<DecayFit, FrontError> {
    if !(lambda1 > 0.0) {
        return Err(FrontError::NotApplicable(format!("lambda1 = {lambda1} <= 0: the population persists")));
    }
    let points: Vec<(f64, f64)> = run
        .sup_series()
        .into_iter()
        .filter(|&(_, s)| s >= DECAY_WINDOW.0 && s <= DECAY_WINDOW.1)
        .map(|(t, s)| (t, s.ln()))
        .collect();
    if points.len() < MIN_DECAY_SAMPLES {
        return Err(FrontError::WindowTooShort { got: points.len(), needed: MIN_DECAY_SAMPLES });
    }
    let fit = least_squares(&points);
    Ok(DecayFit { rate: -fit.slope, stderr: fit.stderr, n: fit.n, lambda1 })
}

/// Space-time box following the front: `|x - X(t)| <= half_x`, `t` in the
/// last `2 half_t` of the run. Probes are the points at distance `>= d` from
/// its boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeBox {
    pub half_x: f64,
    pub half_t: f64,
    pub d: f64,
}

impl Default for ProbeBox {
    fn default() -> Self {
        Self { half_x: 4.0, half_t: 4.0, d: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaRow {
    pub kappa: f64,
    /// Sup of `|u_x|^2 + |v_x|^2 + kappa (|u_t|^2 + |v_t|^2)` over the probes.
    pub gradient: f64,
    /// `gradient / (1 + 1/d^2)`.
    pub ratio: f64,
    pub clip_events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    pub rows: Vec<KappaRow>,
    /// The probe distance was below one cell, so no bound was evaluated.
    pub skipped: bool,
}

impl KappaReport {
    /// Largest ratio relative to the first row (the reference `kappa`).
    pub fn max_relative(&self) -> f64 {
        let base = self.rows.first().map_or(f64::NAN, |r| r.ratio);
        self.rows.iter().map(|r| r.ratio / base).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max ratio / min ratio` over the rows with `kappa > 0`.
    pub fn spread(&self) -> f64 {
        let positive = self.rows.iter().filter(|r| r.kappa > 0.0).map(|r| r.ratio);
        let (lo, hi) = positive.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        hi / lo
    }
}

/// Runs one simulation per `kappa` and evaluates the interior gradient
/// functional near the front at late times.
pub fn kappa_uniform_gradient_check(
    field: &CoefficientField,
    kappas: &[f64],
    base: &SimulationOptions,
    probe: ProbeBox,
    nu: f64,
) -> Result<KappaReport, FrontError> {
    let h = field.period() / base.n_per_period as f64;
    if probe.d < h {
        let rows = kappas.iter().map(|&kappa| KappaRow { kappa, gradient: f64::NAN, ratio: f64::NAN, clip_events: 0 }).collect();
        return Ok(KappaReport { rows, skipped: true });
    }
    let mut rows = Vec::with_capacity(kappas.len());
    for &kappa in kappas {
        let opts = SimulationOptions { kappa, dt: None, ..*base };
        let run = simulate(field, &opts)?;
        let t_end = run.states.last().unwrap().t;
        let (t_lo, t_hi) = (t_end - 2.0 * probe.half_t + probe.d, t_end - probe.d);
        let mut gradient = 0.0f64;
        let mut probed = 0;
        for s in run.states.iter().filter(|s| s.t >= t_lo && s.t <= t_hi) {
            let front = front_position(&s.u, &s.v, run.h, nu)
                .ok_or_else(|| FrontError::SimulationUnconverged(format!("no front at t = {} for kappa = {kappa}", s.t)))?;
            let reach = probe.half_x - probe.d;
            let lo = ((front - reach) / run.h).ceil().max(1.0) as usize;
            let hi = (((front + reach) / run.h).floor() as usize).min(s.u.len() - 2);
            for i in lo..=hi {
                let ux = (s.u[i + 1] - s.u[i - 1]) / (2.0 * run.h);
                let vx = (s.v[i + 1] - s.v[i - 1]) / (2.0 * run.h);
                let mut q = ux * ux + vx * vx;
                if kappa > 0.0 {
                    q += kappa * (s.ut[i] * s.ut[i] + s.vt[i] * s.vt[i]);
                }
                gradient = gradient.max(q);
            }
            probed += 1;
        }
        if probed == 0 {
            return Err(FrontError::SimulationUnconverged(format!("no stored state inside the probe box for kappa = {kappa}")));
        }
        let ratio = gradient / (1.0 + 1.0 / (probe.d * probe.d));
        rows.push(KappaRow { kappa, gradient, ratio, clip_events: run.clip_events });
    }
    Ok(KappaReport { rows, skipped: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_speed() {
        let traj: Vec<_> = (0..=600)
            .map(|k| {
                let t = k as f64 * 0.1;
                (t, 2.0 * t + 0.1 * (2.0 * std::f64::consts::PI * t).sin())
            })
            .collect();
        let fit = front_speed(&traj).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.02, "{fit:?}");
        assert!(fit.r2 > 0.999);
        assert_eq!(front_speed(&[]), Err(FrontError::NoFront));
    }

    #[test]
    fn front_position_interpolates() {
        let u = [1.0, 0.6, 0.2, 0.0];
        let v = [0.0; 4];
        assert!((front_position(&u, &v, 0.5, 0.4).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(front_position(&u, &v, 0.5, 2.0), None);
    }

    #[test]
    fn extinction_gate() {
        let f = CoefficientField::constant(-0.5, -0.5, 1.0, 0.1, 1.0).unwrap();
        let opts = SimulationOptions { t_max: 1.0, ..Default::default() };
        let run = simulate(&f, &opts).unwrap();
        assert!(matches!(extinction_rate_fit(&run, -0.2), Err(FrontError::NotApplicable(_))));
    }

    #[test]
    fn kappa_guard_skips_degenerate_box() {
        let f = CoefficientField::constant(1.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let probe = ProbeBox { d: 0.01, ..Default::default() };
        let report = kappa_uniform_gradient_check(&f, &[1.0, 0.1], &SimulationOptions::default(), probe, 0.1).unwrap();
        assert!(report.skipped);
    }
}
