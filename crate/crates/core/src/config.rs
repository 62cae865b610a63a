//! Scenario files.
//!
//! A flat `key = value` format with `[section]` headers and `#` comments:
//!
//! ```text
//! period_L = 1.0
//!
//! [r_u]
//! mean = 0.5
//! harmonic = (1.0, 1, 0.0)   # amplitude, wavenumber, phase
//!
//! [r_v]
//! mean = 0.5
//! harmonic = (1.0, 1, 0.0)
//!
//! [gamma_u]
//! mean = 1.0
//! [gamma_v]
//! mean = 1.0
//! [mu]
//! mean = 0.2
//!
//! [grid]
//! n_cells = 256
//! ```
//!
//! `[grid]`, `[solver]`, `[simulation]` and `[output]` are optional; every
//! key in them has a default. Unknown sections and keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::fields::{CoefficientField, FieldError, Harmonic, TrigPoly};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

pub const COEFFICIENT_SECTIONS: [&str; 5] = ["r_u", "r_v", "gamma_u", "gamma_v", "mu"];

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Cells per period for the periodic eigenproblems and steady states.
    pub n_cells: usize,
    /// Cells per period in the x direction of the strip problem.
    pub strip_n_x: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_cells: 256, strip_n_x: 32 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub newton_tol: f64,
    pub march_tol: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub dispersion_samples: usize,
    /// Regularization used for strip runs.
    pub epsilon: f64,
    pub seed: u64,
    pub n_starts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 500,
            newton_tol: 1e-12,
            march_tol: 1e-10,
            lambda_min: 0.02,
            lambda_max: 10.0,
            dispersion_samples: 48,
            epsilon: 0.5,
            seed: 20_160_601,
            n_starts: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub width_periods: usize,
    pub n_per_period: usize,
    pub t_max: f64,
    /// Time step; `0` picks the stable default.
    pub dt: f64,
    /// Time between stored snapshots.
    pub emit_every: f64,
    pub kappa: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            width_periods: 40,
            n_per_period: 20,
            t_max: 60.0,
            dt: 0.0,
            emit_every: 0.05,
            kappa: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs".to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub period: f64,
    pub r_u: TrigPoly,
    pub r_v: TrigPoly,
    pub gamma_u: TrigPoly,
    pub gamma_v: TrigPoly,
    pub mu: TrigPoly,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn new(period: f64, r_u: TrigPoly, r_v: TrigPoly, gamma_u: TrigPoly, gamma_v: TrigPoly, mu: TrigPoly) -> Self {
        Self {
            period,
            r_u,
            r_v,
            gamma_u,
            gamma_v,
            mu,
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            simulation: SimulationConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn coefficient(&self, name: &str) -> Option<&TrigPoly> {
        match name {
            "r_u" => Some(&self.r_u),
            "r_v" => Some(&self.r_v),
            "gamma_u" => Some(&self.gamma_u),
            "gamma_v" => Some(&self.gamma_v),
            "mu" => Some(&self.mu),
            _ => None,
        }
    }

    pub fn coefficient_mut(&mut self, name: &str) -> Option<&mut TrigPoly> {
        match name {
            "r_u" => Some(&mut self.r_u),
            "r_v" => Some(&mut self.r_v),
            "gamma_u" => Some(&mut self.gamma_u),
            "gamma_v" => Some(&mut self.gamma_v),
            "mu" => Some(&mut self.mu),
            _ => None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        text.parse()
    }

    /// Canonical text form. Floats use the shortest round-trip representation,
    /// so parsing the output reproduces the config bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "period_L = {:?}", self.period);
        for name in COEFFICIENT_SECTIONS {
            let c = self.coefficient(name).expect("known section");
            let _ = writeln!(out, "\n[{name}]\nmean = {:?}", c.mean);
            for h in &c.harmonics {
                let _ = writeln!(out, "harmonic = ({:?}, {}, {:?})", h.amplitude, h.wavenumber, h.phase);
            }
        }
        let g = &self.grid;
        let _ = writeln!(out, "\n[grid]\nn_cells = {}\nstrip_n_x = {}", g.n_cells, g.strip_n_x);
        let s = &self.solver;
        let _ = writeln!(
            out,
            "\n[solver]\ntol = {:?}\nmax_iter = {}\nnewton_tol = {:?}\nmarch_tol = {:?}\nlambda_min = {:?}\nlambda_max = {:?}\ndispersion_samples = {}\nepsilon = {:?}\nseed = {}\nn_starts = {}",
            s.tol, s.max_iter, s.newton_tol, s.march_tol, s.lambda_min, s.lambda_max, s.dispersion_samples, s.epsilon, s.seed, s.n_starts
        );
        let m = &self.simulation;
        let _ = writeln!(
            out,
            "\n[simulation]\nwidth_periods = {}\nn_per_period = {}\nt_max = {:?}\ndt = {:?}\nemit_every = {:?}\nkappa = {:?}",
            m.width_periods, m.n_per_period, m.t_max, m.dt, m.emit_every, m.kappa
        );
        let _ = writeln!(out, "\n[output]\ndir = \"{}\"", self.output.dir);
        out
    }
}

impl std::str::FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut period = None;
        let mut coeffs: [Option<TrigPoly>; 5] = Default::default();
        let mut grid = GridConfig::default();
        let mut solver = SolverConfig::default();
        let mut simulation = SimulationConfig::default();
        let mut output = OutputConfig::default();
        let mut section: Option<String> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| ConfigError::Parse { line, message };
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(format!("unterminated section header `{content}`")))?
                    .trim();
                let known = COEFFICIENT_SECTIONS.contains(&name)
                    || matches!(name, "grid" | "solver" | "simulation" | "output");
                if !known {
                    return Err(err(format!("unknown section `[{name}]`")));
                }
                if let Some(k) = COEFFICIENT_SECTIONS.iter().position(|s| *s == name) {
                    if coeffs[k].is_some() {
                        return Err(err(format!("duplicate section `[{name}]`")));
                    }
                    coeffs[k] = Some(TrigPoly { mean: f64::NAN, harmonics: Vec::new() });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("empty value for `{key}`")));
            }
            match section.as_deref() {
                None => match key {
                    "period_L" => period = Some(parse_f64(value).map_err(err)?),
                    _ => return Err(err(format!("unknown top-level key `{key}`"))),
                },
                Some(name) if COEFFICIENT_SECTIONS.contains(&name) => {
                    let k = COEFFICIENT_SECTIONS.iter().position(|s| *s == name).unwrap();
                    let c = coeffs[k].as_mut().unwrap();
                    match key {
                        "mean" => c.mean = parse_f64(value).map_err(err)?,
                        "harmonic" => c.harmonics.push(parse_harmonic(value).map_err(err)?),
                        _ => return Err(err(format!("unknown key `{key}` in [{name}]"))),
                    }
                }
                Some("grid") => match key {
                    "n_cells" => grid.n_cells = parse_usize(value).map_err(err)?,
                    "strip_n_x" => grid.strip_n_x = parse_usize(value).map_err(err)?,
                    _ => return Err(err(format!("unknown key `{key}` in [grid]"))),
                },
                Some("solver") => match key {
                    "tol" => solver.tol = parse_f64(value).map_err(err)?,
                    "max_iter" => solver.max_iter = parse_usize(value).map_err(err)?,
                    "newton_tol" => solver.newton_tol = parse_f64(value).map_err(err)?,
                    "march_tol" => solver.march_tol = parse_f64(value).map_err(err)?,
                    "lambda_min" => solver.lambda_min = parse_f64(value).map_err(err)?,
                    "lambda_max" => solver.lambda_max = parse_f64(value).map_err(err)?,
                    "dispersion_samples" => solver.dispersion_samples = parse_usize(value).map_err(err)?,
                    "epsilon" => solver.epsilon = parse_f64(value).map_err(err)?,
                    "seed" => solver.seed = parse_usize(value).map_err(err)? as u64,
                    "n_starts" => solver.n_starts = parse_usize(value).map_err(err)?,
                    _ => return Err(err(format!("unknown key `{key}` in [solver]"))),
                },
                Some("simulation") => match key {
                    "width_periods" => simulation.width_periods = parse_usize(value).map_err(err)?,
                    "n_per_period" => simulation.n_per_period = parse_usize(value).map_err(err)?,
                    "t_max" => simulation.t_max = parse_f64(value).map_err(err)?,
                    "dt" => simulation.dt = parse_f64(value).map_err(err)?,
                    "emit_every" => simulation.emit_every = parse_f64(value).map_err(err)?,
                    "kappa" => simulation.kappa = parse_f64(value).map_err(err)?,
                    _ => return Err(err(format!("unknown key `{key}` in [simulation]"))),
                },
                Some("output") => match key {
                    "dir" => output.dir = value.trim_matches('"').to_string(),
                    _ => return Err(err(format!("unknown key `{key}` in [output]"))),
                },
                Some(other) => unreachable!("section {other} validated above"),
            }
        }

        let period = period.ok_or_else(|| ConfigError::Missing("period_L".into()))?;
        let mut polys = Vec::with_capacity(5);
        for (k, c) in coeffs.into_iter().enumerate() {
            let name = COEFFICIENT_SECTIONS[k];
            let c = c.ok_or_else(|| ConfigError::Missing(format!("[{name}]")))?;
            if c.mean.is_nan() {
                return Err(ConfigError::Missing(format!("{name}.mean")));
            }
            polys.push(c);
        }
        let mut it = polys.into_iter();
        let cfg = ScenarioConfig {
            period,
            r_u: it.next().unwrap(),
            r_v: it.next().unwrap(),
            gamma_u: it.next().unwrap(),
            gamma_v: it.next().unwrap(),
            mu: it.next().unwrap(),
            grid,
            solver,
            simulation,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ScenarioConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, message: &str| {
            Err(ConfigError::Invalid { key: key.to_string(), message: message.to_string() })
        };
        if self.grid.n_cells < crate::grid::MIN_PERIODIC_CELLS {
            return invalid("grid.n_cells", "must be at least 8");
        }
        if self.grid.strip_n_x < crate::grid::MIN_PERIODIC_CELLS {
            return invalid("grid.strip_n_x", "must be at least 8");
        }
        if !(self.solver.tol > 0.0) || !(self.solver.newton_tol > 0.0) || !(self.solver.march_tol > 0.0) {
            return invalid("solver.tol", "tolerances must be positive");
        }
        if !(self.solver.lambda_min > 0.0 && self.solver.lambda_min < self.solver.lambda_max) {
            return invalid("solver.lambda_min", "need 0 < lambda_min < lambda_max");
        }
        if !(self.solver.epsilon > 0.0 && self.solver.epsilon <= 1.0) {
            return invalid("solver.epsilon", "must lie in (0, 1]");
        }
        if self.simulation.n_per_period < 2 || self.simulation.width_periods < 2 {
            return invalid("simulation", "grid too small");
        }
        if !(self.simulation.t_max > 0.0) || self.simulation.dt < 0.0 || !(self.simulation.emit_every > 0.0) {
            return invalid("simulation", "t_max and emit_every must be positive, dt nonnegative");
        }
        if self.simulation.kappa < 0.0 {
            return invalid("simulation.kappa", "must be nonnegative");
        }
        Ok(())
    }

    /// Builds and validates the coefficient field.
    pub fn build_field(&self) -> Result<CoefficientField, ConfigError> {
        Ok(CoefficientField::new(
            self.period,
            self.r_u.clone(),
            self.r_v.clone(),
            self.gamma_u.clone(),
            self.gamma_v.clone(),
            self.mu.clone(),
            self.grid.n_cells,
        )?)
    }
}

/// Parses a scenario and builds its field.
pub fn build_field(config: &ScenarioConfig) -> Result<CoefficientField, ConfigError> {
    config.build_field()
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a nonnegative integer"))
}

fn parse_harmonic(s: &str) -> Result<Harmonic, String> {
    let inner = s
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("harmonic must be `(amplitude, wavenumber, phase)`, found `{s}`"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("harmonic needs 3 entries, found {}", parts.len()));
    }
    let wavenumber: u32 = parts[1]
        .parse()
        .map_err(|_| format!("wavenumber `{}` is not a nonnegative integer", parts[1]))?;
    Ok(Harmonic { amplitude: parse_f64(parts[0])?, wavenumber, phase: parse_f64(parts[2])? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use proptest::prelude::*;

    const SAMPLE: &str = "\
period_L = 1.0
[r_u]
mean = 0.5
harmonic = (1.0, 1, 0.0)
[r_v]
mean = 0.5
harmonic = (1.0, 1, 0.0)  # same as r_u
[gamma_u]
mean = 1
[gamma_v]
mean = 1
[mu]
mean = 0.2
[grid]
n_cells = 128
";

    #[test]
    fn parses_sample() {
        let cfg: ScenarioConfig = SAMPLE.parse().unwrap();
        assert_eq!(cfg.grid.n_cells, 128);
        assert_eq!(cfg.r_u.harmonics.len(), 1);
        assert_eq!(cfg.solver, SolverConfig::default());
        let f = cfg.build_field().unwrap();
        assert!((f.bounds().r0 + 0.5).abs() < 1e-14);
    }

    #[test]
    fn line_numbered_errors() {
        let bad = SAMPLE.replace("mean = 0.2", "mean = zero");
        match bad.parse::<ScenarioConfig>() {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 13),
            other => panic!("{other:?}"),
        }
        let bad = SAMPLE.replace("[grid]", "[gird]");
        assert!(matches!(bad.parse::<ScenarioConfig>(), Err(ConfigError::Parse { line: 14, .. })));
        let bad = SAMPLE.replace("harmonic = (1.0, 1, 0.0)  #", "harmonic = (1.0, 1)  #");
        assert!(matches!(bad.parse::<ScenarioConfig>(), Err(ConfigError::Parse { line: 7, .. })));
    }

    #[test]
    fn missing_pieces() {
        let bad = SAMPLE.replace("period_L = 1.0\n", "");
        assert_eq!(bad.parse::<ScenarioConfig>(), Err(ConfigError::Missing("period_L".into())));
        let bad = SAMPLE.replace("[mu]\nmean = 0.2\n", "");
        assert_eq!(bad.parse::<ScenarioConfig>(), Err(ConfigError::Missing("[mu]".into())));
    }

    #[test]
    fn mu_crossing_zero_is_rejected_at_build() {
        let bad = SAMPLE.replace("mean = 0.2", "mean = 0.1\nharmonic = (-0.2, 1, 0.0)");
        let cfg: ScenarioConfig = bad.parse().unwrap();
        assert!(matches!(
            cfg.build_field(),
            Err(ConfigError::Field(FieldError::PositivityViolation { name: "mu", .. }))
        ));
    }

    proptest! {
        #[test]
        fn text_round_trip(
            period in 0.1..10.0f64,
            mean in -2.0..2.0f64,
            amps in prop::collection::vec((-1.0..1.0f64, 0u32..5, -4.0..4.0f64), 0..4),
            mu in 0.05..1.0f64,
        ) {
            let mut cfg: ScenarioConfig = SAMPLE.parse().unwrap();
            cfg.period = period;
            cfg.r_v = TrigPoly {
                mean,
                harmonics: amps.into_iter().map(|(amplitude, wavenumber, phase)| Harmonic { amplitude, wavenumber, phase }).collect(),
            };
            cfg.mu = TrigPoly::constant(mu);
            let back: ScenarioConfig = cfg.to_text().parse().unwrap();
            prop_assert_eq!(&back, &cfg);
            let (f1, f2) = (cfg.build_field().unwrap(), back.build_field().unwrap());
            let grid = PeriodicGrid::new(64, period).unwrap();
            let (s1, s2) = (f1.sample(&grid), f2.sample(&grid));
            prop_assert_eq!(s1.r_v, s2.r_v);
        }
    }
}
