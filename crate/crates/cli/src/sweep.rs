//! Parameter sweeps: a scenario file plus a `[sweep]` section listing axes.
//!
//! ```text
//! [sweep]
//! mu.mean = 0.01:1:5
//! r.contrast = 0:1:5
//! ```
//!
//! `<coefficient>.mean` sets a mean (`r` moves `r_u` and `r_v` together);
//! `r.contrast = c` replaces the growth harmonics by `+c cos` on `r_u` and
//! `-c cos` on `r_v`. Each cell is an ordinary scenario with its own run
//! directory; a cell whose directory already holds a finished record is reused.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pulsefront::config::ScenarioConfig;
use pulsefront::fields::Harmonic;
use pulsefront::io::fmt_sig;
use pulsefront::spectral::{dispersion_curve, SpectralError};
use rayon::prelude::*;

use crate::commands::lambda1;
use crate::{digest, CliError, Context, GlobalOptions, Outcome};

pub const CELL_FILE: &str = "sweep_cell.csv";
const CELL_COMMAND: &str = "sweep_cell";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    Mean,
    Contrast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    /// Coefficients the axis acts on.
    pub targets: Vec<&'static str>,
    pub kind: AxisKind,
    pub values: Vec<f64>,
}

impl Axis {
    fn apply(&self, cfg: &mut ScenarioConfig, value: f64) {
        match self.kind {
            AxisKind::Mean => {
                for t in &self.targets {
                    cfg.coefficient_mut(t).expect("known coefficient").mean = value;
                }
            }
            AxisKind::Contrast => {
                cfg.r_u.harmonics = vec![Harmonic { amplitude: value, wavenumber: 1, phase: 0.0 }];
                cfg.r_v.harmonics = vec![Harmonic { amplitude: -value, wavenumber: 1, phase: 0.0 }];
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axes: Vec<Axis>,
}

impl SweepSpec {
    /// Cartesian product of the axes, last axis fastest.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        let mut cells = vec![Vec::new()];
        for axis in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |&v| {
                        let mut next = c.clone();
                        next.push(v);
                        next
                    })
                })
                .collect();
        }
        if self.axes.is_empty() {
            cells.clear();
        }
        cells
    }

    pub fn cell_config(&self, values: &[f64]) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        for (axis, &v) in self.axes.iter().zip(values) {
            axis.apply(&mut cfg, v);
        }
        cfg
    }
}

fn parse_range(value: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected lo:hi:n, found `{value}`"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("`{}` is not a number", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("`{}` is not a number", parts[1]))?;
    let n: usize = parts[2].parse().map_err(|_| format!("`{}` is not a count", parts[2]))?;
    if !lo.is_finite() || !hi.is_finite() {
        return Err("range ends must be finite".into());
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    })
}

fn parse_axis(key: &str, value: &str) -> Result<Axis, String> {
    let (coef, what) = key.split_once('.').ok_or_else(|| format!("axis `{key}` must be `<coefficient>.<mean|contrast>`"))?;
    let (targets, kind) = match (coef, what) {
        ("r", "mean") => (vec!["r_u", "r_v"], AxisKind::Mean),
        ("r", "contrast") => (vec!["r_u", "r_v"], AxisKind::Contrast),
        ("gamma", "mean") => (vec!["gamma_u", "gamma_v"], AxisKind::Mean),
        (c, "mean") => {
            let name = ["r_u", "r_v", "gamma_u", "gamma_v", "mu"]
                .into_iter()
                .find(|n| *n == c)
                .ok_or_else(|| format!("unknown coefficient `{c}`"))?;
            (vec![name], AxisKind::Mean)
        }
        _ => return Err(format!("unsupported axis `{key}`")),
    };
    Ok(Axis { name: key.to_string(), targets, kind, values: parse_range(value)? })
}

/// Splits off the `[sweep]` section. Its lines are blanked rather than removed
/// so that scenario parse errors keep their line numbers.
pub fn parse_sweep(text: &str) -> Result<SweepSpec, CliError> {
    let mut scenario = String::with_capacity(text.len());
    let mut axes = Vec::new();
    let mut in_sweep = false;
    for (k, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.starts_with('[') {
            in_sweep = content == "[sweep]";
        }
        if !in_sweep {
            scenario.push_str(line);
            scenario.push('\n');
            continue;
        }
        scenario.push('\n');
        if content.is_empty() || content == "[sweep]" {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `axis = lo:hi:n`", k + 1)))?;
        let axis = parse_axis(key.trim(), value.trim()).map_err(|m| CliError::Config(format!("line {}: {m}", k + 1)))?;
        if axes.iter().any(|a: &Axis| a.name == axis.name) {
            return Err(CliError::Config(format!("line {}: duplicate axis `{}`", k + 1, axis.name)));
        }
        axes.push(axis);
    }
    let base: ScenarioConfig = scenario.parse()?;
    Ok(SweepSpec { base, axes })
}

/// Per-cell results.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub lambda1: f64,
    pub c_bar0: f64,
    pub persistent: bool,
}

fn read_cell(dir: &Path) -> Option<CellResult> {
    let manifest = fs::read_to_string(dir.join("manifest.jsonl")).ok()?;
    let finished = manifest.lines().any(|l| {
        serde_json::from_str::<serde_json::Value>(l).is_ok_and(|v| v["command"] == CELL_COMMAND)
    });
    if !finished {
        return None;
    }
    let text = fs::read_to_string(dir.join(CELL_FILE)).ok()?;
    let row = text.lines().nth(1)?;
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != 3 {
        return None;
    }
    Some(CellResult { lambda1: f[0].parse().ok()?, c_bar0: f[1].parse().ok()?, persistent: f[2] == "1" })
}

fn compute_cell(ctx: &Context) -> Result<CellResult, CliError> {
    let l1 = lambda1(ctx)?;
    let c_bar0 = if l1 < 0.0 {
        match dispersion_curve(&ctx.field, &ctx.grid(), 0.0, &ctx.dispersion_opts()) {
            Ok(c) => c.c_bar,
            Err(SpectralError::NotPropagating { .. }) => f64::NAN,
            Err(e) => return Err(CliError::solver(e)),
        }
    } else {
        f64::NAN
    };
    let res = CellResult { lambda1: l1, c_bar0, persistent: l1 < 0.0 };
    fs::write(
        ctx.path(CELL_FILE),
        format!("lambda1,c_bar0,persistent\n{:?},{:?},{}\n", res.lambda1, res.c_bar0, u8::from(res.persistent)),
    )?;
    let mut rec = ctx.record(CELL_COMMAND);
    rec.metric("lambda1", l1);
    if c_bar0.is_finite() {
        rec.metric("c_bar0", c_bar0);
    }
    rec.artifact(&ctx.path(CELL_FILE));
    rec.finish(&ctx.run_dir)?;
    Ok(res)
}

pub fn cmd_sweep(path: &Path, global: &GlobalOptions) -> Result<Outcome, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let spec = parse_sweep(&text)?;
    let cells = spec.cells();
    if cells.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let contexts = cells
        .iter()
        .map(|v| Context::from_config(spec.cell_config(v), global))
        .collect::<Result<Vec<_>, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(global.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    let results: Vec<Result<(CellResult, bool), CliError>> = pool.install(|| {
        contexts
            .par_iter()
            .map(|ctx| match read_cell(&ctx.run_dir) {
                Some(r) => Ok((r, true)),
                None => compute_cell(ctx).map(|r| (r, false)),
            })
            .collect()
    });

    let mut csv_text = String::from("cell");
    for a in &spec.axes {
        csv_text.push(',');
        csv_text.push_str(&a.name);
    }
    csv_text.push_str(",scenario_hash,lambda1,c_bar0,persistent\n");
    let mut reused = 0;
    for (k, (values, (ctx, res))) in cells.iter().zip(contexts.iter().zip(results)).enumerate() {
        let (r, was_cached) = res?;
        reused += usize::from(was_cached);
        let _ = write!(csv_text, "{k}");
        for v in values {
            let _ = write!(csv_text, ",{}", fmt_sig(*v));
        }
        let _ = writeln!(
            csv_text,
            ",{},{},{},{}",
            ctx.hash,
            fmt_sig(r.lambda1),
            fmt_sig(r.c_bar0),
            u8::from(r.persistent)
        );
    }
    let root = global.out.clone().unwrap_or_else(|| spec.base.output.dir.clone().into());
    let sweep_dir = root.join(format!("sweep_{}", digest(&text)));
    fs::create_dir_all(&sweep_dir)?;
    let out_path = sweep_dir.join("phase.csv");
    fs::write(&out_path, csv_text)?;

    let mut out = Outcome::default();
    out.line(format!("cells = {}", cells.len()));
    out.line(format!("reused = {reused}"));
    out.line(format!("phase = {}", out_path.display()));
    Ok(out)
}
