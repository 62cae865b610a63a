mod common;

use common::opposed_field;
use pulsefront::fields::sample_matrix_a;
use pulsefront::io::{read_strip_dump, write_strip_dump};
use pulsefront::spectral::{dispersion_curve, periodic_principal_eig, DispersionOptions, EigenOptions};
use pulsefront::strip::{
    apply_leps, default_setup, solve_cooperative, solve_with_normalization, IterationOptions, NormalizationOptions,
    StripGrid, StripProblem, StripSetup,
};
use pulsefront::CoefficientField;

const EPS: f64 = 0.5;

fn homogeneous() -> CoefficientField {
    CoefficientField::constant(1.0, 1.0, 1.0, 0.1, 1.0).unwrap()
}

fn setup(field: &CoefficientField) -> StripSetup {
    default_setup(field, 32, EPS, &EigenOptions::default(), &DispersionOptions::default()).unwrap()
}

fn problem(field: &CoefficientField, s: &StripSetup, half_width: f64) -> StripProblem {
    let grid = StripGrid::new(half_width, 32, field.period()).unwrap();
    StripProblem::new(field, grid, &s.steady, EPS, s.k).unwrap()
}

/// Relative residual of `e^{-l0 s} Phi0(x)` in the linearized strip equation at
/// `c = c_bar`, where the continuous residual vanishes.
fn exponential_residual(field: &CoefficientField, n_x: usize) -> f64 {
    let grid = StripGrid::new(2.0, n_x, field.period()).unwrap();
    let x_grid = grid.x_grid();
    let curve = dispersion_curve(field, &x_grid, EPS, &DispersionOptions::default()).unwrap();
    let tight = EigenOptions { tol: 1e-13, max_iter: 5000 };
    let eig = periodic_principal_eig(field, &x_grid, curve.lambda_star, EPS, &tight).unwrap();
    let a = sample_matrix_a(field, &x_grid);
    let (n_s, l0) = (grid.n_s(), curve.lambda_star);
    let zeta = |comp: &[f64]| -> Vec<f64> {
        (0..n_s).flat_map(|i| comp.iter().map(move |p| (-l0 * grid.s(i)).exp() * p)).collect()
    };
    let (zu, zv) = (zeta(&eig.phi), zeta(&eig.psi));
    let lu = apply_leps(&grid, EPS, curve.c_bar, &zu).unwrap();
    let lv = apply_leps(&grid, EPS, curve.c_bar, &zv).unwrap();
    let mut worst = 0.0f64;
    for i in 1..n_s - 1 {
        for j in 0..n_x {
            let (k, r) = (i * n_x + j, (i - 1) * n_x + j);
            let ru = lu[r] - a[j][0][0] * zu[k] - a[j][0][1] * zv[k];
            let rv = lv[r] - a[j][1][0] * zu[k] - a[j][1][1] * zv[k];
            worst = worst.max(ru.abs() / zu[k]).max(rv.abs() / zv[k]);
        }
    }
    worst
}

#[test]
fn exponential_supersolution_residual_is_second_order() {
    let f = opposed_field();
    let r: Vec<f64> = [32, 64, 128].iter().map(|&n| exponential_residual(&f, n)).collect();
    for w in r.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 1.8, "observed order {order} from {r:?}");
    }
}

#[test]
fn normalized_front_on_homogeneous_strip() {
    let f = homogeneous();
    let s = setup(&f);
    let p = problem(&f, &s, s.a);
    let c_upper = s.constants.c_bar + EPS;
    let out = solve_with_normalization(&p, s.nu, s.a0, c_upper, &NormalizationOptions::default()).unwrap();
    assert!(out.norm_at_zero > s.nu);
    assert!(out.norm_at_upper < 0.5 * s.nu);
    assert!(out.c_star > 0.0 && out.c_star < c_upper, "c* = {}", out.c_star);
    assert!((out.solution.window_norm(s.a0) - s.nu).abs() <= 1e-6);
    assert!(out.probes_monotone(1e-12));
    let cert = out.solution.certificate;
    assert!(cert.iterates_nonincreasing && cert.s_monotone && cert.within_bounds, "{cert:?}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strip.bin");
    write_strip_dump(&path, &out.solution).unwrap();
    let back = read_strip_dump(&path).unwrap();
    assert_eq!((back.n_s, back.n_x), (p.grid.n_s(), p.grid.n_x()));
    assert_eq!(back.h_s, back.h_x);
    assert_eq!(back.u, out.solution.u);
    assert_eq!(back.v, out.solution.v);
}

#[test]
fn faster_frames_give_smaller_solutions() {
    let f = homogeneous();
    let s = setup(&f);
    let p = problem(&f, &s, s.a0 + 2.0);
    let opts = IterationOptions::default();
    let slow = solve_cooperative(&p, 0.5, None, &opts).unwrap();
    let fast = solve_cooperative(&p, 1.5, Some(&slow), &opts).unwrap();
    assert!(fast.max_excess_over(&slow) <= 1e-10, "excess {}", fast.max_excess_over(&slow));
    assert!(slow.certificate.iterates_nonincreasing && fast.certificate.iterates_nonincreasing);
}

#[test]
fn fast_frame_decays_inside_the_window() {
    let f = homogeneous();
    let s = setup(&f);
    let a = s.a0 + s.constants.a_bar(s.k, s.nu);
    let p = problem(&f, &s, a);
    let sol = solve_cooperative(&p, 10.0, None, &IterationOptions::default()).unwrap();
    assert!(sol.window_norm(s.a0) < 0.01 * s.nu, "window norm {}", sol.window_norm(s.a0));
    assert!(sol.certificate.within_bounds);
}
