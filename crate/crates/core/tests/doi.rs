use std::sync::Arc;

use qls_core::doi::*;
use qls_core::hamiltonian::{mat_scale, metric_symbol, FlatMetric, FnMetric, Metric, Profile, RadialMetric, IDENTITY};
use qls_core::symbols::{bracket_at, xi_squared, PhaseSample};
use qls_core::{QlsError, C64};

fn bump_symbol(dim: usize, amplitude: f64) -> qls_core::symbols::Symbol {
    metric_symbol(Arc::new(RadialMetric::new(dim, Profile::Bump { amplitude, radius: 2.0 })))
}

fn jap2(x: &[f64]) -> f64 {
    1.0 + x.iter().map(|v| v * v).sum::<f64>()
}

/// `(1 + t·ρ·e^{-|x|²}) I` with exact gradient.
fn drifting(rho: f64) -> FnMetric {
    FnMetric::new(1, "drift", move |x, t| mat_scale(IDENTITY, 1.0 + t * rho * (-x[0] * x[0]).exp())).with_gradient(
        move |x, t| {
            let d = -2.0 * x[0] * t * rho * (-x[0] * x[0]).exp();
            [mat_scale(IDENTITY, d), [[0.0; 2]; 2]]
        },
    )
}

#[test]
fn flat_bracket_matches_closed_form() {
    let r = flat_escape_symbol(2, 1.0).unwrap();
    let h = xi_squared(2);
    let sample = PhaseSample::new(2, 8.0, 9, 2.0, 1e4, 9, 8);
    for x in &sample.xs {
        for xi in &sample.xis {
            let got = bracket_at(&h, &r.symbol, x, xi, 0.0).re;
            let want = flat_bracket_identity(x, xi, 1.0);
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{x:?} {xi:?}: {got} vs {want}");
            assert!(got >= 2.0 * f64::hypot(xi[0], xi[1]) / jap2(x) * (1.0 - 1e-12));
        }
    }
}

#[test]
fn flat_lower_bound_is_near_one() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let rep = verify_lower_bound(&xi_squared(1), &r.symbol, &default_sample(1, 16.0, 1.0, DEFAULT_XI_MAX), 2.0).unwrap();
    assert!(rep.pass && rep.b_star >= 0.9, "{rep:?}");
    assert!(rep.min_bracket > 0.0);
}

#[test]
fn wrong_sign_fails() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let neg = r.symbol.scale(C64::new(-1.0, 0.0));
    let rep = verify_lower_bound(&xi_squared(1), &neg, &default_sample(1, 16.0, 1.0, DEFAULT_XI_MAX), 2.0).unwrap();
    assert!(!rep.pass);
}

#[test]
fn centered_weight_needs_no_multiple() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let s = default_sample(1, 16.0, 1.0, DEFAULT_XI_MAX);
    let u = uncentered_symbol(&r, &r, [0.0, 0.0], &xi_squared(1), 8, &s, 2.0).unwrap();
    assert_eq!(u.symbol.n_weight, 0.0);
    assert!(u.report.pass);
}

#[test]
fn off_centre_bump_gets_a_finite_weight() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let s = default_sample(1, 16.0, 1.0, DEFAULT_XI_MAX);
    let h = bump_symbol(1, 0.1);
    let u = uncentered_symbol(&r, &r, [4.0, 0.0], &h, 16, &s, 2.0).unwrap();
    assert!(u.symbol.n_weight <= 16.0);
    assert!(u.report.c1 > 0.0 && u.report.c3.is_finite());
    assert_eq!(u.report.x_mu, vec![4.0]);
}

#[test]
fn shifted_bracket_is_translation_covariant() {
    let r = flat_escape_symbol(2, 1.0).unwrap();
    let h = xi_squared(2);
    let mu = [1.5, -0.5];
    let shifted = r.symbol.shift_x(mu);
    for &(x, xi) in &[([0.3, 2.0], [4.0, -1.0]), ([-3.0, 1.0], [0.5, 7.0])] {
        let a = bracket_at(&h, &shifted, &x, &xi, 0.0).re;
        let b = bracket_at(&h, &r.symbol, &[x[0] - mu[0], x[1] - mu[1]], &xi, 0.0).re;
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn bracket_grows_with_the_weight() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let s = default_sample(1, 16.0, 1.0, 1e4);
    let h = xi_squared(1);
    let tp = BracketTable::compute(&h, &r.symbol, &s, 2.0, 0.0).unwrap();
    let tr = BracketTable::compute(&h, &r.symbol.shift_x([6.0, 0.0]), &s, 2.0, 0.0).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for n in 0..6 {
        let rep = bump_bound_from_table(&tp.combine(n as f64, &tr, 1.0), [6.0, 0.0], n as f64, 1);
        assert!(rep.b_star >= prev - 1e-9, "N = {n}: {} < {prev}", rep.b_star);
        prev = rep.b_star;
    }
}

#[test]
fn static_metric_is_stable_to_the_cap() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let s = default_sample(1, 8.0, 1.0, 1e4);
    let m: Arc<dyn Metric> = Arc::new(FlatMetric { dim: 1 });
    assert_eq!(time_stability_horizon(m, &r, &s, 2.0, 3.0, None).unwrap(), 3.0);
}

#[test]
fn drift_horizon_is_inverse_in_the_rate() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let s = default_sample(1, 8.0, 1.0, 1e4);
    let t = |rho: f64| time_stability_horizon(Arc::new(drifting(rho)), &r, &s, 2.0, 100.0, None).unwrap();
    let (t1, t4) = (t(1.0), t(4.0));
    assert!(t1 > 0.0 && t1 < 100.0, "{t1}");
    assert!((t1 / t4 - 4.0).abs() < 1e-6, "{t1} {t4}");
}

#[test]
fn perturbation_margin_cases() {
    let r = flat_escape_symbol(1, 1.0).unwrap();
    let s = default_sample(1, 16.0, 1.0, 1e4);
    let zero = FnMetric::new(1, "zero", |_, _| [[0.0; 2]; 2]).with_gradient(|_, _| [[[0.0; 2]; 2]; 2]);
    assert_eq!(perturbation_margin(&zero, &r, &s, 2.0, 1.0, 5.0, 10.0).unwrap(), 5.0);

    let decaying = FnMetric::new(1, "decay", |x, _| mat_scale(IDENTITY, 1.0 / (1.0 + x[0] * x[0]))).with_gradient(
        |x, _| {
            let q = 1.0 + x[0] * x[0];
            [mat_scale(IDENTITY, -2.0 * x[0] / (q * q)), [[0.0; 2]; 2]]
        },
    );
    let eta = perturbation_margin(&decaying, &r, &s, 2.0, 1.0, 5.0, 10.0).unwrap();
    assert!(eta > 0.0 && eta < 5.0, "{eta}");

    let constant = FnMetric::new(1, "const", |_, _| mat_scale(IDENTITY, 0.1));
    assert!(matches!(
        perturbation_margin(&constant, &r, &s, 2.0, 1.0, 5.0, 10.0),
        Err(QlsError::Precondition(_))
    ));
}

#[test]
fn assembled_gamma_is_the_weighted_sum() {
    let r = flat_escape_symbol(2, 1.0).unwrap();
    let p1 = combine(&r, &r, [2.0, 0.0], 1.0);
    let p2 = combine(&r, &r, [0.0, -3.0], 2.0);
    let g = assemble_gamma(&r, &[(0.5, p1.clone()), (0.0, p2)]);
    let (x, xi) = ([0.7, -1.2], [3.0, 4.0]);
    let want = r.symbol.eval(&x, &xi, 0.0) + p1.symbol.eval(&x, &xi, 0.0) * 0.5;
    assert!((g.eval(&x, &xi, 0.0) - want).norm() < 1e-14);
    let gx = g.grad_x(&x, &xi, 0.0);
    let wx0 = r.symbol.grad_x(&x, &xi, 0.0)[0] + p1.symbol.grad_x(&x, &xi, 0.0)[0] * 0.5;
    assert!((gx[0] - wx0).norm() < 1e-14);
}
