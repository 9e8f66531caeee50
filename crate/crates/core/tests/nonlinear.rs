use qls_core::coeffs::{registry, FamilyParams};
use qls_core::linear::{evolve, LinearSystem};
use qls_core::nonlinear::*;
use qls_core::{Grid, QlsError, StateField, C64};

fn grid1(l: f64, n: usize) -> Grid {
    Grid::new(1, l, n).unwrap()
}

fn small_cfg() -> SolverConfig {
    SolverConfig {
        s: 4.0,
        m0: 20.0,
        epsilon: 1e-2,
        t_end: 4e-3,
        dt: 2.5e-4,
        picard_tol: 1e-11,
        picard_max: 80,
    }
}

#[test]
fn semigroup_damps_plane_wave_exactly() {
    let g = grid1(std::f64::consts::PI, 64);
    let u = StateField::from_fn(&g, 0.0, |x| C64::new(0.0, 3.0 * x[0]).exp()).unwrap();
    let v = semigroup(&u, 0.1, 0.5).unwrap();
    let want = (-0.1f64 * 0.5 * 81.0).exp();
    for (a, b) in v.values().iter().zip(u.values()) {
        assert!((a - b * want).norm() < 1e-12);
    }
}

#[test]
fn zero_data_gives_zero_fixed_point() {
    let cs = registry("cubic-semilinear", 1, &FamilyParams::default()).unwrap();
    let g = grid1(16.0, 128);
    let sol = picard_solve(&cs, &small_cfg(), &StateField::zeros(&g, 0.0)).unwrap();
    assert_eq!(sol.iterations, 1);
    assert!(sol.sup_hs == 0.0);
}

#[test]
fn small_data_contracts_after_first_iteration() {
    let cs = registry("cubic-semilinear", 1, &FamilyParams::default()).unwrap();
    let g = grid1(16.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.3, 0.0), 2.0, [0.0, 0.0]).unwrap();
    let sol = picard_solve(&cs, &small_cfg(), &u0).unwrap();
    assert!(sol.contraction_log.iter().all(|r| *r < 1.0), "{:?}", sol.contraction_log);
    assert!(sol.fixed_point_residual < 10.0 * small_cfg().picard_tol);
}

#[test]
fn initial_iterates_reach_the_same_fixed_point() {
    let cs = registry("quasilinear-metric", 1, &FamilyParams::default()).unwrap();
    let g = grid1(16.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.4, 0.1), 2.0, [1.0, 0.0]).unwrap();
    let cfg = small_cfg();
    let a = picard_solve_from(&cs, &cfg, &u0, InitialIterate::SemigroupTail).unwrap();
    let b = picard_solve_from(&cs, &cfg, &u0, InitialIterate::Constant).unwrap();
    let d = a
        .trajectory
        .frames()
        .iter()
        .zip(b.trajectory.frames())
        .map(|(x, y)| x.sub(y).sobolev_norm(cfg.s).unwrap())
        .fold(0.0, f64::max);
    assert!(d < 10.0 * cfg.picard_tol, "{d}");
}

#[test]
fn linear_fixed_point_matches_linear_solver() {
    let p = FamilyParams::default();
    let cs = registry("bump-metric", 1, &p).unwrap();
    let g = grid1(8.0, 128);
    let u0 = gaussian_data(&g, C64::new(1.0, 0.0), 1.5, [0.0, 0.0]).unwrap();
    let err = |dt: f64| {
        let cfg = SolverConfig {
            dt,
            t_end: 8e-3,
            ..small_cfg()
        };
        let sol = picard_solve(&cs, &cfg, &u0).unwrap();
        let sys = LinearSystem::from_family(&cs, &g, cfg.epsilon).unwrap();
        let lin = evolve(&sys, &u0, cfg.t_end, 1e-5).unwrap();
        sol.trajectory.last().sub(lin.last()).l2_norm()
    };
    let (e1, e2) = (err(1e-3), err(5e-4));
    assert!(e1 < 1e-3, "{e1}");
    let order = (e1 / e2).log2();
    assert!(order > 1.7, "observed order {order} ({e1}, {e2})");
}

#[test]
fn long_window_stops_contracting() {
    let cs = registry("flat", 1, &FamilyParams::default()).unwrap();
    let g = grid1(8.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.5, 0.0), 1.0, [0.0, 0.0]).unwrap();
    let cfg = SolverConfig {
        epsilon: 1e-3,
        t_end: 0.2,
        dt: 1e-3,
        ..small_cfg()
    };
    match picard_solve(&cs, &cfg, &u0) {
        Err(QlsError::NotContracting { ratios }) => assert!(ratios.len() >= 3),
        other => panic!("expected NotContracting, got {other:?}"),
    }
}

#[test]
fn large_data_violates_solution_ball_precondition() {
    let cs = registry("flat", 1, &FamilyParams::default()).unwrap();
    let g = grid1(8.0, 128);
    let u0 = gaussian_data(&g, C64::new(50.0, 0.0), 1.0, [0.0, 0.0]).unwrap();
    assert!(matches!(picard_solve(&cs, &small_cfg(), &u0), Err(QlsError::Precondition(_))));
}

#[test]
fn hierarchy_is_ordered_and_needs_even_s() {
    let g = grid1(8.0, 128);
    let u0 = gaussian_data(&g, C64::new(1.0, 0.0), 1.0, [0.0, 0.0]).unwrap();
    let tr = qls_core::Trajectory::new(vec![u0.clone(), u0.with_time(0.1)], 0.1).unwrap();
    let h = hierarchy_norms(&tr, 6.0).unwrap();
    assert_eq!(h.levels.len(), 4);
    for m in 0..3 {
        assert!(h.levels[m + 1][0] >= h.levels[m][0]);
    }
    assert!(h.finite && h.max_step_ratio >= 1.0);
    assert!(hierarchy_norms(&tr, 3.0).is_err());
}

#[test]
fn continuation_chains_windows() {
    let cs = registry("cubic-semilinear", 1, &FamilyParams::default()).unwrap();
    let g = grid1(16.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.3, 0.0), 2.0, [0.0, 0.0]).unwrap();
    let cfg = small_cfg();
    let rep = continuation_solve(&cs, &cfg, &u0, 0.02, &ContinuationOptions::default()).unwrap();
    assert!(rep.gate_violation.is_none());
    assert_eq!(rep.windows.len(), 5);
    assert!((rep.horizon - 0.02).abs() < 1e-12);
    assert_eq!(rep.solution.trajectory.len(), 81);
    // L² is conserved up to hyperviscous loss for a gauge-invariant cubic term
    let m0 = u0.l2_norm();
    let m1 = rep.solution.trajectory.last().l2_norm();
    assert!(m1 <= m0 * (1.0 + 1e-9) && m1 > 0.99 * m0);
}

#[test]
fn continuation_gate_stops_growing_solution() {
    // real zeroth-order gain: ‖u(t)‖ ~ e^{5t}
    let cs = registry("flat", 1, &FamilyParams::default())
        .unwrap()
        .with_c1(|_, _, _, _| C64::new(5.0, 0.0));
    let g = grid1(16.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.3, 0.0), 2.0, [0.0, 0.0]).unwrap();
    let cfg = SolverConfig {
        m0: 8.0 * u0.sobolev_norm(4.0).unwrap() / 2.0,
        ..small_cfg()
    };
    let rep = continuation_solve(&cs, &cfg, &u0, 1.0, &ContinuationOptions::default()).unwrap();
    let t = rep.gate_violation.expect("gate should trip");
    assert!(t > 0.0 && t < 1.0);
    assert!(rep.horizon < 1.0);
}

#[test]
fn record_apriori_fills_window_constants() {
    let cs = registry("bump-metric", 1, &FamilyParams::default()).unwrap();
    let g = grid1(8.0, 64);
    let u0 = gaussian_data(&g, C64::new(0.3, 0.0), 1.5, [0.0, 0.0]).unwrap();
    let opts = ContinuationOptions {
        record_apriori: true,
        ..Default::default()
    };
    let rep = continuation_solve(&cs, &small_cfg(), &u0, 8e-3, &opts).unwrap();
    assert!(rep.windows.iter().all(|w| w.apriori_a.is_some_and(|a| a.is_finite() && a > 0.0)));
}

#[test]
fn vanishing_viscosity_differences_scale_linearly() {
    let cs = registry("cubic-semilinear", 1, &FamilyParams::default()).unwrap();
    let g = grid1(16.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.3, 0.0), 1.0, [0.0, 0.0]).unwrap();
    let cfg = SolverConfig {
        t_end: 2.5e-3,
        ..small_cfg()
    };
    let rep = vanishing_viscosity(&cs, &cfg, &u0, 0.02, &[1e-2, 5e-3, 2.5e-3]).unwrap();
    assert!((rep.slope - 1.0).abs() < 0.2, "{rep:?}");
    assert!(rep.monotone_l2);
}

#[test]
fn quasilinear_bound_has_quadratic_growth() {
    let cs = registry("quasilinear-metric", 1, &FamilyParams::default()).unwrap();
    let g = grid1(16.0, 128);
    let pairs: Vec<_> = [(0.5, 2.0), (0.3, 1.5)]
        .iter()
        .map(|&(a, w)| {
            (
                gaussian_data(&g, C64::new(a, 0.0), w, [0.0, 0.0]).unwrap(),
                gaussian_data(&g, C64::new(1.0, 0.0), 1.5, [1.0, 0.0]).unwrap(),
            )
        })
        .collect();
    let fit = fit_nonlinear_bound(&cs, &pairs, &[0.25, 0.5, 1.0, 2.0], 4.0).unwrap();
    assert!(fit.p >= 2, "{fit:?}");
    assert!(fit.max_violation < 0.25, "{fit:?}");
}

#[test]
fn failing_horizon_is_linear_in_viscosity() {
    let cs = registry("flat", 1, &FamilyParams::default()).unwrap();
    let g = grid1(8.0, 128);
    let r = qls_core::psido::random_trials(&g, 1, 3, None).remove(0);
    let u0 = r.scale(C64::new(1.0 / r.sobolev_norm(4.0).unwrap(), 0.0));
    let t = |eps: f64| {
        let cfg = SolverConfig { epsilon: eps, ..small_cfg() };
        failing_horizon(&cs, &cfg, &u0, eps / 64.0, 256, 8).unwrap()
    };
    let (a, b) = (t(1e-2), t(2.5e-3));
    let exponent = (a / b).ln() / 4f64.ln();
    assert!((exponent - 1.0).abs() < 0.3, "{a} {b}: exponent {exponent}");
}

#[test]
fn gated_horizon_is_uniform_in_viscosity() {
    let cs = registry("flat", 1, &FamilyParams::default())
        .unwrap()
        .with_c1(|_, _, _, _| C64::new(20.0, 0.0));
    let g = grid1(16.0, 128);
    let u0 = gaussian_data(&g, C64::new(0.3, 0.0), 2.0, [0.0, 0.0]).unwrap();
    let horizon = |eps: f64| {
        let cfg = SolverConfig {
            epsilon: eps,
            t_end: 0.4 * eps,
            dt: 0.05 * eps,
            m0: 16.0 * u0.sobolev_norm(4.0).unwrap(),
            ..small_cfg()
        };
        continuation_solve(&cs, &cfg, &u0, 1.0, &ContinuationOptions::default()).unwrap().horizon
    };
    let hs: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| horizon(e)).collect();
    let (lo, hi) = hs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
    assert!(lo > 0.0 && hi / lo < 1.25, "{hs:?}");
}
