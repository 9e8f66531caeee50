use std::sync::Arc;

use approx::assert_relative_eq;
use proptest::prelude::*;
use qls_core::coeffs::{
    apply_nonlinear_operator, cube_decompose, freeze_at_state, freeze_linear_coefficients, jets, registry,
    validate_assumptions, validate_linear, validate_zero_state, w1m_check, w1m_norm, CoefficientSet, FamilyParams,
    FrozenValidationOptions, Jet, JetRule, ValidationOptions, DEFAULT_N_SMOOTH,
};
use qls_core::{CubePartition, Grid, QlsError, StateField, C64};

fn gaussian(grid: &Grid, amp: f64, width: f64, center: f64) -> StateField {
    StateField::from_fn(grid, 0.0, |x| {
        let r2: f64 = x.iter().map(|v| (v - center).powi(2)).sum();
        C64::new(amp * (-r2 / (width * width)).exp(), 0.0)
    })
    .unwrap()
}

#[test]
fn bump_metric_passes_validation() {
    let grid = Grid::new(1, 16.0, 256).unwrap();
    let p = FamilyParams {
        amplitude: 0.5,
        ..Default::default()
    };
    let cs = registry("bump-metric", 1, &p).unwrap();
    let rep = validate_assumptions(&cs, &grid, &ValidationOptions::for_grid(&grid));
    assert!(rep.pass, "{rep:#?}");
    let gamma = rep.measured("NL4:gamma_M").unwrap();
    assert_relative_eq!(gamma, 2.0 / 3.0, max_relative = 1e-6);
}

#[test]
fn linear_b1_violates_nl6() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let cs = registry("flat", 1, &FamilyParams::default())
        .unwrap()
        .with_b1(|_, _, z| [z.u, z.u]);
    let mut opts = ValidationOptions::for_grid(&grid);
    opts.rays = None;
    let rep = validate_assumptions(&cs, &grid, &opts);
    assert!(!rep.pass);
    let e = rep.entries.iter().find(|e| e.name.starts_with("NL6")).unwrap();
    assert!(!e.pass);
    assert!(e.measured > 0.5);
}

#[test]
fn quadratic_b1_satisfies_nl6() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let cs = registry("quadratic-b1", 1, &FamilyParams::default()).unwrap();
    let mut opts = ValidationOptions::for_grid(&grid);
    opts.rays = None;
    assert!(validate_assumptions(&cs, &grid, &opts).pass);
}

#[test]
fn w1m_rejects_linear_rule() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let u = gaussian(&grid, 1.0, 1.0, 0.0);
    let rule: Arc<JetRule> = Arc::new(|z: &Jet| z.u);
    assert!(matches!(w1m_check(rule.as_ref(), &u, 3), Err(QlsError::Precondition(_))));
}

#[test]
fn w1m_matches_direct_square() {
    let grid = Grid::new(1, 8.0, 128).unwrap();
    let u = gaussian(&grid, 0.7, 1.3, 0.5);
    let rule = |z: &Jet| z.u * z.u;
    let got = w1m_check(&rule, &u, 3).unwrap();
    let sq: Vec<C64> = u.values().iter().map(|v| v * v).collect();
    let want = w1m_norm(&grid, &sq, 3).unwrap();
    assert_relative_eq!(got, want, max_relative = 1e-12);
}

#[test]
fn w1m_scales_quadratically() {
    let grid = Grid::new(2, 6.0, 32).unwrap();
    let u = gaussian(&grid, 0.3, 1.0, 0.0);
    let rule = |z: &Jet| z.u * z.u + z.grad_u[0] * z.ubar;
    let base = w1m_check(&rule, &u, 2).unwrap();
    for lambda in [0.1, 0.5, 2.0] {
        let v = u.scale(C64::new(lambda, 0.0));
        let got = w1m_check(&rule, &v, 2).unwrap();
        assert_relative_eq!(got / (lambda * lambda), base, max_relative = 1e-10);
    }
}

#[test]
fn freeze_rejects_ball_excursion() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let p = FamilyParams {
        ball_radius: 0.5,
        ..Default::default()
    };
    let cs = registry("cubic-semilinear", 1, &p).unwrap();
    let u = gaussian(&grid, 2.0, 1.0, 0.0);
    assert!(matches!(
        freeze_at_state(&cs, &u, 0.0, 0.0),
        Err(QlsError::BallExcursion { .. })
    ));
}

#[test]
fn freeze_divergence_correction_reproduces_operator() {
    // i∂_j(a ∂_k u) + b1_lin·∇u must equal i a ∂∂u + b1·∇u for any w
    let grid = Grid::new(1, 8.0, 512).unwrap();
    let p = FamilyParams {
        amplitude: 0.4,
        radius: 2.0,
        kappa: 0.2,
        ..Default::default()
    };
    let cs = registry("quasilinear-metric", 1, &p).unwrap();
    let v = gaussian(&grid, 0.5, 1.5, 0.3);
    let w = gaussian(&grid, 1.0, 1.0, -0.4);
    let frozen = freeze_at_state(&cs, &v, 0.0, 0.0).unwrap();
    let direct = apply_nonlinear_operator(&cs, &v, &w, 0.0).unwrap();
    let dw = grid.derivative(w.values(), 0).unwrap();
    let flux: Vec<C64> = dw.iter().zip(&frozen.a).map(|(d, a)| d * a[0][0]).collect();
    let div = grid.derivative(&flux, 0).unwrap();
    let err = (0..grid.len())
        .map(|i| {
            let lin = C64::i() * div[i] + frozen.b1[i][0] * dw[i] + frozen.c1[i] * w.values()[i];
            (lin - direct.values()[i]).norm()
        })
        .fold(0.0, f64::max);
    assert!(err < 1e-5, "err = {err}");
}

#[test]
fn freeze_commutes_with_lattice_shift() {
    let grid = Grid::new(2, 6.0, 32).unwrap();
    let cs = registry("cubic-semilinear", 2, &FamilyParams::default()).unwrap();
    assert!(cs.translation_invariant);
    let u = gaussian(&grid, 0.5, 1.0, 0.3);
    let shift = [3, -5];
    let a = freeze_at_state(&cs, &u.shifted(shift), 0.0, 0.0).unwrap();
    let b = freeze_at_state(&cs, &u, 0.0, 0.0).unwrap();
    let shifted_c1 = u.with_values(b.c1.clone()).shifted(shift);
    for (x, y) in a.c1.iter().zip(shifted_c1.values()) {
        assert!((x - y).norm() < 1e-12);
    }
}

#[test]
fn jets_conjugate_components() {
    let grid = Grid::new(1, 4.0, 32).unwrap();
    let u = gaussian(&grid, 1.0, 1.0, 0.0).scale(C64::new(0.3, 0.8));
    for j in jets(&u).unwrap() {
        assert_eq!(j.ubar, j.u.conj());
        assert_eq!(j.grad_ubar[0], j.grad_u[0].conj());
    }
}

#[test]
fn cube_decomposition_reconstructs() {
    let grid = Grid::new(1, 16.0, 256).unwrap();
    let part = CubePartition::unit(&grid).unwrap();
    let b = gaussian(&grid, 1.0, 2.0, 1.0);
    let dec = cube_decompose(b.values(), &part, DEFAULT_N_SMOOTH).unwrap();
    assert!(dec.reconstruction_error < 1e-12);
    assert!((dec.max_bump_norm - 1.0).abs() < 1e-12);
}

#[test]
fn zero_field_has_zero_weights() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let part = CubePartition::unit(&grid).unwrap();
    let dec = cube_decompose(&vec![C64::new(0.0, 0.0); grid.len()], &part, 2).unwrap();
    assert!(dec.weights.iter().all(|&w| w == 0.0));
}

#[test]
fn single_cube_support_touches_neighbours_only() {
    for dim in [1, 2] {
        let n = if dim == 1 { 128 } else { 32 };
        let grid = Grid::new(dim, 8.0, n).unwrap();
        let part = CubePartition::unit(&grid).unwrap();
        let c = part.cube_of(grid.len() / 2 + if dim == 1 { 0 } else { n / 2 });
        let members = part.members(c).to_vec();
        let mut b = vec![C64::new(0.0, 0.0); grid.len()];
        for &i in &members {
            b[i] = C64::new(1.0, 0.0);
        }
        let dec = cube_decompose(&b, &part, 1).unwrap();
        let nonzero = dec.weights.iter().filter(|&&w| w > 0.0).count();
        assert!(nonzero >= 1 && nonzero <= 3usize.pow(dim as u32), "dim {dim}: {nonzero}");
        for (mu, w) in dec.weights.iter().enumerate() {
            if *w > 0.0 {
                assert!(part.double_neighbours(c).contains(&mu));
            }
        }
    }
}

#[test]
fn inverse_quartic_reconstructs() {
    let grid = Grid::new(1, 16.0, 256).unwrap();
    let part = CubePartition::unit(&grid).unwrap();
    let b = StateField::from_fn(&grid, 0.0, |x| C64::new((1.0 + x[0] * x[0]).powi(-2), 0.0)).unwrap();
    let dec = cube_decompose(b.values(), &part, DEFAULT_N_SMOOTH).unwrap();
    // oracle: direct summation of the weighted bumps
    let mut sum = vec![C64::new(0.0, 0.0); grid.len()];
    for (w, bump) in dec.weights.iter().zip(&dec.bumps) {
        for (i, v) in bump {
            sum[*i] += v * w;
        }
    }
    let err = sum.iter().zip(b.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-8);
    assert!(dec.weight_sum.is_finite() && dec.ratio > 0.0);
}

#[test]
fn non_decaying_field_is_flagged() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let part = CubePartition::unit(&grid).unwrap();
    let b = vec![C64::new(1.0, 0.0); grid.len()];
    assert!(matches!(cube_decompose(&b, &part, 2), Err(QlsError::Precondition(_))));
}

#[test]
fn zero_state_freezes_to_zero_drift() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let cs = registry("quadratic-b1", 1, &FamilyParams::default()).unwrap();
    let fr = freeze_at_state(&cs, &StateField::zeros(&grid, 0.0), 0.0, 0.0).unwrap();
    assert!(fr.b1.iter().all(|b| b[0].norm() == 0.0));
    assert!(fr.a.iter().all(|a| a[0][0] == 1.0));
}

#[test]
fn constant_coefficients_freeze_to_constants() {
    let grid = Grid::new(1, 8.0, 64).unwrap();
    let cs = registry("flat", 1, &FamilyParams::default()).unwrap();
    let u = gaussian(&grid, 1.0, 1.0, 0.0);
    let fr = freeze_at_state(&cs, &u, 0.0, 0.1).unwrap();
    assert!(fr.a.iter().all(|a| a[0][0] == 1.0));
    assert!(fr.b1.iter().chain(&fr.b2).all(|b| b[0].norm() == 0.0));
    assert!(fr.a_t.unwrap().iter().all(|a| a[0][0] == 0.0));
}

#[test]
fn frozen_flatness_matches_pointwise_oracle() {
    let grid = Grid::new(1, 16.0, 256).unwrap();
    let p = FamilyParams {
        amplitude: 0.3,
        radius: 3.0,
        kappa: 0.5,
        ..Default::default()
    };
    let cs = registry("quasilinear-metric", 1, &p).unwrap();
    let u = gaussian(&grid, 0.8, 1.5, 0.0);
    let fr = freeze_at_state(&cs, &u, 0.0, 0.0).unwrap();
    let measured = fr.flatness_constant();
    let ua = |x: f64| 0.8 * (-(x / 1.5).powi(2)).exp();
    let a_of = |x: f64| {
        let v = C64::new(ua(x), 0.0);
        let z = Jet {
            u: v,
            ubar: v,
            ..Jet::ZERO
        };
        cs.a(&[x], 0.0, &z)[0][0]
    };
    let h = 1e-4;
    let oracle = (0..4000)
        .map(|i| -15.0 + 30.0 * i as f64 / 4000.0)
        .map(|x| {
            let d = (a_of(x + h) - a_of(x - h)) / (2.0 * h);
            (1.0 + x * x) * (1.0 - a_of(x)).abs().max(d.abs())
        })
        .fold(0.0, f64::max);
    assert!(measured <= 2.0 * oracle && oracle <= 2.0 * measured, "{measured} vs {oracle}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn decomposition_reconstructs_random_decaying(amp in 0.1f64..3.0, w in 0.8f64..2.0, c in -2.0f64..2.0) {
        let grid = Grid::new(1, 8.0, 128).unwrap();
        let part = CubePartition::unit(&grid).unwrap();
        let b = gaussian(&grid, amp, w, c);
        let dec = cube_decompose(b.values(), &part, 2).unwrap();
        prop_assert!(dec.reconstruction_error < 1e-12);
        prop_assert!(dec.max_bump_norm <= 1.0 + 1e-12);
    }
}

#[test]
fn flat_passes_linear_and_metric_validators() {
    let g = Grid::new(1, 16.0, 128).unwrap();
    let cs = registry("bump-metric", 1, &FamilyParams::default()).unwrap();
    let opts = FrozenValidationOptions::for_grid(&g);
    let fr = freeze_linear_coefficients(&cs, &g, 0.0).unwrap();
    let l = validate_linear(&fr, &opts);
    assert!(l.pass, "{l:?}");
    assert_eq!(l.entries.len(), 5);
    let d = validate_zero_state(&cs, &g, 0.0, &opts).unwrap();
    assert!(d.pass, "{d:?}");
    assert_eq!(d.entries.len(), 5);
}

#[test]
fn ring_trap_fails_d5() {
    let g = Grid::new(2, 4.0, 64).unwrap();
    let cs = registry("ring-trap", 2, &FamilyParams::default()).unwrap();
    let mut opts = FrozenValidationOptions::for_grid(&g);
    opts.rays = Some(qls_core::hamiltonian::ClassifyOptions {
        escape_radius: 3.0,
        s_budget: 50.0,
        ds: 1e-2,
        t: 0.0,
    });
    let d = validate_zero_state(&cs, &g, 0.0, &opts).unwrap();
    assert!(!d.entry("D5:nontrapping").unwrap().pass);
    assert!(d.entry("D3:elliptic").unwrap().pass);
}

#[test]
fn non_decaying_drift_fails_l4() {
    let g = Grid::new(1, 16.0, 128).unwrap();
    let cs = CoefficientSet::flat(1).with_b1(|_, _, _| [C64::new(0.5, 0.0), C64::new(0.0, 0.0)]);
    let fr = freeze_linear_coefficients(&cs, &g, 0.0).unwrap();
    let mut opts = FrozenValidationOptions::for_grid(&g);
    opts.rays = None;
    let l = validate_linear(&fr, &opts);
    let e = l.entry("L4:b1_cubes").unwrap();
    assert!(!e.pass && e.note.is_some());
}
