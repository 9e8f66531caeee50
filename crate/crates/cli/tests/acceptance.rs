//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use qls_cli::{run, Command, ExperimentConfig};
use qls_core::coeffs::{cube_decompose, freeze_linear_coefficients, registry, w1m_check, FamilyParams, Jet};
use qls_core::doi::{self, flat_bracket_identity, flat_escape_symbol, uncentered_symbol, verify_lower_bound};
use qls_core::hamiltonian::{
    classify_nontrapping, default_sample, integrate, integrate_ray, metric_symbol, quad_form, ClassifyOptions,
    FlatMetric, Metric, Profile, RadialMetric, RayStatus,
};
use qls_core::linear::{
    build_vector_system, diagonalize, evolve_with, run_apriori, wave_packet, LinearSystem, RemainderScheme,
    VectorField,
};
use qls_core::nonlinear::{
    failing_horizon, fit_nonlinear_bound, gaussian_data, picard_solve, picard_solve_from, vanishing_viscosity,
    InitialIterate, SolverConfig,
};
use qls_core::psido::{composition_remainder_sweep, garding_check, random_trials, QuantizedOperator};
use qls_core::symbols::{bracket_at, cutoff_theta, from_x, japanese_xi, xi_squared};
use qls_core::{CubePartition, Grid, StateField, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn re(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn flat_cs(dim: usize) -> qls_core::coeffs::CoefficientSet {
    registry("flat", dim, &FamilyParams::default()).unwrap()
}

fn exact_recovery() -> Outcome {
    let grid = Grid::new(1, 16.0, 256).map_err(e)?;
    let sys = LinearSystem::from_family(&flat_cs(1), &grid, 0.0).map_err(e)?;
    let m = 12;
    let u0 = StateField::plane_wave(&grid, [m, 0], 0.0);
    let k = m as f64 * grid.freq_spacing();
    let u1 = evolve_with(&sys, &u0, 1.0, 1e-3, |_| Ok(())).map_err(e)?;
    let phase = u1
        .values()
        .iter()
        .zip(u0.values())
        .map(|(a, b)| (a - b * C64::from_polar(1.0, -k * k)).norm())
        .fold(0.0, f64::max);
    let eps = 1e-3;
    let sys = LinearSystem::from_family(&flat_cs(1), &grid, eps).map_err(e)?;
    let m = 20;
    let u0 = StateField::plane_wave(&grid, [m, 0], 0.0);
    let k = m as f64 * grid.freq_spacing();
    let u1 = evolve_with(&sys, &u0, 1.0, 1e-2, |_| Ok(())).map_err(e)?;
    let decay = (u1.l2_norm() / u0.l2_norm() - (-eps * k.powi(4)).exp()).abs();
    Ok((
        phase < 1e-8 && decay < 1e-12,
        format!("phase error {phase:.2e} (< 1e-8), decay error {decay:.2e} (< 1e-12)"),
    ))
}

fn flow_correctness() -> Outcome {
    let m = RadialMetric::new(2, Profile::Gaussian { amplitude: 0.5, width: 1.0 });
    let (lo, hi) = (1.0, 1.5);
    let sample = default_sample(2, 3.0, 4, 6);
    let mut drift = 0.0f64;
    let mut back_err = 0.0f64;
    let mut sandwich_ok = true;
    for (x0, xi0) in &sample {
        let fwd = integrate(&m, *x0, *xi0, 1e-3, 10.0, None, true, 0.0).map_err(e)?;
        let h0 = quad_form(&m.value(x0, 0.0), xi0, xi0, 2);
        drift = drift.max(fwd.h_drift / h0);
        let n0 = xi0[0] * xi0[0] + xi0[1] * xi0[1];
        for st in &fwd.states {
            let n2 = st.xi[0] * st.xi[0] + st.xi[1] * st.xi[1];
            sandwich_ok &= n2 >= n0 * lo / hi * (1.0 - 1e-9) && n2 <= n0 * hi / lo * (1.0 + 1e-9);
        }
        let end = fwd.states.last().unwrap();
        let back = integrate_ray(&m, end.x, end.xi, -1e-3, 10.0).map_err(e)?;
        let st = back.last().unwrap();
        let err = (0..2).map(|i| (st.x[i] - x0[i]).abs() + (st.xi[i] - xi0[i]).abs()).sum::<f64>();
        back_err = back_err.max(err);
    }
    Ok((
        drift < 1e-8 && back_err < 1e-6 && sandwich_ok,
        format!(
            "{} rays: relative h drift {drift:.2e} (< 1e-8), reversal error {back_err:.2e} (< 1e-6), sandwich {}",
            sample.len(),
            if sandwich_ok { "held" } else { "violated" }
        ),
    ))
}

fn nontrapping_classification() -> Outcome {
    let opts = ClassifyOptions {
        escape_radius: 4.0,
        s_budget: 50.0,
        ds: 1e-2,
        t: 0.0,
    };
    let sample = default_sample(2, 4.0, 8, 16);
    let flat = classify_nontrapping(&FlatMetric { dim: 2 }, &sample, &opts);
    let bump_cs = registry(
        "bump-metric",
        2,
        &FamilyParams {
            amplitude: 0.1,
            radius: 2.0,
            ..Default::default()
        },
    )
    .map_err(e)?;
    let bump = classify_nontrapping(&bump_cs.zero_state_metric(), &sample, &opts);
    let ring_cs = registry("ring-trap", 2, &FamilyParams::default()).map_err(e)?;
    let ring_m = ring_cs.zero_state_metric();
    let ropts = ClassifyOptions {
        escape_radius: 3.0,
        ..opts
    };
    let ring = classify_nontrapping(&ring_m, &default_sample(2, 3.0, 8, 16), &ropts);
    // oracle: a quarter step and twice the budget must still not escape
    let confirmed = ring
        .rays
        .par_iter()
        .filter(|r| r.status == RayStatus::Undetermined)
        .filter(|r| {
            let f = integrate(&ring_m, r.x0, r.xi0, 2.5e-3, 100.0, Some(3.0), false, 0.0);
            let b = integrate(&ring_m, r.x0, r.xi0, -2.5e-3, 100.0, Some(3.0), false, 0.0);
            matches!((f, b), (Ok(f), Ok(b)) if f.exit_time.is_none() || b.exit_time.is_none())
        })
        .count();
    let pass = flat.nontrapping_on_sample && bump.nontrapping_on_sample && !ring.nontrapping_on_sample && confirmed > 0;
    Ok((
        pass,
        format!(
            "flat {}/{} escape, bump {}/{} escape, ring verdict {} with {} undetermined ({confirmed} confirmed by oracle)",
            flat.rays.len() - flat.undetermined - flat.failed,
            flat.rays.len(),
            bump.rays.len() - bump.undetermined - bump.failed,
            bump.rays.len(),
            if ring.nontrapping_on_sample { "nontrapping" } else { "not-nontrapping" },
            ring.undetermined
        ),
    ))
}

fn doi_bounds() -> Outcome {
    let r2 = flat_escape_symbol(2, 1.0).map_err(e)?;
    let h2 = xi_squared(2);
    let sample2 = doi::default_sample(2, 8.0, 1.0, doi::DEFAULT_XI_MAX);
    let identity_err = sample2
        .xs
        .par_iter()
        .map(|x| {
            sample2
                .xis
                .iter()
                .filter(|xi| f64::hypot(xi[0], xi[1]) >= 2.0)
                .map(|xi| {
                    let got = bracket_at(&h2, &r2.symbol, x, xi, 0.0).re;
                    let want = flat_bracket_identity(x, xi, 1.0);
                    (got - want).abs() / want.abs().max(1.0)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let half = 32.0;
    let r = flat_escape_symbol(1, 1.0).map_err(e)?;
    let sample = doi::default_sample(1, half, 1.0, doi::DEFAULT_XI_MAX);
    let lower = verify_lower_bound(&xi_squared(1), &r.symbol, &sample, 2.0).map_err(e)?;
    let bump = registry("bump-metric", 1, &FamilyParams::default()).map_err(e)?;
    let h = metric_symbol(Arc::new(bump.zero_state_metric()));
    let mu = [half / 4.0, 0.0];
    let u = uncentered_symbol(&r, &r, mu, &h, 32, &sample, 2.0).map_err(e)?;
    let pass = identity_err < 1e-10 && lower.b_star >= 0.9 && u.report.c1 > 0.0;
    Ok((
        pass,
        format!(
            "relative identity error {identity_err:.2e} (< 1e-10), flat B* = {:.4} (>= 0.9), bump at x_mu = {}: N = {}, C1 = {:.4}",
            lower.b_star, mu[0], u.symbol.n_weight, u.report.c1
        ),
    ))
}

fn quantization_calculus() -> Outcome {
    let mut fast_err = 0.0f64;
    for dim in [1, 2] {
        let g = Grid::new(dim, 2.0, if dim == 1 { 64 } else { 16 }).map_err(e)?;
        let f = random_trials(&g, 1, 3, None).remove(0);
        let q = japanese_xi(dim, 1.5);
        let fast = QuantizedOperator::new(q.clone(), &g).apply(&f).map_err(e)?;
        let slow = QuantizedOperator::general(q, &g).apply(&f).map_err(e)?;
        fast_err = fast_err.max(fast.sub(&slow).l2_norm() / fast.l2_norm());
        let a = from_x(dim, "cos", |x, _| re(2.0 + x[0].cos()), |x, _| [re(-x[0].sin()), re(0.0)]);
        let fast = QuantizedOperator::new(a.clone(), &g).apply(&f).map_err(e)?;
        let slow = QuantizedOperator::general(a, &g).apply(&f).map_err(e)?;
        fast_err = fast_err.max(fast.sub(&slow).l2_norm() / fast.l2_norm());
    }
    let g = Grid::new(1, 8.0, 512).map_err(e)?;
    let a = from_x(1, "smooth", |x, _| re(1.0 + 0.5 * (-x[0] * x[0] / 4.0).exp()), |x, _| {
        [re(-0.25 * x[0] * (-x[0] * x[0] / 4.0).exp()), re(0.0)]
    });
    let dk = g.freq_spacing();
    let modes: Vec<i64> = [4.0, 8.0, 16.0, 32.0, 64.0].iter().map(|k| (k / dk).round() as i64).collect();
    let sweep = composition_remainder_sweep(&a, &japanese_xi(1, 1.0), &g, &modes).map_err(e)?;
    let gg = Grid::new(1, 4.0, 64).map_err(e)?;
    let trials = random_trials(&gg, 8, 6, None);
    let gard = garding_check(&xi_squared(1).mul(&cutoff_theta(1, 2.0)), &gg, &trials, 1.0).map_err(e)?;
    let c = gard.measured("fitted_C").unwrap_or(f64::NAN);
    Ok((
        fast_err < 1e-10 && sweep.exponent < 0.5 && gard.pass,
        format!(
            "fast path error {fast_err:.2e} (< 1e-10), composition exponent {:.3} (< 0.5), Garding {} with C = {c:.3e}",
            sweep.exponent,
            if gard.pass { "passes" } else { "fails" }
        ),
    ))
}

fn diagonalization() -> Outcome {
    let grid = Grid::new(1, std::f64::consts::PI, 256).map_err(e)?;
    let cs = flat_cs(1).with_b2(|_, _, _| [C64::new(0.8, -0.4), C64::new(0.0, 0.0)]);
    let fr = freeze_linear_coefficients(&cs, &grid, 0.0).map_err(e)?;
    let vs = build_vector_system(&LinearSystem::frozen(fr, 0.0).map_err(e)?, 0.0).map_err(e)?;
    let dg = diagonalize(&vs, None).map_err(e)?;
    let res = dg.antidiagonal_sweep(&[4, 8, 16, 32, 64], true).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials: Vec<VectorField> = (0..4).map(|_| VectorField::random(&grid, &mut rng, None)).collect();
    let rt = dg.roundtrip_residual(&trials).map_err(e)?;
    Ok((
        res.exponent < 0.5 && rt < 1e-8,
        format!("residual exponent {:.3} (< 0.5), Λ⁻¹Λ residual {rt:.2e} (< 1e-8)", res.exponent),
    ))
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(0.0, f64::max);
    hi / lo
}

fn apriori_estimate() -> Outcome {
    // 1-D bump: non-trapping, sweep ε at k = 8 and k at ε = 1e-4
    let g1 = Grid::new(1, 16.0, 1024).map_err(e)?;
    let part1 = CubePartition::unit(&g1).map_err(e)?;
    let bump = registry("bump-metric", 1, &FamilyParams::default()).map_err(e)?;
    let one = |eps: f64, k: f64| -> Result<f64, String> {
        let sys = LinearSystem::from_family(&bump, &g1, eps).map_err(e)?;
        let u0 = wave_packet(&g1, [-4.0, 0.0], [k, 0.0], 1.0).map_err(e)?;
        Ok(run_apriori(&sys, &u0, &part1, 0.25, 2e-4).map_err(e)?.fitted_a)
    };
    let eps_a: Vec<f64> = [1e-2, 1e-3, 1e-4].par_iter().map(|&eps| one(eps, 8.0)).collect::<Result<_, _>>()?;
    let k_a: Vec<f64> = [8.0, 16.0, 32.0].par_iter().map(|&k| one(1e-4, k)).collect::<Result<_, _>>()?;

    // 2-D: absorbing layer near the box edge; flat is non-trapping, the ring traps
    let g2 = Grid::new(2, 4.0, 128).map_err(e)?;
    let part2 = CubePartition::unit(&g2).map_err(e)?;
    let sp = FamilyParams {
        sponge_strength: 20.0,
        sponge_start: 2.7,
        sponge_width: 1.0,
        ..Default::default()
    };
    let ring = registry("ring-trap", 2, &sp).map_err(e)?;
    let flat = registry("flat", 2, &sp).map_err(e)?;
    let jobs: Vec<(usize, f64)> = [0, 1].iter().flat_map(|&c| [8.0, 16.0, 32.0].map(|k| (c, k))).collect();
    let two: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, k)| -> Result<f64, String> {
            let cs = if c == 0 { &flat } else { &ring };
            let sys = LinearSystem::from_family(cs, &g2, 1e-7).map_err(e)?.with_scheme(RemainderScheme::Rk4);
            let u0 = wave_packet(&g2, [1.65, 0.0], [0.0, k], 0.3).map_err(e)?;
            Ok(run_apriori(&sys, &u0, &part2, 1.0, 1e-3).map_err(e)?.fitted_a)
        })
        .collect::<Result<_, _>>()?;
    let (flat_a, ring_a) = (&two[..3], &two[3..]);
    let monotone = ring_a.windows(2).all(|w| w[1] > w[0]);
    let pass = spread(&eps_a) <= 2.0 && spread(&k_a) <= 2.0 && spread(flat_a) <= 2.0 && monotone;
    let f = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join("/");
    Ok((
        pass,
        format!(
            "bump A over ε {} and over k {}, 2-D flat A over k {} (all within ×2), ring A over k {} ({})",
            f(&eps_a),
            f(&k_a),
            f(flat_a),
            f(ring_a),
            if monotone { "monotone" } else { "not monotone" }
        ),
    ))
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

fn contraction() -> Outcome {
    let g = Grid::new(1, 16.0, 128).map_err(e)?;
    let cubic = registry("cubic-semilinear", 1, &FamilyParams::default()).map_err(e)?;
    let u0 = gaussian_data(&g, re(0.3), 2.0, [0.0, 0.0]).map_err(e)?;
    let sol = picard_solve(&cubic, &small_cfg(), &u0).map_err(e)?;
    let max_ratio = sol.contraction_log.iter().cloned().fold(0.0, f64::max);

    let ql = registry("quasilinear-metric", 1, &FamilyParams::default()).map_err(e)?;
    let v0 = gaussian_data(&g, C64::new(0.4, 0.1), 2.0, [1.0, 0.0]).map_err(e)?;
    let cfg = small_cfg();
    let a = picard_solve_from(&ql, &cfg, &v0, InitialIterate::SemigroupTail).map_err(e)?;
    let b = picard_solve_from(&ql, &cfg, &v0, InitialIterate::Constant).map_err(e)?;
    let gap = a
        .trajectory
        .frames()
        .iter()
        .zip(b.trajectory.frames())
        .map(|(x, y)| x.sub(y).sobolev_norm(cfg.s).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);

    // broadband data: smooth data never excites the frequencies (εT)^{-1/4}
    // where the contraction is lost
    let gf = Grid::new(1, 8.0, 256).map_err(e)?;
    let flat = flat_cs(1);
    let rough = random_trials(&gf, 1, 3, None).remove(0);
    let w0 = rough.scale(re(1.0 / rough.sobolev_norm(4.0).map_err(e)?));
    let (e1, e2) = (1e-2, 2.5e-3);
    let horizons: Vec<f64> = [e1, e2]
        .par_iter()
        .map(|&eps| {
            let cfg = SolverConfig {
                epsilon: eps,
                ..small_cfg()
            };
            failing_horizon(&flat, &cfg, &w0, eps / 64.0, 256, 8).map_err(e)
        })
        .collect::<Result<_, _>>()?;
    let ratio = horizons[0] / horizons[1];
    let predicted = (e1 / e2).sqrt();
    let exponent = ratio.ln() / (e1 / e2).ln();
    let within = ratio / predicted <= 4.0 && predicted / ratio <= 4.0;
    let pass = max_ratio < 1.0 && gap < 10.0 * cfg.picard_tol && within;
    Ok((
        pass,
        format!(
            "max ratio {max_ratio:.3} (< 1), iterate gap {gap:.2e} (< {:.0e}), failing T {:.3e}/{:.3e}: ratio {ratio:.2} vs ε^1/2 prediction {predicted:.2} (within ×4), fitted exponent {exponent:.2}",
            10.0 * cfg.picard_tol,
            horizons[0],
            horizons[1]
        ),
    ))
}

fn nonlinear_bound() -> Outcome {
    let g = Grid::new(1, 16.0, 128).map_err(e)?;
    let ql = registry("quasilinear-metric", 1, &FamilyParams::default()).map_err(e)?;
    let pairs: Vec<_> = [(0.5, 2.0, 0.0), (0.3, 1.5, 1.0), (0.4, 3.0, -2.0)]
        .iter()
        .map(|&(a, w, c)| -> Result<_, String> {
            Ok((
                gaussian_data(&g, re(a), w, [c, 0.0]).map_err(e)?,
                gaussian_data(&g, re(1.0), 1.5, [1.0, 0.0]).map_err(e)?,
            ))
        })
        .collect::<Result<_, _>>()?;
    let fit = fit_nonlinear_bound(&ql, &pairs, &[0.25, 0.5, 1.0, 2.0], 4.0).map_err(e)?;
    Ok((
        fit.max_violation < 0.25,
        format!(
            "C = {:.3e}, P = {}, max relative violation {:.3} (< 0.25) over {} samples",
            fit.c,
            fit.p,
            fit.max_violation,
            fit.samples.len()
        ),
    ))
}

fn vanishing_viscosity_limit() -> Outcome {
    let g = Grid::new(1, 16.0, 128).map_err(e)?;
    let cubic = registry("cubic-semilinear", 1, &FamilyParams::default()).map_err(e)?;
    let u0 = gaussian_data(&g, re(0.3), 1.0, [0.0, 0.0]).map_err(e)?;
    let cfg = SolverConfig {
        t_end: 2.5e-3,
        ..small_cfg()
    };
    let rep = vanishing_viscosity(&cubic, &cfg, &u0, 0.02, &[1e-2, 5e-3, 2.5e-3, 1.25e-3]).map_err(e)?;
    Ok((
        (0.8..=1.2).contains(&rep.slope) && rep.monotone_hs1,
        format!(
            "Cauchy slope {:.3} (in [0.8, 1.2]), H^(s-1) differences {}",
            rep.slope,
            if rep.monotone_hs1 { "monotone decreasing" } else { "not monotone" }
        ),
    ))
}

fn cube_decomposition() -> Outcome {
    let grid = Grid::new(1, 32.0, 256).map_err(e)?;
    let part = CubePartition::unit(&grid).map_err(e)?;
    let mut corpus: Vec<(f64, f64, f64)> = Vec::new();
    for w in [4.0, 5.0, 6.0, 8.0] {
        for (amp, c) in [(1.0, 0.0), (0.1, 1.5), (3.0, -2.25)] {
            corpus.push((amp, w, c));
        }
    }
    let mut ratios = Vec::new();
    let mut recon = 0.0f64;
    for &(amp, w, c) in &corpus {
        let b = StateField::from_fn(&grid, 0.0, |x| re(amp * (-((x[0] - c) / w).powi(2)).exp())).map_err(e)?;
        let d = cube_decompose(b.values(), &part, 4).map_err(e)?;
        recon = recon.max(d.reconstruction_error);
        ratios.push(d.ratio);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let dev = ratios.iter().map(|r| (r / mean - 1.0).abs()).fold(0.0, f64::max);

    let g2 = Grid::new(1, 16.0, 128).map_err(e)?;
    let u = gaussian_data(&g2, re(0.5), 1.5, [0.0, 0.0]).map_err(e)?;
    let rule = |z: &Jet| z.u * z.u + z.grad_u[0] * z.ubar;
    let base = w1m_check(&rule, &u, 2).map_err(e)?;
    let mut scale_err = 0.0f64;
    for lambda in [0.1, 0.25, 0.5] {
        let v = u.scale(re(lambda));
        let got = w1m_check(&rule, &v, 2).map_err(e)?;
        scale_err = scale_err.max((got / (lambda * lambda * base) - 1.0).abs());
    }
    Ok((
        recon < 1e-8 && dev <= 0.2 && scale_err <= 0.1,
        format!(
            "reconstruction {recon:.2e} (< 1e-8), weight ratio mean {mean:.2} max deviation {:.1}% (<= 20%) over {} fields, λ² scaling error {:.1e} (<= 10%)",
            100.0 * dev,
            corpus.len(),
            scale_err
        ),
    ))
}

fn determinism() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("qls-acceptance-{}", std::process::id()));
    let cfg: ExperimentConfig = qls_cli::parse_configs(
        r#"{"grid": {"dim": 1, "half_length": 8.0, "points": 64}, "family": "quasilinear-metric", "seed": 11,
            "solve": {"solver": {"s": 4.0, "m0": 20.0, "t_end": 4e-3}, "horizon": 8e-3},
            "verify": {"ray_positions": 4, "ray_directions": 4}}"#,
    )
    .map_err(e)?
    .remove(0);
    let mut identical = true;
    let mut files = 0;
    for (cmd, file) in [(Command::Solve, "solve.json"), (Command::Verify, "verify.json"), (Command::Doi, "doi.json")] {
        let (a, b) = (tmp.join("a"), tmp.join("b"));
        run(cmd, &cfg, &a).map_err(e)?;
        run(cmd, &cfg, &b).map_err(e)?;
        for f in [file, qls_cli::RESOLVED_CONFIG] {
            identical &= std::fs::read(a.join(f)).map_err(e)? == std::fs::read(b.join(f)).map_err(e)?;
            files += 1;
        }
    }
    let _ = std::fs::remove_dir_all(&tmp);
    Ok((identical, format!("{files} report pairs compared, {}", if identical { "byte-identical" } else { "differ" })))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("exact-solution recovery", exact_recovery),
        ("flow correctness", flow_correctness),
        ("non-trapping classification", nontrapping_classification),
        ("escape-function bounds", doi_bounds),
        ("quantization calculus", quantization_calculus),
        ("diagonalization", diagonalization),
        ("a-priori estimate", apriori_estimate),
        ("contraction", contraction),
        ("nonlinear bound fit", nonlinear_bound),
        ("vanishing viscosity", vanishing_viscosity_limit),
        ("cube decomposition", cube_decomposition),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = match f() {
            Ok(v) => v,
            Err(msg) => (false, format!("error: {msg}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {:<28} {} ({:.1}s): {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
