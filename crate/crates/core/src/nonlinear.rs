//! Artificial-viscosity solver: Picard iteration on the Duhamel map,
//! continuation in time, the `J^{2m}` hierarchy and the vanishing viscosity
//! limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::{apply_nonlinear_operator, freeze_at_state, nonlinear_rhs, CoefficientSet};
use crate::error::{QlsError, Result};
use crate::grid::{CubePartition, Grid, StateField, Trajectory, C64};
use crate::linear::{run_apriori, step_count, LinearSystem};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub s: f64,
    pub m0: f64,
    pub epsilon: f64,
    /// Window length `T_ε` of one Picard solve.
    pub t_end: f64,
    pub dt: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            s: 6.0,
            m0: 10.0,
            epsilon: 1e-2,
            t_end: 5e-3,
            dt: 2.5e-4,
            picard_tol: 1e-10,
            picard_max: 60,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QlsError::InvalidConfig(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon = {} must be > 0", self.epsilon));
        }
        if !(self.t_end > 0.0 && self.dt > 0.0 && self.dt <= self.t_end) {
            return bad(format!("need 0 < dt <= T (dt = {}, T = {})", self.dt, self.t_end));
        }
        if !(self.m0 > 0.0) || !(self.picard_tol > 0.0) || self.picard_max == 0 {
            return bad("M0, picard_tol and picard_max must be positive".into());
        }
        if !(-10.0..=10.0).contains(&self.s) {
            return bad(format!("s = {} outside [-10, 10]", self.s));
        }
        Ok(())
    }
}

/// Exact hyperviscous semigroup `e^{−ετΔ²}`.
pub fn semigroup(u: &StateField, eps: f64, tau: f64) -> Result<StateField> {
    let v = u.grid().apply_multiplier(u.values(), |_, k| {
        let k2 = k[0] * k[0] + k[1] * k[1];
        C64::new((-eps * tau * k2 * k2).exp(), 0.0)
    })?;
    Ok(u.with_values(v))
}

/// `λ = ‖v₀‖_{H^s} + ∫₀¹‖f‖_{H^s}` (trapezoid with 64 intervals).
pub fn data_size(cs: &CoefficientSet, v0: &StateField, s: f64) -> Result<f64> {
    let g = v0.grid();
    let d = g.dim();
    let n = 64;
    let norms: Vec<f64> = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let f: Vec<C64> = (0..g.len()).map(|j| cs.f(&g.point(j)[..d], t)).collect();
            g.sobolev_norm_values(&f, s)
        })
        .collect::<Result<_>>()?;
    let integral = norms.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / n as f64;
    Ok(v0.sobolev_norm(s)? + integral)
}

/// `Γv(t_n) = e^{−εt_nΔ²}v₀ + ∫₀^{t_n} e^{−ε(t_n−t′)Δ²}(𝓛(v)v + f)(t′)dt′` by
/// trapezoid on the frames of `v` with exact semigroup factors.
pub fn duhamel_map(cs: &CoefficientSet, v: &Trajectory, v0: &StateField, eps: f64) -> Result<Trajectory> {
    if v.grid() != v0.grid() {
        return Err(QlsError::GridMismatch);
    }
    let g: Vec<StateField> = v
        .frames()
        .par_iter()
        .map(|f| nonlinear_rhs(cs, f, f.time(), 0.0))
        .collect::<Result<_>>()?;
    let dt = v.dt();
    let t0 = v.start_time();
    let mut out = Vec::with_capacity(v.len());
    let mut cur = v0.clone().with_time(t0);
    out.push(cur.clone());
    for n in 1..v.len() {
        let pushed = cur.axpy(C64::new(0.5 * dt, 0.0), &g[n - 1]);
        cur = semigroup(&pushed, eps, dt)?
            .axpy(C64::new(0.5 * dt, 0.0), &g[n])
            .with_time(t0 + n as f64 * dt);
        out.push(cur.clone());
    }
    Trajectory::new(out, dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialIterate {
    /// `v⁰(t) = e^{−εtΔ²}v₀`.
    SemigroupTail,
    /// `v⁰(t) = v₀`.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyTable {
    pub s: f64,
    pub times: Vec<f64>,
    /// `levels[m][i] = ‖J^{2m}u(t_i)‖₂`.
    pub levels: Vec<Vec<f64>>,
    /// `log(level(T)/level(0))` per level.
    pub growth: Vec<f64>,
    /// `max_{m,t} level_{m+1}/level_m`.
    pub max_step_ratio: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViscousSolution {
    #[serde(skip)]
    pub trajectory: Trajectory,
    pub epsilon: f64,
    pub iterations: usize,
    pub contraction_log: Vec<f64>,
    pub increments: Vec<f64>,
    pub fixed_point_residual: f64,
    pub sup_hs: f64,
    pub hierarchy: HierarchyTable,
}

fn sup_hs_diff(a: &Trajectory, b: &Trajectory, s: f64) -> Result<f64> {
    a.frames()
        .par_iter()
        .zip(b.frames())
        .map(|(x, y)| x.sub(y).sobolev_norm(s))
        .try_reduce(|| 0.0, |p, q| Ok(p.max(q)))
}

fn sup_hs(a: &Trajectory, s: f64) -> Result<f64> {
    a.frames()
        .par_iter()
        .map(|x| x.sobolev_norm(s))
        .try_reduce(|| 0.0, |p, q| Ok(p.max(q)))
}

fn initial_iterate(v0: &StateField, eps: f64, t_end: f64, dt: f64, kind: InitialIterate) -> Result<Trajectory> {
    let (steps, dt) = step_count(t_end, dt)?;
    let t0 = v0.time();
    let frames = (0..=steps)
        .map(|n| {
            let t = n as f64 * dt;
            match kind {
                InitialIterate::SemigroupTail => semigroup(v0, eps, t).map(|f| f.with_time(t0 + t)),
                InitialIterate::Constant => Ok(v0.clone().with_time(t0 + t)),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(frames, dt)
}

/// Relative size of increments that count as rounding noise.
pub const ROUNDOFF_FLOOR: f64 = 1e-13;

fn top_frequency_weight(u: &StateField, s: f64) -> f64 {
    let g = u.grid();
    let k = g.k_max();
    (1.0 + g.dim() as f64 * k * k).powf(s.max(0.0) / 2.0)
}

/// Consecutive ratios `r_n >= 1` that abort the iteration.
pub const NON_CONTRACTING_RUN: usize = 3;

pub fn picard_solve(cs: &CoefficientSet, cfg: &SolverConfig, v0: &StateField) -> Result<ViscousSolution> {
    picard_solve_from(cs, cfg, v0, InitialIterate::SemigroupTail)
}

pub fn picard_solve_from(
    cs: &CoefficientSet,
    cfg: &SolverConfig,
    v0: &StateField,
    start: InitialIterate,
) -> Result<ViscousSolution> {
    cfg.validate()?;
    let lambda = data_size(cs, v0, cfg.s)?;
    if !(cfg.m0 > 2.0 * lambda) {
        return Err(QlsError::Precondition(format!(
            "M0 = {} must exceed 2*lambda = {}",
            cfg.m0,
            2.0 * lambda
        )));
    }
    let mut v = initial_iterate(v0, cfg.epsilon, cfg.t_end, cfg.dt, start)?;
    let mut ratios = Vec::new();
    let mut increments = Vec::new();
    let mut bad_run = 0;
    for it in 1..=cfg.picard_max {
        let next = duhamel_map(cs, &v, v0, cfg.epsilon)?;
        let diff = sup_hs_diff(&next, &v, cfg.s)?;
        if !diff.is_finite() {
            return Err(QlsError::NonFinite(format!("Picard increment at iteration {it}")));
        }
        let floor = ROUNDOFF_FLOOR * top_frequency_weight(v0, cfg.s) * sup_hs(&next, 0.0)?;
        if let Some(&prev) = increments.last() {
            let r = if prev > 0.0 { diff / prev } else { 0.0 };
            ratios.push(r);
            bad_run = if r >= 1.0 && diff > floor { bad_run + 1 } else { 0 };
            if bad_run >= NON_CONTRACTING_RUN {
                return Err(QlsError::NotContracting { ratios });
            }
        }
        increments.push(diff);
        v = next;
        if diff < cfg.picard_tol.max(floor) {
            let residual = sup_hs_diff(&duhamel_map(cs, &v, v0, cfg.epsilon)?, &v, cfg.s)?;
            let sup = sup_hs(&v, cfg.s)?;
            if sup > cfg.m0 {
                return Err(QlsError::OutsideSolutionBall { norm: sup, m0: cfg.m0 });
            }
            let hierarchy = hierarchy_norms(&v, cfg.s)?;
            return Ok(ViscousSolution {
                trajectory: v,
                epsilon: cfg.epsilon,
                iterations: it,
                contraction_log: ratios,
                increments,
                fixed_point_residual: residual,
                sup_hs: sup,
                hierarchy,
            });
        }
    }
    Err(QlsError::PicardNotConverged {
        iterations: cfg.picard_max,
        last: increments.last().copied().unwrap_or(f64::NAN),
    })
}

/// `‖J^{2m}u(t)‖₂` for `m = 0..=s/2`.
pub fn hierarchy_norms(u: &Trajectory, s: f64) -> Result<HierarchyTable> {
    if s < 0.0 || s.fract() != 0.0 || (s as i64) % 2 != 0 {
        return Err(QlsError::Precondition(format!("hierarchy needs an even s, got {s}")));
    }
    let top = (s / 2.0) as usize;
    let per_frame: Vec<Vec<f64>> = u
        .frames()
        .par_iter()
        .map(|f| (0..=top).map(|m| f.sobolev_norm(2.0 * m as f64)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let levels: Vec<Vec<f64>> = (0..=top).map(|m| per_frame.iter().map(|r| r[m]).collect()).collect();
    let growth = levels
        .iter()
        .map(|l| {
            let (a, b) = (l[0], *l.last().expect("non-empty"));
            if a > 0.0 && b > 0.0 {
                (b / a).ln()
            } else {
                0.0
            }
        })
        .collect();
    let mut max_step_ratio = 0.0f64;
    for m in 0..top {
        for (lo, hi) in levels[m].iter().zip(&levels[m + 1]) {
            if *lo > 0.0 {
                max_step_ratio = max_step_ratio.max(hi / lo);
            }
        }
    }
    let finite = levels.iter().flatten().all(|v| v.is_finite());
    Ok(HierarchyTable {
        s,
        times: u.frames().iter().map(|f| f.time()).collect(),
        levels,
        growth,
        max_step_ratio,
        finite,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowRecord {
    pub t_start: f64,
    pub length: f64,
    pub iterations: usize,
    pub max_ratio: f64,
    pub norm_at_start: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apriori_a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationReport {
    pub solution: ViscousSolution,
    pub windows: Vec<WindowRecord>,
    /// Time reached: `T_target` or the first gate violation.
    pub horizon: f64,
    pub gate_violation: Option<f64>,
    pub gate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub max_halvings: usize,
    /// Fit the linear smoothing constant of the frozen system per window.
    pub record_apriori: bool,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            max_halvings: 6,
            record_apriori: false,
        }
    }
}

/// Chains Picard windows while `‖u(kT_ε)‖_{H^s} <= M₀/4` at each restart.
pub fn continuation_solve(
    cs: &CoefficientSet,
    cfg: &SolverConfig,
    u0: &StateField,
    t_target: f64,
    opts: &ContinuationOptions,
) -> Result<ContinuationReport> {
    cfg.validate()?;
    let gate = cfg.m0 / 4.0;
    let (_, dt) = step_count(cfg.t_end, cfg.dt)?;
    let mut frames: Vec<StateField> = vec![u0.clone()];
    let mut windows = Vec::new();
    let mut ratios = Vec::new();
    let mut increments = Vec::new();
    let mut iterations = 0;
    let mut residual = 0.0f64;
    let mut gate_violation = None;
    let mut t = u0.time();
    let end = u0.time() + t_target;
    let mut window = cfg.t_end;
    while t < end - 1e-12 * end.abs().max(1.0) {
        let start = frames.last().expect("non-empty").clone();
        let norm = start.sobolev_norm(cfg.s)?;
        if !windows.is_empty() && norm > gate {
            gate_violation = Some(t);
            break;
        }
        let len = window.min(end - t);
        let steps = (len / dt).round().max(1.0);
        let wcfg = SolverConfig {
            t_end: steps * dt,
            dt,
            ..*cfg
        };
        let sol = match picard_solve(cs, &wcfg, &start) {
            Ok(sol) => sol,
            Err(QlsError::NotContracting { .. } | QlsError::PicardNotConverged { .. })
                if window / 2.0 >= dt && windows.len() < usize::MAX && halvings(cfg.t_end, window) < opts.max_halvings =>
            {
                window /= 2.0;
                continue;
            }
            Err(e) => {
                if windows.is_empty() {
                    return Err(e);
                }
                gate_violation = Some(t);
                break;
            }
        };
        let apriori_a = if opts.record_apriori {
            let fr = freeze_at_state(cs, &start, t, cfg.epsilon)?;
            let sys = LinearSystem::frozen(fr, cfg.epsilon)?;
            let part = CubePartition::unit(start.grid())?;
            Some(run_apriori(&sys, &start, &part, wcfg.t_end, dt)?.fitted_a)
        } else {
            None
        };
        windows.push(WindowRecord {
            t_start: t,
            length: wcfg.t_end,
            iterations: sol.iterations,
            max_ratio: sol.contraction_log.iter().copied().fold(0.0, f64::max),
            norm_at_start: norm,
            apriori_a,
        });
        iterations += sol.iterations;
        residual = residual.max(sol.fixed_point_residual);
        ratios.extend(sol.contraction_log.iter().copied());
        increments.extend(sol.increments.iter().copied());
        t += wcfg.t_end;
        let mut fr = sol.trajectory.into_frames();
        fr.remove(0);
        frames.extend(fr);
    }
    // re-time frames on the uniform lattice to absorb rounding
    let t0 = u0.time();
    let frames: Vec<StateField> = frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| f.with_time(t0 + i as f64 * dt))
        .collect();
    let horizon = (frames.len() - 1) as f64 * dt;
    let trajectory = Trajectory::new(frames, dt)?;
    let sup = sup_hs(&trajectory, cfg.s)?;
    let hierarchy = hierarchy_norms(&trajectory, cfg.s)?;
    Ok(ContinuationReport {
        solution: ViscousSolution {
            trajectory,
            epsilon: cfg.epsilon,
            iterations,
            contraction_log: ratios,
            increments,
            fixed_point_residual: residual,
            sup_hs: sup,
            hierarchy,
        },
        windows,
        horizon,
        gate_violation,
        gate,
    })
}

fn halvings(base: f64, current: f64) -> usize {
    (base / current).log2().round().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishingReport {
    pub eps_list: Vec<f64>,
    pub horizon: f64,
    pub eps_gaps: Vec<f64>,
    /// `sup_t‖u^ε − u^{ε′}‖₂` for consecutive pairs.
    pub cauchy_l2: Vec<f64>,
    pub slope: f64,
    pub hs_bounds: Vec<f64>,
    /// `H^{s−1}` bounds from `‖w‖_{s−1} <= ‖w‖₀^{1/s}‖w‖_s^{1−1/s}`.
    pub hs1_diffs: Vec<f64>,
    pub monotone_l2: bool,
    pub monotone_hs1: bool,
    pub limit_epsilon: f64,
}

/// Independent continuation runs over `eps_list` on a common horizon.
pub fn vanishing_viscosity(
    cs: &CoefficientSet,
    base: &SolverConfig,
    u0: &StateField,
    t_target: f64,
    eps_list: &[f64],
) -> Result<VanishingReport> {
    if eps_list.len() < 2 {
        return Err(QlsError::InvalidConfig("need at least two viscosities".into()));
    }
    let runs: Vec<ContinuationReport> = eps_list
        .par_iter()
        .map(|&eps| {
            let cfg = SolverConfig { epsilon: eps, ..*base };
            continuation_solve(cs, &cfg, u0, t_target, &ContinuationOptions::default())
        })
        .collect::<Result<_>>()?;
    let horizon = runs.iter().map(|r| r.horizon).fold(f64::INFINITY, f64::min);
    let len = runs.iter().map(|r| r.solution.trajectory.len()).min().unwrap_or(0);
    let s = base.s;
    let hs_bounds: Vec<f64> = runs.iter().map(|r| r.solution.sup_hs).collect();
    let mut eps_gaps = Vec::new();
    let mut cauchy = Vec::new();
    let mut hs1 = Vec::new();
    for i in 0..runs.len() - 1 {
        let a = runs[i].solution.trajectory.frames();
        let b = runs[i + 1].solution.trajectory.frames();
        let d = (0..len)
            .into_par_iter()
            .map(|n| a[n].sub(&b[n]).l2_norm())
            .reduce(|| 0.0, f64::max);
        eps_gaps.push((eps_list[i] - eps_list[i + 1]).abs());
        cauchy.push(d);
        let hs = hs_bounds[i] + hs_bounds[i + 1];
        hs1.push(if s > 0.0 { d.powf(1.0 / s) * hs.powf(1.0 - 1.0 / s) } else { d });
    }
    let positive = cauchy.iter().all(|v| *v > 0.0);
    let slope = if positive { util::loglog_slope(&eps_gaps, &cauchy) } else { f64::NAN };
    let decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let limit_epsilon = eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(VanishingReport {
        eps_list: eps_list.to_vec(),
        horizon,
        eps_gaps,
        monotone_l2: decreasing(&cauchy),
        monotone_hs1: decreasing(&hs1),
        cauchy_l2: cauchy,
        slope,
        hs_bounds,
        hs1_diffs: hs1,
        limit_epsilon,
    })
}

/// Largest window on which Picard still converges: doubling from `t_start`
/// until failure, then bisection in log scale. Steps per window are fixed.
pub fn failing_horizon(
    cs: &CoefficientSet,
    cfg: &SolverConfig,
    v0: &StateField,
    t_start: f64,
    steps: usize,
    bisections: usize,
) -> Result<f64> {
    let ok = |t: f64| -> Result<bool> {
        let c = SolverConfig {
            t_end: t,
            dt: t / steps as f64,
            ..*cfg
        };
        match picard_solve(cs, &c, v0) {
            Ok(_) => Ok(true),
            Err(
                QlsError::NotContracting { .. }
                | QlsError::PicardNotConverged { .. }
                | QlsError::NonFinite(_)
                | QlsError::BallExcursion { .. }
                | QlsError::OutsideSolutionBall { .. },
            ) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if !ok(t_start)? {
        return Err(QlsError::Precondition(format!("Picard already fails at T = {t_start}")));
    }
    let mut lo = t_start;
    let mut hi = 2.0 * t_start;
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 * t_start {
            return Err(QlsError::Precondition("no failing horizon found".into()));
        }
    }
    for _ in 0..bisections {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearBoundSample {
    pub lambda: f64,
    pub u_hs: f64,
    pub v_hs: f64,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlinearBoundFit {
    pub c: f64,
    pub p: u32,
    pub samples: Vec<NonlinearBoundSample>,
    /// `max (measured/bound − 1)₊` over the whole corpus.
    pub max_violation: f64,
    pub growth_exponent: f64,
}

/// Fits `‖𝓛(u)v‖_{H^{s−2}} <= C‖v‖_{H^s}(1 + ‖u‖_{H^s} + ‖u‖_{H^s}^P)`.
/// `P` is the rounded-up growth exponent of the nonlinear excess
/// `‖𝓛(u)v‖ − ‖𝓛(0)v‖`; `C` is fitted on the pairs with `λ <= 1` and the
/// larger `λ` serve as holdout.
pub fn fit_nonlinear_bound(
    cs: &CoefficientSet,
    pairs: &[(StateField, StateField)],
    lambdas: &[f64],
    s: f64,
) -> Result<NonlinearBoundFit> {
    let mut samples = Vec::new();
    let mut excess: Vec<(f64, f64)> = Vec::new();
    for (u, v) in pairs {
        let zero = apply_nonlinear_operator(cs, &StateField::zeros(u.grid(), 0.0), v, 0.0)?.sobolev_norm(s - 2.0)?;
        let v_hs = v.sobolev_norm(s)?;
        for &l in lambdas {
            let ul = u.scale(C64::new(l, 0.0));
            let m = apply_nonlinear_operator(cs, &ul, v, 0.0)?.sobolev_norm(s - 2.0)?;
            let u_hs = ul.sobolev_norm(s)?;
            samples.push(NonlinearBoundSample {
                lambda: l,
                u_hs,
                v_hs,
                measured: m,
            });
            let e = (m - zero).abs() / v_hs;
            if e > 1e-14 * m / v_hs {
                excess.push((u_hs, e));
            }
        }
    }
    let growth_exponent = if excess.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = excess.iter().copied().unzip();
        util::loglog_slope(&xs, &ys)
    } else {
        0.0
    };
    let p = growth_exponent.max(1.0).ceil().min(12.0) as u32;
    let shape = |x: f64| 1.0 + x + x.powi(p as i32);
    let c = samples
        .iter()
        .filter(|s| s.lambda <= 1.0)
        .map(|s| s.measured / (s.v_hs * shape(s.u_hs)))
        .fold(0.0, f64::max);
    let max_violation = samples
        .iter()
        .map(|s| (s.measured / (c * s.v_hs * shape(s.u_hs)) - 1.0).max(0.0))
        .fold(0.0, f64::max);
    Ok(NonlinearBoundFit {
        c,
        p,
        samples,
        max_violation,
        growth_exponent,
    })
}

/// Grid helper for experiment setup: a Gaussian of the given amplitude and
/// width centred at `center`.
pub fn gaussian_data(grid: &Grid, amplitude: C64, width: f64, center: [f64; 2]) -> Result<StateField> {
    let d = grid.dim();
    StateField::from_fn(grid, 0.0, |x| {
        let r2: f64 = (0..d).map(|i| (x[i] - center[i]).powi(2)).sum();
        amplitude * (-r2 / (width * width)).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn halvings_counts() {
        assert_eq!(halvings(1.0, 0.25), 2);
        assert_eq!(halvings(1.0, 1.0), 0);
    }
}
