//! Escape symbols: the flat arctan symbol, uncentered variants, and grid
//! verification of the lower bounds on their Hamiltonian derivatives.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QlsError, Result};
use crate::grid::{C64, ZERO};
use crate::hamiltonian::{mat_max_abs, mat_sub, metric_symbol, quad_form, Metric};
use crate::symbols::{self, bracket_at, PhaseSample, Symbol};
use crate::util::{self, japanese};

pub const BISECTION_STEPS: usize = 40;
pub const PASS_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct EscapeSymbol {
    pub symbol: Symbol,
    pub center: [f64; 2],
    pub n_weight: f64,
    pub r_cut: f64,
}

/// `r(x, ξ) = θ_R(ξ) arctan(x·ξ/|ξ|)` with analytic derivatives.
pub fn flat_escape_symbol(dim: usize, r_cut: f64) -> Result<EscapeSymbol> {
    if !(r_cut >= 1.0) {
        return Err(QlsError::OutOfRange(format!("R_cut = {r_cut} must be >= 1")));
    }
    let sym = Symbol::new(dim, 0.0, format!("r[R={r_cut}]"), move |x, xi, _| {
        let r = util::norm(xi);
        if r == 0.0 {
            return ZERO;
        }
        C64::new(symbols::theta(xi, r_cut) * (util::dot(x, xi) / r).atan(), 0.0)
    })
    .with_grad_x(move |x, xi, _| {
        let r = util::norm(xi);
        let mut out = [ZERO; 2];
        if r == 0.0 {
            return out;
        }
        let s = util::dot(x, xi) / r;
        let c = symbols::theta(xi, r_cut) / (1.0 + s * s) / r;
        for (i, o) in out.iter_mut().enumerate().take(xi.len()) {
            *o = C64::new(c * xi[i], 0.0);
        }
        out
    })
    .with_grad_xi(move |x, xi, _| {
        let r = util::norm(xi);
        let mut out = [ZERO; 2];
        if r == 0.0 {
            return out;
        }
        let xd = util::dot(x, xi);
        let s = xd / r;
        let th = symbols::theta(xi, r_cut);
        let dth = symbols::theta_grad(xi, r_cut);
        for (i, o) in out.iter_mut().enumerate().take(xi.len()) {
            let ds = x[i] / r - xd * xi[i] / (r * r * r);
            *o = C64::new(dth[i] * s.atan() + th * ds / (1.0 + s * s), 0.0);
        }
        out
    });
    Ok(EscapeSymbol {
        symbol: sym,
        center: [0.0; 2],
        n_weight: 0.0,
        r_cut,
    })
}

/// Closed form of `H_{|ξ|²} r = 2θ_R|ξ|/(1 + (x·ξ/|ξ|)²)`.
pub fn flat_bracket_identity(x: &[f64], xi: &[f64], r_cut: f64) -> f64 {
    let r = util::norm(xi);
    if r == 0.0 {
        return 0.0;
    }
    let s = util::dot(x, xi) / r;
    2.0 * symbols::theta(xi, r_cut) * r / (1.0 + s * s)
}

/// `p_μ = N p + r(· − x_μ)`.
pub fn combine(p: &EscapeSymbol, r: &EscapeSymbol, x_mu: [f64; 2], n: f64) -> EscapeSymbol {
    let shifted = r.symbol.shift_x(x_mu);
    let sym = if n == 0.0 {
        shifted
    } else {
        p.symbol.scale(C64::new(n, 0.0)).add(&shifted)
    }
    .with_label(format!("p_mu[N={n}, x_mu={x_mu:?}]"))
    .with_order(0.0);
    EscapeSymbol {
        symbol: sym,
        center: x_mu,
        n_weight: n,
        r_cut: r.r_cut,
    }
}

/// Bracket values `H_h p` on the sample points with `|ξ| >= xi_min`.
#[derive(Debug, Clone)]
pub struct BracketTable {
    pub points: Vec<([f64; 2], [f64; 2])>,
    pub values: Vec<f64>,
}

impl BracketTable {
    pub fn compute(h: &Symbol, p: &Symbol, sample: &PhaseSample, xi_min: f64, t: f64) -> Result<Self> {
        let d = h.dim();
        let points: Vec<([f64; 2], [f64; 2])> = sample
            .xs
            .iter()
            .flat_map(|x| sample.xis.iter().map(move |xi| (*x, *xi)))
            .filter(|(_, xi)| util::norm(xi) >= xi_min)
            .collect();
        let values: Vec<f64> = points
            .par_iter()
            .map(|(x, xi)| bracket_at(h, p, &x[..d], &xi[..d], t).re)
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QlsError::NonFinite(format!(
                "bracket at x = {:?}, xi = {:?}",
                points[i].0, points[i].1
            )));
        }
        Ok(BracketTable { points, values })
    }

    /// `a·self + b·other` on identical point sets.
    pub fn combine(&self, a: f64, other: &BracketTable, b: f64) -> BracketTable {
        BracketTable {
            points: self.points.clone(),
            values: self.values.iter().zip(&other.values).map(|(u, v)| a * u + b * v).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub b_star: f64,
    pub pass: bool,
    pub samples: usize,
    pub min_bracket: f64,
    /// `(x, ξ)` where the margin at `B*` is smallest.
    pub worst_x: Vec<f64>,
    pub worst_xi: Vec<f64>,
}

fn bisect_b<F: Fn(usize, f64) -> f64 + Sync>(n: usize, margin: F) -> (f64, usize) {
    let feasible = |b: f64| (0..n).into_par_iter().all(|i| margin(i, b) >= 0.0);
    let b = util::bisect_max(1e-12, 1.0, BISECTION_STEPS, feasible).unwrap_or(0.0);
    let beval = b.max(1e-12);
    let worst = (0..n)
        .map(|i| (i, margin(i, beval)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (b, worst)
}

fn weight(x: &[f64; 2], xi: &[f64; 2], center: [f64; 2], dim: usize) -> f64 {
    let y = [x[0] - center[0], x[1] - center[1]];
    util::norm(&xi[..dim]) / japanese(&y[..dim]).powi(2)
}

/// Largest `B ∈ (0, 1]` with `H_h p ≥ B|ξ|/⟨x⟩² − 1/B` on the table.
pub fn lower_bound_from_table(table: &BracketTable, dim: usize) -> LowerBoundReport {
    let w: Vec<f64> = table.points.iter().map(|(x, xi)| weight(x, xi, [0.0; 2], dim)).collect();
    let (b, worst) = bisect_b(table.values.len(), |i, b| table.values[i] - b * w[i] + 1.0 / b);
    let (wx, wxi) = table.points.get(worst).copied().unwrap_or(([0.0; 2], [0.0; 2]));
    LowerBoundReport {
        b_star: b,
        pass: b > PASS_THRESHOLD,
        samples: table.values.len(),
        min_bracket: table.values.iter().copied().fold(f64::INFINITY, f64::min),
        worst_x: wx[..dim].to_vec(),
        worst_xi: wxi[..dim].to_vec(),
    }
}

pub fn verify_lower_bound(h: &Symbol, p: &Symbol, sample: &PhaseSample, xi_min: f64) -> Result<LowerBoundReport> {
    let table = BracketTable::compute(h, p, sample, xi_min, 0.0)?;
    Ok(lower_bound_from_table(&table, h.dim()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BumpBoundReport {
    pub n_weight: f64,
    pub x_mu: Vec<f64>,
    /// Symmetric fit: `C₁ = C₂ = B*`, `C₃ = 1/B*`.
    pub b_star: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `inf (H p_μ − C₂|ξ|/⟨x⟩² + C₃) / (|ξ|/⟨x−x_μ⟩²)`.
    pub c1_refined: f64,
    /// `inf (H p_μ − C₁|ξ|/⟨x−x_μ⟩² + C₃) / (|ξ|/⟨x⟩²)`.
    pub c2_refined: f64,
    pub pass: bool,
    pub worst_x: Vec<f64>,
    pub worst_xi: Vec<f64>,
}

/// Two-weight bound `H p_μ ≥ C₁|ξ|/⟨x−x_μ⟩² + C₂|ξ|/⟨x⟩² − C₃` on the table.
pub fn bump_bound_from_table(table: &BracketTable, x_mu: [f64; 2], n_weight: f64, dim: usize) -> BumpBoundReport {
    let w0: Vec<f64> = table.points.iter().map(|(x, xi)| weight(x, xi, [0.0; 2], dim)).collect();
    let wm: Vec<f64> = table.points.iter().map(|(x, xi)| weight(x, xi, x_mu, dim)).collect();
    let hv = &table.values;
    let (b, worst) = bisect_b(hv.len(), |i, b| hv[i] - b * (w0[i] + wm[i]) + 1.0 / b);
    let c3 = if b > 0.0 { 1.0 / b } else { f64::INFINITY };
    let refine = |num_w: &[f64], den_w: &[f64]| {
        (0..hv.len())
            .filter(|&i| den_w[i] > 0.0)
            .map(|i| (hv[i] - b * num_w[i] + c3) / den_w[i])
            .fold(f64::INFINITY, f64::min)
    };
    let (wx, wxi) = table.points.get(worst).copied().unwrap_or(([0.0; 2], [0.0; 2]));
    BumpBoundReport {
        n_weight,
        x_mu: x_mu[..dim].to_vec(),
        b_star: b,
        c1: b,
        c2: b,
        c3,
        c1_refined: refine(&w0, &wm),
        c2_refined: refine(&wm, &w0),
        pass: b > PASS_THRESHOLD,
        worst_x: wx[..dim].to_vec(),
        worst_xi: wxi[..dim].to_vec(),
    }
}

pub fn verify_bump_bound(h: &Symbol, p_mu: &EscapeSymbol, sample: &PhaseSample, xi_min: f64) -> Result<BumpBoundReport> {
    let table = BracketTable::compute(h, &p_mu.symbol, sample, xi_min, 0.0)?;
    Ok(bump_bound_from_table(&table, p_mu.center, p_mu.n_weight, h.dim()))
}

#[derive(Debug, Clone)]
pub struct Uncentered {
    pub symbol: EscapeSymbol,
    pub report: BumpBoundReport,
}

/// Smallest integer `N <= n_max` for which `N p + r(· − x_μ)` passes the
/// two-weight bound.
pub fn uncentered_symbol(
    p: &EscapeSymbol,
    r: &EscapeSymbol,
    x_mu: [f64; 2],
    h: &Symbol,
    n_max: u32,
    sample: &PhaseSample,
    xi_min: f64,
) -> Result<Uncentered> {
    let d = h.dim();
    let tp = BracketTable::compute(h, &p.symbol, sample, xi_min, 0.0)?;
    let shifted = r.symbol.shift_x(x_mu);
    let tr = BracketTable::compute(h, &shifted, sample, xi_min, 0.0)?;
    let mut last = None;
    for n in 0..=n_max {
        let table = tp.combine(n as f64, &tr, 1.0);
        let rep = bump_bound_from_table(&table, x_mu, n as f64, d);
        if rep.pass {
            return Ok(Uncentered {
                symbol: combine(p, r, x_mu, n as f64),
                report: rep,
            });
        }
        last = Some(rep);
    }
    let last = last.expect("at least one N tried");
    Err(QlsError::NoEscapeWeight {
        n_max,
        worst_x: last.worst_x,
        worst_xi: last.worst_xi,
    })
}

/// Default `(x, ξ)` sample: `33^n` positions on `|x_i| <= x_max`, 33 geometric
/// radii in `[2R, xi_max]` (both signs in 1-D, 16 angles in 2-D).
pub fn default_sample(dim: usize, x_max: f64, r_cut: f64, xi_max: f64) -> PhaseSample {
    PhaseSample::new(dim, x_max, 33, 2.0 * r_cut, xi_max, 33, 16)
}

pub const DEFAULT_XI_MAX: f64 = 1e6;

/// Correction `|2(a_t − a_0)ξ·∇_x p − (∇a_t − ∇a_0)ξξ·∇_ξ p|` at one point.
fn metric_correction(da: &[[f64; 2]; 2], dgrad: &[[[f64; 2]; 2]; 2], p: &Symbol, x: &[f64], xi: &[f64], t: f64) -> f64 {
    let d = xi.len();
    let px = p.grad_x(x, xi, t);
    let pxi = p.grad_xi(x, xi, t);
    let mut s = C64::new(0.0, 0.0);
    for i in 0..d {
        let a_xi: f64 = (0..d).map(|k| da[i][k] * xi[k]).sum();
        s += px[i] * (2.0 * a_xi);
        s -= pxi[i] * quad_form(&dgrad[i], xi, xi, d);
    }
    s.norm()
}

/// Largest `t ∈ [0, t_max]` (bisection) with the time correction of the
/// bracket bounded by `|ξ|/(C₀⟨x⟩²)` on the sample. `C₀` defaults to `1/B*`
/// of the `t = 0` bound.
pub fn time_stability_horizon(
    metric: Arc<dyn Metric>,
    p_mu: &EscapeSymbol,
    sample: &PhaseSample,
    xi_min: f64,
    t_max: f64,
    c0: Option<f64>,
) -> Result<f64> {
    let d = metric.dim();
    let h0 = metric_symbol(metric.clone()).at_time(0.0);
    let base = BracketTable::compute(&h0, &p_mu.symbol, sample, xi_min, 0.0)?;
    let rep = lower_bound_from_table(&base, d);
    if !rep.pass {
        return Err(QlsError::BoundViolatedAtStart(rep.b_star));
    }
    let c0 = c0.unwrap_or(1.0 / rep.b_star);
    let pts = &base.points;
    let ok = |t: f64| {
        pts.par_iter().all(|(x, xi)| {
            let (xs, es) = (&x[..d], &xi[..d]);
            let da = mat_sub(metric.value(xs, t), metric.value(xs, 0.0));
            let (g1, g0) = (metric.gradient(xs, t), metric.gradient(xs, 0.0));
            let dg = [mat_sub(g1[0], g0[0]), mat_sub(g1[1], g0[1])];
            metric_correction(&da, &dg, &p_mu.symbol, xs, es, 0.0) <= weight(x, xi, [0.0; 2], d) / c0
        })
    };
    Ok(util::bisect_max(0.0, t_max, BISECTION_STEPS, ok).unwrap_or(0.0))
}

/// `sup ⟨x⟩² (|A₁| + |∇A₁|)` over the sample positions.
pub fn flatness_constant(a1: &dyn Metric, xs: &[[f64; 2]]) -> f64 {
    let d = a1.dim();
    xs.iter()
        .map(|x| {
            let v = mat_max_abs(&a1.value(&x[..d], 0.0), d);
            let g = a1.gradient(&x[..d], 0.0);
            let gv = (0..d).map(|i| mat_max_abs(&g[i], d)).fold(0.0, f64::max);
            japanese(&x[..d]).powi(2) * (v + gv)
        })
        .fold(0.0, f64::max)
}

/// Largest `η ∈ [0, η_cap]` keeping the bracket correction from `ηA₁` below
/// `|ξ|/(2C₁⟨x⟩²)` on the sample.
pub fn perturbation_margin(
    a1: &dyn Metric,
    p_mu: &EscapeSymbol,
    sample: &PhaseSample,
    xi_min: f64,
    c1: f64,
    eta_cap: f64,
    flat_limit: f64,
) -> Result<f64> {
    let d = a1.dim();
    let flat = flatness_constant(a1, &sample.xs);
    if !(flat <= flat_limit) {
        return Err(QlsError::Precondition(format!(
            "perturbation is not asymptotically flat: sup <x>^2(|A1| + |grad A1|) = {flat} > {flat_limit}"
        )));
    }
    let pts: Vec<([f64; 2], [f64; 2])> = sample
        .xs
        .iter()
        .flat_map(|x| sample.xis.iter().map(move |xi| (*x, *xi)))
        .filter(|(_, xi)| util::norm(xi) >= xi_min)
        .collect();
    let unit: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|(x, xi)| {
            let (xs, es) = (&x[..d], &xi[..d]);
            let corr = metric_correction(&a1.value(xs, 0.0), &a1.gradient(xs, 0.0), &p_mu.symbol, xs, es, 0.0);
            (corr, weight(x, xi, [0.0; 2], d) / (2.0 * c1))
        })
        .collect();
    let ok = |eta: f64| unit.iter().all(|(c, w)| eta * c <= *w);
    Ok(util::bisect_max(0.0, eta_cap, BISECTION_STEPS, ok).unwrap_or(0.0))
}

/// `γ_{μ₀} = p_{μ₀} + Σ_μ β⁰_μ p_μ`, dropping terms with `β⁰_μ <= 1e-12`.
pub fn assemble_gamma(p_mu0: &EscapeSymbol, terms: &[(f64, EscapeSymbol)]) -> Symbol {
    let kept: Vec<(f64, Symbol)> = terms
        .iter()
        .filter(|(b, _)| *b > 1e-12)
        .map(|(b, s)| (*b, s.symbol.clone()))
        .collect();
    let base = p_mu0.symbol.clone();
    let d = base.dim();
    let (b1, k1, k2, k3) = (base.clone(), kept.clone(), kept.clone(), kept.clone());
    let (b2, b3) = (base.clone(), base);
    Symbol::new(d, 0.0, format!("gamma[{} terms]", kept.len()), move |x, xi, t| {
        b1.eval(x, xi, t) + k1.iter().map(|(b, s)| s.eval(x, xi, t) * *b).sum::<C64>()
    })
    .with_grad_x(move |x, xi, t| {
        let mut g = b2.grad_x(x, xi, t);
        for (b, s) in &k2 {
            let q = s.grad_x(x, xi, t);
            g[0] += q[0] * *b;
            g[1] += q[1] * *b;
        }
        g
    })
    .with_grad_xi(move |x, xi, t| {
        let mut g = b3.grad_xi(x, xi, t);
        for (b, s) in &k3 {
            let q = s.grad_xi(x, xi, t);
            g[0] += q[0] * *b;
            g[1] += q[1] * *b;
        }
        g
    })
}
