//! Symbols `q(x, ξ, t)`, cutoffs, Poisson brackets and seminorm estimates.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{C64, ZERO};
use crate::util::{self, japanese};

type EvalFn = dyn Fn(&[f64], &[f64], f64) -> C64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64], f64) -> [C64; 2] + Send + Sync;

pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[derive(Clone)]
pub struct Symbol {
    dim: usize,
    order: f64,
    label: String,
    eval: Arc<EvalFn>,
    grad_x: Option<Arc<GradFn>>,
    grad_xi: Option<Arc<GradFn>>,
    hx: f64,
    hxi: f64,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("dim", &self.dim)
            .field("order", &self.order)
            .field("label", &self.label)
            .field("analytic_x", &self.grad_x.is_some())
            .field("analytic_xi", &self.grad_xi.is_some())
            .finish()
    }
}

fn arr(v: &[f64]) -> [f64; 2] {
    [v[0], if v.len() > 1 { v[1] } else { 0.0 }]
}

impl Symbol {
    pub fn new<F>(dim: usize, order: f64, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64], &[f64], f64) -> C64 + Send + Sync + 'static,
    {
        Symbol {
            dim,
            order,
            label: label.into(),
            eval: Arc::new(f),
            grad_x: None,
            grad_xi: None,
            hx: DEFAULT_FD_STEP,
            hxi: DEFAULT_FD_STEP,
        }
    }

    pub fn with_grad_x<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], &[f64], f64) -> [C64; 2] + Send + Sync + 'static,
    {
        self.grad_x = Some(Arc::new(g));
        self
    }

    pub fn with_grad_xi<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], &[f64], f64) -> [C64; 2] + Send + Sync + 'static,
    {
        self.grad_xi = Some(Arc::new(g));
        self
    }

    /// Finite-difference steps for the fallback derivatives.
    pub fn with_fd_steps(mut self, hx: f64, hxi: f64) -> Self {
        self.hx = hx;
        self.hxi = hxi;
        self
    }

    pub fn without_analytic_derivatives(mut self) -> Self {
        self.grad_x = None;
        self.grad_xi = None;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_order(mut self, order: f64) -> Self {
        self.order = order;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.grad_x.is_some() && self.grad_xi.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64], xi: &[f64], t: f64) -> C64 {
        (self.eval)(x, xi, t)
    }

    fn fd_grad(&self, x: &[f64], xi: &[f64], t: f64, wrt_x: bool) -> [C64; 2] {
        let h = if wrt_x { self.hx } else { self.hxi };
        let mut out = [ZERO; 2];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let (mut xp, mut xm) = (arr(x), arr(x));
            let (mut ep, mut em) = (arr(xi), arr(xi));
            if wrt_x {
                xp[i] += h;
                xm[i] -= h;
            } else {
                ep[i] += h;
                em[i] -= h;
            }
            let d = self.dim;
            *o = (self.eval(&xp[..d], &ep[..d], t) - self.eval(&xm[..d], &em[..d], t)) / (2.0 * h);
        }
        out
    }

    /// `∇_x q`, analytic when available.
    pub fn grad_x(&self, x: &[f64], xi: &[f64], t: f64) -> [C64; 2] {
        match &self.grad_x {
            Some(g) => g(x, xi, t),
            None => self.fd_grad(x, xi, t, true),
        }
    }

    /// `∇_ξ q`, analytic when available.
    pub fn grad_xi(&self, x: &[f64], xi: &[f64], t: f64) -> [C64; 2] {
        match &self.grad_xi {
            Some(g) => g(x, xi, t),
            None => self.fd_grad(x, xi, t, false),
        }
    }

    /// Finite-difference gradients regardless of analytic rules.
    pub fn fd_grad_x(&self, x: &[f64], xi: &[f64], t: f64) -> [C64; 2] {
        self.fd_grad(x, xi, t, true)
    }

    pub fn fd_grad_xi(&self, x: &[f64], xi: &[f64], t: f64) -> [C64; 2] {
        self.fd_grad(x, xi, t, false)
    }

    pub fn add(&self, other: &Symbol) -> Symbol {
        let (a, b) = (self.clone(), other.clone());
        let mut s = Symbol::new(
            self.dim,
            self.order.max(other.order),
            format!("({} + {})", self.label, other.label),
            {
                let (a, b) = (a.clone(), b.clone());
                move |x, xi, t| a.eval(x, xi, t) + b.eval(x, xi, t)
            },
        );
        if self.has_analytic_derivatives() && other.has_analytic_derivatives() {
            let (a1, b1) = (a.clone(), b.clone());
            s = s
                .with_grad_x(move |x, xi, t| {
                    let (p, q) = (a1.grad_x(x, xi, t), b1.grad_x(x, xi, t));
                    [p[0] + q[0], p[1] + q[1]]
                })
                .with_grad_xi(move |x, xi, t| {
                    let (p, q) = (a.grad_xi(x, xi, t), b.grad_xi(x, xi, t));
                    [p[0] + q[0], p[1] + q[1]]
                });
        }
        s
    }

    pub fn scale(&self, c: C64) -> Symbol {
        let a = self.clone();
        let mut s = Symbol::new(self.dim, self.order, format!("{c}·{}", self.label), {
            let a = a.clone();
            move |x, xi, t| c * a.eval(x, xi, t)
        });
        if self.has_analytic_derivatives() {
            let a1 = a.clone();
            s = s
                .with_grad_x(move |x, xi, t| {
                    let p = a1.grad_x(x, xi, t);
                    [c * p[0], c * p[1]]
                })
                .with_grad_xi(move |x, xi, t| {
                    let p = a.grad_xi(x, xi, t);
                    [c * p[0], c * p[1]]
                });
        }
        s.with_fd_steps(self.hx, self.hxi)
    }

    pub fn mul(&self, other: &Symbol) -> Symbol {
        let (a, b) = (self.clone(), other.clone());
        let mut s = Symbol::new(
            self.dim,
            self.order + other.order,
            format!("({} · {})", self.label, other.label),
            {
                let (a, b) = (a.clone(), b.clone());
                move |x, xi, t| a.eval(x, xi, t) * b.eval(x, xi, t)
            },
        );
        if self.has_analytic_derivatives() && other.has_analytic_derivatives() {
            let (a1, b1) = (a.clone(), b.clone());
            s = s
                .with_grad_x(move |x, xi, t| {
                    let (va, vb) = (a1.eval(x, xi, t), b1.eval(x, xi, t));
                    let (p, q) = (a1.grad_x(x, xi, t), b1.grad_x(x, xi, t));
                    [p[0] * vb + va * q[0], p[1] * vb + va * q[1]]
                })
                .with_grad_xi(move |x, xi, t| {
                    let (va, vb) = (a.eval(x, xi, t), b.eval(x, xi, t));
                    let (p, q) = (a.grad_xi(x, xi, t), b.grad_xi(x, xi, t));
                    [p[0] * vb + va * q[0], p[1] * vb + va * q[1]]
                });
        }
        s
    }

    /// `q(x - x0, ξ, t)`.
    pub fn shift_x(&self, x0: [f64; 2]) -> Symbol {
        let a = self.clone();
        let d = self.dim;
        let sh = move |x: &[f64]| {
            let mut y = arr(x);
            y[0] -= x0[0];
            y[1] -= x0[1];
            y
        };
        let mut s = Symbol::new(d, self.order, format!("{}(x - x0)", self.label), {
            let a = a.clone();
            move |x, xi, t| a.eval(&sh(x)[..d], xi, t)
        });
        if self.has_analytic_derivatives() {
            let a1 = a.clone();
            s = s
                .with_grad_x(move |x, xi, t| a1.grad_x(&sh(x)[..d], xi, t))
                .with_grad_xi(move |x, xi, t| a.grad_xi(&sh(x)[..d], xi, t));
        }
        s.with_fd_steps(self.hx, self.hxi)
    }

    /// Freezes the time argument at `t0`.
    pub fn at_time(&self, t0: f64) -> Symbol {
        let a = self.clone();
        let mut s = Symbol::new(self.dim, self.order, format!("{}|t={t0}", self.label), {
            let a = a.clone();
            move |x, xi, _| a.eval(x, xi, t0)
        });
        if self.has_analytic_derivatives() {
            let a1 = a.clone();
            s = s
                .with_grad_x(move |x, xi, _| a1.grad_x(x, xi, t0))
                .with_grad_xi(move |x, xi, _| a.grad_xi(x, xi, t0));
        }
        s.with_fd_steps(self.hx, self.hxi)
    }

    /// Pointwise map `q ↦ g(q)` with `g'` supplied for the chain rule.
    pub fn map<G, D>(&self, order: f64, label: impl Into<String>, g: G, dg: D) -> Symbol
    where
        G: Fn(C64) -> C64 + Send + Sync + 'static,
        D: Fn(C64) -> C64 + Send + Sync + 'static,
    {
        let a = self.clone();
        let g = Arc::new(g);
        let dg = Arc::new(dg);
        let mut s = Symbol::new(self.dim, order, label, {
            let a = a.clone();
            let g = g.clone();
            move |x, xi, t| g(a.eval(x, xi, t))
        });
        if self.has_analytic_derivatives() {
            let (a1, dg1) = (a.clone(), dg.clone());
            s = s
                .with_grad_x(move |x, xi, t| {
                    let d = dg1(a1.eval(x, xi, t));
                    let p = a1.grad_x(x, xi, t);
                    [d * p[0], d * p[1]]
                })
                .with_grad_xi(move |x, xi, t| {
                    let d = dg(a.eval(x, xi, t));
                    let p = a.grad_xi(x, xi, t);
                    [d * p[0], d * p[1]]
                });
        }
        s.with_fd_steps(self.hx, self.hxi)
    }
}

pub fn constant(dim: usize, c: C64) -> Symbol {
    Symbol::new(dim, 0.0, format!("{c}"), move |_, _, _| c)
        .with_grad_x(|_, _, _| [ZERO; 2])
        .with_grad_xi(|_, _, _| [ZERO; 2])
}

/// `|ξ|²`.
pub fn xi_squared(dim: usize) -> Symbol {
    Symbol::new(dim, 2.0, "|xi|^2", |_, xi, _| {
        C64::new(xi.iter().map(|v| v * v).sum(), 0.0)
    })
    .with_grad_x(|_, _, _| [ZERO; 2])
    .with_grad_xi(|_, xi, _| {
        let e = arr(xi);
        [C64::new(2.0 * e[0], 0.0), C64::new(2.0 * e[1], 0.0)]
    })
}

/// `(1 + |ξ|²)^{s/2}`.
pub fn japanese_xi(dim: usize, s: f64) -> Symbol {
    Symbol::new(dim, s, format!("<xi>^{s}"), move |_, xi, _| {
        C64::new(japanese(xi).powf(s), 0.0)
    })
    .with_grad_x(|_, _, _| [ZERO; 2])
    .with_grad_xi(move |_, xi, _| {
        let e = arr(xi);
        let j = japanese(xi);
        let c = s * j.powf(s - 2.0);
        [C64::new(c * e[0], 0.0), C64::new(c * e[1], 0.0)]
    })
}

/// `x·ξ`.
pub fn x_dot_xi(dim: usize) -> Symbol {
    Symbol::new(dim, 1.0, "x.xi", |x, xi, _| C64::new(util::dot(x, xi), 0.0))
        .with_grad_x(|_, xi, _| {
            let e = arr(xi);
            [C64::new(e[0], 0.0), C64::new(e[1], 0.0)]
        })
        .with_grad_xi(|x, _, _| {
            let e = arr(x);
            [C64::new(e[0], 0.0), C64::new(e[1], 0.0)]
        })
}

/// Symbol depending on `x` (and `t`) only.
pub fn from_x<F, G>(dim: usize, label: impl Into<String>, f: F, grad: G) -> Symbol
where
    F: Fn(&[f64], f64) -> C64 + Send + Sync + 'static,
    G: Fn(&[f64], f64) -> [C64; 2] + Send + Sync + 'static,
{
    Symbol::new(dim, 0.0, label, move |x, _, t| f(x, t))
        .with_grad_x(move |x, _, t| grad(x, t))
        .with_grad_xi(|_, _, _| [ZERO; 2])
}

/// `φ(y) = g(2 - |y|)`: 1 for `|y| <= 1`, 0 for `|y| >= 2`.
pub fn phi(r: f64) -> f64 {
    util::smooth_step(2.0 - r)
}

/// `θ_1` as a function of the scaled covector.
fn theta_unit(y: [f64; 2]) -> f64 {
    let r = (y[0] * y[0] + y[1] * y[1]).sqrt();
    1.0 - phi(r)
}

/// `θ_R(ξ) = 1 - φ(ξ/R)`, evaluated as `θ_1(ξ/R)`.
pub fn cutoff_theta(dim: usize, r_cut: f64) -> Symbol {
    Symbol::new(dim, 0.0, format!("theta_{r_cut}"), move |_, xi, _| {
        let e = arr(xi);
        C64::new(theta_unit([e[0] / r_cut, e[1] / r_cut]), 0.0)
    })
    .with_grad_x(|_, _, _| [ZERO; 2])
    .with_grad_xi(move |_, xi, _| theta_grad(xi, r_cut).map(|v| C64::new(v, 0.0)))
}

/// Real value of `θ_R(ξ)`.
pub fn theta(xi: &[f64], r_cut: f64) -> f64 {
    let e = arr(xi);
    theta_unit([e[0] / r_cut, e[1] / r_cut])
}

/// `∇_ξ θ_R(ξ)`.
pub fn theta_grad(xi: &[f64], r_cut: f64) -> [f64; 2] {
    let e = arr(xi);
    let r = util::norm(&e);
    if r == 0.0 {
        return [0.0; 2];
    }
    let d = util::smooth_step_prime(2.0 - r / r_cut) / r_cut;
    [d * e[0] / r, d * e[1] / r]
}

/// `{h, p} = Σ ∂_{ξ_i}h ∂_{x_i}p − ∂_{x_i}h ∂_{ξ_i}p`.
pub fn poisson_bracket(h: &Symbol, p: &Symbol) -> Symbol {
    let (h, p) = (h.clone(), p.clone());
    let dim = h.dim;
    let order = h.order + p.order - 1.0;
    let label = format!("{{{}, {}}}", h.label, p.label);
    Symbol::new(dim, order, label, move |x, xi, t| bracket_at(&h, &p, x, xi, t))
}

pub fn bracket_at(h: &Symbol, p: &Symbol, x: &[f64], xi: &[f64], t: f64) -> C64 {
    let (hxi, hx) = (h.grad_xi(x, xi, t), h.grad_x(x, xi, t));
    let (pxi, px) = (p.grad_xi(x, xi, t), p.grad_x(x, xi, t));
    (0..h.dim).map(|i| hxi[i] * px[i] - hx[i] * pxi[i]).sum()
}

/// Sample of `(x, ξ)` points used by sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSample {
    pub xs: Vec<[f64; 2]>,
    pub xis: Vec<[f64; 2]>,
}

impl PhaseSample {
    /// `nx` points per axis on `[-x_max, x_max]^n`; `nr` geometric radii in
    /// `[xi_min, xi_max]` times `ndir` directions (`±` in 1-D).
    pub fn new(dim: usize, x_max: f64, nx: usize, xi_min: f64, xi_max: f64, nr: usize, ndir: usize) -> Self {
        let ax = util::linspace(-x_max, x_max, nx);
        let xs = if dim == 1 {
            ax.iter().map(|&a| [a, 0.0]).collect()
        } else {
            ax.iter().flat_map(|&a| ax.iter().map(move |&b| [a, b])).collect()
        };
        let radii = util::geomspace(xi_min, xi_max, nr);
        let dirs: Vec<[f64; 2]> = if dim == 1 {
            vec![[1.0, 0.0], [-1.0, 0.0]]
        } else {
            (0..ndir)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / ndir as f64;
                    [a.cos(), a.sin()]
                })
                .collect()
        };
        let xis = radii
            .iter()
            .flat_map(|&r| dirs.iter().map(move |d| [r * d[0], r * d[1]]))
            .collect();
        PhaseSample { xs, xis }
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.xis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shift_x(&self, x0: [f64; 2]) -> Self {
        PhaseSample {
            xs: self.xs.iter().map(|x| [x[0] + x0[0], x[1] + x0[1]]).collect(),
            xis: self.xis.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormEntry {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    pub measured: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeminormReport {
    pub order_claimed: f64,
    pub threshold: f64,
    pub entries: Vec<SeminormEntry>,
    pub pass: bool,
}

impl SeminormReport {
    pub fn get(&self, alpha: &[u32], beta: &[u32]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.alpha == alpha && e.beta == beta)
            .map(|e| e.measured)
    }

    pub fn max_measured(&self) -> f64 {
        self.entries.iter().map(|e| e.measured).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeminormOptions {
    pub max_alpha: u32,
    pub max_beta: u32,
    pub threshold: f64,
    /// Step in `x`.
    pub hx: f64,
    /// Step in `ξ` relative to `1 + |ξ|`.
    pub hxi_rel: f64,
}

impl Default for SeminormOptions {
    fn default() -> Self {
        SeminormOptions {
            max_alpha: 4,
            max_beta: 4,
            threshold: 100.0,
            hx: 0.05,
            hxi_rel: 0.05,
        }
    }
}

fn multi_indices(dim: usize, max_total: u32) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for a in 0..=max_total {
        if dim == 1 {
            out.push([a, 0]);
            continue;
        }
        for b in 0..=(max_total - a) {
            out.push([a, b]);
        }
    }
    out.sort_by_key(|m| (m[0] + m[1], m[0]));
    out
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Centered `k`-th difference weights and offsets (in steps).
fn stencil(k: u32) -> Vec<(f64, f64)> {
    (0..=k)
        .map(|i| {
            let w = if i % 2 == 0 { 1.0 } else { -1.0 } * binom(k, i);
            (w, k as f64 / 2.0 - i as f64)
        })
        .collect()
}

/// `∂_ξ^α ∂_x^β q` by tensor-product centered differences.
#[allow(clippy::too_many_arguments)]
pub fn mixed_derivative(
    q: &Symbol,
    x: [f64; 2],
    xi: [f64; 2],
    t: f64,
    alpha: [u32; 2],
    beta: [u32; 2],
    hx: f64,
    hxi: f64,
) -> C64 {
    let d = q.dim;
    let s = [stencil(beta[0]), stencil(beta[1]), stencil(alpha[0]), stencil(alpha[1])];
    let mut acc = ZERO;
    for (w0, o0) in &s[0] {
        for (w1, o1) in &s[1] {
            for (w2, o2) in &s[2] {
                for (w3, o3) in &s[3] {
                    let xx = [x[0] + o0 * hx, x[1] + o1 * hx];
                    let ee = [xi[0] + o2 * hxi, xi[1] + o3 * hxi];
                    acc += q.eval(&xx[..d], &ee[..d], t) * (w0 * w1 * w2 * w3);
                }
            }
        }
    }
    let nb = (beta[0] + beta[1]) as i32;
    let na = (alpha[0] + alpha[1]) as i32;
    acc / (hx.powi(nb) * hxi.powi(na))
}

/// Finite-difference surrogate for the `S^m_{1,0}` seminorms.
pub fn estimate_seminorms(q: &Symbol, m: f64, sample: &PhaseSample, t: f64, opts: &SeminormOptions) -> SeminormReport {
    let alphas = multi_indices(q.dim, opts.max_alpha);
    let betas = multi_indices(q.dim, opts.max_beta);
    let pairs: Vec<([u32; 2], [u32; 2])> = alphas
        .iter()
        .flat_map(|a| betas.iter().map(move |b| (*a, *b)))
        .collect();
    let entries: Vec<SeminormEntry> = pairs
        .par_iter()
        .map(|&(alpha, beta)| {
            let na = (alpha[0] + alpha[1]) as f64;
            let mut sup = 0.0f64;
            for x in &sample.xs {
                for xi in &sample.xis {
                    let r = util::norm(xi);
                    let hxi = opts.hxi_rel * (1.0 + r);
                    let v = if na == 0.0 && beta == [0, 0] {
                        q.eval(&x[..q.dim], &xi[..q.dim], t)
                    } else {
                        mixed_derivative(q, *x, *xi, t, alpha, beta, opts.hx, hxi)
                    };
                    let w = v.norm() * (1.0 + r).powf(na - m);
                    sup = if w.is_finite() { sup.max(w) } else { f64::INFINITY };
                }
            }
            let (alpha, beta) = if q.dim == 1 {
                (vec![alpha[0]], vec![beta[0]])
            } else {
                (alpha.to_vec(), beta.to_vec())
            };
            SeminormEntry {
                alpha,
                beta,
                measured: sup,
                pass: sup.is_finite() && sup <= opts.threshold,
            }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    SeminormReport {
        order_claimed: m,
        threshold: opts.threshold,
        entries,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_limits() {
        let th = cutoff_theta(1, 2.0);
        assert_eq!(th.eval(&[0.0], &[0.0], 0.0).re, 0.0);
        assert_eq!(th.eval(&[0.0], &[1.9], 0.0).re, 0.0);
        assert_eq!(th.eval(&[0.0], &[6.0], 0.0).re, 1.0);
        let mid = th.eval(&[0.0], &[3.0], 0.0).re;
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn bracket_x_dot_xi() {
        let b = poisson_bracket(&xi_squared(2), &x_dot_xi(2));
        let v = b.eval(&[0.3, -1.0], &[2.0, 0.5], 0.0);
        assert!((v.re - 2.0 * (4.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn stencil_differentiates_polynomial() {
        let q = Symbol::new(1, 3.0, "xi^3", |_, xi, _| C64::new(xi[0].powi(3), 0.0));
        let d3 = mixed_derivative(&q, [0.0; 2], [1.3, 0.0], 0.0, [3, 0], [0, 0], 0.1, 0.1);
        assert!((d3.re - 6.0).abs() < 1e-9);
    }
}
