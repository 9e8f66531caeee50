//! Bicharacteristic flow of `h(x, ξ) = a_{jk}(x) ξ_j ξ_k` and non-trapping
//! classification.
//!
//! `dX/ds = 2 a(X) Ξ`, `dΞ_j/ds = −∂_j a_{lk}(X) Ξ_l Ξ_k`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QlsError, Result};
use crate::grid::{Grid, C64, ZERO};
use crate::symbols::Symbol;
use crate::util::{self, bump, bump_prime};

pub type Mat2 = [[f64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_scale(a: Mat2, s: f64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn mat_add(a: Mat2, b: Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

pub fn mat_sub(a: Mat2, b: Mat2) -> Mat2 {
    mat_add(a, mat_scale(b, -1.0))
}

/// `Σ_{jk} a_{jk} u_j v_k` over the first `dim` axes.
pub fn quad_form(a: &Mat2, u: &[f64], v: &[f64], dim: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..dim {
        for k in 0..dim {
            s += a[j][k] * u[j] * v[k];
        }
    }
    s
}

/// Max absolute entry of the leading `dim × dim` block.
pub fn mat_max_abs(a: &Mat2, dim: usize) -> f64 {
    let mut m = 0.0f64;
    for row in a.iter().take(dim) {
        for v in row.iter().take(dim) {
            m = m.max(v.abs());
        }
    }
    m
}

/// Eigenvalues of the leading symmetric block, ascending.
pub fn sym_eigen(a: &Mat2, dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (a[0][0], a[0][0]);
    }
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    (0.5 * tr - disc, 0.5 * tr + disc)
}

pub trait Metric: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64], t: f64) -> Mat2;

    /// `[∂_1 a, ∂_2 a]`; defaults to fourth-order centered differences.
    fn gradient(&self, x: &[f64], t: f64) -> [Mat2; 2] {
        let h = 1e-3;
        let d = self.dim();
        let mut out = [[[0.0; 2]; 2]; 2];
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let at = |off: f64| {
                let mut y = [x[0], if d > 1 { x[1] } else { 0.0 }];
                y[i] += off;
                self.value(&y[..d], t)
            };
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            for j in 0..2 {
                for k in 0..2 {
                    o[j][k] = (-p2[j][k] + 8.0 * p1[j][k] - 8.0 * m1[j][k] + m2[j][k]) / (12.0 * h);
                }
            }
        }
        out
    }

    fn label(&self) -> String;
}

impl fmt::Debug for dyn Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric({})", self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatMetric {
    pub dim: usize,
}

impl Metric for FlatMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &[f64], _: f64) -> Mat2 {
        IDENTITY
    }
    fn gradient(&self, _: &[f64], _: f64) -> [Mat2; 2] {
        [[[0.0; 2]; 2]; 2]
    }
    fn label(&self) -> String {
        "flat".into()
    }
}

/// Radial profiles `n(r)` for isotropic metrics `a = n(|x|) I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum Profile {
    /// `1 + amplitude·β(r/radius)`, exactly flat for `r >= radius`.
    Bump { amplitude: f64, radius: f64 },
    /// `1 + amplitude·e^{-r²/width²}`.
    Gaussian { amplitude: f64, width: f64 },
    /// `1 − depth·β((r − r0)/width)`: a slow ring that guides rays around it.
    RingTrap { depth: f64, r0: f64, width: f64 },
    /// `1 + amplitude/⟨x⟩²`.
    Decaying { amplitude: f64 },
}

impl Profile {
    pub fn n(&self, r: f64) -> f64 {
        match *self {
            Profile::Bump { amplitude, radius } => 1.0 + amplitude * bump(r / radius),
            Profile::Gaussian { amplitude, width } => 1.0 + amplitude * (-(r / width).powi(2)).exp(),
            Profile::RingTrap { depth, r0, width } => 1.0 - depth * bump((r - r0) / width),
            Profile::Decaying { amplitude } => 1.0 + amplitude / (1.0 + r * r),
        }
    }

    pub fn dn(&self, r: f64) -> f64 {
        match *self {
            Profile::Bump { amplitude, radius } => amplitude * bump_prime(r / radius) / radius,
            Profile::Gaussian { amplitude, width } => {
                amplitude * (-(r / width).powi(2)).exp() * (-2.0 * r / (width * width))
            }
            Profile::RingTrap { depth, r0, width } => -depth * bump_prime((r - r0) / width) / width,
            Profile::Decaying { amplitude } => -2.0 * amplitude * r / (1.0 + r * r).powi(2),
        }
    }

    /// Radius beyond which `n ≡ 1`, if any.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            Profile::Bump { radius, .. } => Some(radius),
            Profile::RingTrap { r0, width, .. } => Some(r0 + width),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMetric {
    pub dim: usize,
    pub profile: Profile,
    pub center: [f64; 2],
}

impl RadialMetric {
    pub fn new(dim: usize, profile: Profile) -> Self {
        RadialMetric {
            dim,
            profile,
            center: [0.0; 2],
        }
    }

    fn radius(&self, x: &[f64]) -> (f64, [f64; 2]) {
        let y = [x[0] - self.center[0], if self.dim > 1 { x[1] - self.center[1] } else { 0.0 }];
        (util::norm(&y), y)
    }
}

impl Metric for RadialMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], _: f64) -> Mat2 {
        mat_scale(IDENTITY, self.profile.n(self.radius(x).0))
    }
    fn gradient(&self, x: &[f64], _: f64) -> [Mat2; 2] {
        let (r, y) = self.radius(x);
        if r == 0.0 {
            return [[[0.0; 2]; 2]; 2];
        }
        let d = self.profile.dn(r);
        [mat_scale(IDENTITY, d * y[0] / r), mat_scale(IDENTITY, d * y[1] / r)]
    }
    fn label(&self) -> String {
        format!("radial:{:?}", self.profile)
    }
}

type MatFn = dyn Fn(&[f64], f64) -> Mat2 + Send + Sync;
type GradMatFn = dyn Fn(&[f64], f64) -> [Mat2; 2] + Send + Sync;

/// Metric given by closures; gradient falls back to finite differences.
#[derive(Clone)]
pub struct FnMetric {
    pub dim: usize,
    pub label: String,
    value: Arc<MatFn>,
    gradient: Option<Arc<GradMatFn>>,
}

impl FnMetric {
    pub fn new<F>(dim: usize, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64], f64) -> Mat2 + Send + Sync + 'static,
    {
        FnMetric {
            dim,
            label: label.into(),
            value: Arc::new(f),
            gradient: None,
        }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&[f64], f64) -> [Mat2; 2] + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }
}

impl Metric for FnMetric {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64], t: f64) -> Mat2 {
        (self.value)(x, t)
    }
    fn gradient(&self, x: &[f64], t: f64) -> [Mat2; 2] {
        match &self.gradient {
            Some(g) => g(x, t),
            None => {
                let h = 1e-3;
                let d = self.dim;
                let mut out = [[[0.0; 2]; 2]; 2];
                for (i, o) in out.iter_mut().enumerate().take(d) {
                    let at = |off: f64| {
                        let mut y = [x[0], if d > 1 { x[1] } else { 0.0 }];
                        y[i] += off;
                        self.value(&y[..d], t)
                    };
                    let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
                    for j in 0..2 {
                        for k in 0..2 {
                            o[j][k] = (-p2[j][k] + 8.0 * p1[j][k] - 8.0 * m1[j][k] + m2[j][k]) / (12.0 * h);
                        }
                    }
                }
                out
            }
        }
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `a = a₀ + η a₁`.
pub struct SumMetric {
    pub base: Arc<dyn Metric>,
    pub perturbation: Arc<dyn Metric>,
    pub eta: f64,
}

impl Metric for SumMetric {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, x: &[f64], t: f64) -> Mat2 {
        mat_add(self.base.value(x, t), mat_scale(self.perturbation.value(x, t), self.eta))
    }
    fn gradient(&self, x: &[f64], t: f64) -> [Mat2; 2] {
        let (a, b) = (self.base.gradient(x, t), self.perturbation.gradient(x, t));
        [
            mat_add(a[0], mat_scale(b[0], self.eta)),
            mat_add(a[1], mat_scale(b[1], self.eta)),
        ]
    }
    fn label(&self) -> String {
        format!("{} + {}·{}", self.base.label(), self.eta, self.perturbation.label())
    }
}

/// Metric sampled on a periodic grid. Node derivatives come from
/// fourth-order centered differences; values use the (bi)cubic Hermite
/// interpolant and gradients are its exact derivative, so the interpolated
/// `h` is conserved by the flow.
#[derive(Debug, Clone)]
pub struct GriddedMetric {
    grid: Grid,
    values: Vec<Mat2>,
    grads: [Vec<Mat2>; 2],
    cross: Vec<Mat2>,
    label: String,
}

fn hermite(s: f64) -> ([f64; 4], [f64; 4]) {
    let (s2, s3) = (s * s, s * s * s);
    (
        [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2],
        [6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s],
    )
}

fn centered_derivative(grid: &Grid, data: &[Mat2], axis: usize) -> Vec<Mat2> {
    let n = grid.points_per_axis() as i64;
    let h = grid.spacing();
    (0..data.len())
        .map(|idx| {
            let base = grid.split_index(idx);
            let at = |off: i64| {
                let mut i = base;
                i[axis] = (i[axis] as i64 + off).rem_euclid(n) as usize;
                data[grid.join_index(i)]
            };
            let (p2, p1, m1, m2) = (at(2), at(1), at(-1), at(-2));
            let mut g = [[0.0; 2]; 2];
            for j in 0..2 {
                for k in 0..2 {
                    g[j][k] = (-p2[j][k] + 8.0 * p1[j][k] - 8.0 * m1[j][k] + m2[j][k]) / (12.0 * h);
                }
            }
            g
        })
        .collect()
}

impl GriddedMetric {
    pub fn new(grid: &Grid, values: Vec<Mat2>, label: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(QlsError::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        let d = grid.dim();
        let gx = centered_derivative(grid, &values, 0);
        let (gy, cross) = if d == 2 {
            (centered_derivative(grid, &values, 1), centered_derivative(grid, &gx, 1))
        } else {
            (vec![[[0.0; 2]; 2]; grid.len()], vec![[[0.0; 2]; 2]; grid.len()])
        };
        Ok(GriddedMetric {
            grid: grid.clone(),
            values,
            grads: [gx, gy],
            cross,
            label: label.into(),
        })
    }

    pub fn from_metric(grid: &Grid, m: &dyn Metric, t: f64) -> Result<Self> {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| m.value(&grid.point(i)[..d], t)).collect();
        GriddedMetric::new(grid, values, format!("gridded:{}", m.label()))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Value and gradient of the Hermite interpolant at `x`.
    fn interp(&self, x: &[f64]) -> (Mat2, [Mat2; 2]) {
        let g = &self.grid;
        let n = g.points_per_axis() as i64;
        let h = g.spacing();
        let l = g.half_length();
        let locate = |v: f64| {
            let u = (v + l) / h;
            let i = u.floor();
            (i as i64, u - i)
        };
        let zero = [[0.0; 2]; 2];
        let (i0, s0) = locate(x[0]);
        let (w0, dw0) = hermite(s0);
        let ia = [i0.rem_euclid(n) as usize, (i0 + 1).rem_euclid(n) as usize];
        if g.dim() == 1 {
            let (mut v, mut dv) = (zero, zero);
            for (c, &i) in ia.iter().enumerate() {
                let terms = [(self.values[i], 1.0), (self.grads[0][i], h)];
                for (e, (m, scale)) in terms.iter().enumerate() {
                    v = mat_add(v, mat_scale(*m, w0[2 * c + e] * scale));
                    dv = mat_add(dv, mat_scale(*m, dw0[2 * c + e] * scale / h));
                }
            }
            return (v, [dv, zero]);
        }
        let (i1, s1) = locate(x[1]);
        let (w1, dw1) = hermite(s1);
        let ib = [i1.rem_euclid(n) as usize, (i1 + 1).rem_euclid(n) as usize];
        let (mut v, mut dx, mut dy) = (zero, zero, zero);
        for (ca, &a) in ia.iter().enumerate() {
            for (cb, &b) in ib.iter().enumerate() {
                let k = g.join_index([a, b]);
                // (data, x-slot, y-slot, scale)
                let terms = [
                    (self.values[k], 0, 0, 1.0),
                    (self.grads[0][k], 1, 0, h),
                    (self.grads[1][k], 0, 1, h),
                    (self.cross[k], 1, 1, h * h),
                ];
                for (m, ex, ey, scale) in terms {
                    let (px, py) = (2 * ca + ex, 2 * cb + ey);
                    v = mat_add(v, mat_scale(m, w0[px] * w1[py] * scale));
                    dx = mat_add(dx, mat_scale(m, dw0[px] * w1[py] * scale / h));
                    dy = mat_add(dy, mat_scale(m, w0[px] * dw1[py] * scale / h));
                }
            }
        }
        (v, [dx, dy])
    }
}

impl Metric for GriddedMetric {
    fn dim(&self) -> usize {
        self.grid.dim()
    }
    fn value(&self, x: &[f64], _: f64) -> Mat2 {
        self.interp(x).0
    }
    fn gradient(&self, x: &[f64], _: f64) -> [Mat2; 2] {
        self.interp(x).1
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// `h(x, ξ, t) = a_{jk}(x, t) ξ_j ξ_k` with analytic derivatives.
pub fn metric_symbol(metric: Arc<dyn Metric>) -> Symbol {
    let d = metric.dim();
    let (m1, m2, m3) = (metric.clone(), metric.clone(), metric.clone());
    Symbol::new(d, 2.0, format!("h[{}]", metric.label()), move |x, xi, t| {
        C64::new(quad_form(&m1.value(x, t), xi, xi, d), 0.0)
    })
    .with_grad_x(move |x, xi, t| {
        let g = m2.gradient(x, t);
        let mut out = [ZERO; 2];
        for i in 0..d {
            out[i] = C64::new(quad_form(&g[i], xi, xi, d), 0.0);
        }
        out
    })
    .with_grad_xi(move |x, xi, t| {
        let a = m3.value(x, t);
        let mut out = [ZERO; 2];
        for j in 0..d {
            out[j] = C64::new(2.0 * (0..d).map(|k| a[j][k] * xi[k]).sum::<f64>(), 0.0);
        }
        out
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayState {
    pub x: [f64; 2],
    pub xi: [f64; 2],
    pub s: f64,
}

fn h_value(metric: &dyn Metric, x: &[f64; 2], xi: &[f64; 2], t: f64) -> f64 {
    let d = metric.dim();
    quad_form(&metric.value(&x[..d], t), xi, xi, d)
}

fn rhs(metric: &dyn Metric, x: &[f64; 2], xi: &[f64; 2], t: f64) -> ([f64; 2], [f64; 2]) {
    let d = metric.dim();
    let a = metric.value(&x[..d], t);
    let g = metric.gradient(&x[..d], t);
    let mut dx = [0.0; 2];
    let mut dxi = [0.0; 2];
    for j in 0..d {
        dx[j] = 2.0 * (0..d).map(|k| a[j][k] * xi[k]).sum::<f64>();
        dxi[j] = -quad_form(&g[j], xi, xi, d);
    }
    (dx, dxi)
}

fn rk4(metric: &dyn Metric, x: [f64; 2], xi: [f64; 2], ds: f64, t: f64) -> ([f64; 2], [f64; 2]) {
    let add = |a: [f64; 2], b: [f64; 2], c: f64| [a[0] + c * b[0], a[1] + c * b[1]];
    let (k1x, k1e) = rhs(metric, &x, &xi, t);
    let (k2x, k2e) = rhs(metric, &add(x, k1x, 0.5 * ds), &add(xi, k1e, 0.5 * ds), t);
    let (k3x, k3e) = rhs(metric, &add(x, k2x, 0.5 * ds), &add(xi, k2e, 0.5 * ds), t);
    let (k4x, k4e) = rhs(metric, &add(x, k3x, ds), &add(xi, k3e, ds), t);
    let comb = |a: [f64; 2], k1: [f64; 2], k2: [f64; 2], k3: [f64; 2], k4: [f64; 2]| {
        [
            a[0] + ds / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            a[1] + ds / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    };
    (comb(x, k1x, k2x, k3x, k4x), comb(xi, k1e, k2e, k3e, k4e))
}

pub const MAX_HALVINGS: u32 = 12;
pub const STEP_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RayRun {
    pub states: Vec<RayState>,
    pub h_drift: f64,
    /// Flow time at which `|X|` first exceeded the escape radius.
    pub exit_time: Option<f64>,
}

/// Integrates the flow from `(x0, ξ0)` with signed step `ds` for `|s| <= s_max`.
/// When `escape_radius` is given, stops once `|X|` exceeds it. States are kept
/// only when `record` is set (the endpoints are always kept).
#[allow(clippy::too_many_arguments)]
pub fn integrate(
    metric: &dyn Metric,
    x0: [f64; 2],
    xi0: [f64; 2],
    ds: f64,
    s_max: f64,
    escape_radius: Option<f64>,
    record: bool,
    t: f64,
) -> Result<RayRun> {
    let d = metric.dim();
    if util::norm(&xi0[..d]) < 1e-8 {
        return Err(QlsError::DegenerateCovector(util::norm(&xi0[..d])));
    }
    if !(ds != 0.0 && ds.is_finite() && s_max >= 0.0) {
        return Err(QlsError::OutOfRange(format!("ds = {ds}, s_max = {s_max}")));
    }
    let h0 = h_value(metric, &x0, &xi0, t);
    let mut x = x0;
    let mut xi = xi0;
    let mut s = 0.0f64;
    let mut states = vec![RayState { x, xi, s }];
    let mut drift = 0.0f64;
    let dir = ds.signum();
    let step = ds.abs();
    while s < s_max * (1.0 - 1e-14) {
        let target = (s + step).min(s_max);
        let h_prev = h_value(metric, &x, &xi, t);
        // advance from s to target, halving on excessive per-step drift
        let mut sub = target - s;
        let mut halvings = 0;
        let (mut nx, mut nxi);
        loop {
            let pieces = 1usize << halvings;
            let hs = sub / pieces as f64;
            nx = x;
            nxi = xi;
            for _ in 0..pieces {
                let (a, b) = rk4(metric, nx, nxi, dir * hs, t);
                nx = a;
                nxi = b;
            }
            let dh = (h_value(metric, &nx, &nxi, t) - h_prev).abs();
            if dh <= STEP_DRIFT_TOL * h_prev.abs() {
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(QlsError::StepRejected {
                    s: dir * s,
                    drift: dh,
                    halvings: MAX_HALVINGS,
                });
            }
            sub = target - s;
        }
        if util::norm(&nxi[..d]) < 1e-8 {
            return Err(QlsError::DegenerateCovector(util::norm(&nxi[..d])));
        }
        let prev_r = util::norm(&x[..d]);
        let prev_s = s;
        x = nx;
        xi = nxi;
        s = target;
        drift = drift.max((h_value(metric, &x, &xi, t) - h0).abs());
        if record {
            states.push(RayState { x, xi, s: dir * s });
        }
        if let Some(er) = escape_radius {
            let r = util::norm(&x[..d]);
            if r > er {
                let frac = if r > prev_r { (er - prev_r) / (r - prev_r) } else { 1.0 };
                let exit = prev_s + frac.clamp(0.0, 1.0) * (s - prev_s);
                if !record {
                    states.push(RayState { x, xi, s: dir * s });
                }
                return Ok(RayRun {
                    states,
                    h_drift: drift,
                    exit_time: Some(exit),
                });
            }
        }
    }
    if !record {
        states.push(RayState { x, xi, s: dir * s });
    }
    Ok(RayRun {
        states,
        h_drift: drift,
        exit_time: None,
    })
}

/// Full trajectory of the flow on `[0, s_max]` (negative `ds` integrates backward).
pub fn integrate_ray(metric: &dyn Metric, x0: [f64; 2], xi0: [f64; 2], ds: f64, s_max: f64) -> Result<Vec<RayState>> {
    Ok(integrate(metric, x0, xi0, ds, s_max, None, true, 0.0)?.states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayStatus {
    Escaped,
    Undetermined,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayRecord {
    pub x0: [f64; 2],
    pub xi0: [f64; 2],
    pub escaped_forward: bool,
    pub escaped_backward: bool,
    pub exit_time_forward: Option<f64>,
    pub exit_time_backward: Option<f64>,
    pub h_drift: f64,
    pub status: RayStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RayVerdict {
    pub rays: Vec<RayRecord>,
    pub nontrapping_on_sample: bool,
    pub undetermined: usize,
    pub failed: usize,
    pub worst_ray: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    pub escape_radius: f64,
    pub s_budget: f64,
    pub ds: f64,
    pub t: f64,
}

impl ClassifyOptions {
    pub fn for_grid(grid: &Grid) -> Self {
        ClassifyOptions {
            escape_radius: grid.half_length() / 2.0,
            s_budget: 50.0,
            ds: 1e-2,
            t: 0.0,
        }
    }
}

/// Default sample: `per_axis^n` positions in `|x_i| <= escape_radius/2` and unit
/// covectors (`±1` in 1-D, `directions` angles in 2-D).
pub fn default_sample(dim: usize, escape_radius: f64, per_axis: usize, directions: usize) -> Vec<([f64; 2], [f64; 2])> {
    let r = escape_radius / 2.0;
    let ax = util::linspace(-r, r, per_axis);
    let xs: Vec<[f64; 2]> = if dim == 1 {
        ax.iter().map(|&a| [a, 0.0]).collect()
    } else {
        ax.iter().flat_map(|&a| ax.iter().map(move |&b| [a, b])).collect()
    };
    let dirs: Vec<[f64; 2]> = if dim == 1 {
        vec![[1.0, 0.0], [-1.0, 0.0]]
    } else {
        (0..directions)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / directions as f64;
                [a.cos(), a.sin()]
            })
            .collect()
    };
    xs.iter()
        .flat_map(|x| dirs.iter().map(move |d| (*x, *d)))
        .collect()
}

pub fn classify_nontrapping(metric: &dyn Metric, sample: &[([f64; 2], [f64; 2])], opts: &ClassifyOptions) -> RayVerdict {
    let rays: Vec<RayRecord> = sample
        .par_iter()
        .map(|&(x0, xi0)| {
            let fwd = integrate(metric, x0, xi0, opts.ds, opts.s_budget, Some(opts.escape_radius), false, opts.t);
            let bwd = integrate(metric, x0, xi0, -opts.ds, opts.s_budget, Some(opts.escape_radius), false, opts.t);
            match (fwd, bwd) {
                (Ok(f), Ok(b)) => {
                    let (ef, eb) = (f.exit_time.is_some(), b.exit_time.is_some());
                    RayRecord {
                        x0,
                        xi0,
                        escaped_forward: ef,
                        escaped_backward: eb,
                        exit_time_forward: f.exit_time,
                        exit_time_backward: b.exit_time,
                        h_drift: f.h_drift.max(b.h_drift),
                        status: if ef && eb {
                            RayStatus::Escaped
                        } else {
                            RayStatus::Undetermined
                        },
                        error: None,
                    }
                }
                (f, b) => {
                    let err = f.err().or(b.err()).map(|e| e.to_string());
                    RayRecord {
                        x0,
                        xi0,
                        escaped_forward: false,
                        escaped_backward: false,
                        exit_time_forward: None,
                        exit_time_backward: None,
                        h_drift: f64::NAN,
                        status: RayStatus::Failed,
                        error: err,
                    }
                }
            }
        })
        .collect();
    let undetermined = rays.iter().filter(|r| r.status == RayStatus::Undetermined).count();
    let failed = rays.iter().filter(|r| r.status == RayStatus::Failed).count();
    let worst_ray = rays
        .iter()
        .position(|r| r.status != RayStatus::Escaped)
        .or_else(|| {
            rays.iter()
                .enumerate()
                .max_by(|a, b| {
                    let ta = a.1.exit_time_forward.unwrap_or(0.0).max(a.1.exit_time_backward.unwrap_or(0.0));
                    let tb = b.1.exit_time_forward.unwrap_or(0.0).max(b.1.exit_time_backward.unwrap_or(0.0));
                    ta.total_cmp(&tb)
                })
                .map(|(i, _)| i)
        });
    RayVerdict {
        nontrapping_on_sample: undetermined == 0 && failed == 0,
        undetermined,
        failed,
        worst_ray,
        rays,
    }
}
