//! Coefficient families `a, b₁, b₂, c₁, c₂, f`, their validators, freezing at
//! a state, and the cube decomposition of decaying fields.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QlsError, Result};
use crate::grid::{CubePartition, Grid, StateField, C64, I, ZERO};
use crate::hamiltonian::{
    self, mat_max_abs, mat_scale, mat_sub, sym_eigen, ClassifyOptions, GriddedMetric, Mat2, Metric, Profile,
    IDENTITY,
};
use crate::report::{EstimateReport, ReportEntry};
use crate::util::{self, bump, japanese};

/// Arguments `(u, ū, ∇u, ∇ū)` of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub u: C64,
    pub ubar: C64,
    pub grad_u: [C64; 2],
    pub grad_ubar: [C64; 2],
}

impl Jet {
    pub const ZERO: Jet = Jet {
        u: ZERO,
        ubar: ZERO,
        grad_u: [ZERO; 2],
        grad_ubar: [ZERO; 2],
    };

    /// `|z⃗|` over the `2n + 2` components.
    pub fn norm(&self, dim: usize) -> f64 {
        let mut s = self.u.norm_sqr() + self.ubar.norm_sqr();
        for i in 0..dim {
            s += self.grad_u[i].norm_sqr() + self.grad_ubar[i].norm_sqr();
        }
        s.sqrt()
    }

    /// Component `i` of `z⃗ = (u, ū, ∇u, ∇ū)` for `i < 2n + 2`.
    pub fn component_mut(&mut self, i: usize, dim: usize) -> &mut C64 {
        match i {
            0 => &mut self.u,
            1 => &mut self.ubar,
            _ if i < 2 + dim => &mut self.grad_u[i - 2],
            _ => &mut self.grad_ubar[i - 2 - dim],
        }
    }

    pub fn axpy(&self, h: f64, d: &Jet) -> Jet {
        Jet {
            u: self.u + d.u * h,
            ubar: self.ubar + d.ubar * h,
            grad_u: [self.grad_u[0] + d.grad_u[0] * h, self.grad_u[1] + d.grad_u[1] * h],
            grad_ubar: [
                self.grad_ubar[0] + d.grad_ubar[0] * h,
                self.grad_ubar[1] + d.grad_ubar[1] * h,
            ],
        }
    }
}

type AFn = dyn Fn(&[f64], f64, &Jet) -> Mat2 + Send + Sync;
type VFn = dyn Fn(&[f64], f64, &Jet) -> [C64; 2] + Send + Sync;
type CFn = dyn Fn(&[f64], f64, C64, C64) -> C64 + Send + Sync;
type FFn = dyn Fn(&[f64], f64) -> C64 + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metadata {
    /// Radius `M` of the ball `B_M` on which the assumptions are claimed.
    pub m_radius: f64,
    pub gamma_m: f64,
    pub c_m: f64,
    pub c0: f64,
}

#[derive(Clone)]
pub struct CoefficientSet {
    pub dim: usize,
    pub name: String,
    pub meta: Metadata,
    pub time_dependent: bool,
    /// No explicit `x` dependence.
    pub translation_invariant: bool,
    a: Arc<AFn>,
    b1: Arc<VFn>,
    b2: Arc<VFn>,
    c1: Arc<CFn>,
    c2: Arc<CFn>,
    f: Arc<FFn>,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("name", &self.name)
            .field("meta", &self.meta)
            .finish()
    }
}

fn zero_vec(_: &[f64], _: f64, _: &Jet) -> [C64; 2] {
    [ZERO; 2]
}

fn zero_c(_: &[f64], _: f64, _: C64, _: C64) -> C64 {
    ZERO
}

impl CoefficientSet {
    /// `a = I`, everything else zero.
    pub fn flat(dim: usize) -> Self {
        CoefficientSet {
            dim,
            name: "flat".into(),
            meta: Metadata {
                m_radius: 10.0,
                gamma_m: 1.0,
                c_m: 0.0,
                c0: 1.0,
            },
            time_dependent: false,
            translation_invariant: true,
            a: Arc::new(|_, _, _| IDENTITY),
            b1: Arc::new(zero_vec),
            b2: Arc::new(zero_vec),
            c1: Arc::new(zero_c),
            c2: Arc::new(zero_c),
            f: Arc::new(|_, _| ZERO),
        }
    }

    pub fn with_a<F: Fn(&[f64], f64, &Jet) -> Mat2 + Send + Sync + 'static>(mut self, a: F) -> Self {
        self.a = Arc::new(a);
        self
    }
    pub fn with_b1<F: Fn(&[f64], f64, &Jet) -> [C64; 2] + Send + Sync + 'static>(mut self, b: F) -> Self {
        self.b1 = Arc::new(b);
        self
    }
    pub fn with_b2<F: Fn(&[f64], f64, &Jet) -> [C64; 2] + Send + Sync + 'static>(mut self, b: F) -> Self {
        self.b2 = Arc::new(b);
        self
    }
    pub fn with_c1<F: Fn(&[f64], f64, C64, C64) -> C64 + Send + Sync + 'static>(mut self, c: F) -> Self {
        self.c1 = Arc::new(c);
        self
    }
    pub fn with_c2<F: Fn(&[f64], f64, C64, C64) -> C64 + Send + Sync + 'static>(mut self, c: F) -> Self {
        self.c2 = Arc::new(c);
        self
    }
    pub fn with_f<F: Fn(&[f64], f64) -> C64 + Send + Sync + 'static>(mut self, f: F) -> Self {
        self.f = Arc::new(f);
        self
    }
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
    pub fn with_meta(mut self, meta: Metadata) -> Self {
        self.meta = meta;
        self
    }

    pub fn a(&self, x: &[f64], t: f64, z: &Jet) -> Mat2 {
        (self.a)(x, t, z)
    }
    pub fn b1(&self, x: &[f64], t: f64, z: &Jet) -> [C64; 2] {
        (self.b1)(x, t, z)
    }
    pub fn b2(&self, x: &[f64], t: f64, z: &Jet) -> [C64; 2] {
        (self.b2)(x, t, z)
    }
    pub fn c1(&self, x: &[f64], t: f64, u: C64, ub: C64) -> C64 {
        (self.c1)(x, t, u, ub)
    }
    pub fn c2(&self, x: &[f64], t: f64, u: C64, ub: C64) -> C64 {
        (self.c2)(x, t, u, ub)
    }
    pub fn f(&self, x: &[f64], t: f64) -> C64 {
        (self.f)(x, t)
    }

    pub fn has_forcing(&self, grid: &Grid, t: f64) -> bool {
        let d = grid.dim();
        (0..grid.len()).any(|i| self.f(&grid.point(i)[..d], t) != ZERO)
    }

    /// Metric `a(x, t, 0)` for ray tracing at the zero state.
    pub fn zero_state_metric(&self) -> CoefficientMetric {
        CoefficientMetric {
            cs: self.clone(),
        }
    }
}

/// `a(x, t, 0)` viewed as a metric.
#[derive(Debug, Clone)]
pub struct CoefficientMetric {
    cs: CoefficientSet,
}

impl Metric for CoefficientMetric {
    fn dim(&self) -> usize {
        self.cs.dim
    }
    fn value(&self, x: &[f64], t: f64) -> Mat2 {
        self.cs.a(x, t, &Jet::ZERO)
    }
    fn label(&self) -> String {
        format!("a[{}](z=0)", self.cs.name)
    }
}

/// Parameters of the built-in coefficient families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyParams {
    pub amplitude: f64,
    pub radius: f64,
    pub kappa: f64,
    pub omega: f64,
    pub modulation: f64,
    pub ring_depth: f64,
    pub ring_r0: f64,
    pub ring_width: f64,
    pub forcing_amplitude: f64,
    pub forcing_width: f64,
    pub ball_radius: f64,
    /// Absorbing layer `c₁ −= κ·ramp(|x_i|)` for `|x_i| >= sponge_start`;
    /// disabled when `sponge_strength = 0`.
    pub sponge_strength: f64,
    pub sponge_start: f64,
    pub sponge_width: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            amplitude: 0.1,
            radius: 4.0,
            kappa: 1.0,
            omega: 1.0,
            modulation: 0.5,
            ring_depth: 0.5,
            ring_r0: 1.5,
            ring_width: 0.5,
            forcing_amplitude: 0.0,
            forcing_width: 1.0,
            ball_radius: 10.0,
            sponge_strength: 0.0,
            sponge_start: 0.0,
            sponge_width: 1.0,
        }
    }
}

pub const FAMILIES: [&str; 7] = [
    "flat",
    "bump-metric",
    "time-modulated-bump",
    "quadratic-b1",
    "cubic-semilinear",
    "ring-trap",
    "quasilinear-metric",
];

fn radial(x: &[f64]) -> f64 {
    util::norm(x)
}

/// Generous bound on `⟨x⟩²` times the C² size of `A·β(|x|/ρ)`.
fn bump_flatness_claim(amplitude: f64, radius: f64) -> f64 {
    30.0 * amplitude.abs() * (1.0 + radius * radius) / radius.min(1.0).powi(2)
}

/// Builds a registry family by name.
pub fn registry(name: &str, dim: usize, p: &FamilyParams) -> Result<CoefficientSet> {
    if dim != 1 && dim != 2 {
        return Err(QlsError::InvalidConfig(format!("dimension {dim} not in {{1,2}}")));
    }
    let mut cs = CoefficientSet::flat(dim);
    cs.meta.m_radius = p.ball_radius;
    let (amp, rho) = (p.amplitude, p.radius);
    let bump_gamma = |lo: f64, hi: f64| lo.min(1.0 / hi);
    cs = match name {
        "flat" => cs,
        "bump-metric" => {
            if 1.0 + amp.min(0.0) <= 0.0 {
                return Err(QlsError::InvalidConfig("bump amplitude destroys ellipticity".into()));
            }
            let meta = Metadata {
                gamma_m: bump_gamma(1.0 + amp.min(0.0), 1.0 + amp.max(0.0)),
                c_m: bump_flatness_claim(amp, rho),
                ..cs.meta
            };
            cs.with_a(move |x, _, _| mat_scale(IDENTITY, 1.0 + amp * bump(radial(x) / rho)))
                .with_meta(meta)
        }
        "time-modulated-bump" => {
            let (om, md) = (p.omega, p.modulation);
            let lo = 1.0 + (amp * (1.0 + md.abs())).min(0.0).min(amp * (1.0 - md.abs()));
            let hi = 1.0 + (amp * (1.0 + md.abs())).max(0.0);
            if lo <= 0.0 {
                return Err(QlsError::InvalidConfig("modulated bump destroys ellipticity".into()));
            }
            let meta = Metadata {
                gamma_m: bump_gamma(lo, hi),
                c_m: bump_flatness_claim(amp * (1.0 + md.abs()) * (1.0 + om.abs()), rho),
                ..cs.meta
            };
            let mut cs = cs
                .with_a(move |x, t, _| {
                    mat_scale(IDENTITY, 1.0 + amp * bump(radial(x) / rho) * (1.0 + md * (om * t).sin()))
                })
                .with_meta(meta);
            cs.time_dependent = true;
            cs
        }
        "quadratic-b1" => {
            let k = p.kappa;
            cs.with_b1(move |_, _, z| {
                let v = z.u * z.ubar * k;
                [v, v]
            })
        }
        "cubic-semilinear" => {
            let k = p.kappa;
            cs.with_c1(move |_, _, u, ub| -I * k * u * ub)
        }
        "ring-trap" => {
            let prof = Profile::RingTrap {
                depth: p.ring_depth,
                r0: p.ring_r0,
                width: p.ring_width,
            };
            if p.ring_depth >= 1.0 {
                return Err(QlsError::InvalidConfig("ring depth must be < 1".into()));
            }
            let meta = Metadata {
                gamma_m: 1.0 - p.ring_depth.max(0.0),
                c_m: bump_flatness_claim(p.ring_depth, p.ring_width) * (1.0 + (p.ring_r0 + p.ring_width).powi(2)),
                ..cs.meta
            };
            cs.with_a(move |x, _, _| mat_scale(IDENTITY, prof.n(radial(x)))).with_meta(meta)
        }
        "quasilinear-metric" => {
            let k = p.kappa;
            let lo = 1.0 + amp.min(0.0) + k.min(0.0);
            let hi = 1.0 + amp.max(0.0) + k.max(0.0);
            if lo <= 0.0 {
                return Err(QlsError::InvalidConfig(format!(
                    "quasilinear metric not elliptic: 1 + min(A,0) + min(kappa,0) = {lo}"
                )));
            }
            let meta = Metadata {
                gamma_m: bump_gamma(lo, hi),
                c_m: bump_flatness_claim(amp, rho) + 30.0 * k.abs(),
                ..cs.meta
            };
            cs.with_a(move |x, _, z| {
                let jx = japanese(x);
                let w = (z.u * z.ubar).re;
                mat_scale(IDENTITY, 1.0 + amp * bump(radial(x) / rho) + k * w / ((1.0 + w) * jx * jx))
            })
            .with_meta(meta)
        }
        other => return Err(QlsError::UnknownFamily(other.to_string())),
    };
    cs.translation_invariant = matches!(name, "flat" | "quadratic-b1" | "cubic-semilinear");
    if p.forcing_amplitude != 0.0 {
        let (fa, fw) = (p.forcing_amplitude, p.forcing_width);
        cs = cs.with_f(move |x, _| C64::new(fa * (-(radial(x) / fw).powi(2)).exp(), 0.0));
        cs.translation_invariant = false;
    }
    if p.sponge_strength != 0.0 {
        let (k, x0, w) = (p.sponge_strength, p.sponge_start, p.sponge_width);
        let base = cs.c1.clone();
        cs = cs.with_c1(move |x, t, u, ub| {
            let ramp: f64 = x.iter().map(|xi| util::smooth_step((xi.abs() - x0) / w)).sum();
            base(x, t, u, ub) - C64::new(k * ramp, 0.0)
        });
        cs.translation_invariant = false;
    }
    Ok(cs.named(name))
}

/// Jet of `u` at every grid point, gradients computed spectrally.
pub fn jets(u: &StateField) -> Result<Vec<Jet>> {
    let g = u.grid();
    let grads = g.gradient(u.values())?;
    Ok((0..g.len())
        .map(|i| {
            let mut j = Jet {
                u: u.values()[i],
                ubar: u.values()[i].conj(),
                ..Jet::ZERO
            };
            for (d, gd) in grads.iter().enumerate() {
                j.grad_u[d] = gd[i];
                j.grad_ubar[d] = gd[i].conj();
            }
            j
        })
        .collect())
}

fn check_ball(cs: &CoefficientSet, jets: &[Jet]) -> Result<()> {
    let max_z = jets.iter().map(|j| j.norm(cs.dim)).fold(0.0, f64::max);
    if max_z > cs.meta.m_radius {
        return Err(QlsError::BallExcursion {
            max_z,
            radius: cs.meta.m_radius,
        });
    }
    Ok(())
}

/// `𝓛(v)w = i a_{jk}(z_v) ∂_j∂_k w + b₁(z_v)·∇w + b₂(z_v)·∇w̄ + c₁(v)w + c₂(v)w̄`.
pub fn apply_nonlinear_operator(cs: &CoefficientSet, v: &StateField, w: &StateField, t: f64) -> Result<StateField> {
    let g = v.grid();
    let d = g.dim();
    let zv = jets(v)?;
    check_ball(cs, &zv)?;
    let wv = w.values();
    let wb: Vec<C64> = wv.iter().map(|c| c.conj()).collect();
    let gw = g.gradient(wv)?;
    let gwb = g.gradient(&wb)?;
    let mut hess = vec![vec![Vec::new(); d]; d];
    #[allow(clippy::needless_range_loop)]
    for j in 0..d {
        for k in j..d {
            let h = g.derivative(&gw[j], k)?;
            hess[j][k] = h.clone();
            hess[k][j] = h;
        }
    }
    let out: Vec<C64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let x = g.point(i);
            let x = &x[..d];
            let z = &zv[i];
            let a = cs.a(x, t, z);
            let b1 = cs.b1(x, t, z);
            let b2 = cs.b2(x, t, z);
            let mut s = ZERO;
            for j in 0..d {
                for k in 0..d {
                    s += I * a[j][k] * hess[j][k][i];
                }
                s += b1[j] * gw[j][i] + b2[j] * gwb[j][i];
            }
            s + cs.c1(x, t, z.u, z.ubar) * wv[i] + cs.c2(x, t, z.u, z.ubar) * wb[i]
        })
        .collect();
    Ok(w.with_values(out).with_time(t))
}

/// Right side `−εΔ²u + 𝓛(u)u + f` of the viscous equation.
pub fn nonlinear_rhs(cs: &CoefficientSet, u: &StateField, t: f64, eps: f64) -> Result<StateField> {
    let g = u.grid();
    let d = g.dim();
    let lu = apply_nonlinear_operator(cs, u, u, t)?;
    let visc = if eps > 0.0 {
        g.apply_multiplier(u.values(), |_, k| {
            let k2 = k[0] * k[0] + k[1] * k[1];
            C64::new(-eps * k2 * k2, 0.0)
        })?
    } else {
        vec![ZERO; g.len()]
    };
    let out = (0..g.len())
        .map(|i| lu.values()[i] + visc[i] + cs.f(&g.point(i)[..d], t))
        .collect();
    Ok(u.with_values(out).with_time(t))
}

/// Linear coefficients of the divergence-form equation
/// `∂_t u = i∂_j(a_{jk}∂_k u) + b₁·∇u + b₂·∇ū + c₁u + c₂ū + f` at one time.
#[derive(Debug, Clone)]
pub struct FrozenLinearCoefficients {
    pub grid: Grid,
    pub t: f64,
    pub a: Vec<Mat2>,
    pub b1: Vec<[C64; 2]>,
    pub b2: Vec<[C64; 2]>,
    pub c1: Vec<C64>,
    pub c2: Vec<C64>,
    pub f: Vec<C64>,
    /// `d/dt a` along the solution, when computed.
    pub a_t: Option<Vec<Mat2>>,
    pub b1_t: Option<Vec<[C64; 2]>>,
    pub max_z: f64,
}

impl FrozenLinearCoefficients {
    pub fn metric(&self) -> Result<GriddedMetric> {
        GriddedMetric::new(&self.grid, self.a.clone(), format!("frozen a(t={})", self.t))
    }

    /// `sup ⟨x⟩² |I − a|` and `sup ⟨x⟩² |∇a|` (grid differences).
    pub fn flatness_constant(&self) -> f64 {
        let g = &self.grid;
        let d = g.dim();
        let gm = match self.metric() {
            Ok(m) => m,
            Err(_) => return f64::INFINITY,
        };
        (0..g.len())
            .map(|i| {
                let x = g.point(i);
                let jx = japanese(&x[..d]).powi(2);
                let mut v = mat_max_abs(&mat_sub(IDENTITY, self.a[i]), d);
                let gr = gm.gradient(&x[..d], self.t);
                for gi in gr.iter().take(d) {
                    v = v.max(mat_max_abs(gi, d));
                }
                jx * v
            })
            .fold(0.0, f64::max)
    }

    pub fn is_b2_zero(&self) -> bool {
        self.b2.iter().all(|b| b[0] == ZERO && b[1] == ZERO)
    }
}

/// Linear part of `cs` at the zero state, without time derivatives.
pub fn freeze_linear_coefficients(cs: &CoefficientSet, grid: &Grid, t: f64) -> Result<FrozenLinearCoefficients> {
    freeze_impl(cs, &StateField::zeros(grid, t), t, 0.0, false)
}

/// Evaluates the coefficients at `(x, t, u, ū, ∇u, ∇ū)`; `b₁` absorbs the
/// divergence correction `−i ∂_j a_{jk}`. Time derivatives follow the chain
/// rule with `∂_t u` taken from the equation itself.
pub fn freeze_at_state(cs: &CoefficientSet, u: &StateField, t: f64, eps: f64) -> Result<FrozenLinearCoefficients> {
    freeze_impl(cs, u, t, eps, true)
}

fn freeze_impl(
    cs: &CoefficientSet,
    u: &StateField,
    t: f64,
    eps: f64,
    with_time_derivatives: bool,
) -> Result<FrozenLinearCoefficients> {
    let g = u.grid();
    let d = g.dim();
    let z = jets(u)?;
    check_ball(cs, &z)?;
    let max_z = z.iter().map(|j| j.norm(d)).fold(0.0, f64::max);
    let pts: Vec<[f64; 2]> = g.coords_iter().collect();
    let a: Vec<Mat2> = (0..g.len()).map(|i| cs.a(&pts[i][..d], t, &z[i])).collect();
    let mut b1: Vec<[C64; 2]> = (0..g.len()).map(|i| cs.b1(&pts[i][..d], t, &z[i])).collect();
    let b2: Vec<[C64; 2]> = (0..g.len()).map(|i| cs.b2(&pts[i][..d], t, &z[i])).collect();
    let c1: Vec<C64> = (0..g.len()).map(|i| cs.c1(&pts[i][..d], t, z[i].u, z[i].ubar)).collect();
    let c2: Vec<C64> = (0..g.len()).map(|i| cs.c2(&pts[i][..d], t, z[i].u, z[i].ubar)).collect();
    let f: Vec<C64> = (0..g.len()).map(|i| cs.f(&pts[i][..d], t)).collect();
    // divergence correction: i a ∂∂u = i∂_j(a_jk ∂_k u) − i(∂_j a_jk)∂_k u
    for k in 0..d {
        let mut div = vec![ZERO; g.len()];
        for j in 0..d {
            let col: Vec<C64> = a.iter().map(|m| C64::new(m[j][k], 0.0)).collect();
            let dcol = g.derivative(&col, j)?;
            for (acc, v) in div.iter_mut().zip(dcol) {
                *acc += C64::new(v.re, 0.0);
            }
        }
        for (b, dv) in b1.iter_mut().zip(&div) {
            b[k] -= I * dv;
        }
    }
    let (a_t, b1_t) = if with_time_derivatives {
        let (a_t, b1_t) = time_derivatives(cs, u, &z, t, eps)?;
        (Some(a_t), Some(b1_t))
    } else {
        (None, None)
    };
    Ok(FrozenLinearCoefficients {
        grid: g.clone(),
        t,
        a,
        b1,
        b2,
        c1,
        c2,
        f,
        a_t,
        b1_t,
        max_z,
    })
}

#[allow(clippy::type_complexity)]
fn time_derivatives(
    cs: &CoefficientSet,
    u: &StateField,
    z: &[Jet],
    t: f64,
    eps: f64,
) -> Result<(Vec<Mat2>, Vec<[C64; 2]>)> {
    let g = u.grid();
    let d = g.dim();
    let ut = nonlinear_rhs(cs, u, t, eps)?;
    let zt = jets(&ut)?;
    let h = 1e-6;
    let ht = 1e-5;
    let out: Vec<(Mat2, [C64; 2])> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let x = g.point(i);
            let x = &x[..d];
            let scale = zt[i].norm(d).max(1.0);
            let hz = h / scale;
            let zp = z[i].axpy(hz, &zt[i]);
            let zm = z[i].axpy(-hz, &zt[i]);
            let mut at = mat_scale(mat_sub(cs.a(x, t, &zp), cs.a(x, t, &zm)), 0.5 / hz);
            let mut bt = [ZERO; 2];
            let (bp, bm) = (cs.b1(x, t, &zp), cs.b1(x, t, &zm));
            for k in 0..2 {
                bt[k] = (bp[k] - bm[k]) / (2.0 * hz);
            }
            if cs.time_dependent {
                let explicit = mat_scale(mat_sub(cs.a(x, t + ht, &z[i]), cs.a(x, t - ht, &z[i])), 0.5 / ht);
                at = hamiltonian::mat_add(at, explicit);
                let (bp, bm) = (cs.b1(x, t + ht, &z[i]), cs.b1(x, t - ht, &z[i]));
                for k in 0..2 {
                    bt[k] += (bp[k] - bm[k]) / (2.0 * ht);
                }
            }
            (at, bt)
        })
        .collect();
    Ok(out.into_iter().unzip())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    pub z_samples: usize,
    pub x_stride: usize,
    pub times: [f64; 3],
    pub seed: u64,
    /// Ray classification for NL7; skipped when `None`.
    pub rays: Option<ClassifyOptions>,
    pub ray_positions: usize,
    pub ray_directions: usize,
}

impl ValidationOptions {
    pub fn for_grid(grid: &Grid) -> Self {
        ValidationOptions {
            z_samples: 8,
            x_stride: (grid.points_per_axis() / 32).max(1),
            times: [0.0, 0.5, 1.0],
            seed: 0,
            rays: Some(ClassifyOptions::for_grid(grid)),
            ray_positions: 8,
            ray_directions: 16,
        }
    }
}

fn random_jet<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Jet {
    let mut j = Jet::ZERO;
    let n = 2 + 2 * dim;
    for i in 0..n {
        *j.component_mut(i, dim) = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
    }
    let r = rng.gen::<f64>().sqrt() * radius * (1.0 - 1e-9);
    let nn = j.norm(dim);
    let mut out = Jet::ZERO;
    for i in 0..n {
        let v = *j.component_mut(i, dim);
        *out.component_mut(i, dim) = v * (r / nn);
    }
    out
}

fn sample_x(grid: &Grid, stride: usize) -> Vec<[f64; 2]> {
    let n = grid.points_per_axis();
    let ax: Vec<usize> = (0..n).step_by(stride).collect();
    if grid.dim() == 1 {
        ax.iter().map(|&i| grid.point(i)).collect()
    } else {
        ax.iter()
            .flat_map(|&a| ax.iter().map(move |&b| grid.point(grid.join_index([a, b]))))
            .collect()
    }
}

/// Spatial derivatives of `a` up to order 2 at a point, by central differences.
fn a_derivative_sup(cs: &CoefficientSet, x: &[f64], t: f64, z: &Jet) -> f64 {
    let d = cs.dim;
    let h = 1e-3;
    let at = |dx: [f64; 2], dt: f64| {
        let y = [x[0] + dx[0], if d > 1 { x[1] + dx[1] } else { 0.0 }];
        cs.a(&y[..d], t + dt, z)
    };
    let mut sup = 0.0f64;
    let e = |i: usize| {
        let mut v = [0.0; 2];
        v[i] = h;
        v
    };
    let neg = |v: [f64; 2]| [-v[0], -v[1]];
    let a0 = at([0.0; 2], 0.0);
    for i in 0..d {
        let g1 = mat_scale(mat_sub(at(e(i), 0.0), at(neg(e(i)), 0.0)), 0.5 / h);
        sup = sup.max(mat_max_abs(&g1, d));
        let g2 = mat_scale(
            hamiltonian::mat_add(mat_sub(at(e(i), 0.0), mat_scale(a0, 2.0)), at(neg(e(i)), 0.0)),
            1.0 / (h * h),
        );
        sup = sup.max(mat_max_abs(&g2, d));
        if cs.time_dependent {
            let m = |sx: f64, st: f64| at([e(i)[0] * sx, e(i)[1] * sx], st * h);
            let xt = mat_scale(
                mat_sub(mat_sub(m(1.0, 1.0), m(1.0, -1.0)), mat_sub(m(-1.0, 1.0), m(-1.0, -1.0))),
                0.25 / (h * h),
            );
            sup = sup.max(mat_max_abs(&xt, d));
        }
    }
    if d == 2 {
        let m = |s0: f64, s1: f64| at([s0 * h, s1 * h], 0.0);
        let xy = mat_scale(
            mat_sub(mat_sub(m(1.0, 1.0), m(1.0, -1.0)), mat_sub(m(-1.0, 1.0), m(-1.0, -1.0))),
            0.25 / (h * h),
        );
        sup = sup.max(mat_max_abs(&xy, d));
    }
    if cs.time_dependent {
        let gt = mat_scale(mat_sub(at([0.0; 2], h), at([0.0; 2], -h)), 0.5 / h);
        sup = sup.max(mat_max_abs(&gt, d));
    }
    sup
}

/// Per-assumption report. NL7 runs the ray classifier on `a(x, 0, 0)`.
pub fn validate_assumptions(cs: &CoefficientSet, grid: &Grid, opts: &ValidationOptions) -> EstimateReport {
    let d = cs.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut zs = vec![Jet::ZERO];
    zs.extend((0..opts.z_samples).map(|_| random_jet(&mut rng, d, cs.meta.m_radius)));
    let xs = sample_x(grid, opts.x_stride);
    let combos: Vec<([f64; 2], f64, Jet)> = xs
        .iter()
        .flat_map(|x| {
            let zs = &zs;
            opts.times.iter().flat_map(move |&t| zs.iter().map(move |z| (*x, t, *z)))
        })
        .collect();

    #[derive(Clone, Copy)]
    struct Acc {
        asym: (f64, [f64; 2]),
        gamma: (f64, [f64; 2]),
        flat: (f64, [f64; 2]),
        finite: bool,
    }
    let init = Acc {
        asym: (0.0, [0.0; 2]),
        gamma: (f64::INFINITY, [0.0; 2]),
        flat: (0.0, [0.0; 2]),
        finite: true,
    };
    let acc = combos
        .par_iter()
        .map(|(x, t, z)| {
            let xs = &x[..d];
            let a = cs.a(xs, *t, z);
            let asym = (a[0][1] - a[1][0]).abs();
            let (lo, hi) = sym_eigen(&a, d);
            let gamma = lo.min(1.0 / hi);
            let jx = japanese(xs).powi(2);
            let flat = jx * mat_max_abs(&mat_sub(IDENTITY, a), d).max(a_derivative_sup(cs, xs, *t, z));
            let finite = a.iter().flatten().all(|v| v.is_finite());
            Acc {
                asym: (asym, *x),
                gamma: (if hi > 0.0 { gamma } else { f64::NEG_INFINITY }, *x),
                flat: (flat, *x),
                finite,
            }
        })
        .reduce(
            || init,
            |p, q| Acc {
                asym: if q.asym.0 > p.asym.0 { q.asym } else { p.asym },
                gamma: if q.gamma.0 < p.gamma.0 { q.gamma } else { p.gamma },
                flat: if q.flat.0 > p.flat.0 { q.flat } else { p.flat },
                finite: p.finite && q.finite,
            },
        );
    let mut rep = EstimateReport::new(format!("assumptions[{}]", cs.name));
    rep.check_le("NL1:finite", if acc.finite { 0.0 } else { 1.0 }, 0.0, None);
    rep.check_le("NL2:real", 0.0, 0.0, None);
    rep.check_le("NL3:symmetric", acc.asym.0, 1e-12, Some(acc.asym.1[..d].to_vec()));
    let mut e = ReportEntry {
        name: "NL4:gamma_M".into(),
        measured: acc.gamma.0,
        bound: cs.meta.gamma_m,
        pass: acc.gamma.0 > 0.0 && acc.gamma.0 >= cs.meta.gamma_m * (1.0 - 1e-9),
        worst_point: Some(acc.gamma.1[..d].to_vec()),
        note: None,
    };
    if !e.pass {
        e.note = Some("ellipticity below claimed gamma_M".into());
    }
    rep.push(e);
    rep.check_le("NL5:C_M", acc.flat.0, cs.meta.c_m.max(1e-9), Some(acc.flat.1[..d].to_vec()));

    // NL6: b_j(x,t,0) = 0 and ∂_z b_j(x,t,0) = 0
    let hz = 1e-6;
    let nl6 = xs
        .par_iter()
        .flat_map(|x| opts.times.par_iter().map(move |&t| (*x, t)))
        .map(|(x, t)| {
            let xs = &x[..d];
            let mut worst = 0.0f64;
            for b in [&cs.b1, &cs.b2] {
                let b0 = b(xs, t, &Jet::ZERO);
                worst = worst.max(b0[0].norm().max(b0[1].norm()));
                for comp in 0..(2 + 2 * d) {
                    for dir in [C64::new(1.0, 0.0), I] {
                        let mut zp = Jet::ZERO;
                        *zp.component_mut(comp, d) = dir * hz;
                        let mut zm = Jet::ZERO;
                        *zm.component_mut(comp, d) = -dir * hz;
                        let (bp, bm) = (b(xs, t, &zp), b(xs, t, &zm));
                        for k in 0..d {
                            worst = worst.max(((bp[k] - bm[k]) / (2.0 * hz)).norm());
                        }
                    }
                }
            }
            (worst, x)
        })
        .reduce(|| (0.0, [0.0; 2]), |p, q| if q.0 > p.0 { q } else { p });
    let mut e6 = ReportEntry {
        name: "NL6:b_vanishing".into(),
        measured: nl6.0,
        bound: 1e-8,
        pass: nl6.0 <= 1e-8,
        worst_point: Some(nl6.1[..d].to_vec()),
        note: None,
    };
    if !e6.pass {
        e6.note = Some("b_j or its z-derivative is nonzero at z = 0".into());
    }
    rep.push(e6);

    if let Some(ray_opts) = opts.rays {
        let metric = cs.zero_state_metric();
        let sample = hamiltonian::default_sample(d, ray_opts.escape_radius, opts.ray_positions, opts.ray_directions);
        let v = hamiltonian::classify_nontrapping(&metric, &sample, &ray_opts);
        rep.check_le(
            "NL7:nontrapping",
            (v.undetermined + v.failed) as f64,
            0.0,
            v.worst_ray.map(|i| {
                let r = &v.rays[i];
                let mut p = r.x0[..d].to_vec();
                p.extend_from_slice(&r.xi0[..d]);
                p
            }),
        );
    }
    rep
}

/// Options for the linear (L) and zero-state (D) validators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenValidationOptions {
    /// Derivative order of the `C_b^N` checks.
    pub order: u32,
    /// Claimed constant `C` for the regularity, ellipticity, flatness and
    /// first-order checks.
    pub c_bound: f64,
    pub rays: Option<ClassifyOptions>,
    pub ray_positions: usize,
    pub ray_directions: usize,
}

impl FrozenValidationOptions {
    pub fn for_grid(grid: &Grid) -> Self {
        FrozenValidationOptions {
            order: 2,
            c_bound: 1e3,
            rays: Some(ClassifyOptions::for_grid(grid)),
            ray_positions: 8,
            ray_directions: 16,
        }
    }
}

fn entry_field(a: &[Mat2], i: usize, j: usize) -> Vec<C64> {
    a.iter().map(|m| C64::new(m[i][j], 0.0)).collect()
}

fn matrix_cn(grid: &Grid, a: &[Mat2], order: u32) -> f64 {
    let d = grid.dim();
    let mut best = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            best = best.max(c_n_norm(grid, &entry_field(a, i, j), order));
        }
    }
    best
}

fn ellipticity_constant(a: &[Mat2], d: usize) -> (f64, f64) {
    a.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), m| {
        let (l, h) = sym_eigen(m, d);
        (lo.min(l), hi.max(h))
    })
}

fn asymmetry(a: &[Mat2], d: usize) -> f64 {
    if d < 2 {
        return 0.0;
    }
    a.iter().map(|m| (m[0][1] - m[1][0]).abs()).fold(0.0, f64::max)
}

fn ray_entry(rep: &mut EstimateReport, name: &str, metric: &dyn Metric, d: usize, opts: &FrozenValidationOptions) {
    if let Some(ray_opts) = opts.rays {
        let sample = hamiltonian::default_sample(d, ray_opts.escape_radius, opts.ray_positions, opts.ray_directions);
        let v = hamiltonian::classify_nontrapping(metric, &sample, &ray_opts);
        rep.check_le(
            name,
            (v.undetermined + v.failed) as f64,
            0.0,
            v.worst_ray.map(|i| {
                let r = &v.rays[i];
                let mut p = r.x0[..d].to_vec();
                p.extend_from_slice(&r.xi0[..d]);
                p
            }),
        );
    }
}

/// L1–L5 on a frozen linear coefficient set.
pub fn validate_linear(fr: &FrozenLinearCoefficients, opts: &FrozenValidationOptions) -> EstimateReport {
    let g = &fr.grid;
    let d = g.dim();
    let mut rep = EstimateReport::new(format!("linear[t={}]", fr.t));

    let mut reg = matrix_cn(g, &fr.a, opts.order);
    for k in 0..d {
        let b2: Vec<C64> = fr.b2.iter().map(|b| b[k]).collect();
        reg = reg.max(c_n_norm(g, &b2, opts.order));
    }
    if let Some(at) = &fr.a_t {
        reg = reg.max(matrix_cn(g, at, opts.order));
    }
    let zeroth = fr.c1.iter().chain(&fr.c2).map(|c| c.norm()).fold(0.0, f64::max);
    rep.check_le("L1:regularity", reg.max(zeroth), opts.c_bound, None);

    let (lo, hi) = ellipticity_constant(&fr.a, d);
    let c_ell = if lo > 0.0 { hi.max(1.0 / lo) } else { f64::INFINITY };
    let mut e2 = ReportEntry {
        name: "L2:elliptic".into(),
        measured: c_ell,
        bound: opts.c_bound,
        pass: asymmetry(&fr.a, d) <= 1e-12 && c_ell <= opts.c_bound,
        worst_point: None,
        note: None,
    };
    if !e2.pass {
        e2.note = Some("a not symmetric or not uniformly elliptic".into());
    }
    rep.push(e2);

    let mut flat = fr.flatness_constant();
    if let Some(at) = &fr.a_t {
        let jx = |i: usize| japanese(&g.point(i)[..d]).powi(2);
        flat = flat.max(
            at.iter()
                .enumerate()
                .map(|(i, m)| jx(i) * mat_max_abs(m, d))
                .fold(0.0, f64::max),
        );
    }
    rep.check_le("L3:flat", flat, opts.c_bound, None);

    let re_b1: Vec<C64> = fr
        .b1
        .iter()
        .map(|b| C64::new(b[..d].iter().map(|v| v.re.abs()).fold(0.0, f64::max), 0.0))
        .collect();
    match CubePartition::unit(g).and_then(|part| cube_decompose(&re_b1, &part, DEFAULT_N_SMOOTH)) {
        Ok(dec) => rep.check_le("L4:b1_cubes", dec.weight_sum, opts.c_bound, None),
        Err(e) => rep.push(ReportEntry {
            name: "L4:b1_cubes".into(),
            measured: f64::INFINITY,
            bound: opts.c_bound,
            pass: false,
            worst_point: None,
            note: Some(e.to_string()),
        }),
    }

    match fr.metric() {
        Ok(m) => ray_entry(&mut rep, "L5:nontrapping", &m, d, opts),
        Err(e) => rep.push(ReportEntry {
            name: "L5:nontrapping".into(),
            measured: f64::INFINITY,
            bound: 0.0,
            pass: false,
            worst_point: None,
            note: Some(e.to_string()),
        }),
    }
    rep
}

/// D1–D5 on the zero-state metric `a(x, t, 0)`.
pub fn validate_zero_state(cs: &CoefficientSet, grid: &Grid, t: f64, opts: &FrozenValidationOptions) -> Result<EstimateReport> {
    let fr = freeze_linear_coefficients(cs, grid, t)?;
    let d = grid.dim();
    let mut rep = EstimateReport::new(format!("metric[{}]", cs.name));
    rep.check_le("D1:regularity", matrix_cn(grid, &fr.a, opts.order), opts.c_bound, None);
    rep.check_le("D2:symmetric", asymmetry(&fr.a, d), 1e-12, None);
    let (lo, hi) = ellipticity_constant(&fr.a, d);
    let c_ell = if lo > 0.0 { hi.max(1.0 / lo) } else { f64::INFINITY };
    rep.check_le("D3:elliptic", c_ell, opts.c_bound, None);
    rep.check_le("D4:flat", fr.flatness_constant(), opts.c_bound, None);
    ray_entry(&mut rep, "D5:nontrapping", &cs.zero_state_metric(), d, opts);
    Ok(rep)
}

/// Product partition of unity `η_μ` subordinate to the doubles `Q*_μ`.
pub fn partition_of_unity(part: &CubePartition) -> Vec<Vec<(usize, f64)>> {
    let g = part.grid();
    let d = g.dim();
    let side = part.side();
    let l2 = 2.0 * g.half_length();
    let plateau = |s: f64| util::smooth_step((1.0 - s.abs()) / 0.5);
    let raw = |c: usize, idx: usize| -> f64 {
        let center = part.cubes()[c].center;
        let x = g.point(idx);
        (0..d)
            .map(|k| {
                let mut dx = x[k] - center[k];
                dx -= l2 * (dx / l2).round();
                plateau(dx / side)
            })
            .product()
    };
    let supports: Vec<Vec<(usize, f64)>> = (0..part.len())
        .map(|c| {
            part.double_members(c)
                .into_iter()
                .map(|i| (i, raw(c, i)))
                .filter(|(_, v)| *v > 0.0)
                .collect()
        })
        .collect();
    let mut total = vec![0.0; g.len()];
    for s in &supports {
        for (i, v) in s {
            total[*i] += v;
        }
    }
    supports
        .into_iter()
        .map(|s| s.into_iter().map(|(i, v)| (i, v / total[i])).collect())
        .collect()
}

/// Max over finite-difference derivatives of order `<= order` of a grid field
/// (periodic centered differences with the grid spacing).
pub fn c_n_norm(grid: &Grid, values: &[C64], order: u32) -> f64 {
    let d = grid.dim();
    let n = grid.points_per_axis() as i64;
    let h = grid.spacing();
    let mut best = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let diff = |v: &[C64], axis: usize| -> Vec<C64> {
        (0..v.len())
            .map(|idx| {
                let base = grid.split_index(idx);
                let at = |off: i64| {
                    let mut i = base;
                    i[axis] = (i[axis] as i64 + off).rem_euclid(n) as usize;
                    v[grid.join_index(i)]
                };
                (at(1) - at(-1)) / (2.0 * h)
            })
            .collect()
    };
    let mut level: Vec<Vec<C64>> = vec![values.to_vec()];
    for _ in 0..order {
        let mut next = Vec::new();
        for f in &level {
            for axis in 0..d {
                let df = diff(f, axis);
                best = best.max(df.iter().map(|v| v.norm()).fold(0.0, f64::max));
                next.push(df);
            }
        }
        level = next;
    }
    best
}

/// `Σ_{|α| <= order} ‖∂^α b‖_{L¹}` with spectral derivatives.
pub fn w1m_norm(grid: &Grid, values: &[C64], order: u32) -> Result<f64> {
    let d = grid.dim();
    let w = grid.cell_volume();
    let l1 = |v: &[C64]| v.iter().map(|c| c.norm()).sum::<f64>() * w;
    let mut total = l1(values);
    let mut level: Vec<(usize, Vec<C64>)> = vec![(0, values.to_vec())];
    for _ in 0..order {
        let mut next = Vec::new();
        for (last_axis, f) in &level {
            // mixed derivatives counted once: non-decreasing axis order
            for axis in *last_axis..d {
                let df = grid.derivative(f, axis)?;
                total += l1(&df);
                next.push((axis, df));
            }
        }
        level = next;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct CubeDecomposition {
    pub weights: Vec<f64>,
    /// Sparse bumps `φ_μ` supported in `Q*_μ`.
    pub bumps: Vec<Vec<(usize, C64)>>,
    pub n_smooth: u32,
    pub weight_sum: f64,
    pub w1m_norm: f64,
    pub ratio: f64,
    pub reconstruction_error: f64,
    /// Largest sampled `‖φ_μ‖_{C^N}`.
    pub max_bump_norm: f64,
}

pub const DEFAULT_N_SMOOTH: u32 = 4;
/// Relative size on the outer shell `|x_i| >= 0.9 L` above which a field
/// counts as non-decaying.
pub const DECAY_TOLERANCE: f64 = 1e-3;

pub fn cube_decompose(b: &[C64], part: &CubePartition, n_smooth: u32) -> Result<CubeDecomposition> {
    let g = part.grid();
    if b.len() != g.len() {
        return Err(QlsError::SizeMismatch {
            expected: g.len(),
            got: b.len(),
        });
    }
    let peak = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let edge = (0..g.len())
        .filter(|&i| {
            let x = g.point(i);
            x[..g.dim()].iter().any(|c| c.abs() >= 0.9 * g.half_length())
        })
        .map(|i| b[i].norm())
        .fold(0.0, f64::max);
    if edge > DECAY_TOLERANCE * peak {
        return Err(QlsError::Precondition(format!(
            "field does not decay: edge/peak = {:e}",
            edge / peak
        )));
    }
    let etas = partition_of_unity(part);
    // (α_μ, φ_μ, ‖φ_μ‖_{C^N}) per cube
    type CubeTerm = (f64, Vec<(usize, C64)>, f64);
    let results: Vec<CubeTerm> = etas
        .par_iter()
        .map(|eta| {
            let mut full = vec![ZERO; g.len()];
            for (i, e) in eta {
                full[*i] = b[*i] * *e;
            }
            let alpha = c_n_norm(g, &full, n_smooth);
            if alpha == 0.0 {
                return (0.0, Vec::new(), 0.0);
            }
            let bump: Vec<(usize, C64)> = eta.iter().map(|(i, _)| (*i, full[*i] / alpha)).collect();
            let scaled: Vec<C64> = full.iter().map(|v| v / alpha).collect();
            (alpha, bump, c_n_norm(g, &scaled, n_smooth))
        })
        .collect();
    let mut recon = vec![ZERO; g.len()];
    for (alpha, bump, _) in &results {
        for (i, v) in bump {
            recon[*i] += *v * *alpha;
        }
    }
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    let reconstruction_error = recon.iter().zip(b).map(|(r, v)| (r - v).norm()).fold(0.0, f64::max) / scale;
    let weights: Vec<f64> = results.iter().map(|r| r.0).collect();
    let weight_sum = weights.iter().sum();
    let w1m = w1m_norm(g, b, n_smooth + g.dim() as u32 + 1)?;
    let ratio = if w1m > 0.0 { weight_sum / w1m } else { 0.0 };
    let max_bump_norm = results.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(CubeDecomposition {
        weights,
        bumps: results.into_iter().map(|r| r.1).collect(),
        n_smooth,
        weight_sum,
        w1m_norm: w1m,
        ratio,
        reconstruction_error,
        max_bump_norm,
    })
}

pub type JetRule = dyn Fn(&Jet) -> C64 + Send + Sync;

/// Checks `b(0) = 0` and `∂_z b(0) = 0` for a scalar rule of the jet.
pub fn check_vanishing(rule: &JetRule, dim: usize) -> Result<()> {
    let b0 = rule(&Jet::ZERO).norm();
    let h = 1e-6;
    let mut worst = b0;
    for comp in 0..(2 + 2 * dim) {
        for dir in [C64::new(1.0, 0.0), I] {
            let mut zp = Jet::ZERO;
            *zp.component_mut(comp, dim) = dir * h;
            let mut zm = Jet::ZERO;
            *zm.component_mut(comp, dim) = -dir * h;
            worst = worst.max(((rule(&zp) - rule(&zm)) / (2.0 * h)).norm());
        }
    }
    if b0 > 1e-12 || worst > 1e-8 {
        return Err(QlsError::Precondition(format!(
            "rule does not vanish to second order at z = 0 (|b(0)| = {b0:e}, |d_z b(0)| = {worst:e})"
        )));
    }
    Ok(())
}

/// `W^{1,M}` surrogate of `x ↦ b(z_u(x))`: `Σ_{|α|<=M} ‖∂^α b‖_{L¹}`.
pub fn w1m_check(rule: &JetRule, u: &StateField, m_ord: u32) -> Result<f64> {
    let g = u.grid();
    check_vanishing(rule, g.dim())?;
    let z = jets(u)?;
    let field: Vec<C64> = z.iter().map(rule).collect();
    w1m_norm(g, &field, m_ord)
}
