//! Linear evolution with hyperviscosity, the vector reduction, the first-order
//! diagonalization, the Doi gauge and the local smoothing measurement.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coeffs::{freeze_linear_coefficients, CoefficientSet, FrozenLinearCoefficients};
use crate::error::{QlsError, Result};
use crate::grid::{CubePartition, CubeTimeIntegral, Grid, StateField, Trajectory, C64, I, ZERO};
use crate::hamiltonian::metric_symbol;
use crate::psido::{
    neumann_inverse_apply, operator_norm_estimate, select_cutoff_radius, FieldVector, GrowthSweep, QuantizedOperator,
    POWER_STEPS,
};
use crate::symbols::{cutoff_theta, theta, Symbol};
use crate::util;

/// Integrator for the non-multiplier part of a split step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RemainderScheme {
    #[default]
    Midpoint,
    Rk4,
}

#[derive(Debug, Clone)]
enum Source {
    Frozen(Arc<FrozenLinearCoefficients>),
    Family {
        cs: CoefficientSet,
        grid: Grid,
        fixed: Option<Arc<FrozenLinearCoefficients>>,
    },
}

/// `∂_t u = −εΔ²u + i∂_j(a_{jk}∂_k u) + b₁·∇u + b₂·∇ū + c₁u + c₂ū + f`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    source: Source,
    pub epsilon: f64,
    pub scheme: RemainderScheme,
}

pub const BLOW_UP_FACTOR: f64 = 1e6;

fn check_eps(eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(QlsError::InvalidConfig(format!("epsilon = {eps} must be >= 0")));
    }
    Ok(())
}

impl LinearSystem {
    /// Coefficients held fixed in time.
    pub fn frozen(frozen: FrozenLinearCoefficients, epsilon: f64) -> Result<Self> {
        check_eps(epsilon)?;
        Ok(LinearSystem {
            source: Source::Frozen(Arc::new(frozen)),
            epsilon,
            scheme: RemainderScheme::Midpoint,
        })
    }

    /// Linear part of a registry family: coefficients at the zero state,
    /// re-evaluated in time when the family is time dependent.
    pub fn from_family(cs: &CoefficientSet, grid: &Grid, epsilon: f64) -> Result<Self> {
        check_eps(epsilon)?;
        if cs.dim != grid.dim() {
            return Err(QlsError::GridMismatch);
        }
        let fixed = if cs.time_dependent {
            None
        } else {
            Some(Arc::new(freeze_linear_coefficients(cs, grid, 0.0)?))
        };
        Ok(LinearSystem {
            source: Source::Family {
                cs: cs.clone(),
                grid: grid.clone(),
                fixed,
            },
            epsilon,
            scheme: RemainderScheme::Midpoint,
        })
    }

    pub fn with_scheme(mut self, scheme: RemainderScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        check_eps(epsilon)?;
        self.epsilon = epsilon;
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        match &self.source {
            Source::Frozen(f) => &f.grid,
            Source::Family { grid, .. } => grid,
        }
    }

    pub fn coefficients_at(&self, t: f64) -> Result<Arc<FrozenLinearCoefficients>> {
        match &self.source {
            Source::Frozen(f) => Ok(f.clone()),
            Source::Family { fixed: Some(f), .. } => Ok(f.clone()),
            Source::Family { cs, grid, fixed: None } => Ok(Arc::new(freeze_linear_coefficients(cs, grid, t)?)),
        }
    }

    pub fn forcing_norm(&self, t: f64) -> Result<f64> {
        let c = self.coefficients_at(t)?;
        Ok(c.grid.l2_norm(&c.f))
    }

    /// Full right side at time `t`.
    pub fn rhs(&self, t: f64, u: &StateField) -> Result<StateField> {
        let c = self.coefficients_at(t)?;
        let mut out = scalar_operator(&c, u.values(), false)?;
        let visc = viscosity(u.grid(), u.values(), self.epsilon)?;
        for ((o, v), f) in out.iter_mut().zip(visc).zip(&c.f) {
            *o += v + f;
        }
        Ok(u.with_values(out).with_time(t))
    }

    /// Everything except `iΔ − εΔ²`, forcing included.
    fn remainder(&self, t: f64, u: &[C64]) -> Result<Vec<C64>> {
        let c = self.coefficients_at(t)?;
        let mut out = scalar_operator(&c, u, true)?;
        for (o, f) in out.iter_mut().zip(&c.f) {
            *o += f;
        }
        Ok(out)
    }
}

fn viscosity(grid: &Grid, u: &[C64], eps: f64) -> Result<Vec<C64>> {
    if eps == 0.0 {
        return Ok(vec![ZERO; u.len()]);
    }
    grid.apply_multiplier(u, |_, k| {
        let k2 = k[0] * k[0] + k[1] * k[1];
        C64::new(-eps * k2 * k2, 0.0)
    })
}

/// `∂_j(a_{jk}∂_k u)`, optionally with `a − I` in place of `a`.
fn divergence_form(c: &FrozenLinearCoefficients, u: &[C64], minus_identity: bool) -> Result<Vec<C64>> {
    let g = &c.grid;
    let d = g.dim();
    let grads = g.gradient(u)?;
    let mut out = vec![ZERO; u.len()];
    for j in 0..d {
        let flux: Vec<C64> = (0..u.len())
            .map(|i| {
                (0..d)
                    .map(|k| {
                        let mut a = c.a[i][j][k];
                        if minus_identity && j == k {
                            a -= 1.0;
                        }
                        grads[k][i] * a
                    })
                    .sum()
            })
            .collect();
        for (o, v) in out.iter_mut().zip(g.derivative(&flux, j)?) {
            *o += v;
        }
    }
    Ok(out)
}

/// `b·∇u` for a vector field `b`, conjugated when asked.
fn drift(grid: &Grid, b: &[[C64; 2]], u: &[C64], conj_b: bool) -> Result<Vec<C64>> {
    let d = grid.dim();
    let grads = grid.gradient(u)?;
    Ok((0..u.len())
        .map(|i| {
            (0..d)
                .map(|k| {
                    let bk = if conj_b { b[i][k].conj() } else { b[i][k] };
                    bk * grads[k][i]
                })
                .sum()
        })
        .collect())
}

fn is_zero_field(b: &[[C64; 2]]) -> bool {
    b.iter().all(|v| v[0] == ZERO && v[1] == ZERO)
}

/// `i∂(a∂u) + b₁·∇u + b₂·∇ū + c₁u + c₂ū` without forcing or viscosity.
fn scalar_operator(c: &FrozenLinearCoefficients, u: &[C64], minus_identity: bool) -> Result<Vec<C64>> {
    let g = &c.grid;
    let lead = divergence_form(c, u, minus_identity)?;
    let b1u = drift(g, &c.b1, u, false)?;
    let ubar: Vec<C64> = u.iter().map(|v| v.conj()).collect();
    let b2u = if is_zero_field(&c.b2) {
        vec![ZERO; u.len()]
    } else {
        drift(g, &c.b2, &ubar, false)?
    };
    Ok((0..u.len())
        .map(|i| I * lead[i] + b1u[i] + b2u[i] + c.c1[i] * u[i] + c.c2[i] * ubar[i])
        .collect())
}

/// Exact step `e^{τ(−ε|k|⁴ − i|k|²)}`.
fn free_step(grid: &Grid, u: &[C64], tau: f64, eps: f64) -> Result<Vec<C64>> {
    grid.apply_multiplier(u, |_, k| {
        let k2 = k[0] * k[0] + k[1] * k[1];
        C64::new(-tau * eps * k2 * k2, -tau * k2).exp()
    })
}

fn axpy(u: &[C64], h: f64, k: &[C64]) -> Vec<C64> {
    u.iter().zip(k).map(|(a, b)| a + b * h).collect()
}

fn remainder_step(sys: &LinearSystem, t: f64, u: &[C64], dt: f64) -> Result<Vec<C64>> {
    match sys.scheme {
        RemainderScheme::Midpoint => {
            let k1 = sys.remainder(t, u)?;
            let mid = axpy(u, 0.5 * dt, &k1);
            let k2 = sys.remainder(t + 0.5 * dt, &mid)?;
            Ok(axpy(u, dt, &k2))
        }
        RemainderScheme::Rk4 => {
            let k1 = sys.remainder(t, u)?;
            let k2 = sys.remainder(t + 0.5 * dt, &axpy(u, 0.5 * dt, &k1))?;
            let k3 = sys.remainder(t + 0.5 * dt, &axpy(u, 0.5 * dt, &k2))?;
            let k4 = sys.remainder(t + dt, &axpy(u, dt, &k3))?;
            Ok((0..u.len())
                .map(|i| u[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
                .collect())
        }
    }
}

/// Number of steps and the adjusted step so that `steps·dt = T`.
pub fn step_count(t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(QlsError::InvalidConfig(format!("need dt > 0 and T >= 0 (dt = {dt}, T = {t_end})")));
    }
    let n = (t_end / dt).round().max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize;
    Ok((n, if n == 0 { dt } else { t_end / n as f64 }))
}

/// Strang splitting: half exact free step, remainder step, half free step.
/// The observer sees the initial state and every step.
pub fn evolve_with<F>(sys: &LinearSystem, u0: &StateField, t_end: f64, dt: f64, mut observe: F) -> Result<StateField>
where
    F: FnMut(&StateField) -> Result<()>,
{
    let g = sys.grid().clone();
    if u0.grid() != &g {
        return Err(QlsError::GridMismatch);
    }
    let (steps, dt) = step_count(t_end, dt)?;
    let t0 = u0.time();
    let limit = BLOW_UP_FACTOR * u0.l2_norm().max(1.0);
    let mut u = u0.values().to_vec();
    observe(u0)?;
    for n in 0..steps {
        let t = t0 + n as f64 * dt;
        let half = free_step(&g, &u, 0.5 * dt, sys.epsilon)?;
        let rem = remainder_step(sys, t, &half, dt)?;
        u = free_step(&g, &rem, 0.5 * dt, sys.epsilon)?;
        let state = u0.with_values(u.clone()).with_time(t0 + (n + 1) as f64 * dt);
        let norm = state.l2_norm();
        if !norm.is_finite() || norm > limit {
            return Err(QlsError::BlowUp {
                t: state.time(),
                norm,
                limit,
            });
        }
        observe(&state)?;
    }
    Ok(u0.with_values(u).with_time(t0 + steps as f64 * dt))
}

pub fn evolve(sys: &LinearSystem, u0: &StateField, t_end: f64, dt: f64) -> Result<Trajectory> {
    evolve_sampled(sys, u0, t_end, dt, 1)
}

/// Keeps every `stride`-th state.
pub fn evolve_sampled(sys: &LinearSystem, u0: &StateField, t_end: f64, dt: f64, stride: usize) -> Result<Trajectory> {
    let stride = stride.max(1);
    let (_, dt_eff) = step_count(t_end, dt)?;
    let mut frames = Vec::new();
    let mut count = 0usize;
    evolve_with(sys, u0, t_end, dt, |s| {
        if count.is_multiple_of(stride) {
            frames.push(s.clone());
        }
        count += 1;
        Ok(())
    })?;
    Trajectory::new(frames, dt_eff * stride as f64)
}

/// Pair `(w₁, w₂)`, meant as `(u, ū)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub first: StateField,
    pub second: StateField,
}

impl VectorField {
    pub fn new(first: StateField, second: StateField) -> Result<Self> {
        if first.grid() != second.grid() {
            return Err(QlsError::GridMismatch);
        }
        Ok(VectorField { first, second })
    }

    /// `(u, ū)`.
    pub fn from_scalar(u: &StateField) -> Self {
        VectorField {
            first: u.clone(),
            second: u.conj(),
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            first: StateField::zeros(grid, 0.0),
            second: StateField::zeros(grid, 0.0),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.first.grid()
    }

    pub fn random(grid: &Grid, rng: &mut ChaCha8Rng, k_cut: Option<f64>) -> Self {
        VectorField {
            first: StateField::random(grid, rng, k_cut),
            second: StateField::random(grid, rng, k_cut),
        }
    }
}

impl FieldVector for VectorField {
    fn norm(&self) -> f64 {
        (self.first.l2_norm().powi(2) + self.second.l2_norm().powi(2)).sqrt()
    }
    fn plus(&self, o: &Self) -> Self {
        VectorField {
            first: self.first.add(&o.first),
            second: self.second.add(&o.second),
        }
    }
    fn minus(&self, o: &Self) -> Self {
        VectorField {
            first: self.first.sub(&o.first),
            second: self.second.sub(&o.second),
        }
    }
    fn scaled(&self, a: f64) -> Self {
        VectorField {
            first: self.first.scaled(a),
            second: self.second.scaled(a),
        }
    }
}

/// `∂_t w = −εΔ²w + (iH + B + C)w + F` for `w = (u, ū)`, with
/// `H = diag(𝓛, −𝓛)`, `𝓛 = ∂_j a_{jk} ∂_k`.
#[derive(Debug, Clone)]
pub struct VectorSystem {
    pub coeffs: Arc<FrozenLinearCoefficients>,
    pub epsilon: f64,
}

pub fn build_vector_system(ls: &LinearSystem, t: f64) -> Result<VectorSystem> {
    Ok(VectorSystem {
        coeffs: ls.coefficients_at(t)?,
        epsilon: ls.epsilon,
    })
}

impl VectorSystem {
    pub fn grid(&self) -> &Grid {
        &self.coeffs.grid
    }

    /// `𝓛u = ∂_j(a_{jk}∂_k u)`.
    pub fn apply_l(&self, u: &StateField) -> Result<StateField> {
        Ok(u.with_values(divergence_form(&self.coeffs, u.values(), false)?))
    }

    pub fn apply_h(&self, w: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            first: self.apply_l(&w.first)?,
            second: self.apply_l(&w.second)?.scaled(-1.0),
        })
    }

    /// `B₁₂ = b₂·∇`.
    pub fn apply_b12(&self, u: &StateField) -> Result<StateField> {
        Ok(u.with_values(drift(self.grid(), &self.coeffs.b2, u.values(), false)?))
    }

    /// `B₂₁ = b̄₂·∇`.
    pub fn apply_b21(&self, u: &StateField) -> Result<StateField> {
        Ok(u.with_values(drift(self.grid(), &self.coeffs.b2, u.values(), true)?))
    }

    pub fn apply_b_diag(&self, w: &VectorField) -> Result<VectorField> {
        let g = self.grid();
        Ok(VectorField {
            first: w.first.with_values(drift(g, &self.coeffs.b1, w.first.values(), false)?),
            second: w.second.with_values(drift(g, &self.coeffs.b1, w.second.values(), true)?),
        })
    }

    pub fn apply_b_antidiag(&self, w: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            first: self.apply_b12(&w.second)?,
            second: self.apply_b21(&w.first)?,
        })
    }

    pub fn apply_b(&self, w: &VectorField) -> Result<VectorField> {
        Ok(self.apply_b_diag(w)?.plus(&self.apply_b_antidiag(w)?))
    }

    pub fn apply_c(&self, w: &VectorField) -> Result<VectorField> {
        let c = &self.coeffs;
        let (a, b) = (w.first.values(), w.second.values());
        let first = (0..a.len()).map(|i| c.c1[i] * a[i] + c.c2[i] * b[i]).collect();
        let second = (0..a.len())
            .map(|i| c.c2[i].conj() * a[i] + c.c1[i].conj() * b[i])
            .collect();
        Ok(VectorField {
            first: w.first.with_values(first),
            second: w.second.with_values(second),
        })
    }

    pub fn forcing(&self) -> VectorField {
        let f = StateField::zeros(self.grid(), 0.0).with_values(self.coeffs.f.clone());
        VectorField::from_scalar(&f)
    }

    /// `iH + B`.
    pub fn apply_principal(&self, w: &VectorField) -> Result<VectorField> {
        let h = self.apply_h(w)?;
        Ok(VectorField {
            first: h.first.scale(I),
            second: h.second.scale(I),
        }
        .plus(&self.apply_b(w)?))
    }

    pub fn apply(&self, w: &VectorField) -> Result<VectorField> {
        let g = self.grid();
        let visc = VectorField {
            first: w.first.with_values(viscosity(g, w.first.values(), self.epsilon)?),
            second: w.second.with_values(viscosity(g, w.second.values(), self.epsilon)?),
        };
        Ok(visc
            .plus(&self.apply_principal(w)?)
            .plus(&self.apply_c(w)?)
            .plus(&self.forcing()))
    }

    pub fn is_block_diagonal(&self) -> bool {
        is_zero_field(&self.coeffs.b2)
    }
}

/// `Λ = I − S` with `S₁₂ = ½iB₁₂𝓛̃`, `S₂₁ = −½iB₂₁𝓛̃`, `𝓛̃ = Ψ_{−θ_R/h}`.
#[derive(Debug, Clone)]
pub struct Diagonalizer {
    pub sys: VectorSystem,
    pub r_cut: f64,
    pub s_norm: f64,
    ltilde: QuantizedOperator,
}

pub const NEUMANN_TOL: f64 = 1e-14;
pub const NEUMANN_MAX_TERMS: usize = 200;

fn ltilde_operator(sys: &VectorSystem, r_cut: f64) -> Result<QuantizedOperator> {
    let metric = Arc::new(sys.coeffs.metric()?);
    let h = metric_symbol(metric);
    let d = sys.grid().dim();
    let sym = Symbol::new(d, -2.0, format!("-theta_{r_cut}/h"), move |x, xi, t| {
        let th = theta(xi, r_cut);
        if th == 0.0 {
            ZERO
        } else {
            -th / h.eval(x, xi, t)
        }
    });
    Ok(QuantizedOperator::new(sym, sys.grid()))
}

impl Diagonalizer {
    pub fn new(sys: &VectorSystem, r_cut: f64) -> Result<Self> {
        let ltilde = ltilde_operator(sys, r_cut)?;
        let mut dg = Diagonalizer {
            sys: sys.clone(),
            r_cut,
            s_norm: 0.0,
            ltilde,
        };
        if !sys.is_block_diagonal() {
            let grid = sys.grid().clone();
            dg.s_norm = operator_norm_estimate(
                |w: &VectorField| dg.apply_s(w),
                |rng| VectorField::random(&grid, rng, None),
                0,
                POWER_STEPS,
            )?;
        }
        Ok(dg)
    }

    pub fn apply_ltilde(&self, u: &StateField) -> Result<StateField> {
        self.ltilde.apply_values(u.values(), self.sys.coeffs.t).map(|v| u.with_values(v))
    }

    pub fn apply_s(&self, w: &VectorField) -> Result<VectorField> {
        if self.sys.is_block_diagonal() {
            return Ok(VectorField {
                first: w.first.scaled(0.0),
                second: w.second.scaled(0.0),
            });
        }
        let s12 = self.sys.apply_b12(&self.apply_ltilde(&w.second)?)?.scale(I * 0.5);
        let s21 = self.sys.apply_b21(&self.apply_ltilde(&w.first)?)?.scale(-I * 0.5);
        Ok(VectorField {
            first: s12,
            second: s21,
        })
    }

    pub fn apply_lambda(&self, w: &VectorField) -> Result<VectorField> {
        Ok(w.minus(&self.apply_s(w)?))
    }

    pub fn apply_lambda_inv(&self, w: &VectorField) -> Result<VectorField> {
        if self.sys.is_block_diagonal() {
            return Ok(w.clone());
        }
        Ok(neumann_inverse_apply(|v: &VectorField| self.apply_s(v), w, NEUMANN_TOL, NEUMANN_MAX_TERMS)?.value)
    }

    /// `Λ(iH + B) − (iH + B_d)Λ`.
    pub fn residual(&self, w: &VectorField) -> Result<VectorField> {
        let lhs = self.apply_lambda(&self.sys.apply_principal(w)?)?;
        let lw = self.apply_lambda(w)?;
        let h = self.sys.apply_h(&lw)?;
        let rhs = VectorField {
            first: h.first.scale(I),
            second: h.second.scale(I),
        }
        .plus(&self.sys.apply_b_diag(&lw)?);
        Ok(lhs.minus(&rhs))
    }

    /// Anti-diagonal part of the residual on probes `(e_k, 0)` and `(0, e_k)`;
    /// `transformed = false` measures `B_ad` itself.
    pub fn antidiagonal_sweep(&self, modes: &[i64], transformed: bool) -> Result<GrowthSweep> {
        let g = self.sys.grid();
        let mut ks = Vec::new();
        let mut norms = Vec::new();
        for &m in modes {
            let e = StateField::plane_wave(g, [m, 0], self.sys.coeffs.t);
            let z = e.scaled(0.0);
            let p1 = VectorField::new(e.clone(), z.clone())?;
            let p2 = VectorField::new(z, e.clone())?;
            let (r1, r2) = if transformed {
                (self.residual(&p1)?, self.residual(&p2)?)
            } else {
                (self.sys.apply_b_antidiag(&p1)?, self.sys.apply_b_antidiag(&p2)?)
            };
            ks.push(m as f64 * g.freq_spacing());
            norms.push(r1.second.l2_norm().max(r2.first.l2_norm()) / e.l2_norm());
        }
        Ok(growth(ks, norms))
    }

    pub fn roundtrip_residual(&self, trials: &[VectorField]) -> Result<f64> {
        let mut worst = 0.0f64;
        for w in trials {
            let back = self.apply_lambda_inv(&self.apply_lambda(w)?)?;
            worst = worst.max(back.minus(w).norm() / w.norm().max(1e-300));
        }
        Ok(worst)
    }
}

/// Floor below which residual norms count as exact zeros in growth fits.
pub const GROWTH_FLOOR: f64 = 1e-14;

fn growth(ks: Vec<f64>, norms: Vec<f64>) -> GrowthSweep {
    let logs: Vec<f64> = norms.iter().map(|v| v.max(GROWTH_FLOOR)).collect();
    let exponent = util::loglog_slope(&ks, &logs);
    GrowthSweep { ks, norms, exponent }
}

/// Builds `Λ` at the given cutoff, or picks the smallest dyadic `R` with
/// `‖S‖ < 1/2`.
pub fn diagonalize(sys: &VectorSystem, r_cut: Option<f64>) -> Result<Diagonalizer> {
    match r_cut {
        Some(r) => {
            let dg = Diagonalizer::new(sys, r)?;
            if dg.s_norm >= 0.5 {
                return Err(QlsError::Precondition(format!(
                    "||S|| = {} >= 1/2 at R = {r}; increase R",
                    dg.s_norm
                )));
            }
            Ok(dg)
        }
        None => {
            let kmax = sys.grid().k_max();
            let (r, _) = select_cutoff_radius(|r| Ok(Diagonalizer::new(sys, r)?.s_norm), kmax)?;
            Diagonalizer::new(sys, r)
        }
    }
}

/// `Ψ_M = diag(Ψ_{q₁}, Ψ_{q₂})`, `q₁ = e^{θ_R C̃₀ γ}`, `q₂ = e^{−θ_R C̃₀ γ}`.
#[derive(Debug, Clone)]
pub struct Gauge {
    pub r_cut: f64,
    pub c0_tilde: f64,
    q1: QuantizedOperator,
    q2: QuantizedOperator,
    t: f64,
}

/// `C̃₀ = 2/C₀′`.
pub fn default_c0_tilde(c0_prime: f64) -> Result<f64> {
    if !(c0_prime > 0.0) {
        return Err(QlsError::Precondition(format!("C0' = {c0_prime} must be positive")));
    }
    Ok(2.0 / c0_prime)
}

pub fn gauge_operator(grid: &Grid, gamma: &Symbol, r_cut: f64, c0_tilde: f64, t: f64) -> Gauge {
    let exponent = cutoff_theta(gamma.dim(), r_cut).mul(gamma).scale(C64::new(c0_tilde, 0.0));
    let q1 = exponent.map(0.0, "q1", |z| z.exp(), |z| z.exp());
    let q2 = exponent
        .scale(C64::new(-1.0, 0.0))
        .map(0.0, "q2", |z| z.exp(), |z| z.exp());
    Gauge {
        r_cut,
        c0_tilde,
        q1: QuantizedOperator::new(q1, grid),
        q2: QuantizedOperator::new(q2, grid),
        t,
    }
}

impl Gauge {
    fn op(&self, which: bool, u: &StateField) -> Result<StateField> {
        let q = if which { &self.q1 } else { &self.q2 };
        Ok(u.with_values(q.apply_values(u.values(), self.t)?))
    }

    pub fn apply(&self, w: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            first: self.op(true, &w.first)?,
            second: self.op(false, &w.second)?,
        })
    }

    /// `Ψ_{q}^{-1} g = Σ_j (I − Ψ_{q'}Ψ_q)^j Ψ_{q'} g` with the opposite
    /// exponential `q'` as parametrix.
    fn invert(&self, which: bool, g: &StateField) -> Result<StateField> {
        let start = self.op(!which, g)?;
        let s = |v: &StateField| -> Result<StateField> { Ok(v.sub(&self.op(!which, &self.op(which, v)?)?)) };
        Ok(neumann_inverse_apply(s, &start, NEUMANN_TOL, NEUMANN_MAX_TERMS)?.value)
    }

    pub fn apply_inverse(&self, w: &VectorField) -> Result<VectorField> {
        Ok(VectorField {
            first: self.invert(true, &w.first)?,
            second: self.invert(false, &w.second)?,
        })
    }

    pub fn roundtrip_residual(&self, trials: &[VectorField]) -> Result<f64> {
        let mut worst = 0.0f64;
        for w in trials {
            let back = self.apply_inverse(&self.apply(w)?)?;
            worst = worst.max(back.minus(w).norm() / w.norm().max(1e-300));
        }
        Ok(worst)
    }
}

/// Classical RK4 for an autonomous vector generator.
pub fn rk4_vector<G>(generator: G, w0: &VectorField, t_end: f64, dt: f64) -> Result<VectorField>
where
    G: Fn(&VectorField) -> Result<VectorField>,
{
    let (steps, dt) = step_count(t_end, dt)?;
    let mut w = w0.clone();
    for _ in 0..steps {
        let k1 = generator(&w)?;
        let k2 = generator(&w.plus(&k1.scaled(0.5 * dt)))?;
        let k3 = generator(&w.plus(&k2.scaled(0.5 * dt)))?;
        let k4 = generator(&w.plus(&k3.scaled(dt)))?;
        let incr = k1.plus(&k2.scaled(2.0)).plus(&k3.scaled(2.0)).plus(&k4);
        w = w.plus(&incr.scaled(dt / 6.0));
    }
    Ok(w)
}

/// Both sides of the local smoothing estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AprioriReport {
    pub lhs: f64,
    pub sup_l2_sq: f64,
    pub smoothing_sup: f64,
    pub rhs_data: f64,
    pub u0_l2_sq: f64,
    pub forcing_l1: f64,
    pub fitted_a: f64,
    pub horizon: f64,
    pub worst_cube: usize,
    pub per_cube: Vec<f64>,
}

/// Streaming accumulation of `sup_t‖u‖²`, `∫‖J^{1/2}u‖²_{L²(Q_μ)}dt` and
/// `∫‖f‖dt` by trapezoid in time.
#[derive(Debug, Clone)]
pub struct AprioriAccumulator {
    part: CubePartition,
    cubes: CubeTimeIntegral,
    sup_sq: f64,
    u0_sq: Option<f64>,
    t0: f64,
    last: Option<(f64, f64)>,
    forcing_l1: f64,
}

impl AprioriAccumulator {
    pub fn new(part: &CubePartition) -> Self {
        AprioriAccumulator {
            part: part.clone(),
            cubes: CubeTimeIntegral::new(part.len()),
            sup_sq: 0.0,
            u0_sq: None,
            t0: 0.0,
            last: None,
            forcing_l1: 0.0,
        }
    }

    pub fn push(&mut self, u: &StateField, forcing_norm: f64) -> Result<()> {
        let g = u.grid();
        if g != self.part.grid() {
            return Err(QlsError::GridMismatch);
        }
        let n2 = u.l2_norm().powi(2);
        self.sup_sq = self.sup_sq.max(n2);
        if self.u0_sq.is_none() {
            self.u0_sq = Some(n2);
            self.t0 = u.time();
        }
        let half = g.apply_multiplier(u.values(), |_, k| C64::new((1.0 + k[0] * k[0] + k[1] * k[1]).powf(0.25), 0.0))?;
        self.cubes.push(u.time(), self.part.cube_energies(&half));
        if let Some((t, f)) = self.last {
            self.forcing_l1 += 0.5 * (u.time() - t) * (f + forcing_norm);
        }
        self.last = Some((u.time(), forcing_norm));
        Ok(())
    }

    pub fn finish(&self) -> AprioriReport {
        let per_cube = self.cubes.integrals().to_vec();
        let (worst_cube, smoothing_sup) = per_cube
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        let u0 = self.u0_sq.unwrap_or(0.0);
        let rhs = u0 + self.forcing_l1 * self.forcing_l1;
        let lhs = self.sup_sq + smoothing_sup;
        AprioriReport {
            lhs,
            sup_l2_sq: self.sup_sq,
            smoothing_sup,
            rhs_data: rhs,
            u0_l2_sq: u0,
            forcing_l1: self.forcing_l1,
            fitted_a: if rhs > 0.0 { lhs / rhs } else { 0.0 },
            horizon: self.last.map(|(t, _)| t - self.t0).unwrap_or(0.0),
            worst_cube,
            per_cube,
        }
    }
}

/// Report over the frames of `tr` with time `<= T`; `forcing_norms` holds
/// `‖f(t_i)‖₂` per frame (zero when absent).
pub fn apriori_report(
    tr: &Trajectory,
    part: &CubePartition,
    forcing_norms: Option<&[f64]>,
    t_end: f64,
) -> Result<AprioriReport> {
    if let Some(f) = forcing_norms {
        if f.len() != tr.len() {
            return Err(QlsError::SizeMismatch {
                expected: tr.len(),
                got: f.len(),
            });
        }
    }
    let mut acc = AprioriAccumulator::new(part);
    let t0 = tr.start_time();
    for (i, u) in tr.frames().iter().enumerate() {
        if u.time() - t0 > t_end + 1e-12 {
            break;
        }
        acc.push(u, forcing_norms.map(|f| f[i]).unwrap_or(0.0))?;
    }
    Ok(acc.finish())
}

/// Evolves and accumulates the report without storing the trajectory.
pub fn run_apriori(
    sys: &LinearSystem,
    u0: &StateField,
    part: &CubePartition,
    t_end: f64,
    dt: f64,
) -> Result<AprioriReport> {
    let mut acc = AprioriAccumulator::new(part);
    evolve_with(sys, u0, t_end, dt, |u| acc.push(u, sys.forcing_norm(u.time())?))?;
    Ok(acc.finish())
}

/// `A e^{i k x₁}` times a Gaussian envelope of width `sigma` at `center`.
pub fn wave_packet(grid: &Grid, center: [f64; 2], carrier: [f64; 2], sigma: f64) -> Result<StateField> {
    let d = grid.dim();
    StateField::from_fn(grid, 0.0, |x| {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for i in 0..d {
            r2 += (x[i] - center[i]).powi(2);
            phase += carrier[i] * x[i];
        }
        C64::from_polar((-r2 / (2.0 * sigma * sigma)).exp(), phase)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{registry, FamilyParams};

    #[test]
    fn step_count_adjusts() {
        let (n, dt) = step_count(1.0, 0.3).unwrap();
        assert_eq!(n, 3);
        assert!((dt - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(step_count(0.0, 0.1).unwrap().0, 0);
        assert!(step_count(1.0, 0.0).is_err());
    }

    #[test]
    fn rejects_negative_eps() {
        let g = Grid::new(1, 4.0, 16).unwrap();
        let cs = registry("flat", 1, &FamilyParams::default()).unwrap();
        assert!(LinearSystem::from_family(&cs, &g, -1.0).is_err());
    }
}
