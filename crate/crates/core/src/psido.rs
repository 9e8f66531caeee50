//! Kohn–Nirenberg quantization on the grid, Neumann inversion, norm
//! estimates and the Gårding audit.
//!
//! `Ψ_q u(x_j) = N^{-n} Σ_m q(x_j, k_m) û_m e^{i k_m·(x_j + L)}`, which is the
//! discrete form of `(2π)^{-n} ∫ e^{ix·ξ} q(x, ξ) û(ξ) dξ` for the DFT of the grid.

use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{QlsError, Result};
use crate::grid::{Grid, StateField, C64, ZERO};
use crate::report::EstimateReport;
use crate::symbols::Symbol;
use crate::util;

/// Tabulations larger than this many entries are computed on the fly.
pub const MAX_CACHED_ENTRIES: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Multiplier,
    Multiplication,
    General,
}

#[derive(Debug)]
pub struct QuantizedOperator {
    symbol: Symbol,
    grid: Grid,
    kind: OperatorKind,
    cache: RwLock<Option<(f64, Arc<Vec<C64>>)>>,
}

impl Clone for QuantizedOperator {
    fn clone(&self) -> Self {
        QuantizedOperator {
            symbol: self.symbol.clone(),
            grid: self.grid.clone(),
            kind: self.kind,
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

fn probe_points(grid: &Grid) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let n = grid.len();
    let picks = [0, n / 7, n / 3, n / 2 + 1, (5 * n) / 7, n - 1];
    let xs = picks.iter().map(|&i| grid.point(i)).collect();
    let xis = picks.iter().map(|&i| grid.wavenumber(i)).collect();
    (xs, xis)
}

fn detect_kind(symbol: &Symbol, grid: &Grid) -> OperatorKind {
    let (xs, xis) = probe_points(grid);
    let d = grid.dim();
    let same = |a: C64, b: C64| (a - b).norm() <= 1e-13 * (1.0 + a.norm().max(b.norm()));
    let independent = |vary_x: bool| {
        [0.0, 0.37].iter().all(|&t| {
            let (outer, inner) = if vary_x { (&xis, &xs) } else { (&xs, &xis) };
            outer.iter().all(|o| {
                let at = |i: &[f64; 2]| {
                    if vary_x {
                        symbol.eval(&i[..d], &o[..d], t)
                    } else {
                        symbol.eval(&o[..d], &i[..d], t)
                    }
                };
                let first = at(&inner[0]);
                inner.iter().all(|i| same(at(i), first))
            })
        })
    };
    if independent(false) {
        OperatorKind::Multiplication
    } else if independent(true) {
        OperatorKind::Multiplier
    } else {
        OperatorKind::General
    }
}

impl QuantizedOperator {
    pub fn new(symbol: Symbol, grid: &Grid) -> Self {
        let kind = detect_kind(&symbol, grid);
        QuantizedOperator {
            symbol,
            grid: grid.clone(),
            kind,
            cache: RwLock::new(None),
        }
    }

    /// Forces the general Kohn–Nirenberg path.
    pub fn general(symbol: Symbol, grid: &Grid) -> Self {
        QuantizedOperator {
            symbol,
            grid: grid.clone(),
            kind: OperatorKind::General,
            cache: RwLock::new(None),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn symbol(&self) -> &Symbol {
        &self.symbol
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn kernel_entry(&self, j: usize, m: usize, t: f64) -> C64 {
        let g = &self.grid;
        let d = g.dim();
        let x = g.point(j);
        let k = g.wavenumber(m);
        let l = g.half_length();
        let phase = k[0] * (x[0] + l) + if d == 2 { k[1] * (x[1] + l) } else { 0.0 };
        self.symbol.eval(&x[..d], &k[..d], t) * C64::from_polar(1.0 / g.len() as f64, phase)
    }

    fn kernel(&self, t: f64) -> Option<Arc<Vec<C64>>> {
        let n = self.grid.len();
        if n * n > MAX_CACHED_ENTRIES {
            return None;
        }
        if let Some((tc, k)) = self.cache.read().expect("cache lock").as_ref() {
            if *tc == t {
                return Some(k.clone());
            }
        }
        let table: Vec<C64> = (0..n * n)
            .into_par_iter()
            .map(|e| self.kernel_entry(e / n, e % n, t))
            .collect();
        let table = Arc::new(table);
        *self.cache.write().expect("cache lock") = Some((t, table.clone()));
        Some(table)
    }

    /// Applies the operator with the symbol evaluated at time `t`.
    pub fn apply_values(&self, values: &[C64], t: f64) -> Result<Vec<C64>> {
        let g = &self.grid;
        if values.len() != g.len() {
            return Err(QlsError::SizeMismatch {
                expected: g.len(),
                got: values.len(),
            });
        }
        let d = g.dim();
        match self.kind {
            OperatorKind::Multiplication => Ok(values
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let x = g.point(j);
                    self.symbol.eval(&x[..d], &[0.0, 0.0][..d], t) * v
                })
                .collect()),
            OperatorKind::Multiplier => {
                let zero = [0.0, 0.0];
                g.apply_multiplier(values, |_, k| self.symbol.eval(&zero[..d], &k[..d], t))
            }
            OperatorKind::General => {
                let spec = g.forward(values)?;
                let n = g.len();
                let out = match self.kernel(t) {
                    Some(k) => (0..n)
                        .into_par_iter()
                        .map(|j| {
                            let row = &k[j * n..(j + 1) * n];
                            row.iter().zip(&spec).map(|(a, b)| a * b).sum::<C64>()
                        })
                        .collect(),
                    None => (0..n)
                        .into_par_iter()
                        .map(|j| {
                            (0..n)
                                .map(|m| self.kernel_entry(j, m, t) * spec[m])
                                .sum::<C64>()
                        })
                        .collect(),
                };
                Ok(out)
            }
        }
    }

    /// `Ψ_q f` with `q` evaluated at `f.time()`.
    pub fn apply(&self, f: &StateField) -> Result<StateField> {
        if f.grid() != &self.grid {
            return Err(QlsError::GridMismatch);
        }
        Ok(f.with_values(self.apply_values(f.values(), f.time())?))
    }
}

/// Vector space operations needed by the Neumann series and power iteration.
pub trait FieldVector: Clone {
    fn norm(&self) -> f64;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn scaled(&self, a: f64) -> Self;
}

impl FieldVector for StateField {
    fn norm(&self) -> f64 {
        self.l2_norm()
    }
    fn plus(&self, other: &Self) -> Self {
        self.add(other)
    }
    fn minus(&self, other: &Self) -> Self {
        self.sub(other)
    }
    fn scaled(&self, a: f64) -> Self {
        self.scale(C64::new(a, 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct NeumannOutcome<V> {
    pub value: V,
    pub terms: usize,
    pub last_increment: f64,
}

/// `Σ_{j≥0} S^j f`, stopped once `‖S^j f‖ <= tol·‖f‖`.
pub fn neumann_inverse_apply<V, S>(s_apply: S, f: &V, tol: f64, max_terms: usize) -> Result<NeumannOutcome<V>>
where
    V: FieldVector,
    S: Fn(&V) -> Result<V>,
{
    let scale = f.norm();
    if scale == 0.0 {
        return Ok(NeumannOutcome {
            value: f.clone(),
            terms: 0,
            last_increment: 0.0,
        });
    }
    let mut sum = f.clone();
    let mut term = f.clone();
    let mut prev = scale;
    let mut growing = 0;
    for j in 1..=max_terms {
        term = s_apply(&term)?;
        let size = term.norm();
        if !size.is_finite() {
            return Err(QlsError::NeumannDivergence { terms: j });
        }
        sum = sum.plus(&term);
        if size <= tol * scale {
            return Ok(NeumannOutcome {
                value: sum,
                terms: j,
                last_increment: size,
            });
        }
        if size > prev {
            growing += 1;
            if growing >= 3 {
                return Err(QlsError::NeumannDivergence { terms: j });
            }
        } else {
            growing = 0;
        }
        prev = size;
    }
    Err(QlsError::NeumannNotConverged {
        terms: max_terms,
        last_increment: prev,
    })
}

pub const POWER_STEPS: usize = 20;

/// Lower estimate of `‖A‖` from power iteration: the largest `‖Av‖/‖v‖` seen
/// over `steps` iterates starting from a seeded random vector.
pub fn operator_norm_estimate<V, A, R>(apply: A, random: R, seed: u64, steps: usize) -> Result<f64>
where
    V: FieldVector,
    A: Fn(&V) -> Result<V>,
    R: Fn(&mut ChaCha8Rng) -> V,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = random(&mut rng);
    let n0 = v.norm();
    if n0 == 0.0 {
        return Ok(0.0);
    }
    v = v.scaled(1.0 / n0);
    let mut best = 0.0f64;
    for _ in 0..steps {
        let w = apply(&v)?;
        let nw = w.norm();
        best = best.max(nw);
        if nw == 0.0 {
            break;
        }
        v = w.scaled(1.0 / nw);
    }
    Ok(best)
}

/// Smallest `R ∈ {2, 4, 8, …, r_max}` with `norm_at(R) < 1/2`.
pub fn select_cutoff_radius<F>(norm_at: F, r_max: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut r = 2.0;
    let mut last = f64::INFINITY;
    while r <= r_max {
        last = norm_at(r)?;
        if last < 0.5 {
            return Ok((r, last));
        }
        r *= 2.0;
    }
    Err(QlsError::Precondition(format!(
        "no cutoff radius up to {r_max} gives ||S|| < 1/2 (last {last})"
    )))
}

/// Reports `min Re⟨Ψ_q u, u⟩/‖u‖²` over the trials and the fitted lower
/// constant `C = max(0, −min)`; passes iff `C <= c_bound`.
pub fn garding_check(q: &Symbol, grid: &Grid, trials: &[StateField], c_bound: f64) -> Result<EstimateReport> {
    let op = QuantizedOperator::new(q.clone(), grid);
    let mut min_ratio = f64::INFINITY;
    let mut worst = 0usize;
    for (i, u) in trials.iter().enumerate() {
        let nu = u.l2_norm();
        if nu == 0.0 {
            continue;
        }
        let r = op.apply(u)?.inner(u).re / (nu * nu);
        if r < min_ratio {
            min_ratio = r;
            worst = i;
        }
    }
    let fitted_c = (-min_ratio).max(0.0);
    let mut rep = EstimateReport::new(format!("garding[{}]", q.label()));
    rep.push(crate::report::ReportEntry {
        name: "min_ratio".into(),
        measured: min_ratio,
        bound: -c_bound,
        pass: min_ratio.is_finite(),
        worst_point: Some(vec![worst as f64]),
        note: None,
    });
    rep.check_le("fitted_C", fitted_c, c_bound, Some(vec![worst as f64]));
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthSweep {
    pub ks: Vec<f64>,
    pub norms: Vec<f64>,
    pub exponent: f64,
}

/// `‖(Ψ_b Ψ_a − Ψ_{ab}) e^{ik·x}‖₂` along the first axis for each `k`, with the
/// log-log growth exponent. `a` and `b` are applied in the stated order.
pub fn composition_remainder_sweep(a: &Symbol, b: &Symbol, grid: &Grid, modes: &[i64]) -> Result<GrowthSweep> {
    let qa = QuantizedOperator::new(a.clone(), grid);
    let qb = QuantizedOperator::new(b.clone(), grid);
    let qab = QuantizedOperator::general(a.mul(b), grid);
    let mut ks = Vec::new();
    let mut norms = Vec::new();
    for &m in modes {
        let e = StateField::plane_wave(grid, [m, 0], 0.0);
        let lhs = qb.apply(&qa.apply(&e)?)?;
        let rhs = qab.apply(&e)?;
        ks.push(m as f64 * grid.freq_spacing());
        norms.push(lhs.sub(&rhs).l2_norm() / e.l2_norm());
    }
    let exponent = if norms.iter().all(|v| *v > 0.0) {
        util::loglog_slope(&ks, &norms)
    } else {
        f64::NEG_INFINITY
    };
    Ok(GrowthSweep { ks, norms, exponent })
}

/// Seeded random trial fields band-limited to `|k| <= k_cut`.
pub fn random_trials(grid: &Grid, count: usize, seed: u64, k_cut: Option<f64>) -> Vec<StateField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| StateField::random(grid, &mut rng, k_cut)).collect()
}

pub fn zero_like(f: &StateField) -> StateField {
    f.with_values(vec![ZERO; f.values().len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::{constant, japanese_xi};

    #[test]
    fn detects_kinds() {
        let g = Grid::new(1, 4.0, 16).unwrap();
        assert_eq!(QuantizedOperator::new(japanese_xi(1, 1.0), &g).kind(), OperatorKind::Multiplier);
        let a = Symbol::new(1, 0.0, "a", |x, _, _| C64::new(x[0].cos(), 0.0));
        assert_eq!(QuantizedOperator::new(a, &g).kind(), OperatorKind::Multiplication);
        let q = Symbol::new(1, 1.0, "q", |x, xi, _| C64::new(x[0].cos() * xi[0], 0.0));
        assert_eq!(QuantizedOperator::new(q, &g).kind(), OperatorKind::General);
        assert_eq!(QuantizedOperator::new(constant(1, C64::new(2.0, 0.0)), &g).kind(), OperatorKind::Multiplication);
    }

    #[test]
    fn neumann_geometric() {
        let g = Grid::new(1, 4.0, 16).unwrap();
        let f = random_trials(&g, 1, 3, None).remove(0);
        let out = neumann_inverse_apply(|v: &StateField| Ok(v.scaled(0.5)), &f, 1e-14, 200).unwrap();
        assert!(out.value.sub(&f.scaled(2.0)).l2_norm() < 1e-12 * f.l2_norm());
        let err = neumann_inverse_apply(|v: &StateField| Ok(v.scaled(1.5)), &f, 1e-14, 200);
        assert!(matches!(err, Err(QlsError::NeumannDivergence { .. })));
    }
}
