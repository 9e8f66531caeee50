//! Periodic box `[-L, L)^n`, its dual lattice, spectral transforms and norms.
//!
//! Transform normalization: the forward transform is the unnormalized DFT
//! `f̂_m = Σ_j f_j e^{-2πi m·j/N}`, the inverse divides by `N^n`. With the
//! quadrature weight `dx^n` this gives Parseval in the form
//! `‖f‖₂² = dx^n Σ|f_j|² = (dx^n / N^n) Σ|f̂_m|²`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{QlsError, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
pub struct Grid {
    dim: usize,
    half_length: f64,
    n: usize,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("half_length", &self.half_length)
            .field("n", &self.n)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.half_length == other.half_length
    }
}

impl Grid {
    pub fn new(dim: usize, half_length: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(QlsError::InvalidGrid(format!("dimension {dim} not in {{1,2}}")));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(QlsError::InvalidGrid(format!("half length {half_length} must be positive")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(QlsError::InvalidGrid(format!(
                "points per axis {n} must be a power of two >= 8"
            )));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        };
        Ok(Grid {
            dim,
            half_length,
            n,
            plans: Arc::new(plans),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of lattice points `N^n`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    /// Spacing of the dual lattice, `π/L`.
    pub fn freq_spacing(&self) -> f64 {
        std::f64::consts::PI / self.half_length
    }

    /// Quadrature weight `dx^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Largest lattice frequency magnitude along one axis.
    pub fn k_max(&self) -> f64 {
        self.freq_spacing() * (self.n / 2) as f64
    }

    pub fn axis_coord(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    /// Signed lattice index in `[-N/2, N/2)`.
    pub fn signed_mode(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    pub fn axis_wavenumber(&self, m: usize) -> f64 {
        self.freq_spacing() * self.signed_mode(m) as f64
    }

    pub fn is_nyquist(&self, m: usize) -> bool {
        m == self.n / 2
    }

    pub fn split_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    pub fn join_index(&self, i: [usize; 2]) -> usize {
        if self.dim == 1 {
            i[0]
        } else {
            i[0] * self.n + i[1]
        }
    }

    /// Physical coordinates of lattice point `idx`; unused axes are 0.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [a, b] = self.split_index(idx);
        if self.dim == 1 {
            [self.axis_coord(a), 0.0]
        } else {
            [self.axis_coord(a), self.axis_coord(b)]
        }
    }

    /// Wavenumber of spectral index `idx`; unused axes are 0.
    pub fn wavenumber(&self, idx: usize) -> [f64; 2] {
        let [a, b] = self.split_index(idx);
        if self.dim == 1 {
            [self.axis_wavenumber(a), 0.0]
        } else {
            [self.axis_wavenumber(a), self.axis_wavenumber(b)]
        }
    }

    pub fn k_squared(&self, idx: usize) -> f64 {
        let k = self.wavenumber(idx);
        k[0] * k[0] + k[1] * k[1]
    }

    pub fn touches_nyquist(&self, idx: usize) -> bool {
        let [a, b] = self.split_index(idx);
        self.is_nyquist(a) || (self.dim == 2 && self.is_nyquist(b))
    }

    /// Spectral index of the lattice wavenumber with signed mode numbers `m`.
    pub fn mode_index(&self, m: [i64; 2]) -> usize {
        let n = self.n as i64;
        let wrap = |v: i64| v.rem_euclid(n) as usize;
        if self.dim == 1 {
            wrap(m[0])
        } else {
            wrap(m[0]) * self.n + wrap(m[1])
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(QlsError::SizeMismatch {
                expected: self.len(),
                got: len,
            });
        }
        Ok(())
    }

    fn transform(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        if self.dim == 1 {
            fft.process(data);
            return;
        }
        fft.process(data);
        let mut t = transpose(data, n);
        fft.process(&mut t);
        let back = transpose(&t, n);
        data.copy_from_slice(&back);
    }

    pub fn forward(&self, values: &[C64]) -> Result<Vec<C64>> {
        self.check_len(values.len())?;
        let mut buf = values.to_vec();
        self.transform(&mut buf, &self.plans.fwd);
        Ok(buf)
    }

    pub fn inverse(&self, coeffs: &[C64]) -> Result<Vec<C64>> {
        self.check_len(coeffs.len())?;
        let mut buf = coeffs.to_vec();
        self.transform(&mut buf, &self.plans.inv);
        let scale = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        Ok(buf)
    }

    /// Apply the Fourier multiplier `m(k)` to `values`.
    pub fn apply_multiplier<F>(&self, values: &[C64], m: F) -> Result<Vec<C64>>
    where
        F: Fn(usize, [f64; 2]) -> C64,
    {
        let mut spec = self.forward(values)?;
        for (idx, v) in spec.iter_mut().enumerate() {
            *v *= m(idx, self.wavenumber(idx));
        }
        self.inverse(&spec)
    }

    /// Spectral derivative along `axis`; the Nyquist mode is zeroed.
    pub fn derivative(&self, values: &[C64], axis: usize) -> Result<Vec<C64>> {
        if axis >= self.dim {
            return Err(QlsError::OutOfRange(format!("axis {axis} for dimension {}", self.dim)));
        }
        self.apply_multiplier(values, |idx, k| {
            if self.touches_nyquist(idx) {
                ZERO
            } else {
                I * k[axis]
            }
        })
    }

    pub fn gradient(&self, values: &[C64]) -> Result<Vec<Vec<C64>>> {
        (0..self.dim).map(|a| self.derivative(values, a)).collect()
    }

    /// `Σ_j |f_j|² dx^n`.
    pub fn l2_norm_sq(&self, values: &[C64]) -> f64 {
        values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_volume()
    }

    pub fn l2_norm(&self, values: &[C64]) -> f64 {
        self.l2_norm_sq(values).sqrt()
    }

    /// `⟨f, g⟩ = Σ f_j conj(g_j) dx^n`.
    pub fn inner(&self, f: &[C64], g: &[C64]) -> C64 {
        f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<C64>() * self.cell_volume()
    }

    /// Squared `H^s` norm from spectral coefficients.
    pub fn sobolev_norm_sq_spectral(&self, coeffs: &[C64], s: f64) -> f64 {
        let w = self.cell_volume() / self.len() as f64;
        coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| (1.0 + self.k_squared(idx)).powf(s) * c.norm_sqr())
            .sum::<f64>()
            * w
    }

    pub fn sobolev_norm_values(&self, values: &[C64], s: f64) -> Result<f64> {
        if !(-10.0..=10.0).contains(&s) {
            return Err(QlsError::OutOfRange(format!("Sobolev index {s} outside [-10, 10]")));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(QlsError::NonFinite("sobolev_norm".into()));
        }
        let spec = self.forward(values)?;
        Ok(self.sobolev_norm_sq_spectral(&spec, s).sqrt())
    }

    pub fn coords_iter(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

fn transpose(data: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![ZERO; data.len()];
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = data[i * n + j];
        }
    }
    out
}

pub fn all_finite(values: &[C64]) -> bool {
    values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    grid: Grid,
    values: Vec<C64>,
    time: f64,
}

impl StateField {
    pub fn new(grid: Grid, values: Vec<C64>, time: f64) -> Result<Self> {
        grid.check_len(values.len())?;
        if !all_finite(&values) {
            return Err(QlsError::NonFinite("state field".into()));
        }
        Ok(StateField { grid, values, time })
    }

    pub(crate) fn new_unchecked(grid: Grid, values: Vec<C64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        StateField { grid, values, time }
    }

    pub fn zeros(grid: &Grid, time: f64) -> Self {
        StateField {
            values: vec![ZERO; grid.len()],
            grid: grid.clone(),
            time,
        }
    }

    pub fn from_fn<F>(grid: &Grid, time: f64, f: F) -> Result<Self>
    where
        F: Fn([f64; 2]) -> C64,
    {
        let values = grid.coords_iter().map(f).collect();
        StateField::new(grid.clone(), values, time)
    }

    /// Plane wave `e^{i k·x}` with `k` the lattice wavenumber of signed mode `m`.
    pub fn plane_wave(grid: &Grid, m: [i64; 2], time: f64) -> Self {
        let dk = grid.freq_spacing();
        let k = [m[0] as f64 * dk, m[1] as f64 * dk];
        let values = grid
            .coords_iter()
            .map(|x| C64::from_polar(1.0, k[0] * x[0] + k[1] * x[1]))
            .collect();
        StateField::new_unchecked(grid.clone(), values, time)
    }

    /// Random field with independent standard normal-ish entries, band-limited to
    /// `|k| <= k_cut` when given.
    pub fn random<R: Rng + ?Sized>(grid: &Grid, rng: &mut R, k_cut: Option<f64>) -> Self {
        let values: Vec<C64> = (0..grid.len())
            .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let values = match k_cut {
            None => values,
            Some(kc) => grid
                .apply_multiplier(&values, |_, k| {
                    if k[0] * k[0] + k[1] * k[1] <= kc * kc {
                        C64::new(1.0, 0.0)
                    } else {
                        ZERO
                    }
                })
                .expect("length matches"),
        };
        StateField::new_unchecked(grid.clone(), values, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }

    pub fn with_values(&self, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), self.grid.len());
        StateField {
            grid: self.grid.clone(),
            values,
            time: self.time,
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&self.values)
    }

    pub fn sobolev_norm(&self, s: f64) -> Result<f64> {
        self.grid.sobolev_norm_values(&self.values, s)
    }

    pub fn inner(&self, other: &StateField) -> C64 {
        self.grid.inner(&self.values, &other.values)
    }

    pub fn conj(&self) -> Self {
        self.with_values(self.values.iter().map(|v| v.conj()).collect())
    }

    pub fn scale(&self, a: C64) -> Self {
        self.with_values(self.values.iter().map(|v| v * a).collect())
    }

    pub fn add(&self, other: &StateField) -> Self {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &StateField) -> Self {
        self.with_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: C64, other: &StateField) -> Self {
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn derivative(&self, axis: usize) -> Result<Self> {
        Ok(self.with_values(self.grid.derivative(&self.values, axis)?))
    }

    /// Lattice translation by `shift` grid points (periodic).
    pub fn shifted(&self, shift: [i64; 2]) -> Self {
        let n = self.grid.n as i64;
        let g = &self.grid;
        let mut out = vec![ZERO; g.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let [a, b] = g.split_index(idx);
            let sa = (a as i64 - shift[0]).rem_euclid(n) as usize;
            let sb = if g.dim == 2 {
                (b as i64 - shift[1]).rem_euclid(n) as usize
            } else {
                0
            };
            *o = self.values[g.join_index([sa, sb])];
        }
        self.with_values(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub grid: Grid,
    pub coeffs: Vec<C64>,
    pub time: f64,
}

impl Spectrum {
    /// Parseval weight: `‖f‖₂² = norm_weight · Σ|f̂|²`.
    pub fn norm_weight(&self) -> f64 {
        self.grid.cell_volume() / self.grid.len() as f64
    }
}

pub fn forward_transform(f: &StateField) -> Result<Spectrum> {
    Ok(Spectrum {
        coeffs: f.grid.forward(&f.values)?,
        grid: f.grid.clone(),
        time: f.time,
    })
}

pub fn inverse_transform(s: &Spectrum) -> Result<StateField> {
    let values = s.grid.inverse(&s.coeffs)?;
    StateField::new(s.grid.clone(), values, s.time)
}

pub fn sobolev_norm(f: &StateField, s: f64) -> Result<f64> {
    f.sobolev_norm(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub index: [i64; 2],
    pub center: [f64; 2],
}

/// Tiling of the box by cubes of side `side` with vertices on `side·ℤⁿ`.
#[derive(Debug, Clone)]
pub struct CubePartition {
    grid: Grid,
    side: f64,
    per_axis: usize,
    cubes: Vec<Cube>,
    members: Vec<Vec<usize>>,
    point_cube: Vec<usize>,
}

impl CubePartition {
    pub fn unit(grid: &Grid) -> Result<Self> {
        Self::new(grid, 1.0)
    }

    pub fn new(grid: &Grid, side: f64) -> Result<Self> {
        let ratio = 2.0 * grid.half_length / side;
        if !(side > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(QlsError::InvalidGrid(format!(
                "box length {} is not a multiple of cube side {side}",
                2.0 * grid.half_length
            )));
        }
        let per_axis = ratio.round() as usize;
        let lo = -(grid.half_length / side).round() as i64;
        let ncubes = per_axis.pow(grid.dim as u32);
        let mut cubes = Vec::with_capacity(ncubes);
        for c in 0..ncubes {
            let (a, b) = if grid.dim == 1 {
                (c, 0)
            } else {
                (c / per_axis, c % per_axis)
            };
            let ia = lo + a as i64;
            let ib = if grid.dim == 2 { lo + b as i64 } else { 0 };
            let center = [
                (ia as f64 + 0.5) * side,
                if grid.dim == 2 { (ib as f64 + 0.5) * side } else { 0.0 },
            ];
            cubes.push(Cube {
                index: [ia, ib],
                center,
            });
        }
        let axis_cube = |j: usize| -> usize {
            let off = j as f64 * grid.spacing() / side;
            ((off + 1e-9).floor() as usize).min(per_axis - 1)
        };
        let mut members = vec![Vec::new(); ncubes];
        let mut point_cube = vec![0; grid.len()];
        for (idx, pc) in point_cube.iter_mut().enumerate() {
            let [a, b] = grid.split_index(idx);
            let c = if grid.dim == 1 {
                axis_cube(a)
            } else {
                axis_cube(a) * per_axis + axis_cube(b)
            };
            *pc = c;
            members[c].push(idx);
        }
        Ok(CubePartition {
            grid: grid.clone(),
            side,
            per_axis,
            cubes,
            members,
            point_cube,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn members(&self, cube: usize) -> &[usize] {
        &self.members[cube]
    }

    pub fn cube_of(&self, idx: usize) -> usize {
        self.point_cube[idx]
    }

    /// Cube ids whose doubles `Q*` contain cube `c` (the 3ⁿ neighbours, wrapped).
    pub fn double_neighbours(&self, c: usize) -> Vec<usize> {
        let p = self.per_axis as i64;
        let (a, b) = if self.grid.dim == 1 {
            (c as i64, 0)
        } else {
            ((c / self.per_axis) as i64, (c % self.per_axis) as i64)
        };
        let mut out = Vec::new();
        for da in -1..=1 {
            if self.grid.dim == 1 {
                out.push((a + da).rem_euclid(p) as usize);
                continue;
            }
            for db in -1..=1 {
                let na = (a + da).rem_euclid(p) as usize;
                let nb = (b + db).rem_euclid(p) as usize;
                out.push(na * self.per_axis + nb);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Grid points in the double `Q*_c` (side doubled about the same center, wrapped).
    pub fn double_members(&self, c: usize) -> Vec<usize> {
        let center = self.cubes[c].center;
        let l2 = 2.0 * self.grid.half_length;
        let mut out = Vec::new();
        for idx in 0..self.grid.len() {
            let x = self.grid.point(idx);
            let inside = (0..self.grid.dim).all(|d| {
                let mut dx = x[d] - center[d];
                dx -= l2 * (dx / l2).round();
                dx >= -self.side && dx < self.side
            });
            if inside {
                out.push(idx);
            }
        }
        out
    }

    /// Per-cube `Σ_{j∈Q} |f_j|² dx^n`.
    pub fn cube_energies(&self, values: &[C64]) -> Vec<f64> {
        let w = self.grid.cell_volume();
        self.members
            .iter()
            .map(|m| m.iter().map(|&i| values[i].norm_sqr()).sum::<f64>() * w)
            .collect()
    }
}

/// Streaming trapezoid accumulator for per-cube `∫‖f‖²_{L²(Q)} dt`.
#[derive(Debug, Clone)]
pub struct CubeTimeIntegral {
    prev: Option<(f64, Vec<f64>)>,
    integrals: Vec<f64>,
}

impl CubeTimeIntegral {
    pub fn new(ncubes: usize) -> Self {
        CubeTimeIntegral {
            prev: None,
            integrals: vec![0.0; ncubes],
        }
    }

    pub fn push(&mut self, t: f64, energies: Vec<f64>) {
        if let Some((t0, e0)) = &self.prev {
            let h = t - t0;
            for ((acc, a), b) in self.integrals.iter_mut().zip(e0).zip(&energies) {
                *acc += 0.5 * h * (a + b);
            }
        }
        self.prev = Some((t, energies));
    }

    pub fn integrals(&self) -> &[f64] {
        &self.integrals
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<StateField>,
    dt: f64,
}

impl Trajectory {
    pub fn new(frames: Vec<StateField>, dt: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(QlsError::EmptyTrajectory);
        }
        if frames.len() > 1 {
            if !(dt > 0.0) {
                return Err(QlsError::InvalidTrajectory(format!("dt = {dt} must be positive")));
            }
            let t0 = frames[0].time;
            for (i, f) in frames.iter().enumerate() {
                let expect = t0 + i as f64 * dt;
                if (f.time - expect).abs() > 1e-9 * dt.max(expect.abs()) + 1e-12 {
                    return Err(QlsError::InvalidTrajectory(format!(
                        "frame {i} at t = {} but uniform spacing requires {expect}",
                        f.time
                    )));
                }
                if f.grid != frames[0].grid {
                    return Err(QlsError::GridMismatch);
                }
            }
        }
        Ok(Trajectory { frames, dt })
    }

    pub fn frames(&self) -> &[StateField] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<StateField> {
        self.frames
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        self.frames[0].grid()
    }

    pub fn start_time(&self) -> f64 {
        self.frames[0].time
    }

    pub fn horizon(&self) -> f64 {
        self.frames.last().map(|f| f.time).unwrap_or(0.0) - self.start_time()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &StateField {
        self.frames.last().expect("non-empty")
    }

    /// `sup_t` of a per-frame quantity.
    pub fn sup_of<F: Fn(&StateField) -> f64 + Sync + Send>(&self, f: F) -> f64 {
        self.frames.par_iter().map(f).reduce(|| 0.0, f64::max)
    }
}

/// Per-cube `‖f‖²_{L²(Q_μ×[0,T])}` by trapezoid in `t`, with a linearly
/// interpolated partial last interval.
pub fn cube_space_time_sq(tr: &Trajectory, part: &CubePartition, t_end: f64) -> Result<Vec<f64>> {
    if tr.is_empty() {
        return Err(QlsError::EmptyTrajectory);
    }
    if tr.grid() != part.grid() {
        return Err(QlsError::GridMismatch);
    }
    if t_end < 0.0 || t_end > tr.horizon() * (1.0 + 1e-12) + 1e-14 {
        return Err(QlsError::OutOfRange(format!(
            "T = {t_end} exceeds trajectory horizon {}",
            tr.horizon()
        )));
    }
    let energies: Vec<Vec<f64>> = tr
        .frames
        .par_iter()
        .map(|f| part.cube_energies(f.values()))
        .collect();
    let mut acc = vec![0.0; part.len()];
    let dt = tr.dt;
    for i in 0..energies.len().saturating_sub(1) {
        let a = i as f64 * dt;
        if a >= t_end {
            break;
        }
        let b = ((i + 1) as f64 * dt).min(t_end);
        let h = b - a;
        let frac = h / dt;
        for c in 0..part.len() {
            let ea = energies[i][c];
            let eb_full = energies[i + 1][c];
            let eb = ea + frac * (eb_full - ea);
            acc[c] += 0.5 * h * (ea + eb);
        }
    }
    Ok(acc)
}

/// `|||f|||_T = sup_μ ‖f‖_{L²(Q_μ×[0,T])}`.
pub fn triple_norm_sup(tr: &Trajectory, part: &CubePartition, t_end: f64) -> Result<f64> {
    let sq = cube_space_time_sq(tr, part, t_end)?;
    Ok(sq.iter().map(|v| v.sqrt()).fold(0.0, f64::max))
}

/// `|||f|||'_T = Σ_μ ‖f‖_{L²(Q_μ×[0,T])}`.
pub fn triple_norm_sum(tr: &Trajectory, part: &CubePartition, t_end: f64) -> Result<f64> {
    let sq = cube_space_time_sq(tr, part, t_end)?;
    Ok(sq.iter().map(|v| v.sqrt()).sum())
}
