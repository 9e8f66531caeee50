//! Experiment configuration. Every block has defaults, so a config only needs
//! the fields it changes; unknown keys are rejected.

use std::path::{Path, PathBuf};

use qls_core::coeffs::{registry, CoefficientSet, FamilyParams, FAMILIES};
use qls_core::linear::RemainderScheme;
use qls_core::nonlinear::{InitialIterate, SolverConfig};
use qls_core::Grid;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    /// Box is `[-half_length, half_length)^dim`.
    pub half_length: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dim: 1,
            half_length: 16.0,
            points: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaysBlock {
    /// Defaults to half the box.
    pub escape_radius: Option<f64>,
    pub s_budget: f64,
    pub ds: f64,
    pub positions: usize,
    pub directions: usize,
}

impl Default for RaysBlock {
    fn default() -> Self {
        RaysBlock {
            escape_radius: None,
            s_budget: 50.0,
            ds: 1e-2,
            positions: 8,
            directions: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoiBlock {
    pub r_cut: f64,
    /// Defaults to half the box.
    pub x_max: Option<f64>,
    pub xi_max: f64,
    /// Center of the uncentered symbol; skipped when absent.
    pub x_mu: Option<[f64; 2]>,
    pub n_max: u32,
    /// Cap for the time-stability horizon (time-dependent families only).
    pub t_max: f64,
}

impl Default for DoiBlock {
    fn default() -> Self {
        DoiBlock {
            r_cut: 1.0,
            x_max: None,
            xi_max: 1e4,
            x_mu: None,
            n_max: 16,
            t_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketSpec {
    pub center: [f64; 2],
    pub carrier: [f64; 2],
    pub sigma: f64,
}

impl Default for PacketSpec {
    fn default() -> Self {
        PacketSpec {
            center: [0.0; 2],
            carrier: [8.0, 0.0],
            sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearBlock {
    pub epsilon: f64,
    pub t_end: f64,
    pub dt: f64,
    pub scheme: RemainderScheme,
    pub packet: PacketSpec,
    /// Write every `dump_stride`-th frame to `trajectory.bin`; 0 disables.
    pub dump_stride: usize,
}

impl Default for LinearBlock {
    fn default() -> Self {
        LinearBlock {
            epsilon: 1e-3,
            t_end: 0.25,
            dt: 1e-3,
            scheme: RemainderScheme::Midpoint,
            packet: PacketSpec::default(),
            dump_stride: 0,
        }
    }
}

/// Gaussian initial data `amplitude·e^{−|x−center|²/width²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    /// `[re, im]`.
    pub amplitude: [f64; 2],
    pub width: f64,
    pub center: [f64; 2],
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            amplitude: [0.3, 0.0],
            width: 2.0,
            center: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveBlock {
    pub solver: SolverConfig,
    pub data: DataSpec,
    /// Continue past one window up to this time; a single Picard window when absent.
    pub horizon: Option<f64>,
    pub initial_iterate: InitialIterate,
    pub record_apriori: bool,
    pub dump: bool,
}

impl Default for SolveBlock {
    fn default() -> Self {
        SolveBlock {
            solver: SolverConfig::default(),
            data: DataSpec::default(),
            horizon: None,
            initial_iterate: InitialIterate::SemigroupTail,
            record_apriori: false,
            dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitBlock {
    pub solver: SolverConfig,
    pub data: DataSpec,
    pub horizon: f64,
    pub eps_list: Vec<f64>,
}

impl Default for LimitBlock {
    fn default() -> Self {
        LimitBlock {
            solver: SolverConfig {
                s: 4.0,
                t_end: 2.5e-3,
                ..SolverConfig::default()
            },
            data: DataSpec::default(),
            horizon: 0.02,
            eps_list: vec![1e-2, 5e-3, 2.5e-3, 1.25e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    pub z_samples: usize,
    pub rays: bool,
    pub ray_positions: usize,
    pub ray_directions: usize,
    /// Order of the C^N norms in the L/D checks.
    pub order: u32,
    pub c_bound: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            z_samples: 8,
            rays: true,
            ray_positions: 8,
            ray_directions: 16,
            order: 2,
            c_bound: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub grid: GridSpec,
    pub family: String,
    pub params: FamilyParams,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub rays: RaysBlock,
    pub doi: DoiBlock,
    pub linear: LinearBlock,
    pub solve: SolveBlock,
    pub limit: LimitBlock,
    pub verify: VerifyBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: None,
            grid: GridSpec::default(),
            family: "flat".into(),
            params: FamilyParams::default(),
            seed: 0,
            out: None,
            rays: RaysBlock::default(),
            doi: DoiBlock::default(),
            linear: LinearBlock::default(),
            solve: SolveBlock::default(),
            limit: LimitBlock::default(),
            verify: VerifyBlock::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn build_grid(&self) -> Result<Grid, CliError> {
        Grid::new(self.grid.dim, self.grid.half_length, self.grid.points).map_err(|e| invalid(e.to_string()))
    }

    pub fn coefficients(&self) -> Result<CoefficientSet, CliError> {
        if !FAMILIES.contains(&self.family.as_str()) {
            return Err(invalid(format!("unknown family {:?}; expected one of {FAMILIES:?}", self.family)));
        }
        registry(&self.family, self.grid.dim, &self.params).map_err(|e| invalid(e.to_string()))
    }

    /// Checks every block before any computation.
    pub fn validate(&self) -> Result<(), CliError> {
        self.build_grid()?;
        self.coefficients()?;
        let r = &self.rays;
        if let Some(e) = r.escape_radius {
            positive("rays.escape_radius", e)?;
        }
        positive("rays.s_budget", r.s_budget)?;
        positive("rays.ds", r.ds)?;
        if r.positions == 0 || r.directions == 0 {
            return Err(invalid("rays.positions and rays.directions must be positive"));
        }
        let d = &self.doi;
        if !(d.r_cut >= 1.0) {
            return Err(invalid(format!("doi.r_cut = {} must be >= 1", d.r_cut)));
        }
        if let Some(x) = d.x_max {
            positive("doi.x_max", x)?;
        }
        if !(d.xi_max > 2.0 * d.r_cut) {
            return Err(invalid("doi.xi_max must exceed 2 r_cut"));
        }
        positive("doi.t_max", d.t_max)?;
        let l = &self.linear;
        if !(l.epsilon >= 0.0) {
            return Err(invalid("linear.epsilon must be >= 0"));
        }
        positive("linear.t_end", l.t_end)?;
        positive("linear.dt", l.dt)?;
        positive("linear.packet.sigma", l.packet.sigma)?;
        let s = &self.solve;
        s.solver.validate().map_err(|e| invalid(format!("solve.solver: {e}")))?;
        positive("solve.data.width", s.data.width)?;
        if let Some(h) = s.horizon {
            positive("solve.horizon", h)?;
        }
        let m = &self.limit;
        m.solver.validate().map_err(|e| invalid(format!("limit.solver: {e}")))?;
        positive("limit.data.width", m.data.width)?;
        positive("limit.horizon", m.horizon)?;
        if m.eps_list.len() < 2 || m.eps_list.iter().any(|e| !(*e > 0.0)) {
            return Err(invalid("limit.eps_list needs at least two positive values"));
        }
        let v = &self.verify;
        positive("verify.c_bound", v.c_bound)?;
        if v.rays && (v.ray_positions == 0 || v.ray_directions == 0) {
            return Err(invalid("verify ray sample sizes must be positive"));
        }
        Ok(())
    }
}

/// Parses a file holding one config object or an array of them.
pub fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    parse_configs(&text)
}

pub fn parse_configs(text: &str) -> Result<Vec<ExperimentConfig>, CliError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    if items.is_empty() {
        return Err(invalid("empty experiment list"));
    }
    let cfgs = items
        .into_iter()
        .map(|v| serde_json::from_value::<ExperimentConfig>(v).map_err(|e| invalid(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    for c in &cfgs {
        c.validate()?;
    }
    Ok(cfgs)
}
