//! Experiment runner: resolves a config, runs one subcommand and writes its
//! reports (canonical JSON, CSV tables, binary trajectories) to an output
//! directory.

// negated comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use qls_core::coeffs::{freeze_linear_coefficients, validate_assumptions, validate_linear, validate_zero_state};
use qls_core::coeffs::{CoefficientSet, FrozenValidationOptions, ValidationOptions};
use qls_core::doi::{self, flat_escape_symbol, time_stability_horizon, uncentered_symbol, verify_lower_bound};
use qls_core::hamiltonian::{self, classify_nontrapping, metric_symbol, ClassifyOptions, Metric, RayStatus};
use qls_core::linear::{apriori_report, evolve_sampled, run_apriori, wave_packet, LinearSystem};
use qls_core::nonlinear::{
    continuation_solve, gaussian_data, picard_solve_from, vanishing_viscosity, ContinuationOptions,
};
use qls_core::report::EstimateReport;
use qls_core::{io, CubePartition, Grid, QlsError, StateField, Trajectory, C64};
use serde::Serialize;
use thiserror::Error;

pub use config::{load_configs, parse_configs, ExperimentConfig};

pub const DEFAULT_OUT: &str = "qls-out";
pub const RESOLVED_CONFIG: &str = "config.resolved.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] QlsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for invalid configuration, 1 for everything that fails afterwards.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Rays,
    Doi,
    Linear,
    Solve,
    Limit,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rays => "rays",
            Command::Doi => "doi",
            Command::Linear => "linear",
            Command::Solve => "solve",
            Command::Limit => "limit",
            Command::Verify => "verify",
        }
    }
}

/// Applies command-line overrides and picks the output directory of each
/// entry: `base` itself for a single entry, `base/<name or index>` otherwise.
pub fn resolve(
    mut cfgs: Vec<ExperimentConfig>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Vec<(ExperimentConfig, PathBuf)> {
    let single = cfgs.len() == 1;
    let base = out
        .or_else(|| if single { cfgs[0].out.clone() } else { None })
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfgs.iter_mut()
        .enumerate()
        .map(|(i, c)| {
            if let Some(s) = seed {
                c.seed = s;
            }
            let dir = if single {
                base.clone()
            } else {
                let leaf = c.name.clone().unwrap_or_else(|| format!("{i:03}"));
                base.join(leaf)
            };
            c.out = Some(dir.clone());
            (c.clone(), dir)
        })
        .collect()
}

fn write_json<T: Serialize>(dir: &Path, file: &str, value: &T) -> Result<(), CliError> {
    fs::write(dir.join(file), canonical::to_canonical_string(value)?)?;
    Ok(())
}

fn write_trajectory(dir: &Path, tr: &Trajectory) -> Result<(), CliError> {
    let mut w = BufWriter::new(fs::File::create(dir.join("trajectory.bin"))?);
    io::write_trajectory(&mut w, tr)?;
    Ok(())
}

/// Runs one subcommand for one resolved entry.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    let grid = cfg.build_grid()?;
    let cs = cfg.coefficients()?;
    fs::create_dir_all(out)?;
    write_json(out, RESOLVED_CONFIG, cfg)?;
    match cmd {
        Command::Rays => run_rays(cfg, &grid, &cs, out),
        Command::Doi => run_doi(cfg, &grid, &cs, out),
        Command::Linear => run_linear(cfg, &grid, &cs, out),
        Command::Solve => run_solve(cfg, &grid, &cs, out),
        Command::Limit => run_limit(cfg, &grid, &cs, out),
        Command::Verify => run_verify(cfg, &grid, &cs, out),
    }
}

fn ray_options(grid: &Grid, cfg: &ExperimentConfig) -> ClassifyOptions {
    let r = &cfg.rays;
    ClassifyOptions {
        escape_radius: r.escape_radius.unwrap_or(grid.half_length() / 2.0),
        s_budget: r.s_budget,
        ds: r.ds,
        t: 0.0,
    }
}

#[derive(Serialize)]
struct RayRow {
    x0: f64,
    x1: f64,
    xi0: f64,
    xi1: f64,
    status: RayStatus,
    exit_forward: Option<f64>,
    exit_backward: Option<f64>,
    h_drift: f64,
}

#[derive(Serialize)]
struct RaysSummary {
    metric: String,
    rays: usize,
    escaped: usize,
    undetermined: usize,
    failed: usize,
    nontrapping_on_sample: bool,
    worst_ray: Option<usize>,
    max_h_drift: f64,
    max_exit_time: f64,
}

fn run_rays(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet, out: &Path) -> Result<(), CliError> {
    let opts = ray_options(grid, cfg);
    let metric = cs.zero_state_metric();
    let sample = hamiltonian::default_sample(grid.dim(), opts.escape_radius, cfg.rays.positions, cfg.rays.directions);
    let v = classify_nontrapping(&metric, &sample, &opts);
    let mut w = csv::Writer::from_path(out.join("rays.csv"))?;
    for r in &v.rays {
        w.serialize(RayRow {
            x0: r.x0[0],
            x1: r.x0[1],
            xi0: r.xi0[0],
            xi1: r.xi0[1],
            status: r.status,
            exit_forward: r.exit_time_forward,
            exit_backward: r.exit_time_backward,
            h_drift: r.h_drift,
        })?;
    }
    w.flush()?;
    let exits = v
        .rays
        .iter()
        .flat_map(|r| [r.exit_time_forward, r.exit_time_backward])
        .flatten();
    write_json(
        out,
        "rays.json",
        &RaysSummary {
            metric: metric.label(),
            rays: v.rays.len(),
            escaped: v.rays.iter().filter(|r| r.status == RayStatus::Escaped).count(),
            undetermined: v.undetermined,
            failed: v.failed,
            nontrapping_on_sample: v.nontrapping_on_sample,
            worst_ray: v.worst_ray,
            max_h_drift: v.rays.iter().map(|r| r.h_drift).filter(|d| d.is_finite()).fold(0.0, f64::max),
            max_exit_time: exits.fold(0.0, f64::max),
        },
    )
}

#[derive(Serialize)]
struct UncenteredOut {
    n_weight: f64,
    report: doi::BumpBoundReport,
}

#[derive(Serialize)]
struct DoiOut {
    r_cut: f64,
    x_max: f64,
    xi_max: f64,
    samples: usize,
    lower_bound: doi::LowerBoundReport,
    uncentered: Option<UncenteredOut>,
    time_horizon: Option<f64>,
}

fn run_doi(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet, out: &Path) -> Result<(), CliError> {
    let d = &cfg.doi;
    let dim = grid.dim();
    let x_max = d.x_max.unwrap_or(grid.half_length() / 2.0);
    let metric: Arc<dyn Metric> = Arc::new(cs.zero_state_metric());
    let h = metric_symbol(metric.clone()).at_time(0.0);
    let r = flat_escape_symbol(dim, d.r_cut)?;
    let sample = doi::default_sample(dim, x_max, d.r_cut, d.xi_max);
    let xi_min = 2.0 * d.r_cut;
    let lower = verify_lower_bound(&h, &r.symbol, &sample, xi_min)?;
    let uncentered = match d.x_mu {
        Some(mu) => {
            let u = uncentered_symbol(&r, &r, mu, &h, d.n_max, &sample, xi_min)?;
            Some(UncenteredOut {
                n_weight: u.symbol.n_weight,
                report: u.report,
            })
        }
        None => None,
    };
    let time_horizon = if cs.time_dependent {
        Some(time_stability_horizon(metric, &r, &sample, xi_min, d.t_max, None)?)
    } else {
        None
    };
    write_json(
        out,
        "doi.json",
        &DoiOut {
            r_cut: d.r_cut,
            x_max,
            xi_max: d.xi_max,
            samples: lower.samples,
            lower_bound: lower,
            uncentered,
            time_horizon,
        },
    )
}

#[derive(Serialize)]
struct LinearOut {
    epsilon: f64,
    t_end: f64,
    dt: f64,
    initial_l2: f64,
    apriori: qls_core::linear::AprioriReport,
}

fn run_linear(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet, out: &Path) -> Result<(), CliError> {
    let l = &cfg.linear;
    let sys = LinearSystem::from_family(cs, grid, l.epsilon)?.with_scheme(l.scheme);
    let u0 = wave_packet(grid, l.packet.center, l.packet.carrier, l.packet.sigma)?;
    let part = CubePartition::unit(grid)?;
    let apriori = if l.dump_stride > 0 {
        let tr = evolve_sampled(&sys, &u0, l.t_end, l.dt, l.dump_stride)?;
        write_trajectory(out, &tr)?;
        let forcing = tr
            .frames()
            .iter()
            .map(|f| sys.forcing_norm(f.time()))
            .collect::<qls_core::Result<Vec<f64>>>()?;
        apriori_report(&tr, &part, Some(&forcing), l.t_end)?
    } else {
        run_apriori(&sys, &u0, &part, l.t_end, l.dt)?
    };
    write_json(
        out,
        "linear.json",
        &LinearOut {
            epsilon: l.epsilon,
            t_end: l.t_end,
            dt: l.dt,
            initial_l2: u0.l2_norm(),
            apriori,
        },
    )
}

fn initial_data(grid: &Grid, d: &config::DataSpec) -> Result<StateField, CliError> {
    Ok(gaussian_data(grid, C64::new(d.amplitude[0], d.amplitude[1]), d.width, d.center)?)
}

fn run_solve(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet, out: &Path) -> Result<(), CliError> {
    let s = &cfg.solve;
    let u0 = initial_data(grid, &s.data)?;
    match s.horizon {
        None => {
            let sol = picard_solve_from(cs, &s.solver, &u0, s.initial_iterate)?;
            if s.dump {
                write_trajectory(out, &sol.trajectory)?;
            }
            write_json(out, "solve.json", &sol)
        }
        Some(h) => {
            let opts = ContinuationOptions {
                record_apriori: s.record_apriori,
                ..Default::default()
            };
            let rep = continuation_solve(cs, &s.solver, &u0, h, &opts)?;
            if s.dump {
                write_trajectory(out, &rep.solution.trajectory)?;
            }
            write_json(out, "solve.json", &rep)
        }
    }
}

fn run_limit(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet, out: &Path) -> Result<(), CliError> {
    let m = &cfg.limit;
    let u0 = initial_data(grid, &m.data)?;
    let rep = vanishing_viscosity(cs, &m.solver, &u0, m.horizon, &m.eps_list)?;
    write_json(out, "limit.json", &rep)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixRow {
    pub id: String,
    pub check: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Pass/fail matrix of the NL, L and D validators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyMatrix {
    pub family: String,
    pub rows: Vec<MatrixRow>,
    pub pass: bool,
}

fn rows_of(report: &EstimateReport) -> Vec<MatrixRow> {
    report
        .entries
        .iter()
        .map(|e| {
            let (id, check) = e.name.split_once(':').unwrap_or((e.name.as_str(), ""));
            MatrixRow {
                id: id.to_string(),
                check: check.to_string(),
                pass: e.pass,
                measured: e.measured,
                bound: e.bound,
                note: e.note.clone(),
            }
        })
        .collect()
}

pub fn verify_matrix(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet) -> Result<VerifyMatrix, CliError> {
    let v = &cfg.verify;
    let rays = v.rays.then(|| ray_options(grid, cfg));
    let nl_opts = ValidationOptions {
        z_samples: v.z_samples,
        seed: cfg.seed,
        rays,
        ray_positions: v.ray_positions,
        ray_directions: v.ray_directions,
        ..ValidationOptions::for_grid(grid)
    };
    let lin_opts = FrozenValidationOptions {
        order: v.order,
        c_bound: v.c_bound,
        rays,
        ray_positions: v.ray_positions,
        ray_directions: v.ray_directions,
    };
    let nl = validate_assumptions(cs, grid, &nl_opts);
    let lin = validate_linear(&freeze_linear_coefficients(cs, grid, 0.0)?, &lin_opts);
    let zero = validate_zero_state(cs, grid, 0.0, &lin_opts)?;
    let rows: Vec<MatrixRow> = [nl, lin, zero].iter().flat_map(rows_of).collect();
    Ok(VerifyMatrix {
        family: cfg.family.clone(),
        pass: rows.iter().all(|r| r.pass),
        rows,
    })
}

fn run_verify(cfg: &ExperimentConfig, grid: &Grid, cs: &CoefficientSet, out: &Path) -> Result<(), CliError> {
    let m = verify_matrix(cfg, grid, cs)?;
    write_json(out, "verify.json", &m)
}
