//! Run orchestration: builds the problem and initial state from a
//! configuration, steps it with the audit after every step, and writes
//! `energy.csv`, `fields_NNNN.vtk` snapshots and `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{audit_step, measure_phase_velocity, AuditTolerances, EnergySnapshot, StefanOracle, StepAudit};
use crate::config::{Analysis, ChiInit, ConfigError, ForceConfig, KinematicsConfig, RunConfig, RunPlan, ScalarInit, VelocityInit};
use crate::grid::io::{write_vtk, CellArray};
use crate::grid::{Field, Grid, GridError};
use crate::stepper::{advance, reconstruct_p, Bounds, Problem, Residuals, State, StepError, StepReport};
use crate::tensors::{DevTensor2, SymTensor2, Vector};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("energy.csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report.json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Assembles grid, material, boundary data, loads and kinematics.
pub fn build_problem(cfg: &RunConfig) -> Result<Problem, RunError> {
    let kinds: Vec<_> = cfg.grid.boundary.iter().map(|b| b.kind).collect();
    let grid = Grid::new(&cfg.grid.cells, &cfg.grid.extent, &kinds)?;
    let d = grid.dim();
    let params = cfg.material()?;
    let mut problem = Problem::new(grid, params, cfg.grid.boundary_spec(), cfg.solver.clone())?;
    let (lx, ly) = (problem.grid.extent(0), if d > 1 { problem.grid.extent(1) } else { 1.0 });
    match &cfg.force {
        None => {}
        Some(ForceConfig::Shear { amplitude, mode }) => {
            if d < 2 {
                return Err(ConfigError::Invalid("shear force needs two dimensions".into()).into());
            }
            let (a, k) = (*amplitude, 2.0 * std::f64::consts::PI * *mode as f64 / ly);
            problem = problem.with_force(|x| Vector::from_slice(2, &[a * (k * x[1]).sin(), 0.0]));
        }
        Some(ForceConfig::Uniform { value }) => {
            if value.len() != d {
                return Err(ConfigError::Invalid("force value needs one entry per axis".into()).into());
            }
            problem = problem.with_force(|_| Vector::from_slice(d, value));
        }
    }
    match &cfg.kinematics {
        None => {}
        Some(KinematicsConfig::Still) => problem = problem.with_kinematics(|_| Vector::zeros(d)),
        Some(KinematicsConfig::Rotation { omega, inner, outer }) => {
            if d != 2 {
                return Err(ConfigError::Invalid("rotation needs two dimensions".into()).into());
            }
            let (r1, r2) = match (inner, outer) {
                (None, None) => (f64::INFINITY, f64::INFINITY),
                (Some(a), Some(b)) if 0.0 < *a && a < b => (*a, *b),
                _ => return Err(ConfigError::Invalid("rotation needs 0 < inner < outer, or neither".into()).into()),
            };
            let psi = rotor_streamfunction(*omega, r1, r2);
            let (cx, cy) = (0.5 * lx, 0.5 * ly);
            let (hx, hy) = (problem.grid.h(0), problem.grid.h(1));
            let at = |x: f64, y: f64| psi((x - cx).hypot(y - cy));
            problem = problem.with_kinematics(|x| {
                let vx = (at(x[0], x[1] + hy) - at(x[0], x[1] - hy)) / (2.0 * hy);
                let vy = -(at(x[0] + hx, x[1]) - at(x[0] - hx, x[1])) / (2.0 * hx);
                Vector::from_slice(2, &[vx, vy])
            });
        }
    }
    Ok(problem)
}

/// Streamfunction `ψ(r)` of a rotor turning rigidly at `omega` inside `r1`
/// and fading to rest at `r2` with a smoothstep profile. The velocity is
/// taken as the centered-difference curl of `ψ`, so it is divergence-free
/// for the discrete divergence and exactly rigid in the core.
fn rotor_streamfunction(omega: f64, r1: f64, r2: f64) -> impl Fn(f64) -> f64 {
    move |r: f64| {
        if r <= r1 {
            return -0.5 * omega * r * r;
        }
        let l = r2 - r1;
        let u = ((r - r1) / l).min(1.0);
        let ring = l * (r1 * (u - u.powi(3) + 0.5 * u.powi(4)) + l * (0.5 * u * u - 0.75 * u.powi(4) + 0.4 * u.powi(5)));
        -omega * (0.5 * r1 * r1 + ring)
    }
}

/// Right-going damped longitudinal mode of the linearized 1D system,
/// using the wave number seen by centered differences.
struct WaveMode {
    k: f64,
    /// Complex growth rate `s = −γ − iω`.
    s: Complex64,
}

impl WaveMode {
    fn new(cfg: &RunConfig, problem: &Problem, mode: usize) -> Result<Self, RunError> {
        let g = &problem.grid;
        if g.dim() != 1 {
            return Err(ConfigError::Invalid("wave initial data is one-dimensional".into()).into());
        }
        let p = &problem.params;
        let k = 2.0 * std::f64::consts::PI * mode as f64 / cfg.grid.extent[0];
        let k_eff = (k * g.h(0)).sin() / g.h(0);
        let disc = 4.0 * p.rho * p.k_e * k_eff * k_eff - (p.k_v * k_eff * k_eff).powi(2);
        if !(disc > 0.0) {
            return Err(ConfigError::Invalid("wave mode is overdamped".into()).into());
        }
        let s = Complex64::new(-p.k_v * k_eff * k_eff, -disc.sqrt()) / (2.0 * p.rho);
        Ok(Self { k, s })
    }

    fn velocity(&self, x: f64, amplitude: f64) -> f64 {
        amplitude * (self.k * x).cos()
    }

    fn strain(&self, x: f64, amplitude: f64, k_eff: f64) -> f64 {
        let e_hat = Complex64::i() * k_eff * amplitude / self.s;
        (e_hat * Complex64::from_polar(1.0, self.k * x)).re
    }
}

/// Initial state described by the configuration.
pub fn initial_state(cfg: &RunConfig, problem: &Problem) -> Result<State, RunError> {
    let g = &problem.grid;
    let d = g.dim();
    let ic = &cfg.initial;
    let strain = if ic.strain.is_empty() { SymTensor2::zeros(d) } else { SymTensor2::from_packed(d, &ic.strain) };
    let mut v = Field::filled(g, Vector::zeros(d));
    let mut e = Field::filled(g, strain);
    match ic.velocity {
        VelocityInit::Zero => {}
        VelocityInit::Shear { amplitude, mode } => {
            if d < 2 {
                return Err(ConfigError::Invalid("shear velocity needs two dimensions".into()).into());
            }
            let k = 2.0 * std::f64::consts::PI * mode as f64 / g.extent(1);
            v = Field::from_fn(g, |i, j| Vector::from_slice(2, &[amplitude * (k * g.cell_center(i, j)[1]).sin(), 0.0]));
        }
        VelocityInit::Wave { amplitude, mode } => {
            let w = WaveMode::new(cfg, problem, mode)?;
            let k_eff = (w.k * g.h(0)).sin() / g.h(0);
            v = Field::from_fn(g, |i, j| Vector::from_slice(1, &[w.velocity(g.cell_center(i, j)[0], amplitude)]));
            e = Field::from_fn(g, |i, j| {
                SymTensor2::from_packed(1, &[strain.get(0, 0) + w.strain(g.cell_center(i, j)[0], amplitude, k_eff)])
            });
        }
    }
    if ic.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for (i, j) in g.cells() {
            let mut x = v.get(i, j);
            for a in 0..d {
                x.set(a, x.get(a) + ic.noise * rng.gen_range(-1.0..=1.0));
            }
            v.set(i, j, x);
        }
    }
    let scalar = |s: &ScalarInit| Field::from_fn(g, |i, j| s.eval(g.cell_center(i, j)));
    let alpha = scalar(&ic.alpha);
    let theta = scalar(&ic.theta);
    let chi = match &ic.chi {
        ChiInit::Equilibrium => theta.map_all(|t| if t > problem.params.theta_pt { 1.0 } else { 0.0 }),
        ChiInit::Profile { profile } => scalar(profile),
    };
    Ok(State::new(problem, v, e, alpha, theta, chi)?)
}

/// One row of `energy.csv`. Field order is the frozen column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub segment: usize,
    pub step: usize,
    pub time: f64,
    pub tau: f64,
    pub outer_iterations: usize,
    pub kinetic: f64,
    pub stored: f64,
    pub gradient: f64,
    pub enthalpy: f64,
    pub total: f64,
    pub maxwell: f64,
    pub stokes: f64,
    pub hyper: f64,
    pub damage: f64,
    pub creep_gradient: f64,
    pub work_body: f64,
    pub work_drive: f64,
    pub adiabatic: f64,
    pub heat_boundary: f64,
    pub entropy_production: Option<f64>,
    pub mech_lhs: f64,
    pub mech_rhs: f64,
    pub mech_slack: f64,
    pub mech_scale: f64,
    pub drift: f64,
    pub relative_drift: f64,
    pub residual_max: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub chi_min: f64,
    pub chi_max: f64,
    pub theta_min: f64,
    pub clamped_alpha: usize,
    pub enthalpy_underflow: usize,
    pub max_trace_pi: f64,
    pub max_skew_e: f64,
    pub mech_ok: bool,
    pub conserve_ok: bool,
    pub bounds_ok: bool,
    pub signs_ok: bool,
    pub structure_ok: bool,
}

impl EnergyRow {
    fn initial(segment: usize, e: &EnergySnapshot, b: &Bounds) -> Self {
        Self::build(segment, 0, 0.0, 0.0, 0, e, b)
    }

    fn build(segment: usize, step: usize, time: f64, tau: f64, outer: usize, e: &EnergySnapshot, b: &Bounds) -> Self {
        Self {
            segment,
            step,
            time,
            tau,
            outer_iterations: outer,
            kinetic: e.kinetic,
            stored: e.stored,
            gradient: e.gradient,
            enthalpy: e.enthalpy,
            total: e.total(),
            maxwell: 0.0,
            stokes: 0.0,
            hyper: 0.0,
            damage: 0.0,
            creep_gradient: 0.0,
            work_body: 0.0,
            work_drive: 0.0,
            adiabatic: 0.0,
            heat_boundary: 0.0,
            entropy_production: None,
            mech_lhs: 0.0,
            mech_rhs: 0.0,
            mech_slack: 0.0,
            mech_scale: 0.0,
            drift: 0.0,
            relative_drift: 0.0,
            residual_max: 0.0,
            alpha_min: b.alpha_min,
            alpha_max: b.alpha_max,
            chi_min: b.chi_min,
            chi_max: b.chi_max,
            theta_min: b.theta_min,
            clamped_alpha: 0,
            enthalpy_underflow: 0,
            max_trace_pi: 0.0,
            max_skew_e: 0.0,
            mech_ok: true,
            conserve_ok: true,
            bounds_ok: b.hold(),
            signs_ok: true,
            structure_ok: true,
        }
    }

    fn of_step(segment: usize, step: usize, state: &State, r: &StepReport, a: &StepAudit) -> Self {
        let c = &r.channels;
        let mut row = Self::build(segment, step, state.time, r.tau, r.outer_iterations, &a.energies, &state.bounds());
        row.maxwell = c.maxwell;
        row.stokes = c.stokes;
        row.hyper = c.hyper;
        row.damage = c.damage;
        row.creep_gradient = c.creep_gradient;
        row.work_body = c.work_body;
        row.work_drive = c.work_drive;
        row.adiabatic = c.adiabatic;
        row.heat_boundary = c.heat_boundary;
        row.entropy_production = r.entropy_production;
        row.mech_lhs = a.mech.lhs;
        row.mech_rhs = a.mech.rhs;
        row.mech_slack = a.mech.slack;
        row.mech_scale = a.mech.scale;
        row.drift = a.total.drift;
        row.relative_drift = a.total.relative;
        row.residual_max = r.residuals.max();
        row.clamped_alpha = r.clamped_alpha;
        row.enthalpy_underflow = r.enthalpy_underflow;
        row.max_trace_pi = r.max_trace_pi;
        row.max_skew_e = r.max_skew_e;
        row.mech_ok = a.mech_ok;
        row.conserve_ok = a.conserve_ok;
        row.bounds_ok = a.bounds_ok;
        row.signs_ok = a.signs_ok;
        row.structure_ok = a.structure_ok;
        row
    }
}

/// Audit verdicts accumulated over a segment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub steps_audited: usize,
    pub mech_failures: usize,
    pub conserve_failures: usize,
    pub bounds_failures: usize,
    pub sign_failures: usize,
    pub structure_failures: usize,
    /// Smallest `slack / scale` seen.
    pub min_relative_slack: f64,
    pub max_abs_relative_drift: f64,
    /// True when the run is insulated, unforced and not driven.
    pub closed: bool,
    pub passed: bool,
}

impl AuditSummary {
    fn record(&mut self, a: &StepAudit) {
        if self.steps_audited == 0 {
            self.min_relative_slack = f64::INFINITY;
        }
        self.steps_audited += 1;
        self.mech_failures += usize::from(!a.mech_ok);
        self.conserve_failures += usize::from(!a.conserve_ok);
        self.bounds_failures += usize::from(!a.bounds_ok);
        self.sign_failures += usize::from(!a.signs_ok);
        self.structure_failures += usize::from(!a.structure_ok);
        let rel = if a.mech.scale > 0.0 { a.mech.slack / a.mech.scale } else { 0.0 };
        self.min_relative_slack = self.min_relative_slack.min(rel);
        self.max_abs_relative_drift = self.max_abs_relative_drift.max(a.total.relative.abs());
        self.closed = a.closed;
    }

    fn finish(&mut self, completed: bool) {
        if self.steps_audited == 0 {
            self.min_relative_slack = 0.0;
        }
        self.passed = completed
            && self.mech_failures + self.conserve_failures + self.bounds_failures + self.sign_failures + self.structure_failures
                == 0;
    }
}

/// Front position at one output time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontSample {
    pub time: f64,
    pub numeric: f64,
    pub oracle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StefanReport {
    pub omega: f64,
    pub mu: f64,
    pub x0: f64,
    pub fronts: Vec<FrontSample>,
    /// Largest `|x_num − x_oracle| / |x_oracle − x0|` over `t > 10τ`.
    pub max_relative_error: f64,
    pub final_relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    /// Wavelength `λ = 1/k` (m).
    pub lambda: f64,
    pub lambda_cells: f64,
    pub probe_separation: f64,
    pub predicted: Option<f64>,
    pub measured: Option<f64>,
    pub relative_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub tau: f64,
    pub steps: usize,
    /// Largest change of `|sph E|` at the box center, relative to its initial value.
    pub drift_sph: f64,
    pub drift_dev: f64,
    pub max_skew_e: f64,
    pub max_trace_pi: f64,
    pub max_trace_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub index: usize,
    pub tau: f64,
    pub steps_requested: usize,
    pub steps_completed: usize,
    /// Steps actually taken, including halved substeps.
    pub substeps: usize,
    pub final_time: f64,
    pub error: Option<String>,
    pub final_residuals: Residuals,
    pub final_bounds: Bounds,
    pub audit: AuditSummary,
    pub stefan: Option<StefanReport>,
    pub dispersion: Option<DispersionReport>,
    pub rotation: Option<RotationReport>,
}

/// Comparisons across segments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanAnalysis {
    /// Whether the Stefan front error decreases with ω over the segments.
    pub stefan_error_decreasing: Option<bool>,
    /// Whether the measured phase velocity strictly increases with wavelength.
    pub dispersion_increasing: Option<bool>,
    /// Observed orders `log2(drift(τ)/drift(τ/2))` of `|dev E|` between consecutive segments.
    pub rotation_orders_dev: Option<Vec<f64>>,
    pub rotation_orders_sph: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub segments: Vec<SegmentReport>,
    pub analysis: PlanAnalysis,
    pub audit_passed: bool,
    pub completed: bool,
}

/// Where and how a run writes its artifacts.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Output directory; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
}

struct Outputs {
    dir: PathBuf,
    csv: csv::Writer<fs::File>,
    snapshot: usize,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("energy.csv");
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        Ok(Self { dir: dir.to_path_buf(), csv: csv::Writer::from_writer(file), snapshot: 0 })
    }

    fn row(&mut self, row: &EnergyRow) -> Result<(), RunError> {
        self.csv.serialize(row)?;
        Ok(())
    }

    fn snapshot(&mut self, grid: &Grid, state: &State, title: &str) -> Result<(), RunError> {
        let path = self.dir.join(format!("fields_{:04}.vtk", self.snapshot));
        write_vtk(&path, grid, title, &field_arrays(state)).map_err(io_err(&path))?;
        self.snapshot += 1;
        Ok(())
    }
}

fn tensor3(t: &SymTensor2) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate().take(t.dim()) {
        for (j, x) in row.iter_mut().enumerate().take(t.dim()) {
            *x = t.get(i, j);
        }
    }
    out
}

/// Cell arrays of a snapshot, with their frozen VTK names.
pub fn field_arrays(s: &State) -> Vec<CellArray> {
    let scalar = |name: &str, f: &Field<f64>| CellArray::Scalar(name.into(), f.interior());
    let vel = s
        .v
        .interior()
        .iter()
        .map(|v| {
            let mut x = [0.0; 3];
            x[..v.dim()].copy_from_slice(v.components());
            x
        })
        .collect();
    let e = s.e.interior();
    vec![
        scalar("theta", &s.theta),
        scalar("chi", &s.chi),
        scalar("alpha", &s.alpha),
        scalar("enthalpy", &s.w),
        CellArray::Scalar("dev_strain_norm".into(), e.iter().map(|t| t.dev().norm()).collect()),
        CellArray::Scalar("sph_strain_norm".into(), e.iter().map(|t| t.sph().norm()).collect()),
        CellArray::Vector("velocity".into(), vel),
        CellArray::Tensor("strain".into(), e.iter().map(tensor3).collect()),
        CellArray::Tensor("creep_rate".into(), s.pi.interior().iter().map(|p| tensor3(p.as_sym())).collect()),
    ]
}

/// Position of the first downward crossing of `χ = 1/2` along the first axis.
pub fn front_position(grid: &Grid, chi: &Field<f64>) -> Option<f64> {
    let n = grid.n(0);
    (0..n - 1).find_map(|i| {
        let (a, b) = (chi.get(i, 0), chi.get(i + 1, 0));
        (a >= 0.5 && b < 0.5).then(|| grid.center(0, i as isize) + grid.h(0) * (a - 0.5) / (a - b))
    })
}

fn stefan_oracle(cfg: &RunConfig, problem: &Problem) -> Result<StefanOracle, RunError> {
    let (position, low, high) = match cfg.initial.theta {
        ScalarInit::Step { axis: 0, position, low, high } => (position, low, high),
        _ => return Err(ConfigError::Invalid("the Stefan comparison needs a step temperature along x".into()).into()),
    };
    let p = &problem.params;
    let th = &problem.thermal;
    let w_l = th.enthalpy_of(low, 1.0).map_err(StepError::from)?;
    let w_s = th.enthalpy_of(high, 0.0).map_err(StepError::from)?;
    StefanOracle::new(
        p.conductivity_at(1.0, w_l),
        p.conductivity_at(1.0, w_s),
        th.capacity(low),
        th.capacity(high),
        p.latent_l,
        low,
        high,
        p.theta_pt,
        position,
    )
    .map_err(|e| ConfigError::Invalid(e.to_string()).into())
}

struct Probes {
    cells: [usize; 2],
    separation: f64,
    lambda: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Step-by-step analysis state.
enum Tracker {
    None,
    Stefan { oracle: StefanOracle, fronts: Vec<FrontSample> },
    Dispersion(Probes),
    Rotation { cell: (usize, usize), sph0: f64, dev0: f64, drift_sph: f64, drift_dev: f64, p: Field<DevTensor2>, max_trace_p: f64, max_skew: f64, max_trace_pi: f64 },
}

impl Tracker {
    fn new(cfg: &RunConfig, problem: &Problem, state: &State) -> Result<Self, RunError> {
        let g = &problem.grid;
        Ok(match cfg.analysis {
            Analysis::None => Tracker::None,
            Analysis::Stefan => Tracker::Stefan { oracle: stefan_oracle(cfg, problem)?, fronts: Vec::new() },
            Analysis::Dispersion => {
                let mode = match cfg.initial.velocity {
                    VelocityInit::Wave { mode, .. } => mode,
                    _ => return Err(ConfigError::Invalid("dispersion analysis needs wave initial data".into()).into()),
                };
                let n = g.n(0);
                let quarter = ((n as f64) / (4.0 * mode as f64)).round() as usize;
                let p0 = n / 8;
                let cells = [p0, p0 + quarter];
                let lambda = g.extent(0) / (2.0 * std::f64::consts::PI * mode as f64);
                let mut probes = Probes { cells, separation: quarter as f64 * g.h(0), lambda, a: Vec::new(), b: Vec::new() };
                probes.a.push(state.v.get(cells[0], 0).get(0));
                probes.b.push(state.v.get(cells[1], 0).get(0));
                Tracker::Dispersion(probes)
            }
            Analysis::Rotation => {
                if g.dim() != 2 {
                    return Err(ConfigError::Invalid("rotation analysis needs two dimensions".into()).into());
                }
                let cell = (g.n(0) / 2, g.n(1) / 2);
                let e = state.e.get(cell.0, cell.1);
                Tracker::Rotation {
                    cell,
                    sph0: e.sph().norm(),
                    dev0: e.dev().norm(),
                    drift_sph: 0.0,
                    drift_dev: 0.0,
                    p: Field::filled(g, DevTensor2::zeros(2)),
                    max_trace_p: 0.0,
                    max_skew: 0.0,
                    max_trace_pi: 0.0,
                }
            }
        })
    }

    fn observe(&mut self, problem: &Problem, state: &State, report: &StepReport) {
        let g = &problem.grid;
        match self {
            Tracker::None => {}
            Tracker::Stefan { oracle, fronts } => {
                if let Some(x) = front_position(g, &state.chi) {
                    fronts.push(FrontSample { time: state.time, numeric: x, oracle: oracle.front(state.time) });
                }
            }
            Tracker::Dispersion(p) => {
                p.a.push(state.v.get(p.cells[0], 0).get(0));
                p.b.push(state.v.get(p.cells[1], 0).get(0));
            }
            Tracker::Rotation { cell, sph0, dev0, drift_sph, drift_dev, p, max_trace_p, max_skew, max_trace_pi } => {
                let e = state.e.get(cell.0, cell.1);
                *drift_sph = drift_sph.max((e.sph().norm() - *sph0).abs() / sph0.max(f64::MIN_POSITIVE));
                *drift_dev = drift_dev.max((e.dev().norm() - *dev0).abs() / dev0.max(f64::MIN_POSITIVE));
                let (next, tr, _) = reconstruct_p(g, &state.v, p, &state.pi, report.tau, 1e-14);
                *p = next;
                *max_trace_p = max_trace_p.max(tr);
                *max_skew = max_skew.max(report.max_skew_e);
                *max_trace_pi = max_trace_pi.max(report.max_trace_pi);
            }
        }
    }

    fn finish(self, seg: &mut SegmentReport, problem: &Problem) {
        let tau = seg.tau;
        match self {
            Tracker::None => {}
            Tracker::Stefan { oracle, fronts } => {
                let rel = |f: &FrontSample| {
                    let disp = (f.oracle - oracle.x0).abs();
                    if disp > 0.0 {
                        (f.numeric - f.oracle).abs() / disp
                    } else {
                        f64::INFINITY
                    }
                };
                let late: Vec<f64> = fronts.iter().filter(|f| f.time > 10.0 * tau * (1.0 + 1e-12)).map(rel).collect();
                seg.stefan = Some(StefanReport {
                    omega: problem.params.omega,
                    mu: oracle.mu,
                    x0: oracle.x0,
                    max_relative_error: if late.is_empty() { f64::INFINITY } else { late.iter().cloned().fold(0.0, f64::max) },
                    final_relative_error: late.last().copied().unwrap_or(f64::INFINITY),
                    fronts,
                });
            }
            Tracker::Dispersion(p) => {
                let speed = (problem.params.k_e / problem.params.rho).sqrt();
                let predicted = problem.params.dispersion_velocity(p.lambda);
                let measured = measure_phase_velocity(&p.a, &p.b, p.separation, tau, speed);
                let relative_error = match (predicted, measured) {
                    (Some(a), Some(b)) => Some((b - a).abs() / a),
                    _ => None,
                };
                seg.dispersion = Some(DispersionReport {
                    lambda: p.lambda,
                    lambda_cells: p.lambda / problem.grid.h(0),
                    probe_separation: p.separation,
                    predicted,
                    measured,
                    relative_error,
                });
            }
            Tracker::Rotation { drift_sph, drift_dev, max_trace_p, max_skew, max_trace_pi, .. } => {
                seg.rotation = Some(RotationReport {
                    tau,
                    steps: seg.steps_completed,
                    drift_sph,
                    drift_dev,
                    max_skew_e: max_skew,
                    max_trace_pi,
                    max_trace_p,
                });
            }
        }
    }
}

fn run_segment(index: usize, cfg: &RunConfig, out: &mut Option<Outputs>) -> Result<SegmentReport, RunError> {
    let problem = build_problem(cfg)?;
    let mut state = initial_state(cfg, &problem)?;
    let tol = AuditTolerances { slack_factor: cfg.audit.slack_factor, conserve: cfg.audit.conserve, ..Default::default() };
    let mut tracker = Tracker::new(cfg, &problem, &state)?;
    let mut energies = EnergySnapshot::of(&problem, &state)?;
    let title = format!("{} segment {index}", cfg.name);
    if let Some(o) = out.as_mut() {
        o.row(&EnergyRow::initial(index, &energies, &state.bounds()))?;
        o.snapshot(&problem.grid, &state, &title)?;
    }
    let mut seg = SegmentReport {
        index,
        tau: cfg.time.tau,
        steps_requested: cfg.time.steps,
        steps_completed: 0,
        substeps: 0,
        final_time: 0.0,
        error: None,
        final_residuals: Residuals::default(),
        final_bounds: state.bounds(),
        audit: AuditSummary::default(),
        stefan: None,
        dispersion: None,
        rotation: None,
    };
    for n in 1..=cfg.time.steps {
        let steps = match advance(&problem, &state, cfg.time.tau) {
            Ok(s) => s,
            Err(e) => {
                seg.error = Some(format!("step {n}: {e}"));
                break;
            }
        };
        for (next, report) in steps {
            let audit = audit_step(&problem, &energies, &next, &report, &tol)?;
            seg.audit.record(&audit);
            if let Some(o) = out.as_mut() {
                o.row(&EnergyRow::of_step(index, n, &next, &report, &audit))?;
            }
            seg.substeps += 1;
            seg.final_residuals = report.residuals;
            tracker.observe(&problem, &next, &report);
            energies = audit.energies;
            state = next;
        }
        seg.steps_completed = n;
        let every = cfg.time.output_every;
        let snap = n == cfg.time.steps || (every > 0 && n % every == 0);
        if let Some(o) = out.as_mut().filter(|_| snap) {
            o.snapshot(&problem.grid, &state, &title)?;
        }
    }
    seg.final_time = state.time;
    seg.final_bounds = state.bounds();
    seg.audit.finish(seg.error.is_none());
    tracker.finish(&mut seg, &problem);
    Ok(seg)
}

fn plan_analysis(segments: &[SegmentReport]) -> PlanAnalysis {
    let mut a = PlanAnalysis::default();
    let stefan: Vec<_> = segments.iter().filter_map(|s| s.stefan.as_ref()).collect();
    if stefan.len() > 1 {
        let mut by_omega = stefan.clone();
        by_omega.sort_by(|x, y| y.omega.total_cmp(&x.omega));
        a.stefan_error_decreasing =
            Some(by_omega.windows(2).all(|w| w[1].omega < w[0].omega && w[1].max_relative_error < w[0].max_relative_error));
    }
    let disp: Vec<_> = segments.iter().filter_map(|s| s.dispersion.as_ref()).collect();
    if disp.len() > 1 {
        let mut by_lambda = disp.clone();
        by_lambda.sort_by(|x, y| x.lambda.total_cmp(&y.lambda));
        a.dispersion_increasing = Some(by_lambda.windows(2).all(|w| match (w[0].measured, w[1].measured) {
            (Some(x), Some(y)) => y > x,
            _ => false,
        }));
    }
    let rot: Vec<_> = segments.iter().filter_map(|s| s.rotation.as_ref()).collect();
    if rot.len() > 1 {
        let mut by_tau = rot.clone();
        by_tau.sort_by(|x, y| y.tau.total_cmp(&x.tau));
        let orders = |f: fn(&RotationReport) -> f64| -> Vec<f64> {
            by_tau.windows(2).map(|w| (f(w[0]) / f(w[1])).ln() / (w[0].tau / w[1].tau).ln()).collect()
        };
        a.rotation_orders_dev = Some(orders(|r| r.drift_dev));
        a.rotation_orders_sph = Some(orders(|r| r.drift_sph));
    }
    a
}

/// Runs every segment of a plan in order.
pub fn run_plan(plan: &RunPlan, opts: &RunOptions) -> Result<RunReport, RunError> {
    let mut out = opts.out_dir.as_deref().map(Outputs::open).transpose()?;
    let mut segments = Vec::with_capacity(plan.segments.len());
    for (k, cfg) in plan.segments.iter().enumerate() {
        segments.push(run_segment(k, cfg, &mut out)?);
    }
    let analysis = plan_analysis(&segments);
    let completed = segments.iter().all(|s| s.error.is_none());
    let audit_passed = segments.iter().all(|s| s.audit.passed);
    let report = RunReport { scenario: plan.name.clone(), segments, analysis, audit_passed, completed };
    if let Some(mut o) = out {
        o.csv.flush().map_err(io_err(&o.dir.join("energy.csv")))?;
        let path = o.dir.join("report.json");
        let text = serde_json::to_string_pretty(&report)?;
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(report)
}
