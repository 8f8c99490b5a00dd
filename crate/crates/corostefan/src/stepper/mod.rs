//! One fully implicit regularized time step of the coupled system.
//!
//! The discrete system is solved by a block Gauss–Seidel sweep
//! (momentum, strain, creep, damage, then phase fraction and heat together)
//! repeated until every block residual is below the outer tolerance.
//! The spatial discretization is chosen so that the discrete energy
//! identities hold exactly at the converged solution; the audit checks them.

mod blocks;
mod heat;
mod transport;

pub use blocks::{
    constitutive, creep_residual, creep_solve, creep_stress, damage_solve, momentum_forces, momentum_residual,
    strain_residual, stress_bundle, Constitutive, CreepResult, DamageResult, MomentumForces, StressBundle,
};
pub use heat::{diffusion, face_conductivities, heat_residual, heat_solve, FaceConductivity, HeatResult, HeatSetup, PhaseCell};
pub use transport::{reconstruct_p, transport_step, TransportResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ops::grad_vector;
use crate::grid::{BoundarySpec, Field, Grid, GridError, Reflection};
use crate::materials::{semi_convexity_constant, MaterialError, MaterialParams, ThermalModel};
use crate::tensors::{DevTensor2, SymTensor2, Vector};

#[derive(Debug, Error)]
pub enum StepError {
    #[error("time step {tau} exceeds the admissible bound {tau_max}")]
    TauTooLarge { tau: f64, tau_max: f64 },
    #[error("outer iteration did not converge in {iterations} sweeps (residuals {residuals:?})")]
    NonConvergence { iterations: usize, residuals: Residuals },
    #[error("time step rejected {0} times without reaching an admissible size")]
    TooManyHalvings(usize),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid setup: {0}")]
    Setup(String),
}

/// Tolerances and iteration limits of the nested solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Joint relative residual at which the outer sweep stops.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub linear_tol: f64,
    pub max_linear: usize,
    pub max_damage_sweeps: usize,
    pub max_newton: usize,
    /// Temperatures below this skip the entropy-production evaluation.
    pub theta_floor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            outer_tol: 1e-9,
            max_outer: 200,
            linear_tol: 1e-13,
            max_linear: 5000,
            max_damage_sweeps: 20000,
            max_newton: 60,
            theta_floor: 1e-6,
        }
    }
}

/// Everything a step needs besides the state: geometry, material,
/// boundary data, loads and solver settings.
#[derive(Clone, Debug)]
pub struct Problem {
    pub grid: Grid,
    pub params: MaterialParams,
    pub thermal: ThermalModel,
    pub boundary: BoundarySpec,
    /// Bulk force density f (N/m³), constant in time.
    pub force: Field<Vector>,
    /// Prescribed velocity. When set the momentum equation is replaced by
    /// this constraint and the power needed to enforce it is booked as driving work.
    pub kinematics: Option<Field<Vector>>,
    pub solver: SolverSettings,
}

impl Problem {
    pub fn new(grid: Grid, params: MaterialParams, boundary: BoundarySpec, solver: SolverSettings) -> Result<Self, StepError> {
        let d = grid.dim();
        params.validate(d)?;
        let kinds = boundary.validate()?;
        if kinds.len() != d || (0..d).any(|a| kinds[a] != grid.kind(a)) {
            return Err(StepError::Setup("boundary faces do not match the grid".into()));
        }
        if !(solver.outer_tol > 0.0 && solver.linear_tol > 0.0) {
            return Err(StepError::Setup("solver tolerances must be positive".into()));
        }
        let thermal = params.thermal_model()?;
        let force = Field::filled(&grid, Vector::zeros(d));
        Ok(Self { grid, params, thermal, boundary, force, kinematics: None, solver })
    }

    /// Sets the bulk force density from a function of the cell center.
    pub fn with_force(mut self, f: impl Fn([f64; 2]) -> Vector) -> Self {
        let g = &self.grid;
        self.force = Field::from_fn(g, |i, j| f(g.cell_center(i, j))).synced(g, Reflection::Mirror);
        self
    }

    /// Prescribes the velocity field for all time.
    pub fn with_kinematics(mut self, f: impl Fn([f64; 2]) -> Vector) -> Self {
        let g = &self.grid;
        self.kinematics = Some(Field::from_fn(g, |i, j| f(g.cell_center(i, j))).synced(g, Reflection::Mirror));
        self
    }

    pub fn has_body_force(&self) -> bool {
        self.force.max_of(|f| f.norm()) > 0.0
    }

    pub fn is_insulated(&self) -> bool {
        self.boundary.faces.iter().flatten().all(|f| f.heat_flux.value == 0.0)
    }
}

/// All fields at one time level. Ghosts are kept synced.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub time: f64,
    pub v: Field<Vector>,
    pub e: Field<SymTensor2>,
    pub pi: Field<DevTensor2>,
    pub alpha: Field<f64>,
    pub theta: Field<f64>,
    pub chi: Field<f64>,
    pub w: Field<f64>,
}

/// Extremes of the bounded fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub chi_min: f64,
    pub chi_max: f64,
    pub theta_min: f64,
}

impl Bounds {
    /// True when `0 ≤ α, χ ≤ 1` and `θ ≥ 0`.
    pub fn hold(&self) -> bool {
        self.alpha_min >= 0.0 && self.alpha_max <= 1.0 && self.chi_min >= 0.0 && self.chi_max <= 1.0 && self.theta_min >= 0.0
    }
}

impl State {
    /// Builds a state from initial data; the enthalpy and the creep rate
    /// are derived so that the state is consistent.
    pub fn new(
        problem: &Problem,
        v: Field<Vector>,
        e: Field<SymTensor2>,
        alpha: Field<f64>,
        theta: Field<f64>,
        chi: Field<f64>,
    ) -> Result<Self, StepError> {
        let g = &problem.grid;
        let bad = |name: &str| StepError::Setup(format!("initial {name} outside its admissible range"));
        if alpha.min() < 0.0 || alpha.max() > 1.0 {
            return Err(bad("damage"));
        }
        if chi.min() < 0.0 || chi.max() > 1.0 {
            return Err(bad("phase fraction"));
        }
        if !(theta.min() >= 0.0) {
            return Err(bad("temperature"));
        }
        let v = match &problem.kinematics {
            Some(k) => k.clone(),
            None => v.synced(g, Reflection::Mirror),
        };
        let e = e.synced(g, Reflection::Mirror);
        let alpha = alpha.synced(g, Reflection::Even);
        let theta = theta.synced(g, Reflection::Even);
        let chi = chi.synced(g, Reflection::Even);
        let mut w = Field::filled(g, 0.0);
        for (i, j) in g.cells() {
            w.set(i, j, problem.thermal.enthalpy_of(theta.get(i, j), chi.get(i, j))?);
        }
        w.sync(g, Reflection::Even);
        let cons = constitutive(problem, &e, &alpha)?;
        let pi0 = Field::filled(g, DevTensor2::zeros(g.dim()));
        let creep = creep_solve(problem, &cons.s, &w, &pi0);
        Ok(Self { time: 0.0, v, e, pi: creep.pi, alpha, theta, chi, w })
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            alpha_min: self.alpha.min(),
            alpha_max: self.alpha.max(),
            chi_min: self.chi.min(),
            chi_max: self.chi.max(),
            theta_min: self.theta.min(),
        }
    }
}

/// Relative residuals of the block equations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub momentum: f64,
    pub strain: f64,
    pub creep: f64,
    pub damage: f64,
    pub heat: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        [self.momentum, self.strain, self.creep, self.damage, self.heat].into_iter().fold(0.0, f64::max)
    }
}

/// Box-integrated rates (W) of every energy channel over one step,
/// evaluated at the converged new state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepChannels {
    /// Creep dissipation `G_m |Π|²` (or the nonlinear creep power).
    pub maxwell: f64,
    pub stokes: f64,
    pub hyper: f64,
    /// Damage dissipation ξ.
    pub damage: f64,
    pub creep_gradient: f64,
    pub work_body: f64,
    /// Power spent enforcing a prescribed velocity.
    pub work_drive: f64,
    /// Adiabatic exchange `φ(θ) div v`.
    pub adiabatic: f64,
    pub heat_boundary: f64,
    /// `∫ |α̇|²` with the convective damage rate.
    pub damage_rate_sq: f64,
}

/// Diagnostics of one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub tau: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
    pub channels: StepChannels,
    /// Entropy production rate (W/K); absent when the temperature is too low.
    pub entropy_production: Option<f64>,
    pub clamped_alpha: usize,
    pub enthalpy_underflow: usize,
    pub linear_failures: usize,
    pub max_trace_pi: f64,
    /// Largest skew part of the strain. Structurally zero with packed storage.
    pub max_skew_e: f64,
}

/// Admissible step size: the convexifying damage term must dominate the
/// semi-convexity defect, and the transport must stay contractive.
pub fn tau_max(problem: &Problem, state: &State) -> f64 {
    let p = &problem.params;
    let k = semi_convexity_constant(p.g_e0, p.eps_reg);
    let tau_conv = if k.is_finite() && k > 0.0 { (p.damage_convexify / k).powi(2) } else { f64::INFINITY };
    let g = &problem.grid;
    let gv = grad_vector(g, &state.v).max_of(|t| t.max_abs());
    let tau_v = if gv > 0.0 { 0.5 / gv } else { f64::INFINITY };
    tau_conv.min(tau_v)
}

/// Advances by `tau`, splitting into halved substeps while `tau` exceeds
/// the admissible bound. Returns every substep taken.
pub fn advance(problem: &Problem, prev: &State, tau: f64) -> Result<Vec<(State, StepReport)>, StepError> {
    let mut halvings = 0;
    let mut sub = tau;
    while sub > tau_max(problem, prev) {
        sub *= 0.5;
        halvings += 1;
        if halvings > 30 {
            return Err(StepError::TooManyHalvings(halvings));
        }
    }
    let n = 1usize << halvings;
    let mut out: Vec<(State, StepReport)> = Vec::with_capacity(n);
    for k in 0..n {
        let cur = out.last().map(|(s, _)| s).unwrap_or(prev);
        let (next, rep) = step(problem, cur, sub)?;
        out.push((next, rep));
        if k + 1 < n {
            let last = &out.last().expect("pushed").0;
            if sub > tau_max(problem, last) {
                let rest = tau - sub * (k + 1) as f64;
                let more = advance(problem, last, rest)?;
                out.extend(more);
                break;
            }
        }
    }
    Ok(out)
}

/// One implicit step of size `tau` from `prev`.
pub fn step(problem: &Problem, prev: &State, tau: f64) -> Result<(State, StepReport), StepError> {
    if !(tau > 0.0) {
        return Err(StepError::Setup("time step must be positive".into()));
    }
    let tm = tau_max(problem, prev);
    if tau > tm {
        return Err(StepError::TauTooLarge { tau, tau_max: tm });
    }
    let s = &problem.solver;
    let lag = blocks::Lagged::new(problem, prev, tau);
    let mut it = prev.clone();
    it.time = prev.time + tau;
    if let Some(k) = &problem.kinematics {
        it.v = k.clone();
    }
    let mut residuals = Residuals::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut linear_failures = 0;
    let mut damage = None;
    let mut heat_out = None;
    let mut max_trace_pi = 0.0;
    let mut lin_tol = 1e-3_f64.max(s.linear_tol);
    for outer in 1..=s.max_outer {
        iterations = outer;
        if problem.kinematics.is_none() {
            let ok = blocks::momentum_update(problem, &mut it, prev, &lag, tau, lin_tol)?;
            if !ok {
                linear_failures += 1;
            }
        }
        let (e, st) = blocks::strain_solve(problem, &it, prev, &lag, tau, lin_tol)?;
        if !st.converged {
            linear_failures += 1;
        }
        it.e = e;
        let cons = constitutive(problem, &it.e, &it.alpha)?;
        let creep = creep_solve(problem, &cons.s, &prev.w, &it.pi);
        if !creep.converged {
            linear_failures += 1;
        }
        max_trace_pi = creep.max_trace;
        it.pi = creep.pi;
        let dmg = damage_solve(problem, &it.e, &it.alpha, &prev.alpha, &it.v, &prev.w, tau)?;
        it.alpha = dmg.alpha.clone();
        let setup = blocks::heat_setup(problem, &it, prev, &lag, tau)?;
        let hr = heat_solve(problem, &it.v, &prev.w, &it.w, &setup, tau);
        if !hr.converged {
            linear_failures += 1;
        }
        it.w = hr.w.clone();
        it.theta = hr.theta.clone();
        it.chi = hr.chi.clone();
        damage = Some(dmg);
        heat_out = Some(hr);

        residuals = blocks::all_residuals(problem, &it, prev, &lag, tau)?;
        lin_tol = (1e-2 * residuals.max()).clamp(s.linear_tol, 1e-3);
        if residuals.max() <= s.outer_tol {
            converged = true;
            break;
        }
        if !residuals.max().is_finite() {
            break;
        }
    }
    if !converged {
        return Err(StepError::NonConvergence { iterations, residuals });
    }
    let dmg = damage.expect("at least one sweep");
    let hr = heat_out.expect("at least one sweep");
    let channels = blocks::channels(problem, &it, prev, &lag, tau)?;
    let entropy = blocks::entropy_production(problem, &it, prev, &lag, tau)?;
    let report = StepReport {
        tau,
        outer_iterations: iterations,
        converged,
        residuals,
        channels,
        entropy_production: entropy,
        clamped_alpha: dmg.clamped,
        enthalpy_underflow: hr.underflow,
        linear_failures,
        max_trace_pi,
        max_skew_e: blocks::max_skew(&it.e),
    };
    Ok((it, report))
}
