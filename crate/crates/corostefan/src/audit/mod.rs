//! Energy bookkeeping per step, the discrete energy inequalities as runtime
//! checks, and analytic reference solutions.

pub mod constitutive;
mod oracles;

pub use oracles::{cross_correlation_lag, measure_phase_velocity, StefanOracle, OracleError};

use serde::{Deserialize, Serialize};

use crate::grid::ops::face_energy_density;
use crate::materials::stored_energy_reg;
use crate::stepper::{Problem, State, StepError, StepReport};

/// Box integrals of the energy stores at one time level (J).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySnapshot {
    pub kinetic: f64,
    /// Integral of the regularized stored energy.
    pub stored: f64,
    /// `κ/2 ∫ |∇α|²`.
    pub gradient: f64,
    pub enthalpy: f64,
}

impl EnergySnapshot {
    pub fn of(problem: &Problem, state: &State) -> Result<Self, StepError> {
        let g = &problem.grid;
        let p = &problem.params;
        let vol = g.cell_volume();
        let mut kinetic = 0.0;
        let mut stored = 0.0;
        for (i, j) in g.cells() {
            kinetic += 0.5 * p.rho * state.v.get(i, j).norm_sq();
            stored += stored_energy_reg(&state.e.get(i, j), state.alpha.get(i, j), p.eps_reg, p)?.value;
        }
        let gradient = 0.5 * p.kappa * face_energy_density(g, &state.alpha).integral(g);
        Ok(Self { kinetic: kinetic * vol, stored: stored * vol, gradient, enthalpy: state.w.integral(g) })
    }

    pub fn mechanical(&self) -> f64 {
        self.kinetic + self.stored + self.gradient
    }

    pub fn total(&self) -> f64 {
        self.mechanical() + self.enthalpy
    }
}

/// Terms of the discrete mechanical energy inequality `LHS ≤ RHS`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `RHS − LHS`.
    pub slack: f64,
    /// Largest magnitude among the terms; tolerances scale with it.
    pub scale: f64,
}

/// Mechanical energy inequality over one step.
///
/// The left side holds the new mechanical energy plus τ times every
/// dissipation channel; the right side the old energy plus τ times the
/// mechanical power input and the allowance of the convexifying damage term.
pub fn mech_energy_check(problem: &Problem, prev: &EnergySnapshot, next: &EnergySnapshot, report: &StepReport) -> MechCheck {
    let c = &report.channels;
    let tau = report.tau;
    let dissipation = c.maxwell + c.stokes + c.hyper + c.damage + c.creep_gradient;
    let allowance = 0.5 * problem.params.damage_convexify * tau.powf(1.5) * c.damage_rate_sq;
    let lhs = next.mechanical() + tau * dissipation;
    let input = c.work_body + c.work_drive - c.adiabatic;
    let rhs = prev.mechanical() + tau * input + allowance;
    let terms = [
        next.kinetic,
        next.stored,
        next.gradient,
        prev.kinetic,
        prev.stored,
        prev.gradient,
        tau * c.maxwell,
        tau * c.stokes,
        tau * c.hyper,
        tau * c.damage,
        tau * c.creep_gradient,
        tau * c.work_body,
        tau * c.work_drive,
        tau * c.adiabatic,
        allowance,
    ];
    let scale = terms.iter().fold(lhs.abs().max(rhs.abs()), |m, t| m.max(t.abs()));
    MechCheck { lhs, rhs, slack: rhs - lhs, scale }
}

/// Total energy balance over one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalCheck {
    /// Change of total energy minus τ times the external inputs (J).
    pub drift: f64,
    /// Drift relative to the new total energy.
    pub relative: f64,
}

pub fn total_energy_check(prev: &EnergySnapshot, next: &EnergySnapshot, report: &StepReport) -> TotalCheck {
    let c = &report.channels;
    let input = report.tau * (c.work_body + c.work_drive + c.heat_boundary);
    let drift = next.total() - prev.total() - input;
    let size = next.total().abs().max(prev.total().abs());
    let relative = if drift == 0.0 { 0.0 } else { drift / size.max(f64::MIN_POSITIVE) };
    TotalCheck { drift, relative }
}

/// Thresholds of the audit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTolerances {
    /// Multiplier of `outer tol × energy scale` for the mechanical slack.
    pub slack_factor: f64,
    /// Relative total-energy drift allowed per step on closed runs.
    pub conserve: f64,
    /// Relative floor for dissipation channels and entropy production.
    pub sign: f64,
}

impl Default for AuditTolerances {
    fn default() -> Self {
        Self { slack_factor: 10.0, conserve: 1e-8, sign: 1e-12 }
    }
}

/// Everything the audit records for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub energies: EnergySnapshot,
    pub mech: MechCheck,
    pub total: TotalCheck,
    /// Whether the run is closed (insulated, no body force, no drive), so that drift must vanish.
    pub closed: bool,
    pub mech_ok: bool,
    pub conserve_ok: bool,
    pub bounds_ok: bool,
    pub signs_ok: bool,
    pub structure_ok: bool,
}

impl StepAudit {
    pub fn passed(&self) -> bool {
        self.mech_ok && self.conserve_ok && self.bounds_ok && self.signs_ok && self.structure_ok
    }
}

/// Audits one converged step from `prev` to `next`.
pub fn audit_step(
    problem: &Problem,
    prev: &EnergySnapshot,
    next_state: &State,
    report: &StepReport,
    tol: &AuditTolerances,
) -> Result<StepAudit, StepError> {
    let next = EnergySnapshot::of(problem, next_state)?;
    let mech = mech_energy_check(problem, prev, &next, report);
    let total = total_energy_check(prev, &next, report);
    let closed = problem.is_insulated() && !problem.has_body_force() && problem.kinematics.is_none();
    let mech_ok = mech.slack >= -tol.slack_factor * problem.solver.outer_tol * mech.scale;
    let conserve_ok = !closed || total.relative.abs() <= tol.conserve;
    let bounds_ok = next_state.bounds().hold();
    let c = &report.channels;
    let floor = -tol.sign * mech.scale.max(f64::MIN_POSITIVE) / report.tau;
    let channels = [c.maxwell, c.stokes, c.hyper, c.damage, c.creep_gradient];
    let entropy_floor = -tol.sign * channels.iter().map(|x| x.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let signs_ok = channels.iter().all(|x| *x >= floor) && report.entropy_production.map_or(true, |s| s >= entropy_floor);
    let structure_ok = report.max_skew_e <= 1e-12 && report.max_trace_pi <= 1e-12;
    Ok(StepAudit { energies: next, mech, total, closed, mech_ok, conserve_ok, bounds_ok, signs_ok, structure_ok })
}
