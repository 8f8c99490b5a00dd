//! Block equations of the outer sweep: constitutive evaluation, momentum,
//! strain transport, creep and damage, their residuals, and the energy
//! channels booked per step.

use super::heat::{self, face_conductivities, FaceConductivity, HeatSetup};
use super::transport::transport_step;
use super::{Problem, Residuals, State, StepChannels, StepError};
use crate::grid::ops::{
    div_sym, div_symgrad, divergence, face_energy_density, grad_sym, gradient, laplacian, strain_rate,
    upwind_convective,
};
use crate::grid::{Field, Grid, Reflection};
use crate::linsolve::{bicgstab, cg, SolveStats};
use crate::materials::{dev_profile, isotropic_c_apply, isotropic_d_apply, stored_energy_reg, CreepLaw};
use crate::tensors::{DevTensor2, SymTensor2, Vector};

/// Quantities frozen at the previous time level for the whole step.
pub(super) struct Lagged {
    /// `G_m(w⁻)`, synced.
    pub gm: Field<f64>,
    pub kf: FaceConductivity,
    /// Phase fraction advected by one explicit upwind step.
    pub chi_adv: Field<f64>,
    /// Mean boundary inflow over the step, `[axis][side]`.
    pub fluxes: Vec<[f64; 2]>,
}

impl Lagged {
    pub fn new(problem: &Problem, prev: &State, tau: f64) -> Self {
        let g = &problem.grid;
        let p = &problem.params;
        let gm = prev.w.map_all(|w| p.g_m(w));
        let kf = face_conductivities(problem, &prev.alpha, &prev.w);
        let adv = upwind_convective(g, &prev.v, &prev.chi);
        let chi_adv = prev.chi.zip(g, &adv, |c, a| c - tau * a);
        let fluxes = problem.boundary.step_fluxes(prev.time, tau);
        Self { gm, kf, chi_adv, fluxes }
    }
}

/// Pointwise constitutive response at the current strain and damage.
#[derive(Clone, Debug)]
pub struct Constitutive {
    /// Stress `S = ∂φ/∂E`, synced.
    pub s: Field<SymTensor2>,
    /// Stored energy density.
    pub phi: Field<f64>,
    pub dphi_alpha: Field<f64>,
    /// Slope of `∂φ/∂α` in α, which is constant in α for the shipped law.
    pub alpha_slope: Field<f64>,
    /// Derivative of the deviatoric profile.
    pub gprime: Field<f64>,
}

pub fn constitutive(problem: &Problem, e: &Field<SymTensor2>, alpha: &Field<f64>) -> Result<Constitutive, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let d = g.dim();
    let mut s = Field::filled(g, SymTensor2::zeros(d));
    let mut phi = Field::filled(g, 0.0);
    let mut dphi_alpha = Field::filled(g, 0.0);
    let mut alpha_slope = Field::filled(g, 0.0);
    let mut gprime = Field::filled(g, 0.0);
    for (i, j) in g.cells() {
        let ec = e.get(i, j);
        let en = stored_energy_reg(&ec, alpha.get(i, j), p.eps_reg, p)?;
        let (gv, gp) = dev_profile(ec.dev().norm_sq(), p.eps_reg);
        s.set(i, j, en.de);
        phi.set(i, j, en.value);
        dphi_alpha.set(i, j, en.dalpha);
        alpha_slope.set(i, j, 2.0 * p.g_e0 * gv + p.g_d / p.kappa);
        gprime.set(i, j, gp);
    }
    s.sync(g, Reflection::Mirror);
    Ok(Constitutive { s, phi, dphi_alpha, alpha_slope, gprime })
}

/// Stress decomposition for output.
#[derive(Clone, Debug)]
pub struct StressBundle {
    /// Elastic stress `S`.
    pub s: Field<SymTensor2>,
    /// Conservative part `S + (φ + φ(θ)) I`.
    pub sigma: Field<SymTensor2>,
    /// Korteweg-like part `κ/2 |∇α|² I − κ ∇α ⊗ ∇α`.
    pub k: Field<SymTensor2>,
    /// Dissipative part `𝔻E(v) − div(ν|∇E(v)|^{p−2}∇E(v))`.
    pub dstress: Field<SymTensor2>,
    pub t: Field<SymTensor2>,
}

pub fn stress_bundle(problem: &Problem, state: &State) -> Result<StressBundle, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let d = g.dim();
    let cons = constitutive(problem, &state.e, &state.alpha)?;
    let hyper = hyper_stress(problem, &state.v);
    let ev = strain_rate(g, &state.v);
    let ga = gradient(g, &state.alpha);
    let id = SymTensor2::identity(d);
    let mut sigma = Field::filled(g, SymTensor2::zeros(d));
    let mut k = sigma.clone();
    let mut dstress = sigma.clone();
    let mut t = sigma.clone();
    for (i, j) in g.cells() {
        let th = problem.thermal.phi_thermal(state.theta.get(i, j))?;
        let sg = cons.s.get(i, j) + id * (cons.phi.get(i, j) + th);
        let a = ga.get(i, j);
        let kk = id * (0.5 * p.kappa * a.norm_sq()) - a.outer(&a).sym() * p.kappa;
        let ds = isotropic_d_apply(&ev.get(i, j), p.k_v, p.g_v) - hyper.div.get(i, j);
        sigma.set(i, j, sg);
        k.set(i, j, kk);
        dstress.set(i, j, ds);
        t.set(i, j, sg + kk + ds);
    }
    Ok(StressBundle { s: cons.s, sigma, k, dstress, t })
}

/// Hyper-stress `H = ν|G|^{p−2}G` with `G = ∇E(v)`, its divergence, and the power density.
pub(super) struct HyperStress {
    /// `div H`, synced.
    pub div: Field<SymTensor2>,
    /// `ν|G|^{p−2}`.
    pub mu: Field<f64>,
    /// `ν|G|^p`.
    pub power: Field<f64>,
}

pub(super) fn hyper_stress(problem: &Problem, v: &Field<Vector>) -> HyperStress {
    let g = &problem.grid;
    let p = &problem.params;
    let ev = strain_rate(g, v).synced(g, Reflection::Mirror);
    let gg = grad_sym(g, &ev);
    let mu = gg.map(g, |x| p.nu * x.norm_sq().powf(0.5 * (p.p_exp - 2.0)));
    let power = gg.zip(g, &mu, |x, m| m * x.norm_sq());
    let h = gg.zip(g, &mu, |x, m| x * m).synced(g, Reflection::Mirror);
    let div = div_symgrad(g, &h).synced(g, Reflection::Mirror);
    HyperStress { div, mu, power }
}

/// Every force density of the momentum balance, kept apart for bookkeeping.
#[derive(Clone, Debug)]
pub struct MomentumForces {
    /// `div(S + 𝔻E(v))`.
    pub stress: Field<Vector>,
    /// Chain-rule pressure `S:∇E + φ′_α ∇α`.
    pub pressure: Field<Vector>,
    /// `−κ Δα ∇α`.
    pub korteweg: Field<Vector>,
    /// Gradient of the thermal free energy.
    pub thermal: Field<Vector>,
    /// `−div div H`.
    pub hyper: Field<Vector>,
    /// `f (1 − b(θ))`.
    pub body: Field<Vector>,
    pub stokes_power: Field<f64>,
    pub hyper_power: Field<f64>,
    pub(super) mu: Field<f64>,
}

impl MomentumForces {
    pub fn total(&self, grid: &Grid) -> Field<Vector> {
        Field::from_fn(grid, |i, j| {
            self.stress.get(i, j)
                + self.pressure.get(i, j)
                + self.korteweg.get(i, j)
                + self.thermal.get(i, j)
                + self.hyper.get(i, j)
                + self.body.get(i, j)
        })
    }

    fn scale(&self) -> f64 {
        [&self.stress, &self.pressure, &self.korteweg, &self.thermal, &self.hyper, &self.body]
            .iter()
            .map(|f| f.norm())
            .sum()
    }
}

pub fn momentum_forces(
    problem: &Problem,
    v: &Field<Vector>,
    e: &Field<SymTensor2>,
    alpha: &Field<f64>,
    theta: &Field<f64>,
    cons: &Constitutive,
) -> Result<MomentumForces, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let d = g.dim();
    let ev = strain_rate(g, v);
    let total = Field::from_fn(g, |i, j| cons.s.get(i, j) + isotropic_d_apply(&ev.get(i, j), p.k_v, p.g_v))
        .synced(g, Reflection::Mirror);
    let stress = div_sym(g, &total);
    let stokes_power = ev.map(g, |x| isotropic_d_apply(&x, p.k_v, p.g_v).ddot(&x));
    let ga = gradient(g, alpha);
    let pressure = Field::from_fn(g, |i, j| {
        let s = cons.s.get(i, j);
        let da = ga.get(i, j);
        let dphi = cons.dphi_alpha.get(i, j);
        Vector::from_fn(d, |a| {
            let de = (e.shifted(i, j, a, 1) - e.shifted(i, j, a, -1)) * (0.5 / g.h(a));
            s.ddot(&de) + dphi * da.get(a)
        })
    });
    let lap = laplacian(g, alpha);
    let korteweg = ga.zip(g, &lap, |da, l| da * (-p.kappa * l));
    let mut phi_th = Field::filled(g, 0.0);
    for (i, j) in g.cells() {
        phi_th.set(i, j, problem.thermal.phi_thermal(theta.get(i, j))?);
    }
    let thermal = gradient(g, &phi_th.synced(g, Reflection::Even));
    let hs = hyper_stress(problem, v);
    let hyper = div_sym(g, &hs.div).scaled(-1.0);
    let body = problem.force.zip(g, theta, |f, th| f * (1.0 - p.buoyancy_at(th)));
    Ok(MomentumForces { stress, pressure, korteweg, thermal, hyper, body, stokes_power, hyper_power: hs.power, mu: hs.mu })
}

/// Skew-symmetric convective term `(ρ/2)[(a·∇)u + div(u ⊗ a)]`; `a` and `u` synced.
fn convection(grid: &Grid, rho: f64, a: &Field<Vector>, u: &Field<Vector>) -> Field<Vector> {
    let d = grid.dim();
    let products: Vec<Field<Vector>> = (0..d).map(|b| u.zip_all(a, |x, y| x * y.get(b))).collect();
    Field::from_fn(grid, |i, j| {
        let ac = a.get(i, j);
        let mut acc = Vector::zeros(d);
        for b in 0..d {
            let s = 0.5 / grid.h(b);
            acc += (u.shifted(i, j, b, 1) - u.shifted(i, j, b, -1)) * (s * ac.get(b));
            acc += (products[b].shifted(i, j, b, 1) - products[b].shifted(i, j, b, -1)) * s;
        }
        acc * (0.5 * rho)
    })
}

fn relative(num: f64, scale: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / scale.max(f64::MIN_POSITIVE)
    }
}

/// Residual `ρ(v − v⁻)/τ + conv(v) − F` of the momentum balance.
pub fn momentum_residual(
    problem: &Problem,
    v: &Field<Vector>,
    v_prev: &Field<Vector>,
    forces: &MomentumForces,
    tau: f64,
) -> Field<Vector> {
    let g = &problem.grid;
    let rho = problem.params.rho;
    let conv = convection(g, rho, v, v);
    let f = forces.total(g);
    Field::from_fn(g, |i, j| (v.get(i, j) - v_prev.get(i, j)) * (rho / tau) + conv.get(i, j) - f.get(i, j))
}

fn momentum_scale(problem: &Problem, v: &Field<Vector>, v_prev: &Field<Vector>, forces: &MomentumForces, tau: f64) -> f64 {
    let rho = problem.params.rho;
    let conv = convection(&problem.grid, rho, v, v);
    (rho / tau) * (v.norm() + v_prev.norm()) + conv.norm() + forces.scale()
}

/// Shear modulus of the algorithmic tangent: elastic shear in series with
/// the creep relaxation over one step.
fn tangent_shear(problem: &Problem, cons: &Constitutive, alpha: &Field<f64>, lag: &Lagged, tau: f64) -> Field<f64> {
    let g = &problem.grid;
    let p = &problem.params;
    Field::from_fn(g, |i, j| {
        let ge = p.g_e(alpha.get(i, j)) * cons.gprime.get(i, j);
        ge / (1.0 + 2.0 * ge * tau / lag.gm.get(i, j))
    })
}

/// Bulk modulus of the tangent: elastic bulk plus the thermal pressure
/// response `θη²/c` caused by compressive heating.
fn tangent_bulk(problem: &Problem, theta: &Field<f64>) -> Result<Field<f64>, StepError> {
    let g = &problem.grid;
    let th = &problem.thermal;
    let mut out = Field::filled(g, problem.params.k_e);
    for (i, j) in g.cells() {
        let t = theta.get(i, j);
        if t > 0.0 {
            let eta = th.entropy(t)?;
            out.set(i, j, problem.params.k_e + t * eta * eta / th.capacity(t));
        }
    }
    Ok(out)
}

/// Picard linearization of the momentum residual about `vk` applied to `u`.
fn momentum_operator(
    problem: &Problem,
    vk: &Field<Vector>,
    shear: &Field<f64>,
    bulk: &Field<f64>,
    mu: &Field<f64>,
    tau: f64,
    u: &Field<Vector>,
) -> Field<Vector> {
    let g = &problem.grid;
    let p = &problem.params;
    let us = u.clone().synced(g, Reflection::Mirror);
    let conv = convection(g, p.rho, vk, &us);
    let eu = strain_rate(g, &us);
    let x = Field::from_fn(g, |i, j| {
        let e = eu.get(i, j);
        isotropic_c_apply(&e, bulk.get(i, j), shear.get(i, j)) * tau + isotropic_d_apply(&e, p.k_v, p.g_v)
    })
    .synced(g, Reflection::Mirror);
    let gg = grad_sym(g, &eu.synced(g, Reflection::Mirror));
    let h = gg.zip(g, mu, |x, m| x * m).synced(g, Reflection::Mirror);
    let z = div_symgrad(g, &h).synced(g, Reflection::Mirror);
    let dx = div_sym(g, &x);
    let dz = div_sym(g, &z);
    Field::from_fn(g, |i, j| us.get(i, j) * (p.rho / tau) + conv.get(i, j) - dx.get(i, j) + dz.get(i, j))
}

/// One damped Picard correction of the velocity. Returns whether the linear solve converged.
pub(super) fn momentum_update(
    problem: &Problem,
    it: &mut State,
    prev: &State,
    lag: &Lagged,
    tau: f64,
    lin_tol: f64,
) -> Result<bool, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let d = g.dim();
    let cons = constitutive(problem, &it.e, &it.alpha)?;
    let forces = momentum_forces(problem, &it.v, &it.e, &it.alpha, &it.theta, &cons)?;
    let r = momentum_residual(problem, &it.v, &prev.v, &forces, tau);
    let r0 = r.norm();
    if r0 == 0.0 {
        return Ok(true);
    }
    let shear = tangent_shear(problem, &cons, &it.alpha, lag, tau);
    let bulk = tangent_bulk(problem, &it.theta)?;
    let diag = Field::from_fn(g, |i, j| {
        let mut s = p.rho / tau;
        for a in 0..d {
            let h2 = g.h(a) * g.h(a);
            s += (tau * (bulk.get(i, j) + 2.0 * shear.get(i, j)) + p.k_v + 2.0 * p.g_v) / (2.0 * h2);
            s += 3.0 * forces.mu.get(i, j) / (h2 * h2);
        }
        1.0 / s
    });
    let rhs = r.scaled(-1.0);
    let zero = Field::filled(g, Vector::zeros(d));
    let op = |u: &Field<Vector>| momentum_operator(problem, &it.v, &shear, &bulk, &forces.mu, tau, u);
    let pre = |x: &Field<Vector>| x.zip(g, &diag, |a, s| a * s);
    let (delta, stats) = bicgstab(op, pre, &rhs, zero, lin_tol, problem.solver.max_linear);
    let delta = delta.synced(g, Reflection::Mirror);

    // the predicted stress response to the correction, used by the line search
    let ed = strain_rate(g, &delta);
    let tangent_force = div_sym(
        g,
        &Field::from_fn(g, |i, j| isotropic_c_apply(&ed.get(i, j), bulk.get(i, j), shear.get(i, j)) * tau)
            .synced(g, Reflection::Mirror),
    );
    let mut lambda = 1.0;
    loop {
        let mut trial = it.v.clone();
        trial.axpy(lambda, &delta);
        let trial = trial.synced(g, Reflection::Mirror);
        let tf = momentum_forces(problem, &trial, &it.e, &it.alpha, &it.theta, &cons)?;
        let mut rt = momentum_residual(problem, &trial, &prev.v, &tf, tau);
        rt.axpy(-lambda, &tangent_force);
        if rt.norm() <= (1.0 - 1e-4 * lambda) * r0 || lambda <= 1.0 / 64.0 {
            it.v = trial;
            break;
        }
        lambda *= 0.5;
    }
    Ok(stats.converged)
}

/// Rate coefficient `m` with `Π ≈ Π_k + m dev(E − E_k)` for the strain solve.
fn creep_coupling(problem: &Problem, cons: &Constitutive, alpha: &Field<f64>, pi: &Field<DevTensor2>, lag: &Lagged) -> Field<f64> {
    let g = &problem.grid;
    let p = &problem.params;
    Field::from_fn(g, |i, j| {
        let two_g = 2.0 * p.g_e(alpha.get(i, j)) * cons.gprime.get(i, j);
        match p.creep {
            CreepLaw::Linear => two_g / lag.gm.get(i, j),
            CreepLaw::Glen { q, .. } => {
                let ds = cons.s.get(i, j).dev().norm();
                if ds > 0.0 {
                    two_g * pi.get(i, j).norm() / ((q - 1.0) * ds)
                } else {
                    0.0
                }
            }
        }
    })
}

/// Strain update with the velocity frozen and creep linearized.
pub(super) fn strain_solve(
    problem: &Problem,
    it: &State,
    prev: &State,
    lag: &Lagged,
    tau: f64,
    lin_tol: f64,
) -> Result<(Field<SymTensor2>, SolveStats), StepError> {
    let g = &problem.grid;
    let cons = constitutive(problem, &it.e, &it.alpha)?;
    let m = creep_coupling(problem, &cons, &it.alpha, &it.pi, lag);
    let ev = strain_rate(g, &it.v);
    let rhs = Field::from_fn(g, |i, j| {
        prev.e.get(i, j) * (1.0 / tau) + ev.get(i, j) - *it.pi.get(i, j).as_sym() + it.e.get(i, j).dev() * m.get(i, j)
    });
    let res = transport_step(g, &it.v, &rhs, Some(&m), tau, it.e.clone(), lin_tol, problem.solver.max_linear);
    Ok((res.x, res.stats))
}

/// Residual `(E − E⁻)/τ + B(v, E) − E(v) + Π` and its scale.
pub fn strain_residual(problem: &Problem, state: &State, prev: &State, tau: f64) -> (Field<SymTensor2>, f64) {
    let g = &problem.grid;
    let gv = crate::grid::ops::grad_vector(g, &state.v);
    let ev = strain_rate(g, &state.v);
    let d = g.dim();
    let mut scale = 0.0;
    let r = Field::from_fn(g, |i, j| {
        let e = state.e.get(i, j);
        let vc = state.v.get(i, j);
        let mut adv = SymTensor2::zeros(d);
        for b in 0..d {
            adv += (state.e.shifted(i, j, b, 1) - state.e.shifted(i, j, b, -1)) * (0.5 * vc.get(b) / g.h(b));
        }
        let tr = crate::tensors::zj_rhs(&gv.get(i, j), &adv, &e);
        let pi = *state.pi.get(i, j).as_sym();
        scale += (e.norm() + prev.e.get(i, j).norm()) / tau + tr.norm() + ev.get(i, j).norm() + pi.norm();
        (e - prev.e.get(i, j)) * (1.0 / tau) + tr - ev.get(i, j) + pi
    });
    (r, scale / (g.cell_count() as f64).sqrt())
}

/// Creep rate with its diagnostics.
#[derive(Clone, Debug)]
pub struct CreepResult {
    /// Creep rate, synced with even ghosts.
    pub pi: Field<DevTensor2>,
    /// Largest trace before the deviatoric projection.
    pub max_trace: f64,
    pub converged: bool,
    /// Creep power density `σ_c : Π`.
    pub power: Field<f64>,
}

/// Creep stress `G_m Π` (linear) or `G_m g0 q |Π|^{q−2} Π` (power law).
pub fn creep_stress(problem: &Problem, gm: f64, pi: &SymTensor2) -> SymTensor2 {
    match problem.params.creep {
        CreepLaw::Linear => *pi * gm,
        CreepLaw::Glen { g0, q } => {
            let n = pi.norm();
            if n == 0.0 {
                *pi * 0.0
            } else {
                *pi * (gm * g0 * q * n.powf(q - 2.0))
            }
        }
    }
}

/// Solves `σ_c(Π) − ϰΔΠ = dev S` with homogeneous Neumann conditions.
pub fn creep_solve(problem: &Problem, s: &Field<SymTensor2>, w_prev: &Field<f64>, guess: &Field<DevTensor2>) -> CreepResult {
    let g = &problem.grid;
    let p = &problem.params;
    let d = g.dim();
    let gm = w_prev.map_all(|w| p.g_m(w));
    let rhs = Field::from_fn(g, |i, j| s.get(i, j).dev());
    let h2sum: f64 = (0..d).map(|a| 2.0 / (g.h(a) * g.h(a))).sum();
    let tol = problem.solver.linear_tol;
    let solve = |coef: &Field<f64>, x0: Field<SymTensor2>| {
        let op = |x: &Field<SymTensor2>| {
            let xs = x.clone().synced(g, Reflection::Even);
            let lap = laplacian(g, &xs);
            Field::from_fn(g, |i, j| xs.get(i, j) * coef.get(i, j) - lap.get(i, j) * p.varkappa)
        };
        let pre = |r: &Field<SymTensor2>| Field::from_fn(g, |i, j| r.get(i, j) * (1.0 / (coef.get(i, j) + p.varkappa * h2sum)));
        cg(op, pre, &rhs, x0, tol, problem.solver.max_linear)
    };
    let x0 = guess.map_all(|x| x.into_sym());
    let (x, converged) = match p.creep {
        CreepLaw::Linear => {
            let (x, st) = solve(&gm, x0);
            (x, st.converged)
        }
        CreepLaw::Glen { g0, q } => {
            // Kačanov iteration from the pointwise solution
            let mut x = Field::from_fn(g, |i, j| {
                let r = rhs.get(i, j);
                let n = r.norm();
                if n == 0.0 {
                    r
                } else {
                    let mag = (n / (gm.get(i, j) * g0 * q)).powf(1.0 / (q - 1.0));
                    r * (mag / n)
                }
            });
            let mut ok = false;
            let floor = 1e-12 * x.max_of(|t| t.norm()).max(f64::MIN_POSITIVE);
            for _ in 0..200 {
                let coef = Field::from_fn(g, |i, j| gm.get(i, j) * g0 * q * x.get(i, j).norm().max(floor).powf(q - 2.0));
                let (next, st) = solve(&coef, x.clone());
                let change = next.lincomb(1.0, -1.0, &x).norm();
                let size = next.norm();
                x = next;
                if st.converged && change <= 10.0 * tol * size.max(f64::MIN_POSITIVE) {
                    ok = true;
                    break;
                }
            }
            (x, ok)
        }
    };
    let max_trace = x.max_of(|t| t.trace().abs());
    let pi = Field::from_fn(g, |i, j| DevTensor2::new(x.get(i, j))).synced(g, Reflection::Even);
    let power = Field::from_fn(g, |i, j| {
        let pc = *pi.get(i, j).as_sym();
        creep_stress(problem, gm.get(i, j), &pc).ddot(&pc)
    });
    CreepResult { pi, max_trace, converged, power }
}

/// Residual of the creep equation relative to its scale.
pub fn creep_residual(problem: &Problem, s: &Field<SymTensor2>, w_prev: &Field<f64>, pi: &Field<DevTensor2>) -> f64 {
    let g = &problem.grid;
    let p = &problem.params;
    let x = pi.map_all(|t| t.into_sym());
    let lap = laplacian(g, &x);
    let mut scale = 0.0;
    let r = Field::from_fn(g, |i, j| {
        let sc = creep_stress(problem, p.g_m(w_prev.get(i, j)), &x.get(i, j));
        let ds = s.get(i, j).dev();
        let l = lap.get(i, j) * p.varkappa;
        scale += sc.norm() + ds.norm() + l.norm();
        sc - l - ds
    });
    relative(r.norm(), scale / (g.cell_count() as f64).sqrt())
}

/// Converged damage update with the selected subgradient and heat production.
#[derive(Clone, Debug)]
pub struct DamageResult {
    /// New damage, synced with even ghosts.
    pub alpha: Field<f64>,
    /// Convective rate `(α − α⁻)/τ + v·∇α`, snapped to zero inside the kink tolerance.
    pub rate: Field<f64>,
    /// Selected element of ∂ζ at the rate.
    pub selection: Field<f64>,
    /// Heat production ξ = selection · rate.
    pub xi: Field<f64>,
    pub clamped: usize,
    pub sweeps: usize,
    pub converged: bool,
}

struct DamageCell {
    /// Sum of the neighbor values weighted by `κ/h²`.
    nb: f64,
    /// Centered `v·∇α`.
    b: f64,
    /// `κ Σ 2/h²`.
    diag: f64,
}

fn damage_cell(g: &Grid, kappa: f64, alpha: &Field<f64>, v: &Field<Vector>, i: usize, j: usize) -> DamageCell {
    let vc = v.get(i, j);
    let (mut nb, mut b, mut diag) = (0.0, 0.0, 0.0);
    for a in 0..g.dim() {
        let h = g.h(a);
        let up = alpha.shifted(i, j, a, 1);
        let dn = alpha.shifted(i, j, a, -1);
        nb += kappa * (up + dn) / (h * h);
        diag += 2.0 * kappa / (h * h);
        b += vc.get(a) * (up - dn) / (2.0 * h);
    }
    DamageCell { nb, b, diag }
}

/// Solves the damage inclusion
/// `0 ∈ ∂ζ(α̇) + φ′_α(E, α) − κΔα + c√τ α̇` with `α̇ = (α − α⁻)/τ + v·∇α`
/// by symmetric Gauss–Seidel with an exact pointwise resolution of the kink.
#[allow(clippy::too_many_arguments)]
pub fn damage_solve(
    problem: &Problem,
    e: &Field<SymTensor2>,
    alpha_guess: &Field<f64>,
    alpha_prev: &Field<f64>,
    v: &Field<Vector>,
    w_prev: &Field<f64>,
    tau: f64,
) -> Result<DamageResult, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let slope = Field::from_fn(g, |i, j| {
        let (gv, _) = dev_profile(e.get(i, j).dev().norm_sq(), p.eps_reg);
        2.0 * p.g_e0 * gv + p.g_d / p.kappa
    });
    let heal = w_prev.map_all(|w| p.a_heal(w));
    let conv = p.damage_convexify * tau.sqrt();
    let offset = p.g_d / p.kappa;
    let mut alpha = alpha_guess.clone().synced(g, Reflection::Even);
    let cells: Vec<(usize, usize)> = g.cells().collect();
    let mut sweeps = 0;
    let mut converged = false;
    let mut clamped = vec![false; cells.len()];
    while sweeps < problem.solver.max_damage_sweeps {
        let mut change = 0.0_f64;
        let forward = sweeps % 2 == 0;
        for n in 0..cells.len() {
            let k = if forward { n } else { cells.len() - 1 - n };
            let (i, j) = cells[k];
            let c = damage_cell(g, p.kappa, &alpha, v, i, j);
            let l0 = slope.get(i, j) + c.diag;
            let a_prev = alpha_prev.get(i, j);
            let m = conv + l0 * tau;
            let r = offset + c.nb - l0 * (a_prev - tau * c.b);
            let heal_slope = 2.0 * (heal.get(i, j) + p.eps_zeta);
            let y = if r > 0.0 {
                r / (heal_slope + m)
            } else if r + p.sigma_f < 0.0 {
                (r + p.sigma_f) / (2.0 * p.eps_zeta + m)
            } else {
                0.0
            };
            let raw = a_prev + tau * (y - c.b);
            let new = raw.clamp(0.0, 1.0);
            clamped[k] = new != raw;
            change = change.max((new - alpha.get(i, j)).abs());
            alpha.set(i, j, new);
        }
        alpha.sync(g, Reflection::Even);
        sweeps += 1;
        if change <= 1e-15 {
            converged = true;
            break;
        }
    }
    let (rate, selection, xi) = damage_selection(problem, e, &alpha, alpha_prev, v, w_prev, tau)?;
    Ok(DamageResult { alpha, rate, selection, xi, clamped: clamped.iter().filter(|c| **c).count(), sweeps, converged })
}

/// Rate, selection and heat production at a given damage field.
fn damage_selection(
    problem: &Problem,
    e: &Field<SymTensor2>,
    alpha: &Field<f64>,
    alpha_prev: &Field<f64>,
    v: &Field<Vector>,
    w_prev: &Field<f64>,
    tau: f64,
) -> Result<(Field<f64>, Field<f64>, Field<f64>), StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let snap = kink_tolerance(tau);
    let mut rate = Field::filled(g, 0.0);
    let mut sel = Field::filled(g, 0.0);
    let mut xi = Field::filled(g, 0.0);
    for (i, j) in g.cells() {
        let c = damage_cell(g, p.kappa, alpha, v, i, j);
        let a = alpha.get(i, j);
        let mut y = (a - alpha_prev.get(i, j)) / tau + c.b;
        if y.abs() <= snap {
            y = 0.0;
        }
        let s = match y.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 2.0 * (p.a_heal(w_prev.get(i, j)) + p.eps_zeta) * y,
            Some(std::cmp::Ordering::Less) => -p.sigma_f + 2.0 * p.eps_zeta * y,
            _ => {
                let en = stored_energy_reg(&e.get(i, j), a, p.eps_reg, p)?;
                let raw = -(en.dalpha - (c.nb - c.diag * a));
                raw.clamp(-p.sigma_f, 0.0)
            }
        };
        rate.set(i, j, y);
        sel.set(i, j, s);
        xi.set(i, j, crate::materials::damage_heat(s, y));
    }
    Ok((rate, sel, xi))
}

fn kink_tolerance(tau: f64) -> f64 {
    1e-14 / tau
}

/// Relative distance of the damage state from the inclusion, honoring the box constraint.
pub(super) fn damage_residual(problem: &Problem, state: &State, prev: &State, tau: f64) -> Result<f64, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let conv = p.damage_convexify * tau.sqrt();
    let snap = kink_tolerance(tau);
    let mut worst = 0.0_f64;
    for (i, j) in g.cells() {
        let c = damage_cell(g, p.kappa, &state.alpha, &state.v, i, j);
        let a = state.alpha.get(i, j);
        let mut y = (a - prev.alpha.get(i, j)) / tau + c.b;
        if y.abs() <= snap {
            y = 0.0;
        }
        let en = stored_energy_reg(&state.e.get(i, j), a, p.eps_reg, p)?;
        let lap = c.nb - c.diag * a;
        let raw = -(en.dalpha - lap + conv * y);
        let (lo, hi) = crate::materials::zeta_subgradient_interval(a, prev.w.get(i, j), y, p);
        let scale = en.dalpha.abs() + lap.abs() + conv * y.abs() + lo.abs() + hi.abs();
        let lo = if a <= 0.0 { f64::NEG_INFINITY } else { lo };
        let hi = if a >= 1.0 { f64::INFINITY } else { hi };
        let dist = if raw < lo { lo - raw } else if raw > hi { raw - hi } else { 0.0 };
        worst = worst.max(relative(dist, scale));
    }
    Ok(worst)
}

/// Heat sources per unit volume, split by channel.
#[derive(Clone, Debug)]
pub(super) struct Sources {
    pub maxwell: Field<f64>,
    pub stokes: Field<f64>,
    pub hyper: Field<f64>,
    pub damage: Field<f64>,
    pub creep_gradient: Field<f64>,
    pub adiabatic: Field<f64>,
}

impl Sources {
    /// Net heating density entering the enthalpy equation.
    pub fn heating(&self, grid: &Grid, tau: f64) -> Field<f64> {
        let f = 1.0 - tau.powf(0.25);
        Field::from_fn(grid, |i, j| {
            self.maxwell.get(i, j)
                + self.stokes.get(i, j)
                + self.hyper.get(i, j)
                + f * self.damage.get(i, j)
                + self.creep_gradient.get(i, j)
                + self.adiabatic.get(i, j)
        })
    }
}

pub(super) fn sources(problem: &Problem, state: &State, prev: &State, tau: f64) -> Result<Sources, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let ev = strain_rate(g, &state.v);
    let stokes = ev.map(g, |x| isotropic_d_apply(&x, p.k_v, p.g_v).ddot(&x));
    let hyper = hyper_stress(problem, &state.v).power;
    let maxwell = Field::from_fn(g, |i, j| {
        let pc = *state.pi.get(i, j).as_sym();
        creep_stress(problem, p.g_m(prev.w.get(i, j)), &pc).ddot(&pc)
    });
    let creep_gradient = face_energy_density(g, &state.pi).scaled(p.varkappa);
    let (_, _, damage) = damage_selection(problem, &state.e, &state.alpha, &prev.alpha, &state.v, &prev.w, tau)?;
    let div = divergence(g, &state.v);
    let mut adiabatic = Field::filled(g, 0.0);
    for (i, j) in g.cells() {
        adiabatic.set(i, j, problem.thermal.phi_thermal(state.theta.get(i, j))? * div.get(i, j));
    }
    Ok(Sources { maxwell, stokes, hyper, damage, creep_gradient, adiabatic })
}

/// Enthalpy-equation data with the heating evaluated at `state`.
pub(super) fn heat_setup(problem: &Problem, state: &State, prev: &State, lag: &Lagged, tau: f64) -> Result<HeatSetup, StepError> {
    let src = sources(problem, state, prev, tau)?;
    let heating = src.heating(&problem.grid, tau);
    Ok(HeatSetup::new(problem, heating, lag.chi_adv.clone(), lag.kf.clone(), &lag.fluxes, tau))
}

/// Every block residual at a candidate new state.
pub(super) fn all_residuals(problem: &Problem, state: &State, prev: &State, lag: &Lagged, tau: f64) -> Result<Residuals, StepError> {
    let g = &problem.grid;
    let cons = constitutive(problem, &state.e, &state.alpha)?;
    let momentum = if problem.kinematics.is_some() {
        0.0
    } else {
        let forces = momentum_forces(problem, &state.v, &state.e, &state.alpha, &state.theta, &cons)?;
        let r = momentum_residual(problem, &state.v, &prev.v, &forces, tau);
        relative(r.norm(), momentum_scale(problem, &state.v, &prev.v, &forces, tau))
    };
    let (rs, scale) = strain_residual(problem, state, prev, tau);
    let strain = relative(rs.norm() / (g.cell_count() as f64).sqrt(), scale);
    let creep = creep_residual(problem, &cons.s, &prev.w, &state.pi);
    let damage = damage_residual(problem, state, prev, tau)?;
    let setup = heat_setup(problem, state, prev, lag, tau)?;
    let heat = heat::heat_relative_residual(problem, &state.v, &prev.w, &state.w, &state.theta, &state.chi, &setup, tau);
    Ok(Residuals { momentum, strain, creep, damage, heat })
}

/// Integrated energy channels at the converged state.
pub(super) fn channels(problem: &Problem, state: &State, prev: &State, lag: &Lagged, tau: f64) -> Result<StepChannels, StepError> {
    let g = &problem.grid;
    let p = &problem.params;
    let vol = g.cell_volume();
    let src = sources(problem, state, prev, tau)?;
    let work_body = problem.force.zip(g, &state.theta, |f, th| f * (1.0 - p.buoyancy_at(th))).dot(&state.v) * vol;
    let work_drive = if problem.kinematics.is_some() {
        let cons = constitutive(problem, &state.e, &state.alpha)?;
        let forces = momentum_forces(problem, &state.v, &state.e, &state.alpha, &state.theta, &cons)?;
        momentum_residual(problem, &state.v, &prev.v, &forces, tau).dot(&state.v) * vol
    } else {
        0.0
    };
    let heat_boundary = heat::boundary_source(g, &lag.fluxes).integral(g);
    let (rate, _, _) = damage_selection(problem, &state.e, &state.alpha, &prev.alpha, &state.v, &prev.w, tau)?;
    Ok(StepChannels {
        maxwell: src.maxwell.integral(g),
        stokes: src.stokes.integral(g),
        hyper: src.hyper.integral(g),
        damage: src.damage.integral(g),
        creep_gradient: src.creep_gradient.integral(g),
        work_body,
        work_drive,
        adiabatic: src.adiabatic.integral(g),
        heat_boundary,
        damage_rate_sq: rate.map(g, |y| y * y).integral(g),
    })
}

/// Entropy production rate: dissipative heating over temperature plus the
/// conductive part on faces. `None` when the temperature is too low.
pub(super) fn entropy_production(problem: &Problem, state: &State, prev: &State, lag: &Lagged, tau: f64) -> Result<Option<f64>, StepError> {
    let g = &problem.grid;
    if !(state.theta.min() > problem.solver.theta_floor) {
        return Ok(None);
    }
    let src = sources(problem, state, prev, tau)?;
    let f = 1.0 - tau.powf(0.25);
    let mut total = 0.0;
    for (i, j) in g.cells() {
        let q = src.maxwell.get(i, j)
            + src.stokes.get(i, j)
            + src.hyper.get(i, j)
            + f * src.damage.get(i, j)
            + src.creep_gradient.get(i, j);
        total += q / state.theta.get(i, j);
    }
    total *= g.cell_volume();
    total += heat::conduction_entropy(g, &lag.kf, &state.theta);
    Ok(Some(total))
}

/// Largest skew part of a symmetric field, which packed storage keeps at zero.
pub fn max_skew(e: &Field<SymTensor2>) -> f64 {
    e.max_of(|x| x.to_tensor().skew().max_abs())
}
