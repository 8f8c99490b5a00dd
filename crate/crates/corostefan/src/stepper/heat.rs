//! Enthalpy balance with the relaxed phase transition.
//!
//! The unknown is the enthalpy `w`. Temperature and phase fraction follow
//! from `w = γ̃(θ) + ℓχ(θ)` where `χ(θ)` is the implicit relaxation update
//! of the advected phase fraction.

use super::Problem;
use crate::grid::ops::upwind_scalar_flux_div;
use crate::grid::{FaceKind, Field, Grid, Reflection};
use crate::linsolve::bicgstab;
use crate::materials::ThermalModel;
use crate::tensors::Vector;

/// Conductivity on the upper face of every cell along each axis, synced.
#[derive(Clone, Debug)]
pub struct FaceConductivity {
    pub up: Vec<Field<f64>>,
}

/// Harmonic face means of `𝒦(α, w)`.
pub fn face_conductivities(problem: &Problem, alpha: &Field<f64>, w: &Field<f64>) -> FaceConductivity {
    let g = &problem.grid;
    let p = &problem.params;
    let a = alpha.clone().synced(g, Reflection::Even);
    let w = w.clone().synced(g, Reflection::Even);
    let up = (0..g.dim())
        .map(|axis| {
            Field::from_fn(g, |i, j| {
                let kc = p.conductivity_at(a.get(i, j), w.get(i, j));
                let kn = p.conductivity_at(a.shifted(i, j, axis, 1), w.shifted(i, j, axis, 1));
                2.0 * kc * kn / (kc + kn)
            })
            .synced(g, Reflection::Even)
        })
        .collect();
    FaceConductivity { up }
}

/// `div(𝒦 ∇θ)` with face conductivities; `theta` synced with even ghosts.
pub fn diffusion(grid: &Grid, kf: &FaceConductivity, theta: &Field<f64>) -> Field<f64> {
    Field::from_fn(grid, |i, j| {
        let c = theta.get(i, j);
        let mut acc = 0.0;
        for (a, k) in kf.up.iter().enumerate() {
            let h2 = grid.h(a) * grid.h(a);
            let up = k.get(i, j) * (theta.shifted(i, j, a, 1) - c);
            let dn = k.shifted(i, j, a, -1) * (c - theta.shifted(i, j, a, -1));
            acc += (up - dn) / h2;
        }
        acc
    })
}

/// Conductive entropy production `Σ_faces 𝒦 (Δθ/h)² / (θ_L θ_R)` times the cell volume.
pub(super) fn conduction_entropy(grid: &Grid, kf: &FaceConductivity, theta: &Field<f64>) -> f64 {
    let mut total = 0.0;
    for (i, j) in grid.cells() {
        let c = theta.get(i, j);
        for (a, k) in kf.up.iter().enumerate() {
            let n = theta.shifted(i, j, a, 1);
            let gr = (n - c) / grid.h(a);
            total += k.get(i, j) * gr * gr / (c * n);
        }
    }
    total * grid.cell_volume()
}

/// Boundary inflow per unit volume in the cells adjacent to walls.
pub(super) fn boundary_source(grid: &Grid, fluxes: &[[f64; 2]]) -> Field<f64> {
    Field::from_fn(grid, |i, j| {
        let mut s = 0.0;
        for (a, pair) in fluxes.iter().enumerate().take(grid.dim()) {
            if grid.kind(a) != FaceKind::Wall {
                continue;
            }
            let idx = if a == 0 { i } else { j };
            if idx == 0 {
                s += pair[0] / grid.h(a);
            }
            if idx + 1 == grid.n(a) {
                s += pair[1] / grid.h(a);
            }
        }
        s
    })
}

/// Slope of Υ.
fn upsilon_slope(x: f64, cap: f64) -> f64 {
    let a = x.abs();
    if a <= cap + a.sqrt() {
        1.0
    } else {
        0.5 / a.sqrt()
    }
}

/// Per-cell enthalpy relation of one step.
#[derive(Clone, Copy, Debug)]
pub struct PhaseCell<'a> {
    pub thermal: &'a ThermalModel,
    /// Advected previous phase fraction.
    pub chi_adv: f64,
    /// `τ/ω`.
    pub rate: f64,
    pub cap: f64,
}

impl PhaseCell<'_> {
    fn driver(&self, theta: f64) -> f64 {
        theta / self.thermal.theta_pt() - 1.0
    }

    /// Phase fraction after relaxation at temperature `theta`.
    pub fn chi(&self, theta: f64) -> f64 {
        let x = self.driver(theta);
        let u = if x == 0.0 { 0.0 } else { x.signum() * x.abs().min(self.cap + x.abs().sqrt()) };
        (self.chi_adv + self.rate * u).clamp(0.0, 1.0)
    }

    pub fn w_of(&self, theta: f64) -> f64 {
        self.thermal.gamma_extended(theta) + self.thermal.latent() * self.chi(theta)
    }

    /// `dw/dθ`, using the one-sided slope at the clamp points.
    pub fn dw(&self, theta: f64) -> f64 {
        let mut s = self.thermal.capacity(theta);
        let x = self.driver(theta);
        let raw = self.chi_adv + self.rate * crate::materials::upsilon(x, self.cap);
        if raw > 0.0 && raw < 1.0 {
            s += self.thermal.latent() * self.rate * upsilon_slope(x, self.cap) / self.thermal.theta_pt();
        }
        s
    }

    /// Solves `w_of(θ) = w`. Returns `(θ, χ, underflow)`.
    pub fn invert(&self, w: f64) -> (f64, f64, bool) {
        let w0 = self.w_of(0.0);
        if !(w > w0) {
            return (0.0, self.chi(0.0), w < w0 || w.is_nan());
        }
        let mut lo = 0.0;
        let mut hi = self.thermal.theta_of(w).theta;
        if self.w_of(hi) - w <= 0.0 {
            return (hi, self.chi(hi), false);
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.w_of(t) - w;
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            if f == 0.0 || hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let newton = t - f / self.dw(t);
            t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        (t, self.chi(t), false)
    }
}

/// Data of the enthalpy equation that stays fixed during its solve.
#[derive(Clone, Debug)]
pub struct HeatSetup {
    /// Net heating density from dissipation and adiabatic exchange.
    pub heating: Field<f64>,
    /// Boundary inflow density.
    pub boundary: Field<f64>,
    pub kf: FaceConductivity,
    pub chi_adv: Field<f64>,
    /// `τ/ω`.
    pub rate: f64,
}

impl HeatSetup {
    pub fn new(
        problem: &Problem,
        heating: Field<f64>,
        chi_adv: Field<f64>,
        kf: FaceConductivity,
        fluxes: &[[f64; 2]],
        tau: f64,
    ) -> Self {
        let boundary = boundary_source(&problem.grid, fluxes);
        Self { heating, boundary, kf, chi_adv, rate: tau / problem.params.omega }
    }

    pub fn cell<'a>(&self, problem: &'a Problem, i: usize, j: usize) -> PhaseCell<'a> {
        PhaseCell { thermal: &problem.thermal, chi_adv: self.chi_adv.get(i, j), rate: self.rate, cap: problem.params.upsilon_cap }
    }
}

/// Enthalpy, temperature and phase fraction after the heat solve, all synced.
#[derive(Clone, Debug)]
pub struct HeatResult {
    pub w: Field<f64>,
    pub theta: Field<f64>,
    pub chi: Field<f64>,
    /// Cells whose enthalpy fell below the value at zero temperature.
    pub underflow: usize,
    pub converged: bool,
}

fn invert_all(problem: &Problem, setup: &HeatSetup, w: &Field<f64>) -> (Field<f64>, Field<f64>, usize) {
    let g = &problem.grid;
    let mut theta = Field::filled(g, 0.0);
    let mut chi = Field::filled(g, 0.0);
    let mut under = 0;
    for (i, j) in g.cells() {
        let (t, c, u) = setup.cell(problem, i, j).invert(w.get(i, j));
        theta.set(i, j, t);
        chi.set(i, j, c);
        under += u as usize;
    }
    (theta.synced(g, Reflection::Even), chi.synced(g, Reflection::Even), under)
}

/// Residual `(w − w⁻)/τ + div(v w) − div(𝒦∇θ) − Q − q_b` with θ given.
#[allow(clippy::too_many_arguments)]
pub fn heat_residual(
    problem: &Problem,
    v: &Field<Vector>,
    w_prev: &Field<f64>,
    w: &Field<f64>,
    theta: &Field<f64>,
    setup: &HeatSetup,
    tau: f64,
) -> Field<f64> {
    let g = &problem.grid;
    let ws = w.clone().synced(g, Reflection::Even);
    let flux = upwind_scalar_flux_div(g, v, &ws);
    let diff = diffusion(g, &setup.kf, theta);
    Field::from_fn(g, |i, j| {
        (w.get(i, j) - w_prev.get(i, j)) / tau + flux.get(i, j)
            - diff.get(i, j)
            - setup.heating.get(i, j)
            - setup.boundary.get(i, j)
    })
}

fn heat_scale(problem: &Problem, v: &Field<Vector>, w_prev: &Field<f64>, w: &Field<f64>, theta: &Field<f64>, setup: &HeatSetup, tau: f64) -> f64 {
    let g = &problem.grid;
    let ws = w.clone().synced(g, Reflection::Even);
    (w.norm() + w_prev.norm()) / tau
        + upwind_scalar_flux_div(g, v, &ws).norm()
        + diffusion(g, &setup.kf, theta).norm()
        + setup.heating.norm()
        + setup.boundary.norm()
}

/// Relative residual of the enthalpy equation together with the
/// consistency of `(w, θ, χ)` with the phase relation.
#[allow(clippy::too_many_arguments)]
pub(super) fn heat_relative_residual(
    problem: &Problem,
    v: &Field<Vector>,
    w_prev: &Field<f64>,
    w: &Field<f64>,
    theta: &Field<f64>,
    chi: &Field<f64>,
    setup: &HeatSetup,
    tau: f64,
) -> f64 {
    let g = &problem.grid;
    let r = heat_residual(problem, v, w_prev, w, theta, setup, tau).norm();
    let scale = heat_scale(problem, v, w_prev, w, theta, setup, tau);
    let mut consistency = 0.0_f64;
    for (i, j) in g.cells() {
        let cell = setup.cell(problem, i, j);
        let t = theta.get(i, j);
        let wc = w.get(i, j);
        if t == 0.0 && wc < cell.w_of(0.0) {
            continue;
        }
        let dw = (cell.w_of(t) - wc).abs() / wc.abs().max(f64::MIN_POSITIVE);
        let dc = (cell.chi(t) - chi.get(i, j)).abs();
        consistency = consistency.max(dw).max(dc);
    }
    let rel = if r == 0.0 { 0.0 } else { r / scale.max(f64::MIN_POSITIVE) };
    rel.max(consistency)
}

/// Newton iteration on the enthalpy with a backtracking line search.
pub fn heat_solve(
    problem: &Problem,
    v: &Field<Vector>,
    w_prev: &Field<f64>,
    w_guess: &Field<f64>,
    setup: &HeatSetup,
    tau: f64,
) -> HeatResult {
    let g = &problem.grid;
    let d = g.dim();
    let tol = 0.1 * problem.solver.outer_tol.min(1e-10);
    let mut w = w_guess.clone().synced(g, Reflection::Even);
    let (mut theta, mut chi, mut under) = invert_all(problem, setup, &w);
    let mut r = heat_residual(problem, v, w_prev, &w, &theta, setup, tau);
    let mut converged = false;
    for _ in 0..problem.solver.max_newton {
        let rn = r.norm();
        let scale = heat_scale(problem, v, w_prev, &w, &theta, setup, tau);
        if rn <= tol * scale {
            converged = true;
            break;
        }
        let slope = Field::from_fn(g, |i, j| 1.0 / setup.cell(problem, i, j).dw(theta.get(i, j))).synced(g, Reflection::Even);
        let diag = Field::from_fn(g, |i, j| {
            let mut s = 1.0 / tau;
            let vc = v.get(i, j);
            for a in 0..d {
                let h = g.h(a);
                s += vc.get(a).abs() / h;
                s += (setup.kf.up[a].get(i, j) + setup.kf.up[a].shifted(i, j, a, -1)) * slope.get(i, j) / (h * h);
            }
            1.0 / s
        });
        let op = |x: &Field<f64>| {
            let xs = x.clone().synced(g, Reflection::Even);
            let t = xs.zip_all(&slope, |a, b| a * b);
            let adv = upwind_scalar_flux_div(g, v, &xs);
            let diff = diffusion(g, &setup.kf, &t);
            Field::from_fn(g, |i, j| xs.get(i, j) / tau + adv.get(i, j) - diff.get(i, j))
        };
        let pre = |x: &Field<f64>| x.zip(g, &diag, |a, b| a * b);
        let (delta, _) = bicgstab(op, pre, &r.scaled(-1.0), Field::filled(g, 0.0), 1e-3 * tol, problem.solver.max_linear);
        let mut lambda = 1.0;
        loop {
            let mut trial = w.clone();
            trial.axpy(lambda, &delta);
            let trial = trial.synced(g, Reflection::Even);
            let (t2, c2, u2) = invert_all(problem, setup, &trial);
            let r2 = heat_residual(problem, v, w_prev, &trial, &t2, setup, tau);
            if r2.norm() < (1.0 - 1e-4 * lambda) * rn || lambda < 1e-3 {
                w = trial;
                theta = t2;
                chi = c2;
                under = u2;
                r = r2;
                break;
            }
            lambda *= 0.5;
        }
    }
    if !converged {
        let scale = heat_scale(problem, v, w_prev, &w, &theta, setup, tau);
        converged = r.norm() <= tol * scale;
    }
    HeatResult { w, theta, chi, underflow: under, converged }
}
