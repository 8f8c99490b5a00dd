//! Eulerian thermomechanical Stefan model: viscoelastic solid/fluid with
//! corotational strain transport, Jeffreys creep, phase-field damage and a
//! relaxed enthalpy phase transition, advanced by an implicit regularized
//! time discretization whose steps are audited against discrete energy
//! inequalities.

pub mod audit;
pub mod config;
pub mod grid;
pub mod linsolve;
pub mod materials;
pub mod run;
pub mod scenarios;
pub mod stepper;
pub mod tensors;
