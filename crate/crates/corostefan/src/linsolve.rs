//! Matrix-free Krylov solvers on grid fields.
//!
//! Operators and preconditioners are closures; they receive fields whose
//! ghosts are stale and must sync them before applying stencils.

use crate::grid::{Field, FieldValue};

/// Outcome of a linear solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual norm relative to the right-hand side.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for symmetric positive definite operators.
pub fn cg<V: FieldValue>(
    mut apply: impl FnMut(&Field<V>) -> Field<V>,
    mut precond: impl FnMut(&Field<V>) -> Field<V>,
    b: &Field<V>,
    x0: Field<V>,
    tol: f64,
    max_iter: usize,
) -> (Field<V>, SolveStats) {
    let bnorm = b.norm();
    let mut x = x0;
    if bnorm == 0.0 {
        let zero = b.scaled(0.0);
        return (zero, SolveStats { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = b.lincomb(1.0, -1.0, &apply(&x));
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut rel = r.norm() / bnorm;
    let mut it = 0;
    while rel > tol && it < max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            break;
        }
        let a = rz / pap;
        x.axpy(a, &p);
        r.axpy(-a, &ap);
        rel = r.norm() / bnorm;
        it += 1;
        if rel <= tol {
            break;
        }
        z = precond(&r);
        let rz_new = r.dot(&z);
        p = z.lincomb(1.0, rz_new / rz, &p);
        rz = rz_new;
    }
    (x, SolveStats { iterations: it, relative_residual: rel, converged: rel <= tol })
}

/// Right-preconditioned BiCGSTAB for general nonsingular operators.
pub fn bicgstab<V: FieldValue>(
    mut apply: impl FnMut(&Field<V>) -> Field<V>,
    mut precond: impl FnMut(&Field<V>) -> Field<V>,
    b: &Field<V>,
    x0: Field<V>,
    tol: f64,
    max_iter: usize,
) -> (Field<V>, SolveStats) {
    let bnorm = b.norm();
    let mut x = x0;
    if bnorm == 0.0 {
        let zero = b.scaled(0.0);
        return (zero, SolveStats { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = b.lincomb(1.0, -1.0, &apply(&x));
    let mut rel = r.norm() / bnorm;
    let mut it = 0;
    let mut restarts = 0;
    'outer: while rel > tol && it < max_iter {
        let r_hat = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = r.scaled(0.0);
        let mut p = r.scaled(0.0);
        while it < max_iter {
            let rho_new = r_hat.dot(&r);
            if rho_new.abs() < 1e-300 {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            // p = r + beta (p - omega v)
            let pv = p.lincomb(1.0, -omega, &v);
            p = r.lincomb(1.0, beta, &pv);
            let p_hat = precond(&p);
            v = apply(&p_hat);
            let denom = r_hat.dot(&v);
            if denom.abs() < 1e-300 {
                break;
            }
            alpha = rho / denom;
            let s = r.lincomb(1.0, -alpha, &v);
            it += 1;
            if s.norm() / bnorm <= tol {
                x.axpy(alpha, &p_hat);
                r = s;
                rel = r.norm() / bnorm;
                break 'outer;
            }
            let s_hat = precond(&s);
            let t = apply(&s_hat);
            let tt = t.dot(&t);
            omega = if tt > 0.0 { t.dot(&s) / tt } else { 0.0 };
            x.axpy(alpha, &p_hat);
            x.axpy(omega, &s_hat);
            r = s.lincomb(1.0, -omega, &t);
            rel = r.norm() / bnorm;
            if rel <= tol {
                break 'outer;
            }
            if omega == 0.0 {
                break;
            }
        }
        // breakdown: restart from the true residual
        restarts += 1;
        if restarts > 20 {
            break;
        }
        r = b.lincomb(1.0, -1.0, &apply(&x));
        rel = r.norm() / bnorm;
    }
    (x, SolveStats { iterations: it, relative_residual: rel, converged: rel <= tol })
}
