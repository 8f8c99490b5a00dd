//! Discrete differential operators.
//!
//! Inputs must have synced ghosts; outputs carry interior values only.
//! Centered operators come in adjoint pairs: on periodic boxes and
//! mirror-walled boxes, `Σ (div X)·v = −Σ X : E(v)` and
//! `Σ (∇s)·v = −Σ s div v` hold to rounding.

use super::{Field, FieldValue, Grid};
use crate::tensors::{SymGrad, SymTensor2, Tensor2, Vector};

/// Centered difference along `axis`.
pub fn d_axis<V: FieldValue>(grid: &Grid, f: &Field<V>, axis: usize) -> Field<V> {
    let s = 0.5 / grid.h(axis);
    Field::from_fn(grid, |i, j| (f.shifted(i, j, axis, 1) - f.shifted(i, j, axis, -1)) * s)
}

#[inline]
fn dc<V: FieldValue>(grid: &Grid, f: &Field<V>, i: usize, j: usize, axis: usize) -> V {
    (f.shifted(i, j, axis, 1) - f.shifted(i, j, axis, -1)) * (0.5 / grid.h(axis))
}

/// Centered gradient of a scalar field.
pub fn gradient(grid: &Grid, f: &Field<f64>) -> Field<Vector> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| Vector::from_fn(d, |a| dc(grid, f, i, j, a)))
}

/// Velocity gradient `(∇v)_ab = ∂_b v_a`.
pub fn grad_vector(grid: &Grid, v: &Field<Vector>) -> Field<Tensor2> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let cols: Vec<Vector> = (0..d).map(|b| dc(grid, v, i, j, b)).collect();
        Tensor2::from_fn(d, |a, b| cols[b].get(a))
    })
}

/// Strain rate `sym ∇v`.
pub fn strain_rate(grid: &Grid, v: &Field<Vector>) -> Field<SymTensor2> {
    grad_vector(grid, v).map(grid, |g| g.sym())
}

/// Centered divergence of a vector field.
pub fn divergence(grid: &Grid, v: &Field<Vector>) -> Field<f64> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| (0..d).map(|a| dc(grid, v, i, j, a).get(a)).sum())
}

/// Row-wise divergence `(div X)_a = Σ_b ∂_b X_ab` of a symmetric tensor field.
pub fn div_sym(grid: &Grid, x: &Field<SymTensor2>) -> Field<Vector> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let parts: Vec<SymTensor2> = (0..d).map(|b| dc(grid, x, i, j, b)).collect();
        Vector::from_fn(d, |a| (0..d).map(|b| parts[b].get(a, b)).sum())
    })
}

/// Gradient of a symmetric tensor field, `g[k] = ∂_k E`.
pub fn grad_sym(grid: &Grid, e: &Field<SymTensor2>) -> Field<SymGrad> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| SymGrad::from_fn(d, |k| dc(grid, e, i, j, k)))
}

/// Contraction of the derivative index, `Σ_k ∂_k H[k]`.
pub fn div_symgrad(grid: &Grid, h: &Field<SymGrad>) -> Field<SymTensor2> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let mut acc = SymTensor2::zeros(d);
        for k in 0..d {
            acc += *dc(grid, h, i, j, k).axis(k);
        }
        acc
    })
}

/// Compact second-difference Laplacian.
pub fn laplacian<V: FieldValue>(grid: &Grid, f: &Field<V>) -> Field<V> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let c = f.get(i, j);
        let mut acc = c * 0.0;
        for a in 0..d {
            let h2 = grid.h(a) * grid.h(a);
            acc = acc + (f.shifted(i, j, a, 1) + f.shifted(i, j, a, -1) - c * 2.0) * (1.0 / h2);
        }
        acc
    })
}

/// One-sided difference to the upper neighbor along `axis`: the gradient on face `i+½`.
pub fn face_gradient<V: FieldValue>(grid: &Grid, f: &Field<V>, axis: usize) -> Field<V> {
    let s = 1.0 / grid.h(axis);
    Field::from_fn(grid, |i, j| (f.shifted(i, j, axis, 1) - f.get(i, j)) * s)
}

/// Divergence of face values stored at each cell's upper face, with `g` synced.
pub fn face_divergence<V: FieldValue>(grid: &Grid, g: &[Field<V>]) -> Field<V> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let mut acc = g[0].get(i, j) * 0.0;
        for (a, ga) in g.iter().enumerate().take(d) {
            acc = acc + (ga.get(i, j) - ga.shifted(i, j, a, -1)) * (1.0 / grid.h(a));
        }
        acc
    })
}

/// Cell share of `Σ_faces |∇_f u|²`: each face contributes half to each
/// neighbor, so the cell sum equals the face sum exactly.
pub fn face_energy_density<V: FieldValue>(grid: &Grid, f: &Field<V>) -> Field<f64> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let c = f.get(i, j);
        let mut acc = 0.0;
        for a in 0..d {
            let h2 = grid.h(a) * grid.h(a);
            let up = f.shifted(i, j, a, 1) - c;
            let dn = c - f.shifted(i, j, a, -1);
            acc += 0.5 * (up.inner(&up) + dn.inner(&dn)) / h2;
        }
        acc
    })
}

/// Face velocity along `axis` on the upper face of cell `(i, j)`.
#[inline]
pub fn face_velocity(v: &Field<Vector>, i: usize, j: usize, axis: usize) -> f64 {
    0.5 * (v.get(i, j).get(axis) + v.shifted(i, j, axis, 1).get(axis))
}

/// First-order upwind flux divergence `div(v s)`; fluxes telescope exactly.
pub fn upwind_scalar_flux_div(grid: &Grid, v: &Field<Vector>, s: &Field<f64>) -> Field<f64> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let mut acc = 0.0;
        for a in 0..d {
            let (ii, jj) = if a == 0 { (i as isize - 1, j as isize) } else { (i as isize, j as isize - 1) };
            let up = upwind_flux(v.get(i, j), v.shifted(i, j, a, 1), s.get(i, j), s.shifted(i, j, a, 1), a);
            let dn = upwind_flux(v.at(ii, jj), v.get(i, j), s.at(ii, jj), s.get(i, j), a);
            acc += (up - dn) / grid.h(a);
        }
        acc
    })
}

#[inline]
fn upwind_flux(vl: Vector, vr: Vector, sl: f64, sr: f64, axis: usize) -> f64 {
    let u = 0.5 * (vl.get(axis) + vr.get(axis));
    if u >= 0.0 {
        u * sl
    } else {
        u * sr
    }
}

/// Upwind convective derivative `v·∇s` with cell velocities.
pub fn upwind_convective(grid: &Grid, v: &Field<Vector>, s: &Field<f64>) -> Field<f64> {
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let vc = v.get(i, j);
        let c = s.get(i, j);
        let mut acc = 0.0;
        for a in 0..d {
            let u = vc.get(a);
            let diff = if u >= 0.0 { c - s.shifted(i, j, a, -1) } else { s.shifted(i, j, a, 1) - c };
            acc += u * diff / grid.h(a);
        }
        acc
    })
}
