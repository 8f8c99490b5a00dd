//! Implicit corotational transport of symmetric tensor fields.
//!
//! Solves `X/τ + (v·∇)X − W X + X W + m dev X = rhs` for a frozen velocity.
//! The same operator (without `m`) integrates the plastic strain from the
//! creep rate.

use crate::grid::ops::grad_vector;
use crate::grid::{Field, Grid, Reflection};
use crate::linsolve::{bicgstab, SolveStats};
use crate::tensors::{packed_len, zj_rhs, DevTensor2, SymTensor2, Tensor2, Vector};

/// Outcome of a transport solve.
#[derive(Clone, Debug)]
pub struct TransportResult {
    /// Solution, synced with mirror ghosts.
    pub x: Field<SymTensor2>,
    pub stats: SolveStats,
}

/// Applies the transport operator to a field with stale ghosts.
pub(super) fn apply_transport(
    grid: &Grid,
    v: &Field<Vector>,
    grad_v: &Field<Tensor2>,
    m: Option<&Field<f64>>,
    tau: f64,
    x: &Field<SymTensor2>,
) -> Field<SymTensor2> {
    let xs = x.clone().synced(grid, Reflection::Mirror);
    let d = grid.dim();
    Field::from_fn(grid, |i, j| {
        let c = xs.get(i, j);
        let vc = v.get(i, j);
        let mut adv = SymTensor2::zeros(d);
        for b in 0..d {
            let diff = (xs.shifted(i, j, b, 1) - xs.shifted(i, j, b, -1)) * (0.5 / grid.h(b));
            adv += diff * vc.get(b);
        }
        let mut out = c * (1.0 / tau) + zj_rhs(&grad_v.get(i, j), &adv, &c);
        if let Some(m) = m {
            out += c.dev() * m.get(i, j);
        }
        out
    })
}

/// Dense solve of a small system by Gaussian elimination with partial pivoting.
pub(super) fn solve_small(n: usize, mut a: [[f64; 6]; 6], mut b: [f64; 6]) -> [f64; 6] {
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap_or(col);
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        if p == 0.0 {
            continue;
        }
        for r in col + 1..n {
            let f = a[r][col] / p;
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = [0.0; 6];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = if a[r][r] != 0.0 { (b[r] - s) / a[r][r] } else { 0.0 };
    }
    x
}

/// Cellwise matrices of the local part `X/τ − W X + X W + m dev X` in packed coordinates.
fn local_blocks(grid: &Grid, grad_v: &Field<Tensor2>, m: Option<&Field<f64>>, tau: f64) -> Vec<[[f64; 6]; 6]> {
    let d = grid.dim();
    let n = packed_len(d);
    let zero = SymTensor2::zeros(d);
    grid.cells()
        .map(|(i, j)| {
            let gv = grad_v.get(i, j);
            let mm = m.map_or(0.0, |m| m.get(i, j));
            let mut a = [[0.0; 6]; 6];
            for k in 0..n {
                let mut unit = [0.0; 6];
                unit[k] = 1.0;
                let e = SymTensor2::from_packed(d, &unit[..n]);
                let col = e * (1.0 / tau) + zj_rhs(&gv, &zero, &e) + e.dev() * mm;
                for (r, val) in col.packed().iter().enumerate() {
                    a[r][k] = *val;
                }
            }
            a
        })
        .collect()
}

/// Solves the transport equation with right-hand side `rhs` starting from `guess`.
#[allow(clippy::too_many_arguments)]
pub fn transport_step(
    grid: &Grid,
    v: &Field<Vector>,
    rhs: &Field<SymTensor2>,
    m: Option<&Field<f64>>,
    tau: f64,
    guess: Field<SymTensor2>,
    tol: f64,
    max_iter: usize,
) -> TransportResult {
    let d = grid.dim();
    let n = packed_len(d);
    let grad_v = grad_vector(grid, v);
    let blocks = local_blocks(grid, &grad_v, m, tau);
    let nx = grid.n(0);
    let precond = |r: &Field<SymTensor2>| {
        Field::from_fn(grid, |i, j| {
            let mut b = [0.0; 6];
            b[..n].copy_from_slice(r.get(i, j).packed());
            let x = solve_small(n, blocks[j * nx + i], b);
            SymTensor2::from_packed(d, &x[..n])
        })
    };
    let op = |x: &Field<SymTensor2>| apply_transport(grid, v, &grad_v, m, tau, x);
    let (x, stats) = bicgstab(op, precond, rhs, guess, tol, max_iter);
    TransportResult { x: x.synced(grid, Reflection::Mirror), stats }
}

/// One step of the plastic strain `P`, solving `(P − P⁻)/τ + (v·∇)P − W P + P W = Π`.
///
/// Returns the new plastic strain and the largest trace before the final
/// deviatoric projection.
pub fn reconstruct_p(
    grid: &Grid,
    v: &Field<Vector>,
    p_prev: &Field<DevTensor2>,
    pi: &Field<DevTensor2>,
    tau: f64,
    tol: f64,
) -> (Field<DevTensor2>, f64, SolveStats) {
    let rhs = Field::from_fn(grid, |i, j| *p_prev.get(i, j).as_sym() * (1.0 / tau) + *pi.get(i, j).as_sym());
    let guess = p_prev.map_all(|p| p.into_sym());
    let res = transport_step(grid, v, &rhs, None, tau, guess, tol, 10_000);
    let max_trace = res.x.max_of(|x| x.trace().abs());
    let p = res.x.map_all(DevTensor2::new);
    (p, max_trace, res.stats)
}
