//! Structured collocated grids in one and two dimensions, field containers
//! with a ghost layer of width two, and boundary handling.
//!
//! Wall boundaries are symmetry planes: ghost values are mirror images of
//! the interior, so every centered stencil sees the same data it would see
//! on a periodic box of twice the size. This is what makes the discrete
//! summation-by-parts identities used by the energy audit exact.

pub mod io;
pub mod ops;

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensors::{DevTensor2, SymGrad, SymTensor2, Tensor2, Vector};

/// Width of the ghost layer.
pub const GHOST: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 4 cells per axis, got {0}")]
    TooFewCells(usize),
    #[error("unsupported grid dimension {0}")]
    BadDimension(usize),
    #[error("cell size must be positive")]
    BadExtent,
    #[error("axis {0}: periodic boundaries must be paired on both faces")]
    UnpairedPeriodic(usize),
    #[error("negative boundary heat flux on face {0}")]
    NegativeHeatFlux(String),
}

/// Kind of a boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceKind {
    /// Impermeable, tangentially traction-free wall.
    Wall,
    Periodic,
}

/// Boundary heat inflow on one face (W/m²), active on `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatFlux {
    pub value: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default = "infinite")]
    pub end: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

impl Default for HeatFlux {
    fn default() -> Self {
        Self { value: 0.0, start: 0.0, end: f64::INFINITY }
    }
}

impl HeatFlux {
    /// Mean flux over the step `[t0, t0 + tau]`.
    pub fn step_mean(&self, t0: f64, tau: f64) -> f64 {
        let lo = t0.max(self.start);
        let hi = (t0 + tau).min(self.end);
        if hi <= lo {
            0.0
        } else {
            self.value * (hi - lo) / tau
        }
    }
}

/// One boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceSpec {
    pub kind: FaceKind,
    #[serde(default)]
    pub heat_flux: HeatFlux,
}

impl FaceSpec {
    pub fn wall() -> Self {
        Self { kind: FaceKind::Wall, heat_flux: HeatFlux::default() }
    }

    pub fn periodic() -> Self {
        Self { kind: FaceKind::Periodic, heat_flux: HeatFlux::default() }
    }
}

/// Conditions on the low and high face of every axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    pub faces: Vec<[FaceSpec; 2]>,
}

impl BoundarySpec {
    pub fn uniform(d: usize, face: FaceSpec) -> Self {
        Self { faces: vec![[face, face]; d] }
    }

    pub fn validate(&self) -> Result<Vec<FaceKind>, GridError> {
        let mut kinds = Vec::with_capacity(self.faces.len());
        for (axis, pair) in self.faces.iter().enumerate() {
            if pair[0].kind != pair[1].kind {
                return Err(GridError::UnpairedPeriodic(axis));
            }
            for (side, f) in pair.iter().enumerate() {
                if !(f.heat_flux.value >= 0.0) {
                    return Err(GridError::NegativeHeatFlux(face_name(axis, side)));
                }
                if f.kind == FaceKind::Periodic && f.heat_flux.value != 0.0 {
                    return Err(GridError::NegativeHeatFlux(format!("{} (periodic faces carry no flux)", face_name(axis, side))));
                }
            }
            kinds.push(pair[0].kind);
        }
        Ok(kinds)
    }

    /// Heat inflow densities averaged over a step, indexed `[axis][side]`.
    pub fn step_fluxes(&self, t0: f64, tau: f64) -> Vec<[f64; 2]> {
        self.faces
            .iter()
            .map(|p| [p[0].heat_flux.step_mean(t0, tau), p[1].heat_flux.step_mean(t0, tau)])
            .collect()
    }
}

/// Name of a face such as `x-` or `y+`.
pub fn face_name(axis: usize, side: usize) -> String {
    let a = ["x", "y", "z"][axis];
    format!("{a}{}", if side == 0 { "-" } else { "+" })
}

/// A box of cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    d: usize,
    n: [usize; 2],
    h: [f64; 2],
    kinds: [FaceKind; 2],
}

impl Grid {
    /// `n` and `extent` list one entry per axis.
    pub fn new(n: &[usize], extent: &[f64], kinds: &[FaceKind]) -> Result<Self, GridError> {
        let d = n.len();
        if !(1..=2).contains(&d) || extent.len() != d || kinds.len() != d {
            return Err(GridError::BadDimension(d));
        }
        let mut nn = [1, 1];
        let mut hh = [1.0, 1.0];
        let mut kk = [FaceKind::Periodic; 2];
        for a in 0..d {
            if n[a] < 4 {
                return Err(GridError::TooFewCells(n[a]));
            }
            let h = extent[a] / n[a] as f64;
            if !(h > 0.0 && h.is_finite()) {
                return Err(GridError::BadExtent);
            }
            nn[a] = n[a];
            hh[a] = h;
            kk[a] = kinds[a];
        }
        Ok(Self { d, n: nn, h: hh, kinds: kk })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.h[axis] * self.n[axis] as f64
    }

    pub fn kind(&self, axis: usize) -> FaceKind {
        self.kinds[axis]
    }

    pub fn cell_count(&self) -> usize {
        self.n[0] * self.n[1]
    }

    /// Cell volume (length in 1D, area in 2D).
    pub fn cell_volume(&self) -> f64 {
        (0..self.d).map(|a| self.h[a]).product()
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        (0..self.d).filter(|&a| a != axis).map(|a| self.h[a]).product()
    }

    /// Cell-center coordinate along `axis`.
    pub fn center(&self, axis: usize, i: isize) -> f64 {
        (i as f64 + 0.5) * self.h[axis]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.center(0, i as isize), if self.d > 1 { self.center(1, j as isize) } else { 0.0 }]
    }

    fn ghosts(&self, axis: usize) -> usize {
        if axis < self.d {
            GHOST
        } else {
            0
        }
    }

    /// Interior cells in storage order, x fastest.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nx = self.n[0];
        (0..self.n[1]).flat_map(move |j| (0..nx).map(move |i| (i, j)))
    }
}

/// Values that can live on a grid.
pub trait FieldValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    /// Mirror image across the plane normal to `axis`.
    fn reflect(&self, axis: usize) -> Self;
    /// Euclidean inner product of the components.
    fn inner(&self, o: &Self) -> f64;
}

impl FieldValue for f64 {
    fn reflect(&self, _axis: usize) -> Self {
        *self
    }
    fn inner(&self, o: &Self) -> f64 {
        self * o
    }
}

impl FieldValue for Vector {
    fn reflect(&self, axis: usize) -> Self {
        self.mirrored(axis)
    }
    fn inner(&self, o: &Self) -> f64 {
        self.dot(o)
    }
}

impl FieldValue for Tensor2 {
    fn reflect(&self, axis: usize) -> Self {
        self.mirrored(axis)
    }
    fn inner(&self, o: &Self) -> f64 {
        self.ddot(o)
    }
}

impl FieldValue for SymTensor2 {
    fn reflect(&self, axis: usize) -> Self {
        self.mirrored(axis)
    }
    fn inner(&self, o: &Self) -> f64 {
        self.ddot(o)
    }
}

impl FieldValue for DevTensor2 {
    fn reflect(&self, axis: usize) -> Self {
        self.mirrored(axis)
    }
    fn inner(&self, o: &Self) -> f64 {
        self.ddot(o)
    }
}

impl FieldValue for SymGrad {
    fn reflect(&self, axis: usize) -> Self {
        self.mirrored(axis)
    }
    fn inner(&self, o: &Self) -> f64 {
        self.dot(o)
    }
}

/// How wall ghosts are filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reflection {
    /// Parity-aware mirror image (vectors flip their normal component).
    Mirror,
    /// Plain copy of every component (homogeneous Neumann).
    Even,
}

/// Per-cell values with a ghost layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<V> {
    nx: usize,
    ny: usize,
    gx: usize,
    gy: usize,
    data: Vec<V>,
}

impl<V: FieldValue> Field<V> {
    pub fn filled(grid: &Grid, value: V) -> Self {
        let (gx, gy) = (grid.ghosts(0), grid.ghosts(1));
        let (nx, ny) = (grid.n[0], grid.n[1]);
        Self { nx, ny, gx, gy, data: vec![value; (nx + 2 * gx) * (ny + 2 * gy)] }
    }

    /// Builds interior values from `f(i, j)`; ghosts are left as copies of the
    /// fill value and must be synced before use in a stencil.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(usize, usize) -> V) -> Self {
        let first = f(0, 0);
        let mut out = Self::filled(grid, first);
        for (i, j) in grid.cells() {
            out.set(i, j, f(i, j));
        }
        out
    }

    #[inline]
    fn idx(&self, i: isize, j: isize) -> usize {
        let row = self.nx + 2 * self.gx;
        (j + self.gy as isize) as usize * row + (i + self.gx as isize) as usize
    }

    /// Value at possibly-ghost index `(i, j)`.
    #[inline]
    pub fn at(&self, i: isize, j: isize) -> V {
        self.data[self.idx(i, j)]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> V {
        self.at(i as isize, j as isize)
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: V) {
        let k = self.idx(i as isize, j as isize);
        self.data[k] = v;
    }

    #[inline]
    pub fn set_at(&mut self, i: isize, j: isize, v: V) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Neighbor of interior cell `(i, j)` at offset `off` along `axis`.
    #[inline]
    pub fn shifted(&self, i: usize, j: usize, axis: usize, off: isize) -> V {
        if axis == 0 {
            self.at(i as isize + off, j as isize)
        } else {
            self.at(i as isize, j as isize + off)
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Interior values in storage order.
    pub fn interior(&self) -> Vec<V> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Applies `f` to every interior value.
    pub fn map<W: FieldValue>(&self, grid: &Grid, mut f: impl FnMut(V) -> W) -> Field<W> {
        Field::from_fn(grid, |i, j| f(self.get(i, j)))
    }

    /// Applies `f` to every value including ghosts. For pointwise maps that
    /// commute with reflections this yields a synced result directly.
    pub fn map_all<W: FieldValue>(&self, mut f: impl FnMut(V) -> W) -> Field<W> {
        Field { nx: self.nx, ny: self.ny, gx: self.gx, gy: self.gy, data: self.data.iter().map(|v| f(*v)).collect() }
    }

    /// Combines two fields value by value including ghosts.
    pub fn zip_all<U: FieldValue, W: FieldValue>(&self, o: &Field<U>, mut f: impl FnMut(V, U) -> W) -> Field<W> {
        let data = self.data.iter().zip(o.data.iter()).map(|(a, b)| f(*a, *b)).collect();
        Field { nx: self.nx, ny: self.ny, gx: self.gx, gy: self.gy, data }
    }

    /// Largest interior value of `f`.
    pub fn max_of(&self, mut f: impl FnMut(V) -> f64) -> f64 {
        self.interior().into_iter().map(&mut f).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Combines two fields cell by cell over the interior.
    pub fn zip<U: FieldValue, W: FieldValue>(&self, grid: &Grid, o: &Field<U>, mut f: impl FnMut(V, U) -> W) -> Field<W> {
        Field::from_fn(grid, |i, j| f(self.get(i, j), o.get(i, j)))
    }

    /// Fills ghost cells from the interior according to the grid's boundary kinds.
    pub fn sync(&mut self, grid: &Grid, rule: Reflection) {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        if self.gx > 0 {
            for j in 0..ny {
                for k in 0..GHOST as isize {
                    let (lo, hi) = match grid.kinds[0] {
                        FaceKind::Periodic => (self.at(nx - 1 - k, j), self.at(k, j)),
                        FaceKind::Wall => (reflect(self.at(k, j), 0, rule), reflect(self.at(nx - 1 - k, j), 0, rule)),
                    };
                    self.set_at(-1 - k, j, lo);
                    self.set_at(nx + k, j, hi);
                }
            }
        }
        if self.gy > 0 {
            let gx = self.gx as isize;
            for i in -gx..nx + gx {
                for k in 0..GHOST as isize {
                    let (lo, hi) = match grid.kinds[1] {
                        FaceKind::Periodic => (self.at(i, ny - 1 - k), self.at(i, k)),
                        FaceKind::Wall => (reflect(self.at(i, k), 1, rule), reflect(self.at(i, ny - 1 - k), 1, rule)),
                    };
                    self.set_at(i, -1 - k, lo);
                    self.set_at(i, ny + k, hi);
                }
            }
        }
    }

    /// Returns a synced copy.
    pub fn synced(mut self, grid: &Grid, rule: Reflection) -> Self {
        self.sync(grid, rule);
        self
    }

    /// Inner product over interior cells in fixed order (no cell volume).
    pub fn dot(&self, o: &Field<V>) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                s += self.get(i, j).inner(&o.get(i, j));
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a * x` on the interior.
    pub fn axpy(&mut self, a: f64, x: &Field<V>) {
        for j in 0..self.ny {
            for i in 0..self.nx {
                let v = self.get(i, j) + x.get(i, j) * a;
                self.set(i, j, v);
            }
        }
    }

    /// Interior-wise `a * self + b * x`.
    pub fn lincomb(&self, a: f64, b: f64, x: &Field<V>) -> Field<V> {
        let mut out = self.clone();
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.set(i, j, self.get(i, j) * a + x.get(i, j) * b);
            }
        }
        out
    }

    pub fn scaled(&self, a: f64) -> Field<V> {
        self.lincomb(a, 0.0, self)
    }
}

impl Field<f64> {
    /// Integral over the box with fixed-order summation.
    pub fn integral(&self, grid: &Grid) -> f64 {
        self.sum() * grid.cell_volume()
    }

    pub fn sum(&self) -> f64 {
        let mut s = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                s += self.get(i, j);
            }
        }
        s
    }

    pub fn min(&self) -> f64 {
        self.interior().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.interior().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
fn reflect<V: FieldValue>(v: V, axis: usize, rule: Reflection) -> V {
    match rule {
        Reflection::Mirror => v.reflect(axis),
        Reflection::Even => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box2(kind: FaceKind) -> Grid {
        Grid::new(&[6, 5], &[6.0, 5.0], &[kind, kind]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(Grid::new(&[3], &[1.0], &[FaceKind::Wall]), Err(GridError::TooFewCells(3)));
        assert!(Grid::new(&[4], &[0.0], &[FaceKind::Wall]).is_err());
        assert!(Grid::new(&[4, 4, 4], &[1.0; 3], &[FaceKind::Wall; 3]).is_err());
    }

    #[test]
    fn boundary_spec_validation() {
        let mut spec = BoundarySpec::uniform(2, FaceSpec::wall());
        assert_eq!(spec.validate().unwrap(), vec![FaceKind::Wall, FaceKind::Wall]);
        spec.faces[1][0] = FaceSpec::periodic();
        assert_eq!(spec.validate(), Err(GridError::UnpairedPeriodic(1)));
        let mut spec = BoundarySpec::uniform(1, FaceSpec::wall());
        spec.faces[0][1].heat_flux.value = -1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn heat_flux_step_mean() {
        let f = HeatFlux { value: 2.0, start: 1.0, end: 2.0 };
        assert_eq!(f.step_mean(0.0, 0.5), 0.0);
        assert_eq!(f.step_mean(0.5, 1.0), 1.0);
        assert_eq!(f.step_mean(1.2, 0.5), 2.0);
    }

    #[test]
    fn periodic_ghosts_wrap() {
        let g = box2(FaceKind::Periodic);
        let f = Field::from_fn(&g, |i, j| (10 * j + i) as f64).synced(&g, Reflection::Mirror);
        assert_eq!(f.at(-1, 0), 5.0);
        assert_eq!(f.at(-2, 2), 24.0);
        assert_eq!(f.at(6, 3), 30.0);
        assert_eq!(f.at(0, -1), 40.0);
        assert_eq!(f.at(-1, -1), 45.0);
    }

    #[test]
    fn wall_ghosts_mirror_vectors() {
        let g = box2(FaceKind::Wall);
        let f = Field::from_fn(&g, |i, j| Vector::from_slice(2, &[1.0 + i as f64, 2.0 + j as f64])).synced(&g, Reflection::Mirror);
        let ghost = f.at(-1, 2);
        assert_eq!(ghost.get(0), -1.0);
        assert_eq!(ghost.get(1), 4.0);
        // normal component interpolated to the face vanishes
        assert_eq!(0.5 * (f.at(-1, 2).get(0) + f.at(0, 2).get(0)), 0.0);
        assert_eq!(f.at(3, 5).get(1), -(2.0 + 4.0));
        assert_eq!(f.at(7, 1).get(0), -(1.0 + 4.0));
    }

    #[test]
    fn neumann_reflection_of_linear_scalar() {
        let g = box2(FaceKind::Wall);
        let f = Field::from_fn(&g, |i, _| 0.5 + 2.0 * i as f64).synced(&g, Reflection::Even);
        assert_eq!(f.at(-1, 1), f.at(0, 1));
        assert_eq!(f.at(-2, 1), f.at(1, 1));
        assert_eq!((f.at(0, 1) - f.at(-1, 1)) / g.h(0), 0.0);
    }

    #[test]
    fn one_dimensional_layout() {
        let g = Grid::new(&[5], &[1.0], &[FaceKind::Periodic]).unwrap();
        let f = Field::from_fn(&g, |i, _| i as f64).synced(&g, Reflection::Mirror);
        assert_eq!(f.at(-1, 0), 4.0);
        assert_eq!(f.at(5, 0), 0.0);
        assert_eq!(f.interior(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!((g.cell_volume() - 0.2).abs() < 1e-15);
        assert_eq!(g.face_area(0), 1.0);
    }
}
