//! Second-order tensor algebra in one, two or three dimensions.
//!
//! Symmetric tensors keep only their upper triangle, so symmetry is a
//! property of the storage. Deviatoric tensors are symmetric tensors that
//! were projected onto the trace-free subspace when they were built.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Returns true when `d` is a supported spatial dimension.
pub fn valid_dim(d: usize) -> bool {
    (1..=MAX_DIM).contains(&d)
}

fn assert_dim(d: usize) {
    assert!(valid_dim(d), "tensor dimension {d} outside 1..=3");
}

/// Number of packed entries of a symmetric d×d tensor.
pub const fn packed_len(d: usize) -> usize {
    d * (d + 1) / 2
}

#[inline]
fn packed_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    if i == j {
        i
    } else {
        d + i * (2 * d - i - 1) / 2 + (j - i - 1)
    }
}

/// A spatial vector with `d` active components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector {
    d: usize,
    c: [f64; MAX_DIM],
}

impl Vector {
    pub fn zeros(d: usize) -> Self {
        assert_dim(d);
        Self { d, c: [0.0; MAX_DIM] }
    }

    pub fn from_slice(d: usize, xs: &[f64]) -> Self {
        assert_dim(d);
        assert_eq!(xs.len(), d, "vector needs {d} components");
        let mut c = [0.0; MAX_DIM];
        c[..d].copy_from_slice(xs);
        Self { d, c }
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        assert_dim(d);
        let mut c = [0.0; MAX_DIM];
        for (i, ci) in c.iter_mut().enumerate().take(d) {
            *ci = f(i);
        }
        Self { d, c }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(i < self.d);
        self.c[i] = value;
    }

    pub fn dot(&self, o: &Vector) -> f64 {
        (0..self.d).map(|i| self.c[i] * o.c[i]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn components(&self) -> &[f64] {
        &self.c[..self.d]
    }

    /// Outer product `self ⊗ o`.
    pub fn outer(&self, o: &Vector) -> Tensor2 {
        Tensor2::from_fn(self.d, |i, j| self.c[i] * o.c[j])
    }

    /// Mirror image across the plane normal to `axis`.
    pub fn mirrored(&self, axis: usize) -> Self {
        let mut out = *self;
        if axis < self.d {
            out.c[axis] = -out.c[axis];
        }
        out
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(mut self, o: Vector) -> Vector {
        for i in 0..MAX_DIM {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(mut self, o: Vector) -> Vector {
        for i in 0..MAX_DIM {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(mut self, s: f64) -> Vector {
        for x in self.c.iter_mut() {
            *x *= s;
        }
        self
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self * -1.0
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, o: Vector) {
        *self = *self + o;
    }
}

impl SubAssign for Vector {
    fn sub_assign(&mut self, o: Vector) {
        *self = *self - o;
    }
}

/// A general d×d tensor, used for velocity gradients and skew parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tensor2 {
    d: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Tensor2 {
    pub fn zeros(d: usize) -> Self {
        assert_dim(d);
        Self { d, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                t.m[i][j] = f(i, j);
            }
        }
        t
    }

    /// Builds a tensor from row-major rows; panics on ragged input.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        for r in rows {
            assert_eq!(r.len(), d, "rows must form a square matrix");
        }
        Self::from_fn(d, |i, j| rows[i][j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.m[i][j] = value;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.d, |i, j| self.m[j][i])
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.m[i][i]).sum()
    }

    /// Frobenius contraction `A : B`.
    pub fn ddot(&self, o: &Tensor2) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn matmul(&self, o: &Tensor2) -> Tensor2 {
        debug_assert_eq!(self.d, o.d);
        Tensor2::from_fn(self.d, |i, j| (0..self.d).map(|k| self.m[i][k] * o.m[k][j]).sum())
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        Vector::from_fn(self.d, |i| (0..self.d).map(|j| self.m[i][j] * v.get(j)).sum())
    }

    /// Symmetric part `(A + Aᵀ)/2`.
    pub fn sym(&self) -> SymTensor2 {
        SymTensor2::from_fn(self.d, |i, j| 0.5 * (self.m[i][j] + self.m[j][i]))
    }

    /// Skew part `(A − Aᵀ)/2`.
    pub fn skew(&self) -> Tensor2 {
        Tensor2::from_fn(self.d, |i, j| 0.5 * (self.m[i][j] - self.m[j][i]))
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                m = m.max(self.m[i][j].abs());
            }
        }
        m
    }

    pub fn mirrored(&self, axis: usize) -> Self {
        Self::from_fn(self.d, |i, j| {
            let flips = usize::from(i == axis) + usize::from(j == axis);
            if flips % 2 == 1 {
                -self.m[i][j]
            } else {
                self.m[i][j]
            }
        })
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(mut self, o: Tensor2) -> Tensor2 {
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                self.m[i][j] += o.m[i][j];
            }
        }
        self
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(mut self, o: Tensor2) -> Tensor2 {
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                self.m[i][j] -= o.m[i][j];
            }
        }
        self
    }
}

impl Mul<f64> for Tensor2 {
    type Output = Tensor2;
    fn mul(mut self, s: f64) -> Tensor2 {
        for row in self.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= s;
            }
        }
        self
    }
}

impl Neg for Tensor2 {
    type Output = Tensor2;
    fn neg(self) -> Tensor2 {
        self * -1.0
    }
}

/// Splits `A` into its symmetric and skew-symmetric parts.
pub fn sym_skew(a: &Tensor2) -> (SymTensor2, Tensor2) {
    (a.sym(), a.skew())
}

/// Splits `A` into its spherical part `(tr A / d) I` and the deviatoric rest.
pub fn sph_dev(a: &Tensor2) -> (Tensor2, Tensor2) {
    let d = a.dim();
    let sph = Tensor2::identity(d) * (a.trace() / d as f64);
    (sph, *a - sph)
}

/// Checks `A:(BC) = (BᵀA):C = (ACᵀ):B` to 1e-12 relative.
pub fn triple_product_identity_check(a: &Tensor2, b: &Tensor2, c: &Tensor2) -> bool {
    let x = a.ddot(&b.matmul(c));
    let y = b.transpose().matmul(a).ddot(c);
    let z = a.matmul(&c.transpose()).ddot(b);
    let scale = a.norm() * b.norm() * c.norm();
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    (x - y).abs() <= tol && (x - z).abs() <= tol
}

/// A symmetric d×d tensor in packed storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor2 {
    d: usize,
    p: [f64; 6],
}

impl SymTensor2 {
    pub fn zeros(d: usize) -> Self {
        assert_dim(d);
        Self { d, p: [0.0; 6] }
    }

    pub fn identity(d: usize) -> Self {
        Self::from_fn(d, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    /// Builds from the upper triangle of `f(i, j)`.
    pub fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(d);
        for i in 0..d {
            for j in i..d {
                s.p[packed_index(d, i, j)] = f(i, j);
            }
        }
        s
    }

    /// Builds from packed entries: diagonal first, then the upper off-diagonals row by row.
    pub fn from_packed(d: usize, packed: &[f64]) -> Self {
        assert_dim(d);
        assert_eq!(packed.len(), packed_len(d));
        let mut p = [0.0; 6];
        p[..packed.len()].copy_from_slice(packed);
        Self { d, p }
    }

    pub fn packed(&self) -> &[f64] {
        &self.p[..packed_len(self.d)]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[packed_index(self.d, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.p[packed_index(self.d, i, j)] = value;
    }

    pub fn to_tensor(&self) -> Tensor2 {
        Tensor2::from_fn(self.d, |i, j| self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        self.p[..self.d].iter().sum()
    }

    /// Frobenius contraction with another symmetric tensor.
    pub fn ddot(&self, o: &SymTensor2) -> f64 {
        let d = self.d;
        let mut s = 0.0;
        for k in 0..d {
            s += self.p[k] * o.p[k];
        }
        for k in d..packed_len(d) {
            s += 2.0 * self.p[k] * o.p[k];
        }
        s
    }

    pub fn ddot_full(&self, o: &Tensor2) -> f64 {
        self.to_tensor().ddot(o)
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sph(&self) -> SymTensor2 {
        SymTensor2::identity(self.d) * (self.trace() / self.d as f64)
    }

    pub fn dev(&self) -> SymTensor2 {
        *self - self.sph()
    }

    pub fn matmul(&self, o: &SymTensor2) -> Tensor2 {
        self.to_tensor().matmul(&o.to_tensor())
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        Vector::from_fn(self.d, |i| (0..self.d).map(|j| self.get(i, j) * v.get(j)).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.packed().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.packed().iter().all(|x| x.is_finite())
    }

    pub fn mirrored(&self, axis: usize) -> Self {
        let mut out = *self;
        for i in 0..self.d {
            for j in i + 1..self.d {
                if (i == axis) != (j == axis) {
                    out.set(i, j, -self.get(i, j));
                }
            }
        }
        out
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(mut self, o: SymTensor2) -> SymTensor2 {
        debug_assert_eq!(self.d, o.d);
        for k in 0..6 {
            self.p[k] += o.p[k];
        }
        self
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(mut self, o: SymTensor2) -> SymTensor2 {
        debug_assert_eq!(self.d, o.d);
        for k in 0..6 {
            self.p[k] -= o.p[k];
        }
        self
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = SymTensor2;
    fn mul(mut self, s: f64) -> SymTensor2 {
        for x in self.p.iter_mut() {
            *x *= s;
        }
        self
    }
}

impl Neg for SymTensor2 {
    type Output = SymTensor2;
    fn neg(self) -> SymTensor2 {
        self * -1.0
    }
}

impl AddAssign for SymTensor2 {
    fn add_assign(&mut self, o: SymTensor2) {
        *self = *self + o;
    }
}

/// A symmetric trace-free tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DevTensor2(SymTensor2);

impl DevTensor2 {
    pub fn zeros(d: usize) -> Self {
        Self(SymTensor2::zeros(d))
    }

    /// Projects onto the deviatoric subspace.
    pub fn new(s: SymTensor2) -> Self {
        let out = s.dev();
        debug_assert!(
            out.trace().abs() <= 1e-14 * out.norm().max(s.norm()).max(1e-300) * 10.0,
            "deviatoric projection lost accuracy"
        );
        Self(out)
    }

    pub fn as_sym(&self) -> &SymTensor2 {
        &self.0
    }

    pub fn into_sym(self) -> SymTensor2 {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn ddot(&self, o: &DevTensor2) -> f64 {
        self.0.ddot(&o.0)
    }

    pub fn mirrored(&self, axis: usize) -> Self {
        Self(self.0.mirrored(axis))
    }
}

impl Add for DevTensor2 {
    type Output = DevTensor2;
    fn add(self, o: DevTensor2) -> DevTensor2 {
        DevTensor2(self.0 + o.0)
    }
}

impl Sub for DevTensor2 {
    type Output = DevTensor2;
    fn sub(self, o: DevTensor2) -> DevTensor2 {
        DevTensor2(self.0 - o.0)
    }
}

impl Mul<f64> for DevTensor2 {
    type Output = DevTensor2;
    fn mul(self, s: f64) -> DevTensor2 {
        DevTensor2(self.0 * s)
    }
}

impl Neg for DevTensor2 {
    type Output = DevTensor2;
    fn neg(self) -> DevTensor2 {
        DevTensor2(-self.0)
    }
}

/// Spatial gradient of a symmetric tensor field at one point: `g[k] = ∂_k E`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymGrad {
    d: usize,
    g: [SymTensor2; MAX_DIM],
}

impl SymGrad {
    pub fn zeros(d: usize) -> Self {
        Self { d, g: [SymTensor2::zeros(d); MAX_DIM] }
    }

    pub fn from_fn(d: usize, mut f: impl FnMut(usize) -> SymTensor2) -> Self {
        let mut out = Self::zeros(d);
        for k in 0..d {
            out.g[k] = f(k);
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn axis(&self, k: usize) -> &SymTensor2 {
        &self.g[k]
    }

    /// Directional derivative `(v·∇)E`.
    pub fn along(&self, v: &Vector) -> SymTensor2 {
        let mut out = SymTensor2::zeros(self.d);
        for k in 0..self.d {
            out += self.g[k] * v.get(k);
        }
        out
    }

    /// Full contraction with another gradient of the same shape.
    pub fn dot(&self, o: &SymGrad) -> f64 {
        (0..self.d).map(|k| self.g[k].ddot(&o.g[k])).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn mirrored(&self, axis: usize) -> Self {
        let mut out = *self;
        for k in 0..self.d {
            let m = self.g[k].mirrored(axis);
            out.g[k] = if k == axis { -m } else { m };
        }
        out
    }
}

impl Add for SymGrad {
    type Output = SymGrad;
    fn add(mut self, o: SymGrad) -> SymGrad {
        for k in 0..MAX_DIM {
            self.g[k] = self.g[k] + o.g[k];
        }
        self
    }
}

impl Sub for SymGrad {
    type Output = SymGrad;
    fn sub(mut self, o: SymGrad) -> SymGrad {
        for k in 0..MAX_DIM {
            self.g[k] = self.g[k] - o.g[k];
        }
        self
    }
}

impl Mul<f64> for SymGrad {
    type Output = SymGrad;
    fn mul(mut self, s: f64) -> SymGrad {
        for k in 0..MAX_DIM {
            self.g[k] = self.g[k] * s;
        }
        self
    }
}

/// Corotational right-hand side `adv − W E + E W` with `W = skew(∇v)`.
///
/// Only the upper triangle is assembled, so the result is symmetric
/// by construction.
pub fn zj_rhs(grad_v: &Tensor2, adv: &SymTensor2, e: &SymTensor2) -> SymTensor2 {
    let d = e.dim();
    let w = grad_v.skew();
    let mut out = *adv;
    for i in 0..d {
        for j in i..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += e.get(i, k) * w.get(k, j) - w.get(i, k) * e.get(k, j);
            }
            out.set(i, j, out.get(i, j) + acc);
        }
    }
    out
}

/// The transport operator `B(v, E) = (v·∇)E − W E + E W`.
pub fn bzj_operator(v: &Vector, grad_v: &Tensor2, grad_e: &SymGrad, e: &SymTensor2) -> SymTensor2 {
    zj_rhs(grad_v, &grad_e.along(v), e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, d: usize) -> Tensor2 {
        Tensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn packed_layout_is_contiguous() {
        for d in 1..=3 {
            let mut seen = vec![false; packed_len(d)];
            for i in 0..d {
                for j in i..d {
                    let k = packed_index(d, i, j);
                    assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            assert!(seen.iter().all(|s| *s));
        }
    }

    #[test]
    fn sym_skew_of_shift_matrix() {
        let a = Tensor2::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let (s, w) = sym_skew(&a);
        assert_eq!(s.to_tensor(), Tensor2::from_rows(&[&[0.0, 0.5], &[0.5, 0.0]]));
        assert_eq!(w, Tensor2::from_rows(&[&[0.0, 0.5], &[-0.5, 0.0]]));
    }

    #[test]
    fn sym_skew_trivial_cases() {
        let (s, w) = sym_skew(&Tensor2::identity(3));
        assert_eq!(s, SymTensor2::identity(3));
        assert_eq!(w, Tensor2::zeros(3));
        let a = Tensor2::from_rows(&[&[1.0, 4.0], &[4.0, -2.0]]);
        let (s, w) = sym_skew(&a);
        assert_eq!(s.to_tensor(), a);
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn sph_dev_example() {
        let a = Tensor2::from_rows(&[&[1.0, 2.0], &[2.0, 3.0]]);
        let (sph, dev) = sph_dev(&a);
        assert_eq!(sph, Tensor2::identity(2) * 2.0);
        assert_eq!(dev, Tensor2::from_rows(&[&[-1.0, 2.0], &[2.0, 1.0]]));
        let (sph, dev) = sph_dev(&(Tensor2::identity(3) * 1.5));
        assert_eq!(sph, Tensor2::identity(3) * 1.5);
        assert_eq!(dev.max_abs(), 0.0);
    }

    #[test]
    fn sph_dev_is_orthogonal_and_trace_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 0..1000 {
            let d = 1 + n % 3;
            let a = random_tensor(&mut rng, d);
            let (sph, dev) = sph_dev(&a);
            assert!(dev.trace().abs() < 1e-14);
            assert!(sph.ddot(&dev).abs() < 1e-14);
            let lhs = a.ddot(&a);
            let rhs = sph.ddot(&sph) + dev.ddot(&dev);
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300));
        }
    }

    #[test]
    fn triple_product_identity() {
        let i = Tensor2::identity(2);
        assert!(triple_product_identity_check(&i, &i, &i));
        assert_eq!(i.ddot(&i.matmul(&i)), 2.0);
        assert!(triple_product_identity_check(&Tensor2::zeros(2), &i, &i));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 0..200 {
            let d = 2 + n % 2;
            let (a, b, c) = (random_tensor(&mut rng, d), random_tensor(&mut rng, d), random_tensor(&mut rng, d));
            // index-by-index evaluation of A:(BC)
            let mut brute = 0.0;
            for p in 0..d {
                for q in 0..d {
                    for r in 0..d {
                        brute += a.get(p, q) * b.get(p, r) * c.get(r, q);
                    }
                }
            }
            assert!((brute - a.ddot(&b.matmul(&c))).abs() < 1e-12);
            assert!(triple_product_identity_check(&a, &b, &c));
        }
    }

    #[test]
    fn zj_rhs_rotation_example() {
        let omega = 0.7;
        let grad_v = Tensor2::from_rows(&[&[0.0, -omega], &[omega, 0.0]]);
        let e = SymTensor2::from_fn(2, |i, j| if i != j { 0.0 } else if i == 0 { 1.0 } else { -1.0 });
        let out = zj_rhs(&grad_v, &SymTensor2::zeros(2), &e);
        let expect = Tensor2::from_rows(&[&[0.0, -1.0], &[-1.0, 0.0]]) * (2.0 * omega);
        assert!((out.to_tensor() - expect).max_abs() < 1e-15);
    }

    #[test]
    fn zj_rhs_trivial_cases() {
        let z = zj_rhs(&Tensor2::zeros(2), &SymTensor2::zeros(2), &SymTensor2::identity(2));
        assert_eq!(z.max_abs(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_tensor(&mut rng, 3);
        let adv = SymTensor2::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
        let out = zj_rhs(&g, &adv, &(SymTensor2::identity(3) * -2.5));
        assert!((out - adv).max_abs() < 1e-15);
    }

    #[test]
    fn zj_rhs_preserves_symmetry_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 0..500 {
            let d = 1 + n % 3;
            let g = random_tensor(&mut rng, d);
            let e = SymTensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)).dev();
            let adv = SymTensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let full = adv.to_tensor() - g.skew().matmul(&e.to_tensor()) + e.to_tensor().matmul(&g.skew());
            assert!(full.skew().max_abs() < 1e-14);
            let out = zj_rhs(&g, &adv, &e);
            assert!((out.to_tensor() - full).max_abs() < 1e-14);
            assert!((out.trace() - adv.trace()).abs() < 1e-14);
            let out0 = zj_rhs(&g, &adv.dev(), &e);
            assert!(out0.trace().abs() < 1e-14);
        }
    }

    #[test]
    fn corotational_terms_vanish_against_commuting_stress() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 0..300 {
            let d = 2 + n % 2;
            let e = SymTensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let (a0, a1, a2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let e2 = e.matmul(&e).sym();
            let s = SymTensor2::identity(d) * a0 + e * a1 + e2 * a2;
            let w = random_tensor(&mut rng, d).skew();
            let term = w.matmul(&s.to_tensor()) + s.to_tensor().matmul(&w.transpose());
            assert!(e.ddot_full(&term).abs() < 1e-12);
        }
    }

    #[test]
    fn bzj_matches_zj_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let d = 2;
            let v = Vector::from_fn(d, |_| rng.gen_range(-1.0..1.0));
            let g = random_tensor(&mut rng, d);
            let e = SymTensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let ge = SymGrad::from_fn(d, |_| SymTensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0)));
            let mut adv = SymTensor2::zeros(d);
            for i in 0..d {
                for j in i..d {
                    adv.set(i, j, v.get(0) * ge.axis(0).get(i, j) + v.get(1) * ge.axis(1).get(i, j));
                }
            }
            let a = bzj_operator(&v, &g, &ge, &e);
            let b = zj_rhs(&g, &adv, &e);
            assert!((a - b).max_abs() < 1e-15);
        }
        let z = bzj_operator(&Vector::zeros(2), &Tensor2::zeros(2), &SymGrad::zeros(2), &SymTensor2::identity(2));
        assert_eq!(z.max_abs(), 0.0);
        let u = Vector::from_slice(2, &[0.3, -1.0]);
        let z = bzj_operator(&u, &Tensor2::zeros(2), &SymGrad::zeros(2), &SymTensor2::identity(2));
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn deviatoric_projection_is_trace_free() {
        let s = SymTensor2::from_fn(3, |i, j| (i + 2 * j) as f64 + 0.25);
        let dv = DevTensor2::new(s);
        assert!(dv.trace().abs() < 1e-14);
    }

    #[test]
    fn mirror_is_involution() {
        let s = SymTensor2::from_fn(2, |i, j| 1.0 + i as f64 + 3.0 * j as f64);
        for axis in 0..2 {
            assert_eq!(s.mirrored(axis).mirrored(axis), s);
            assert_eq!(s.mirrored(axis).get(0, 1), -s.get(0, 1));
        }
        let g = SymGrad::from_fn(2, |k| s * (k as f64 + 1.0));
        assert_eq!(g.mirrored(1).mirrored(1), g);
        assert_eq!(g.mirrored(0).axis(0).get(0, 0), -g.axis(0).get(0, 0));
        assert_eq!(g.mirrored(0).axis(1).get(0, 0), g.axis(1).get(0, 0));
    }
}
