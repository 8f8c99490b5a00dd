//! Breakpoint curves used for the enthalpy- and temperature-dependent moduli.

use serde::{Deserialize, Serialize};

use super::MaterialError;

/// Direction a monotone curve is required to follow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotone {
    NonDecreasing,
    NonIncreasing,
}

/// Piecewise-linear interpolant through `(x, y)` breakpoints.
///
/// Outside the first and last breakpoint the end values are held constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(points: &[[f64; 2]]) -> Result<Self, MaterialError> {
        if points.is_empty() {
            return Err(MaterialError::InvalidCurve("curve needs at least one breakpoint".into()));
        }
        for p in points {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(MaterialError::InvalidCurve(format!("non-finite breakpoint {p:?}")));
            }
        }
        for w in points.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(MaterialError::InvalidCurve(format!(
                    "breakpoint abscissae must increase strictly ({} then {})",
                    w[0][0], w[1][0]
                )));
            }
        }
        Ok(Self {
            xs: points.iter().map(|p| p[0]).collect(),
            ys: points.iter().map(|p| p[1]).collect(),
        })
    }

    pub fn constant(y: f64) -> Self {
        Self { xs: vec![0.0], ys: vec![y] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x.is_nan() {
            return x;
        }
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = self.xs.partition_point(|&xi| xi <= x) - 1;
        let t = (x - self.xs[k]) / (self.xs[k + 1] - self.xs[k]);
        self.ys[k] + t * (self.ys[k + 1] - self.ys[k])
    }

    pub fn min_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn last_value(&self) -> f64 {
        *self.ys.last().expect("curve is never empty")
    }

    pub fn first_value(&self) -> f64 {
        self.ys[0]
    }

    pub fn is_monotone(&self, dir: Monotone) -> bool {
        self.ys.windows(2).all(|w| match dir {
            Monotone::NonDecreasing => w[1] >= w[0],
            Monotone::NonIncreasing => w[1] <= w[0],
        })
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.xs.iter().zip(&self.ys).map(|(x, y)| [*x, *y]).collect()
    }
}

impl TryFrom<Vec<[f64; 2]>> for PiecewiseLinear {
    type Error = MaterialError;
    fn try_from(points: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(&points)
    }
}

impl From<PiecewiseLinear> for Vec<[f64; 2]> {
    fn from(c: PiecewiseLinear) -> Self {
        c.points()
    }
}

/// Piecewise-constant heat capacity in temperature.
///
/// Each breakpoint `[θ_k, c_k]` sets the capacity on `[θ_k, θ_{k+1})`; the
/// first breakpoint must sit at θ = 0 and the last value extends to infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct PiecewiseConstant {
    starts: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(points: &[[f64; 2]]) -> Result<Self, MaterialError> {
        if points.is_empty() || points[0][0] != 0.0 {
            return Err(MaterialError::InvalidCurve(
                "heat capacity must start with a breakpoint at zero temperature".into(),
            ));
        }
        for w in points.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(MaterialError::InvalidCurve("heat capacity breakpoints must increase strictly".into()));
            }
        }
        for p in points {
            if !(p[1] > 0.0 && p[1].is_finite() && p[0].is_finite()) {
                return Err(MaterialError::InvalidCurve(format!("heat capacity must be positive and finite, got {p:?}")));
            }
        }
        Ok(Self {
            starts: points.iter().map(|p| p[0]).collect(),
            values: points.iter().map(|p| p[1]).collect(),
        })
    }

    pub fn constant(c: f64) -> Self {
        Self { starts: vec![0.0], values: vec![c] }
    }

    /// Index of the piece containing `theta`.
    pub fn piece(&self, theta: f64) -> usize {
        self.starts.partition_point(|&s| s <= theta).max(1) - 1
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.values[self.piece(theta)]
    }

    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<[f64; 2]>> for PiecewiseConstant {
    type Error = MaterialError;
    fn try_from(points: Vec<[f64; 2]>) -> Result<Self, Self::Error> {
        Self::new(&points)
    }
}

impl From<PiecewiseConstant> for Vec<[f64; 2]> {
    fn from(c: PiecewiseConstant) -> Self {
        c.starts.iter().zip(&c.values).map(|(x, y)| [*x, *y]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_interpolation_and_clamping() {
        let c = PiecewiseLinear::new(&[[0.0, 10.0], [1.0, 20.0], [3.0, 0.0]]).unwrap();
        assert_eq!(c.eval(-5.0), 10.0);
        assert_eq!(c.eval(0.5), 15.0);
        assert_eq!(c.eval(2.0), 10.0);
        assert_eq!(c.eval(9.0), 0.0);
        assert!(!c.is_monotone(Monotone::NonDecreasing));
        assert_eq!(c.min_value(), 0.0);
    }

    #[test]
    fn rejects_unsorted_breakpoints() {
        assert!(PiecewiseLinear::new(&[[1.0, 0.0], [1.0, 2.0]]).is_err());
        assert!(PiecewiseLinear::new(&[]).is_err());
        assert!(PiecewiseConstant::new(&[[1.0, 2.0]]).is_err());
        assert!(PiecewiseConstant::new(&[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn constant_pieces() {
        let c = PiecewiseConstant::new(&[[0.0, 2.0], [273.0, 4.0]]).unwrap();
        assert_eq!(c.eval(0.0), 2.0);
        assert_eq!(c.eval(272.9), 2.0);
        assert_eq!(c.eval(273.0), 4.0);
        assert_eq!(c.eval(1e6), 4.0);
    }

    #[test]
    fn serde_breakpoint_syntax() {
        #[derive(Deserialize)]
        struct Wrap {
            c: PiecewiseLinear,
        }
        let w: Wrap = toml::from_str("c = [[0.0, 1.0], [2.0, 3.0]]").unwrap();
        assert_eq!(w.c.eval(1.0), 2.0);
        assert!(toml::from_str::<Wrap>("c = [[2.0, 1.0], [0.0, 3.0]]").is_err());
    }
}
