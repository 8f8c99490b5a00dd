//! Reference solutions: the two-phase Neumann similarity solution of the
//! classical Stefan problem, and phase-velocity extraction from probe series.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid oracle parameters: {0}")]
    Parameters(String),
    #[error("no root bracketed for the front constant")]
    NotBracketed,
}

/// Melting of a semi-infinite two-phase slab: liquid at `theta_l` on the
/// left of `x0`, solid at `theta_r` on the right, interface at the
/// transformation temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StefanOracle {
    pub k_liquid: f64,
    pub k_solid: f64,
    pub c_liquid: f64,
    pub c_solid: f64,
    pub latent: f64,
    pub theta_l: f64,
    pub theta_r: f64,
    pub theta_pt: f64,
    /// Initial interface position (m).
    pub x0: f64,
    /// Front constant μ with `s(t) = x0 + 2μ√t`.
    pub mu: f64,
}

impl StefanOracle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k_liquid: f64,
        k_solid: f64,
        c_liquid: f64,
        c_solid: f64,
        latent: f64,
        theta_l: f64,
        theta_r: f64,
        theta_pt: f64,
        x0: f64,
    ) -> Result<Self, OracleError> {
        if !(k_liquid > 0.0 && k_solid > 0.0 && c_liquid > 0.0 && c_solid > 0.0 && latent >= 0.0) {
            return Err(OracleError::Parameters("conductivities and capacities must be positive".into()));
        }
        if !(theta_l >= theta_pt && theta_pt >= theta_r) {
            return Err(OracleError::Parameters("need theta_l ≥ theta_pt ≥ theta_r".into()));
        }
        let mut o = Self { k_liquid, k_solid, c_liquid, c_solid, latent, theta_l, theta_r, theta_pt, x0, mu: 0.0 };
        o.mu = o.solve_mu()?;
        Ok(o)
    }

    fn d_liquid(&self) -> f64 {
        self.k_liquid / self.c_liquid
    }

    fn d_solid(&self) -> f64 {
        self.k_solid / self.c_solid
    }

    /// Interface condition `ℓμ − (liquid flux − solid flux)·√t`, increasing in μ.
    fn front_condition(&self, mu: f64) -> f64 {
        let (dl, ds) = (self.d_liquid(), self.d_solid());
        let liquid = self.k_liquid * (self.theta_l - self.theta_pt) * (-mu * mu / dl).exp()
            / (erfc(-mu / dl.sqrt()) * (PI * dl).sqrt());
        let solid = self.k_solid * (self.theta_pt - self.theta_r) * (-mu * mu / ds).exp()
            / (erfc(mu / ds.sqrt()) * (PI * ds).sqrt());
        self.latent * mu - liquid + solid
    }

    fn solve_mu(&self) -> Result<f64, OracleError> {
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut grow = 0;
        while self.front_condition(lo) > 0.0 {
            lo *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(OracleError::NotBracketed);
            }
        }
        while self.front_condition(hi) < 0.0 {
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(OracleError::NotBracketed);
            }
        }
        while hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.front_condition(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn front(&self, t: f64) -> f64 {
        self.x0 + 2.0 * self.mu * t.max(0.0).sqrt()
    }

    pub fn theta(&self, x: f64, t: f64) -> f64 {
        let u = x - self.x0;
        if t <= 0.0 {
            return if u < 0.0 { self.theta_l } else { self.theta_r };
        }
        let s = 2.0 * self.mu * t.sqrt();
        if u <= s {
            let dl = self.d_liquid();
            self.theta_l
                + (self.theta_pt - self.theta_l) * erfc(-u / (2.0 * (dl * t).sqrt())) / erfc(-self.mu / dl.sqrt())
        } else {
            let ds = self.d_solid();
            self.theta_r + (self.theta_pt - self.theta_r) * erfc(u / (2.0 * (ds * t).sqrt())) / erfc(self.mu / ds.sqrt())
        }
    }
}

/// Lag (in samples, refined by a parabola through the peak) maximizing the
/// normalized correlation of `a[n]` and `b[n+m]` over `m ∈ [min_lag, max_lag]`.
pub fn cross_correlation_lag(a: &[f64], b: &[f64], min_lag: usize, max_lag: usize) -> Option<f64> {
    let n = a.len().min(b.len());
    if max_lag <= min_lag || max_lag + 2 >= n {
        return None;
    }
    let corr = |m: usize| -> f64 {
        let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
        for k in 0..n - m {
            ab += a[k] * b[k + m];
            aa += a[k] * a[k];
            bb += b[k + m] * b[k + m];
        }
        if aa > 0.0 && bb > 0.0 {
            ab / (aa * bb).sqrt()
        } else {
            0.0
        }
    };
    let values: Vec<f64> = (min_lag..=max_lag).map(corr).collect();
    let (best, _) = values.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1))?;
    if best == 0 || best + 1 == values.len() {
        return None;
    }
    let (l, c, r) = (values[best - 1], values[best], values[best + 1]);
    let denom = l - 2.0 * c + r;
    let shift = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
    Some((min_lag + best) as f64 + shift)
}

/// Phase velocity from two probe series a distance `separation` apart,
/// sampled every `dt`. The lag is searched up to the travel time at `max_speed / 2`.
pub fn measure_phase_velocity(a: &[f64], b: &[f64], separation: f64, dt: f64, max_speed: f64) -> Option<f64> {
    let min_lag = (0.5 * separation / max_speed / dt).floor() as usize;
    let max_lag = (2.0 * separation / max_speed / dt).ceil() as usize;
    let lag = cross_correlation_lag(a, b, min_lag, max_lag)?;
    (lag > 0.0).then(|| separation / (lag * dt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> StefanOracle {
        StefanOracle::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.5, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn symmetric_case_has_no_net_drive() {
        // equal superheat and undercooling with equal properties: the fluxes balance only at μ = 0
        let o = symmetric();
        assert!(o.mu.abs() < 1e-12);
    }

    #[test]
    fn front_is_self_similar() {
        let o = StefanOracle::new(1.0, 0.5, 1.0, 2.0, 1.0, 2.0, 0.5, 1.0, 0.0).unwrap();
        assert!(o.mu > 0.0);
        assert!((o.front(4.0) / o.front(1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn profile_is_continuous_at_the_front() {
        let o = StefanOracle::new(1.0, 0.5, 1.0, 2.0, 1.0, 2.0, 0.5, 1.0, 0.0).unwrap();
        let t = 0.7;
        let s = o.front(t);
        assert!((o.theta(s - 1e-12, t) - 1.0).abs() < 1e-9);
        assert!((o.theta(s + 1e-12, t) - 1.0).abs() < 1e-9);
        assert!((o.theta(-50.0, t) - 2.0).abs() < 1e-12);
        assert!((o.theta(50.0, t) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_latent_heat_reduces_to_conduction() {
        let o = StefanOracle::new(1.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0).unwrap();
        // with one diffusivity the profile is a single error function centred on the midpoint temperature
        assert!(o.mu.abs() < 1e-12);
        let t: f64 = 0.3;
        for x in [-1.0, -0.2, 0.1, 0.8] {
            let want = 1.0 - erfc(-x / (2.0 * t.sqrt())) + 1.0;
            assert!((o.theta(x, t) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn travelling_sine_speed_is_recovered() {
        let (c, k, dt) = (0.9, 0.1, 0.05);
        let sep = 12.0;
        let a: Vec<f64> = (0..4000).map(|n| (k * (0.0 - c * n as f64 * dt)).cos()).collect();
        let b: Vec<f64> = (0..4000).map(|n| (k * (sep - c * n as f64 * dt)).cos()).collect();
        let v = measure_phase_velocity(&a, &b, sep, dt, 1.0).unwrap();
        assert!((v - c).abs() < 1e-3 * c, "{v}");
    }
}
