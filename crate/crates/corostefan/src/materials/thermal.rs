//! Heat part of the free energy: the caloric map γ̃, the thermal free energy
//! φ̃ solving γ̃ = φ̃ − θφ̃′, and the Stefan graph relating enthalpy to
//! temperature.

use super::curves::PiecewiseConstant;
use super::MaterialError;

/// Result of inverting the caloric map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inverted {
    pub theta: f64,
    /// Set when the requested enthalpy lay below γ̃(0) and θ was clamped to zero.
    pub clamped: bool,
}

/// Precomputed closed forms for a piecewise-constant heat capacity.
#[derive(Clone, Debug)]
pub struct ThermalModel {
    starts: Vec<f64>,
    caps: Vec<f64>,
    gamma_at_start: Vec<f64>,
    offsets: Vec<f64>,
    theta_ref: f64,
    anti_ref: f64,
    theta_pt: f64,
    latent: f64,
}

impl ThermalModel {
    /// Builds the maps with the gauge φ̃(θ_pt) = 0.
    pub fn new(c: &PiecewiseConstant, theta_pt: f64, latent: f64) -> Result<Self, MaterialError> {
        if !(theta_pt > 0.0) {
            return Err(MaterialError::InvalidParam("theta_pt must be positive".into()));
        }
        if !(latent >= 0.0) {
            return Err(MaterialError::InvalidParam("latent_l must be nonnegative".into()));
        }
        let starts = c.starts().to_vec();
        let caps = c.values().to_vec();
        let mut gamma_at_start = vec![0.0; starts.len()];
        for k in 1..starts.len() {
            gamma_at_start[k] = gamma_at_start[k - 1] + caps[k - 1] * (starts[k] - starts[k - 1]);
        }
        let mut m = Self {
            starts,
            caps,
            gamma_at_start,
            offsets: Vec::new(),
            theta_ref: theta_pt,
            anti_ref: 0.0,
            theta_pt,
            latent,
        };
        let n = m.starts.len();
        let mut offsets = vec![0.0; n];
        for k in 0..n.saturating_sub(1) {
            let s = m.starts[k + 1];
            let left = m.raw_anti(k, s) + offsets[k];
            offsets[k + 1] = left - m.raw_anti(k + 1, s);
        }
        m.offsets = offsets;
        m.anti_ref = m.anti(m.theta_ref);
        Ok(m)
    }

    pub fn theta_pt(&self) -> f64 {
        self.theta_pt
    }

    pub fn latent(&self) -> f64 {
        self.latent
    }

    fn piece(&self, theta: f64) -> usize {
        self.starts.partition_point(|&s| s <= theta).max(1) - 1
    }

    /// γ̃ on piece k is `a_k + c_k s`; returns `a_k`.
    fn intercept(&self, k: usize) -> f64 {
        self.gamma_at_start[k] - self.caps[k] * self.starts[k]
    }

    fn raw_anti(&self, k: usize, s: f64) -> f64 {
        let a = self.intercept(k);
        let pole = if a == 0.0 { 0.0 } else { -a / s };
        pole + self.caps[k] * s.ln()
    }

    /// A continuous antiderivative of γ̃(s)/s².
    fn anti(&self, s: f64) -> f64 {
        let k = self.piece(s);
        self.raw_anti(k, s) + self.offsets[k]
    }

    /// Heat capacity c(θ).
    pub fn capacity(&self, theta: f64) -> f64 {
        self.caps[self.piece(theta.max(0.0))]
    }

    /// γ̃(θ) = ∫₀^θ c.
    pub fn gamma(&self, theta: f64) -> Result<f64, MaterialError> {
        if !(theta >= 0.0) {
            return Err(MaterialError::Domain(format!("temperature {theta} is negative")));
        }
        let k = self.piece(theta);
        Ok(self.gamma_at_start[k] + self.caps[k] * (theta - self.starts[k]))
    }

    /// γ̃ extended to negative arguments by its slope at zero; used inside Newton iterations only.
    pub fn gamma_extended(&self, theta: f64) -> f64 {
        if theta < 0.0 {
            self.caps[0] * theta
        } else {
            self.gamma(theta).expect("nonnegative")
        }
    }

    /// Inverse of γ̃; enthalpies below γ̃(0) clamp to θ = 0 with a flag.
    pub fn theta_of(&self, vartheta: f64) -> Inverted {
        if vartheta < 0.0 || vartheta.is_nan() {
            return Inverted { theta: 0.0, clamped: true };
        }
        let k = self.gamma_at_start.partition_point(|&g| g <= vartheta).max(1) - 1;
        Inverted { theta: self.starts[k] + (vartheta - self.gamma_at_start[k]) / self.caps[k], clamped: false }
    }

    /// φ̃(θ) with the anchor φ̃(θ_pt) = 0.
    pub fn phi_tilde(&self, theta: f64) -> Result<f64, MaterialError> {
        if !(theta >= 0.0) {
            return Err(MaterialError::Domain(format!("temperature {theta} is negative")));
        }
        if theta == 0.0 {
            return Ok(0.0);
        }
        Ok(-theta * (self.anti(theta) - self.anti_ref))
    }

    /// φ̃′(θ) = (φ̃ − γ̃)/θ for θ > 0.
    pub fn dphi_tilde(&self, theta: f64) -> Result<f64, MaterialError> {
        if !(theta > 0.0) {
            return Err(MaterialError::Domain("φ̃′ needs a positive temperature".into()));
        }
        Ok((self.phi_tilde(theta)? - self.gamma(theta)?) / theta)
    }

    /// Thermal part of the free energy `φ̃(θ) − ℓ(θ/θ_pt − 1)⁺`.
    pub fn phi_thermal(&self, theta: f64) -> Result<f64, MaterialError> {
        Ok(self.phi_tilde(theta)? - self.latent * (theta / self.theta_pt - 1.0).max(0.0))
    }

    /// Entropy η = −φ′(θ) of the thermal part.
    pub fn entropy(&self, theta: f64) -> Result<f64, MaterialError> {
        let jump = if theta > self.theta_pt { self.latent / self.theta_pt } else { 0.0 };
        Ok(-(self.dphi_tilde(theta)? - jump))
    }

    /// Returns (γ̃(θ), φ(θ)).
    pub fn heat_maps(&self, theta: f64) -> Result<(f64, f64), MaterialError> {
        Ok((self.gamma(theta)?, self.phi_thermal(theta)?))
    }

    /// Enthalpy `w = γ̃(θ) + ℓχ`.
    pub fn enthalpy_of(&self, theta: f64, chi: f64) -> Result<f64, MaterialError> {
        Ok(self.gamma(theta)? + self.latent * chi)
    }

    /// Solidus enthalpy w_s = γ̃(θ_pt).
    pub fn w_solidus(&self) -> f64 {
        self.gamma(self.theta_pt).expect("theta_pt positive")
    }

    /// Temperature on the Stefan graph: inverse of the multivalued enthalpy relation.
    pub fn beta_of_w(&self, w: f64) -> f64 {
        let ws = self.w_solidus();
        if w <= ws {
            self.theta_of(w).theta
        } else if w <= ws + self.latent {
            self.theta_pt
        } else {
            self.theta_of(w - self.latent).theta
        }
    }
}
