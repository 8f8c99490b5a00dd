//! Constitutive content: isotropic elastic and viscous moduli, the stored
//! energy with its semi-convex regularization, damage and creep
//! dissipation potentials, and the enthalpy maps of the phase transition.

pub mod curves;
pub mod thermal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensors::{DevTensor2, SymTensor2};
pub use curves::{Monotone, PiecewiseConstant, PiecewiseLinear};
pub use thermal::{Inverted, ThermalModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("invalid material parameter: {0}")]
    InvalidParam(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Creep law of the Maxwell element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CreepLaw {
    /// `G_m(w) Π = dev S` up to the gradient term.
    Linear,
    /// Power-law creep with potential `g0 |Π|^q`.
    Glen { g0: f64, q: f64 },
}

impl Default for CreepLaw {
    fn default() -> Self {
        CreepLaw::Linear
    }
}

/// All constitutive scalars and curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Mass density (kg/m³).
    pub rho: f64,
    /// Bulk elastic modulus (Pa).
    pub k_e: f64,
    /// Shear modulus of the undamaged material (Pa).
    pub g_e0: f64,
    /// Residual shear stiffness of fully damaged material, as a fraction.
    pub eps_g: f64,
    /// Bulk viscosity (Pa·s).
    pub k_v: f64,
    /// Shear viscosity (Pa·s).
    pub g_v: f64,
    /// Maxwell creep modulus against enthalpy (Pa·s).
    pub g_m_curve: PiecewiseLinear,
    /// Damage length-scale coefficient (N).
    pub kappa: f64,
    /// Creep-gradient coefficient (Pa·s·m²).
    pub varkappa: f64,
    /// Hyper-viscosity coefficient.
    pub nu: f64,
    /// Hyper-viscosity exponent, must exceed the dimension.
    pub p_exp: f64,
    /// Fracture-toughness-like modulus (N/m²).
    pub g_d: f64,
    /// Fracture toughness (Pa).
    pub sigma_f: f64,
    /// Healing modulus against enthalpy.
    pub a_curve: PiecewiseLinear,
    /// Quadratic floor of the damage dissipation potential.
    pub eps_zeta: f64,
    /// Phase relaxation time (s).
    pub omega: f64,
    /// Phase-transformation temperature (K).
    pub theta_pt: f64,
    /// Latent heat (J/m³).
    pub latent_l: f64,
    /// Heat capacity against temperature, piecewise constant (J/(m³K)).
    pub heat_capacity: PiecewiseConstant,
    /// Heat conductivity against enthalpy (W/(m·K)).
    pub conductivity: PiecewiseLinear,
    /// Conductivity multiplier of fully damaged material.
    #[serde(default = "one")]
    pub conductivity_damage_floor: f64,
    /// Regularization parameter of the deviatoric stored energy.
    pub eps_reg: f64,
    /// Optional buoyancy factor against temperature.
    #[serde(default)]
    pub buoyancy: Option<PiecewiseLinear>,
    /// Cap point of the relaxation driving function.
    #[serde(default = "one")]
    pub upsilon_cap: f64,
    /// Modulus of the convexifying damage term (Pa·s^½).
    #[serde(default = "one")]
    pub damage_convexify: f64,
    #[serde(default)]
    pub creep: CreepLaw,
}

fn one() -> f64 {
    1.0
}

impl Default for MaterialParams {
    /// A scaled water/ice-like reference material.
    fn default() -> Self {
        let ws = 2.0 * 273.0;
        let wl = ws + 334.0;
        Self {
            rho: 1.0,
            k_e: 10.0,
            g_e0: 5.0,
            eps_g: 1e-3,
            k_v: 0.1,
            g_v: 0.1,
            g_m_curve: PiecewiseLinear::new(&[[ws, 1e3], [wl, 1.0]]).expect("valid"),
            kappa: 1e-3,
            varkappa: 1e-4,
            nu: 1e-8,
            p_exp: 4.0,
            g_d: 1e-2,
            sigma_f: 0.05,
            a_curve: PiecewiseLinear::new(&[[ws, 10.0], [wl, 0.0]]).expect("valid"),
            eps_zeta: 1e-2,
            omega: 1e-2,
            theta_pt: 273.0,
            latent_l: 334.0,
            heat_capacity: PiecewiseConstant::new(&[[0.0, 2.0], [273.0, 4.2]]).expect("valid"),
            conductivity: PiecewiseLinear::new(&[[ws, 2.2], [wl, 0.6]]).expect("valid"),
            conductivity_damage_floor: 1.0,
            eps_reg: 1.0,
            buoyancy: None,
            upsilon_cap: 1.0,
            damage_convexify: 1.0,
            creep: CreepLaw::Linear,
        }
    }
}

fn require(cond: bool, msg: &str) -> Result<(), MaterialError> {
    if cond {
        Ok(())
    } else {
        Err(MaterialError::InvalidParam(msg.to_string()))
    }
}

impl MaterialParams {
    /// Checks every parameter constraint for a run in dimension `d`.
    pub fn validate(&self, d: usize) -> Result<(), MaterialError> {
        require(self.rho > 0.0, "rho must be positive")?;
        require(self.k_e > 0.0, "k_e must be positive")?;
        require(self.g_e0 > 0.0, "g_e0 must be positive")?;
        require(self.eps_g >= 0.0, "eps_g must be nonnegative")?;
        require(self.k_v >= 0.0 && self.g_v >= 0.0, "viscosity moduli must be nonnegative")?;
        require(self.kappa > 0.0, "kappa must be positive")?;
        require(self.varkappa > 0.0, "varkappa must be positive")?;
        require(self.nu > 0.0, "nu must be positive")?;
        require(self.p_exp > d as f64, "p_exp must exceed the spatial dimension")?;
        require(self.g_d > 0.0, "g_d must be positive")?;
        require(self.sigma_f >= 0.0, "sigma_f must be nonnegative")?;
        require(self.eps_zeta >= 0.0, "eps_zeta must be nonnegative")?;
        require(self.omega > 0.0, "omega must be positive")?;
        require(self.theta_pt > 0.0, "theta_pt must be positive")?;
        require(self.latent_l >= 0.0, "latent_l must be nonnegative")?;
        require(self.eps_reg >= 0.0, "eps_reg must be nonnegative")?;
        require(self.upsilon_cap >= 0.0, "upsilon_cap must be nonnegative")?;
        require(self.damage_convexify > 0.0, "damage_convexify must be positive")?;
        require(
            self.conductivity_damage_floor > 0.0 && self.conductivity_damage_floor <= 1.0,
            "conductivity_damage_floor must lie in (0, 1]",
        )?;
        require(self.g_m_curve.min_value() > 0.0, "g_m_curve needs a positive floor")?;
        require(self.a_curve.min_value() >= 0.0, "a_curve must be nonnegative")?;
        require(self.a_curve.is_monotone(Monotone::NonIncreasing), "a_curve must be non-increasing in w")?;
        require(self.conductivity.min_value() > 0.0, "conductivity needs a positive infimum")?;
        require(self.heat_capacity.min_value() > 0.0, "heat capacity must be positive")?;
        if let CreepLaw::Glen { g0, q } = self.creep {
            require(g0 > 0.0, "glen g0 must be positive")?;
            if q <= 1.0 {
                return Err(MaterialError::Unsupported("glen exponent q must exceed 1".into()));
            }
        }
        Ok(())
    }

    /// Damage-degraded shear modulus `G_e0 (α² + eps_g²)`.
    pub fn g_e(&self, alpha: f64) -> f64 {
        self.g_e0 * (alpha * alpha + self.eps_g * self.eps_g)
    }

    pub fn g_m(&self, w: f64) -> f64 {
        self.g_m_curve.eval(w)
    }

    pub fn a_heal(&self, w: f64) -> f64 {
        self.a_curve.eval(w)
    }

    /// Heat conductivity 𝒦(α, w).
    pub fn conductivity_at(&self, alpha: f64, w: f64) -> f64 {
        let f = self.conductivity_damage_floor;
        self.conductivity.eval(w) * (f + (1.0 - f) * alpha)
    }

    pub fn buoyancy_at(&self, theta: f64) -> f64 {
        self.buoyancy.as_ref().map_or(0.0, |b| b.eval(theta))
    }

    pub fn thermal_model(&self) -> Result<ThermalModel, MaterialError> {
        ThermalModel::new(&self.heat_capacity, self.theta_pt, self.latent_l)
    }

    pub fn upsilon(&self, x: f64) -> f64 {
        upsilon(x, self.upsilon_cap)
    }

    /// P-wave phase velocity of the semi-compressible limit.
    pub fn dispersion_velocity(&self, lambda: f64) -> Option<f64> {
        dispersion_velocity(lambda, self.k_e, self.rho, self.k_v)
    }
}

/// `ℂE = d K_e sph E + 2 G_e dev E`.
pub fn isotropic_c_apply(e: &SymTensor2, k_e: f64, g_e: f64) -> SymTensor2 {
    let d = e.dim() as f64;
    e.sph() * (d * k_e) + e.dev() * (2.0 * g_e)
}

/// `𝔻E_v = d K_v sph E_v + 2 G_v dev E_v`.
pub fn isotropic_d_apply(ev: &SymTensor2, k_v: f64, g_v: f64) -> SymTensor2 {
    isotropic_c_apply(ev, k_v, g_v)
}

/// Stored energy value and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoredEnergy {
    pub value: f64,
    /// ∂φ/∂E (Pa).
    pub de: SymTensor2,
    /// ∂φ/∂α (Pa).
    pub dalpha: f64,
}

/// `φ(E, α) = (d/2) K_e |sph E|² + G_e(α) |dev E|² + G_d (1−α)² / (2κ)`.
pub fn stored_energy(e: &SymTensor2, alpha: f64, p: &MaterialParams) -> Result<StoredEnergy, MaterialError> {
    stored_energy_reg(e, alpha, 0.0, p)
}

/// The regularized stored energy, with `G_e(α)|dev E|²/√(1 + ε|dev E|²)` as deviatoric part.
pub fn stored_energy_reg(
    e: &SymTensor2,
    alpha: f64,
    eps_reg: f64,
    p: &MaterialParams,
) -> Result<StoredEnergy, MaterialError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(MaterialError::Domain(format!("damage {alpha} outside [0, 1]")));
    }
    let d = e.dim() as f64;
    let sph = e.sph();
    let dev = e.dev();
    let (g, gp) = dev_profile(dev.norm_sq(), eps_reg);
    let ge = p.g_e(alpha);
    let value = 0.5 * d * p.k_e * sph.norm_sq() + ge * g + p.g_d * (1.0 - alpha).powi(2) / (2.0 * p.kappa);
    let de = sph * (d * p.k_e) + dev * (2.0 * ge * gp);
    let dalpha = 2.0 * p.g_e0 * alpha * g - p.g_d * (1.0 - alpha) / p.kappa;
    Ok(StoredEnergy { value, de, dalpha })
}

/// Returns `g(x) = x/√(1+εx)` and `g′(x)` for `x = |dev E|²`.
pub fn dev_profile(x: f64, eps_reg: f64) -> (f64, f64) {
    let s = (1.0 + eps_reg * x).sqrt();
    (x / s, (1.0 + 0.5 * eps_reg * x) / (s * s * s))
}

/// Semi-convexity constant `2 G_e0 (1 + 3/√ε)` of the regularized stored energy.
pub fn semi_convexity_constant(g_e0: f64, eps_reg: f64) -> f64 {
    2.0 * g_e0 * (1.0 + 3.0 / eps_reg.sqrt())
}

/// Conjugate of the isotropic quadratic stored energy.
pub fn conj_stored_energy_iso(s: &SymTensor2, k_e: f64, g_e: f64) -> Result<f64, MaterialError> {
    let d = s.dim() as f64;
    let dev = s.dev();
    let tr = s.trace();
    let vol = tr * tr / (2.0 * d * d * k_e);
    if g_e <= 0.0 {
        if dev.norm_sq() > 0.0 {
            return Err(MaterialError::Domain("deviatoric stress in a material without shear stiffness".into()));
        }
        return Ok(vol);
    }
    Ok(vol + dev.norm_sq() / (4.0 * g_e))
}

/// Damage dissipation potential `ζ(α, w; r)`; the default is independent of α.
pub fn zeta_damage(_alpha: f64, w: f64, rate: f64, p: &MaterialParams) -> f64 {
    -p.sigma_f * rate.min(0.0) + p.a_heal(w) * rate.max(0.0).powi(2) + p.eps_zeta * rate * rate
}

/// Subdifferential of ζ in the rate, as a closed interval.
pub fn zeta_subgradient_interval(_alpha: f64, w: f64, rate: f64, p: &MaterialParams) -> (f64, f64) {
    if rate < 0.0 {
        let g = -p.sigma_f + 2.0 * p.eps_zeta * rate;
        (g, g)
    } else if rate > 0.0 {
        let g = 2.0 * (p.a_heal(w) + p.eps_zeta) * rate;
        (g, g)
    } else {
        (-p.sigma_f, 0.0)
    }
}

/// Heat production rate of damage, `ξ = (selected subgradient)·rate`.
pub fn damage_heat(selection: f64, rate: f64) -> f64 {
    selection * rate
}

/// Sublinear relaxation driver `sign(x)·min(|x|, x_cap + √|x|)`.
pub fn upsilon(x: f64, x_cap: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let a = x.abs();
    x.signum() * a.min(x_cap + a.sqrt())
}

/// `v = √(K_e/ρ − K_v²/(4ρ²λ²))`, or `None` in the overdamped range.
pub fn dispersion_velocity(lambda: f64, k_e: f64, rho: f64, k_v: f64) -> Option<f64> {
    if !(lambda > 0.0) {
        return None;
    }
    let rad = k_e / rho - k_v * k_v / (4.0 * rho * rho * lambda * lambda);
    (rad > 0.0).then(|| rad.sqrt())
}

/// Glen-type creep potential `G0 |r|^q` and its gradient.
pub fn glen_creep_potential(rate: &DevTensor2, g0: f64, q: f64) -> Result<(f64, DevTensor2), MaterialError> {
    if q <= 1.0 {
        return Err(MaterialError::Unsupported("creep exponent q ≤ 1 describes activated plasticity".into()));
    }
    let n = rate.norm();
    if n == 0.0 {
        return Ok((0.0, DevTensor2::zeros(rate.dim())));
    }
    Ok((g0 * n.powf(q), *rate * (g0 * q * n.powf(q - 2.0))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::Tensor2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(rows: &[&[f64]]) -> SymTensor2 {
        Tensor2::from_rows(rows).sym()
    }

    #[test]
    fn c_apply_examples() {
        let out = isotropic_c_apply(&SymTensor2::identity(2), 2.0, 1.0);
        assert_eq!(out, SymTensor2::identity(2) * 4.0);
        let e = sym(&[&[1.0, 2.0], &[2.0, 3.0]]);
        let out = isotropic_c_apply(&e, 1.0, 2.0);
        assert_eq!(out.to_tensor(), Tensor2::from_rows(&[&[0.0, 8.0], &[8.0, 8.0]]));
        let dev = e.dev();
        assert!((isotropic_c_apply(&dev, 7.0, 2.0) - dev * 4.0).max_abs() < 1e-15);
    }

    #[test]
    fn c_apply_matches_rank_four_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=3 {
            let (k, g) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0));
            let e = SymTensor2::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
            let df = d as f64;
            let out = isotropic_c_apply(&e, k, g);
            for i in 0..d {
                for j in 0..d {
                    let mut s = 0.0;
                    for a in 0..d {
                        for b in 0..d {
                            let c = (k - 2.0 * g / df) * delta(i, j) * delta(a, b)
                                + g * (delta(i, a) * delta(j, b) + delta(i, b) * delta(j, a));
                            s += c * e.get(a, b);
                        }
                    }
                    assert!((s - out.get(i, j)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn d_apply_examples() {
        assert_eq!(isotropic_d_apply(&SymTensor2::zeros(2), 1.0, 1.0).max_abs(), 0.0);
        assert_eq!(isotropic_d_apply(&SymTensor2::identity(2), 3.0, 1.0), SymTensor2::identity(2) * 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let ev = SymTensor2::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            assert!(ev.ddot(&isotropic_d_apply(&ev, 0.5, 0.2)) > 0.0);
        }
    }

    #[test]
    fn stored_energy_trivial_values() {
        let p = MaterialParams::default();
        let z = stored_energy(&SymTensor2::zeros(2), 1.0, &p).unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(z.dalpha, 0.0);
        assert_eq!(z.de.max_abs(), 0.0);
        let z = stored_energy(&SymTensor2::zeros(2), 0.0, &p).unwrap();
        assert!((z.value - p.g_d / (2.0 * p.kappa)).abs() < 1e-15);
        assert!(z.dalpha <= 0.0);
        assert!(stored_energy(&SymTensor2::zeros(2), 1.5, &p).is_err());
    }

    #[test]
    fn regularization_is_monotone_and_consistent() {
        let p = MaterialParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let e = SymTensor2::from_fn(2, |_, _| rng.gen_range(-1.0..1.0));
            let a = rng.gen_range(0.0..=1.0);
            let exact = stored_energy(&e, a, &p).unwrap();
            assert_eq!(exact, stored_energy_reg(&e, a, 0.0, &p).unwrap());
            let mut last = exact.value;
            for k in 1..10 {
                let v = stored_energy_reg(&e, a, 0.1 * k as f64, &p).unwrap().value;
                assert!(v <= last + 1e-15);
                last = v;
            }
        }
    }

    #[test]
    fn conjugate_examples() {
        let s = SymTensor2::identity(2) * 2.0;
        assert!((conj_stored_energy_iso(&s, 1.0, 3.0).unwrap() - 2.0).abs() < 1e-15);
        let s = SymTensor2::identity(3) * 1.7;
        assert!((conj_stored_energy_iso(&s, 2.0, 1.0).unwrap() - 1.7 * 1.7 / 4.0).abs() < 1e-15);
        let sh = sym(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(conj_stored_energy_iso(&sh, 1.0, 0.0).is_err());
        assert!(conj_stored_energy_iso(&SymTensor2::identity(2), 1.0, 0.0).is_ok());
    }

    #[test]
    fn zeta_examples() {
        let mut p = MaterialParams::default();
        p.sigma_f = 2.0;
        p.eps_zeta = 0.1;
        assert_eq!(zeta_damage(1.0, 0.0, 0.0, &p), 0.0);
        assert_eq!(zeta_subgradient_interval(1.0, 0.0, 0.0, &p), (-2.0, 0.0));
        assert!((zeta_damage(1.0, 0.0, -1.0, &p) - 2.1).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let r = rng.gen_range(-10.0..10.0);
            let w = rng.gen_range(0.0..1500.0);
            assert!(p.eps_zeta * r * r <= zeta_damage(1.0, w, r, &p) + 1e-15);
        }
    }

    #[test]
    fn upsilon_shape() {
        assert_eq!(upsilon(0.0, 1.0), 0.0);
        assert_eq!(upsilon(0.3, 1.0), 0.3);
        assert!((upsilon(9.0, 1.0) - 4.0).abs() < 1e-15);
        for k in 0..100 {
            let x = 0.13 * k as f64;
            assert_eq!(upsilon(-x, 1.0), -upsilon(x, 1.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let (a, b) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            if a < b {
                assert!(upsilon(a, 0.5) < upsilon(b, 0.5));
            }
        }
    }

    #[test]
    fn dispersion_examples() {
        assert!((dispersion_velocity(1.0, 4.0, 1.0, 2.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        for &l in &[0.1, 1.0, 10.0] {
            assert_eq!(dispersion_velocity(l, 4.0, 1.0, 0.0), Some(2.0));
        }
        // λ_crit = K_v / (2√(ρ K_e)) = 0.5
        assert_eq!(dispersion_velocity(0.5, 4.0, 1.0, 2.0), None);
        assert_eq!(dispersion_velocity(0.4, 4.0, 1.0, 2.0), None);
        let mut last = 0.0;
        for k in 1..200 {
            let v = dispersion_velocity(0.5 + 0.1 * k as f64, 4.0, 1.0, 2.0).unwrap();
            assert!(v > last && v < 2.0);
            last = v;
        }
    }

    #[test]
    fn glen_potential() {
        let z = glen_creep_potential(&DevTensor2::zeros(2), 1.0, 4.0 / 3.0).unwrap();
        assert_eq!(z.0, 0.0);
        assert!(glen_creep_potential(&DevTensor2::zeros(2), 1.0, 1.0).is_err());
        let r = DevTensor2::new(sym(&[&[0.3, 0.2], &[0.2, -0.1]]));
        let (v, g) = glen_creep_potential(&r, 2.0, 2.0).unwrap();
        assert!((v - 2.0 * r.norm().powi(2)).abs() < 1e-15);
        assert!((g - r * 4.0).as_sym().max_abs() < 1e-15);
    }

    #[test]
    fn default_params_validate() {
        let p = MaterialParams::default();
        p.validate(2).unwrap();
        let mut bad = p.clone();
        bad.p_exp = 2.0;
        assert!(bad.validate(2).is_err());
        let mut bad = p.clone();
        bad.g_m_curve = PiecewiseLinear::new(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(bad.validate(2).is_err());
        let mut bad = p;
        bad.creep = CreepLaw::Glen { g0: 1.0, q: 0.9 };
        assert!(matches!(bad.validate(2), Err(MaterialError::Unsupported(_))));
    }
}
