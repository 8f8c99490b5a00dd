//! Sampled verification of the constitutive functions. Each check draws its
//! points from a seeded generator and reports the worst deviation it saw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::materials::{
    conj_stored_energy_iso, damage_heat, semi_convexity_constant, stored_energy_reg, zeta_subgradient_interval,
    MaterialError, MaterialParams,
};
use crate::tensors::SymTensor2;

fn random_strain(rng: &mut ChaCha8Rng, d: usize, size: f64) -> SymTensor2 {
    SymTensor2::from_fn(d, |_, _| rng.gen_range(-size..size))
}

/// Largest relative mismatch between the analytic derivatives of the stored
/// energy and central differences, over `samples` random `(E, α)` in 2D.
pub fn stored_energy_fd_error(p: &MaterialParams, samples: usize, seed: u64) -> Result<f64, MaterialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let e = random_strain(&mut rng, 2, 1.0);
        let alpha = rng.gen_range(0.05..0.95);
        let at = stored_energy_reg(&e, alpha, p.eps_reg, p)?;
        let h = 1e-6;
        let scale = at.de.norm().max(at.dalpha.abs()).max(1e-12);
        for k in 0..3 {
            let mut up = e.packed().to_vec();
            let mut dn = up.clone();
            up[k] += h;
            dn[k] -= h;
            let fu = stored_energy_reg(&SymTensor2::from_packed(2, &up), alpha, p.eps_reg, p)?.value;
            let fd = stored_energy_reg(&SymTensor2::from_packed(2, &dn), alpha, p.eps_reg, p)?.value;
            let numeric = (fu - fd) / (2.0 * h);
            // Off-diagonal packed entries stand for two tensor components.
            let exact = if k == 2 { 2.0 * at.de.get(0, 1) } else { at.de.get(k, k) };
            worst = worst.max((numeric - exact).abs() / scale);
        }
        let fu = stored_energy_reg(&e, alpha + h, p.eps_reg, p)?.value;
        let fd = stored_energy_reg(&e, alpha - h, p.eps_reg, p)?.value;
        worst = worst.max(((fu - fd) / (2.0 * h) - at.dalpha).abs() / scale);
    }
    Ok(worst)
}

/// Largest relative defect of `φ(E) + φ*(S) = S:E` with `S = ∂φ/∂E` for the
/// quadratic stored energy.
pub fn legendre_defect(p: &MaterialParams, samples: usize, seed: u64) -> Result<f64, MaterialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let e = random_strain(&mut rng, 2, 1.0);
        let alpha = rng.gen_range(0.0..=1.0);
        let phi = stored_energy_reg(&e, alpha, 0.0, p)?;
        let offset = p.g_d * (1.0 - alpha).powi(2) / (2.0 * p.kappa);
        let conj = conj_stored_energy_iso(&phi.de, p.k_e, p.g_e(alpha))? - offset;
        let work = phi.de.ddot(&e);
        let scale = phi.value.abs().max(work.abs()).max(1e-300);
        worst = worst.max((phi.value + conj - work).abs() / scale);
    }
    Ok(worst)
}

fn random_strain_in_ball(rng: &mut ChaCha8Rng, radius: f64) -> SymTensor2 {
    let dir = random_strain(rng, 2, 1.0);
    let n = dir.norm();
    if n == 0.0 {
        return dir;
    }
    dir * (radius * rng.gen_range(0.0..=1.0f64) / n)
}

/// Number of random segments in `(E, α)` along which `φ_ε + (K/2)α²` fails
/// midpoint convexity, with `K` the semi-convexity constant. Strains are drawn
/// from the ball `|E| ≤ strain_radius` and damage from `[0, 1]`.
///
/// The deviatoric profile `x/√(1+εx)` turns concave along radial lines once
/// `ε|dev E|²` is of order one, and a term in `α` alone cannot repair that, so
/// the property only holds on a bounded strain ball.
pub fn semi_convexity_violations(
    p: &MaterialParams,
    segments: usize,
    strain_radius: f64,
    seed: u64,
) -> Result<usize, MaterialError> {
    let k = semi_convexity_constant(p.g_e0, p.eps_reg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = |e: &SymTensor2, alpha: f64| -> Result<f64, MaterialError> {
        Ok(stored_energy_reg(e, alpha, p.eps_reg, p)?.value + 0.5 * k * alpha * alpha)
    };
    let mut bad = 0;
    for _ in 0..segments {
        let (a, b) = (random_strain_in_ball(&mut rng, strain_radius), random_strain_in_ball(&mut rng, strain_radius));
        let (alpha_a, alpha_b) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let (fa, fb) = (f(&a, alpha_a)?, f(&b, alpha_b)?);
        for t in [0.25, 0.5, 0.75] {
            let fm = f(&(a * (1.0 - t) + b * t), (1.0 - t) * alpha_a + t * alpha_b)?;
            let chord = (1.0 - t) * fa + t * fb;
            if fm > chord + 1e-12 * chord.abs().max(1.0) {
                bad += 1;
                break;
            }
        }
    }
    Ok(bad)
}

/// Smallest damage heat `ξ = s·r` over `samples` rates, where `s` runs over
/// the endpoints and an interior point of the subdifferential. Zero rates,
/// where the potential has its kink, are included on purpose.
pub fn min_damage_heat(p: &MaterialParams, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut least = f64::INFINITY;
    for k in 0..samples {
        let rate = match k % 10 {
            0 => 0.0,
            1 => rng.gen_range(-1e-12..1e-12),
            _ => rng.gen_range(-1.0..1.0) * 10f64.powf(rng.gen_range(-6.0..3.0)),
        };
        let w = rng.gen_range(0.0..2000.0);
        let alpha = rng.gen_range(0.0..=1.0);
        let (lo, hi) = zeta_subgradient_interval(alpha, w, rate, p);
        let mid = lo + rng.gen_range(0.0..=1.0) * (hi - lo);
        for s in [lo, mid, hi] {
            least = least.min(damage_heat(s, rate));
        }
    }
    least
}
