//! Global Maxwellian, first-order self-similar profile and its exact steady
//! second moments.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UsfError};
use crate::kernel::{CollisionConstants, Vec3};
use crate::spectral::ShearParams;

/// Default hard velocity cutoff; the discarded Gaussian mass is below 1e-12.
pub const DEFAULT_TRUNCATION_RADIUS: f64 = 8.0;

/// `(2π)^{-3/2} exp(−|v|²/2)`.
pub fn maxwellian_density(v: &Vec3) -> f64 {
    (2.0 * PI).powf(-1.5) * (-0.5 * v.norm_squared()).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileOrder {
    Maxwellian,
    FirstOrder,
}

impl ProfileOrder {
    pub fn from_index(order: u32) -> Result<Self> {
        match order {
            0 => Ok(ProfileOrder::Maxwellian),
            1 => Ok(ProfileOrder::FirstOrder),
            other => Err(UsfError::InvalidParameter(format!("profile order must be 0 or 1, got {other}"))),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            ProfileOrder::Maxwellian => 0,
            ProfileOrder::FirstOrder => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub alpha: f64,
    pub order: ProfileOrder,
    pub constants: CollisionConstants,
    pub truncation_radius: f64,
}

impl ProfileSpec {
    pub fn new(alpha: f64, order: ProfileOrder, constants: CollisionConstants) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(UsfError::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
        }
        if order == ProfileOrder::FirstOrder && alpha > 0.0 {
            constants.require_nondegenerate()?;
        }
        Ok(ProfileSpec {
            alpha,
            order,
            constants,
            truncation_radius: DEFAULT_TRUNCATION_RADIUS,
        })
    }

    pub fn with_truncation_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(UsfError::InvalidParameter(format!("truncation radius must be positive, got {radius}")));
        }
        self.truncation_radius = radius;
        Ok(self)
    }

    /// Coefficient `c` in `G ≈ μ (1 − c v1 v2)`, i.e. `α/(2 b0)`.
    pub fn shear_coefficient(&self) -> f64 {
        match self.order {
            ProfileOrder::Maxwellian => 0.0,
            ProfileOrder::FirstOrder if self.alpha == 0.0 => 0.0,
            ProfileOrder::FirstOrder => self.alpha / (2.0 * self.constants.b0),
        }
    }
}

/// `μ` for order 0, `μ (1 − (α/2b0) v1 v2)` for the first-order profile.
/// Can be negative far out in velocity space.
pub fn profile_density(spec: &ProfileSpec, v: &Vec3) -> f64 {
    maxwellian_density(v) * (1.0 - spec.shear_coefficient() * v.x * v.y)
}

/// Second moments `(⟨G,|v|²⟩, ⟨G,v1v2⟩, ⟨G,v2²⟩)` of the exact profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyMoments {
    pub energy: f64,
    pub d12: f64,
    pub d22: f64,
}

impl SteadyMoments {
    pub fn as_array(&self) -> [f64; 3] {
        [self.energy, self.d12, self.d22]
    }
}

/// Kernel vector of the moment matrix normalized to energy 3:
/// `(3, −3β/α, 6β(b0+β)/α²)`, with the `α → 0` limit `(3, 0, 1)`.
pub fn steady_moments(params: &ShearParams) -> Result<SteadyMoments> {
    let ShearParams { alpha, b0, beta } = *params;
    if !(alpha >= 0.0) {
        return Err(UsfError::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(SteadyMoments { energy: 3.0, d12: 0.0, d22: 1.0 });
    }
    Ok(SteadyMoments {
        energy: 3.0,
        d12: -3.0 * beta / alpha,
        d22: 6.0 * beta * (b0 + beta) / (alpha * alpha),
    })
}

/// Expected acceptance of the profile sampler, `1/(1 + 2c/π)`.
pub fn sampler_acceptance(spec: &ProfileSpec) -> f64 {
    1.0 / (1.0 + 2.0 * spec.shear_coefficient() / PI)
}

fn standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Signed Rayleigh variate: density `|x| e^{−x²/2} / 2` on the real line.
fn signed_rayleigh<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let r = (-2.0 * (1.0 - u).ln()).sqrt();
    if rng.random::<bool>() {
        r
    } else {
        -r
    }
}

/// I.i.d. samples from the normalized positive part of [`profile_density`],
/// restricted to `|v| ≤ R`.
///
/// Proposals come from the mixture `μ (1 + c|v1 v2|)`, whose second
/// component is a product of signed Rayleigh variates in `(v1, v2)` and a
/// Gaussian `v3`; a proposal is accepted with probability
/// `(1 − c v1 v2)⁺ / (1 + c |v1 v2|)`.
pub fn sample_profile<R: Rng + ?Sized>(spec: &ProfileSpec, n: usize, rng: &mut R) -> Result<Vec<Vec3>> {
    let c = spec.shear_coefficient();
    let acceptance = sampler_acceptance(spec);
    if acceptance < 0.5 {
        return Err(UsfError::AcceptanceTooLow { ratio: acceptance });
    }
    let r2 = spec.truncation_radius * spec.truncation_radius;
    // mixture weight of the |v1 v2| μ component: c E|v1 v2| = 2c/π
    let p_tilted = (2.0 * c / PI) / (1.0 + 2.0 * c / PI);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = if c > 0.0 && rng.random::<f64>() < p_tilted {
            Vec3::new(signed_rayleigh(rng), signed_rayleigh(rng), rng.sample(StandardNormal))
        } else {
            standard_normal3(rng)
        };
        if v.norm_squared() > r2 {
            continue;
        }
        if c > 0.0 {
            let prod = v.x * v.y;
            let accept = (1.0 - c * prod).max(0.0) / (1.0 + c * prod.abs());
            if rng.random::<f64>() >= accept {
                continue;
            }
        }
        out.push(v);
    }
    Ok(out)
}
