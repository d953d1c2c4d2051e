//! Cutoff Maxwell-molecule collision kernels.
//!
//! The angular kernel `B0(z)` is a function of `z = û·ω`, the cosine between
//! the unit relative velocity and the scattering direction. Every family here
//! is even in `z`, so the sign convention of the relative velocity does not
//! matter.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UsfError};
use crate::quadrature::integrate_adaptive;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `B0(z) = c |z|`.
    GradCutoff,
    /// `B0(z) = c`.
    Constant,
    /// `B0(z) = Σ c_{2m} z^{2m}`, coefficients nonnegative.
    EvenPoly,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::GradCutoff => "grad_cutoff",
            KernelFamily::Constant => "constant",
            KernelFamily::EvenPoly => "even_poly",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = UsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "grad_cutoff" => Ok(KernelFamily::GradCutoff),
            "constant" => Ok(KernelFamily::Constant),
            "even_poly" => Ok(KernelFamily::EvenPoly),
            other => Err(UsfError::InvalidKernel(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Angular collision kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    coeffs: Vec<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::grad_cutoff(1.0).expect("unit amplitude is valid")
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(UsfError::InvalidKernel("no coefficients given".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(UsfError::InvalidKernel(format!(
                "coefficients must be finite and nonnegative, got {coeffs:?}"
            )));
        }
        if family != KernelFamily::EvenPoly && coeffs.len() != 1 {
            return Err(UsfError::InvalidKernel(format!(
                "{family} takes exactly one amplitude, got {}",
                coeffs.len()
            )));
        }
        Ok(KernelSpec { family, coeffs })
    }

    pub fn grad_cutoff(amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::GradCutoff, vec![amplitude])
    }

    pub fn constant(amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Constant, vec![amplitude])
    }

    /// `coeffs[m]` multiplies `z^{2m}`.
    pub fn even_poly(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(KernelFamily::EvenPoly, coeffs)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self.family {
            KernelFamily::GradCutoff => self.coeffs[0] * z.abs(),
            KernelFamily::Constant => self.coeffs[0],
            KernelFamily::EvenPoly => {
                let z2 = z * z;
                self.coeffs.iter().rev().fold(0.0, |acc, c| acc * z2 + c)
            }
        }
    }

    /// Maximum of `B0` on [-1, 1]. All families attain it at `|z| = 1`.
    pub fn max_value(&self) -> f64 {
        self.coeffs.iter().sum()
    }

    pub fn is_degenerate(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.family, self.coeffs.iter().map(|c| c * s).collect())
    }
}

/// Constants derived from the angular kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionConstants {
    /// Total angular mass `∫_{S²} B0(û·ω) dω`.
    pub sigma_t: f64,
    /// Collision frequency against the unit-density Maxwellian (equals `sigma_t`).
    pub nu0: f64,
    /// Second-moment relaxation constant `3π ∫ B0(z) z²(1−z²) dz`.
    pub b0: f64,
}

impl CollisionConstants {
    pub fn is_degenerate(&self) -> bool {
        self.sigma_t == 0.0 && self.b0 == 0.0
    }

    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.sigma_t > 0.0 && self.b0 > 0.0 {
            Ok(())
        } else {
            Err(UsfError::DegenerateKernel)
        }
    }
}

/// Closed-form constants. A zero kernel yields all-zero constants, which
/// downstream constructors reject via [`CollisionConstants::require_nondegenerate`].
pub fn derive_constants(kernel: &KernelSpec) -> CollisionConstants {
    // ∫_{-1}^{1} B0 and ∫_{-1}^{1} B0 z²(1−z²)
    let (mass, second) = match kernel.family {
        KernelFamily::GradCutoff => {
            let c = kernel.coeffs[0];
            (c, c / 6.0)
        }
        KernelFamily::Constant => {
            let c = kernel.coeffs[0];
            (2.0 * c, 4.0 * c / 15.0)
        }
        KernelFamily::EvenPoly => kernel.coeffs.iter().enumerate().fold((0.0, 0.0), |(m, s), (k, c)| {
            let p = 2.0 * k as f64;
            (
                m + c * 2.0 / (p + 1.0),
                s + c * (2.0 / (p + 3.0) - 2.0 / (p + 5.0)),
            )
        }),
    };
    let sigma_t = 2.0 * PI * mass;
    CollisionConstants {
        sigma_t,
        nu0: sigma_t,
        b0: 3.0 * PI * second,
    }
}

/// Same constants by adaptive Gauss–Kronrod quadrature, split at `z = 0`.
pub fn derive_constants_quadrature(kernel: &KernelSpec) -> CollisionConstants {
    let tol = 1e-12;
    let half = |g: &dyn Fn(f64) -> f64| integrate_adaptive(g, -1.0, 0.0, tol) + integrate_adaptive(g, 0.0, 1.0, tol);
    let mass = half(&|z| kernel.eval(z));
    let second = half(&|z| kernel.eval(z) * z * z * (1.0 - z * z));
    let sigma_t = 2.0 * PI * mass;
    CollisionConstants {
        sigma_t,
        nu0: sigma_t,
        b0: 3.0 * PI * second,
    }
}

/// Draws `z = û·ω` with density proportional to `B0(z)` on [-1, 1].
pub fn sample_cos_angle<R: Rng + ?Sized>(kernel: &KernelSpec, rng: &mut R) -> Result<f64> {
    if kernel.is_degenerate() {
        return Err(UsfError::DegenerateKernel);
    }
    let z = match kernel.family {
        KernelFamily::GradCutoff => {
            let u: f64 = rng.random();
            let mag = u.sqrt();
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        }
        KernelFamily::Constant => 2.0 * rng.random::<f64>() - 1.0,
        KernelFamily::EvenPoly => {
            let bound = kernel.max_value();
            loop {
                let z = 2.0 * rng.random::<f64>() - 1.0;
                if rng.random::<f64>() * bound <= kernel.eval(z) {
                    break z;
                }
            }
        }
    };
    Ok(z)
}

/// Orthonormal pair spanning the plane perpendicular to the unit vector `u`.
pub fn orthonormal_frame(u: &Vec3) -> (Vec3, Vec3) {
    let helper = if u.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = u.cross(&helper).normalize();
    let e2 = u.cross(&e1);
    (e1, e2)
}

/// Scattering direction `ω` distributed with density `B0(û·ω)/σ_T` on the sphere.
pub fn sample_omega<R: Rng + ?Sized>(kernel: &KernelSpec, relative_direction: &Vec3, rng: &mut R) -> Result<Vec3> {
    let z = sample_cos_angle(kernel, rng)?;
    let phi = 2.0 * PI * rng.random::<f64>();
    let (e1, e2) = orthonormal_frame(relative_direction);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let (sin_phi, cos_phi) = phi.sin_cos();
    Ok(relative_direction * z + (e1 * cos_phi + e2 * sin_phi) * s)
}

/// Elastic post-collision velocities:
/// `v' = v + ((v*−v)·ω)ω`, `v*' = v* − ((v*−v)·ω)ω`.
#[inline]
pub fn post_collision(v: &Vec3, v_star: &Vec3, omega: &Vec3) -> (Vec3, Vec3) {
    let exchange = omega * (v_star - v).dot(omega);
    (v + exchange, v_star - exchange)
}
