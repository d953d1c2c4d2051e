//! Exact quadratic collision-moment identities for Maxwell molecules and the
//! independent oracles that check them.
//!
//! Velocity indices are zero-based: `0 ↔ v1`, `1 ↔ v2`, `2 ↔ v3`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UsfError};
use crate::kernel::{derive_constants, post_collision, sample_omega, KernelSpec, Vec3};
use crate::quadrature::gauss_legendre;
use crate::rng::stream_rng;
use crate::stats::jackknife_std_error;

/// Velocity moments up to second order of a (possibly signed) distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionMoments {
    pub mass: f64,
    /// `⟨f, v⟩`.
    pub momentum: Vector3<f64>,
    /// `⟨f, v_i v_j⟩`.
    pub second: Matrix3<f64>,
}

impl DistributionMoments {
    pub fn zero() -> Self {
        DistributionMoments {
            mass: 0.0,
            momentum: Vector3::zeros(),
            second: Matrix3::zeros(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.second.trace()
    }

    /// `second − momentum⊗momentum/mass`, the central second moment.
    pub fn central_second(&self) -> Option<Matrix3<f64>> {
        (self.mass > 0.0).then(|| self.second - self.momentum * self.momentum.transpose() / self.mass)
    }

    pub fn add(&self, other: &Self) -> Self {
        DistributionMoments {
            mass: self.mass + other.mass,
            momentum: self.momentum + other.momentum,
            second: self.second + other.second,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTestDistribution {
    pub mass: f64,
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    chol: Matrix3<f64>,
}

impl GaussianTestDistribution {
    pub fn new(mass: f64, mean: Vector3<f64>, covariance: Matrix3<f64>) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(UsfError::InvalidParameter(format!("Gaussian mass must be positive, got {mass}")));
        }
        if (covariance - covariance.transpose()).norm() > 1e-12 * covariance.norm() {
            return Err(UsfError::InvalidParameter("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(covariance)
            .ok_or_else(|| UsfError::InvalidParameter("covariance is not positive definite".into()))?
            .l();
        Ok(GaussianTestDistribution {
            mass,
            mean,
            covariance,
            chol,
        })
    }

    pub fn moments(&self) -> DistributionMoments {
        DistributionMoments {
            mass: self.mass,
            momentum: self.mean * self.mass,
            second: (self.covariance + self.mean * self.mean.transpose()) * self.mass,
        }
    }

    fn transform(&self, z: &Vector3<f64>) -> Vec3 {
        self.mean + self.chol * z
    }
}

/// Finite mixture of Gaussians; the component masses add up to the total.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<GaussianTestDistribution>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianTestDistribution>) -> Result<Self> {
        if components.is_empty() {
            return Err(UsfError::InvalidParameter("empty mixture".into()));
        }
        Ok(GaussianMixture { components })
    }

    pub fn single(g: GaussianTestDistribution) -> Self {
        GaussianMixture { components: vec![g] }
    }

    pub fn mass(&self) -> f64 {
        self.components.iter().map(|c| c.mass).sum()
    }

    pub fn moments(&self) -> DistributionMoments {
        self.components
            .iter()
            .fold(DistributionMoments::zero(), |acc, c| acc.add(&c.moments()))
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &GaussianTestDistribution {
        let mut u = rng.random::<f64>() * self.mass();
        for c in &self.components {
            if u < c.mass {
                return c;
            }
            u -= c.mass;
        }
        self.components.last().expect("nonempty")
    }
}

/// `T_ij(v, v*) = −b0 [(v−v*)_i (v−v*)_j − δ_ij |v−v*|²/3]`.
pub fn t_ij_closed(v: &Vec3, v_star: &Vec3, i: usize, j: usize, b0: f64) -> f64 {
    let g = v - v_star;
    let delta = if i == j { g.norm_squared() / 3.0 } else { 0.0 };
    -b0 * (g[i] * g[j] - delta)
}

/// Nodes per angular direction in [`t_ij_quadrature`]; each half of the
/// polar range gets its own Gauss rule so the `|z|` kink sits on a boundary.
pub const ANGULAR_NODES: usize = 64;

/// `½ ∫_{S²} B0(û·ω) [W_ij(v') + W_ij(v*') − W_ij(v) − W_ij(v*)] dω` by
/// product Gauss quadrature in `(z, φ)` about the relative direction.
pub fn t_ij_quadrature(v: &Vec3, v_star: &Vec3, i: usize, j: usize, kernel: &KernelSpec) -> Result<f64> {
    if kernel.is_degenerate() {
        return Err(UsfError::DegenerateKernel);
    }
    let g = v_star - v;
    let speed = g.norm();
    if speed == 0.0 {
        return Ok(0.0);
    }
    let u = g / speed;
    let (e1, e2) = crate::kernel::orthonormal_frame(&u);
    let (x, w) = gauss_legendre(ANGULAR_NODES);
    let w_ij = |a: &Vec3| a[i] * a[j];
    let before = w_ij(v) + w_ij(v_star);
    let mut total = 0.0;
    for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0)] {
        let (zc, zh) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (xz, wz) in x.iter().zip(&w) {
            let z = zc + zh * xz;
            let s = (1.0 - z * z).sqrt();
            let bz = kernel.eval(z);
            for (xp, wp) in x.iter().zip(&w) {
                let phi = PI * (1.0 + xp);
                let (sp, cp) = phi.sin_cos();
                let omega = u * z + (e1 * cp + e2 * sp) * s;
                let (vp, vsp) = post_collision(v, v_star, &omega);
                total += wz * zh * wp * PI * bz * (w_ij(&vp) + w_ij(&vsp) - before);
            }
        }
    }
    Ok(0.5 * total)
}

/// `⟨Q(f,f), v_i v_j⟩` from the moments of `f`:
/// off-diagonal `−2b0 [d_ij m − u_i u_j]`, diagonal
/// `−2b0 [(d_ii − E/3) m − u_i² + |u|²/3]`.
pub fn q_moment(f: &DistributionMoments, i: usize, j: usize, b0: f64) -> f64 {
    let u = &f.momentum;
    if i == j {
        let traceless = f.second[(i, i)] - f.energy() / 3.0;
        -2.0 * b0 * (traceless * f.mass - u[i] * u[i] + u.norm_squared() / 3.0)
    } else {
        -2.0 * b0 * (f.second[(i, j)] * f.mass - u[i] * u[j])
    }
}

/// `⟨Q_sym(f, G), v_i v_j⟩` for a profile `G` with zero momentum.
pub fn qsym_moment_g(f: &DistributionMoments, g: &DistributionMoments, i: usize, j: usize, b0: f64) -> Result<f64> {
    if g.momentum.norm() > 1e-12 * g.mass.abs().max(1.0) {
        return Err(UsfError::InvalidParameter(format!(
            "profile momentum must vanish, got {:?}",
            g.momentum.as_slice()
        )));
    }
    let traceless = |m: &DistributionMoments| {
        if i == j {
            m.second[(i, i)] - m.energy() / 3.0
        } else {
            m.second[(i, j)]
        }
    };
    Ok(-2.0 * b0 * (traceless(f) * g.mass + f.mass * traceless(g)))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
}

const ORACLE_BATCHES: usize = 64;

/// Monte Carlo estimate of `⟨Q(f,f), v_i v_j⟩ = ∫∫ f f* T_ij dv dv*`.
///
/// Each sample draws a velocity pair from `f/mass`, a scattering direction
/// from the kernel and applies the elastic map, so `T_ij` is estimated as
/// `(σ_T/2)·ΔW_ij` without using its closed form. Pairs come in antithetic
/// couples `(z, z*) → (−z, −z*)` in the underlying normal draws. Batches run
/// on independent streams; the error is a delete-one-batch jackknife.
pub fn mc_collision_moment_oracle(
    f: &GaussianMixture,
    kernel: &KernelSpec,
    i: usize,
    j: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_pairs < 10_000 {
        return Err(UsfError::InvalidParameter(format!("n_pairs must be at least 1e4, got {n_pairs}")));
    }
    let constants = derive_constants(kernel);
    constants.require_nondegenerate()?;
    let couples = n_pairs.div_ceil(2);
    let per_batch = couples.div_ceil(ORACLE_BATCHES);
    let mass = f.mass();

    let batches: Vec<Result<(f64, f64)>> = (0..ORACLE_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng: ChaCha8Rng = stream_rng(seed, 0, b as u64);
            let count = per_batch.min(couples.saturating_sub(b * per_batch));
            let mut sum = 0.0;
            for _ in 0..count {
                let (ca, cb) = (f.pick(&mut rng), f.pick(&mut rng));
                let za = normal3(&mut rng);
                let zb = normal3(&mut rng);
                let mut couple = 0.0;
                for sign in [1.0, -1.0] {
                    let v = ca.transform(&(za * sign));
                    let vs = cb.transform(&(zb * sign));
                    couple += sampled_delta_w(&v, &vs, i, j, kernel, &mut rng)?;
                }
                sum += 0.5 * couple;
            }
            Ok((sum, count as f64))
        })
        .collect();
    let mut sums = Vec::with_capacity(ORACLE_BATCHES);
    let mut counts = Vec::with_capacity(ORACLE_BATCHES);
    for r in batches {
        let (s, c) = r?;
        if c > 0.0 {
            sums.push(s);
            counts.push(c);
        }
    }
    let scale = mass * mass * 0.5 * constants.sigma_t;
    let mean = sums.iter().sum::<f64>() / counts.iter().sum::<f64>();
    Ok(McEstimate {
        estimate: scale * mean,
        standard_error: scale * jackknife_std_error(&sums, &counts),
    })
}

fn normal3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn sampled_delta_w<R: Rng + ?Sized>(v: &Vec3, vs: &Vec3, i: usize, j: usize, kernel: &KernelSpec, rng: &mut R) -> Result<f64> {
    let g = vs - v;
    let speed = g.norm();
    if speed == 0.0 {
        return Ok(0.0);
    }
    let omega = sample_omega(kernel, &(g / speed), rng)?;
    let (vp, vsp) = post_collision(v, vs, &omega);
    Ok(vp[i] * vp[j] + vsp[i] * vsp[j] - v[i] * v[j] - vs[i] * vs[j])
}

/// Implied relaxation rate `−⟨Q(f,f), v1v2⟩ / d12` for `f = μ + ε·h`, where
/// `h` carries only a `v1 v2` moment. Equals `2 b0` by bilinearity.
pub fn relaxation_rate_check(kernel: &KernelSpec, epsilon: f64) -> f64 {
    let b0 = derive_constants(kernel).b0;
    let mut second = Matrix3::identity();
    second[(0, 1)] = epsilon;
    second[(1, 0)] = epsilon;
    let f = DistributionMoments {
        mass: 1.0,
        momentum: Vector3::zeros(),
        second,
    };
    -q_moment(&f, 0, 1, b0) / epsilon
}

/// Test distribution seeded deterministically, used by the identity suite.
pub fn random_velocity_pair(seed: u64, scale: f64) -> (Vec3, Vec3) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = normal3(&mut rng) * scale;
    let vs = normal3(&mut rng) * scale;
    (v, vs)
}
