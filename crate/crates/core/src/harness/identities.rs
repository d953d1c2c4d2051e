//! Fast algebraic and Monte Carlo identity checks that need no long
//! simulation.

use std::f64::consts::PI;

use nalgebra::{Complex, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::closure::{
    mc_collision_moment_oracle, q_moment, random_velocity_pair, t_ij_closed, t_ij_quadrature, DistributionMoments, GaussianMixture,
    GaussianTestDistribution,
};
use crate::dsmc::{cell_of, collision_step, transport_step, SimState};
use crate::error::Result;
use crate::harness::verify::Verdict;
use crate::kernel::{derive_constants, derive_constants_quadrature, KernelSpec, Vec3};
use crate::moments::{null_structure_r, ModeChannel, ModeMoments, ParticleEnsemble};
use crate::profile::steady_moments;
use crate::spectral::{analytic_eigenvalues, beta_cubic_residual, build_matrix, solve_beta, ShearParams};

pub mod criteria {
    pub const CONSTANTS: &str = "1: kernel constants";
    pub const T_IJ: &str = "2: T_ij closed form";
    pub const CLOSURE: &str = "3: collision-moment closure";
    pub const SPECTRUM: &str = "4: beta and spectrum";
    pub const STEADY: &str = "5: steady moments span the kernel";
    pub const NULL_STRUCTURE: &str = "9: null-structure identity";
    pub const CONSERVATION: &str = "10: conservation battery";
}

const B0: f64 = PI / 2.0;

fn verdict(criterion: &str, measured: f64, tolerance: f64, detail: String) -> Verdict {
    Verdict {
        criterion: criterion.to_string(),
        passed: measured <= tolerance,
        measured,
        tolerance,
        detail,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn check_constants() -> Verdict {
    let kernel = KernelSpec::default();
    let closed = derive_constants(&kernel);
    let quad = derive_constants_quadrature(&kernel);
    let err = [
        rel(closed.sigma_t, 2.0 * PI),
        rel(closed.nu0, 2.0 * PI),
        rel(closed.b0, PI / 2.0),
        rel(quad.sigma_t, closed.sigma_t),
        rel(quad.nu0, closed.nu0),
        rel(quad.b0, closed.b0),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    verdict(
        criteria::CONSTANTS,
        err,
        1e-10,
        format!("σ_T = {}, ν0 = {}, b0 = {} (quadrature b0 = {})", closed.sigma_t, closed.nu0, closed.b0, quad.b0),
    )
}

pub fn check_t_ij(seed: u64) -> Result<Verdict> {
    let kernel = KernelSpec::default();
    let b0 = derive_constants(&kernel).b0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_rel, mut worst_trace) = (0.0f64, 0.0f64);
    for case in 0..100u64 {
        let (v, vs) = random_velocity_pair(seed.wrapping_add(case), 1.0 + case as f64 / 50.0);
        let (i, j) = (rng.random_range(0..3), rng.random_range(0..3));
        let closed = t_ij_closed(&v, &vs, i, j, b0);
        let quad = t_ij_quadrature(&v, &vs, i, j, &kernel)?;
        let scale = b0 * (v - vs).norm_squared();
        worst_rel = worst_rel.max((quad - closed).abs() / closed.abs().max(1e-3 * scale));
        let trace: f64 = (0..3).map(|k| t_ij_closed(&v, &vs, k, k, b0)).sum();
        worst_trace = worst_trace.max(trace.abs());
    }
    let mut v = verdict(
        criteria::T_IJ,
        worst_rel,
        1e-6,
        format!("100 random pairs, largest |ΣT_ii| = {worst_trace:.2e}"),
    );
    v.passed &= worst_trace <= 1e-8;
    Ok(v)
}

/// Named test distributions for the closure check: `(name, f, i, j)`.
pub fn closure_cases() -> Result<Vec<(String, GaussianMixture, usize, usize)>> {
    let g = |mass: f64, mean: [f64; 3], cov: Matrix3<f64>| GaussianTestDistribution::new(mass, Vector3::from(mean), cov);
    let shear = Matrix3::new(1.0, 0.2, 0.0, 0.2, 1.0, 0.0, 0.0, 0.0, 1.0);
    let stretched = Matrix3::from_diagonal(&Vector3::new(2.0, 0.5, 1.0));
    let tilted = Matrix3::new(1.5, -0.3, 0.1, -0.3, 0.8, 0.2, 0.1, 0.2, 1.2);
    Ok(vec![
        ("unit gaussian with d12 = 0.2".into(), GaussianMixture::single(g(1.0, [0.0; 3], shear)?), 0, 1),
        ("stretched gaussian, diagonal".into(), GaussianMixture::single(g(1.0, [0.0; 3], stretched)?), 0, 0),
        (
            "counter-streaming pair".into(),
            GaussianMixture::new(vec![g(0.5, [1.0, 0.5, 0.0], Matrix3::identity())?, g(0.5, [-1.0, -0.5, 0.0], Matrix3::identity())?])?,
            0,
            1,
        ),
        (
            "unequal mixture with drift".into(),
            GaussianMixture::new(vec![g(0.7, [0.3, 0.0, -0.2], tilted)?, g(0.5, [-0.4, 0.6, 0.0], stretched)?])?,
            1,
            1,
        ),
        ("shifted tilted gaussian".into(), GaussianMixture::single(g(1.3, [0.5, -0.4, 0.3], tilted)?), 0, 2),
    ])
}

pub fn check_closure(n_pairs: usize, seed: u64) -> Result<Verdict> {
    let kernel = KernelSpec::default();
    let b0 = derive_constants(&kernel).b0;
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (k, (name, f, i, j)) in closure_cases()?.into_iter().enumerate() {
        let exact = q_moment(&f.moments(), i, j, b0);
        let mc = mc_collision_moment_oracle(&f, &kernel, i, j, n_pairs, seed.wrapping_add(k as u64))?;
        let z = (mc.estimate - exact).abs() / mc.standard_error;
        worst = worst.max(z);
        details.push(format!("{name}: {exact:.5} vs {:.5} ± {:.1e}", mc.estimate, mc.standard_error));
    }
    Ok(verdict(criteria::CLOSURE, worst, 3.0, details.join("; ")))
}

pub fn check_spectrum() -> Result<Verdict> {
    let mut worst_residual = 0.0f64;
    let mut worst_eig = 0.0f64;
    let mut ratio_ok = true;
    for k in 1..=30 {
        let alpha = k as f64 * 0.01;
        let beta = solve_beta(alpha, B0)?;
        worst_residual = worst_residual.max(beta_cubic_residual(beta, alpha, B0).abs());
        let p = ShearParams { alpha, b0: B0, beta };
        let ratio = beta / p.beta_linearized();
        ratio_ok &= ratio > 0.9 && ratio < 1.0;
        let mut dense: Vec<Complex<f64>> = build_matrix(&p).0.complex_eigenvalues().iter().copied().collect();
        let mut exact = analytic_eigenvalues(&p).to_vec();
        let key = |z: &Complex<f64>| (z.re, z.im);
        dense.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite"));
        exact.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite"));
        for (a, b) in dense.iter().zip(&exact) {
            worst_eig = worst_eig.max((a - b).norm());
        }
    }
    let mut v = verdict(
        criteria::SPECTRUM,
        worst_eig,
        1e-10,
        format!("α ∈ {{0.01..0.30}}: max cubic residual {worst_residual:.2e}, β/(α²/6b0) in (0.9, 1): {ratio_ok}"),
    );
    v.passed &= worst_residual <= 1e-12 && ratio_ok;
    Ok(v)
}

fn bisect_beta(alpha: f64, b0: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, alpha * alpha / (6.0 * b0));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_cubic_residual(mid, alpha, b0) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn check_steady_moments() -> Result<Verdict> {
    let p = ShearParams::new(0.1, B0)?;
    let s = steady_moments(&p)?.as_array();
    let kernel_residual = (build_matrix(&p).0 * Vector3::from(s)).norm();
    let beta = bisect_beta(0.1, B0);
    let oracle = [3.0, -3.0 * beta / 0.1, 6.0 * beta * (B0 + beta) / 0.01];
    let expected = [3.0, -0.031788, 0.99932];
    let digits = (0..3).map(|k| rel(s[k], expected[k])).fold(0.0, f64::max);
    let oracle_err = (0..3).map(|k| rel(s[k], oracle[k])).fold(0.0, f64::max);
    let mut v = verdict(
        criteria::STEADY,
        kernel_residual,
        1e-10,
        format!(
            "({:.6}, {:.6}, {:.6}); vs tabulated rel {digits:.1e}, vs bisection rel {oracle_err:.1e}",
            s[0], s[1], s[2]
        ),
    );
    v.passed &= digits <= 1e-5 && oracle_err <= 1e-10;
    Ok(v)
}

/// Random band-limited fields with `K = 2` for every channel.
pub fn synthetic_modes(seed: u64, k_max: i32, amplitude: f64) -> Result<ModeMoments> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = ModeMoments::from_half_spectrum(k_max, &[])?;
    let entries: Vec<_> = probe
        .half_wavevectors()
        .map(|k| {
            let vals = std::array::from_fn(|_| {
                Complex::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * amplitude
            });
            (k, vals)
        })
        .collect();
    ModeMoments::from_half_spectrum(k_max, &entries)
}

/// Average over an `M³` grid with `M = 2K + 2` of the pointwise closure
/// applied to the synthesized local moments; exact for the trigonometric
/// polynomials involved.
pub fn pointwise_closure_average(modes: &ModeMoments, b0: f64) -> [f64; 3] {
    let m = (2 * modes.k_max() + 2) as usize;
    let mut acc = [0.0; 3];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let x = Vec3::new(a as f64, b as f64, c as f64) / m as f64;
                let f = |ch| modes.evaluate(ch, &x);
                let d22 = f(ModeChannel::V2Sq);
                let d12 = f(ModeChannel::V1V2);
                let second = Matrix3::new(f(ModeChannel::SpeedSq) - d22, d12, 0.0, d12, d22, 0.0, 0.0, 0.0, 0.0);
                let local = DistributionMoments {
                    mass: f(ModeChannel::Mass),
                    momentum: Vector3::new(f(ModeChannel::V1), f(ModeChannel::V2), f(ModeChannel::V3)),
                    second,
                };
                acc[1] += q_moment(&local, 0, 1, b0);
                acc[2] += q_moment(&local, 1, 1, b0);
            }
        }
    }
    let cells = (m * m * m) as f64;
    [0.0, acc[1] / cells, acc[2] / cells]
}

pub fn check_null_structure(seed: u64) -> Result<Verdict> {
    let mut worst = 0.0f64;
    for case in 0..4 {
        let modes = synthetic_modes(seed.wrapping_add(case), 2, 0.05)?;
        let r = null_structure_r(&modes, B0);
        let avg = pointwise_closure_average(&modes, B0);
        worst = worst.max((r[1] - avg[1]).abs()).max((r[2] - avg[2]).abs());
    }
    Ok(verdict(
        criteria::NULL_STRUCTURE,
        worst,
        1e-12,
        "4 random K = 2 fields, mode sum vs grid average of the pointwise closure".into(),
    ))
}

fn gaussian_state(n: usize, cells: usize, seed: u64) -> Result<SimState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
    let v = (0..n)
        .map(|_| Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    Ok(SimState::new(ParticleEnsemble::new(x, v, 0.0)?, cells))
}

pub fn check_conservation(seed: u64) -> Result<Verdict> {
    let kernel = KernelSpec::default();
    let grid = 2;
    let mut state = gaussian_state(20_000, 8, seed)?;
    let per_cell = |s: &SimState| {
        let mut acc = vec![(Vec3::zeros(), 0.0); 8];
        for (x, v) in s.ensemble.positions.iter().zip(&s.ensemble.velocities) {
            let c = cell_of(x, grid);
            acc[c].0 += v;
            acc[c].1 += v.norm_squared();
        }
        acc
    };
    let before = per_cell(&state);
    while state.collisions < 20_000 {
        collision_step(&mut state, 0.01, &kernel, grid, seed)?;
    }
    let drift = before
        .iter()
        .zip(per_cell(&state))
        .map(|(a, b)| (a.0 - b.0).norm().max((a.1 - b.1).abs()))
        .fold(0.0, f64::max);
    let allowed = 1e-9 * state.collisions as f64 / 1e4;

    let p = ShearParams::new(0.3, B0)?;
    let mut flow = gaussian_state(10_000, 1, seed ^ 0x5eed)?;
    flow.t = 1.5;
    let dt = 0.02;
    let v = &flow.ensemble.velocities;
    let s = |f: fn(&Vec3) -> f64| v.iter().map(f).sum::<f64>();
    let (s11, s12, s22, s33) = (s(|v| v.x * v.x), s(|v| v.x * v.y), s(|v| v.y * v.y), s(|v| v.z * v.z));
    let a = p.alpha;
    let exact = (-2.0 * p.beta * dt).exp() * (s11 - 2.0 * a * dt * s12 + a * a * dt * dt * s22 + s22 + s33);
    transport_step(&mut flow, dt, &p);
    let after: f64 = flow.ensemble.velocities.iter().map(|v| v.norm_squared()).sum();
    let law = rel(after, exact);

    let mut out = verdict(
        criteria::CONSERVATION,
        drift,
        allowed,
        format!(
            "{} collisions in 8 cells; transport energy law rel err {law:.1e}",
            state.collisions
        ),
    );
    out.passed &= law <= 1e-12;
    Ok(out)
}

/// Criteria 1–5, 9 and 10.
pub fn run_identities(n_pairs: usize, seed: u64) -> Result<Vec<Verdict>> {
    Ok(vec![
        check_constants(),
        check_t_ij(seed)?,
        check_closure(n_pairs, seed)?,
        check_spectrum()?,
        check_steady_moments()?,
        check_null_structure(seed)?,
        check_conservation(seed)?,
    ])
}
