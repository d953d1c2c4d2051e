//! Zero-frequency second-moment dynamics `dU/dt + A U = R`.
//!
//! `U = (E, d12, d22)` collects the spatially averaged energy and the two
//! stress components of the perturbation. `A` is the 3×3 moment matrix, its
//! semigroup `exp(−tA)` and the rank-one limit projector drive the Duhamel
//! predictors for `U(t)` and `U(∞)`.

use nalgebra::{Complex, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UsfError};
use crate::stats::fit_exponential;

pub type C64 = Complex<f64>;

/// Shear rate, relaxation constant and the energy growth exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShearParams {
    pub alpha: f64,
    pub b0: f64,
    pub beta: f64,
}

impl ShearParams {
    /// Solves for `beta` from `(alpha, b0)`.
    pub fn new(alpha: f64, b0: f64) -> Result<Self> {
        let beta = solve_beta(alpha, b0)?;
        Ok(ShearParams { alpha, b0, beta })
    }

    /// Linearized growth exponent `alpha²/(6 b0)`.
    pub fn beta_linearized(&self) -> f64 {
        self.alpha * self.alpha / (6.0 * self.b0)
    }
}

/// Residual of the cubic `2β(2b0+2β)² − 4 b0 α²/3`.
pub fn beta_cubic_residual(beta: f64, alpha: f64, b0: f64) -> f64 {
    let c = 2.0 * b0 + 2.0 * beta;
    2.0 * beta * c * c - 4.0 * b0 * alpha * alpha / 3.0
}

/// Unique nonnegative root of the beta cubic. Newton from the linearized
/// value, falling back to bisection on `[0, α²/(6b0)]`.
pub fn solve_beta(alpha: f64, b0: f64) -> Result<f64> {
    if !(b0 > 0.0) || !b0.is_finite() {
        return Err(UsfError::InvalidParameter(format!("b0 must be positive, got {b0}")));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(UsfError::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let residual = |b: f64| beta_cubic_residual(b, alpha, b0);
    let (mut lo, mut hi) = (0.0, alpha * alpha / (6.0 * b0));
    let mut beta = hi;
    for _ in 0..200 {
        let r = residual(beta);
        if r == 0.0 {
            return Ok(beta);
        }
        if r < 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let c = 2.0 * b0 + 2.0 * beta;
        let slope = 2.0 * c * c + 8.0 * beta * c;
        let mut next = beta - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - beta).abs() <= 4.0 * f64::EPSILON * beta || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        beta = next;
    }
    Err(UsfError::Convergence(format!(
        "beta cubic did not converge for alpha={alpha}, b0={b0}"
    )))
}

/// The moment matrix `2βI + [[0,2α,0],[0,2b0,α],[−2b0/3,0,2b0]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMatrix(pub Matrix3<f64>);

pub fn build_matrix(params: &ShearParams) -> MomentMatrix {
    let ShearParams { alpha, b0, beta } = *params;
    MomentMatrix(Matrix3::new(
        2.0 * beta,
        2.0 * alpha,
        0.0,
        0.0,
        2.0 * b0 + 2.0 * beta,
        alpha,
        -2.0 * b0 / 3.0,
        0.0,
        2.0 * b0 + 2.0 * beta,
    ))
}

/// Analytic eigenvalues `(0, λ₂, λ₃)` with
/// `λ₂,₃ = 2b0 + 3β ± i·√(4 b0 β + 3β²)`, the nonzero roots of
/// `λ² − 2(2b0+3β)λ + 4(b0+β)(b0+3β)`.
pub fn analytic_eigenvalues(params: &ShearParams) -> [C64; 3] {
    let ShearParams { b0, beta, .. } = *params;
    let re = 2.0 * b0 + 3.0 * beta;
    let im = (4.0 * b0 * beta + 3.0 * beta * beta).sqrt();
    [C64::new(0.0, 0.0), C64::new(re, im), C64::new(re, -im)]
}

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub params: ShearParams,
    pub matrix: MomentMatrix,
    /// `λ₁ = 0`, then the conjugate pair.
    pub eigenvalues: [C64; 3],
    /// Columns are eigenvectors; the first spans the kernel.
    pub q: Matrix3<C64>,
    pub q_inv: Matrix3<C64>,
    /// Lower bound on the decay rate of the non-kernel modes, `Re λ₂`.
    pub spectral_gap: f64,
}

/// Builds the eigenbasis from the closed forms and cross-checks it against a
/// generic dense eigensolver and the similarity transform.
pub fn eigensystem(matrix: &MomentMatrix, params: &ShearParams) -> Result<EigenSystem> {
    let ShearParams { alpha, b0, beta } = *params;
    if !(b0 > 0.0) {
        return Err(UsfError::DegenerateKernel);
    }
    let eigenvalues = analytic_eigenvalues(params);
    let c = |x: f64| C64::new(x, 0.0);
    let q = if alpha == 0.0 {
        // A is block triangular; λ = 2b0 has a two-dimensional eigenspace.
        Matrix3::new(
            c(6.0 * b0),
            c(0.0),
            c(0.0),
            c(0.0),
            c(1.0),
            c(0.0),
            c(2.0 * b0),
            c(0.0),
            c(1.0),
        )
    } else {
        let column = |lambda: C64| {
            Vector3::new(
                c(-2.0 * alpha) / (c(2.0 * beta) - lambda),
                c(1.0),
                -(c(2.0 * beta + 2.0 * b0) - lambda) / alpha,
            )
        };
        let q1 = Vector3::new(c(alpha * alpha / beta), c(-alpha), c(2.0 * b0 + 2.0 * beta));
        Matrix3::from_columns(&[q1, column(eigenvalues[1]), column(eigenvalues[2])])
    };
    let q_inv = q
        .try_inverse()
        .ok_or_else(|| UsfError::Spectrum("eigenvector matrix is singular".into()))?;

    let scale = matrix.0.norm().max(1.0);
    let numeric = matrix.0.complex_eigenvalues();
    let mut unmatched: Vec<C64> = numeric.iter().copied().collect();
    for lambda in &eigenvalues {
        let (idx, dist) = unmatched
            .iter()
            .enumerate()
            .map(|(i, mu)| (i, (mu - lambda).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("three eigenvalues");
        if dist > 1e-9 * scale {
            return Err(UsfError::Spectrum(format!(
                "analytic eigenvalue {lambda} differs from dense solver by {dist:e}"
            )));
        }
        unmatched.swap_remove(idx);
    }

    let a_c = matrix.0.map(c);
    let diag = q_inv * a_c * q;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { eigenvalues[i] } else { c(0.0) };
            if (diag[(i, j)] - target).norm() > 1e-9 * scale {
                return Err(UsfError::Spectrum(format!(
                    "Q⁻¹AQ entry ({i},{j}) = {} deviates from {target}",
                    diag[(i, j)]
                )));
            }
        }
    }

    Ok(EigenSystem {
        params: *params,
        matrix: *matrix,
        eigenvalues,
        q,
        q_inv,
        spectral_gap: eigenvalues[1].re,
    })
}

impl EigenSystem {
    pub fn new(params: &ShearParams) -> Result<Self> {
        eigensystem(&build_matrix(params), params)
    }

    /// `exp(−tA)`.
    pub fn semigroup(&self, t: f64) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&Vector3::from_iterator(self.eigenvalues.iter().map(|l| (-l * t).exp())));
        (self.q * d * self.q_inv).map(|z| z.re)
    }

    /// Rank-one projector onto the kernel along the decaying eigenspace.
    pub fn limit_semigroup(&self) -> Matrix3<f64> {
        let d = Matrix3::from_diagonal(&Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)));
        (self.q * d * self.q_inv).map(|z| z.re)
    }

    /// Kernel vector `(α²/β, −α, 2b0+2β)` (or its `α → 0` limit).
    pub fn kernel_vector(&self) -> Vector3<f64> {
        self.q.column(0).map(|z| z.re)
    }

    /// `‖Q‖_F ‖Q⁻¹‖_F`, an upper bound on the 2-norm condition number.
    pub fn condition_number(&self) -> f64 {
        self.q.norm() * self.q_inv.norm()
    }
}

pub fn semigroup(eig: &EigenSystem, t: f64) -> Result<Matrix3<f64>> {
    if !(t >= 0.0) {
        return Err(UsfError::InvalidParameter(format!("semigroup time must be nonnegative, got {t}")));
    }
    Ok(eig.semigroup(t))
}

pub fn limit_semigroup(eig: &EigenSystem) -> Matrix3<f64> {
    eig.limit_semigroup()
}

/// Sampled collision source `R(t_k)`; the energy row is identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSeries {
    times: Vec<f64>,
    values: Vec<[f64; 3]>,
}

impl SourceSeries {
    pub fn new(times: Vec<f64>, values: Vec<[f64; 3]>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(UsfError::InvalidParameter(
                "source series needs matching, nonempty times and values".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(UsfError::InvalidParameter("source times must increase strictly".into()));
        }
        if let Some(k) = values.iter().position(|r| r[0] != 0.0) {
            return Err(UsfError::InvalidParameter(format!(
                "energy component of R must vanish, got {} at sample {k}",
                values[k][0]
            )));
        }
        Ok(SourceSeries { times, values })
    }

    /// Identically zero source on the given grid.
    pub fn zeros(times: Vec<f64>) -> Result<Self> {
        let n = times.len();
        Self::new(times, vec![[0.0; 3]; n])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    fn value(&self, k: usize) -> Vector3<f64> {
        Vector3::from(self.values[k])
    }

    fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Linear interpolation at `t` inside segment `k`.
    fn interpolate(&self, k: usize, t: f64) -> Vector3<f64> {
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        self.value(k) * (1.0 - w) + self.value(k + 1) * w
    }
}

fn check_resolution(eig: &EigenSystem, source: &SourceSeries) -> Result<()> {
    let limit = 0.05 / eig.params.b0;
    let step = source.max_step();
    if step > limit * (1.0 + 1e-9) {
        return Err(UsfError::InvalidParameter(format!(
            "source step {step} exceeds the trapezoid resolution limit 0.05/b0 = {limit}"
        )));
    }
    Ok(())
}

/// Duhamel prediction `U(t) = S(t−t0)U0 + ∫_{t0}^{t} S(t−s)R(s) ds` by the
/// trapezoid rule on the recorded grid, `t0` being the first sample time.
pub fn predict_u(eig: &EigenSystem, u0: &Vector3<f64>, source: &SourceSeries, t: f64) -> Result<Vector3<f64>> {
    check_resolution(eig, source)?;
    let times = source.times();
    let (start, end) = (times[0], *times.last().expect("nonempty"));
    if t < start || t > end * (1.0 + 1e-12) + 1e-12 {
        return Err(UsfError::OutOfRange { t, start, end });
    }
    let t = t.min(end);
    let mut acc = eig.semigroup(t - start) * u0;
    let integrand = |s: f64, r: Vector3<f64>| eig.semigroup(t - s) * r;
    for k in 0..times.len() - 1 {
        let (a, b) = (times[k], times[k + 1]);
        if a >= t {
            break;
        }
        let (hi, r_hi) = if b <= t { (b, source.value(k + 1)) } else { (t, source.interpolate(k, t)) };
        acc += (integrand(a, source.value(k)) + integrand(hi, r_hi)) * (0.5 * (hi - a));
    }
    Ok(acc)
}

/// Long-time prediction with diagnostics about the extrapolated tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfinityPrediction {
    pub u_infinity: [f64; 3],
    /// `∫ R` over the recorded grid.
    pub recorded_integral: [f64; 3],
    /// Extrapolated `∫_{T}^{∞} R`.
    pub tail_integral: [f64; 3],
    /// Magnitude bound on the uncertainty of the tail contribution.
    pub tail_bound: f64,
    /// Per component: fitted tail decay rate, or `None` when the tail sits at
    /// the noise floor (sign changes within the fit window) or vanishes.
    pub tail_rates: [Option<f64>; 3],
}

/// Fraction of samples used for the exponential tail fit.
pub const TAIL_FRACTION: f64 = 0.2;

/// `U(∞) = S∞ U0 + S∞ (∫_{t0}^{T} R + ∫_{T}^{∞} R)`, the last integral from an
/// exponential fitted to the final 20% of samples.
pub fn predict_u_infinity(eig: &EigenSystem, u0: &Vector3<f64>, source: &SourceSeries) -> Result<InfinityPrediction> {
    check_resolution(eig, source)?;
    let times = source.times();
    let n = times.len();
    let mut recorded = Vector3::zeros();
    for k in 0..n - 1 {
        recorded += (source.value(k) + source.value(k + 1)) * (0.5 * (times[k + 1] - times[k]));
    }

    let take = ((n as f64 * TAIL_FRACTION).ceil() as usize).clamp(3.min(n), n);
    let tail_t = &times[n - take..];
    let t_end = times[n - 1];
    let mut tail = Vector3::zeros();
    let mut tail_bound = 0.0;
    let mut tail_rates = [None; 3];
    for comp in 1..3 {
        let ys: Vec<f64> = source.values()[n - take..].iter().map(|r| r[comp]).collect();
        if ys.iter().all(|y| *y == 0.0) {
            continue;
        }
        let positive = ys.iter().all(|y| *y > 0.0);
        let negative = ys.iter().all(|y| *y < 0.0);
        if !(positive || negative) || take < 3 {
            // Noise floor: no extrapolation; the window's own magnitude
            // bounds what an unresolved tail could add.
            let span = tail_t[take - 1] - tail_t[0];
            tail_bound += ys.iter().fold(0.0f64, |m, y| m.max(y.abs())) * span.max(0.0);
            continue;
        }
        let mags: Vec<f64> = ys.iter().map(|y| y.abs()).collect();
        let fit = fit_exponential(tail_t, &mags, 1.0)?;
        if !(fit.rate > 0.0) {
            return Err(UsfError::NonDecayingTail(format!(
                "component {comp}: fitted rate {:.4e} over t ∈ [{:.4}, {:.4}] (last |R| = {:.4e})",
                fit.rate,
                tail_t[0],
                t_end,
                mags[take - 1]
            )));
        }
        let sign = if positive { 1.0 } else { -1.0 };
        let value = sign * (fit.intercept - fit.rate * t_end).exp() / fit.rate;
        tail[comp] = value;
        tail_bound += value.abs();
        tail_rates[comp] = Some(fit.rate);
    }

    let s_inf = eig.limit_semigroup();
    let u_inf = s_inf * (u0 + recorded + tail);
    Ok(InfinityPrediction {
        u_infinity: u_inf.into(),
        recorded_integral: recorded.into(),
        tail_integral: tail.into(),
        tail_bound,
        tail_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const B0: f64 = PI / 2.0;

    /// Plain bisection on the cubic, independent of the Newton path.
    fn bisect_beta(alpha: f64, b0: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, alpha * alpha / (6.0 * b0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if beta_cubic_residual(mid, alpha, b0) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn beta_examples() {
        assert_eq!(solve_beta(0.0, B0).unwrap(), 0.0);
        let b = solve_beta(0.1, B0).unwrap();
        assert!((b - bisect_beta(0.1, B0)).abs() < 1e-14);
        assert!((b - 1.0596e-3).abs() < 5e-8, "beta = {b}");
        let small = solve_beta(0.01, B0).unwrap();
        assert!((small - 1.06103e-5).abs() < 1e-9);
        assert!(small < 0.01f64.powi(2) / (6.0 * B0));
    }

    #[test]
    fn beta_rejects_bad_input() {
        assert!(solve_beta(-0.1, B0).is_err());
        assert!(solve_beta(0.1, 0.0).is_err());
        assert!(solve_beta(f64::NAN, B0).is_err());
    }

    #[test]
    fn matrix_entries() {
        let p = ShearParams::new(0.0, B0).unwrap();
        let a = build_matrix(&p).0;
        assert_eq!(a, Matrix3::new(0.0, 0.0, 0.0, 0.0, 2.0 * B0, 0.0, -2.0 * B0 / 3.0, 0.0, 2.0 * B0));
        let p = ShearParams::new(0.1, B0).unwrap();
        let a = build_matrix(&p).0;
        assert_eq!(a[(0, 1)], 0.2);
        assert_eq!(a[(1, 2)], 0.1);
        assert_eq!(a[(0, 0)], 2.0 * p.beta);
        assert_eq!(a[(1, 1)], 2.0 * B0 + 2.0 * p.beta);
        assert_eq!(a[(2, 2)], 2.0 * B0 + 2.0 * p.beta);
        assert!(a.determinant().abs() < 1e-12 * a.norm().powi(3));
    }

    #[test]
    fn alpha_zero_spectrum() {
        let eig = EigenSystem::new(&ShearParams::new(0.0, B0).unwrap()).unwrap();
        assert_eq!(eig.eigenvalues[0], C64::new(0.0, 0.0));
        assert!((eig.eigenvalues[1] - C64::new(2.0 * B0, 0.0)).norm() < 1e-15);
        assert!((eig.eigenvalues[2] - C64::new(2.0 * B0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn spectrum_at_alpha_point_one() {
        let p = ShearParams::new(0.1, B0).unwrap();
        let eig = EigenSystem::new(&p).unwrap();
        let l2 = eig.eigenvalues[1];
        assert!((l2.re - 3.14478).abs() < 1e-5);
        // roots of λ² − 2(2b0+3β)λ + 4(b0+β)(b0+3β)
        assert!((l2.im - 0.081616).abs() < 1e-5, "{l2}");
        let trace: f64 = eig.eigenvalues.iter().map(|l| l.re).sum();
        assert!((trace - 2.0 * (2.0 * B0 + 3.0 * p.beta)).abs() < 1e-12);
        assert!((trace - eig.matrix.0.trace()).abs() < 1e-12);
        let q1 = eig.kernel_vector();
        assert!((eig.matrix.0 * q1).norm() <= 1e-10);
    }

    fn alpha_zero_closed_form(t: f64, u: Vector3<f64>) -> Vector3<f64> {
        let e = (-2.0 * B0 * t).exp();
        Vector3::new(u[0], e * u[1], u[0] / 3.0 + e * (u[2] - u[0] / 3.0))
    }

    #[test]
    fn semigroup_alpha_zero_matches_triangular_solution() {
        let eig = EigenSystem::new(&ShearParams::new(0.0, B0).unwrap()).unwrap();
        let u = Vector3::new(0.63, 0.2, 0.1);
        for t in [0.0, 0.1, 0.7, 3.0] {
            let got = eig.semigroup(t) * u;
            assert!((got - alpha_zero_closed_form(t, u)).norm() < 1e-13);
        }
        assert!((eig.semigroup(0.0) - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn limit_projector() {
        let eig0 = EigenSystem::new(&ShearParams::new(0.0, B0).unwrap()).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 0.0, 0.0);
        assert!((eig0.limit_semigroup() - expected).norm() < 1e-14);
        let eig = EigenSystem::new(&ShearParams::new(0.1, B0).unwrap()).unwrap();
        let s = eig.limit_semigroup();
        assert!((s * s - s).norm() <= 1e-9);
        assert!((s - expected).iter().all(|d| d.abs() <= 0.1));
        let t = 20.0;
        let u = Vector3::new(1.0, -0.5, 0.3);
        let gap = (-2.0 * B0 * t).exp();
        assert!((eig.semigroup(t) * u - s * u).norm() <= eig.condition_number() * gap * u.norm() + 1e-14);
    }

    #[test]
    fn semigroup_properties() {
        for alpha in [0.0, 0.05, 0.1, 0.3] {
            let eig = EigenSystem::new(&ShearParams::new(alpha, B0).unwrap()).unwrap();
            let times = [0.1 / B0, 1.0 / B0, 5.0 / B0];
            for &t in &times {
                for &s in &times {
                    let lhs = eig.semigroup(t + s);
                    let rhs = eig.semigroup(t) * eig.semigroup(s);
                    assert!((lhs - rhs).norm() <= 1e-9);
                }
                let q1 = eig.kernel_vector();
                assert!((eig.semigroup(t) * q1 - q1).norm() <= 1e-9 * q1.norm().max(1.0));
            }
        }
    }

    #[test]
    fn non_kernel_modes_decay_at_the_gap_rate() {
        let eig = EigenSystem::new(&ShearParams::new(0.2, B0).unwrap()).unwrap();
        let s_inf = eig.limit_semigroup();
        let u = Vector3::new(0.4, -0.7, 1.1);
        let u_perp = u - s_inf * u;
        let c = eig.condition_number();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let bound = c * (-eig.spectral_gap * t).exp() * u_perp.norm();
            assert!((eig.semigroup(t) * u_perp).norm() <= bound);
        }
    }

    #[test]
    fn predict_u_zero_source() {
        let eig = EigenSystem::new(&ShearParams::new(0.1, B0).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let src = SourceSeries::zeros(grid).unwrap();
        let u0 = Vector3::new(0.63, 0.2, 0.1);
        let got = predict_u(&eig, &u0, &src, 0.73).unwrap();
        assert!((got - eig.semigroup(0.73) * u0).norm() < 1e-14);
        assert!(matches!(predict_u(&eig, &u0, &src, 1.5), Err(UsfError::OutOfRange { .. })));
    }

    #[test]
    fn predict_u_constant_source_alpha_zero() {
        let eig = EigenSystem::new(&ShearParams::new(0.0, B0).unwrap()).unwrap();
        let r = 0.3;
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let n = grid.len();
        let src = SourceSeries::new(grid, vec![[0.0, r, 0.0]; n]).unwrap();
        let got = predict_u(&eig, &Vector3::zeros(), &src, 10.0).unwrap();
        // u' = −2 b0 u + r
        assert!((got[1] - r / (2.0 * B0)).abs() < 1e-4);
    }

    /// Richardson-refined trapezoid on a fine grid, evaluated directly.
    fn reference_duhamel(eig: &EigenSystem, t: f64, r: impl Fn(f64) -> Vector3<f64>) -> Vector3<f64> {
        let trap = |n: usize| {
            let h = t / n as f64;
            let mut acc = Vector3::zeros();
            for k in 0..=n {
                let s = k as f64 * h;
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                acc += eig.semigroup(t - s) * r(s) * (w * h);
            }
            acc
        };
        let coarse = trap(4000);
        let fine = trap(8000);
        fine + (fine - coarse) / 3.0
    }

    #[test]
    fn predict_u_synthetic_decaying_source() {
        let eig = EigenSystem::new(&ShearParams::new(0.1, B0).unwrap()).unwrap();
        let r = |s: f64| Vector3::new(0.0, (-s).exp(), 0.0);
        let grid: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
        let vals: Vec<[f64; 3]> = grid.iter().map(|s| r(*s).into()).collect();
        let src = SourceSeries::new(grid, vals).unwrap();
        let u0 = Vector3::new(0.1, 0.0, -0.05);
        let t = 2.5;
        let got = predict_u(&eig, &u0, &src, t).unwrap() - eig.semigroup(t) * u0;
        let reference = reference_duhamel(&eig, t, r);
        assert!((got - reference).norm() <= 1e-4 * reference.norm());
    }

    #[test]
    fn predict_u_infinity_examples() {
        let eig0 = EigenSystem::new(&ShearParams::new(0.0, B0).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=1000).map(|i| i as f64 * 0.01).collect();
        let u0 = Vector3::new(0.5, 0.2, -0.1);
        let zero = SourceSeries::zeros(grid.clone()).unwrap();
        let p = predict_u_infinity(&eig0, &u0, &zero).unwrap();
        assert!((Vector3::from(p.u_infinity) - Vector3::new(0.5, 0.0, 0.5 / 3.0)).norm() < 1e-14);

        let vals: Vec<[f64; 3]> = grid.iter().map(|s| [0.0, (-s).exp(), 0.0]).collect();
        let src = SourceSeries::new(grid.clone(), vals).unwrap();
        let p = predict_u_infinity(&eig0, &u0, &src).unwrap();
        assert!((Vector3::from(p.u_infinity) - Vector3::new(0.5, 0.0, 0.5 / 3.0)).norm() < 1e-14);
        let total = p.recorded_integral[1] + p.tail_integral[1];
        assert!((total - 1.0).abs() < 1e-4, "∫R = {total}");
        let rate = p.tail_rates[1].unwrap();
        assert!((rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn finite_horizon_approaches_limit() {
        let eig = EigenSystem::new(&ShearParams::new(0.1, B0).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=600).map(|i| i as f64 * 0.01).collect();
        let vals: Vec<[f64; 3]> = grid
            .iter()
            .map(|s| [0.0, 0.4 * (-3.0 * s).exp(), -0.2 * (-4.0 * s).exp()])
            .collect();
        let src = SourceSeries::new(grid, vals).unwrap();
        let u0 = Vector3::new(0.3, 0.1, -0.2);
        let inf = predict_u_infinity(&eig, &u0, &src).unwrap();
        let c = eig.condition_number();
        for t in [1.0, 2.0, 4.0, 6.0] {
            let ut = predict_u(&eig, &u0, &src, t).unwrap();
            let gap = Vector3::from(inf.u_infinity) - ut;
            let bound = c * (-eig.spectral_gap.min(3.0) * t).exp() * 2.0;
            assert!(gap.norm() <= bound, "t={t}: {} > {bound}", gap.norm());
        }
    }

    #[test]
    fn non_decaying_tail_is_an_error() {
        let eig = EigenSystem::new(&ShearParams::new(0.1, B0).unwrap()).unwrap();
        let grid: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        let vals: Vec<[f64; 3]> = grid.iter().map(|s| [0.0, 0.1 * (0.5 * s).exp(), 0.0]).collect();
        let src = SourceSeries::new(grid, vals).unwrap();
        assert!(matches!(
            predict_u_infinity(&eig, &Vector3::zeros(), &src),
            Err(UsfError::NonDecayingTail(_))
        ));
    }

    #[test]
    fn source_series_rejects_energy_row() {
        assert!(SourceSeries::new(vec![0.0, 1.0], vec![[0.0; 3], [1e-3, 0.0, 0.0]]).is_err());
        assert!(SourceSeries::new(vec![0.0, 0.0], vec![[0.0; 3]; 2]).is_err());
    }

    #[test]
    fn coarse_source_rejected() {
        let eig = EigenSystem::new(&ShearParams::new(0.1, B0).unwrap()).unwrap();
        let src = SourceSeries::zeros(vec![0.0, 0.5, 1.0]).unwrap();
        assert!(predict_u(&eig, &Vector3::zeros(), &src, 1.0).is_err());
    }
}
