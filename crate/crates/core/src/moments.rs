//! Velocity moments of particle ensembles: global averages, Fourier-mode
//! moments, the zero-frequency state `U` and the null-structure source `R`.

use std::f64::consts::PI;

use nalgebra::{Complex, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::DistributionMoments;
use crate::error::{Result, UsfError};
use crate::kernel::Vec3;
use crate::profile::SteadyMoments;
use crate::stats::jackknife_std_error;

type C64 = Complex<f64>;

/// Particles per reduction chunk. Chunk sums are combined in index order, so
/// reductions are bit-identical with or without threads.
const CHUNK: usize = 8192;

/// Blocks used for jackknife errors of ensemble averages.
pub const JACKKNIFE_BLOCKS: usize = 64;

/// Equal-weight particles on the unit torus `[0,1)³`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<Vec3>, velocities: Vec<Vec3>, time: f64) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(UsfError::InvalidParameter(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        if positions.is_empty() {
            return Err(UsfError::InvalidParameter("empty ensemble".into()));
        }
        if let Some(p) = positions.iter().find(|p| p.iter().any(|c| !(0.0..1.0).contains(c))) {
            return Err(UsfError::InvalidParameter(format!("position {p:?} outside the unit torus")));
        }
        Ok(ParticleEnsemble {
            positions,
            velocities,
            time,
        })
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Total momentum and second moments with unit total mass.
    pub fn velocity_moments(&self) -> DistributionMoments {
        let parts: Vec<(Vector3<f64>, Matrix3<f64>)> = self
            .velocities
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk.iter().fold((Vector3::zeros(), Matrix3::zeros()), |(m, s), v| {
                    (m + v, s + v * v.transpose())
                })
            })
            .collect();
        let (m, s) = parts
            .into_iter()
            .fold((Vector3::zeros(), Matrix3::zeros()), |(a, b), (m, s)| (a + m, b + s));
        let w = self.weight();
        DistributionMoments {
            mass: 1.0,
            momentum: m * w,
            second: s * w,
        }
    }
}

/// Velocity monomial `v1^a v2^b v3^c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monomial(pub [u8; 3]);

impl Monomial {
    pub const MAX_DEGREE: u32 = 4;

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn eval(&self, v: &Vec3) -> f64 {
        v.x.powi(self.0[0] as i32) * v.y.powi(self.0[1] as i32) * v.z.powi(self.0[2] as i32)
    }
}

/// `(1/N) Σ_j p(v_j)` for each monomial.
pub fn global_moments(ens: &ParticleEnsemble, monomials: &[Monomial]) -> Result<Vec<f64>> {
    if let Some(m) = monomials.iter().find(|m| m.degree() > Monomial::MAX_DEGREE) {
        return Err(UsfError::UnsupportedDegree(m.degree()));
    }
    let parts: Vec<Vec<f64>> = ens
        .velocities
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; monomials.len()];
            for v in chunk {
                for (a, m) in acc.iter_mut().zip(monomials) {
                    *a += m.eval(v);
                }
            }
            acc
        })
        .collect();
    let w = ens.weight();
    let mut total = vec![0.0; monomials.len()];
    for p in parts {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    Ok(total.into_iter().map(|t| t * w).collect())
}

/// Velocity weights carried by the mode moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeChannel {
    Mass,
    V1,
    V2,
    V3,
    V1V2,
    V2Sq,
    SpeedSq,
}

impl ModeChannel {
    pub const ALL: [ModeChannel; 7] = [
        ModeChannel::Mass,
        ModeChannel::V1,
        ModeChannel::V2,
        ModeChannel::V3,
        ModeChannel::V1V2,
        ModeChannel::V2Sq,
        ModeChannel::SpeedSq,
    ];
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        self as usize
    }

    fn weights(v: &Vec3) -> [f64; 7] {
        [1.0, v.x, v.y, v.z, v.x * v.y, v.y * v.y, v.norm_squared()]
    }
}

/// Empirical Fourier coefficients `m_p(k) = (1/N) Σ_j e^{−2πi k·x_j} p(v_j)`
/// for all `0 < ‖k‖∞ ≤ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMoments {
    k_max: i32,
    /// Dense `(2K+1)³` table indexed by `k + K` per axis; the zero mode is
    /// stored as zero.
    values: Vec<[C64; 7]>,
}

impl ModeMoments {
    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    fn side(&self) -> usize {
        (2 * self.k_max + 1) as usize
    }

    fn slot(&self, k: [i32; 3]) -> Option<usize> {
        if k.iter().any(|c| c.abs() > self.k_max) {
            return None;
        }
        let s = self.side();
        let idx = |c: i32| (c + self.k_max) as usize;
        Some((idx(k[0]) * s + idx(k[1])) * s + idx(k[2]))
    }

    /// All nonzero wavevectors with `‖k‖∞ ≤ K`.
    pub fn wavevectors(&self) -> impl Iterator<Item = [i32; 3]> + '_ {
        let k = self.k_max;
        (-k..=k)
            .flat_map(move |a| (-k..=k).flat_map(move |b| (-k..=k).map(move |c| [a, b, c])))
            .filter(|w| *w != [0, 0, 0])
    }

    /// Wavevectors whose first nonzero component is positive; together with
    /// their negatives they cover every nonzero mode once.
    pub fn half_wavevectors(&self) -> impl Iterator<Item = [i32; 3]> + '_ {
        self.wavevectors().filter(|w| is_positive_half(*w))
    }

    pub fn get(&self, k: [i32; 3], channel: ModeChannel) -> Option<C64> {
        if k == [0, 0, 0] {
            return None;
        }
        self.slot(k).map(|s| self.values[s][channel.index()])
    }

    /// Builds mode moments from the positive half of the spectrum, filling the
    /// negative half by conjugation.
    pub fn from_half_spectrum(k_max: i32, entries: &[([i32; 3], [C64; 7])]) -> Result<Self> {
        if k_max < 1 {
            return Err(UsfError::InvalidParameter(format!("mode cutoff must be at least 1, got {k_max}")));
        }
        let side = (2 * k_max + 1) as usize;
        let mut modes = ModeMoments {
            k_max,
            values: vec![[C64::new(0.0, 0.0); 7]; side * side * side],
        };
        for (k, vals) in entries {
            if !is_positive_half(*k) {
                return Err(UsfError::InvalidParameter(format!("{k:?} is not in the positive half-space")));
            }
            let s = modes
                .slot(*k)
                .ok_or_else(|| UsfError::InvalidParameter(format!("{k:?} exceeds the mode cutoff")))?;
            let n = modes.slot([-k[0], -k[1], -k[2]]).expect("symmetric range");
            modes.values[s] = *vals;
            modes.values[n] = vals.map(|z| z.conj());
        }
        Ok(modes)
    }

    /// Real field `Σ_{k≠0} m(k) e^{2πi k·x}` of one channel, i.e. the
    /// nonzero-frequency part of the corresponding moment density.
    pub fn evaluate(&self, channel: ModeChannel, x: &Vec3) -> f64 {
        self.wavevectors()
            .map(|k| {
                let phase = 2.0 * PI * (k[0] as f64 * x.x + k[1] as f64 * x.y + k[2] as f64 * x.z);
                let m = self.get(k, channel).expect("in range");
                m.re * phase.cos() - m.im * phase.sin()
            })
            .sum()
    }
}

fn is_positive_half(k: [i32; 3]) -> bool {
    k[0] > 0 || (k[0] == 0 && (k[1] > 0 || (k[1] == 0 && k[2] > 0)))
}

/// Direct evaluation of the exponential sums, `O(N K³)`.
pub fn mode_moments(ens: &ParticleEnsemble, k_max: i32) -> Result<ModeMoments> {
    if k_max < 1 {
        return Err(UsfError::InvalidParameter(format!("mode cutoff must be at least 1, got {k_max}")));
    }
    let k = k_max;
    let half: Vec<[i32; 3]> = (-k..=k)
        .flat_map(|a| (-k..=k).flat_map(move |b| (-k..=k).map(move |c| [a, b, c])))
        .filter(|w| is_positive_half(*w))
        .collect();
    let h = half.len();
    let side = (2 * k + 1) as usize;
    let offset = |c: i32| (c + k) as usize;
    let index: Vec<[usize; 3]> = half.iter().map(|w| [offset(w[0]), offset(w[1]), offset(w[2])]).collect();

    let parts: Vec<(Vec<f64>, Vec<f64>)> = ens
        .positions
        .par_chunks(CHUNK)
        .zip(ens.velocities.par_chunks(CHUNK))
        .map(|(xs, vs)| {
            let mut acc_re = vec![0.0; ModeChannel::COUNT * h];
            let mut acc_im = vec![0.0; ModeChannel::COUNT * h];
            let mut axis = [vec![C64::new(0.0, 0.0); side], vec![C64::new(0.0, 0.0); side], vec![C64::new(0.0, 0.0); side]];
            let mut ph_re = vec![0.0; h];
            let mut ph_im = vec![0.0; h];
            for (x, v) in xs.iter().zip(vs) {
                for d in 0..3 {
                    let (s, c) = (2.0 * PI * x[d]).sin_cos();
                    let base = C64::new(c, -s);
                    let table = &mut axis[d];
                    table[k as usize] = C64::new(1.0, 0.0);
                    let mut p = C64::new(1.0, 0.0);
                    for m in 1..=k as usize {
                        p *= base;
                        table[k as usize + m] = p;
                        table[k as usize - m] = p.conj();
                    }
                }
                for (q, idx) in index.iter().enumerate() {
                    let z = axis[0][idx[0]] * axis[1][idx[1]] * axis[2][idx[2]];
                    ph_re[q] = z.re;
                    ph_im[q] = z.im;
                }
                let w = ModeChannel::weights(v);
                for (c, wc) in w.iter().enumerate() {
                    let re = &mut acc_re[c * h..(c + 1) * h];
                    let im = &mut acc_im[c * h..(c + 1) * h];
                    for q in 0..h {
                        re[q] += wc * ph_re[q];
                        im[q] += wc * ph_im[q];
                    }
                }
            }
            (acc_re, acc_im)
        })
        .collect();

    let mut re = vec![0.0; ModeChannel::COUNT * h];
    let mut im = vec![0.0; ModeChannel::COUNT * h];
    for (pr, pi) in parts {
        for (a, b) in re.iter_mut().zip(pr) {
            *a += b;
        }
        for (a, b) in im.iter_mut().zip(pi) {
            *a += b;
        }
    }
    let w = ens.weight();
    let entries: Vec<([i32; 3], [C64; 7])> = half
        .iter()
        .enumerate()
        .map(|(q, kv)| {
            let vals = std::array::from_fn(|c| C64::new(re[c * h + q] * w, im[c * h + q] * w));
            (*kv, vals)
        })
        .collect();
    ModeMoments::from_half_spectrum(k_max, &entries)
}

/// Zero-frequency second moments of the perturbation `f − G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentState {
    /// `(P0 E, P0 d12, P0 d22)` of the perturbation.
    pub u: [f64; 3],
    /// Same moments of the full distribution.
    pub raw: [f64; 3],
    pub reference: SteadyMoments,
    /// Jackknife standard errors of `raw` (hence of `u`).
    pub std_error: [f64; 3],
}

/// Raw moments `(⟨|v|²⟩, ⟨v1v2⟩, ⟨v2²⟩)` minus the profile's.
pub fn assemble_u(ens: &ParticleEnsemble, reference: &SteadyMoments) -> MomentState {
    let n = ens.len();
    let nb = JACKKNIFE_BLOCKS.min(n);
    let block_len = n.div_ceil(nb);
    let blocks: Vec<([f64; 3], f64)> = ens
        .velocities
        .par_chunks(block_len)
        .map(|chunk| {
            let mut s = [0.0; 3];
            for v in chunk {
                s[0] += v.norm_squared();
                s[1] += v.x * v.y;
                s[2] += v.y * v.y;
            }
            (s, chunk.len() as f64)
        })
        .collect();
    let counts: Vec<f64> = blocks.iter().map(|b| b.1).collect();
    let w = ens.weight();
    let mut raw = [0.0; 3];
    let mut std_error = [0.0; 3];
    for c in 0..3 {
        let sums: Vec<f64> = blocks.iter().map(|b| b.0[c]).collect();
        raw[c] = sums.iter().sum::<f64>() * w;
        std_error[c] = jackknife_std_error(&sums, &counts);
    }
    let r = reference.as_array();
    MomentState {
        u: std::array::from_fn(|c| raw[c] - r[c]),
        raw,
        reference: *reference,
        std_error,
    }
}

/// Zero-frequency collision source `R = (0, R2, R3)` from nonzero modes:
///
/// `R2 = −2b0 Re Σ_k [m_{v1v2} m̄_1 − m_{v1} m̄_{v2}]`,
/// `R3 = −2b0 Re Σ_k [(m_{v2²} − m_{|v|²}/3) m̄_1 − |m_{v2}|² + Σ_i |m_{vi}|²/3]`.
///
/// The self-pair terms `(1/N²) Σ_j p(v_j) q(v_j)` of the two products in each
/// bracket are equal, so they cancel and need no debiasing.
pub fn null_structure_r(modes: &ModeMoments, b0: f64) -> [f64; 3] {
    use ModeChannel::*;
    let mut r2 = 0.0;
    let mut r3 = 0.0;
    for k in modes.half_wavevectors() {
        let m = |c: ModeChannel| modes.get(k, c).expect("in range");
        let mass = m(Mass);
        r2 += (m(V1V2) * mass.conj() - m(V1) * m(V2).conj()).re;
        let flux = [m(V1), m(V2), m(V3)];
        let sq: f64 = flux.iter().map(|z| z.norm_sqr()).sum();
        r3 += ((m(V2Sq) - m(SpeedSq) / 3.0) * mass.conj()).re - m(V2).norm_sqr() + sq / 3.0;
    }
    // ±k contribute equal real parts
    [0.0, -4.0 * b0 * r2, -4.0 * b0 * r3]
}

/// `E_α = ⟨f,|v|²⟩ − ⟨G,|v|²⟩` in the self-similar frame; identical to `U1`.
pub fn renormalized_energy(ens: &ParticleEnsemble, reference: &SteadyMoments) -> f64 {
    assemble_u(ens, reference).u[0]
}

/// Lab-frame energy `∫∫F|v|² = e^{2βt}(⟨G,|v|²⟩ + E_α(t))`.
pub fn lab_frame_energy(e_alpha: f64, reference_energy: f64, beta: f64, t: f64) -> f64 {
    (2.0 * beta * t).exp() * (reference_energy + e_alpha)
}

/// Inverse of [`lab_frame_energy`]: `e^{−2βt}·lab − ⟨G,|v|²⟩`.
pub fn renormalized_from_lab(lab_energy: f64, reference_energy: f64, beta: f64, t: f64) -> f64 {
    (-2.0 * beta * t).exp() * lab_energy - reference_energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::q_moment;
    use crate::profile::{sample_profile, ProfileOrder, ProfileSpec};
    use crate::kernel::{derive_constants, KernelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_positions(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    fn maxwell_ensemble(n: usize, seed: u64) -> ParticleEnsemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = ProfileSpec::new(0.0, ProfileOrder::Maxwellian, derive_constants(&KernelSpec::default())).unwrap();
        let v = sample_profile(&spec, n, &mut rng).unwrap();
        let x = uniform_positions(n, &mut rng);
        ParticleEnsemble::new(x, v, 0.0).unwrap()
    }

    #[test]
    fn global_moments_of_resting_particles() {
        let ens = ParticleEnsemble::new(vec![Vec3::new(0.1, 0.2, 0.3); 4], vec![Vec3::zeros(); 4], 0.0).unwrap();
        let m = global_moments(&ens, &[Monomial([0, 0, 0]), Monomial([2, 0, 0]), Monomial([1, 1, 2])]).unwrap();
        assert_eq!(m, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            global_moments(&ens, &[Monomial([3, 1, 1])]),
            Err(UsfError::UnsupportedDegree(5))
        ));
    }

    #[test]
    fn maxwellian_energy() {
        let n = 200_000;
        let ens = maxwell_ensemble(n, 2);
        let e = global_moments(&ens, &[Monomial([2, 0, 0]), Monomial([0, 2, 0]), Monomial([0, 0, 2])])
            .unwrap()
            .iter()
            .sum::<f64>();
        assert!((e - 3.0).abs() < 3.0 * (6.0 / n as f64).sqrt());
    }

    #[test]
    fn ensemble_rejects_out_of_torus() {
        assert!(ParticleEnsemble::new(vec![Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::zeros()], 0.0).is_err());
        assert!(ParticleEnsemble::new(vec![Vec3::zeros()], vec![], 0.0).is_err());
    }

    #[test]
    fn single_particle_at_origin() {
        let v = Vec3::new(0.5, -2.0, 1.0);
        let ens = ParticleEnsemble::new(vec![Vec3::zeros()], vec![v], 0.0).unwrap();
        let modes = mode_moments(&ens, 2).unwrap();
        for k in modes.wavevectors() {
            assert!((modes.get(k, ModeChannel::Mass).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-14);
            assert!((modes.get(k, ModeChannel::V1V2).unwrap() - C64::new(-1.0, 0.0)).norm() < 1e-14);
            assert!((modes.get(k, ModeChannel::SpeedSq).unwrap() - C64::new(5.25, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn equispaced_positions_cancel() {
        let n = 64;
        let x: Vec<Vec3> = (0..n).map(|j| Vec3::new(j as f64 / n as f64, 0.0, 0.0)).collect();
        let ens = ParticleEnsemble::new(x, vec![Vec3::zeros(); n], 0.0).unwrap();
        let modes = mode_moments(&ens, 3).unwrap();
        assert!(modes.get([1, 0, 0], ModeChannel::Mass).unwrap().norm() < 1e-14);
    }

    #[test]
    fn conjugate_symmetry_and_shot_noise() {
        let n = 20_000;
        let ens = maxwell_ensemble(n, 4);
        let modes = mode_moments(&ens, 3).unwrap();
        for k in modes.wavevectors() {
            let neg = [-k[0], -k[1], -k[2]];
            for c in ModeChannel::ALL {
                assert_eq!(modes.get(k, c).unwrap(), modes.get(neg, c).unwrap().conj());
            }
            assert!(modes.get(k, ModeChannel::Mass).unwrap().norm() <= 5.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn mode_moments_match_naive_sum() {
        let n = 300;
        let ens = maxwell_ensemble(n, 8);
        let modes = mode_moments(&ens, 2).unwrap();
        for k in [[1, 0, 0], [0, -2, 1], [2, 2, -2]] {
            let mut acc = C64::new(0.0, 0.0);
            for (x, v) in ens.positions.iter().zip(&ens.velocities) {
                let ph = -2.0 * PI * (k[0] as f64 * x.x + k[1] as f64 * x.y + k[2] as f64 * x.z);
                acc += C64::new(ph.cos(), ph.sin()) * (v.x * v.y);
            }
            acc /= n as f64;
            assert!((acc - modes.get(k, ModeChannel::V1V2).unwrap()).norm() < 1e-13);
        }
    }

    #[test]
    fn assemble_u_examples() {
        let n = 200_000;
        let ens = maxwell_ensemble(n, 5);
        let reference = SteadyMoments { energy: 3.0, d12: 0.0, d22: 1.0 };
        let st = assemble_u(&ens, &reference);
        for c in 0..3 {
            assert!(st.u[c].abs() < 4.0 * st.std_error[c], "{st:?}");
            assert_eq!(st.u[c], st.raw[c] - reference.as_array()[c]);
        }
        let scaled = ParticleEnsemble::new(ens.positions.clone(), ens.velocities.iter().map(|v| v * 1.1).collect(), 0.0).unwrap();
        let st = assemble_u(&scaled, &reference);
        assert!((st.u[0] - 0.63).abs() < 4.0 * st.std_error[0]);
        assert_eq!(renormalized_energy(&scaled, &reference), st.u[0]);
    }

    #[test]
    fn merged_ensembles_average_raw_moments() {
        let a = maxwell_ensemble(4096, 1);
        let b = maxwell_ensemble(4096, 2);
        let merged = ParticleEnsemble::new(
            [a.positions.clone(), b.positions.clone()].concat(),
            [a.velocities.clone(), b.velocities.clone()].concat(),
            0.0,
        )
        .unwrap();
        let reference = SteadyMoments { energy: 3.0, d12: 0.0, d22: 1.0 };
        let (ra, rb, rm) = (assemble_u(&a, &reference), assemble_u(&b, &reference), assemble_u(&merged, &reference));
        for c in 0..3 {
            assert!((rm.raw[c] - 0.5 * (ra.raw[c] + rb.raw[c])).abs() < 1e-14);
        }
    }

    #[test]
    fn lab_frame_round_trip() {
        let (beta, t) = (1.0596e-3, 4.0);
        let lab = lab_frame_energy(0.2, 3.0, beta, t);
        assert!((renormalized_from_lab(lab, 3.0, beta, t) - 0.2).abs() < 1e-14);
        // stationary self-similar state: lab energy grows by e^{2βΔt}
        let ratio = lab_frame_energy(0.2, 3.0, beta, t + 1.0) / lab;
        assert!((ratio - (2.0 * beta).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_mode_source() {
        let (a, d) = (C64::new(0.1, 0.05), C64::new(-0.02, 0.03));
        let mut vals = [C64::new(0.0, 0.0); 7];
        vals[ModeChannel::Mass.index()] = a;
        vals[ModeChannel::V1V2.index()] = d;
        let modes = ModeMoments::from_half_spectrum(3, &[([1, 0, 0], vals)]).unwrap();
        let b0 = PI / 2.0;
        let r = null_structure_r(&modes, b0);
        assert_eq!(r[0], 0.0);
        assert!((r[1] + 2.0 * b0 * 2.0 * (d * a.conj()).re).abs() < 1e-15);
    }

    #[test]
    fn uniform_ensemble_has_small_source() {
        let ens = maxwell_ensemble(50_000, 12);
        let modes = mode_moments(&ens, 3).unwrap();
        let r = null_structure_r(&modes, PI / 2.0);
        // 342 modes of products of O(N^{-1/2}) coefficients
        assert!(r[1].abs() < 0.05 && r[2].abs() < 0.05, "{r:?}");
    }

    #[test]
    fn mode_sum_equals_average_of_pointwise_closure() {
        let k_max = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let modes = {
            let probe = ModeMoments::from_half_spectrum(k_max, &[]).unwrap();
            let entries: Vec<_> = probe
                .half_wavevectors()
                .map(|k| (k, std::array::from_fn(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.1)))
                .collect();
            ModeMoments::from_half_spectrum(k_max, &entries).unwrap()
        };
        let b0 = PI / 2.0;
        let r = null_structure_r(&modes, b0);
        let m = (2 * k_max + 2) as usize;
        let mut avg = [0.0; 2];
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    let x = Vec3::new(i as f64, j as f64, l as f64) / m as f64;
                    let f = |c| modes.evaluate(c, &x);
                    let mut second = Matrix3::zeros();
                    second[(0, 1)] = f(ModeChannel::V1V2);
                    second[(1, 0)] = second[(0, 1)];
                    second[(1, 1)] = f(ModeChannel::V2Sq);
                    second[(0, 0)] = f(ModeChannel::SpeedSq) - second[(1, 1)];
                    let local = DistributionMoments {
                        mass: f(ModeChannel::Mass),
                        momentum: Vector3::new(f(ModeChannel::V1), f(ModeChannel::V2), f(ModeChannel::V3)),
                        second,
                    };
                    avg[0] += q_moment(&local, 0, 1, b0);
                    avg[1] += q_moment(&local, 1, 1, b0);
                }
            }
        }
        let cells = (m * m * m) as f64;
        assert!((avg[0] / cells - r[1]).abs() < 1e-12);
        assert!((avg[1] / cells - r[2]).abs() < 1e-12);
    }
}
