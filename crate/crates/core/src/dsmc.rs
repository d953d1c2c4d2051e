//! Direct simulation Monte Carlo in the self-similar frame.
//!
//! Each step applies the exact characteristic flow of the shear and
//! rescaling terms, then Maxwell-molecule collisions between particle pairs
//! drawn within fixed cubic cells.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UsfError};
use crate::kernel::{derive_constants, post_collision, sample_omega, CollisionConstants, KernelSpec, Vec3};
use crate::moments::{assemble_u, mode_moments, null_structure_r, ModeChannel, MomentState, ParticleEnsemble};
use crate::profile::{sample_profile, steady_moments, ProfileOrder, ProfileSpec, SteadyMoments, DEFAULT_TRUNCATION_RADIUS};
use crate::rng::{stream_rng, streams};
use crate::spectral::ShearParams;

/// Speed scale in the transport step-size bound.
pub const V_MAX: f64 = 8.0;
/// Minimum mean number of particles per cell.
pub const MIN_PARTICLES_PER_CELL: f64 = 20.0;

/// Velocity weight of a spatially modulated initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityShape {
    /// Density modulation `1 + ε cos(2πk·x)`.
    Mass,
    /// `1 + ε cos(2πk·x) tanh(v1 v2)`.
    D12,
    /// `1 + ε cos(2πk·x) tanh((|v|² − 3)/3)`.
    Energy,
}

impl std::str::FromStr for VelocityShape {
    type Err = UsfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(VelocityShape::Mass),
            "d12" => Ok(VelocityShape::D12),
            "energy" => Ok(VelocityShape::Energy),
            other => Err(UsfError::Config(format!("unknown velocity shape `{other}`"))),
        }
    }
}

impl std::fmt::Display for VelocityShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VelocityShape::Mass => "mass",
            VelocityShape::D12 => "d12",
            VelocityShape::Energy => "energy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitSpec {
    /// Uniform positions, velocities from the profile sampler.
    Profile,
    Perturbed {
        mode: [i32; 3],
        amplitude: f64,
        shape: VelocityShape,
    },
    /// Uniform positions, centred Gaussian velocities whose
    /// `(E, d12, d22)` equal the steady moments plus `u0`.
    Anisotropic { u0: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub n_particles: usize,
    /// Cells per axis.
    pub grid: usize,
    /// Requested step; `None` picks the largest admissible one.
    pub dt: Option<f64>,
    pub t_end: f64,
    pub seed: u64,
    pub output_every: usize,
    pub k_modes: i32,
    pub init: InitSpec,
    pub profile_order: ProfileOrder,
    pub truncation_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            alpha: 0.1,
            kernel: KernelSpec::default(),
            n_particles: 100_000,
            grid: 1,
            dt: None,
            t_end: 1.0,
            seed: 1,
            output_every: 10,
            k_modes: 3,
            init: InitSpec::Profile,
            profile_order: ProfileOrder::FirstOrder,
            truncation_radius: DEFAULT_TRUNCATION_RADIUS,
        }
    }
}

/// Resolved time stepping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub dt: f64,
    pub n_steps: u64,
    pub dt_max: f64,
}

impl SimConfig {
    pub fn constants(&self) -> CollisionConstants {
        derive_constants(&self.kernel)
    }

    pub fn shear_params(&self) -> Result<ShearParams> {
        let c = self.constants();
        c.require_nondegenerate()?;
        ShearParams::new(self.alpha, c.b0)
    }

    pub fn cells(&self) -> usize {
        self.grid * self.grid * self.grid
    }

    pub fn profile_spec(&self) -> Result<ProfileSpec> {
        ProfileSpec::new(self.alpha, self.profile_order, self.constants())?.with_truncation_radius(self.truncation_radius)
    }

    /// Largest step allowed by the collision and transport bounds.
    pub fn dt_max(&self, params: &ShearParams) -> f64 {
        let nu0 = self.constants().nu0;
        let collision = if nu0 > 0.0 { 0.1 / nu0 } else { f64::INFINITY };
        let transport = 0.2 / (self.grid as f64 * V_MAX * (params.beta * self.t_end).exp());
        collision.min(transport)
    }

    /// Checks the invariants and fixes `dt = t_end / n_steps` no larger than
    /// the requested or maximal step.
    pub fn validate(&self, params: &ShearParams) -> Result<StepPlan> {
        let bad = |m: String| Err(UsfError::InvalidParameter(m));
        if self.n_particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.n_particles));
        }
        if self.grid == 0 {
            return bad("grid must have at least one cell per axis".into());
        }
        let per_cell = self.n_particles as f64 / self.cells() as f64;
        if per_cell < MIN_PARTICLES_PER_CELL {
            return bad(format!("{per_cell:.1} particles per cell, need at least {MIN_PARTICLES_PER_CELL}"));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1".into());
        }
        if self.k_modes < 1 {
            return bad(format!("K_modes must be at least 1, got {}", self.k_modes));
        }
        match self.init {
            InitSpec::Perturbed { mode, amplitude, .. } => {
                if mode == [0, 0, 0] {
                    return bad("perturbation wavevector must be nonzero".into());
                }
                if !(0.0..1.0).contains(&amplitude) {
                    return bad(format!("perturbation amplitude must lie in [0, 1), got {amplitude}"));
                }
            }
            InitSpec::Anisotropic { u0 } if u0.iter().any(|x| !x.is_finite()) => {
                return bad(format!("non-finite u0 {u0:?}"));
            }
            _ => {}
        }
        let dt_max = self.dt_max(params);
        let dt = match self.dt {
            Some(dt) if !(dt > 0.0) => return bad(format!("dt must be positive, got {dt}")),
            Some(dt) if dt > dt_max * (1.0 + 1e-12) => {
                return bad(format!("dt = {dt} exceeds the admissible step {dt_max}"));
            }
            Some(dt) => dt,
            None => dt_max,
        };
        let n_steps = ((self.t_end / dt) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        Ok(StepPlan {
            dt: self.t_end / n_steps as f64,
            n_steps,
            dt_max,
        })
    }
}

/// Particle ensemble plus the bookkeeping carried between steps. Random
/// numbers are addressed by `(seed, step, cell)`, so no generator state is
/// stored.
#[derive(Debug, Clone)]
pub struct SimState {
    pub ensemble: ParticleEnsemble,
    pub t: f64,
    pub step: u64,
    /// Fractional pair counts per cell.
    pub collision_carry: Vec<f64>,
    pub collisions: u64,
}

impl SimState {
    pub fn new(ensemble: ParticleEnsemble, cells: usize) -> Self {
        let t = ensemble.time;
        SimState {
            ensemble,
            t,
            step: 0,
            collision_carry: vec![0.0; cells],
            collisions: 0,
        }
    }
}

/// Solves `x + ε[sin(2π(kx + c)) − sin(2πc)]/(2πk) = u` for `x ∈ [0, 1]`.
fn invert_modulated_cdf(u: f64, eps: f64, k: f64, c: f64) -> f64 {
    let tau = 2.0 * PI;
    let s0 = (tau * c).sin();
    let f = |x: f64| x + eps * ((tau * (k * x + c)).sin() - s0) / (tau * k) - u;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x = u;
    for _ in 0..100 {
        let fx = f(x);
        if fx.abs() < 1e-15 {
            break;
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = fx / (1.0 + eps * (tau * (k * x + c)).cos());
        let next = x - step;
        x = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    x
}

fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn uniform_position(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(rng.random(), rng.random(), rng.random())
}

/// Position with density `1 + ε cos(2πk·x)`: the coordinates off one axis
/// with `k_a ≠ 0` are uniform, the remaining one is drawn by inversion.
fn modulated_position(mode: [i32; 3], eps: f64, rng: &mut ChaCha8Rng) -> Vec3 {
    let axis = mode.iter().position(|&k| k != 0).expect("nonzero mode");
    let mut x = uniform_position(rng);
    let c: f64 = (0..3).filter(|&d| d != axis).map(|d| mode[d] as f64 * x[d]).sum();
    let u: f64 = rng.random();
    x[axis] = wrap(invert_modulated_cdf(u, eps, mode[axis] as f64, c));
    x
}

fn recentre(velocities: &mut [Vec3]) {
    let mean = velocities.iter().sum::<Vec3>() / velocities.len() as f64;
    for v in velocities.iter_mut() {
        *v -= mean;
    }
}

fn anisotropic_covariance(reference: &SteadyMoments, u0: [f64; 3]) -> Result<Matrix3<f64>> {
    let energy = reference.energy + u0[0];
    let d12 = reference.d12 + u0[1];
    let d22 = reference.d22 + u0[2];
    let side = 0.5 * (energy - d22);
    let m = Matrix3::new(side, d12, 0.0, d12, d22, 0.0, 0.0, 0.0, side);
    if m.cholesky().is_none() {
        return Err(UsfError::InvalidParameter(format!("u0 {u0:?} gives a non-positive-definite covariance")));
    }
    Ok(m)
}

/// Draws the initial ensemble; the velocity mean is removed afterwards.
pub fn init_state(config: &SimConfig, params: &ShearParams) -> Result<SimState> {
    let n = config.n_particles;
    let mut rng = stream_rng(config.seed, 0, streams::INIT);
    let spec = config.profile_spec()?;
    let (positions, mut velocities) = match config.init {
        InitSpec::Profile => {
            let x = (0..n).map(|_| uniform_position(&mut rng)).collect();
            let mut vrng = stream_rng(config.seed, 0, streams::INIT_VELOCITIES);
            (x, sample_profile(&spec, n, &mut vrng)?)
        }
        InitSpec::Anisotropic { u0 } => {
            let cov = anisotropic_covariance(&steady_moments(params)?, u0)?;
            let l = cov.cholesky().expect("checked").l();
            let x = (0..n).map(|_| uniform_position(&mut rng)).collect();
            let mut vrng = stream_rng(config.seed, 0, streams::INIT_VELOCITIES);
            let v = (0..n)
                .map(|_| {
                    let z = Vector3::new(vrng.sample(StandardNormal), vrng.sample(StandardNormal), vrng.sample(StandardNormal));
                    l * z
                })
                .collect();
            (x, v)
        }
        InitSpec::Perturbed {
            mode,
            amplitude,
            shape: VelocityShape::Mass,
        } => {
            let x = (0..n).map(|_| modulated_position(mode, amplitude, &mut rng)).collect();
            let mut vrng = stream_rng(config.seed, 0, streams::INIT_VELOCITIES);
            (x, sample_profile(&spec, n, &mut vrng)?)
        }
        InitSpec::Perturbed { mode, amplitude, shape } => {
            let weight = |v: &Vec3| match shape {
                VelocityShape::D12 => (v.x * v.y).tanh(),
                _ => ((v.norm_squared() - 3.0) / 3.0).tanh(),
            };
            let k = Vec3::new(mode[0] as f64, mode[1] as f64, mode[2] as f64);
            let mut x = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            while x.len() < n {
                let pos = uniform_position(&mut rng);
                let vel = sample_profile(&spec, 1, &mut rng)?[0];
                let modulation = 1.0 + amplitude * (2.0 * PI * k.dot(&pos)).cos() * weight(&vel);
                if rng.random::<f64>() * (1.0 + amplitude) < modulation {
                    x.push(pos);
                    v.push(vel);
                }
            }
            (x, v)
        }
    };
    recentre(&mut velocities);
    let ensemble = ParticleEnsemble::new(positions, velocities, 0.0)?;
    Ok(SimState::new(ensemble, config.cells()))
}

/// Exact flow of `ẋ = e^{βt} v`, `v̇ = −βv − α v2 e1` over `[t, t + dt]`.
pub fn transport_step(state: &mut SimState, dt: f64, params: &ShearParams) {
    let grow = (params.beta * state.t).exp();
    let shrink = (-params.beta * dt).exp();
    let alpha = params.alpha;
    state
        .ensemble
        .positions
        .par_iter_mut()
        .zip(state.ensemble.velocities.par_iter_mut())
        .for_each(|(x, v)| {
            x.x = wrap(x.x + grow * (dt * v.x - 0.5 * alpha * dt * dt * v.y));
            x.y = wrap(x.y + grow * dt * v.y);
            x.z = wrap(x.z + grow * dt * v.z);
            v.x = shrink * (v.x - alpha * dt * v.y);
            v.y *= shrink;
            v.z *= shrink;
        });
    state.t += dt;
    state.ensemble.time = state.t;
}

/// Flat cell index of a position on an `n³` grid.
pub fn cell_of(x: &Vec3, n: usize) -> usize {
    let c = |u: f64| ((u * n as f64) as usize).min(n - 1);
    (c(x.x) * n + c(x.y)) * n + c(x.z)
}

/// Particle indices grouped by cell: `order[offsets[c]..offsets[c+1]]`.
pub fn sort_into_cells(positions: &[Vec3], n: usize) -> (Vec<usize>, Vec<usize>) {
    let cells = n * n * n;
    let ids: Vec<usize> = positions.par_iter().map(|x| cell_of(x, n)).collect();
    let mut offsets = vec![0usize; cells + 1];
    for &c in &ids {
        offsets[c + 1] += 1;
    }
    for c in 0..cells {
        offsets[c + 1] += offsets[c];
    }
    let mut fill = offsets.clone();
    let mut order = vec![0usize; positions.len()];
    for (i, &c) in ids.iter().enumerate() {
        order[fill[c]] = i;
        fill[c] += 1;
    }
    (order, offsets)
}

fn collide_cell(local: &mut [Vec3], pairs: u64, kernel: &KernelSpec, rng: &mut ChaCha8Rng) -> Result<()> {
    let n = local.len();
    let mut used = HashSet::with_capacity(pairs as usize);
    let mut done = 0;
    while done < pairs {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if !used.insert((i.min(j), i.max(j))) {
            continue;
        }
        let g = local[i] - local[j];
        let norm = g.norm();
        let dir = if norm > 0.0 { g / norm } else { Vec3::z() };
        let omega = sample_omega(kernel, &dir, rng)?;
        let (a, b) = post_collision(&local[i], &local[j], &omega);
        local[i] = a;
        local[j] = b;
        done += 1;
    }
    Ok(())
}

/// One collision sweep. Each cell draws `floor(M_c + carry_c)` distinct
/// pairs with `M_c = N_c(N_c−1)/2 · σ_T dt / (N V_c)`, using its own random
/// stream. Returns the number of collisions performed.
pub fn collision_step(state: &mut SimState, dt: f64, kernel: &KernelSpec, grid: usize, seed: u64) -> Result<u64> {
    state.step += 1;
    let sigma_t = derive_constants(kernel).sigma_t;
    if sigma_t == 0.0 {
        return Ok(0);
    }
    let n_total = state.ensemble.len() as f64;
    let cells = grid * grid * grid;
    let rate = sigma_t * dt * cells as f64 / n_total;
    let (order, offsets) = sort_into_cells(&state.ensemble.positions, grid);

    let mut work = Vec::new();
    for c in 0..cells {
        let nc = (offsets[c + 1] - offsets[c]) as u64;
        let all_pairs = nc * nc.saturating_sub(1) / 2;
        let expected = all_pairs as f64 * rate + state.collision_carry[c];
        let count = expected.floor();
        state.collision_carry[c] = expected - count;
        let count = (count as u64).min(all_pairs);
        if count > 0 {
            work.push((c, count));
        }
    }

    let velocities = &state.ensemble.velocities;
    let step = state.step;
    let results: Vec<Result<(usize, Vec<Vec3>)>> = work
        .par_iter()
        .map(|&(c, count)| {
            let members = &order[offsets[c]..offsets[c + 1]];
            let mut local: Vec<Vec3> = members.iter().map(|&i| velocities[i]).collect();
            let mut rng = stream_rng(seed, step, c as u64);
            collide_cell(&mut local, count, kernel, &mut rng)?;
            Ok((c, local))
        })
        .collect();

    let mut performed = 0;
    for (r, &(_, count)) in results.into_iter().zip(&work) {
        let (c, local) = r?;
        for (&i, v) in order[offsets[c]..offsets[c + 1]].iter().zip(local) {
            state.ensemble.velocities[i] = v;
        }
        performed += count;
    }
    state.collisions += performed;
    Ok(performed)
}

/// One output row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    /// `(E, d12, d22)` of the full distribution.
    pub raw: [f64; 3],
    pub u: [f64; 3],
    pub u_err: [f64; 3],
    pub r: [f64; 3],
    pub mode_k100_mass_abs: f64,
    pub mode_k100_d12_abs: f64,
    /// Cumulative collisions.
    pub ncoll: u64,
}

pub fn record(state: &SimState, reference: &SteadyMoments, b0: f64, k_modes: i32) -> Result<Record> {
    let MomentState { u, raw, std_error, .. } = assemble_u(&state.ensemble, reference);
    let modes = mode_moments(&state.ensemble, k_modes)?;
    let k = [1, 0, 0];
    Ok(Record {
        t: state.t,
        raw,
        u,
        u_err: std_error,
        r: null_structure_r(&modes, b0),
        mode_k100_mass_abs: modes.get(k, ModeChannel::Mass).expect("K ≥ 1").norm(),
        mode_k100_d12_abs: modes.get(k, ModeChannel::V1V2).expect("K ≥ 1").norm(),
        ncoll: state.collisions,
    })
}

fn check_finite(state: &SimState) -> Result<()> {
    let bad = state
        .ensemble
        .velocities
        .par_iter()
        .position_first(|v| !v.iter().all(|c| c.is_finite()));
    match bad {
        Some(index) => Err(UsfError::NonFinite {
            step: state.step,
            index,
            detail: format!(
                "velocity {:?} at position {:?}, t = {}",
                state.ensemble.velocities[index], state.ensemble.positions[index], state.t
            ),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: ShearParams,
    pub reference: SteadyMoments,
    pub plan: StepPlan,
    pub records: Vec<Record>,
    pub final_state: SimState,
}

/// Transport then collisions each step, recording at step 0, every
/// `output_every` steps and at the final step.
pub fn run(config: &SimConfig) -> Result<RunOutput> {
    let params = config.shear_params()?;
    let plan = config.validate(&params)?;
    let reference = steady_moments(&params)?;
    let mut state = init_state(config, &params)?;
    let mut records = vec![record(&state, &reference, params.b0, config.k_modes)?];
    for s in 1..=plan.n_steps {
        transport_step(&mut state, plan.dt, &params);
        collision_step(&mut state, plan.dt, &config.kernel, config.grid, config.seed)?;
        check_finite(&state)?;
        if s % config.output_every as u64 == 0 || s == plan.n_steps {
            records.push(record(&state, &reference, params.b0, config.k_modes)?);
        }
    }
    Ok(RunOutput {
        params,
        reference,
        plan,
        records,
        final_state: state,
    })
}

/// [`run`] on a single worker thread.
pub fn run_reproducible(config: &SimConfig) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| UsfError::Config(e.to_string()))?;
    pool.install(|| run(config))
}
