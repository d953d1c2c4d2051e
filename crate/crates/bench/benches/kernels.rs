use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use usf_core::dsmc::{collision_step, transport_step, SimState};
use usf_core::kernel::{KernelSpec, Vec3};
use usf_core::moments::{mode_moments, null_structure_r, ParticleEnsemble};
use usf_core::spectral::{predict_u, EigenSystem, ShearParams, SourceSeries};

fn ensemble(n: usize) -> ParticleEnsemble {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
    let v = (0..n)
        .map(|_| Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 3.0)
        .collect();
    ParticleEnsemble::new(x, v, 0.0).unwrap()
}

fn particles(c: &mut Criterion) {
    let params = ShearParams::new(0.1, std::f64::consts::FRAC_PI_2).unwrap();
    let kernel = KernelSpec::default();
    let base = SimState::new(ensemble(100_000), 512);

    c.bench_function("transport_step 1e5", |b| {
        b.iter_batched_ref(|| base.clone(), |s| transport_step(s, 0.01, &params), BatchSize::LargeInput)
    });
    c.bench_function("collision_step 1e5 on 8^3 cells", |b| {
        b.iter_batched_ref(
            || base.clone(),
            |s| collision_step(s, 0.01, &kernel, 8, 7).unwrap(),
            BatchSize::LargeInput,
        )
    });
    c.bench_function("mode_moments 1e5 K=3", |b| b.iter(|| mode_moments(black_box(&base.ensemble), 3).unwrap()));
    let modes = mode_moments(&base.ensemble, 3).unwrap();
    c.bench_function("null_structure_r K=3", |b| b.iter(|| null_structure_r(black_box(&modes), 1.5)));
}

fn spectral(c: &mut Criterion) {
    let params = ShearParams::new(0.1, std::f64::consts::FRAC_PI_2).unwrap();
    let eig = EigenSystem::new(&params).unwrap();
    c.bench_function("eigensystem", |b| b.iter(|| EigenSystem::new(black_box(&params)).unwrap()));
    c.bench_function("semigroup", |b| b.iter(|| eig.semigroup(black_box(1.3))));
    let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
    let values = times.iter().map(|t| [0.0, 1e-3 * (-t).exp(), -2e-3 * (-t).exp()]).collect();
    let source = SourceSeries::new(times, values).unwrap();
    let u0 = Vector3::new(0.6, 0.2, 0.1);
    c.bench_function("predict_u 100 samples", |b| b.iter(|| predict_u(&eig, &u0, black_box(&source), 2.0).unwrap()));
}

criterion_group!(benches, particles, spectral);
criterion_main!(benches);
