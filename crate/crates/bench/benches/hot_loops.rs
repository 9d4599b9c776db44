//! Criterion benchmarks for the per-event and per-step hot loops.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topokinetic::bernstein::bernstein_eval;
use topokinetic::kinetic::{gain_operator, step, KineticState, PartialMassTable};
use topokinetic::rank::select_leader;
use topokinetic::{Metric, Point, RankKernel};

fn random_positions(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| [rng.gen::<f64>(), 0.0]).collect()
}

fn bench_select_leader(c: &mut Criterion) {
    let kernel = RankKernel::SmoothCutoff { theta: 0.7, eps: 0.3 };
    let metric = Metric::PeriodicLine { length: 1.0 };
    for n in [100usize, 1000] {
        let positions = random_positions(n, 11);
        let table = kernel.discrete_table(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        c.bench_function(&format!("select_leader_n{n}"), |b| {
            b.iter(|| {
                let i = rng.gen_range(0..n);
                let u = rng.gen::<f64>();
                black_box(select_leader(black_box(&positions), &metric, &table, i, u).unwrap())
            })
        });
    }
}

fn bumpy_state(nx: usize, nv: usize) -> KineticState {
    let velocities: Vec<f64> = (0..nv).map(|a| -1.0 + 2.0 * a as f64 / (nv - 1) as f64).collect();
    let dx = 1.0 / nx as f64;
    let mut f = vec![0.0; nx * nv];
    for m in 0..nx {
        let x = (m as f64 + 0.5) * dx;
        for a in 0..nv {
            f[m * nv + a] = 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x + a as f64).sin();
        }
    }
    let mut state = KineticState::new(1.0, nx, velocities, f).unwrap();
    state.normalise().unwrap();
    state
}

fn bench_gain_operator(c: &mut Criterion) {
    let kernel = RankKernel::SmoothCutoff { theta: 0.7, eps: 0.3 };
    for nx in [64usize, 256] {
        let state = bumpy_state(nx, 8);
        let table = PartialMassTable::build(&state, &kernel).unwrap();
        c.bench_function(&format!("gain_operator_nx{nx}"), |b| {
            b.iter(|| black_box(gain_operator(black_box(&state), &table).unwrap()))
        });
    }
}

fn bench_kinetic_step(c: &mut Criterion) {
    let kernel = RankKernel::SmoothCutoff { theta: 0.7, eps: 0.3 };
    for nx in [64usize, 256] {
        let initial = bumpy_state(nx, 8);
        c.bench_function(&format!("kinetic_step_nx{nx}"), |b| {
            b.iter_batched(
                || initial.clone(),
                |mut state| step(&mut state, &kernel, 0.25).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
}

fn bench_bernstein_eval(c: &mut Criterion) {
    let f = |t: f64| (std::f64::consts::PI * t).sin();
    for n in [1000usize, 10000] {
        c.bench_function(&format!("bernstein_eval_n{n}"), |b| {
            b.iter(|| black_box(bernstein_eval(&f, black_box(n), 0.37).unwrap()))
        });
    }
}

criterion_group!(
    benches,
    bench_select_leader,
    bench_gain_operator,
    bench_kinetic_step,
    bench_bernstein_eval
);
criterion_main!(benches);
