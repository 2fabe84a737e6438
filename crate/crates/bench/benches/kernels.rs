use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use entwave_bench::{fixture, matrix_blocks};
use entwave_core::transport::{parallel_transpose, Communicator, Phase, Schedule};
use entwave_core::{lanczos_ground_state, BlockWavefunction, LanczosConfig, ModelSpec};

fn matvec(c: &mut Criterion) {
    let mut group = c.benchmark_group("matvec");
    for (name, model) in [("heisenberg-14", ModelSpec::heisenberg(14, 1.0)), ("hubbard-8", ModelSpec::hubbard(8, 1.0, 2.0, 0.0))] {
        for ranks in [1, 4] {
            let f = fixture(&model, ranks);
            group.bench_with_input(BenchmarkId::new(name, ranks), &f, |b, f| {
                b.iter(|| f.engine.apply(&f.state, &f.comm).unwrap())
            });
        }
    }
    group.finish();
}

fn transpose(c: &mut Criterion) {
    let mut group = c.benchmark_group("transpose");
    for ranks in [1, 4, 16] {
        let comm = Communicator::new(ranks, Schedule::RoundRobin);
        let blocks = matrix_blocks(512, 384, ranks);
        group.bench_with_input(BenchmarkId::new("512x384", ranks), &blocks, |b, blocks| {
            b.iter(|| parallel_transpose(&comm, Phase::LeftDiagonal, blocks.clone(), 512, 384).unwrap())
        });
    }
    group.finish();
}

fn lanczos(c: &mut Criterion) {
    let mut group = c.benchmark_group("lanczos");
    group.sample_size(10);
    let f = fixture(&ModelSpec::heisenberg(12, 1.0), 2);
    group.bench_function("heisenberg-12", |b| {
        b.iter(|| {
            lanczos_ground_state(f.engine.layout(), &f.comm, &LanczosConfig::default(), |v: &BlockWavefunction<f64>| {
                f.engine.apply(v, &f.comm)
            })
            .unwrap()
        })
    });
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default();
    targets = matvec, transpose, lanczos
}
criterion_main!(benches);
