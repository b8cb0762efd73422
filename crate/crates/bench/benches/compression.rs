use byzpp_core::compression::{CompressorKind, CompressorSpec};
use byzpp_core::numerics::{Lane, Purpose};
use byzpp_core::{RealVector, RngStream};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn compressors(c: &mut Criterion) {
    let d = 1000;
    let x = RealVector::from_vec((0..d).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect());
    let kinds = [
        ("identity", CompressorKind::Identity),
        ("rand_k_10", CompressorKind::RandK { k: 10 }),
        ("l2", CompressorKind::L2Quantization),
    ];
    let mut group = c.benchmark_group("compress_d1000");
    for (name, kind) in kinds {
        let q = CompressorSpec::new(kind, d).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(name), &q, |b, q| {
            let mut rng = RngStream::new(3, Lane::client(0, 0, Purpose::Compression));
            b.iter(|| q.compress(&x, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, compressors);
criterion_main!(benches);
