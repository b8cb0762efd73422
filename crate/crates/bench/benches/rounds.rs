//! End-to-end cost of short runs on the default synthetic logistic problem.

use byzpp_core::harness::{prepare, run_seed, ExperimentConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const BASE: &str = r#"
[problem]
kind = "logistic"
data = { source = "synthetic", samples = 1000, dim = 20, seed = 2024 }
[federation]
n = 20
byzantine = 5
attack = { kind = "shift_back" }
[algorithm]
method = "marina_pp"
gamma = 0.1
alpha = 1.0
cohort = 4
refresh_cohort = 20
rounds = 50
aggregator = { rule = "coordinate_median", bucket_size = 2 }
"#;

fn methods(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_50_rounds");
    group.sample_size(10);
    for method in ["marina_pp", "momentum_heuristic", "reference_gd"] {
        let cfg = ExperimentConfig::from_toml_str(BASE, &[format!("algorithm.method=\"{method}\"")]).unwrap();
        let prepared = prepare(&cfg).unwrap();
        group.bench_function(BenchmarkId::from_parameter(method), |b| {
            b.iter(|| run_seed(&cfg, &prepared, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, methods);
criterion_main!(benches);
