use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};

use shiftrisk::moments::{EnvLabel, EnvironmentMoments, SampleCount};
use shiftrisk::oracle::{grid_minimize_with, GridSpec};
use shiftrisk::semgen::{sample_environment_with, SemSpec};
use shiftrisk::{minimize_worst_risk, EstimatorConfig, Exec, WorstRiskObjective};

const SPEC: &str = r#"
p = 2
k = 3
seed = 1
B = [[[0.0, 0.8, 0.0], [0.0, 0.0, 0.0], [0.7, 0.0, 0.0]]]
probs = [1.0]
noise_cov = [[1.0, 0.3, 0.0], [0.3, 1.0, 0.0], [0.0, 0.0, 1.0]]
shift_covs = [
  [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]],
  [[1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.0]],
  [[0.3, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]],
]
"#;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn objective(p: usize, k: usize) -> WorstRiskObjective {
    // fixed, well-conditioned moments with distinct shifts
    let m = |t: usize| {
        let g = DMatrix::from_fn(p, p, |r, c| if r == c { 1.5 + 0.3 * t as f64 } else { 0.2 / (1.0 + (r + c + t) as f64) });
        let z = DVector::from_fn(p, |r, _| ((r + 2 * t) as f64 * 0.7).sin());
        EnvironmentMoments::new(g, z, 2.0 + t as f64, SampleCount::POPULATION).unwrap()
    };
    let shifted: Vec<_> = (1..=k).map(m).collect();
    WorstRiskObjective::from_moments(&m(0), &shifted, 2.0).unwrap()
}

fn sampling(c: &mut Criterion) {
    let spec = SemSpec::from_toml_str(SPEC).unwrap();
    let mut group = c.benchmark_group("sample_100k");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| sample_environment_with(&spec, EnvLabel::Shifted(1), black_box(100_000), exec).unwrap()));
    }
    group.finish();
}

fn grid_oracle(c: &mut Criterion) {
    let obj = objective(2, 3);
    let grid = GridSpec::new(2.0, 2e-3, 2).unwrap();
    let mut group = c.benchmark_group("grid_2d_4M");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| grid_minimize_with(&obj, black_box(&grid), exec).unwrap()));
    }
    group.finish();
}

fn estimator(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate");
    group.sample_size(10);
    for (p, k) in [(2, 4), (3, 4)] {
        let obj = objective(p, k);
        for (name, exec) in MODES {
            let cfg = EstimatorConfig { exec, ..EstimatorConfig::with_gamma(2.0) };
            group.bench_with_input(BenchmarkId::new(name, format!("p{p}k{k}")), &obj, |b, obj| {
                b.iter(|| minimize_worst_risk(obj, &cfg))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sampling, grid_oracle, estimator);
criterion_main!(benches);
