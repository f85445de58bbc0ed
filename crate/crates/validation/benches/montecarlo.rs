//! Sequential vs rayon execution of the Monte-Carlo and suite workloads.
//! Without the `parallel` feature both variants run on one thread.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use oca_core::harness::{run_suite, ScenarioConfig};
use oca_core::Exec;
use oca_validation::{calibration_monte_carlo, flicker_psd_slope};

const EXECS: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn flicker(c: &mut Criterion) {
    let mut g = c.benchmark_group("flicker_slope_8_seeds");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| flicker_psd_slope(8, 1.0, 100.0, exec).unwrap())
        });
    }
    g.finish();
}

fn calibration(c: &mut Criterion) {
    let mut g = c.benchmark_group("calibration_4x1000_seeds");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                calibration_monte_carlo(&[0.9975, 0.9568, 0.9832, 0.9304], 1000, 1e-4, exec)
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn suite(c: &mut Criterion) {
    let mut base = ScenarioConfig::baseline();
    base.acquisition.duration = 12.0;
    let mut g = c.benchmark_group("suite_4_points");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_suite(&base, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, flicker, calibration, suite);
criterion_main!(benches);
