use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cshap_core::cvnn::{random_tensor, shipped_model, Architecture};
use cshap_core::maxcshap::{maxpool_partials, maxpool_partials_fast, MaxPoolShapConfig};
use cshap_core::method::{explain, ExplainConfig, Method, Objective};
use cshap_core::oracle::exact_shap;
use cshap_core::CTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn methods(c: &mut Criterion) {
    let model = shipped_model(Architecture::ConvPool).unwrap();
    let x = random_tensor(model.input_shape(), 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let cfg = ExplainConfig::default();
    let mut g = c.benchmark_group("explain_conv_crelu_maxpool");
    for m in Method::ALL {
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| explain(&model, black_box(&x), &Objective::re(0), m, &cfg).unwrap())
        });
    }
    g.finish();
}

fn maxpool_window(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = MaxPoolShapConfig { enum_cap: 16 };
    let mut g = c.benchmark_group("maxpool_window");
    for n in [4usize, 9, 16] {
        let x = random_tensor(&[n], 1.0, &mut rng).into_data();
        let y = random_tensor(&[n], 1.0, &mut rng).into_data();
        g.bench_with_input(BenchmarkId::new("enumeration", n), &n, |b, _| {
            b.iter(|| maxpool_partials(black_box(&x), black_box(&y), &cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("fast", n), &n, |b, _| {
            b.iter(|| maxpool_partials_fast(black_box(&x), black_box(&y)).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let model = shipped_model(Architecture::Mlp).unwrap();
    let x = random_tensor(model.input_shape(), 1.0, &mut ChaCha8Rng::seed_from_u64(3));
    let r = CTensor::zeros(model.input_shape());
    let f = |z: &[cshap_core::C64]| model.predict(&CTensor::from_vec(z.to_vec())).unwrap().data()[0];
    c.bench_function("exact_shap_mlp_6_features", |b| {
        b.iter(|| exact_shap(f, black_box(x.data()), r.data()).unwrap())
    });
}

criterion_group!(benches, methods, maxpool_window, oracle);
criterion_main!(benches);
