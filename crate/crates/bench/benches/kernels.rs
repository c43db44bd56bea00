use criterion::{black_box, criterion_group, criterion_main, Criterion, Throughput};

use quant8_core::codec::{Format, FpFormat, IntFormat};
use quant8_core::convert::match_grid;
use quant8_core::distmse::{lloyd_fit, Dist};
use quant8_core::gatecost::report_grid;
use quant8_core::quantizer::{calibrate, quantize_dequantize, QuantizerConfig, RangeMethod};
use quant8_core::tensor::Tensor;

fn encode_decode(c: &mut Criterion) {
    let fmt = FpFormat::E4;
    let xs = Dist::Gaussian.sample(4096, 1);
    let mut group = c.benchmark_group("codec");
    group.throughput(Throughput::Elements(xs.len() as u64));
    group.bench_function("e4_encode_decode", |b| {
        b.iter(|| {
            let mut acc = 0.0f64;
            for &x in &xs {
                acc += fmt.decode(fmt.encode(black_box(x)).unwrap());
            }
            acc
        })
    });
    group.finish();
}

fn calibration(c: &mut Criterion) {
    let data: Vec<f32> = Dist::Gaussian
        .sample(100_000, 2)
        .iter()
        .map(|&x| x as f32)
        .collect();
    let t = Tensor::from_vec(data).unwrap();
    let mut group = c.benchmark_group("calibrate");
    for format in ["int8", "e4"] {
        let f: Format = format.parse().unwrap();
        group.bench_function(format!("mse_search_{format}_100k"), |b| {
            b.iter(|| calibrate(&t, &QuantizerConfig::per_tensor(f, RangeMethod::MseSearch)))
        });
    }
    group.finish();
}

fn fake_quantize(c: &mut Criterion) {
    let data: Vec<f32> = Dist::Gaussian
        .sample(100_000, 3)
        .iter()
        .map(|&x| x as f32)
        .collect();
    let t = Tensor::from_vec(data).unwrap();
    let cfg = calibrate(
        &t,
        &QuantizerConfig::per_tensor("e4".parse().unwrap(), RangeMethod::MinMax),
    )
    .unwrap();
    let mut group = c.benchmark_group("quantize");
    group.throughput(Throughput::Elements(t.len() as u64));
    group.bench_function("e4_qdq_100k", |b| b.iter(|| quantize_dequantize(&t, &cfg)));
    group.finish();
}

fn lloyd(c: &mut Criterion) {
    let sample = Dist::Gaussian.sample(100_000, 4);
    c.bench_function("lloyd_255_levels_100k", |b| {
        b.iter(|| lloyd_fit(black_box(&sample), 255, 50, 1e-11))
    });
}

fn gates_and_matching(c: &mut Criterion) {
    c.bench_function("gate_grid", |b| b.iter(report_grid));
    c.bench_function("match_grid_e4_int8", |b| {
        b.iter(|| match_grid(FpFormat::E4, IntFormat::INT8))
    });
}

criterion_group!(
    benches,
    encode_decode,
    calibration,
    fake_quantize,
    lloyd,
    gates_and_matching
);
criterion_main!(benches);
