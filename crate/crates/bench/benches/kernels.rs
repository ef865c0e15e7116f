use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use edgespike::plasticity::{CountingSink, PlasticityConfig, PlasticityEngine};
use edgespike::runtime::{infer_dense_fixed, infer_sparse, sparse_accumulate, to_events, OpCounter};
use edgespike::snn::{forward_dense, Connectivity};
use edgespike_bench::{network, raster};

fn accumulate(c: &mut Criterion) {
    let (_, fixed) = network(256, 8, Connectivity::Dense).unwrap();
    let w = &fixed.layers[1].weights;
    let mut g = c.benchmark_group("accumulate");
    for rho in [0.05, 0.2, 0.5] {
        let frame = raster(1, w.fan_in, rho, 7).unwrap();
        let events = to_events(frame.frame(0));
        g.throughput(Throughput::Elements(events.len() as u64 * w.width as u64));
        g.bench_with_input(BenchmarkId::from_parameter(rho), &events, |b, ev| {
            let mut acc = vec![0i32; w.width];
            let mut counter = OpCounter::with_layers(1);
            b.iter(|| {
                acc.iter_mut().for_each(|a| *a = 0);
                sparse_accumulate(w, black_box(ev), &mut acc, &mut counter).unwrap()
            })
        });
    }
    g.finish();
}

fn inference(c: &mut Criterion) {
    let (net, fixed) = network(128, 8, Connectivity::Sparse50).unwrap();
    let mut g = c.benchmark_group("inference");
    for rho in [0.1, 0.3] {
        let r = raster(8, 40, rho, 3).unwrap();
        g.bench_with_input(BenchmarkId::new("sparse", rho), &r, |b, r| b.iter(|| infer_sparse(&fixed, black_box(r)).unwrap()));
        g.bench_with_input(BenchmarkId::new("dense_fixed", rho), &r, |b, r| {
            b.iter(|| infer_dense_fixed(&fixed, black_box(r)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("float", rho), &r, |b, r| b.iter(|| forward_dense(&net, black_box(r)).unwrap()));
    }
    g.finish();
}

fn plasticity(c: &mut Criterion) {
    let (_, fixed) = network(64, 8, Connectivity::Dense).unwrap();
    let input = raster(8, 40, 0.3, 5).unwrap();
    let out = infer_sparse(&fixed, &input).unwrap();
    c.bench_function("plasticity_step", |b| {
        let mut net = fixed.clone();
        let mut eng = PlasticityEngine::new(&net, 0, PlasticityConfig::default()).unwrap();
        let mut sink = CountingSink::default();
        b.iter(|| eng.step_inference(&mut net, black_box(&input), &out.hidden[0], &mut sink).unwrap())
    });
}

criterion_group!(benches, accumulate, inference, plasticity);
criterion_main!(benches);
