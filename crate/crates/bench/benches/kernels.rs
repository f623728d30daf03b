use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use pgsr_bench::tone;
use pgsr_core::autodiff::{Tape, Tensor};
use pgsr_core::losses::{loss_mps_g, mps_g_var, GEN_DURATIONS};
use pgsr_core::sigcore::psd_band;
use pgsr_core::xcorr::swm_ncc;

fn bench_swm(c: &mut Criterion) {
    let long = tone(10.0, 30);
    let mut group = c.benchmark_group("swm_ncc");
    for secs in [2.0, 6.0, 10.0] {
        let short = tone(secs, 30);
        group.bench_with_input(BenchmarkId::from_parameter(secs), &short, |b, s| {
            b.iter(|| swm_ncc(black_box(s), black_box(&long)).unwrap())
        });
    }
    group.finish();
}

fn bench_psd(c: &mut Criterion) {
    let mut group = c.benchmark_group("psd_band");
    for secs in [2.0, 10.0] {
        let s = tone(secs, 30);
        group.bench_with_input(BenchmarkId::from_parameter(secs), &s, |b, s| {
            b.iter(|| psd_band(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn bench_mps_g(c: &mut Criterion) {
    let gt = tone(10.0, 30);
    let generated: BTreeMap<u32, _> = GEN_DURATIONS
        .iter()
        .map(|&d| (d, tone(d as f64, 30)))
        .collect();
    c.bench_function("loss_mps_g/forward", |b| {
        b.iter(|| loss_mps_g(black_box(&generated), black_box(&gt), 1.5).unwrap())
    });
    c.bench_function("loss_mps_g/forward_backward", |b| {
        b.iter(|| {
            let mut t = Tape::new();
            let nodes: Vec<_> = generated
                .iter()
                .map(|(&d, s)| {
                    (
                        d,
                        t.param(format!("s{d}"), Tensor::vector(s.samples().to_vec())),
                    )
                })
                .collect();
            let g = t.constant(Tensor::vector(gt.samples().to_vec()));
            let (total, _) = mps_g_var(&mut t, &nodes, g, 30, 1.5).unwrap();
            t.backward(total).unwrap()
        })
    });
}

criterion_group!(benches, bench_swm, bench_psd, bench_mps_g);
criterion_main!(benches);
