use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use panfuse_bench::workload;
use panfuse_core::fusion::{fuse, resolve_overlaps, stuffify, FusionConfig};
use panfuse_core::metrics::panoptic_quality;
use panfuse_core::synth::brute_force_pq;

fn fusion(c: &mut Criterion) {
    let cfg = FusionConfig::default();
    let mut group = c.benchmark_group("fuse");
    group.sample_size(10);
    for &(h, w, stuff) in &[(256, 512, 8), (1024, 2048, 28)] {
        let wl = workload(h, w, stuff, 50);
        let (probs, inst, t) = (&wl.scene.probs, &wl.scene.instances, &wl.taxonomy);
        let id = format!("{h}x{w}");
        group.bench_function(BenchmarkId::new("full", &id), |b| b.iter(|| fuse(probs, inst, t, &cfg).unwrap()));
        group.bench_function(BenchmarkId::new("stuffify", &id), |b| b.iter(|| stuffify(probs, t).unwrap()));
        group.bench_function(BenchmarkId::new("resolve_overlaps", &id), |b| b.iter(|| resolve_overlaps(inst, &cfg)));
    }
    group.finish();
}

fn quality(c: &mut Criterion) {
    let mut group = c.benchmark_group("panoptic_quality");
    let wl = workload(128, 128, 3, 12);
    let (pred, gt, t) = (&wl.fused, &wl.scene.gt, &wl.taxonomy);
    group.bench_function("incremental/128x128", |b| b.iter(|| panoptic_quality(pred, gt, t).unwrap()));
    group.bench_function("brute_force/128x128", |b| b.iter(|| brute_force_pq(&[(pred, gt)], t).unwrap()));
    let big = workload(1024, 2048, 28, 50);
    group.sample_size(10);
    group.bench_function("incremental/1024x2048", |b| {
        b.iter(|| panoptic_quality(&big.fused, &big.scene.gt, &big.taxonomy).unwrap())
    });
    group.finish();
}

criterion_group!(benches, fusion, quality);
criterion_main!(benches);
