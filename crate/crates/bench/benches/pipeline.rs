use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use slicematch::bench::BenchDims;
use slicematch::geometry::rasterize_slice_mask;
use slicematch::{aggregate_all, score_poses, MaskSet, Pose};
use slicematch_bench::Scene;

const KS: [usize; 3] = [160, 1600, 16000];

fn rasterize(c: &mut Criterion) {
    let dims = BenchDims::default();
    let scene = Scene::new(&dims, 16).unwrap();
    let pose = Pose::new(0.4, 0.6, 33.0).unwrap();
    let mut group = c.benchmark_group("rasterize");
    for s in [4, 8] {
        group.bench_with_input(BenchmarkId::new("slice_mask", s), &s, |b, &s| {
            b.iter(|| rasterize_slice_mask(&scene.camera, black_box(&pose), 3, dims.l, s).unwrap())
        });
    }
    group.bench_function("mask_set_160", |b| {
        let scene = Scene::new(&dims, 160).unwrap();
        b.iter(|| {
            MaskSet::precompute(scene.camera, &scene.poses, dims.l, dims.supersample).unwrap()
        })
    });
    group.finish();
}

fn aggregate(c: &mut Criterion) {
    let dims = BenchDims::default();
    let mut group = c.benchmark_group("aggregate");
    group.sample_size(20);
    for k in KS {
        let scene = Scene::new(&dims, k).unwrap();
        let inp = &scene.inputs;
        group.throughput(Throughput::Elements(k as u64));
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| {
                aggregate_all(
                    &inp.aerial,
                    &inp.slices,
                    &scene.poses,
                    &scene.masks,
                    &inp.mlp,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn score(c: &mut Criterion) {
    let dims = BenchDims::default();
    let mut group = c.benchmark_group("score");
    for k in KS {
        let scene = Scene::new(&dims, k).unwrap();
        let inp = &scene.inputs;
        let agg = aggregate_all(
            &inp.aerial,
            &inp.slices,
            &scene.poses,
            &scene.masks,
            &inp.mlp,
        )
        .unwrap();
        group.throughput(Throughput::Elements(k as u64));
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| score_poses(&scene.ground, &agg.descriptors, &scene.poses).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rasterize, aggregate, score);
criterion_main!(benches);
