use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use goosewatch_bench::fixture;
use goosewatch_core::codec::{decode_frame, encode_frame};
use goosewatch_core::detector::score;
use goosewatch_core::features::{extract, View};
use goosewatch_core::window::build_windows;

fn benches(c: &mut Criterion) {
    let fx = fixture(20);
    let frame = &fx.frames[0];
    let bytes = &fx.encoded[0];

    let mut codec = c.benchmark_group("codec");
    codec.throughput(Throughput::Elements(1));
    codec.bench_function("encode", |b| b.iter(|| encode_frame(black_box(frame)).unwrap()));
    codec.bench_function("decode", |b| b.iter(|| decode_frame(black_box(bytes), frame.ts).unwrap()));
    codec.finish();

    let mut features = c.benchmark_group("features");
    features.throughput(Throughput::Elements(fx.frames.len() as u64));
    features.sample_size(20);
    features.bench_function("windows+extract", |b| {
        b.iter(|| build_windows(black_box(&fx.frames), &fx.window).iter().map(extract).count())
    });
    features.finish();

    let mut model = c.benchmark_group("model");
    for view in View::BOTH {
        let vp = match view {
            View::Seq => fx.profile.seq.as_ref(),
            View::Temp => fx.profile.temp.as_ref(),
        }
        .unwrap();
        let batch = vp.model.scaler.transform_all(&fx.features.view_rows(view)[..64]).unwrap();
        model.bench_function(format!("{view} gradient batch 64"), |b| {
            b.iter(|| vp.model.loss_and_gradients(black_box(&batch)).unwrap())
        });
    }
    model.throughput(Throughput::Elements(fx.features.len() as u64));
    model.sample_size(20);
    model.bench_function("score", |b| {
        b.iter(|| score(&fx.profile, black_box(&fx.features)).unwrap())
    });
    model.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
