use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use sumformer::model::Variant;
use sumformer::Tape;
use sumformer_bench::{desk_model, filled};

fn train_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("desk_train_step");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(5));
    let frames = filled(&[16, 64, 2, 8, 8], 1);
    let target = filled(&[16, 32, 2, 8, 8], 2);
    for variant in [Variant::Ad, Variant::Md, Variant::Af, Variant::Ts] {
        let (model, store) = desk_model(variant).expect("valid desk config");
        group.bench_function(variant.name(), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let pred = model.forward(&mut tape, &store, &frames).expect("forward");
                let t = tape.constant(target.clone());
                let loss = tape.mse(pred, t).expect("loss");
                black_box(tape.backward(loss).expect("backward"));
            })
        });
    }
    group.finish();
}

criterion_group!(benches, train_step);
criterion_main!(benches);
