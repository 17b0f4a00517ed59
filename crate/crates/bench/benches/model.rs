use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hangul_ocr_core::corpus;
use hangul_ocr_core::model::{Recognizer, RecognizerConfig};
use hangul_ocr_core::tensor::{Graph, Rng, Tensor};

fn desk_config() -> RecognizerConfig {
    RecognizerConfig {
        feature_dim: 32,
        seq_len: 12,
        encoder_layers: 1,
        num_heads: 4,
        ..RecognizerConfig::default()
    }
}

fn bench_model(c: &mut Criterion) {
    let model = Recognizer::<f32>::new_grapheme(desk_config(), 1).unwrap();
    let atlas = corpus::build_atlas(1).unwrap();
    let image: Tensor<f32> = {
        let mut rng = Rng::seeded(2);
        corpus::render_word("한글", &atlas, 0.02, 2, &mut rng).unwrap().to_tensor()
    };

    c.bench_function("recognize_single_word", |b| {
        b.iter(|| black_box(model.recognize(black_box(&image)).unwrap()))
    });

    c.bench_function("train_step_single_sample", |b| {
        let targets = model.targets("한글").unwrap();
        b.iter(|| {
            let mut g = Graph::new();
            let nodes = model.forward(&mut g, &image).unwrap();
            let loss = model.loss_from_targets(&mut g, nodes.logits, &targets).unwrap();
            black_box(g.backward(loss).unwrap());
        })
    });

    c.bench_function("render_word_with_noise", |b| {
        let mut i = 0u64;
        b.iter(|| {
            i += 1;
            let mut rng = Rng::stream(3, "bench", i);
            black_box(corpus::render_word("한글값", &atlas, 0.05, 2, &mut rng).unwrap())
        })
    });
}

criterion_group!(benches, bench_model);
criterion_main!(benches);
