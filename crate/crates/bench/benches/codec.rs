use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hangul_ocr_core::codec::{self, SYLLABLE_BASE, SYLLABLE_COUNT};

fn bench_codec(c: &mut Criterion) {
    let all: Vec<char> =
        (0..SYLLABLE_COUNT).map(|i| char::from_u32(SYLLABLE_BASE + i).unwrap()).collect();

    c.bench_function("decompose_compose_full_block", |b| {
        b.iter(|| {
            for &ch in &all {
                let t = codec::decompose_char(black_box(ch)).unwrap();
                let (i, v, f) = codec::triple_to_graphemes(t);
                black_box(codec::compose_graphemes(i, v, f).unwrap());
            }
        })
    });

    c.bench_function("decompose_text_8_chars", |b| {
        b.iter(|| black_box(codec::decompose_text(black_box("대한민국한글납닭값"), 27).unwrap()))
    });

    let seq = codec::decompose_text("대한민국한글", 24).unwrap();
    c.bench_function("merge_sequence_24", |b| {
        b.iter(|| black_box(codec::merge_sequence(black_box(&seq)).unwrap()))
    });
}

criterion_group!(benches, bench_codec);
criterion_main!(benches);
