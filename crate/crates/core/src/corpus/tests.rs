use super::*;
use crate::metrics::{self, HistUnit};

fn g(ch: char) -> GraphemeId {
    GraphemeId::from_jamo(ch).unwrap()
}

#[test]
fn atlas_is_deterministic_and_distinct() {
    let a = build_atlas(9).unwrap();
    let b = build_atlas(9).unwrap();
    for i in 0..GRAPHEME_CLASSES {
        let id = GraphemeId::new(i as u8).unwrap();
        assert_eq!(a.pattern(id), b.pattern(id));
    }
    assert_ne!(a.pattern(g('ㄱ')), build_atlas(10).unwrap().pattern(g('ㄱ')));
    // NO_FINAL is the empty pattern
    assert!(a.pattern(GraphemeId::NO_FINAL).iter().all(|&p| p == 0));
    // all 52·51/2 pairs clear the 20% Hamming floor
    let floor = PATTERN_SIZE * PATTERN_SIZE / 5;
    for i in 0..GRAPHEME_CLASSES {
        for j in i + 1..GRAPHEME_CLASSES {
            let (pi, pj) = (
                a.pattern(GraphemeId::new(i as u8).unwrap()),
                a.pattern(GraphemeId::new(j as u8).unwrap()),
            );
            let dist = pi.iter().zip(pj).filter(|(x, y)| x != y).count();
            assert!(dist >= floor, "patterns {i} and {j} too close: {dist}");
        }
    }
}

fn occupied_rows(cell: &GrayImage) -> Vec<usize> {
    (0..cell.height).filter(|&y| (0..cell.width).any(|x| cell.get(x, y) != 0)).collect()
}

#[test]
fn vertical_vowel_layout_places_pattern_right_and_leaves_bottom_empty() {
    let atlas = build_atlas(1).unwrap();
    // (ㄱ, ㅏ, none)
    let cell = render_char(codec::decompose_char('가').unwrap(), &atlas);
    let vowel = atlas.pattern(g('ㅏ'));
    for r in 0..PATTERN_SIZE {
        for c in 0..PATTERN_SIZE {
            let expected = if vowel[r * PATTERN_SIZE + c] != 0 { 255 } else { 0 };
            assert_eq!(cell.get(17 + c, 4 + r), expected, "vowel pixel ({r},{c})");
        }
    }
    // right half contains pixels, bottom band does not
    assert!((16..32).any(|x| (0..19).any(|y| cell.get(x, y) != 0)));
    for y in 19..32 {
        for x in 0..32 {
            assert_eq!(cell.get(x, y), 0, "bottom band pixel ({x},{y})");
        }
    }
}

#[test]
fn horizontal_vowel_with_final_gives_three_disjoint_bands() {
    let atlas = build_atlas(1).unwrap();
    // 혼 = (ㅎ, ㅗ, ㄴ)
    let cell = render_char(codec::decompose_char('혼').unwrap(), &atlas);
    let rows = occupied_rows(&cell);
    assert!(rows.iter().any(|&r| r < 10));
    assert!(rows.iter().any(|&r| (11..21).contains(&r)));
    assert!(rows.iter().any(|&r| r >= 22));
    // separator rows stay empty
    assert!(!rows.contains(&10));
    assert!(!rows.contains(&21));
}

#[test]
fn render_char_is_deterministic() {
    let atlas = build_atlas(3).unwrap();
    let t = codec::decompose_char('값').unwrap();
    assert_eq!(render_char(t, &atlas), render_char(t, &atlas));
}

#[test]
fn word_render_is_cell_concatenation_without_noise_or_jitter() {
    let atlas = build_atlas(2).unwrap();
    let mut rng = Rng::stream(0, "t", 0);
    let word = render_word("한글", &atlas, 0.0, 0, &mut rng).unwrap();
    assert_eq!(word.width, WORD_W);
    assert_eq!(word.height, WORD_H);
    for (i, ch) in "한글".chars().enumerate() {
        let cell = render_char(codec::decompose_char(ch).unwrap(), &atlas);
        for y in 0..CELL {
            for x in 0..CELL {
                assert_eq!(word.get(i * CELL + x, y), cell.get(x, y));
            }
        }
    }
    // the unused right half stays black
    for y in 0..WORD_H {
        for x in 2 * CELL..WORD_W {
            assert_eq!(word.get(x, y), 0);
        }
    }
}

#[test]
fn word_render_squeezes_long_words_and_rejects_over_eight() {
    let atlas = build_atlas(2).unwrap();
    let mut rng = Rng::stream(0, "t", 1);
    let six = "가나다라마바";
    let word = render_word(six, &atlas, 0.0, 0, &mut rng).unwrap();
    assert_eq!((word.width, word.height), (WORD_W, WORD_H));
    assert!(word.pixels.iter().any(|&p| p != 0));
    let nine = "가나다라마바사아자";
    assert!(matches!(
        render_word(nine, &atlas, 0.0, 0, &mut rng),
        Err(CorpusError::TooLong { chars: 9, .. })
    ));
    assert!(matches!(render_word("", &atlas, 0.0, 0, &mut rng), Err(CorpusError::EmptyWord)));
}

#[test]
fn full_noise_randomizes_every_pixel_value() {
    let atlas = build_atlas(2).unwrap();
    let mut rng = Rng::stream(7, "noise", 0);
    let word = render_word("가", &atlas, 1.0, 0, &mut rng).unwrap();
    let white = word.pixels.iter().filter(|&&p| p == 255).count() as f64;
    let frac = white / word.pixels.len() as f64;
    assert!(word.pixels.iter().all(|&p| p == 0 || p == 255));
    assert!((0.4..0.6).contains(&frac), "white fraction {frac}");
}

#[test]
fn render_word_determinism_matches_stream() {
    let atlas = build_atlas(5).unwrap();
    let a = render_word("한글", &atlas, 0.3, JITTER_PX, &mut Rng::stream(5, "w", 3)).unwrap();
    let b = render_word("한글", &atlas, 0.3, JITTER_PX, &mut Rng::stream(5, "w", 3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sampled_labels_cover_splits_and_unseen_disjointness() {
    let spec = CorpusSpec {
        train_syllables: 150,
        train_words: 800,
        test_seen_words: 50,
        test_unseen_words: 40,
        ..CorpusSpec::default()
    };
    let sampled = sample_labels(&spec).unwrap();
    assert_eq!(sampled.ranked_syllables.len(), 150);
    let train_chars: BTreeSet<char> = sampled
        .words
        .iter()
        .filter(|(_, s)| *s == Split::Train)
        .flat_map(|(w, _)| w.chars())
        .collect();
    let train_set: BTreeSet<char> = sampled.ranked_syllables.iter().copied().collect();
    assert!(train_chars.is_subset(&train_set));

    // every unseen syllable is absent from train, every grapheme present
    let train_graphemes: BTreeSet<usize> = train_chars
        .iter()
        .flat_map(|&c| {
            let (i, v, f) = codec::char_to_graphemes(c).unwrap();
            [i.index(), v.index(), f.index()]
        })
        .collect();
    assert_eq!(train_graphemes.len(), GRAPHEME_CLASSES);
    let unseen: Vec<&String> = sampled
        .words
        .iter()
        .filter(|(_, s)| *s == Split::TestUnseen)
        .map(|(w, _)| w)
        .collect();
    assert!(!unseen.is_empty());
    for word in unseen {
        for ch in word.chars() {
            assert!(!train_set.contains(&ch), "unseen syllable {ch} appears in train set");
            let (i, v, f) = codec::char_to_graphemes(ch).unwrap();
            for gid in [i, v, f] {
                assert!(train_graphemes.contains(&gid.index()));
            }
        }
    }
}

#[test]
fn zipf_zero_is_uniform_within_multinomial_bounds() {
    let spec = CorpusSpec {
        train_syllables: 50,
        zipf_exponent: 0.0,
        train_words: 3000,
        test_seen_words: 0,
        test_unseen_words: 0,
        word_len: (1, 1),
        ..CorpusSpec::default()
    };
    let sampled = sample_labels(&spec).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    let mut draws = 0u64;
    for (word, _) in &sampled.words {
        for ch in word.chars() {
            *counts.entry(ch).or_insert(0u64) += 1;
            draws += 1;
        }
    }
    let p = 1.0 / 50.0;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for &ch in &sampled.ranked_syllables {
        let c = counts.get(&ch).copied().unwrap_or(0) as f64;
        assert!((c - mean).abs() <= 3.0 * sigma, "count {c} for {ch} outside {mean}±3·{sigma}");
    }
}

#[test]
fn sampling_is_deterministic() {
    let spec = CorpusSpec { train_words: 200, ..CorpusSpec::default() };
    let a = sample_labels(&spec).unwrap();
    let b = sample_labels(&spec).unwrap();
    assert_eq!(a.words, b.words);
    assert_eq!(a.ranked_syllables, b.ranked_syllables);
}

#[test]
fn infeasible_specs_are_rejected() {
    // far too few syllables to cover 52 classes
    let spec = CorpusSpec { train_syllables: 5, ..CorpusSpec::default() };
    assert!(matches!(sample_labels(&spec), Err(CorpusError::InfeasibleSpec(_))));
    let spec = CorpusSpec { noise_level: 1.5, ..CorpusSpec::default() };
    assert!(spec.validate().is_err());
    let spec = CorpusSpec { word_len: (2, 9), ..CorpusSpec::default() };
    assert!(spec.validate().is_err());
}

#[test]
fn generated_train_split_has_higher_character_than_grapheme_gini() {
    let spec = CorpusSpec {
        train_syllables: 120,
        train_words: 1500,
        test_seen_words: 0,
        test_unseen_words: 0,
        ..CorpusSpec::default()
    };
    let sampled = sample_labels(&spec).unwrap();
    let labels: Vec<&str> =
        sampled.words.iter().filter(|(_, s)| *s == Split::Train).map(|(w, _)| w.as_str()).collect();
    let hc = metrics::histogram(labels.iter().copied(), HistUnit::Character).unwrap();
    let hg = metrics::histogram(labels.iter().copied(), HistUnit::Grapheme).unwrap();
    let gini_char = metrics::gini(&hc, false).unwrap();
    let gini_grapheme = metrics::gini(&hg, false).unwrap();
    assert!(
        gini_grapheme < gini_char,
        "expected grapheme Gini {gini_grapheme} < character Gini {gini_char}"
    );
}

#[test]
fn generate_writes_identical_corpora_for_identical_specs() {
    let spec = CorpusSpec {
        train_syllables: 60,
        train_words: 150,
        test_seen_words: 12,
        test_unseen_words: 8,
        ..CorpusSpec::default()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let ma = generate(&spec, dir_a.path()).unwrap();
    let mb = generate(&spec, dir_b.path()).unwrap();
    assert_eq!(ma.entries, mb.entries);
    assert_eq!(
        std::fs::read(dir_a.path().join(MANIFEST_NAME)).unwrap(),
        std::fs::read(dir_b.path().join(MANIFEST_NAME)).unwrap()
    );
    for entry in &ma.entries {
        let a = std::fs::read(dir_a.path().join(&entry.path)).unwrap();
        let b = std::fs::read(dir_b.path().join(&entry.path)).unwrap();
        assert_eq!(a, b, "image bytes differ for {}", entry.path);
    }
    // manifest round-trips
    let loaded = CorpusManifest::read(dir_a.path()).unwrap();
    assert_eq!(loaded.entries, ma.entries);
    assert_eq!(loaded.spec, spec);
    // labels decomposable and splits populated
    assert_eq!(loaded.entries_of(Split::Train).count(), 150);
    assert_eq!(loaded.entries_of(Split::TestSeen).count(), 12);
    assert_eq!(loaded.entries_of(Split::TestUnseen).count(), 8);
}

#[test]
fn manifest_rejects_garbage() {
    assert!(CorpusManifest::parse("").is_err());
    assert!(CorpusManifest::parse("# hangul-corpus format=9\n").is_err());
    let bad_cols = "# hangul-corpus format=1\nimg/x.pgm\t가\n";
    assert!(matches!(CorpusManifest::parse(bad_cols), Err(CorpusError::BadManifest(_))));
    let bad_label = "# hangul-corpus format=1\nimg/x.pgm\tabc\ttrain\n";
    assert!(matches!(CorpusManifest::parse(bad_label), Err(CorpusError::Codec(_))));
}
