//! Exhaustive verification of the syllable codec over the whole block.

use std::collections::BTreeSet;
use std::time::Instant;

use hangul_ocr_core::codec::{
    self, GraphemeId, SeqClass, FINAL_COUNT, GRAPHEME_CLASSES, INITIAL_COUNT, SYLLABLE_BASE,
    SYLLABLE_COUNT, VOWEL_COUNT,
};
use proptest::prelude::*;

fn every_syllable() -> impl Iterator<Item = char> {
    (0..SYLLABLE_COUNT).map(|i| char::from_u32(SYLLABLE_BASE + i).expect("inside block"))
}

#[test]
fn round_trip_all_11172_syllables_under_a_second() {
    let start = Instant::now();
    let mut count = 0u32;
    for ch in every_syllable() {
        let triple = codec::decompose_char(ch).expect("block member decomposes");
        assert_eq!(triple.to_char(), ch);
        let (i, v, f) = codec::triple_to_graphemes(triple);
        assert_eq!(codec::compose_graphemes(i, v, f).expect("valid triple composes"), ch);
        // the text path agrees with the char path
        let seq = codec::decompose_text(&ch.to_string(), 3).unwrap();
        assert_eq!(codec::merge_sequence(&seq).unwrap(), ch.to_string());
        count += 1;
    }
    assert_eq!(count, SYLLABLE_COUNT);
    assert_eq!(u32::try_from(INITIAL_COUNT * VOWEL_COUNT * FINAL_COUNT).unwrap(), SYLLABLE_COUNT);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "exhaustive round trip took {elapsed:?}");
}

#[test]
fn composition_is_injective_on_its_valid_domain() {
    let mut seen = BTreeSet::new();
    let mut valid = 0u32;
    for i in 0..GRAPHEME_CLASSES as u8 {
        for v in 0..GRAPHEME_CLASSES as u8 {
            for f in 0..GRAPHEME_CLASSES as u8 {
                let (gi, gv, gf) = (
                    GraphemeId::new(i).unwrap(),
                    GraphemeId::new(v).unwrap(),
                    GraphemeId::new(f).unwrap(),
                );
                if let Ok(ch) = codec::compose_graphemes(gi, gv, gf) {
                    assert!(seen.insert(ch), "duplicate code point {ch}");
                    valid += 1;
                }
            }
        }
    }
    // exactly the composable triples: 19 initials × 21 vowels × (27 finals + NO_FINAL)
    assert_eq!(valid, SYLLABLE_COUNT);
}

#[test]
fn decomposed_positions_respect_slot_classes() {
    for ch in every_syllable() {
        let (i, v, f) = codec::char_to_graphemes(ch).unwrap();
        assert!(i.is_consonant());
        assert!(v.is_vowel());
        assert!(f.is_consonant() || f == GraphemeId::NO_FINAL);
    }
}

fn syllable_strat() -> impl Strategy<Value = char> {
    (0..SYLLABLE_COUNT).prop_map(|i| char::from_u32(SYLLABLE_BASE + i).unwrap())
}

proptest! {
    #[test]
    fn text_round_trip_and_positional_legality(
        words in proptest::collection::vec(syllable_strat(), 1..6)
    ) {
        let text: String = words.into_iter().collect();
        let len = 3 * text.chars().count() + 9;
        let seq = codec::decompose_text(&text, len).unwrap();
        prop_assert_eq!(seq.len(), len);
        for (pos, id) in seq.ids().iter().enumerate() {
            match id {
                SeqClass::Grapheme(g) => match pos % 3 {
                    0 => prop_assert!(g.is_consonant()),
                    1 => prop_assert!(g.is_vowel()),
                    _ => prop_assert!(g.is_consonant() || *g == GraphemeId::NO_FINAL),
                },
                SeqClass::Pad => prop_assert!(pos >= 3 * text.chars().count()),
            }
        }
        prop_assert_eq!(codec::merge_sequence(&seq).unwrap(), text);
    }
}
