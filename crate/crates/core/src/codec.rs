//! Syllable/grapheme codec for precomposed Hangul (U+AC00–U+D7A3).
//!
//! Every precomposed syllable decomposes arithmetically into an
//! (initial, vowel, final) triple, and each slot maps into a shared
//! 52-class grapheme inventory: 30 compatibility consonants, 21 vowels,
//! and one virtual "no final consonant" class. The inverse direction
//! (the merger) rebuilds text from grapheme id sequences.

use thiserror::Error;

/// First code point of the precomposed syllable block (가).
pub const SYLLABLE_BASE: u32 = 0xAC00;
/// Number of precomposed syllables: 19 × 21 × 28.
pub const SYLLABLE_COUNT: u32 = 11_172;
/// Choseong (initial consonant) slots.
pub const INITIAL_COUNT: usize = 19;
/// Jungseong (vowel) slots.
pub const VOWEL_COUNT: usize = 21;
/// Jongseong slots including the empty one at index 0.
pub const FINAL_COUNT: usize = 28;

/// Grapheme classes: 30 consonants + 21 vowels + NO_FINAL.
pub const GRAPHEME_CLASSES: usize = 52;
/// Extra class index used to pad sequences shorter than the decoder length.
/// Not a [`GraphemeId`]; classifiers emit `GRAPHEME_CLASSES + 1` logits.
pub const PAD_CLASS: usize = GRAPHEME_CLASSES;
/// Logit count of a grapheme classifier (52 classes + PAD).
pub const CLASSES_WITH_PAD: usize = GRAPHEME_CLASSES + 1;

const CONSONANT_CLASSES: usize = 30;

// Compatibility jamo blocks: consonants U+3131..=U+314E, vowels U+314F..=U+3163.
const COMPAT_CONSONANT_BASE: u32 = 0x3131;
const COMPAT_VOWEL_BASE: u32 = 0x314F;

/// Choseong index -> consonant class id, in Unicode choseong order
/// (ㄱ ㄲ ㄴ ㄷ ㄸ ㄹ ㅁ ㅂ ㅃ ㅅ ㅆ ㅇ ㅈ ㅉ ㅊ ㅋ ㅌ ㅍ ㅎ).
const INITIAL_TO_CLASS: [u8; INITIAL_COUNT] = [
    0, 1, 3, 6, 7, 8, 16, 17, 18, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29,
];

/// Jongseong index 1..=27 -> consonant class id, in Unicode jongseong order
/// (ㄱ ㄲ ㄳ ㄴ ㄵ ㄶ ㄷ ㄹ ㄺ ㄻ ㄼ ㄽ ㄾ ㄿ ㅀ ㅁ ㅂ ㅄ ㅅ ㅆ ㅇ ㅈ ㅊ ㅋ ㅌ ㅍ ㅎ).
const FINAL_TO_CLASS: [u8; FINAL_COUNT - 1] = [
    0, 1, 2, 3, 4, 5, 6, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 19, 20, 21, 22, 23, 25, 26, 27,
    28, 29,
];

/// Errors from decomposition, composition and sequence merging.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("character '{ch}' (U+{code:04X}) is not a precomposed Hangul syllable", ch = .0, code = *.0 as u32)]
    OutOfBlock(char),
    #[error("text has {chars} characters but at most {max} fit a sequence of length {len}")]
    TooLong { chars: usize, max: usize, len: usize },
    #[error("sequence length {0} is not divisible by 3")]
    BadLength(usize),
    #[error("grapheme '{0}' has no initial-consonant slot")]
    InvalidInitial(GraphemeId),
    #[error("grapheme '{0}' has no final-consonant slot")]
    InvalidFinal(GraphemeId),
    #[error("grapheme '{id}' cannot occupy slot {slot} of a triple")]
    InvalidSlot { id: GraphemeId, slot: usize },
    #[error("triple {index} mixes padding and graphemes or violates slot classes")]
    MalformedTriple { index: usize },
}

/// One of the 52 grapheme classes.
///
/// Ids 0..30 are the compatibility consonants (ㄱ..ㅎ including compounds),
/// 30..51 the vowels (ㅏ..ㅣ), and 51 the virtual no-final class. Initial
/// and final consonants share classes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct GraphemeId(u8);

impl GraphemeId {
    /// The virtual "no final consonant" class.
    pub const NO_FINAL: GraphemeId = GraphemeId(51);

    pub fn new(id: u8) -> Option<GraphemeId> {
        (usize::from(id) < GRAPHEME_CLASSES).then_some(GraphemeId(id))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn is_consonant(self) -> bool {
        usize::from(self.0) < CONSONANT_CLASSES
    }

    pub fn is_vowel(self) -> bool {
        let i = usize::from(self.0);
        (CONSONANT_CLASSES..GRAPHEME_CLASSES - 1).contains(&i)
    }

    /// The compatibility jamo code point for this class; `None` for NO_FINAL.
    pub fn jamo(self) -> Option<char> {
        let i = u32::from(self.0);
        if self.is_consonant() {
            char::from_u32(COMPAT_CONSONANT_BASE + i)
        } else if self.is_vowel() {
            char::from_u32(COMPAT_VOWEL_BASE + i - CONSONANT_CLASSES as u32)
        } else {
            None
        }
    }

    /// Reverse lookup from a compatibility jamo character.
    pub fn from_jamo(ch: char) -> Option<GraphemeId> {
        let cp = ch as u32;
        let id = if (COMPAT_CONSONANT_BASE..COMPAT_CONSONANT_BASE + 30).contains(&cp) {
            cp - COMPAT_CONSONANT_BASE
        } else if (COMPAT_VOWEL_BASE..COMPAT_VOWEL_BASE + 21).contains(&cp) {
            cp - COMPAT_VOWEL_BASE + CONSONANT_CLASSES as u32
        } else {
            return None;
        };
        Some(GraphemeId(id as u8))
    }

    /// Human-readable label: the jamo itself, or `∅` for NO_FINAL.
    pub fn label(self) -> char {
        self.jamo().unwrap_or('∅')
    }

    fn initial_slot(self) -> Option<u8> {
        INITIAL_TO_CLASS.iter().position(|&c| c == self.0).map(|i| i as u8)
    }

    fn final_slot(self) -> Option<u8> {
        if self == Self::NO_FINAL {
            return Some(0);
        }
        FINAL_TO_CLASS.iter().position(|&c| c == self.0).map(|i| i as u8 + 1)
    }
}

impl std::fmt::Display for GraphemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// (initial, vowel, final) slot indices of one precomposed syllable.
///
/// `initial` indexes the 19 choseong, `vowel` the 21 jungseong, and `last`
/// the 28 jongseong slots where 0 means no final consonant. Construction
/// validates the ranges, so every `SyllableTriple` maps to a code point.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct SyllableTriple {
    initial: u8,
    vowel: u8,
    last: u8,
}

impl SyllableTriple {
    pub fn new(initial: u8, vowel: u8, last: u8) -> Option<SyllableTriple> {
        (usize::from(initial) < INITIAL_COUNT
            && usize::from(vowel) < VOWEL_COUNT
            && usize::from(last) < FINAL_COUNT)
            .then_some(SyllableTriple { initial, vowel, last })
    }

    pub fn initial(self) -> u8 {
        self.initial
    }

    pub fn vowel(self) -> u8 {
        self.vowel
    }

    pub fn last(self) -> u8 {
        self.last
    }

    /// The syllable's code point: `0xAC00 + (initial·21 + vowel)·28 + final`.
    pub fn to_char(self) -> char {
        let code = SYLLABLE_BASE
            + (u32::from(self.initial) * VOWEL_COUNT as u32 + u32::from(self.vowel))
                * FINAL_COUNT as u32
            + u32::from(self.last);
        char::from_u32(code).expect("triple indices are range-checked")
    }
}

/// One slot of a grapheme sequence: a class or the padding marker.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum SeqClass {
    Grapheme(GraphemeId),
    Pad,
}

impl SeqClass {
    /// Classifier class index: the grapheme id, or 52 for PAD.
    pub fn class_index(self) -> usize {
        match self {
            SeqClass::Grapheme(g) => g.index(),
            SeqClass::Pad => PAD_CLASS,
        }
    }

    pub fn from_class_index(index: usize) -> Option<SeqClass> {
        if index == PAD_CLASS {
            Some(SeqClass::Pad)
        } else {
            GraphemeId::new(u8::try_from(index).ok()?).map(SeqClass::Grapheme)
        }
    }
}

/// A grapheme id sequence of length divisible by 3: one (initial, vowel,
/// final) slot triple per character, PAD-filled at the tail.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct GraphemeSequence {
    ids: Vec<SeqClass>,
}

impl GraphemeSequence {
    pub fn from_classes(ids: Vec<SeqClass>) -> Result<GraphemeSequence, CodecError> {
        if ids.len() % 3 != 0 {
            return Err(CodecError::BadLength(ids.len()));
        }
        Ok(GraphemeSequence { ids })
    }

    pub fn ids(&self) -> &[SeqClass] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Class indices as classifier targets (PAD included).
    pub fn class_indices(&self) -> Vec<usize> {
        self.ids.iter().map(|c| c.class_index()).collect()
    }
}

/// Decomposes one precomposed syllable into its slot triple.
pub fn decompose_char(ch: char) -> Result<SyllableTriple, CodecError> {
    let cp = ch as u32;
    if !(SYLLABLE_BASE..SYLLABLE_BASE + SYLLABLE_COUNT).contains(&cp) {
        return Err(CodecError::OutOfBlock(ch));
    }
    let offset = cp - SYLLABLE_BASE;
    let last = (offset % FINAL_COUNT as u32) as u8;
    let vowel = ((offset / FINAL_COUNT as u32) % VOWEL_COUNT as u32) as u8;
    let initial = (offset / (FINAL_COUNT as u32 * VOWEL_COUNT as u32)) as u8;
    Ok(SyllableTriple { initial, vowel, last })
}

/// Maps slot indices into the shared 52-class inventory.
/// A final slot of 0 becomes [`GraphemeId::NO_FINAL`].
pub fn triple_to_graphemes(t: SyllableTriple) -> (GraphemeId, GraphemeId, GraphemeId) {
    let initial = GraphemeId(INITIAL_TO_CLASS[usize::from(t.initial)]);
    let vowel = GraphemeId(CONSONANT_CLASSES as u8 + t.vowel);
    let last = if t.last == 0 {
        GraphemeId::NO_FINAL
    } else {
        GraphemeId(FINAL_TO_CLASS[usize::from(t.last) - 1])
    };
    (initial, vowel, last)
}

/// Composes three grapheme classes back into a syllable. Inverse of
/// `decompose_char` followed by `triple_to_graphemes`.
pub fn compose_graphemes(
    initial: GraphemeId,
    vowel: GraphemeId,
    last: GraphemeId,
) -> Result<char, CodecError> {
    if !initial.is_consonant() {
        return Err(CodecError::InvalidSlot { id: initial, slot: 0 });
    }
    if !vowel.is_vowel() {
        return Err(CodecError::InvalidSlot { id: vowel, slot: 1 });
    }
    if !(last.is_consonant() || last == GraphemeId::NO_FINAL) {
        return Err(CodecError::InvalidSlot { id: last, slot: 2 });
    }
    let initial_slot = initial.initial_slot().ok_or(CodecError::InvalidInitial(initial))?;
    let vowel_slot = vowel.0 - CONSONANT_CLASSES as u8;
    let last_slot = last.final_slot().ok_or(CodecError::InvalidFinal(last))?;
    Ok(SyllableTriple { initial: initial_slot, vowel: vowel_slot, last: last_slot }.to_char())
}

/// Convenience: decompose a syllable straight to its three grapheme classes.
pub fn char_to_graphemes(ch: char) -> Result<(GraphemeId, GraphemeId, GraphemeId), CodecError> {
    Ok(triple_to_graphemes(decompose_char(ch)?))
}

/// Decomposes a word into a fixed-length id sequence: three ids per
/// character, PAD-filled up to `len`. Rejects non-Hangul characters and
/// words longer than `len / 3`.
pub fn decompose_text(text: &str, len: usize) -> Result<GraphemeSequence, CodecError> {
    if len % 3 != 0 {
        return Err(CodecError::BadLength(len));
    }
    let chars: Vec<char> = text.chars().collect();
    if chars.len() > len / 3 {
        return Err(CodecError::TooLong { chars: chars.len(), max: len / 3, len });
    }
    let mut ids = Vec::with_capacity(len);
    for &ch in &chars {
        let (i, v, f) = char_to_graphemes(ch)?;
        ids.push(SeqClass::Grapheme(i));
        ids.push(SeqClass::Grapheme(v));
        ids.push(SeqClass::Grapheme(f));
    }
    ids.resize(len, SeqClass::Pad);
    GraphemeSequence::from_classes(ids)
}

/// The merger: consumes ids three at a time until the first all-PAD triple
/// and composes each triple into a syllable.
pub fn merge_sequence(seq: &GraphemeSequence) -> Result<String, CodecError> {
    let mut out = String::new();
    for (index, triple) in seq.ids.chunks_exact(3).enumerate() {
        match (triple[0], triple[1], triple[2]) {
            (SeqClass::Pad, SeqClass::Pad, SeqClass::Pad) => break,
            (SeqClass::Grapheme(i), SeqClass::Grapheme(v), SeqClass::Grapheme(f)) => {
                let ch = compose_graphemes(i, v, f)
                    .map_err(|_| CodecError::MalformedTriple { index })?;
                out.push(ch);
            }
            _ => return Err(CodecError::MalformedTriple { index }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(ch: char) -> GraphemeId {
        GraphemeId::from_jamo(ch).unwrap()
    }

    #[test]
    fn decompose_block_boundaries() {
        assert_eq!(decompose_char('가').unwrap(), SyllableTriple::new(0, 0, 0).unwrap());
        assert_eq!(decompose_char('힣').unwrap(), SyllableTriple::new(18, 20, 27).unwrap());
        // 0xD55C - 0xAC00 = 10588; 10588 % 28 = 4, (10588 / 28) % 21 = 0, / 21 = 18
        assert_eq!(decompose_char('한').unwrap(), SyllableTriple::new(18, 0, 4).unwrap());
    }

    #[test]
    fn decompose_rejects_out_of_block() {
        for ch in ['a', '1', ' ', 'ㄱ', 'ㅏ', '。', '\u{ABFF}', '\u{D7A4}'] {
            assert_eq!(decompose_char(ch), Err(CodecError::OutOfBlock(ch)));
        }
    }

    #[test]
    fn triple_to_graphemes_tables() {
        let t = |i, v, f| triple_to_graphemes(SyllableTriple::new(i, v, f).unwrap());
        assert_eq!(t(0, 0, 0), (g('ㄱ'), g('ㅏ'), GraphemeId::NO_FINAL));
        assert_eq!(t(18, 0, 4), (g('ㅎ'), g('ㅏ'), g('ㄴ')));
        // jongseong index 3 is ㄳ in the Unicode jongseong order
        assert_eq!(t(0, 0, 3), (g('ㄱ'), g('ㅏ'), g('ㄳ')));
    }

    #[test]
    fn compose_inverse_and_errors() {
        assert_eq!(compose_graphemes(g('ㄱ'), g('ㅏ'), GraphemeId::NO_FINAL).unwrap(), '가');
        // ㄳ exists only as a final
        assert_eq!(
            compose_graphemes(g('ㄳ'), g('ㅏ'), GraphemeId::NO_FINAL),
            Err(CodecError::InvalidInitial(g('ㄳ')))
        );
        // ㄸ exists only as an initial
        assert_eq!(
            compose_graphemes(g('ㄱ'), g('ㅏ'), g('ㄸ')),
            Err(CodecError::InvalidFinal(g('ㄸ')))
        );
        assert_eq!(
            compose_graphemes(g('ㅏ'), g('ㅏ'), GraphemeId::NO_FINAL),
            Err(CodecError::InvalidSlot { id: g('ㅏ'), slot: 0 })
        );
        assert_eq!(
            compose_graphemes(g('ㄱ'), g('ㄴ'), GraphemeId::NO_FINAL),
            Err(CodecError::InvalidSlot { id: g('ㄴ'), slot: 1 })
        );
        assert_eq!(
            compose_graphemes(g('ㄱ'), GraphemeId::NO_FINAL, GraphemeId::NO_FINAL),
            Err(CodecError::InvalidSlot { id: GraphemeId::NO_FINAL, slot: 1 })
        );
    }

    #[test]
    fn inventory_cardinalities() {
        let all: Vec<GraphemeId> = (0..GRAPHEME_CLASSES as u8).map(|i| GraphemeId::new(i).unwrap()).collect();
        assert_eq!(all.len(), 52);
        assert_eq!(GraphemeId::new(52), None);
        assert_eq!(all.iter().filter(|g| g.is_consonant()).count(), 30);
        assert_eq!(all.iter().filter(|g| g.is_vowel()).count(), 21);
        assert_eq!(all.iter().filter(|&&g| g == GraphemeId::NO_FINAL).count(), 1);
        assert_eq!(all.iter().filter(|g| g.initial_slot().is_some()).count(), 19);
        // 27 non-empty finals plus NO_FINAL itself mapping to slot 0
        assert_eq!(
            all.iter().filter(|g| **g != GraphemeId::NO_FINAL && g.final_slot().is_some()).count(),
            27
        );
    }

    #[test]
    fn jamo_round_trip() {
        for i in 0..GRAPHEME_CLASSES as u8 {
            let id = GraphemeId::new(i).unwrap();
            match id.jamo() {
                Some(ch) => assert_eq!(GraphemeId::from_jamo(ch), Some(id)),
                None => assert_eq!(id, GraphemeId::NO_FINAL),
            }
        }
    }

    #[test]
    fn decompose_text_pads_and_rejects() {
        let seq = decompose_text("가", 6).unwrap();
        assert_eq!(
            seq.ids(),
            &[
                SeqClass::Grapheme(g('ㄱ')),
                SeqClass::Grapheme(g('ㅏ')),
                SeqClass::Grapheme(GraphemeId::NO_FINAL),
                SeqClass::Pad,
                SeqClass::Pad,
                SeqClass::Pad,
            ]
        );
        let seq = decompose_text("한", 3).unwrap();
        assert_eq!(
            seq.ids(),
            &[
                SeqClass::Grapheme(g('ㅎ')),
                SeqClass::Grapheme(g('ㅏ')),
                SeqClass::Grapheme(g('ㄴ')),
            ]
        );
        assert_eq!(
            decompose_text("가가가", 6),
            Err(CodecError::TooLong { chars: 3, max: 2, len: 6 })
        );
        assert!(matches!(decompose_text("ab", 6), Err(CodecError::OutOfBlock('a'))));
        assert_eq!(decompose_text("가", 4), Err(CodecError::BadLength(4)));
    }

    #[test]
    fn merge_examples() {
        let seq = |v: Vec<SeqClass>| GraphemeSequence::from_classes(v).unwrap();
        let gr = SeqClass::Grapheme;
        assert_eq!(
            merge_sequence(&seq(vec![
                gr(g('ㄱ')),
                gr(g('ㅏ')),
                gr(GraphemeId::NO_FINAL),
                SeqClass::Pad,
                SeqClass::Pad,
                SeqClass::Pad,
            ]))
            .unwrap(),
            "가"
        );
        assert_eq!(
            merge_sequence(&seq(vec![
                gr(g('ㅎ')),
                gr(g('ㅏ')),
                gr(g('ㄴ')),
                gr(g('ㅎ')),
                gr(g('ㅣ')),
                gr(g('ㅎ')),
            ]))
            .unwrap(),
            "한힣"
        );
        assert_eq!(
            merge_sequence(&seq(vec![gr(g('ㄱ')), SeqClass::Pad, SeqClass::Pad])),
            Err(CodecError::MalformedTriple { index: 0 })
        );
        // everything after the first all-PAD triple is ignored
        assert_eq!(
            merge_sequence(&seq(vec![
                SeqClass::Pad,
                SeqClass::Pad,
                SeqClass::Pad,
                gr(g('ㄱ')),
                SeqClass::Pad,
                SeqClass::Pad,
            ]))
            .unwrap(),
            ""
        );
    }

    #[test]
    fn text_round_trip_via_sequences() {
        for text in ["가", "한글", "값없닭", "힣"] {
            let seq = decompose_text(text, 12).unwrap();
            assert_eq!(merge_sequence(&seq).unwrap(), text);
        }
    }
}
