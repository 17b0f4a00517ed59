//! Deterministic procedural glyph corpus.
//!
//! Real fonts are replaced by 52 random-but-distinct binary patterns, one
//! per grapheme class, laid out inside each character cell by the standard
//! Hangul block rules: vertical vowels sit right of the initial, horizontal
//! vowels below it, compound vowels occupy both regions, finals take the
//! bottom band. What the corpus preserves is exactly the structural prior
//! the decoder exploits — where a grapheme sits depends on its slot.
//!
//! Everything derives from the spec seed through named substreams, so a
//! spec generates byte-identical images and manifests on every run.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{self, CodecError, GraphemeId, SyllableTriple, GRAPHEME_CLASSES};
use crate::kv::{KvError, KvFile};
use crate::pgm::{self, GrayImage};
use crate::tensor::Rng;

/// Glyph pattern extent in pixels.
pub const PATTERN_SIZE: usize = 12;
/// Character cell extent in pixels.
pub const CELL: usize = 32;
/// Word image extents.
pub const WORD_W: usize = 128;
pub const WORD_H: usize = 32;
/// Cell jitter amplitude used by corpus generation.
pub const JITTER_PX: u32 = 2;
/// Minimum pairwise Hamming distance: 20% of the pixel count.
const HAMMING_FLOOR: usize = PATTERN_SIZE * PATTERN_SIZE / 5;
const MAX_ATLAS_RESAMPLES: u32 = 1000;
const MAX_COVERAGE_ATTEMPTS: u64 = 16;

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("glyph atlas could not satisfy the Hamming floor after {0} resamples")]
    AtlasCollision(u32),
    #[error("word '{word}' has {chars} characters; at most 8 fit")]
    TooLong { word: String, chars: usize },
    #[error("cannot render an empty word")]
    EmptyWord,
    #[error("spec infeasible: {0}")]
    InfeasibleSpec(String),
    #[error("manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Pgm(#[from] pgm::PgmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 52 binary glyph patterns, one per grapheme class. NO_FINAL maps to the
/// empty pattern; all other pairs differ in at least 20% of their pixels.
#[derive(Clone, Debug)]
pub struct GlyphAtlas {
    patterns: Vec<Vec<u8>>,
    pub seed: u64,
}

impl GlyphAtlas {
    pub fn pattern(&self, id: GraphemeId) -> &[u8] {
        &self.patterns[id.index()]
    }
}

/// Builds the atlas from a seed, resampling colliding patterns until every
/// pair clears the Hamming floor.
pub fn build_atlas(seed: u64) -> Result<GlyphAtlas, CorpusError> {
    let mut rng = Rng::stream(seed, "atlas", 0);
    let area = PATTERN_SIZE * PATTERN_SIZE;
    let draw = |rng: &mut Rng| -> Vec<u8> {
        (0..area).map(|_| if rng.chance(0.5) { 1 } else { 0 }).collect()
    };
    let mut patterns: Vec<Vec<u8>> = (0..GRAPHEME_CLASSES)
        .map(|i| {
            if i == GraphemeId::NO_FINAL.index() {
                vec![0; area]
            } else {
                draw(&mut rng)
            }
        })
        .collect();

    let mut resamples = 0;
    'check: loop {
        for a in 0..patterns.len() {
            for b in a + 1..patterns.len() {
                if hamming(&patterns[a], &patterns[b]) < HAMMING_FLOOR {
                    if resamples >= MAX_ATLAS_RESAMPLES {
                        return Err(CorpusError::AtlasCollision(resamples));
                    }
                    // NO_FINAL stays empty; resample the other side
                    let victim = if b == GraphemeId::NO_FINAL.index() { a } else { b };
                    patterns[victim] = draw(&mut rng);
                    resamples += 1;
                    continue 'check;
                }
            }
        }
        break;
    }
    Ok(GlyphAtlas { patterns, seed })
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Vowel layout class of a jungseong index.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum VowelLayout {
    /// ㅏ ㅐ ㅑ ㅒ ㅓ ㅔ ㅕ ㅖ ㅣ — vowel right of the initial
    Vertical,
    /// ㅗ ㅛ ㅜ ㅠ ㅡ — vowel below the initial
    Horizontal,
    /// ㅘ ㅙ ㅚ ㅝ ㅞ ㅟ ㅢ — both regions
    Compound,
}

fn vowel_layout(jungseong: u8) -> VowelLayout {
    match jungseong {
        0..=7 | 20 => VowelLayout::Vertical,
        8 | 12 | 13 | 17 | 18 => VowelLayout::Horizontal,
        _ => VowelLayout::Compound,
    }
}

/// One glyph placement: top-left corner and a vertical squeeze (pattern is
/// resampled to `height` rows when three bands must stack in one cell).
struct Placement {
    id: GraphemeId,
    row: usize,
    col: usize,
    height: usize,
}

fn placements(triple: SyllableTriple) -> Vec<Placement> {
    let (initial, vowel, last) = codec::triple_to_graphemes(triple);
    let has_final = last != GraphemeId::NO_FINAL;
    let full = PATTERN_SIZE;
    let squeezed = 10;
    let mut out = Vec::with_capacity(4);
    match (vowel_layout(triple.vowel()), has_final) {
        (VowelLayout::Vertical, false) => {
            out.push(Placement { id: initial, row: 4, col: 3, height: full });
            out.push(Placement { id: vowel, row: 4, col: 17, height: full });
        }
        (VowelLayout::Vertical, true) => {
            out.push(Placement { id: initial, row: 2, col: 3, height: full });
            out.push(Placement { id: vowel, row: 2, col: 17, height: full });
            out.push(Placement { id: last, row: 19, col: 10, height: full });
        }
        (VowelLayout::Horizontal, false) => {
            out.push(Placement { id: initial, row: 2, col: 10, height: full });
            out.push(Placement { id: vowel, row: 17, col: 10, height: full });
        }
        (VowelLayout::Horizontal, true) => {
            out.push(Placement { id: initial, row: 0, col: 10, height: squeezed });
            out.push(Placement { id: vowel, row: 11, col: 10, height: squeezed });
            out.push(Placement { id: last, row: 22, col: 10, height: squeezed });
        }
        (VowelLayout::Compound, false) => {
            out.push(Placement { id: initial, row: 2, col: 2, height: full });
            out.push(Placement { id: vowel, row: 9, col: 18, height: full });
            out.push(Placement { id: vowel, row: 17, col: 2, height: full });
        }
        (VowelLayout::Compound, true) => {
            out.push(Placement { id: initial, row: 0, col: 2, height: squeezed });
            out.push(Placement { id: vowel, row: 3, col: 18, height: full });
            out.push(Placement { id: vowel, row: 11, col: 2, height: squeezed });
            out.push(Placement { id: last, row: 22, col: 10, height: squeezed });
        }
    }
    out
}

/// Renders one syllable into a 32×32 cell. Deterministic in (triple, atlas).
pub fn render_char(triple: SyllableTriple, atlas: &GlyphAtlas) -> GrayImage {
    let mut cell = GrayImage::new(CELL, CELL);
    for p in placements(triple) {
        let pattern = atlas.pattern(p.id);
        for out_r in 0..p.height {
            // nearest-neighbour row pick when squeezed
            let src_r = out_r * PATTERN_SIZE / p.height;
            for c in 0..PATTERN_SIZE {
                if pattern[src_r * PATTERN_SIZE + c] != 0 {
                    cell.set(p.col + c, p.row + out_r, 255);
                }
            }
        }
    }
    cell
}

/// Renders a word into a 32×128 image: cells left-aligned at 32 px/char
/// (words of 5–8 characters are squeezed horizontally to fit), each cell
/// jittered by up to ±`jitter` px, then salt-and-pepper noise over the
/// whole image at `noise_level`.
pub fn render_word(
    text: &str,
    atlas: &GlyphAtlas,
    noise_level: f64,
    jitter: u32,
    rng: &mut Rng,
) -> Result<GrayImage, CorpusError> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Err(CorpusError::EmptyWord);
    }
    if chars.len() > 2 * (WORD_W / CELL) {
        return Err(CorpusError::TooLong { word: text.to_string(), chars: chars.len() });
    }
    let strip_w = chars.len() * CELL;
    let mut strip = GrayImage::new(strip_w, WORD_H);
    for (i, &ch) in chars.iter().enumerate() {
        let cell = render_char(codec::decompose_char(ch)?, atlas);
        let (dx, dy) = if jitter == 0 {
            (0i64, 0i64)
        } else {
            let dx = rng.range_inclusive(0, u64::from(2 * jitter)) as i64 - i64::from(jitter);
            let dy = rng.range_inclusive(0, u64::from(2 * jitter)) as i64 - i64::from(jitter);
            (dx, dy)
        };
        for y in 0..CELL {
            for x in 0..CELL {
                if cell.get(x, y) == 0 {
                    continue;
                }
                let tx = (i * CELL) as i64 + x as i64 + dx;
                let ty = y as i64 + dy;
                if tx >= 0 && (tx as usize) < strip_w && ty >= 0 && (ty as usize) < WORD_H {
                    strip.set(tx as usize, ty as usize, 255);
                }
            }
        }
    }
    let mut image = if strip_w == WORD_W {
        strip
    } else if strip_w < WORD_W {
        let mut padded = GrayImage::new(WORD_W, WORD_H);
        for y in 0..WORD_H {
            for x in 0..strip_w {
                padded.set(x, y, strip.get(x, y));
            }
        }
        padded
    } else {
        // squeeze horizontally, nearest neighbour
        let mut squeezed = GrayImage::new(WORD_W, WORD_H);
        for y in 0..WORD_H {
            for x in 0..WORD_W {
                squeezed.set(x, y, strip.get(x * strip_w / WORD_W, y));
            }
        }
        squeezed
    };
    for p in image.pixels.iter_mut() {
        if rng.chance(noise_level) {
            *p = if rng.chance(0.5) { 255 } else { 0 };
        }
    }
    Ok(image)
}

/// Which split a corpus entry belongs to.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Split {
    Train,
    TestSeen,
    TestUnseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestSeen => "test_seen",
            Split::TestUnseen => "test_unseen",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test_seen" => Some(Split::TestSeen),
            "test_unseen" => Some(Split::TestUnseen),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Corpus generation parameters.
#[derive(Clone, PartialEq, Debug)]
pub struct CorpusSpec {
    /// Distinct syllables available to the train distribution.
    pub train_syllables: usize,
    /// Zipf rank exponent; 0 = uniform.
    pub zipf_exponent: f64,
    pub train_words: usize,
    pub test_seen_words: usize,
    pub test_unseen_words: usize,
    pub word_len: (usize, usize),
    /// Unseen-split word length; defaults to single-character entries.
    pub unseen_len: (usize, usize),
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            train_syllables: 300,
            zipf_exponent: 1.0,
            train_words: 5000,
            test_seen_words: 500,
            test_unseen_words: 200,
            word_len: (1, 4),
            unseen_len: (1, 1),
            noise_level: 0.02,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn from_kv_text(text: &str) -> Result<CorpusSpec, CorpusError> {
        let default = CorpusSpec::default();
        let mut kv = KvFile::parse(text)?;
        let spec = CorpusSpec {
            train_syllables: kv.take_usize("train_syllables", default.train_syllables)?,
            zipf_exponent: kv.take_f64("zipf_exponent", default.zipf_exponent)?,
            train_words: kv.take_usize("train_words", default.train_words)?,
            test_seen_words: kv.take_usize("test_seen_words", default.test_seen_words)?,
            test_unseen_words: kv.take_usize("test_unseen_words", default.test_unseen_words)?,
            word_len: (
                kv.take_usize("word_len_min", default.word_len.0)?,
                kv.take_usize("word_len_max", default.word_len.1)?,
            ),
            unseen_len: (
                kv.take_usize("unseen_len_min", default.unseen_len.0)?,
                kv.take_usize("unseen_len_max", default.unseen_len.1)?,
            ),
            noise_level: kv.take_f64("noise_level", default.noise_level)?,
            seed: kv.take_u64("seed", default.seed)?,
        };
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "train_syllables={}\nzipf_exponent={}\ntrain_words={}\ntest_seen_words={}\n\
             test_unseen_words={}\nword_len_min={}\nword_len_max={}\nunseen_len_min={}\n\
             unseen_len_max={}\nnoise_level={}\nseed={}\n",
            self.train_syllables,
            self.zipf_exponent,
            self.train_words,
            self.test_seen_words,
            self.test_unseen_words,
            self.word_len.0,
            self.word_len.1,
            self.unseen_len.0,
            self.unseen_len.1,
            self.noise_level,
            self.seed,
        )
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |msg: String| Err(CorpusError::InfeasibleSpec(msg));
        if self.train_syllables == 0 || self.train_syllables > codec::SYLLABLE_COUNT as usize {
            return fail(format!("train_syllables {} out of range", self.train_syllables));
        }
        if self.zipf_exponent < 0.0 || !self.zipf_exponent.is_finite() {
            return fail("zipf_exponent must be a nonnegative number".into());
        }
        if self.train_words == 0 {
            return fail("train_words must be positive".into());
        }
        for (lo, hi) in [self.word_len, self.unseen_len] {
            if lo == 0 || hi < lo || hi > 8 {
                return fail(format!("word length range {lo}..={hi} must sit within 1..=8"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return fail("noise_level must be in [0, 1]".into());
        }
        if self.test_unseen_words > 0 && self.train_syllables == codec::SYLLABLE_COUNT as usize {
            return fail("no syllables left over for the unseen split".into());
        }
        Ok(())
    }
}

/// One corpus entry: image path (relative to the manifest), label, split.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ManifestEntry {
    pub path: String,
    pub label: String,
    pub split: Split,
}

/// The corpus listing written as `manifest.tsv`.
#[derive(Clone, Debug)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub spec: CorpusSpec,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FORMAT: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.tsv";

impl CorpusManifest {
    pub fn entries_of(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn labels_of(&self, split: Split) -> Vec<&str> {
        self.entries_of(split).map(|e| e.label.as_str()).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CorpusError> {
        let path = dir.join(MANIFEST_NAME);
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(out, "# hangul-corpus format={}", self.format_version)?;
        for line in self.spec.to_kv_string().lines() {
            writeln!(out, "# spec.{line}")?;
        }
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.path, e.label, e.split)?;
        }
        out.flush()?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<CorpusManifest, CorpusError> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CorpusError::BadManifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<CorpusManifest, CorpusError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| CorpusError::BadManifest("empty file".into()))?;
        let format_version: u32 = header
            .strip_prefix("# hangul-corpus format=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CorpusError::BadManifest("missing format header".into()))?;
        if format_version != MANIFEST_FORMAT {
            return Err(CorpusError::BadManifest(format!(
                "unsupported format version {format_version}"
            )));
        }
        let mut spec_lines = String::new();
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            if let Some(spec_line) = line.strip_prefix("# spec.") {
                spec_lines.push_str(spec_line);
                spec_lines.push('\n');
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (path, label, split) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
                (Some(p), Some(l), Some(s), None) => (p, l, s),
                _ => {
                    return Err(CorpusError::BadManifest(format!(
                        "line {}: expected path<TAB>label<TAB>split",
                        i + 2
                    )))
                }
            };
            let split = Split::parse(split).ok_or_else(|| {
                CorpusError::BadManifest(format!("line {}: unknown split '{split}'", i + 2))
            })?;
            for ch in label.chars() {
                codec::decompose_char(ch)?;
            }
            entries.push(ManifestEntry {
                path: path.to_string(),
                label: label.to_string(),
                split,
            });
        }
        let spec = CorpusSpec::from_kv_text(&spec_lines)?;
        Ok(CorpusManifest { format_version, spec, entries })
    }
}

/// Labels of all three splits, sampled but not rendered.
pub struct SampledLabels {
    /// (label, split) in manifest order: train, test_seen, test_unseen.
    pub words: Vec<(String, Split)>,
    /// The train syllable set in Zipf rank order.
    pub ranked_syllables: Vec<char>,
}

/// Samples the word lists of all splits. Train words draw syllables
/// Zipf(zipf_exponent) over a covering train set; the unseen split draws
/// uniformly from left-over syllables whose graphemes all appear in train.
/// Retries with a shifted substream (logged) if some grapheme never makes
/// it into the sampled train split.
pub fn sample_labels(spec: &CorpusSpec) -> Result<SampledLabels, CorpusError> {
    spec.validate()?;
    let mut last_err = String::new();
    for attempt in 0..MAX_COVERAGE_ATTEMPTS {
        match sample_labels_attempt(spec, attempt) {
            Ok(sampled) => {
                if attempt > 0 {
                    log::warn!("train split coverage required {attempt} regeneration(s)");
                }
                return Ok(sampled);
            }
            Err(SampleFailure::Infeasible(msg)) => return Err(CorpusError::InfeasibleSpec(msg)),
            Err(SampleFailure::Coverage(msg)) => {
                log::warn!("attempt {attempt}: {msg}; regenerating with next substream");
                last_err = msg;
            }
        }
    }
    Err(CorpusError::InfeasibleSpec(format!(
        "grapheme coverage unreachable after {MAX_COVERAGE_ATTEMPTS} attempts: {last_err}"
    )))
}

enum SampleFailure {
    Infeasible(String),
    Coverage(String),
}

fn sample_labels_attempt(spec: &CorpusSpec, attempt: u64) -> Result<SampledLabels, SampleFailure> {
    let all: Vec<char> = (0..codec::SYLLABLE_COUNT)
        .map(|i| char::from_u32(codec::SYLLABLE_BASE + i).expect("valid block"))
        .collect();
    let mut shuffled = all.clone();
    Rng::stream(spec.seed, "syllable-set", attempt).shuffle(&mut shuffled);

    // cover all 52 graphememe classes first, then fill the budget
    let mut covered = [false; GRAPHEME_CLASSES];
    let mut covered_count = 0;
    let mut train_set: Vec<char> = Vec::with_capacity(spec.train_syllables);
    let mut rest: Vec<char> = Vec::new();
    for &ch in &shuffled {
        let (i, v, f) = codec::char_to_graphemes(ch).expect("block syllable");
        let news =
            [i, v, f].iter().filter(|g| !covered[g.index()]).map(|g| g.index()).collect::<Vec<_>>();
        if !news.is_empty() && train_set.len() < spec.train_syllables {
            for n in news {
                if !covered[n] {
                    covered[n] = true;
                    covered_count += 1;
                }
            }
            train_set.push(ch);
        } else {
            rest.push(ch);
        }
    }
    if covered_count < GRAPHEME_CLASSES {
        return Err(SampleFailure::Infeasible(format!(
            "train_syllables {} cannot cover all {GRAPHEME_CLASSES} grapheme classes",
            spec.train_syllables
        )));
    }
    for &ch in &rest {
        if train_set.len() >= spec.train_syllables {
            break;
        }
        train_set.push(ch);
    }

    let mut ranked = train_set.clone();
    Rng::stream(spec.seed, "ranks", attempt).shuffle(&mut ranked);

    // unseen pool: left-over syllables whose graphemes all occur in train
    let train_lookup: BTreeSet<char> = ranked.iter().copied().collect();
    let unseen_pool: Vec<char> = all
        .iter()
        .copied()
        .filter(|ch| !train_lookup.contains(ch))
        .filter(|&ch| {
            let (i, v, f) = codec::char_to_graphemes(ch).expect("block syllable");
            [i, v, f].iter().all(|g| covered[g.index()])
        })
        .collect();
    if spec.test_unseen_words > 0 && unseen_pool.is_empty() {
        return Err(SampleFailure::Infeasible(
            "no unseen syllables with fully covered graphemes".into(),
        ));
    }

    // Zipf cumulative weights over ranks
    let cumulative: Vec<f64> = {
        let mut acc = 0.0;
        ranked
            .iter()
            .enumerate()
            .map(|(r, _)| {
                acc += 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent);
                acc
            })
            .collect()
    };
    let total = *cumulative.last().expect("nonempty train set");
    let zipf_pick = |rng: &mut Rng| -> char {
        let u = rng.unit() * total;
        let idx = cumulative.partition_point(|&c| c <= u).min(ranked.len() - 1);
        ranked[idx]
    };

    let mut words: Vec<(String, Split)> = Vec::with_capacity(
        spec.train_words + spec.test_seen_words + spec.test_unseen_words,
    );
    for (split, count, len_range) in [
        (Split::Train, spec.train_words, spec.word_len),
        (Split::TestSeen, spec.test_seen_words, spec.word_len),
        (Split::TestUnseen, spec.test_unseen_words, spec.unseen_len),
    ] {
        let tag = format!("words.{split}.{attempt}");
        for i in 0..count {
            let mut rng = Rng::stream(spec.seed, &tag, i as u64);
            let len = rng.range_inclusive(len_range.0 as u64, len_range.1 as u64) as usize;
            let word: String = (0..len)
                .map(|_| match split {
                    Split::TestUnseen => unseen_pool[rng.below(unseen_pool.len() as u64) as usize],
                    _ => zipf_pick(&mut rng),
                })
                .collect();
            words.push((word, split));
        }
    }

    // coverage of the actually sampled train split
    let mut seen = [false; GRAPHEME_CLASSES];
    for (word, split) in &words {
        if *split != Split::Train {
            continue;
        }
        for ch in word.chars() {
            let (i, v, f) = codec::char_to_graphemes(ch).expect("sampled from block");
            for g in [i, v, f] {
                seen[g.index()] = true;
            }
        }
    }
    let missing: Vec<usize> = (0..GRAPHEME_CLASSES).filter(|&i| !seen[i]).collect();
    if !missing.is_empty() {
        return Err(SampleFailure::Coverage(format!(
            "{} grapheme class(es) missing from sampled train words",
            missing.len()
        )));
    }
    Ok(SampledLabels { words, ranked_syllables: ranked })
}

/// Samples labels, renders every word, writes PGM files plus
/// `manifest.tsv` under `out_dir`, and returns the manifest. Rendering is
/// parallel per word; each word's noise/jitter stream is derived from
/// (seed, entry index), so output is independent of worker count.
pub fn generate(spec: &CorpusSpec, out_dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let sampled = sample_labels(spec)?;
    let atlas = build_atlas(spec.seed)?;
    std::fs::create_dir_all(out_dir.join("img"))?;

    let mut split_counters = [0usize; 3];
    let jobs: Vec<(usize, String, Split, String)> = sampled
        .words
        .iter()
        .enumerate()
        .map(|(index, (word, split))| {
            let n = split_counters[*split as usize];
            split_counters[*split as usize] += 1;
            (index, word.clone(), *split, format!("img/{split}_{n:06}.pgm"))
        })
        .collect();

    let images: Vec<Result<GrayImage, CorpusError>> = jobs
        .par_iter()
        .map(|(index, word, _, _)| {
            let mut rng = Rng::stream(spec.seed, "render", *index as u64);
            render_word(word, &atlas, spec.noise_level, JITTER_PX, &mut rng)
        })
        .collect();

    let mut entries = Vec::with_capacity(jobs.len());
    for ((_, word, split, rel_path), image) in jobs.into_iter().zip(images) {
        pgm::write_pgm(&out_dir.join(&rel_path), &image?)?;
        entries.push(ManifestEntry { path: rel_path, label: word, split });
    }
    let manifest =
        CorpusManifest { format_version: MANIFEST_FORMAT, spec: spec.clone(), entries };
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests;
