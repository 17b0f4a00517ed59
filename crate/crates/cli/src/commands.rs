//! Non-training commands: corpus generation, evaluation, the unseen-set
//! comparison, attention export, imbalance analysis, decomposition.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use hangul_ocr_core::codec::{self, GraphemeId, SeqClass};
use hangul_ocr_core::corpus::{self, CorpusManifest, CorpusSpec, Split};
use hangul_ocr_core::metrics::{self, EvalReport, HistUnit};
use hangul_ocr_core::model::{Recognizer, RecognizerMode};
use hangul_ocr_core::pgm::{self, GrayImage};
use hangul_ocr_core::tensor::Tensor;

use crate::CliError;

/// `gen-corpus`: renders a corpus from a spec file into `out_dir`.
pub fn cmd_gen_corpus(
    spec_path: &Path,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<(CorpusSpec, CorpusManifest), CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Usage(format!("spec {}: {e}", spec_path.display())))?;
    let mut spec = CorpusSpec::from_kv_text(&text)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let manifest = corpus::generate(&spec, out_dir)?;
    Ok((spec, manifest))
}

fn load_split_images(
    model: &Recognizer<f32>,
    corpus_dir: &Path,
    split: Split,
) -> Result<(Vec<Tensor<f32>>, Vec<String>), CliError> {
    let manifest = CorpusManifest::read(corpus_dir)?;
    let entries: Vec<_> = manifest.entries_of(split).collect();
    if entries.is_empty() {
        return Err(CliError::Data(format!("split '{split}' has no entries")));
    }
    let cfg = model.config();
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for entry in entries {
        let image = pgm::read_pgm(&corpus_dir.join(&entry.path))
            .map_err(|e| CliError::Data(format!("{}: {e}", entry.path)))?;
        if image.width != cfg.image_w || image.height != cfg.image_h {
            return Err(CliError::Data(format!(
                "{}: image is {}x{}, checkpoint expects {}x{}",
                entry.path, image.width, image.height, cfg.image_w, cfg.image_h
            )));
        }
        images.push(image.to_tensor());
        labels.push(entry.label.clone());
    }
    Ok((images, labels))
}

fn predict_all(model: &Recognizer<f32>, images: &[Tensor<f32>]) -> Result<Vec<String>, CliError> {
    images
        .par_iter()
        .map(|img| model.recognize(img).map(|d| d.text).map_err(CliError::from))
        .collect()
}

/// `eval`: accuracy report of a checkpoint on one corpus split.
pub fn cmd_eval(
    checkpoint: &Path,
    corpus_dir: &Path,
    split: Split,
) -> Result<EvalReport, CliError> {
    let model = Recognizer::<f32>::load(checkpoint)?;
    let (images, labels) = load_split_images(&model, corpus_dir, split)?;
    let preds = predict_all(&model, &images)?;
    Ok(metrics::evaluate(&preds, &labels)?)
}

/// One row of the unseen-characters comparison table.
pub struct CompareRow {
    pub name: String,
    pub encoding: &'static str,
    pub char_acc: f64,
    pub word_acc: f64,
}

/// `unseen-compare`: grapheme model vs character baseline (and optionally
/// the no-transformer ablation) on the test_unseen split.
pub fn cmd_unseen_compare(
    grapheme_ckpt: &Path,
    baseline_ckpt: &Path,
    ablation_ckpt: Option<&Path>,
    corpus_dir: &Path,
) -> Result<Vec<CompareRow>, CliError> {
    let mut rows = Vec::new();
    let mut add = |name: &str, path: &Path| -> Result<(), CliError> {
        let model = Recognizer::<f32>::load(path)?;
        let encoding = match model.config().mode {
            RecognizerMode::Grapheme => "grapheme",
            RecognizerMode::CharacterBaseline => "character",
        };
        let (images, labels) = load_split_images(&model, corpus_dir, Split::TestUnseen)?;
        let preds = predict_all(&model, &images)?;
        rows.push(CompareRow {
            name: name.to_string(),
            encoding,
            char_acc: metrics::char_accuracy(&preds, &labels)?,
            word_acc: metrics::word_accuracy(&preds, &labels)?,
        });
        Ok(())
    };
    add("grapheme", grapheme_ckpt)?;
    if let Some(path) = ablation_ckpt {
        add("grapheme w/o transformer", path)?;
    }
    add("character baseline", baseline_ckpt)?;
    Ok(rows)
}

/// What `export-attention` wrote.
pub struct AttentionExport {
    pub files: Vec<PathBuf>,
    pub index: PathBuf,
    pub text: String,
    /// Per decoder position: (slot name, predicted class label).
    pub predictions: Vec<(String, String)>,
}

/// `export-attention`: one upscaled PGM per decoder position plus an index
/// file naming each position's predicted class.
pub fn cmd_export_attention(
    checkpoint: &Path,
    image_path: &Path,
    out_dir: &Path,
) -> Result<AttentionExport, CliError> {
    let model = Recognizer::<f32>::load(checkpoint)?;
    let cfg = *model.config();
    let image = pgm::read_pgm(image_path)?;
    if image.width != cfg.image_w || image.height != cfg.image_h {
        return Err(CliError::Data(format!(
            "{}: image is {}x{}, checkpoint expects {}x{}",
            image_path.display(),
            image.width,
            image.height,
            cfg.image_w,
            cfg.image_h
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    let mut g = hangul_ocr_core::tensor::Graph::new();
    let nodes = model.forward(&mut g, &image.to_tensor())?;
    let classes = model.argmax_classes(g.value(nodes.logits));
    let (text, _) = model.decode_classes(&classes);
    let attention = g.value(nodes.attention);
    let (h4, w4) = cfg.feature_hw();

    let mut files = Vec::new();
    let mut predictions = Vec::new();
    let mut index_text = String::new();
    for (pos, window) in attention.data().chunks_exact(h4 * w4).enumerate() {
        // nearest-neighbour 4x upscale, then linear rescale to [0, 255]
        let max = window.iter().cloned().fold(0.0f32, f32::max);
        let mut img = GrayImage::new(w4 * 4, h4 * 4);
        for y in 0..h4 * 4 {
            for x in 0..w4 * 4 {
                let v = window[(y / 4) * w4 + x / 4];
                let scaled = if max > 0.0 { (v / max * 255.0).round() as u8 } else { 0 };
                img.set(x, y, scaled);
            }
        }
        let path = out_dir.join(format!("attn_{pos:02}.pgm"));
        pgm::write_pgm(&path, &img)?;
        files.push(path);

        let slot = match cfg.mode {
            RecognizerMode::Grapheme => ["initial", "vowel", "final"][pos % 3].to_string(),
            RecognizerMode::CharacterBaseline => "char".to_string(),
        };
        let label = class_label(&model, classes[pos]);
        index_text.push_str(&format!("{pos}\t{slot}\t{label}\n"));
        predictions.push((slot, label));
    }
    let index = out_dir.join("index.tsv");
    let mut f = std::io::BufWriter::new(std::fs::File::create(&index)?);
    f.write_all(index_text.as_bytes())?;
    f.flush()?;
    Ok(AttentionExport { files, index, text, predictions })
}

fn class_label(model: &Recognizer<f32>, class: usize) -> String {
    match model.config().mode {
        RecognizerMode::Grapheme => match SeqClass::from_class_index(class) {
            Some(SeqClass::Grapheme(GraphemeId::NO_FINAL)) => "no-final".to_string(),
            Some(SeqClass::Grapheme(id)) => id.label().to_string(),
            Some(SeqClass::Pad) | None => "pad".to_string(),
        },
        RecognizerMode::CharacterBaseline => {
            model.charset().get(class).map_or("pad".to_string(), |c| c.to_string())
        }
    }
}

/// `analyze` output: corpus counts, both Gini indices, top classes.
pub struct AnalyzeReport {
    pub n_words: usize,
    pub n_chars: u64,
    pub distinct_chars: usize,
    pub distinct_graphemes: usize,
    pub gini_char: f64,
    pub gini_grapheme: f64,
    pub full_inventory: bool,
    pub top_chars: Vec<(String, u64)>,
    pub top_graphemes: Vec<(String, u64)>,
}

/// `analyze`: imbalance report over a corpus manifest (all splits) or a
/// plain UTF-8 word list, one word per line.
pub fn cmd_analyze(path: &Path, full_inventory: bool) -> Result<AnalyzeReport, CliError> {
    let file = if path.is_dir() { path.join(corpus::MANIFEST_NAME) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file)
        .map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
    let labels: Vec<String> = if text.starts_with("# hangul-corpus") {
        CorpusManifest::parse(&text)?.entries.into_iter().map(|e| e.label).collect()
    } else {
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let word = line.trim_end_matches('\r');
            if word.is_empty() {
                continue;
            }
            for ch in word.chars() {
                codec::decompose_char(ch).map_err(|e| {
                    CliError::Data(format!("{}: line {}: {e}", file.display(), i + 1))
                })?;
            }
            words.push(word.to_string());
        }
        words
    };
    if labels.is_empty() {
        return Err(CliError::Data(format!("{}: no words found", file.display())));
    }

    let chars = metrics::histogram(labels.iter().map(String::as_str), HistUnit::Character)?;
    let graphemes = metrics::histogram(labels.iter().map(String::as_str), HistUnit::Grapheme)?;
    let gini_char = metrics::gini(&chars, full_inventory)?;
    let gini_grapheme = metrics::gini(&graphemes, full_inventory)?;

    let top = |counts: &std::collections::BTreeMap<u32, u64>, grapheme: bool| {
        let mut items: Vec<(String, u64)> = counts
            .iter()
            .map(|(&key, &count)| {
                let label = if grapheme {
                    class_name(key as usize)
                } else {
                    char::from_u32(key).map_or("?".to_string(), |c| c.to_string())
                };
                (label, count)
            })
            .collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        items.truncate(10);
        items
    };

    Ok(AnalyzeReport {
        n_words: labels.len(),
        n_chars: chars.total(),
        distinct_chars: chars.counts.len(),
        distinct_graphemes: graphemes.counts.len(),
        gini_char,
        gini_grapheme,
        full_inventory,
        top_chars: top(&chars.counts, false),
        top_graphemes: top(&graphemes.counts, true),
    })
}

fn class_name(index: usize) -> String {
    GraphemeId::new(index as u8)
        .map(|id| if id == GraphemeId::NO_FINAL { "no-final".to_string() } else { id.label().to_string() })
        .unwrap_or_else(|| "?".to_string())
}

/// `decompose`: one line per character, `char<TAB>initial<TAB>vowel<TAB>final`
/// with `∅` marking an absent final consonant.
pub fn cmd_decompose(text: &str) -> Result<String, CliError> {
    let mut out = String::new();
    for ch in text.chars() {
        let (i, v, f) =
            codec::char_to_graphemes(ch).map_err(|e| CliError::Data(e.to_string()))?;
        out.push_str(&format!("{ch}\t{}\t{}\t{}\n", i.label(), v.label(), f.label()));
    }
    Ok(out)
}
