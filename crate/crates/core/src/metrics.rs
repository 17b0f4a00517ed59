//! Accuracy and class-imbalance metrics.
//!
//! Character accuracy is position-wise with a max-length denominator — the
//! decoder emits fixed-length parallel output, so positional comparison
//! matches its structure. The Gini index uses the pairwise-difference form
//! G = ΣᵢΣⱼ|xᵢ−xⱼ| / (2n²x̄), over observed class support by default or the
//! full inventory (11,172 characters / 52 graphemes) when asked.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{self, CodecError, GraphemeId, GRAPHEME_CLASSES, SYLLABLE_COUNT};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction and ground-truth lists differ in length: {preds} vs {gts}")]
    LengthMismatch { preds: usize, gts: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("empty histogram")]
    EmptyHistogram,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Accuracy summary of one evaluation run.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub char_accuracy: f64,
    pub word_accuracy: f64,
    /// Fraction of ground-truth occurrences of each grapheme predicted
    /// correctly (position-wise), over classes that occur.
    pub per_class_recall: BTreeMap<GraphemeId, f64>,
    pub n_words: usize,
    pub n_chars: usize,
}

/// Position-wise character accuracy: Σ matching positions / Σ max(len).
pub fn char_accuracy(preds: &[String], gts: &[String]) -> Result<f64, MetricsError> {
    check_lists(preds, gts)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for (pred, gt) in preds.iter().zip(gts) {
        let p: Vec<char> = pred.chars().collect();
        let g: Vec<char> = gt.chars().collect();
        total += p.len().max(g.len());
        correct += p.iter().zip(&g).filter(|(a, b)| a == b).count();
    }
    if total == 0 {
        return Ok(1.0); // all pairs empty: nothing to get wrong
    }
    Ok(correct as f64 / total as f64)
}

/// Fraction of exact string matches.
pub fn word_accuracy(preds: &[String], gts: &[String]) -> Result<f64, MetricsError> {
    check_lists(preds, gts)?;
    let hits = preds.iter().zip(gts).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}

fn check_lists(preds: &[String], gts: &[String]) -> Result<(), MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch { preds: preds.len(), gts: gts.len() });
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

/// Counting unit of a frequency histogram.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum HistUnit {
    Character,
    Grapheme,
}

/// Class-frequency histogram over a label corpus. Keys are code points
/// (character unit) or grapheme class indices (grapheme unit).
#[derive(Clone, Debug)]
pub struct FrequencyHistogram {
    pub unit: HistUnit,
    pub counts: BTreeMap<u32, u64>,
}

impl FrequencyHistogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    fn inventory_size(&self) -> usize {
        match self.unit {
            HistUnit::Character => SYLLABLE_COUNT as usize,
            HistUnit::Grapheme => GRAPHEME_CLASSES,
        }
    }
}

/// Counts characters, or the three graphemes of every character (the
/// no-final class included), across the given labels.
pub fn histogram<'a, I>(labels: I, unit: HistUnit) -> Result<FrequencyHistogram, MetricsError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    for label in labels {
        for ch in label.chars() {
            match unit {
                HistUnit::Character => {
                    codec::decompose_char(ch)?; // validate block membership
                    *counts.entry(ch as u32).or_default() += 1;
                }
                HistUnit::Grapheme => {
                    let (i, v, f) = codec::char_to_graphemes(ch)?;
                    for g in [i, v, f] {
                        *counts.entry(g.index() as u32).or_default() += 1;
                    }
                }
            }
        }
    }
    Ok(FrequencyHistogram { unit, counts })
}

/// Gini index of a raw count vector: G = ΣᵢΣⱼ|xᵢ−xⱼ| / (2n²x̄), computed
/// through the sorted form Σᵢ(2i−n−1)xᵢ / (n·Σx).
pub fn gini_from_counts(counts: &[u64]) -> Result<f64, MetricsError> {
    let total: u64 = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut weighted = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        weighted += (2.0 * (i + 1) as f64 - n - 1.0) * x as f64;
    }
    Ok(weighted / (n * total as f64))
}

/// Gini index of a histogram: over observed support by default, or over the
/// full class inventory (absent classes as zero counts) when flagged.
pub fn gini(h: &FrequencyHistogram, full_inventory: bool) -> Result<f64, MetricsError> {
    if full_inventory {
        let mut counts = vec![0u64; h.inventory_size()];
        for (&key, &count) in &h.counts {
            let index = match h.unit {
                HistUnit::Character => (key - crate::codec::SYLLABLE_BASE) as usize,
                HistUnit::Grapheme => key as usize,
            };
            counts[index] = count;
        }
        gini_from_counts(&counts)
    } else {
        let counts: Vec<u64> = h.counts.values().copied().collect();
        gini_from_counts(&counts)
    }
}

/// (character Gini, grapheme Gini) of one corpus, both under the same
/// inventory setting.
pub fn imbalance_report<'a, I>(labels: I, full_inventory: bool) -> Result<(f64, f64), MetricsError>
where
    I: IntoIterator<Item = &'a str> + Clone,
{
    let chars = histogram(labels.clone(), HistUnit::Character)?;
    let graphemes = histogram(labels, HistUnit::Grapheme)?;
    Ok((gini(&chars, full_inventory)?, gini(&graphemes, full_inventory)?))
}

/// Full evaluation: accuracies plus per-grapheme recall.
pub fn evaluate(preds: &[String], gts: &[String]) -> Result<EvalReport, MetricsError> {
    let char_acc = char_accuracy(preds, gts)?;
    let word_acc = word_accuracy(preds, gts)?;
    let mut totals: BTreeMap<GraphemeId, u64> = BTreeMap::new();
    let mut hits: BTreeMap<GraphemeId, u64> = BTreeMap::new();
    let mut n_chars = 0usize;
    for (pred, gt) in preds.iter().zip(gts) {
        let pred_chars: Vec<char> = pred.chars().collect();
        for (i, gt_char) in gt.chars().enumerate() {
            n_chars += 1;
            let gt_ids = match codec::char_to_graphemes(gt_char) {
                Ok((a, b, c)) => [a, b, c],
                Err(_) => continue,
            };
            let pred_ids = pred_chars
                .get(i)
                .and_then(|&ch| codec::char_to_graphemes(ch).ok())
                .map(|(a, b, c)| [a, b, c]);
            for (slot, &gt_id) in gt_ids.iter().enumerate() {
                *totals.entry(gt_id).or_default() += 1;
                if pred_ids.map_or(false, |p| p[slot] == gt_id) {
                    *hits.entry(gt_id).or_default() += 1;
                }
            }
        }
    }
    let per_class_recall = totals
        .iter()
        .map(|(&id, &total)| {
            let hit = hits.get(&id).copied().unwrap_or(0);
            (id, hit as f64 / total as f64)
        })
        .collect();
    Ok(EvalReport {
        char_accuracy: char_acc,
        word_accuracy: word_acc,
        per_class_recall,
        n_words: gts.len(),
        n_chars,
    })
}
