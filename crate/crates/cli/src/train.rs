//! The training loop: Adam over shuffled batches with periodic held-out
//! evaluation and a best-word-accuracy checkpoint.
//!
//! Batch members run in parallel, one graph per sample, and their gradients
//! are summed in batch order afterwards — results are bitwise identical for
//! any worker count. All shuffling and initialization derives from the run
//! seed, so one config gives one checkpoint, byte for byte.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::json;

use hangul_ocr_core::corpus::{CorpusManifest, Split};
use hangul_ocr_core::kv::KvFile;
use hangul_ocr_core::metrics;
use hangul_ocr_core::model::{Recognizer, RecognizerConfig, RecognizerMode};
use hangul_ocr_core::pgm;
use hangul_ocr_core::tensor::{adam_step, AdamConfig, AdamState, Graph, Rng, Tensor};

use crate::runlog::RunLogWriter;
use crate::CliError;

/// Full training configuration: the model config plus loop parameters.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub model: RecognizerConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub holdout_words: usize,
    /// Stop once held-out character accuracy reaches this value.
    pub stop_char_acc: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: RecognizerConfig::default(),
            lr: 1e-3,
            batch_size: 64,
            max_iters: 2000,
            eval_every: 200,
            seed: 0,
            holdout_words: 256,
            stop_char_acc: None,
        }
    }
}

impl TrainConfig {
    pub fn from_kv_text(text: &str) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let dm = d.model;
        let mut kv = KvFile::parse(text)?;
        let mode = match kv.take_str("mode").as_deref() {
            None | Some("grapheme") => RecognizerMode::Grapheme,
            Some("character_baseline") => RecognizerMode::CharacterBaseline,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "mode must be grapheme or character_baseline, got '{other}'"
                )))
            }
        };
        let model = RecognizerConfig {
            feature_dim: kv.take_usize("feature_dim", dm.feature_dim)?,
            seq_len: kv.take_usize("seq_len", dm.seq_len)?,
            encoder_layers: kv.take_usize("encoder_layers", dm.encoder_layers)?,
            num_heads: kv.take_usize("num_heads", dm.num_heads)?,
            image_h: kv.take_usize("image_h", dm.image_h)?,
            image_w: kv.take_usize("image_w", dm.image_w)?,
            use_transformer: kv.take_bool("use_transformer", dm.use_transformer)?,
            mask_pad: kv.take_bool("mask_pad", dm.mask_pad)?,
            mode,
            ..dm
        };
        let cfg = TrainConfig {
            model,
            lr: kv.take_f64("lr", d.lr)?,
            batch_size: kv.take_usize("batch_size", d.batch_size)?,
            max_iters: kv.take_usize("max_iters", d.max_iters)?,
            eval_every: kv.take_usize("eval_every", d.eval_every)?,
            seed: kv.take_u64("seed", d.seed)?,
            holdout_words: kv.take_usize("holdout_words", d.holdout_words)?,
            stop_char_acc: kv.take_parsed("stop_char_acc", "number")?,
        };
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_path(path: &Path) -> Result<TrainConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_kv_text(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(CliError::from)?;
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(CliError::Usage("lr must be positive".into()));
        }
        if self.batch_size == 0 || self.max_iters == 0 || self.eval_every == 0 {
            return Err(CliError::Usage(
                "batch_size, max_iters and eval_every must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The effective configuration, in the same key=value format it is
    /// parsed from.
    pub fn echo(&self) -> String {
        let m = &self.model;
        let mode = match m.mode {
            RecognizerMode::Grapheme => "grapheme",
            RecognizerMode::CharacterBaseline => "character_baseline",
        };
        let mut out = format!(
            "mode={mode}\nfeature_dim={}\nseq_len={}\nencoder_layers={}\nnum_heads={}\n\
             image_h={}\nimage_w={}\nuse_transformer={}\nmask_pad={}\nlr={}\nbatch_size={}\n\
             max_iters={}\neval_every={}\nseed={}\nholdout_words={}\n",
            m.feature_dim,
            m.seq_len,
            m.encoder_layers,
            m.num_heads,
            m.image_h,
            m.image_w,
            m.use_transformer,
            m.mask_pad,
            self.lr,
            self.batch_size,
            self.max_iters,
            self.eval_every,
            self.seed,
            self.holdout_words,
        );
        if let Some(s) = self.stop_char_acc {
            out.push_str(&format!("stop_char_acc={s}\n"));
        }
        out
    }
}

/// One loaded training sample.
struct Sample {
    image: Tensor<f32>,
    label: String,
    targets: Vec<usize>,
}

/// What `cmd_train` leaves behind.
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub runlog: PathBuf,
    pub iters_run: usize,
    pub best_iter: usize,
    pub best_word_acc: f64,
    pub final_loss: f64,
    pub wall: std::time::Duration,
}

pub const CHECKPOINT_NAME: &str = "model.ckpt";

/// Trains per the config on the corpus under `corpus_dir`, writing the
/// checkpoint and run log into `out_dir`.
pub fn cmd_train(
    cfg: &TrainConfig,
    corpus_dir: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let manifest = CorpusManifest::read(corpus_dir)?;

    let mut model = build_model(cfg, &manifest)?;
    let samples = load_samples(&model, &manifest, corpus_dir, Split::Train)?;
    if samples.len() <= cfg.holdout_words {
        return Err(CliError::Usage(format!(
            "holdout_words {} must be smaller than the train split ({} words)",
            cfg.holdout_words,
            samples.len()
        )));
    }
    let (train, holdout) = samples.split_at(samples.len() - cfg.holdout_words);

    std::fs::create_dir_all(out_dir)?;
    let mut log = RunLogWriter::create(out_dir)?;
    let mut config_record = json!({
        "type": "config",
        "build": format!("hangul-ocr {}", env!("CARGO_PKG_VERSION")),
        "corpus": corpus_dir.display().to_string(),
        "train_words": train.len(),
        "holdout_words": holdout.len(),
    });
    for line in cfg.echo().lines() {
        let (k, v) = line.split_once('=').expect("echo emits key=value");
        config_record[k] = json!(v);
    }
    log.record(config_record)?;

    let mut adam = AdamState::new(model.param_tensors());
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let mut epoch = 0u64;

    let mut best: Option<(usize, f64, Vec<Tensor<f32>>)> = None;
    let mut final_loss = f64::NAN;
    let mut iters_run = 0;
    let mut stopped_early = false;

    for iter in 0..cfg.max_iters {
        // next deterministic batch, reshuffling at epoch boundaries
        if cursor + cfg.batch_size > order.len() {
            order = (0..train.len()).collect();
            Rng::stream(cfg.seed, "shuffle", epoch).shuffle(&mut order);
            epoch += 1;
            cursor = 0;
        }
        let batch = &order[cursor..cursor + cfg.batch_size.min(train.len())];
        cursor += cfg.batch_size;

        let (loss, grads) = batch_step(&model, train, batch)?;
        final_loss = loss;
        iters_run = iter + 1;
        if !loss.is_finite() {
            return Err(CliError::Numeric(format!("loss diverged at iteration {iter}")));
        }

        if iter % cfg.eval_every == 0 {
            let (char_acc, word_acc) = evaluate_on(&model, holdout)?;
            log.record(json!({
                "type": "eval",
                "iter": iter,
                "loss": round6(loss),
                "char_acc": round6(char_acc),
                "word_acc": round6(word_acc),
            }))?;
            track_best(&mut best, iter, word_acc, &model);
            if cfg.stop_char_acc.is_some_and(|t| char_acc >= t) {
                stopped_early = true;
            }
        }

        if stopped_early {
            break;
        }
        adam_step(model.param_tensors_mut(), &grads, &mut adam, &adam_cfg)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
    }

    // closing evaluation at the final parameters
    let (char_acc, word_acc) = evaluate_on(&model, holdout)?;
    log.record(json!({
        "type": "eval",
        "iter": iters_run,
        "loss": round6(final_loss),
        "char_acc": round6(char_acc),
        "word_acc": round6(word_acc),
    }))?;
    track_best(&mut best, iters_run, word_acc, &model);

    let (best_iter, best_word_acc, best_params) = best.expect("at least one evaluation ran");
    for (dst, src) in model.param_tensors_mut().iter_mut().zip(&best_params) {
        *dst = src.clone();
    }
    let checkpoint = out_dir.join(CHECKPOINT_NAME);
    model.save(&checkpoint)?;

    let wall = start.elapsed();
    log.record(json!({
        "type": "done",
        "iters_run": iters_run,
        "stopped_early": stopped_early,
        "best_iter": best_iter,
        "best_word_acc": round6(best_word_acc),
        "wall_ms": wall.as_millis() as u64,
    }))?;
    log.finish()?;

    Ok(TrainOutcome {
        checkpoint,
        runlog: out_dir.join(crate::runlog::RUNLOG_NAME),
        iters_run,
        best_iter,
        best_word_acc,
        final_loss,
        wall,
    })
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn track_best(
    best: &mut Option<(usize, f64, Vec<Tensor<f32>>)>,
    iter: usize,
    word_acc: f64,
    model: &Recognizer<f32>,
) {
    let better = best.as_ref().map_or(true, |(_, acc, _)| word_acc > *acc);
    if better {
        *best = Some((iter, word_acc, model.param_tensors().to_vec()));
    }
}

fn build_model(cfg: &TrainConfig, manifest: &CorpusManifest) -> Result<Recognizer<f32>, CliError> {
    match cfg.model.mode {
        RecognizerMode::Grapheme => {
            Ok(Recognizer::new_grapheme(cfg.model, cfg.seed).map_err(CliError::from)?)
        }
        RecognizerMode::CharacterBaseline => {
            // charset = the distinct train-split syllables, in code-point order
            let mut charset: Vec<char> =
                manifest.labels_of(Split::Train).iter().flat_map(|l| l.chars()).collect();
            charset.sort_unstable();
            charset.dedup();
            Ok(Recognizer::new_character_baseline(cfg.model, &charset, cfg.seed)
                .map_err(CliError::from)?)
        }
    }
}

fn load_samples(
    model: &Recognizer<f32>,
    manifest: &CorpusManifest,
    corpus_dir: &Path,
    split: Split,
) -> Result<Vec<Sample>, CliError> {
    let entries: Vec<_> = manifest.entries_of(split).collect();
    if entries.is_empty() {
        return Err(CliError::Data(format!("split '{split}' has no entries")));
    }
    let cfg = model.config();
    let mut samples = Vec::with_capacity(entries.len());
    for entry in entries {
        let image = pgm::read_pgm(&corpus_dir.join(&entry.path))
            .map_err(|e| CliError::Data(format!("{}: {e}", entry.path)))?;
        if image.width != cfg.image_w || image.height != cfg.image_h {
            return Err(CliError::Data(format!(
                "{}: image is {}x{}, config expects {}x{}",
                entry.path, image.width, image.height, cfg.image_w, cfg.image_h
            )));
        }
        let targets = model.targets(&entry.label).map_err(CliError::from)?;
        samples.push(Sample { image: image.to_tensor(), label: entry.label.clone(), targets });
    }
    Ok(samples)
}

/// Forward/backward over one batch. Samples run in parallel; the returned
/// gradients are the batch-mean, accumulated in index order.
#[allow(clippy::type_complexity)]
fn batch_step(
    model: &Recognizer<f32>,
    train: &[Sample],
    batch: &[usize],
) -> Result<(f64, Vec<Option<Tensor<f32>>>), CliError> {
    let per_sample: Vec<Result<(f64, Vec<Option<Tensor<f32>>>), CliError>> = batch
        .par_iter()
        .map(|&idx| {
            let sample = &train[idx];
            let mut g = Graph::new();
            let nodes = model.forward(&mut g, &sample.image).map_err(CliError::from)?;
            let loss = model
                .loss_from_targets(&mut g, nodes.logits, &sample.targets)
                .map_err(CliError::from)?;
            let grads = g.backward(loss).map_err(|e| CliError::Numeric(e.to_string()))?;
            Ok((f64::from(g.value(loss).item()), grads))
        })
        .collect();

    let mut total_loss = 0.0;
    let mut summed: Vec<Option<Tensor<f32>>> = vec![None; model.param_tensors().len()];
    for result in per_sample {
        let (loss, grads) = result?;
        total_loss += loss;
        for (slot, grad) in summed.iter_mut().zip(grads) {
            match (slot.as_mut(), grad) {
                (Some(acc), Some(g)) => {
                    acc.accumulate(&g).map_err(|e| CliError::Numeric(e.to_string()))?
                }
                (None, Some(g)) => *slot = Some(g),
                _ => {}
            }
        }
    }
    let scale = 1.0 / batch.len() as f32;
    for grad in summed.iter_mut().flatten() {
        grad.scale_in_place(scale);
    }
    Ok((total_loss / batch.len() as f64, summed))
}

fn evaluate_on(model: &Recognizer<f32>, samples: &[Sample]) -> Result<(f64, f64), CliError> {
    let preds: Vec<String> = samples
        .par_iter()
        .map(|s| model.recognize(&s.image).map(|d| d.text).map_err(CliError::from))
        .collect::<Result<_, _>>()?;
    let gts: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
    let char_acc = metrics::char_accuracy(&preds, &gts)?;
    let word_acc = metrics::word_accuracy(&preds, &gts)?;
    Ok((char_acc, word_acc))
}
