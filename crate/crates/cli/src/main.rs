//! `hangul-ocr` command line entry point.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use hangul_ocr_cli::commands::{
    cmd_analyze, cmd_decompose, cmd_eval, cmd_export_attention, cmd_gen_corpus,
    cmd_unseen_compare,
};
use hangul_ocr_cli::train::{cmd_train, TrainConfig};
use hangul_ocr_cli::CliError;
use hangul_ocr_core::corpus::Split;

#[derive(Parser)]
#[command(
    name = "hangul-ocr",
    about = "Grapheme-level Hangul OCR: corpus generation, training, evaluation, analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural glyph corpus from a key=value spec file
    GenCorpus {
        /// Corpus spec (flat key=value text)
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for images and manifest.tsv
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a recognizer on a generated corpus
    Train {
        /// Training config (flat key=value text)
        #[arg(long)]
        config: PathBuf,
        /// Corpus directory containing manifest.tsv
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for checkpoint and run log
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Override the config's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on one corpus split
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// train, test_seen or test_unseen
        #[arg(long, default_value = "test_seen")]
        split: String,
        #[arg(long)]
        json: bool,
    },
    /// Compare grapheme and character-baseline models on unseen characters
    UnseenCompare {
        #[arg(long)]
        grapheme: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        /// Optional no-transformer ablation checkpoint, reported alongside
        #[arg(long)]
        ablation: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write per-position decoder attention maps as PGM files
    ExportAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input image (binary PGM at the model's input size)
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Class-imbalance report over a corpus manifest or plain word list
    Analyze {
        /// manifest.tsv, its directory, or a UTF-8 file with one word per line
        #[arg(long)]
        corpus: PathBuf,
        /// Gini over the full class inventory instead of observed support
        #[arg(long)]
        full_inventory: bool,
        #[arg(long)]
        json: bool,
    },
    /// Decompose text into graphemes, one line per character
    Decompose { text: String },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version "errors" are normal exits
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenCorpus { spec, out, seed } => {
            let (spec, manifest) = cmd_gen_corpus(&spec, &out, seed)?;
            eprint!("{}", prefix_lines("config: ", &spec.to_kv_string()));
            for split in [Split::Train, Split::TestSeen, Split::TestUnseen] {
                println!("{split}: {} words", manifest.entries_of(split).count());
            }
            println!("manifest: {}", out.join("manifest.tsv").display());
            Ok(())
        }
        Command::Train { config, corpus, out, seed } => {
            let mut cfg = TrainConfig::from_kv_path(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            eprint!("{}", prefix_lines("config: ", &cfg.echo()));
            let outcome = cmd_train(&cfg, &corpus, &out)?;
            println!(
                "trained {} iterations in {:.1}s; best word accuracy {:.4} at iteration {}",
                outcome.iters_run,
                outcome.wall.as_secs_f64(),
                outcome.best_word_acc,
                outcome.best_iter
            );
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!("run log: {}", outcome.runlog.display());
            Ok(())
        }
        Command::Eval { checkpoint, corpus, split, json } => {
            let split = Split::parse(&split)
                .ok_or_else(|| CliError::Usage(format!("unknown split '{split}'")))?;
            eprintln!("config: checkpoint={} split={split}", checkpoint.display());
            let report = cmd_eval(&checkpoint, &corpus, split)?;
            if json {
                let recall: serde_json::Map<String, serde_json::Value> = report
                    .per_class_recall
                    .iter()
                    .map(|(id, r)| (id.label().to_string(), json!(r)))
                    .collect();
                println!(
                    "{}",
                    json!({
                        "split": split.as_str(),
                        "n_words": report.n_words,
                        "n_chars": report.n_chars,
                        "char_accuracy": report.char_accuracy,
                        "word_accuracy": report.word_accuracy,
                        "per_class_recall": recall,
                    })
                );
            } else {
                println!("split: {split}");
                println!("words: {}", report.n_words);
                println!("chars: {}", report.n_chars);
                println!("char_accuracy: {:.4}", report.char_accuracy);
                println!("word_accuracy: {:.4}", report.word_accuracy);
                let mut worst: Vec<_> = report.per_class_recall.iter().collect();
                worst.sort_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(b.0)));
                let line: Vec<String> =
                    worst.iter().take(5).map(|(id, r)| format!("{}={:.3}", id.label(), r)).collect();
                println!("lowest_recall: {}", line.join(" "));
            }
            Ok(())
        }
        Command::UnseenCompare { grapheme, baseline, ablation, corpus, json } => {
            eprintln!(
                "config: grapheme={} baseline={} ablation={} corpus={}",
                grapheme.display(),
                baseline.display(),
                ablation.as_deref().map_or("-".into(), |p| p.display().to_string()),
                corpus.display()
            );
            let rows = cmd_unseen_compare(&grapheme, &baseline, ablation.as_deref(), &corpus)?;
            if json {
                let items: Vec<_> = rows
                    .iter()
                    .map(|r| {
                        json!({
                            "model": r.name,
                            "encoding": r.encoding,
                            "char_accuracy": r.char_acc,
                            "word_accuracy": r.word_acc,
                        })
                    })
                    .collect();
                println!("{}", json!({ "split": "test_unseen", "rows": items }));
            } else {
                println!("{:<28}{:<12}{:>10}{:>10}", "model", "encoding", "char_acc", "word_acc");
                for r in rows {
                    println!(
                        "{:<28}{:<12}{:>10.4}{:>10.4}",
                        r.name, r.encoding, r.char_acc, r.word_acc
                    );
                }
            }
            Ok(())
        }
        Command::ExportAttention { checkpoint, image, out } => {
            eprintln!(
                "config: checkpoint={} image={}",
                checkpoint.display(),
                image.display()
            );
            let export = cmd_export_attention(&checkpoint, &image, &out)?;
            println!("decoded: {}", export.text);
            println!("maps: {}", export.files.len());
            println!("index: {}", export.index.display());
            Ok(())
        }
        Command::Analyze { corpus, full_inventory, json } => {
            eprintln!("config: corpus={} full_inventory={full_inventory}", corpus.display());
            let report = cmd_analyze(&corpus, full_inventory)?;
            if json {
                let pairs = |items: &[(String, u64)]| -> Vec<serde_json::Value> {
                    items.iter().map(|(k, v)| json!({"class": k, "count": v})).collect()
                };
                println!(
                    "{}",
                    json!({
                        "n_words": report.n_words,
                        "n_chars": report.n_chars,
                        "distinct_chars": report.distinct_chars,
                        "distinct_graphemes": report.distinct_graphemes,
                        "full_inventory": report.full_inventory,
                        "gini_char": report.gini_char,
                        "gini_grapheme": report.gini_grapheme,
                        "top_chars": pairs(&report.top_chars),
                        "top_graphemes": pairs(&report.top_graphemes),
                    })
                );
            } else {
                println!("words: {}", report.n_words);
                println!("chars: {}", report.n_chars);
                println!("distinct_chars: {}", report.distinct_chars);
                println!("distinct_graphemes: {}", report.distinct_graphemes);
                println!("gini_char: {:.4}", report.gini_char);
                println!("gini_grapheme: {:.4}", report.gini_grapheme);
                let fmt = |items: &[(String, u64)]| {
                    items.iter().map(|(k, v)| format!("{k}:{v}")).collect::<Vec<_>>().join(" ")
                };
                println!("top_chars: {}", fmt(&report.top_chars));
                println!("top_graphemes: {}", fmt(&report.top_graphemes));
            }
            Ok(())
        }
        Command::Decompose { text } => {
            print!("{}", cmd_decompose(&text)?);
            Ok(())
        }
    }
}

fn prefix_lines(prefix: &str, text: &str) -> String {
    text.lines().map(|l| format!("{prefix}{l}\n")).collect()
}
