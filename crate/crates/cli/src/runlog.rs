//! Line-delimited JSON run logs.
//!
//! One record per line: a `config` header, an `eval` record per evaluation,
//! and a closing `done` record. Wall-clock fields are confined to the keys
//! stripped by [`normalize`], so two runs of the same seed produce logs that
//! are identical after normalization.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

pub const RUNLOG_NAME: &str = "train.log.jsonl";

/// Keys that carry wall-clock information and are excluded from
/// determinism comparisons.
const TIMING_KEYS: [&str; 1] = ["wall_ms"];

pub struct RunLogWriter {
    out: std::io::BufWriter<std::fs::File>,
}

impl RunLogWriter {
    pub fn create(dir: &Path) -> Result<RunLogWriter, CliError> {
        let file = std::fs::File::create(dir.join(RUNLOG_NAME))?;
        Ok(RunLogWriter { out: std::io::BufWriter::new(file) })
    }

    pub fn record(&mut self, value: Value) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.out, &value)
            .map_err(|e| CliError::Data(format!("run log: {e}")))?;
        self.out.write_all(b"\n")?;
        // records survive a crashed or killed run
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.out.flush()?;
        Ok(())
    }
}

/// Strips timing keys from every record, for bitwise run comparison.
pub fn normalize(log_text: &str) -> Result<String, CliError> {
    let mut out = String::new();
    for line in log_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut value: Value = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("run log line not JSON: {e}")))?;
        if let Some(map) = value.as_object_mut() {
            strip_timing(map);
        }
        out.push_str(&value.to_string());
        out.push('\n');
    }
    Ok(out)
}

fn strip_timing(map: &mut Map<String, Value>) {
    for key in TIMING_KEYS {
        map.remove(key);
    }
    for value in map.values_mut() {
        if let Some(inner) = value.as_object_mut() {
            strip_timing(inner);
        }
    }
}
