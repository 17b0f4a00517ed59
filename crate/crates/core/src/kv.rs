//! Flat `key=value` config files.
//!
//! One pair per line, `#` comments, blank lines ignored. Readers take keys
//! one by one; any key left unconsumed at `finish()` is an error, so typos
//! in experiment configs fail loudly instead of silently using defaults.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum KvError {
    #[error("line {line}: expected key=value, got '{text}'")]
    BadLine { line: usize, text: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("key '{key}': cannot parse '{value}' as {ty}")]
    BadValue { key: String, value: String, ty: &'static str },
    #[error("missing required key '{0}'")]
    MissingKey(String),
    #[error("unknown keys: {0}")]
    UnknownKeys(String),
}

/// Parsed config with consume-by-key access.
#[derive(Debug, Clone)]
pub struct KvFile {
    values: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<KvFile, KvError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| KvError::BadLine { line, text: trimmed.to_string() })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(KvError::BadLine { line, text: trimmed.to_string() });
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(KvError::DuplicateKey { line, key });
            }
        }
        Ok(KvFile { values })
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn require_str(&mut self, key: &str) -> Result<String, KvError> {
        self.take_str(key).ok_or_else(|| KvError::MissingKey(key.to_string()))
    }

    pub fn take_parsed<T: std::str::FromStr>(
        &mut self,
        key: &str,
        ty: &'static str,
    ) -> Result<Option<T>, KvError> {
        match self.take_str(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|_| KvError::BadValue { key: key.to_string(), value: raw, ty }),
        }
    }

    pub fn take_usize(&mut self, key: &str, default: usize) -> Result<usize, KvError> {
        Ok(self.take_parsed(key, "integer")?.unwrap_or(default))
    }

    pub fn take_u64(&mut self, key: &str, default: u64) -> Result<u64, KvError> {
        Ok(self.take_parsed(key, "integer")?.unwrap_or(default))
    }

    pub fn take_f64(&mut self, key: &str, default: f64) -> Result<f64, KvError> {
        Ok(self.take_parsed(key, "number")?.unwrap_or(default))
    }

    pub fn take_bool(&mut self, key: &str, default: bool) -> Result<bool, KvError> {
        match self.take_str(key) {
            None => Ok(default),
            Some(raw) => match raw.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(KvError::BadValue { key: key.to_string(), value: raw, ty: "bool" }),
            },
        }
    }

    /// Errors if any keys were never consumed.
    pub fn finish(self) -> Result<(), KvError> {
        if self.values.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.values.keys().map(String::as_str).collect();
            Err(KvError::UnknownKeys(keys.join(", ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_consumes() {
        let mut kv = KvFile::parse("# comment\nальфа=1\n\n lr = 0.001 \nname=run-a\n").unwrap();
        assert_eq!(kv.take_f64("lr", 0.0).unwrap(), 0.001);
        assert_eq!(kv.require_str("name").unwrap(), "run-a");
        assert_eq!(kv.take_usize("альфа", 9).unwrap(), 1);
        kv.finish().unwrap();
    }

    #[test]
    fn unknown_keys_are_errors() {
        let kv = KvFile::parse("lr=0.1\ntypo_key=5\n").unwrap();
        let err = kv.finish().unwrap_err();
        assert!(matches!(err, KvError::UnknownKeys(ref s) if s.contains("typo_key")));
    }

    #[test]
    fn malformed_lines_and_duplicates() {
        assert!(matches!(KvFile::parse("just words"), Err(KvError::BadLine { line: 1, .. })));
        assert!(matches!(
            KvFile::parse("a=1\na=2"),
            Err(KvError::DuplicateKey { line: 2, .. })
        ));
    }

    #[test]
    fn bad_values_name_the_key() {
        let mut kv = KvFile::parse("batch=many").unwrap();
        assert!(matches!(
            kv.take_usize("batch", 1),
            Err(KvError::BadValue { ref key, .. }) if key == "batch"
        ));
    }
}
