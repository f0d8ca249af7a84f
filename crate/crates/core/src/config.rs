//! `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted
//! (`walk.max_km`, `sched.limit.small_s`, ...). A key given twice keeps the
//! last value.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const WALK_MAX_KM: &str = "walk.max_km";
pub const WALK_SPEED_KMH: &str = "walk.speed_kmh";
pub const SCHED_LIMIT_SMALL: &str = "sched.limit.small_s";
pub const SCHED_LIMIT_MEDIUM: &str = "sched.limit.medium_s";
pub const SCHED_LIMIT_LARGE: &str = "sched.limit.large_s";
pub const BR_MAX_ROUNDS: &str = "br.max_rounds";
pub const HARNESS_MIN_KM: &str = "harness.min_km";
pub const HARNESS_MAX_KM: &str = "harness.max_km";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    source_name: "config".into(),
                    line: lineno as u64 + 1,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    source_name: "config".into(),
                    line: lineno as u64 + 1,
                    message: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    /// Parses `key` as `T`, falling back to `default` when the key is absent.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| Error::Config {
                key: key.to_string(),
                message: format!("cannot parse {raw:?}"),
            }),
        }
    }

    /// Comma-separated list value.
    pub fn get_list(&self, key: &str) -> Option<Vec<&str>> {
        self.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .range(prefix.to_string()..)
            .map(|(k, _)| k.as_str())
            .take_while(move |k| k.starts_with(prefix))
    }
}
