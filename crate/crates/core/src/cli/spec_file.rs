//! `key = value` run files.
//!
//! ```text
//! # Example 5.1, inertial scheme
//! command = solve
//! problem = example51
//! sigma = 0.59
//! tau = 0.000146
//! x0 = 7, 5
//! stop_error = 0.1
//! out = inertial.csv
//! ```
//!
//! Blank lines and `#` comments are ignored. Keys use underscores; dashes are
//! accepted and normalised.

use std::collections::BTreeMap;

use super::UsageError;

/// One value and the line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

pub fn parse_spec_text(text: &str) -> Result<BTreeMap<String, Entry>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(UsageError::at(line, format!("expected `key = value`, got `{content}`")));
        };
        let key = normalize_key(key.trim());
        let value = value.trim();
        if key.is_empty() {
            return Err(UsageError::at(line, "missing key before `=`"));
        }
        if value.is_empty() {
            return Err(UsageError::field_at(line, &key, "missing value"));
        }
        if let Some(prev) = out.get(&key) {
            let prev: &Entry = prev;
            return Err(UsageError::field_at(
                line,
                &key,
                format!("duplicate key, first set on line {}", prev.line),
            ));
        }
        out.insert(key, Entry { value: value.to_string(), line });
    }
    Ok(out)
}

pub(crate) fn normalize_key(key: &str) -> String {
    key.trim_start_matches("--").replace('-', "_")
}
