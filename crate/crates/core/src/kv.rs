//! Flat `key=value` text dialect shared by tracker configs and scenario scripts.

use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry<'a> {
    pub line: usize,
    pub key: &'a str,
    pub value: &'a str,
}

/// Splits text into entries. Blank lines and `#` comments are skipped.
pub(crate) fn entries(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::parse(line, format!("expected key=value, got `{content}`")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(line, "empty key"));
        }
        out.push(Entry {
            line,
            key,
            value: value.trim(),
        });
    }
    Ok(out)
}

pub(crate) fn value<T: FromStr>(entry: &Entry<'_>) -> Result<T> {
    entry.value.parse().map_err(|_| {
        Error::parse(
            entry.line,
            format!("invalid value `{}` for `{}`", entry.value, entry.key),
        )
    })
}
