//! Flat `key = value` text, the grammar shared by MetaImage headers and run
//! configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are trimmed and
//! kept in file order; a repeated key overrides the earlier value.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `text`; `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut kv = KeyValues::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    origin,
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got {line:?}"),
                )
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::parse(
                    origin,
                    format!("line {}", lineno + 1),
                    "empty key",
                ));
            }
            kv.set(key, value.trim());
        }
        Ok(kv)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// First present key among `keys`, with the key that matched.
    pub fn get_any<'a>(&'a self, keys: &[&'a str]) -> Option<(&'a str, &'a str)> {
        keys.iter().find_map(|&k| self.get(k).map(|v| (k, v)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Applies every entry of `other` on top of `self`.
    pub fn merge(&mut self, other: &KeyValues) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }

    /// Parses `key` with `FromStr`, returning `None` if it is absent.
    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("invalid value for `{key}`: {v:?}"))),
        }
    }

    /// Whitespace- or comma-separated list under `key`.
    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::config(format!("invalid list item for `{key}`: {s:?}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.iter() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
