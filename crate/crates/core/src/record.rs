//! Line-oriented `key = value` text records.
//!
//! Every artifact the crate writes (configs, checkpoints, traces, reports,
//! oracle fixtures) is built from this format: one entry per line, `#`
//! starts a comment line, blank lines are ignored. Keys keep their order.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comma-joined list of floats at round-trip precision.
pub fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

pub fn parse_list(what: &str, s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|e| Error::format(what, format!("bad number `{tok}`: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Record {
    entries: Vec<(String, String)>,
    name: String,
}

impl Record {
    pub fn new(name: impl Into<String>) -> Self {
        Record { entries: Vec::new(), name: name.into() }
    }

    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut rec = Record::new(name);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::format(
                    rec.name.clone(),
                    format!("line {}: expected `key = value`", lineno + 1),
                ));
            };
            rec.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(rec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Record::parse(path.display().to_string(), &text)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.push(key, fmt_f64(value))
    }

    pub fn push_list(&mut self, key: impl Into<String>, values: &[f64]) -> &mut Self {
        self.push(key, fmt_list(values))
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(self.name.clone(), format!("missing key `{key}`")))
    }

    pub fn parse_key<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse::<T>()
            .map_err(|e| Error::format(self.name.clone(), format!("key `{key}`: {e}")))
    }

    pub fn list(&self, key: &str) -> Result<Vec<f64>> {
        parse_list(&self.name, self.require(key)?)
    }

    /// Renders the record with an optional leading comment line.
    pub fn render(&self, header: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header {
            let _ = writeln!(out, "# {h}");
        }
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
