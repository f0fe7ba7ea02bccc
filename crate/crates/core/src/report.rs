//! Deterministic text formatting shared by the CSV and summary writers.

use std::fmt::Write as _;

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Flat `key = value` block for machine reading.
#[derive(Clone, Debug, Default)]
pub struct KvBlock {
    lines: Vec<(String, String)>,
}

impl KvBlock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: impl Into<String>, v: f64) -> &mut Self {
        self.lines.push((key.into(), fmt17(v)));
        self
    }

    pub fn opt_num(&mut self, key: impl Into<String>, v: Option<f64>) -> &mut Self {
        let s = v.map(fmt17).unwrap_or_else(|| "none".into());
        self.lines.push((key.into(), s));
        self
    }

    pub fn flag(&mut self, key: impl Into<String>, v: bool) -> &mut Self {
        self.lines.push((key.into(), v.to_string()));
        self
    }

    pub fn text(&mut self, key: impl Into<String>, v: impl Into<String>) -> &mut Self {
        self.lines.push((key.into(), v.into()));
        self
    }

    pub fn int(&mut self, key: impl Into<String>, v: usize) -> &mut Self {
        self.lines.push((key.into(), v.to_string()));
        self
    }

    pub fn extend(&mut self, prefix: &str, other: &KvBlock) -> &mut Self {
        for (k, v) in &other.lines {
            self.lines.push((format!("{prefix}.{k}"), v.clone()));
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
