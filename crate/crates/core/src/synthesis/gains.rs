//! Plain-text gains files: `#` metadata lines, then one `label = k c` line per row.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::SynthesisError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GainsFile {
    /// `# key = value` header lines, in order.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<(String, f64, f64)>,
}

impl GainsFile {
    pub fn from_vectors(labels: &[String], k: &DVector<f64>, c: &DVector<f64>) -> Self {
        Self {
            meta: Vec::new(),
            rows: labels
                .iter()
                .zip(k.iter().zip(c.iter()))
                .map(|(l, (k, c))| (l.clone(), *k, *c))
                .collect(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta_map(&self) -> BTreeMap<&str, &str> {
        self.meta.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }

    pub fn k(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.1))
    }

    pub fn c(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.2))
    }

    pub fn labels(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.0.clone()).collect()
    }
}

/// Values use shortest round-trip formatting, so parsing returns them exactly.
pub fn write_gains(file: &GainsFile) -> String {
    let mut s = String::new();
    for (k, v) in &file.meta {
        let _ = writeln!(s, "# {k} = {v}");
    }
    for (label, k, c) in &file.rows {
        let _ = writeln!(s, "{label} = {k} {c}");
    }
    s
}

pub fn parse_gains(text: &str) -> Result<GainsFile, SynthesisError> {
    let mut out = GainsFile::default();
    let bad = |line: usize, why: &str| SynthesisError::InvalidProblem(format!("gains line {}: {why}", line + 1));
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once('=') {
                out.meta.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let (label, values) = line.split_once('=').ok_or_else(|| bad(i, "expected `label = k c`"))?;
        let nums: Vec<&str> = values.split_whitespace().collect();
        let [k, c] = nums.as_slice() else {
            return Err(bad(i, "expected two numbers"));
        };
        let parse = |t: &str| t.parse::<f64>().map_err(|_| bad(i, &format!("'{t}' is not a number")));
        out.rows.push((label.trim().to_string(), parse(k)?, parse(c)?));
    }
    if out.rows.is_empty() {
        return Err(SynthesisError::InvalidProblem("gains file has no rows".into()));
    }
    Ok(out)
}
