//! Byte-stable machine outputs: 9-significant-digit floats, fixed column
//! and key order.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const SIG_DIGITS: usize = 9;

/// Round to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal that round-trips the 9-digit rounding of `x`.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 {
        "0".into()
    } else {
        let r = round_sig(x);
        // Display never uses exponents; switch outside [1e-4, 1e15).
        if r.abs() < 1e-4 || r.abs() >= 1e15 {
            format!("{r:e}")
        } else {
            format!("{r}")
        }
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_float)
}

/// Round every number in a JSON tree in place.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_json),
        Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with rounded floats and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| Error::InvalidArgument(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// In-memory delimited table.
#[derive(Debug, Clone)]
pub struct Table {
    sep: char,
    width: usize,
    text: String,
}

impl Table {
    pub fn csv(header: &[&str]) -> Self {
        Self::with_sep(',', header)
    }

    pub fn tsv(header: &[&str]) -> Self {
        Self::with_sep('\t', header)
    }

    fn with_sep(sep: char, header: &[&str]) -> Self {
        let mut t = Self {
            sep,
            width: header.len(),
            text: String::new(),
        };
        t.push(header.iter().map(|s| s.to_string()).collect());
        t
    }

    pub fn push(&mut self, fields: Vec<String>) {
        assert_eq!(fields.len(), self.width, "row width differs from header");
        let line: Vec<String> = fields.into_iter().map(|f| self.escape(f)).collect();
        self.text.push_str(&line.join(&self.sep.to_string()));
        self.text.push('\n');
    }

    fn escape(&self, f: String) -> String {
        if f.contains(self.sep) || f.contains('"') || f.contains('\n') {
            format!("\"{}\"", f.replace('"', "\"\""))
        } else {
            f
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

pub fn write_text(path: impl AsRef<Path>, content: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, content).map_err(|e| Error::io(path, e))
}
