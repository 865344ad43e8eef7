//! Flat `key = value` configuration files and the complex-number literal
//! grammar used across the command-line tools.
//!
//! File syntax: one `key = value` pair per line, `#` starts a comment,
//! blank lines ignored.  Keys match `[A-Za-z0-9_.]+`.  Duplicate keys are
//! rejected so that a stray second assignment cannot silently win.
//!
//! Complex literals (EBNF, no interior whitespace):
//!
//! ```text
//! complex = real | imag | real sign uimag ;
//! real    = sign? ufloat ;
//! imag    = sign? uimag ;
//! uimag   = ufloat? "i" ;
//! sign    = "+" | "-" ;
//! ufloat  = decimal float accepted by Rust's f64 parser (no sign) ;
//! ```
//!
//! Examples: `2`, `-2i`, `i`, `-i`, `1+1i`, `3-i`, `1.5e-3-2i`.

use crate::error::{LabError, Result};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Parse a complex literal per the grammar above.
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let s = text.trim();
    if s.is_empty() {
        return Err(LabError::ParseError("empty complex literal".into()));
    }
    if s.chars().any(char::is_whitespace) {
        return Err(LabError::ParseError(format!(
            "complex literal `{s}` must not contain interior whitespace"
        )));
    }
    // Locate the last '+'/'-' that can separate real and imaginary parts:
    // not the leading sign, and not an exponent sign (preceded by e/E).
    let bytes = s.as_bytes();
    let mut split = None;
    for (idx, &b) in bytes.iter().enumerate().skip(1) {
        if (b == b'+' || b == b'-') && !matches!(bytes[idx - 1], b'e' | b'E') {
            split = Some(idx);
        }
    }
    let (re_text, im_text) = match split {
        Some(idx) if s.ends_with('i') => (&s[..idx], &s[idx..]),
        _ => {
            if s.ends_with('i') {
                ("", s)
            } else {
                (s, "")
            }
        }
    };
    let re = if re_text.is_empty() {
        0.0
    } else {
        parse_signed_float(re_text)
            .ok_or_else(|| LabError::ParseError(format!("bad real part in `{s}`")))?
    };
    let im = if im_text.is_empty() {
        0.0
    } else {
        let body = &im_text[..im_text.len() - 1]; // strip trailing 'i'
        match body {
            "" | "+" => 1.0,
            "-" => -1.0,
            other => parse_signed_float(other)
                .ok_or_else(|| LabError::ParseError(format!("bad imaginary part in `{s}`")))?,
        }
    };
    Ok(Complex64::new(re, im))
}

/// Format a complex number back into the literal grammar (round-trippable).
#[must_use]
pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("{}{}i", z.re, z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

fn parse_signed_float(text: &str) -> Option<f64> {
    // Reject the forms Rust accepts but the grammar does not.
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    if body.is_empty()
        || body.starts_with(['+', '-'])
        || !body.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '.')
    {
        return None; // forbids "inf", "nan", "e3", "--2"
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// A consumed-key configuration view: typed `take_*` accessors remove the
/// key, so [`Config::reject_unknown`] can flag anything left over.
#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    /// Parse the flat `key = value` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((lhs, rhs)) = line.split_once('=') else {
                return Err(LabError::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = lhs.trim();
            let value = rhs.trim();
            if key.is_empty()
                || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            {
                return Err(LabError::Config(format!(
                    "line {}: bad key `{key}`",
                    lineno + 1
                )));
            }
            if map.insert(key.to_string(), value.to_string()).is_some() {
                return Err(LabError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(Self { map })
    }

    /// Load from a file path.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Build directly from key/value pairs (used by tests and CLI overrides).
    #[must_use]
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Self {
            map: pairs
                .iter()
                .map(|(k, v)| ((*k).to_string(), (*v).to_string()))
                .collect(),
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    /// Required string value.
    pub fn take_str(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| LabError::Config(format!("missing required key `{key}`")))
    }

    /// Optional string value.
    pub fn take_str_opt(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    /// Required float.
    pub fn take_f64(&mut self, key: &str) -> Result<f64> {
        let raw = self.take_str(key)?;
        parse_signed_float(&raw)
            .ok_or_else(|| LabError::Config(format!("key `{key}`: bad float `{raw}`")))
    }

    /// Float with default.
    pub fn take_f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => parse_signed_float(&raw)
                .ok_or_else(|| LabError::Config(format!("key `{key}`: bad float `{raw}`"))),
        }
    }

    /// Required unsigned integer.
    pub fn take_usize(&mut self, key: &str) -> Result<usize> {
        let raw = self.take_str(key)?;
        raw.parse::<usize>()
            .map_err(|_| LabError::Config(format!("key `{key}`: bad integer `{raw}`")))
    }

    /// Unsigned integer with default.
    pub fn take_usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse::<usize>()
                .map_err(|_| LabError::Config(format!("key `{key}`: bad integer `{raw}`"))),
        }
    }

    /// Required complex literal.
    pub fn take_complex(&mut self, key: &str) -> Result<Complex64> {
        let raw = self.take_str(key)?;
        parse_complex(&raw).map_err(|e| LabError::Config(format!("key `{key}`: {e}")))
    }

    /// Complex literal with default.
    pub fn take_complex_or(&mut self, key: &str, default: Complex64) -> Result<Complex64> {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => {
                parse_complex(&raw).map_err(|e| LabError::Config(format!("key `{key}`: {e}")))
            }
        }
    }

    /// Boolean with default (`true`/`false` only).
    pub fn take_bool_or(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(raw) => match raw.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(LabError::Config(format!(
                    "key `{key}`: expected true/false, got `{other}`"
                ))),
            },
        }
    }

    /// Value restricted to an enumerated set, with default.
    pub fn take_enum_or(&mut self, key: &str, allowed: &[&str], default: &str) -> Result<String> {
        debug_assert!(allowed.contains(&default));
        match self.take(key) {
            None => Ok(default.to_string()),
            Some(raw) => {
                if allowed.contains(&raw.as_str()) {
                    Ok(raw)
                } else {
                    Err(LabError::Config(format!(
                        "key `{key}`: `{raw}` not one of {allowed:?}"
                    )))
                }
            }
        }
    }

    /// Comma-separated list of complex literals.
    pub fn take_complex_list(&mut self, key: &str) -> Result<Vec<Complex64>> {
        let raw = self.take_str(key)?;
        raw.split(',')
            .map(|piece| {
                parse_complex(piece).map_err(|e| LabError::Config(format!("key `{key}`: {e}")))
            })
            .collect()
    }

    /// Comma-separated list of floats, with default.
    pub fn take_f64_list_or(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(raw) => raw
                .split(',')
                .map(|piece| {
                    parse_signed_float(piece.trim()).ok_or_else(|| {
                        LabError::Config(format!("key `{key}`: bad float `{piece}`"))
                    })
                })
                .collect(),
        }
    }

    /// Error out if any keys were never consumed (catches typos).
    pub fn reject_unknown(&self) -> Result<()> {
        if self.map.is_empty() {
            Ok(())
        } else {
            let keys: Vec<&str> = self.map.keys().map(String::as_str).collect();
            Err(LabError::Config(format!("unknown keys: {}", keys.join(", "))))
        }
    }
}
