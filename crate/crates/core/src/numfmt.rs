//! Python-style numeric format specs such as `{: .2f}` or `.1f`.
//!
//! Only the subset used by pipeline configs is understood: an optional sign
//! flag (`+` or space) followed by an optional `.Nf` fixed-point precision.

use std::fmt::{self, Write};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignFlag {
    /// Sign only for negative values.
    #[default]
    Minus,
    Plus,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NumberFormat {
    pub sign: SignFlag,
    pub precision: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid number format {spec:?}: {reason}")]
pub struct FormatSpecError {
    pub spec: String,
    pub reason: &'static str,
}

impl NumberFormat {
    pub fn fixed(precision: usize) -> Self {
        NumberFormat {
            sign: SignFlag::Minus,
            precision: Some(precision),
        }
    }

    /// Parses either a bare spec (`" .2f"`) or a wrapped one (`"{: .2f}"`).
    pub fn parse(text: &str) -> Result<Self, FormatSpecError> {
        let err = |reason| FormatSpecError {
            spec: text.to_owned(),
            reason,
        };
        let spec = match text.strip_prefix('{') {
            Some(inner) => {
                let inner = inner.strip_suffix('}').ok_or_else(|| err("unbalanced braces"))?;
                match inner.split_once(':') {
                    Some(("", spec)) => spec,
                    Some(_) => return Err(err("a function format must not name a field")),
                    None if inner.is_empty() => "",
                    None => return Err(err("a function format must not name a field")),
                }
            }
            None => text.strip_prefix(':').unwrap_or(text),
        };
        Self::parse_spec(spec).ok_or_else(|| err("expected [sign][.Nf]"))
    }

    /// Parses the part after the colon.
    pub(crate) fn parse_spec(spec: &str) -> Option<Self> {
        let mut rest = spec;
        let sign = match rest.chars().next() {
            Some('+') => SignFlag::Plus,
            Some(' ') => SignFlag::Space,
            Some('-') => SignFlag::Minus,
            _ => {
                return Self::parse_precision(rest).map(|precision| NumberFormat {
                    sign: SignFlag::Minus,
                    precision,
                })
            }
        };
        rest = &rest[1..];
        Self::parse_precision(rest).map(|precision| NumberFormat { sign, precision })
    }

    fn parse_precision(spec: &str) -> Option<Option<usize>> {
        if spec.is_empty() {
            return Some(None);
        }
        let digits = spec.strip_prefix('.')?.strip_suffix('f')?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        digits.parse().ok().map(Some)
    }

    pub fn write(&self, out: &mut impl Write, x: f64) -> fmt::Result {
        if !x.is_sign_negative() {
            match self.sign {
                SignFlag::Plus => out.write_char('+')?,
                SignFlag::Space => out.write_char(' ')?,
                SignFlag::Minus => {}
            }
        }
        match self.precision {
            Some(p) => write!(out, "{x:.p$}"),
            None => write!(out, "{x}"),
        }
    }

    pub fn render(&self, x: f64) -> String {
        let mut s = String::new();
        self.write(&mut s, x).expect("writing to a String cannot fail");
        s
    }
}

/// Renders a number with an optional format, shortest round-trip otherwise.
pub fn write_number(out: &mut impl Write, x: f64, format: Option<&NumberFormat>) -> fmt::Result {
    match format {
        Some(f) => f.write(out, x),
        None => write!(out, "{x}"),
    }
}
