use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Diagnostic;
use crate::model::{ColumnName, DataPacket, Value};

use super::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    #[default]
    Number,
    Text,
    Timestamp,
}

fn default_separator() -> String {
    "\t".to_owned()
}

/// Declarative description of a separator-based frame layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParserSpec {
    #[serde(default = "default_separator")]
    pub separator: String,
    pub columns: Vec<String>,
    /// Columns not listed here are numeric.
    #[serde(default)]
    pub types: BTreeMap<String, ColumnType>,
}

impl ParserSpec {
    pub fn new<I, S>(separator: &str, columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ParserSpec {
            separator: separator.to_owned(),
            columns: columns.into_iter().map(Into::into).collect(),
            types: BTreeMap::new(),
        }
    }

    pub fn with_type(mut self, column: &str, ty: ColumnType) -> Self {
        self.types.insert(column.to_owned(), ty);
        self
    }

    pub fn validate(&self, path: &str) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.separator.is_empty() {
            out.push(Diagnostic::new(format!("{path}.separator"), "separator must not be empty"));
        }
        if self.columns.is_empty() {
            out.push(Diagnostic::new(format!("{path}.columns"), "at least one column is required"));
        }
        for (i, c) in self.columns.iter().enumerate() {
            if c.is_empty() {
                out.push(Diagnostic::new(format!("{path}.columns[{i}]"), "column name must not be empty"));
            } else if self.columns[..i].contains(c) {
                out.push(Diagnostic::new(format!("{path}.columns[{i}]"), format!("duplicate column {c:?}")));
            }
        }
        for name in self.types.keys() {
            if !self.columns.contains(name) {
                out.push(Diagnostic::new(
                    format!("{path}.types.{name}"),
                    format!("type declared for unknown column {name:?}"),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame has {found} fields, expected {expected}")]
    Arity { expected: usize, found: usize },
    #[error("frame is not valid UTF-8")]
    Utf8,
}

/// Compiled [`ParserSpec`].
#[derive(Debug, Clone)]
pub struct Parser {
    separator: String,
    columns: Vec<(ColumnName, ColumnType)>,
}

impl Parser {
    pub fn new(spec: &ParserSpec) -> Result<Self, Vec<Diagnostic>> {
        let diags = spec.validate("parser");
        if !diags.is_empty() {
            return Err(diags);
        }
        let columns = spec
            .columns
            .iter()
            .map(|c| (ColumnName::from(c.as_str()), spec.types.get(c).copied().unwrap_or_default()))
            .collect();
        Ok(Parser {
            separator: spec.separator.clone(),
            columns,
        })
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    pub fn column_names(&self) -> impl Iterator<Item = &ColumnName> {
        self.columns.iter().map(|(n, _)| n)
    }

    /// Parses one frame whose delimiter has already been stripped.
    /// `raw_bytes` of the result counts the stripped newline.
    pub fn parse_frame(&self, frame: &[u8]) -> Result<DataPacket, FrameError> {
        self.parse_with(frame, frame.len() + 1, 0)
    }

    pub fn parse(&self, frame: &Frame) -> Result<DataPacket, FrameError> {
        self.parse_with(&frame.data, frame.wire_len, frame.arrival_ns)
    }

    fn parse_with(&self, frame: &[u8], raw_bytes: usize, arrival_ns: u64) -> Result<DataPacket, FrameError> {
        let text = std::str::from_utf8(frame).map_err(|_| FrameError::Utf8)?;
        let found = text.matches(self.separator.as_str()).count() + 1;
        if found != self.columns.len() {
            return Err(FrameError::Arity {
                expected: self.columns.len(),
                found,
            });
        }
        let mut packet = DataPacket::with_capacity(self.columns.len(), raw_bytes, arrival_ns);
        for ((name, ty), field) in self.columns.iter().zip(text.split(self.separator.as_str())) {
            packet.push(name.clone(), convert(field, *ty));
        }
        Ok(packet)
    }
}

fn convert(field: &str, ty: ColumnType) -> Value {
    if field.is_empty() {
        return Value::Missing;
    }
    match ty {
        ColumnType::Number => field
            .trim()
            .parse::<f64>()
            .map(Value::number)
            .unwrap_or(Value::Missing),
        ColumnType::Text => Value::Text(field.to_owned()),
        ColumnType::Timestamp => Value::Timestamp(field.to_owned()),
    }
}
