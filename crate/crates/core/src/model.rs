//! Values and packets shared by every processing layer.

use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use crate::numfmt::NumberFormat;

/// Column names are shared between every packet produced by one parser.
pub type ColumnName = Arc<str>;

/// A single field of a packet.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// Always finite; see [`Value::number`].
    Number(f64),
    Text(String),
    /// ISO-8601 text, kept verbatim.
    Timestamp(String),
    Missing,
}

impl Value {
    /// Builds a number, mapping NaN and infinities to `Missing`.
    pub fn number(x: f64) -> Value {
        if x.is_finite() {
            Value::Number(x)
        } else {
            Value::Missing
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(*x),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::number(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_owned())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Text(s) | Value::Timestamp(s) => f.write_str(s),
            Value::Missing => Ok(()),
        }
    }
}

/// One named field plus its optional serialization format.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: ColumnName,
    pub value: Value,
    pub format: Option<NumberFormat>,
}

/// The unit flowing through the pipeline: ordered columns plus ingest metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPacket {
    columns: Vec<Column>,
    /// Byte length of the source frame, delimiter included.
    pub raw_bytes: usize,
    /// Monotonic arrival time in nanoseconds, see [`monotonic_ns`].
    pub arrival_ns: u64,
}

impl DataPacket {
    pub fn new(raw_bytes: usize, arrival_ns: u64) -> Self {
        DataPacket {
            columns: Vec::new(),
            raw_bytes,
            arrival_ns,
        }
    }

    pub fn with_capacity(columns: usize, raw_bytes: usize, arrival_ns: u64) -> Self {
        DataPacket {
            columns: Vec::with_capacity(columns),
            raw_bytes,
            arrival_ns,
        }
    }

    /// Convenience constructor used heavily in tests.
    pub fn from_pairs<I, N, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (N, V)>,
        N: AsRef<str>,
        V: Into<Value>,
    {
        let mut packet = DataPacket::new(0, 0);
        for (name, value) in pairs {
            packet.push(ColumnName::from(name.as_ref()), value.into());
        }
        packet
    }

    /// Appends a column after the existing ones.
    pub fn push(&mut self, name: ColumnName, value: Value) {
        self.columns.push(Column {
            name,
            value,
            format: None,
        });
    }

    pub fn push_formatted(&mut self, name: ColumnName, value: Value, format: Option<NumberFormat>) {
        self.columns.push(Column {
            name,
            value,
            format,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.column(name).map(|c| &c.value)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| &*c.name == name)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| &*c.name)
    }
}

/// Nanoseconds on a process-wide monotonic clock.
pub fn monotonic_ns() -> u64 {
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    let epoch = *EPOCH.get_or_init(Instant::now);
    epoch.elapsed().as_nanos() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_become_missing() {
        assert_eq!(Value::number(f64::NAN), Value::Missing);
        assert_eq!(Value::number(f64::INFINITY), Value::Missing);
        assert_eq!(Value::number(-f64::INFINITY), Value::Missing);
        assert_eq!(Value::number(1.5), Value::Number(1.5));
    }

    #[test]
    fn missing_is_distinct_from_zero_and_empty_text() {
        assert_ne!(Value::Missing, Value::Number(0.0));
        assert_ne!(Value::Missing, Value::Text(String::new()));
    }

    #[test]
    fn packet_preserves_column_order() {
        let p = DataPacket::from_pairs([("b", 1.0), ("a", 2.0), ("c", 3.0)]);
        assert_eq!(p.names().collect::<Vec<_>>(), ["b", "a", "c"]);
        assert_eq!(p.get("a"), Some(&Value::Number(2.0)));
        assert_eq!(p.get("z"), None);
    }

    #[test]
    fn monotonic_clock_never_goes_backwards() {
        let a = monotonic_ns();
        let b = monotonic_ns();
        assert!(b >= a);
    }
}
