//! Message templates: literal text with `{name}` / `{name:FMT}` fields.

use thiserror::Error;

use crate::model::{Column, DataPacket, Value};
use crate::numfmt::{write_number, NumberFormat};

/// Rendered in place of a Missing field.
pub const MISSING_MARKER: &str = "\u{2014}";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("template offset {offset}: {message}")]
pub struct TemplateError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Literal(String),
    Field { name: String, format: Option<NumberFormat> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pieces: Vec<Piece>,
}

impl Template {
    /// `{{` and `}}` are literal braces.
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let err = |offset, message: &str| TemplateError {
            offset,
            message: message.to_owned(),
        };
        let mut pieces = Vec::new();
        let mut literal = String::new();
        let mut chars = source.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|p| p.1) == Some('{') => {
                    chars.next();
                    literal.push('{');
                }
                '}' if chars.peek().map(|p| p.1) == Some('}') => {
                    chars.next();
                    literal.push('}');
                }
                '}' => return Err(err(i, "single '}' must be doubled")),
                '{' => {
                    let rest = &source[i + 1..];
                    let close = rest.find('}').ok_or_else(|| err(i, "unterminated field"))?;
                    let inner = &rest[..close];
                    if inner.contains('{') {
                        return Err(err(i, "nested '{' in field"));
                    }
                    let (name, spec) = match inner.split_once(':') {
                        Some((n, s)) => (n, Some(s)),
                        None => (inner, None),
                    };
                    if name.is_empty() {
                        return Err(err(i, "field needs a column name"));
                    }
                    let format = match spec {
                        None => None,
                        Some(s) => Some(NumberFormat::parse_spec(s).ok_or_else(|| err(i, "bad number format"))?),
                    };
                    if !literal.is_empty() {
                        pieces.push(Piece::Literal(std::mem::take(&mut literal)));
                    }
                    pieces.push(Piece::Field {
                        name: name.to_owned(),
                        format,
                    });
                    // Skip the field body and closing brace.
                    let end = i + 1 + close;
                    while chars.peek().is_some_and(|&(j, _)| j <= end) {
                        chars.next();
                    }
                }
                c => literal.push(c),
            }
        }
        if !literal.is_empty() {
            pieces.push(Piece::Literal(literal));
        }
        Ok(Template { pieces })
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Field { name, .. } => Some(name.as_str()),
            Piece::Literal(_) => None,
        })
    }

    pub fn render_into(&self, packet: &DataPacket, out: &mut String) {
        for piece in &self.pieces {
            match piece {
                Piece::Literal(text) => out.push_str(text),
                Piece::Field { name, format } => match packet.column(name) {
                    Some(col) => write_field(out, col, format.as_ref()),
                    None => out.push_str(MISSING_MARKER),
                },
            }
        }
    }

    pub fn render(&self, packet: &DataPacket) -> String {
        let mut out = String::new();
        self.render_into(packet, &mut out);
        out
    }
}

fn write_field(out: &mut String, col: &Column, explicit: Option<&NumberFormat>) {
    match &col.value {
        Value::Number(x) => {
            let _ = write_number(out, *x, explicit.or(col.format.as_ref()));
        }
        Value::Text(s) | Value::Timestamp(s) => out.push_str(s),
        Value::Missing => out.push_str(MISSING_MARKER),
    }
}
