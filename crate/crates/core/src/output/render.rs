//! Payload formats for enriched packets.

use serde::{Deserialize, Serialize};

use super::template::{Template, TemplateError};
use crate::model::{Column, DataPacket, Value};
use crate::numfmt::{write_number, NumberFormat, SignFlag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FormatSpec {
    Message { template: String },
    Csv,
    Tsv,
    Json,
}

impl FormatSpec {
    pub fn message(template: &str) -> Self {
        FormatSpec::Message {
            template: template.to_owned(),
        }
    }

    pub fn content_type(&self) -> &'static str {
        match self {
            FormatSpec::Json => "application/json",
            _ => "text/plain; charset=utf-8",
        }
    }
}

/// A compiled [`FormatSpec`].
#[derive(Debug, Clone)]
pub enum Format {
    Message(Template),
    Delimited(char),
    Json,
}

impl Format {
    pub fn compile(spec: &FormatSpec) -> Result<Self, TemplateError> {
        Ok(match spec {
            FormatSpec::Message { template } => Format::Message(Template::parse(template)?),
            FormatSpec::Csv => Format::Delimited(','),
            FormatSpec::Tsv => Format::Delimited('\t'),
            FormatSpec::Json => Format::Json,
        })
    }

    /// Appends the payload for `packet` to `out`.
    pub fn render_into(&self, packet: &DataPacket, out: &mut String) {
        match self {
            Format::Message(t) => t.render_into(packet, out),
            Format::Delimited(sep) => render_delimited(packet, *sep, out),
            Format::Json => render_json(packet, out),
        }
    }

    pub fn render(&self, packet: &DataPacket) -> String {
        let mut out = String::new();
        self.render_into(packet, &mut out);
        out
    }
}

fn render_delimited(packet: &DataPacket, sep: char, out: &mut String) {
    for (i, col) in packet.columns().iter().enumerate() {
        if i > 0 {
            out.push(sep);
        }
        match &col.value {
            Value::Number(x) => {
                let _ = write_number(out, *x, col.format.as_ref());
            }
            Value::Text(s) | Value::Timestamp(s) if sep == '\t' => {
                out.extend(s.chars().map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c }));
            }
            Value::Text(s) | Value::Timestamp(s) => write_csv_field(s, sep, out),
            Value::Missing => {}
        }
    }
    out.push('\n');
}

fn write_csv_field(s: &str, sep: char, out: &mut String) {
    if s.contains([sep, '"', '\n', '\r']) {
        out.push('"');
        for c in s.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
    } else {
        out.push_str(s);
    }
}

fn render_json(packet: &DataPacket, out: &mut String) {
    out.push('{');
    for (i, col) in packet.columns().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_json_string(&col.name, out);
        out.push(':');
        write_json_value(col, out);
    }
    out.push('}');
}

fn write_json_value(col: &Column, out: &mut String) {
    match &col.value {
        Value::Number(x) => {
            // A leading '+' is not valid JSON.
            let format = col.format.map(|f| match f.sign {
                SignFlag::Plus => NumberFormat {
                    sign: SignFlag::Minus,
                    ..f
                },
                _ => f,
            });
            let _ = write_number(out, *x, format.as_ref());
        }
        Value::Text(s) | Value::Timestamp(s) => write_json_string(s, out),
        Value::Missing => out.push_str("null"),
    }
}

fn write_json_string(s: &str, out: &mut String) {
    out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
}
