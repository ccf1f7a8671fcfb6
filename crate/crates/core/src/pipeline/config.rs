//! Declarative pipeline configuration (JSON, `"steam": 1`).
//!
//! String values may reference variables as `${NAME}` or `${NAME:-default}`.
//! Names resolve against explicitly supplied variables first, then the
//! process environment.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::{FunctionSet, FunctionSpec};
use crate::bench::CpuScope;
use crate::error::{ConfigError, Diagnostic};
use crate::ingest::{InputSpec, ParserSpec};
use crate::model::ColumnName;
use crate::output::{validate_endpoints, EndpointSpec};

pub const SCHEMA_VERSION: u32 = 1;

fn default_queue() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub log: PathBuf,
    #[serde(default)]
    pub cpu_scope: CpuScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub steam: u32,
    pub batchlen: usize,
    pub input: InputSpec,
    pub parser: ParserSpec,
    #[serde(default)]
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub endpoints: Vec<EndpointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchSpec>,
    /// Capacity of the reader-to-pipeline frame queue.
    #[serde(default = "default_queue")]
    pub queue: usize,
}

impl PipelineConfig {
    pub fn new(batchlen: usize, input: InputSpec, parser: ParserSpec) -> Self {
        PipelineConfig {
            steam: SCHEMA_VERSION,
            batchlen,
            input,
            parser,
            functions: Vec::new(),
            endpoints: Vec::new(),
            bench: None,
            queue: default_queue(),
        }
    }

    /// Parser columns followed by function ids: every name an endpoint may reference.
    pub fn universe(&self) -> Vec<ColumnName> {
        self.parser
            .columns
            .iter()
            .map(String::as_str)
            .chain(self.functions.iter().map(FunctionSpec::result_id))
            .map(ColumnName::from)
            .collect()
    }

    /// Collects every problem in the config.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut diags = Vec::new();
        if self.steam != SCHEMA_VERSION {
            diags.push(Diagnostic::new(
                "steam",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.steam),
            ));
        }
        if self.batchlen == 0 {
            diags.push(Diagnostic::new("batchlen", "must be at least 1"));
        }
        if self.queue == 0 {
            diags.push(Diagnostic::new("queue", "must be at least 1"));
        }
        diags.extend(self.input.validate("input"));
        let parser_diags = self.parser.validate("parser");
        let parser_ok = parser_diags.is_empty();
        diags.extend(parser_diags);

        if parser_ok {
            let columns: Vec<ColumnName> = self.parser.columns.iter().map(|c| ColumnName::from(c.as_str())).collect();
            if let Err(d) = FunctionSet::build(&self.functions, &columns, self.batchlen.max(1), "functions") {
                diags.extend(d);
            }
            diags.extend(validate_endpoints(&self.endpoints, &self.universe(), "endpoints"));
        }
        if let Some(b) = &self.bench {
            if b.log.as_os_str().is_empty() {
                diags.push(Diagnostic::new("bench.log", "must not be empty"));
            }
        }
        if diags.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { diagnostics: diags })
        }
    }

    pub fn from_json(text: &str, vars: &HashMap<String, String>) -> Result<Self, ConfigError> {
        let mut raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::single("config", format!("invalid JSON: {e}")))?;
        let mut diags = Vec::new();
        substitute(&mut raw, vars, "", &mut diags);
        if !diags.is_empty() {
            return Err(ConfigError { diagnostics: diags });
        }
        let config: PipelineConfig =
            serde_json::from_value(raw).map_err(|e| ConfigError::single("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// Reads a config file, expanding variables before validation.
pub fn load_config(path: &Path) -> Result<PipelineConfig, ConfigError> {
    load_config_with(path, &HashMap::new())
}

pub fn load_config_with(path: &Path, vars: &HashMap<String, String>) -> Result<PipelineConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(path.display().to_string(), format!("cannot read: {e}")))?;
    PipelineConfig::from_json(&text, vars)
}

fn substitute(value: &mut serde_json::Value, vars: &HashMap<String, String>, path: &str, diags: &mut Vec<Diagnostic>) {
    match value {
        serde_json::Value::String(s) if s.contains("${") => match expand(s, vars) {
            Ok(expanded) => *s = expanded,
            Err(message) => diags.push(Diagnostic::new(path.trim_start_matches('.'), message)),
        },
        serde_json::Value::Array(items) => {
            for (i, item) in items.iter_mut().enumerate() {
                substitute(item, vars, &format!("{path}[{i}]"), diags);
            }
        }
        serde_json::Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                substitute(v, vars, &format!("{path}.{k}"), diags);
            }
        }
        _ => {}
    }
}

/// Expands `${NAME}` and `${NAME:-default}`.
pub fn expand(text: &str, vars: &HashMap<String, String>) -> Result<String, String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let body_start = start + 2;
        let end = rest[body_start..]
            .find('}')
            .ok_or_else(|| format!("unterminated variable reference in {text:?}"))?
            + body_start;
        let body = &rest[body_start..end];
        let (name, default) = match body.split_once(":-") {
            Some((n, d)) => (n, Some(d)),
            None => (body, None),
        };
        let value = vars
            .get(name)
            .cloned()
            .or_else(|| std::env::var(name).ok())
            .or_else(|| default.map(str::to_owned))
            .ok_or_else(|| format!("variable {name:?} is not set and has no default"))?;
        out.push_str(&value);
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}
