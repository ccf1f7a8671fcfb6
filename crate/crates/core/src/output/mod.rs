//! Enrichment and condition-gated delivery.

mod endpoint;
mod render;
mod template;

use std::collections::HashSet;
use std::io;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use endpoint::{AgentPool, DeliveryError, FlushPolicy, Sink, TargetSpec};
pub use render::{Format, FormatSpec};
pub use template::{Template, TemplateError, MISSING_MARKER};

use crate::conditions::{Condition, ConditionSpec};
use crate::error::Diagnostic;
use crate::model::{ColumnName, DataPacket, Value};
use crate::numfmt::NumberFormat;

/// Appends computed results after the original columns, in the given order.
pub fn enrich<'a, I>(mut packet: DataPacket, results: I) -> DataPacket
where
    I: IntoIterator<Item = (&'a ColumnName, Value, Option<NumberFormat>)>,
{
    for (name, value, format) in results {
        packet.push_formatted(name.clone(), value, format);
    }
    packet
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub target: TargetSpec,
    #[serde(default)]
    pub condition: ConditionSpec,
    pub format: FormatSpec,
}

impl EndpointSpec {
    pub fn new(target: TargetSpec, format: FormatSpec) -> Self {
        EndpointSpec {
            name: None,
            target,
            condition: ConditionSpec::Always,
            format,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_owned());
        self
    }

    pub fn when(mut self, condition: ConditionSpec) -> Self {
        self.condition = condition;
        self
    }

    /// Configured name, or `ep{index}_{target kind}`.
    pub fn display_name(&self, index: usize) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => {
                let kind = match self.target {
                    TargetSpec::File { .. } => "file",
                    TargetSpec::Http { .. } => "http",
                };
                format!("ep{index}_{kind}")
            }
        }
    }
}

/// Checks every endpoint against the enriched column `universe` without opening anything.
pub fn validate_endpoints(specs: &[EndpointSpec], universe: &[ColumnName], path: &str) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let known: HashSet<&str> = universe.iter().map(|c| &**c).collect();
    let mut names = HashSet::new();
    for (i, spec) in specs.iter().enumerate() {
        let at = format!("{path}[{i}]");
        let name = spec.display_name(i);
        if !names.insert(name.clone()) {
            diags.push(Diagnostic::new(format!("{at}.name"), format!("duplicate endpoint name {name:?}")));
        }
        diags.extend(spec.target.validate(&format!("{at}.target")));
        if let Err(d) = Condition::build(&spec.condition, universe, &format!("{at}.condition")) {
            diags.extend(d);
        }
        match Format::compile(&spec.format) {
            Err(e) => diags.push(Diagnostic::new(format!("{at}.format.template"), e.to_string())),
            Ok(Format::Message(t)) => {
                for field in t.field_names().filter(|f| !known.contains(f)) {
                    diags.push(Diagnostic::new(
                        format!("{at}.format.template"),
                        format!("unknown column {field:?}"),
                    ));
                }
            }
            Ok(_) => {}
        }
    }
    diags
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("invalid endpoints: {0:?}")]
    Config(Vec<Diagnostic>),
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
}

/// Delivery counters for one endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointStats {
    pub name: String,
    /// Packets whose condition passed.
    pub events: u64,
    /// Bytes successfully delivered.
    pub bytes: u64,
    pub errors: u64,
}

struct Endpoint {
    condition: Condition,
    format: Format,
    sink: Sink,
    stats: EndpointStats,
}

/// Result of dispatching one packet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dispatch {
    pub bytes_out: u64,
    /// Indices of endpoints whose condition passed.
    pub fired: Vec<usize>,
}

/// Ordered endpoint list evaluated synchronously per packet.
pub struct Dispatcher {
    endpoints: Vec<Endpoint>,
    buffer: String,
}

impl Dispatcher {
    pub fn open(specs: &[EndpointSpec], universe: &[ColumnName]) -> Result<Self, OutputError> {
        let diags = validate_endpoints(specs, universe, "endpoints");
        if !diags.is_empty() {
            return Err(OutputError::Config(diags));
        }
        let mut pool = AgentPool::default();
        let mut endpoints = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let sink = pool
                .open(&spec.target, spec.format.content_type())
                .map_err(|source| OutputError::Open {
                    path: match &spec.target {
                        TargetSpec::File { path, .. } => path.clone(),
                        TargetSpec::Http { url, .. } => PathBuf::from(url),
                    },
                    source,
                })?;
            endpoints.push(Endpoint {
                condition: Condition::build(&spec.condition, universe, "").expect("validated"),
                format: Format::compile(&spec.format).expect("validated"),
                sink,
                stats: EndpointStats {
                    name: spec.display_name(i),
                    ..EndpointStats::default()
                },
            });
        }
        Ok(Dispatcher {
            endpoints,
            buffer: String::with_capacity(1024),
        })
    }

    /// Checks each condition in declaration order and delivers on pass.
    /// Delivery failures are counted, never propagated.
    pub fn dispatch(&mut self, packet: &DataPacket) -> Dispatch {
        let mut out = Dispatch::default();
        for (i, ep) in self.endpoints.iter_mut().enumerate() {
            if !ep.condition.check(packet) {
                continue;
            }
            out.fired.push(i);
            ep.stats.events += 1;
            self.buffer.clear();
            ep.format.render_into(packet, &mut self.buffer);
            match ep.sink.deliver(self.buffer.as_bytes()) {
                Ok(()) => {
                    let n = self.buffer.len() as u64;
                    ep.stats.bytes += n;
                    out.bytes_out += n;
                }
                Err(e) => {
                    ep.stats.errors += 1;
                    log::warn!("endpoint {}: {e}", ep.stats.name);
                }
            }
        }
        out
    }

    /// Flushes buffered file endpoints; failures are counted.
    pub fn flush(&mut self) {
        for ep in &mut self.endpoints {
            if let Err(e) = ep.sink.flush() {
                ep.stats.errors += 1;
                log::warn!("endpoint {}: flush failed: {e}", ep.stats.name);
            }
        }
    }

    pub fn stats(&self) -> Vec<EndpointStats> {
        self.endpoints.iter().map(|e| e.stats.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        for ep in &mut self.endpoints {
            let _ = ep.sink.flush();
        }
    }
}
