//! Delivery targets: append-only files and HTTP POST.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlushPolicy {
    /// Buffered in memory, flushed at shutdown.
    #[default]
    Buffered,
    /// Flushed to the OS after every payload.
    EveryWrite,
    /// Flushed and `fdatasync`ed after every payload.
    Fsync,
}

fn yes() -> bool {
    true
}

fn default_timeout_ms() -> u64 {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    File {
        path: PathBuf,
        #[serde(default = "yes")]
        append: bool,
        #[serde(default)]
        flush: FlushPolicy,
    },
    Http {
        url: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "yes")]
        keep_alive: bool,
    },
}

impl TargetSpec {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        TargetSpec::File {
            path: path.into(),
            append: true,
            flush: FlushPolicy::default(),
        }
    }

    pub fn http(url: &str) -> Self {
        TargetSpec::Http {
            url: url.to_owned(),
            timeout_ms: default_timeout_ms(),
            keep_alive: true,
        }
    }

    pub fn validate(&self, path: &str) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        match self {
            TargetSpec::File { path: p, .. } => {
                if p.as_os_str().is_empty() {
                    diags.push(Diagnostic::new(format!("{path}.path"), "must not be empty"));
                }
            }
            TargetSpec::Http { url, timeout_ms, .. } => {
                let host = url.strip_prefix("http://").unwrap_or("");
                if host.is_empty() || host.starts_with('/') {
                    diags.push(Diagnostic::new(format!("{path}.url"), format!("{url:?} is not an http:// URL")));
                }
                if *timeout_ms == 0 {
                    diags.push(Diagnostic::new(format!("{path}.timeout_ms"), "must be positive"));
                }
            }
        }
        diags
    }
}

#[derive(Debug, Error)]
pub enum DeliveryError {
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("HTTP transport: {0}")]
    Transport(#[from] ureq::Error),
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
}

/// Opened delivery target.
pub enum Sink {
    File(FileSink),
    Http(HttpSink),
}

impl Sink {
    pub fn deliver(&mut self, payload: &[u8]) -> Result<(), DeliveryError> {
        match self {
            Sink::File(f) => f.deliver(payload),
            Sink::Http(h) => h.deliver(payload),
        }
    }

    pub fn flush(&mut self) -> Result<(), DeliveryError> {
        match self {
            Sink::File(f) => f.flush(),
            Sink::Http(_) => Ok(()),
        }
    }
}

pub struct FileSink {
    writer: BufWriter<File>,
    policy: FlushPolicy,
}

impl FileSink {
    pub fn open(path: &Path, append: bool, policy: FlushPolicy) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut opts = OpenOptions::new();
        opts.create(true);
        if append {
            opts.append(true);
        } else {
            opts.write(true).truncate(true);
        }
        Ok(FileSink {
            writer: BufWriter::with_capacity(64 * 1024, opts.open(path)?),
            policy,
        })
    }

    fn deliver(&mut self, payload: &[u8]) -> Result<(), DeliveryError> {
        self.writer.write_all(payload)?;
        match self.policy {
            FlushPolicy::Buffered => {}
            FlushPolicy::EveryWrite => self.writer.flush()?,
            FlushPolicy::Fsync => {
                self.writer.flush()?;
                self.writer.get_ref().sync_data()?;
            }
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), DeliveryError> {
        self.writer.flush()?;
        if self.policy == FlushPolicy::Fsync {
            self.writer.get_ref().sync_data()?;
        }
        Ok(())
    }
}

pub struct HttpSink {
    agent: ureq::Agent,
    url: String,
    content_type: &'static str,
    keep_alive: bool,
}

impl HttpSink {
    fn deliver(&mut self, payload: &[u8]) -> Result<(), DeliveryError> {
        let mut req = self.agent.post(&self.url).header("Content-Type", self.content_type);
        if !self.keep_alive {
            req = req.header("Connection", "close");
        }
        let mut resp = req.send(payload)?;
        // Drain the body so the connection can go back to the pool.
        let status = resp.status().as_u16();
        resp.body_mut().read_to_vec()?;
        if status >= 400 {
            return Err(DeliveryError::Status(status));
        }
        Ok(())
    }
}

/// Hands out HTTP agents so endpoints with the same settings share one
/// connection pool.
#[derive(Default)]
pub struct AgentPool {
    agents: HashMap<(bool, u64), ureq::Agent>,
}

impl AgentPool {
    pub fn agent(&mut self, keep_alive: bool, timeout_ms: u64) -> ureq::Agent {
        self.agents
            .entry((keep_alive, timeout_ms))
            .or_insert_with(|| {
                let mut config = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_millis(timeout_ms)))
                    .http_status_as_error(false)
                    .no_delay(true);
                if !keep_alive {
                    config = config.max_idle_connections(0).max_idle_connections_per_host(0);
                }
                config.build().new_agent()
            })
            .clone()
    }

    pub fn open(&mut self, target: &TargetSpec, content_type: &'static str) -> io::Result<Sink> {
        Ok(match target {
            TargetSpec::File { path, append, flush } => Sink::File(FileSink::open(path, *append, *flush)?),
            TargetSpec::Http {
                url,
                timeout_ms,
                keep_alive,
            } => Sink::Http(HttpSink {
                agent: self.agent(*keep_alive, *timeout_ms),
                url: url.clone(),
                content_type,
                keep_alive: *keep_alive,
            }),
        })
    }
}
