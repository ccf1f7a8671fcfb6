//! The device: owns the window and drives each frame through the layers.

mod config;

use std::fmt;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::RecvTimeoutError;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use config::{expand, load_config, load_config_with, BenchSpec, PipelineConfig, SCHEMA_VERSION};

use crate::analytics::FunctionSet;
use crate::bench::{LayerTimings, LogWriter, MetricRecord, RunTotals, Sampler};
use crate::error::ConfigError;
use crate::ingest::{spawn_input, Frame, FrameError, IngestError, Input, InputSpec, Parser};
use crate::model::{ColumnName, DataPacket};
use crate::output::{enrich, Dispatch, Dispatcher, EndpointStats, OutputError};
use crate::window::SlidingWindow;

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("cannot write benchmark log {path}: {source}")]
    BenchLog { path: PathBuf, source: io::Error },
}

/// What happened to one frame.
#[derive(Debug, Clone)]
pub struct PacketOutcome {
    /// 1-based position in the stream, dropped frames included.
    pub seq: u64,
    /// The enriched packet; `None` when the frame was dropped.
    pub packet: Option<DataPacket>,
    pub dispatch: Dispatch,
    pub timings: LayerTimings,
    pub bytes_in: u64,
    pub error: Option<FrameError>,
}

/// Sums of per-layer durations over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerTotals {
    pub input_ns: u128,
    pub processing_ns: u128,
    pub output_ns: u128,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub packets_in: u64,
    pub packets_dropped: u64,
    pub endpoints: Vec<EndpointStats>,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Expression failures turned into Missing.
    pub function_errors: u64,
    /// From the start of the first frame to the end of the last.
    pub wall: Duration,
    pub layers: LayerTotals,
}

impl RunSummary {
    pub fn throughput(&self) -> Option<f64> {
        crate::bench::throughput(self.packets_in, self.wall.as_secs_f64())
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "packets: {} in, {} dropped; bytes: {} in, {} out; function errors: {}; wall {:.3} s",
            self.packets_in,
            self.packets_dropped,
            self.bytes_in,
            self.bytes_out,
            self.function_errors,
            self.wall.as_secs_f64()
        )?;
        for ep in &self.endpoints {
            writeln!(f, "  {:<20} events {:>8}  bytes {:>10}  errors {}", ep.name, ep.events, ep.bytes, ep.errors)?;
        }
        if let Some(t) = self.throughput() {
            write!(f, "throughput: {t:.2} packets/s")?;
        }
        Ok(())
    }
}

struct BenchState {
    sampler: Sampler,
    writer: Option<LogWriter>,
    path: PathBuf,
}

pub struct Pipeline {
    input: InputSpec,
    queue: usize,
    parser: Parser,
    window: SlidingWindow,
    functions: FunctionSet,
    dispatcher: Dispatcher,
    bench: Option<BenchState>,
    seq: u64,
    totals: RunSummary,
    first_start: Option<Instant>,
    last_end: Option<Instant>,
}

impl Pipeline {
    /// Validates the config and opens endpoints and the benchmark log.
    pub fn build(config: &PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let parser = Parser::new(&config.parser).map_err(ConfigError::from)?;
        let columns: Vec<ColumnName> = parser.column_names().cloned().collect();
        let functions =
            FunctionSet::build(&config.functions, &columns, config.batchlen, "functions").map_err(ConfigError::from)?;
        let dispatcher = Dispatcher::open(&config.endpoints, &config.universe())?;
        let bench = match &config.bench {
            Some(b) => Some(BenchState {
                writer: Some(LogWriter::create(&b.log).map_err(|source| PipelineError::BenchLog {
                    path: b.log.clone(),
                    source,
                })?),
                sampler: Sampler::new(b.cpu_scope),
                path: b.log.clone(),
            }),
            None => None,
        };
        Ok(Pipeline {
            input: config.input.clone(),
            queue: config.queue,
            parser,
            window: SlidingWindow::new(config.batchlen),
            functions,
            dispatcher,
            bench,
            seq: 0,
            totals: RunSummary::default(),
            first_start: None,
            last_end: None,
        })
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    /// Runs one frame through every layer. Malformed frames are dropped after parsing.
    pub fn process_frame(&mut self, frame: &Frame) -> PacketOutcome {
        self.seq += 1;
        let bytes_in = frame.wire_len as u64;
        self.totals.packets_in += 1;
        self.totals.bytes_in += bytes_in;

        let t0 = Instant::now();
        self.first_start.get_or_insert(t0);
        let parsed = self.parser.parse(frame);
        let t1 = Instant::now();

        let mut outcome = PacketOutcome {
            seq: self.seq,
            packet: None,
            dispatch: Dispatch::default(),
            timings: LayerTimings {
                input_ns: nanos(t1 - t0),
                ..LayerTimings::default()
            },
            bytes_in,
            error: None,
        };

        match parsed {
            Err(e) => {
                log::debug!("frame {}: dropped: {e}", self.seq);
                self.totals.packets_dropped += 1;
                outcome.error = Some(e);
                self.last_end = Some(t1);
            }
            Ok(packet) => {
                self.window.push(packet.clone());
                let evaluation = self.functions.evaluate(&self.window, &packet);
                let enriched = enrich(packet, self.functions.labelled(&evaluation));
                let t2 = Instant::now();
                let dispatch = self.dispatcher.dispatch(&enriched);
                let t3 = Instant::now();

                self.totals.function_errors += evaluation.errors;
                self.totals.bytes_out += dispatch.bytes_out;
                outcome.timings.processing_ns = nanos(t2 - t1);
                outcome.timings.output_ns = nanos(t3 - t2);
                outcome.dispatch = dispatch;
                outcome.packet = Some(enriched);
                self.last_end = Some(t3);
            }
        }

        let t = &mut self.totals.layers;
        t.input_ns += outcome.timings.input_ns as u128;
        t.processing_ns += outcome.timings.processing_ns as u128;
        t.output_ns += outcome.timings.output_ns as u128;

        if let Some(bench) = &mut self.bench {
            let (cpu, mem) = bench.sampler.sample();
            let record = MetricRecord::new(self.seq, outcome.timings, cpu, mem, bytes_in, outcome.dispatch.bytes_out);
            if let Some(w) = &mut bench.writer {
                if let Err(e) = w.push(&record) {
                    log::warn!("benchmark log {}: {e}; benchmarking disabled", bench.path.display());
                    bench.writer = None;
                }
            }
        }
        outcome
    }

    /// Runs the configured input until EOF or until stopped.
    pub fn run(self, stop: Arc<AtomicBool>, duration: Option<Duration>) -> Result<RunSummary, PipelineError> {
        let input = self.input.open()?;
        self.run_with(input, stop, duration, |_| {})
    }

    /// Like [`Pipeline::run`] with an explicit source and a per-packet observer.
    /// Frames already queued when stopping are still processed.
    pub fn run_with<F>(
        mut self,
        input: Box<dyn Input>,
        stop: Arc<AtomicBool>,
        duration: Option<Duration>,
        mut observer: F,
    ) -> Result<RunSummary, PipelineError>
    where
        F: FnMut(&PacketOutcome),
    {
        let deadline = duration.map(|d| Instant::now() + d);
        let (rx, reader) = spawn_input(input, self.queue, Arc::clone(&stop));
        loop {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                stop.store(true, Ordering::Relaxed);
            }
            match rx.recv_timeout(POLL) {
                Ok(frame) => {
                    let outcome = self.process_frame(&frame);
                    observer(&outcome);
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
        }
        let input_result = reader.join().unwrap_or_else(|_| {
            log::error!("input thread panicked");
            Ok(Default::default())
        });
        let summary = self.finish();
        match input_result {
            Ok(_) => Ok(summary),
            Err(e) => {
                log::error!("input failed: {e}");
                Ok(summary)
            }
        }
    }

    /// Flushes endpoints and completes the benchmark log.
    pub fn finish(mut self) -> RunSummary {
        self.dispatcher.flush();
        let mut summary = std::mem::take(&mut self.totals);
        summary.endpoints = self.dispatcher.stats();
        summary.wall = match (self.first_start, self.last_end) {
            (Some(a), Some(b)) => b.saturating_duration_since(a),
            _ => Duration::ZERO,
        };
        if let Some(BenchState {
            writer: Some(w), path, ..
        }) = self.bench.take()
        {
            let run = RunTotals {
                packets_in: summary.packets_in,
                packets_dropped: summary.packets_dropped,
                bytes_in: summary.bytes_in,
                bytes_out: summary.bytes_out,
                wall_us: summary.wall.as_micros() as u64,
            };
            if let Err(e) = w.finish(&summary.endpoints, &run) {
                log::warn!("benchmark log {}: {e}", path.display());
            }
        }
        summary
    }
}

fn nanos(d: Duration) -> u64 {
    d.as_nanos().min(u64::MAX as u128) as u64
}
