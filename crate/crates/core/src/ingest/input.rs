use std::fs::File;
use std::io::{self, BufRead, BufReader, ErrorKind};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Diagnostic;
use crate::model::monotonic_ns;

use super::Frame;

/// Poll interval for blocking operations that must observe the stop flag.
const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InputSpec {
    Tcp {
        port: u32,
    },
    File {
        path: PathBuf,
        /// Packets per second; absent means as fast as possible.
        #[serde(default)]
        rate: Option<f64>,
    },
}

impl InputSpec {
    pub fn validate(&self, path: &str) -> Vec<Diagnostic> {
        match self {
            InputSpec::Tcp { port } if !(1..=65535).contains(port) => {
                vec![Diagnostic::new(format!("{path}.port"), format!("port {port} outside 1..=65535"))]
            }
            InputSpec::File { rate: Some(r), .. } if !(r.is_finite() && *r > 0.0) => {
                vec![Diagnostic::new(format!("{path}.rate"), "rate must be positive")]
            }
            _ => Vec::new(),
        }
    }

    /// Opens the source. Bind and open failures surface here, before any frame flows.
    pub fn open(&self) -> Result<Box<dyn Input>, IngestError> {
        Ok(match self {
            InputSpec::Tcp { port } => Box::new(TcpInput::bind(*port as u16)?),
            InputSpec::File { path, rate } => Box::new(FileInput::open(path, *rate)?),
        })
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot bind tcp port {port}: {source}")]
    Bind { port: u16, source: io::Error },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Socket(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InputSummary {
    pub frames_received: u64,
    /// Frames read but refused by the sink because it was shutting down.
    pub frames_dropped: u64,
    pub bytes_in: u64,
}

/// A frame source. `sink` returns `false` to ask the input to stop.
pub trait Input: Send {
    fn run(&mut self, sink: &mut dyn FnMut(Frame) -> bool, stop: &AtomicBool) -> Result<InputSummary, IngestError>;
}

/// Runs an input to completion on the current thread.
pub fn run_input(
    spec: &InputSpec,
    sink: &mut dyn FnMut(Frame) -> bool,
    stop: &AtomicBool,
) -> Result<InputSummary, IngestError> {
    spec.open()?.run(sink, stop)
}

/// Runs `input` on a reader thread behind a bounded FIFO. The reader blocks when
/// the queue is full; dropping the receiver makes it stop at the next frame.
pub fn spawn_input(
    mut input: Box<dyn Input>,
    capacity: usize,
    stop: std::sync::Arc<AtomicBool>,
) -> (Receiver<Frame>, JoinHandle<Result<InputSummary, IngestError>>) {
    let (tx, rx): (SyncSender<Frame>, Receiver<Frame>) = mpsc::sync_channel(capacity.max(1));
    let handle = thread::Builder::new()
        .name("steam-input".into())
        .spawn(move || input.run(&mut |frame| tx.send(frame).is_ok(), &stop))
        .expect("spawning the input thread");
    (rx, handle)
}

/// Reads newline-delimited frames until EOF or until the sink refuses one.
/// Returns `true` when the sink refused a frame.
fn pump<R: BufRead>(
    reader: &mut R,
    sink: &mut dyn FnMut(Frame) -> bool,
    stop: &AtomicBool,
    summary: &mut InputSummary,
    mut pace: impl FnMut(u64) -> bool,
) -> io::Result<bool> {
    let mut buf = Vec::with_capacity(256);
    loop {
        if stop.load(Ordering::Relaxed) {
            return Ok(false);
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => {
                return Ok(false);
            }
            // Without a trailing newline this is the last line before EOF.
            Ok(_) => {
                let frame = Frame::from_line(std::mem::take(&mut buf), monotonic_ns());
                summary.frames_received += 1;
                summary.bytes_in += frame.wire_len as u64;
                if !pace(summary.frames_received) {
                    summary.frames_dropped += 1;
                    return Ok(false);
                }
                if !sink(frame) {
                    summary.frames_dropped += 1;
                    return Ok(true);
                }
            }
            // Partial data stays in `buf`; keep reading after checking the stop flag.
            Err(e) if is_timeout(&e) => continue,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

/// Sleeps until `deadline`, waking periodically to observe `stop`.
/// Returns `false` if stopped first.
fn sleep_until(deadline: Instant, stop: &AtomicBool) -> bool {
    loop {
        if stop.load(Ordering::Relaxed) {
            return false;
        }
        let now = Instant::now();
        if now >= deadline {
            return true;
        }
        thread::sleep((deadline - now).min(POLL));
    }
}

/// Fixed-rate schedule anchored at the first frame, so pacing does not drift.
pub(crate) struct Pacer {
    interval: Option<Duration>,
    start: Option<Instant>,
}

impl Pacer {
    pub(crate) fn new(rate: Option<f64>) -> Self {
        Pacer {
            interval: rate.map(|r| Duration::from_secs_f64(1.0 / r)),
            start: None,
        }
    }

    /// Waits for the slot of the `n`-th frame (1-based).
    pub(crate) fn wait(&mut self, n: u64, stop: &AtomicBool) -> bool {
        let Some(interval) = self.interval else {
            return !stop.load(Ordering::Relaxed);
        };
        let start = *self.start.get_or_insert_with(Instant::now);
        sleep_until(start + interval * (n.saturating_sub(1)) as u32, stop)
    }
}

/// Replays a text file, optionally throttled.
pub struct FileInput {
    path: PathBuf,
    rate: Option<f64>,
    file: Option<File>,
}

impl FileInput {
    pub fn open(path: &Path, rate: Option<f64>) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(FileInput {
            path: path.to_owned(),
            rate,
            file: Some(file),
        })
    }
}

impl Input for FileInput {
    fn run(&mut self, sink: &mut dyn FnMut(Frame) -> bool, stop: &AtomicBool) -> Result<InputSummary, IngestError> {
        let mut summary = InputSummary::default();
        let Some(file) = self.file.take() else {
            return Ok(summary);
        };
        let mut reader = BufReader::new(file);
        let mut pacer = Pacer::new(self.rate);
        pump(&mut reader, sink, stop, &mut summary, |n| pacer.wait(n, stop)).map_err(|source| IngestError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(summary)
    }
}

/// Accepts one client at a time; other connection attempts wait in the listen backlog.
/// A disconnect sends the input back to accepting.
pub struct TcpInput {
    listener: TcpListener,
}

impl TcpInput {
    pub fn bind(port: u16) -> Result<Self, IngestError> {
        let listener = TcpListener::bind(("0.0.0.0", port)).map_err(|source| IngestError::Bind { port, source })?;
        Self::from_listener(listener)
    }

    /// Wraps an already bound listener (tests bind port 0).
    pub fn from_listener(listener: TcpListener) -> Result<Self, IngestError> {
        listener.set_nonblocking(true)?;
        Ok(TcpInput { listener })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    fn accept(&self, stop: &AtomicBool) -> io::Result<Option<TcpStream>> {
        loop {
            if stop.load(Ordering::Relaxed) {
                return Ok(None);
            }
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("sensor node connected from {peer}");
                    stream.set_nonblocking(false)?;
                    stream.set_read_timeout(Some(POLL))?;
                    return Ok(Some(stream));
                }
                Err(e) if is_timeout(&e) || e.kind() == ErrorKind::Interrupted => thread::sleep(POLL / 5),
                Err(e) => return Err(e),
            }
        }
    }
}

impl Input for TcpInput {
    fn run(&mut self, sink: &mut dyn FnMut(Frame) -> bool, stop: &AtomicBool) -> Result<InputSummary, IngestError> {
        let mut summary = InputSummary::default();
        while let Some(stream) = self.accept(stop)? {
            let mut reader = BufReader::new(stream);
            match pump(&mut reader, sink, stop, &mut summary, |_| true) {
                Ok(true) => break,
                Ok(false) => log::info!("sensor node disconnected, waiting for reconnection"),
                Err(e) => log::warn!("connection lost ({e}), waiting for reconnection"),
            }
        }
        Ok(summary)
    }
}
