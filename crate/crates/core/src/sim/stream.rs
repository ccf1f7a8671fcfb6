//! Sending frames to a pipeline: scenario streaming and verbatim file replay.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::AtomicBool;

use crate::ingest::Pacer;

/// Where simulated frames go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimSink {
    /// `host:port`
    Tcp(String),
    File(PathBuf),
}

impl FromStr for SimSink {
    type Err = String;

    /// `tcp:host:port` or `file:path`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp:") {
            match addr.rsplit_once(':') {
                Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(SimSink::Tcp(addr.to_owned())),
                _ => Err(format!("expected tcp:host:port, got {s:?}")),
            }
        } else if let Some(path) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
            Ok(SimSink::File(PathBuf::from(path)))
        } else {
            Err(format!("expected tcp:host:port or file:path, got {s:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SendSummary {
    pub lines: u64,
    pub bytes: u64,
}

fn open(sink: &SimSink) -> io::Result<Box<dyn Write>> {
    Ok(match sink {
        SimSink::Tcp(addr) => {
            let stream = TcpStream::connect(addr)?;
            stream.set_nodelay(true)?;
            Box::new(BufWriter::new(stream))
        }
        SimSink::File(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(path)?))
        }
    })
}

/// Writes each chunk verbatim, paced at `rate` chunks per second when given.
pub fn send<I, B>(chunks: I, rate: Option<f64>, sink: &SimSink) -> io::Result<SendSummary>
where
    I: IntoIterator<Item = B>,
    B: AsRef<[u8]>,
{
    let mut out = open(sink)?;
    let mut pacer = Pacer::new(rate);
    let never = AtomicBool::new(false);
    let mut summary = SendSummary::default();
    for chunk in chunks {
        pacer.wait(summary.lines + 1, &never);
        let chunk = chunk.as_ref();
        out.write_all(chunk)?;
        if rate.is_some() {
            out.flush()?;
        }
        summary.lines += 1;
        summary.bytes += chunk.len() as u64;
    }
    out.flush()?;
    Ok(summary)
}

/// Sends the lines of `path`, terminators included, so the byte count equals the file size.
pub fn replay(path: &Path, rate: Option<f64>, sink: &SimSink) -> io::Result<SendSummary> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut lines = Vec::new();
    loop {
        let mut buf = Vec::new();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lines.push(buf);
    }
    send(lines, rate, sink)
}
