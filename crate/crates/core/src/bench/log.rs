//! Per-packet metric records and the tab-separated benchmark log.
//!
//! Layout: a `#`-prefixed header, one line of nine fields per packet, and
//! optional `#`-prefixed trailer lines carrying per-endpoint and run totals.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::output::EndpointStats;

pub const COLUMNS: [&str; 9] = [
    "packet_id",
    "t_input_us",
    "t_processing_us",
    "t_output_us",
    "t_total_us",
    "cpu_pct",
    "mem_kb",
    "bytes_in",
    "bytes_out",
];

/// Written in place of a metric the platform could not provide.
pub const SENTINEL: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub packet_id: u64,
    pub t_input_us: u64,
    pub t_processing_us: u64,
    pub t_output_us: u64,
    pub t_total_us: u64,
    /// `None` for the first sample, which has no interval.
    pub cpu_pct: Option<f64>,
    pub mem_kb: f64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

/// Layer durations of one packet in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerTimings {
    pub input_ns: u64,
    pub processing_ns: u64,
    pub output_ns: u64,
}

impl MetricRecord {
    /// Durations are truncated to whole microseconds; the total is the sum of the parts.
    pub fn new(packet_id: u64, t: LayerTimings, cpu_pct: Option<f64>, mem_kb: f64, bytes_in: u64, bytes_out: u64) -> Self {
        let (i, p, o) = (t.input_ns / 1000, t.processing_ns / 1000, t.output_ns / 1000);
        MetricRecord {
            packet_id,
            t_input_us: i,
            t_processing_us: p,
            t_output_us: o,
            t_total_us: i + p + o,
            cpu_pct,
            mem_kb,
            bytes_in,
            bytes_out,
        }
    }

    fn write_line(&self, out: &mut String) {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t",
            self.packet_id, self.t_input_us, self.t_processing_us, self.t_output_us, self.t_total_us
        );
        if let Some(c) = self.cpu_pct {
            let _ = write!(out, "{c}");
        }
        let _ = writeln!(out, "\t{}\t{}\t{}", self.mem_kb, self.bytes_in, self.bytes_out);
    }

    fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != COLUMNS.len() {
            return Err(format!("expected {} fields, found {}", COLUMNS.len(), fields.len()));
        }
        let int = |i: usize| fields[i].parse::<u64>().map_err(|e| format!("{}: {e}", COLUMNS[i]));
        let float = |i: usize| fields[i].parse::<f64>().map_err(|e| format!("{}: {e}", COLUMNS[i]));
        Ok(MetricRecord {
            packet_id: int(0)?,
            t_input_us: int(1)?,
            t_processing_us: int(2)?,
            t_output_us: int(3)?,
            t_total_us: int(4)?,
            cpu_pct: if fields[5].is_empty() { None } else { Some(float(5)?) },
            mem_kb: float(6)?,
            bytes_in: int(7)?,
            bytes_out: int(8)?,
        })
    }
}

/// Totals written after the last record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunTotals {
    pub packets_in: u64,
    pub packets_dropped: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub wall_us: u64,
}

/// Parsed benchmark log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchLog {
    pub records: Vec<MetricRecord>,
    pub endpoints: Vec<EndpointStats>,
    pub run: Option<RunTotals>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Buffered writer flushing every `batch` records.
pub struct LogWriter {
    out: BufWriter<File>,
    pending: String,
    pending_records: usize,
    batch: usize,
}

impl LogWriter {
    pub const DEFAULT_BATCH: usize = 100;

    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "#{}", COLUMNS.join("\t"))?;
        out.flush()?;
        Ok(LogWriter {
            out,
            pending: String::with_capacity(64 * Self::DEFAULT_BATCH),
            pending_records: 0,
            batch: Self::DEFAULT_BATCH,
        })
    }

    pub fn push(&mut self, record: &MetricRecord) -> io::Result<()> {
        record.write_line(&mut self.pending);
        self.pending_records += 1;
        if self.pending_records >= self.batch {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.write_all(self.pending.as_bytes())?;
        self.out.flush()?;
        self.pending.clear();
        self.pending_records = 0;
        Ok(())
    }

    /// Writes the remaining records and the trailer.
    pub fn finish(mut self, endpoints: &[EndpointStats], run: &RunTotals) -> io::Result<()> {
        self.flush()?;
        writeln!(self.out, "# endpoint\tname\tbytes\tevents\terrors")?;
        for ep in endpoints {
            writeln!(self.out, "# endpoint\t{}\t{}\t{}\t{}", ep.name, ep.bytes, ep.events, ep.errors)?;
        }
        writeln!(self.out, "# run\tpackets_in\tpackets_dropped\tbytes_in\tbytes_out\twall_us")?;
        writeln!(
            self.out,
            "# run\t{}\t{}\t{}\t{}\t{}",
            run.packets_in, run.packets_dropped, run.bytes_in, run.bytes_out, run.wall_us
        )?;
        self.out.flush()
    }
}

pub fn write_log(path: &Path, log: &BenchLog) -> io::Result<()> {
    let mut w = LogWriter::create(path)?;
    for r in &log.records {
        w.push(r)?;
    }
    match &log.run {
        Some(run) => w.finish(&log.endpoints, run),
        None => w.flush(),
    }
}

pub fn read_log(path: &Path) -> Result<BenchLog, LogError> {
    let file = File::open(path).map_err(|source| LogError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut log = BenchLog::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| LogError::Io {
            path: path.to_owned(),
            source,
        })?;
        let parse_err = |message: String| LogError::Parse { line: i + 1, message };
        if let Some(comment) = line.strip_prefix('#') {
            parse_trailer(comment.trim_start(), &mut log).map_err(parse_err)?;
        } else if !line.is_empty() {
            log.records.push(MetricRecord::parse_line(&line).map_err(parse_err)?);
        }
    }
    Ok(log)
}

fn parse_trailer(comment: &str, log: &mut BenchLog) -> Result<(), String> {
    let fields: Vec<&str> = comment.split('\t').collect();
    let num = |s: &str| s.parse::<u64>().map_err(|e| format!("{s:?}: {e}"));
    match fields.as_slice() {
        ["endpoint", "name", ..] | ["run", "packets_in", ..] => Ok(()),
        ["endpoint", name, bytes, events, errors] => {
            log.endpoints.push(EndpointStats {
                name: (*name).to_owned(),
                bytes: num(bytes)?,
                events: num(events)?,
                errors: num(errors)?,
            });
            Ok(())
        }
        ["run", p, d, bi, bo, w] => {
            log.run = Some(RunTotals {
                packets_in: num(p)?,
                packets_dropped: num(d)?,
                bytes_in: num(bi)?,
                bytes_out: num(bo)?,
                wall_us: num(w)?,
            });
            Ok(())
        }
        // Header and free-form comments.
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nanoseconds_truncate_to_microseconds() {
        let t = LayerTimings {
            input_ns: 700_000,
            processing_ns: 5_200_000,
            output_ns: 110_000_000,
        };
        let r = MetricRecord::new(1, t, Some(0.5), 12.0, 45, 120);
        assert_eq!((r.t_input_us, r.t_processing_us, r.t_output_us, r.t_total_us), (700, 5200, 110_000, 115_900));
        let z = MetricRecord::new(2, LayerTimings { input_ns: 999, ..Default::default() }, None, 0.0, 45, 0);
        assert_eq!((z.t_input_us, z.t_total_us), (0, 0));
    }

    #[test]
    fn line_has_nine_fields_and_empty_cpu() {
        let r = MetricRecord::new(1, LayerTimings::default(), None, 0.0, 10, 0);
        let mut s = String::new();
        r.write_line(&mut s);
        assert_eq!(s, "1\t0\t0\t0\t0\t\t0\t10\t0\n");
        assert_eq!(MetricRecord::parse_line(s.trim_end()).unwrap(), r);
        assert!(MetricRecord::parse_line("1\t2").is_err());
    }

    #[test]
    fn trailer_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bench.tsv");
        let log = BenchLog {
            records: vec![MetricRecord::new(1, LayerTimings::default(), Some(SENTINEL), 3.5, 41, 200)],
            endpoints: vec![EndpointStats {
                name: "chart".into(),
                events: 1,
                bytes: 200,
                errors: 0,
            }],
            run: Some(RunTotals {
                packets_in: 1,
                packets_dropped: 0,
                bytes_in: 41,
                bytes_out: 200,
                wall_us: 1234,
            }),
        };
        write_log(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("#packet_id\tt_input_us\t"));
        assert_eq!(read_log(&path).unwrap(), log);
    }

    fn record() -> impl Strategy<Value = MetricRecord> {
        (
            any::<u32>(),
            (0u64..10_000_000, 0u64..10_000_000, 0u64..10_000_000),
            proptest::option::of(0.0f64..100.0),
            -1e6f64..1e6,
            0u64..1_000_000,
            0u64..1_000_000,
        )
            .prop_map(|(id, (i, p, o), cpu, mem, bi, bo)| {
                MetricRecord::new(
                    id as u64,
                    LayerTimings {
                        input_ns: i * 1000,
                        processing_ns: p * 1000,
                        output_ns: o * 1000,
                    },
                    cpu,
                    mem,
                    bi,
                    bo,
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn write_then_read_is_identity(records in proptest::collection::vec(record(), 0..250)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("log.tsv");
            let log = BenchLog { records, endpoints: vec![], run: None };
            write_log(&path, &log).unwrap();
            prop_assert_eq!(read_log(&path).unwrap(), log);
        }
    }
}
