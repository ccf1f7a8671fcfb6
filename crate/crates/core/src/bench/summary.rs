//! Offline summary of a benchmark log.

use std::fmt;

use thiserror::Error;

use super::log::{BenchLog, SENTINEL};

/// Linear interpolation between order statistics (`h = (n - 1) q`).
/// `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Output size as a percentage of input size.
pub fn ratio_percent(bytes_out: u64, bytes_in: u64) -> Option<f64> {
    (bytes_in > 0).then(|| bytes_out as f64 / bytes_in as f64 * 100.0)
}

/// Packets per second; undefined for fewer than two packets or no elapsed time.
pub fn throughput(packets: u64, elapsed_secs: f64) -> Option<f64> {
    (packets >= 2 && elapsed_secs > 0.0).then(|| packets as f64 / elapsed_secs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl MetricStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(MetricStats {
            count: v.len(),
            min: v[0],
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub name: String,
    pub bytes: u64,
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub packets: usize,
    pub t_input: MetricStats,
    pub t_processing: MetricStats,
    pub t_output: MetricStats,
    pub t_total: MetricStats,
    /// Excludes undefined and failed samples; `None` if none remain.
    pub cpu: Option<MetricStats>,
    /// Negative deltas clamped to zero, failed samples excluded.
    pub mem: Option<MetricStats>,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// One row per endpoint (when the log has totals) plus a final "total" row.
    pub ratios: Vec<RatioRow>,
    pub throughput: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("benchmark log has no records")]
    Empty,
}

pub fn summarize(log: &BenchLog) -> Result<BenchSummary, ReportError> {
    let records = &log.records;
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let column = |f: fn(&super::MetricRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let stats = |v: Vec<f64>| MetricStats::of(&v).expect("non-empty");

    let cpu: Vec<f64> = records.iter().filter_map(|r| r.cpu_pct).filter(|&c| c != SENTINEL).collect();
    let mem: Vec<f64> = records.iter().map(|r| r.mem_kb).filter(|&m| m != SENTINEL).map(|m| m.max(0.0)).collect();

    let record_in: u64 = records.iter().map(|r| r.bytes_in).sum();
    let record_out: u64 = records.iter().map(|r| r.bytes_out).sum();
    let (bytes_in, bytes_out) = match &log.run {
        Some(run) => (run.bytes_in, run.bytes_out),
        None => (record_in, record_out),
    };

    let mut ratios: Vec<RatioRow> = log
        .endpoints
        .iter()
        .map(|ep| RatioRow {
            name: ep.name.clone(),
            bytes: ep.bytes,
            percent: ratio_percent(ep.bytes, bytes_in),
        })
        .collect();
    ratios.push(RatioRow {
        name: "total".into(),
        bytes: bytes_out,
        percent: ratio_percent(bytes_out, bytes_in),
    });

    let elapsed_us = match &log.run {
        Some(run) if run.wall_us > 0 => run.wall_us,
        _ => records.iter().map(|r| r.t_total_us).sum(),
    };
    let packets = log.run.as_ref().map_or(records.len() as u64, |r| r.packets_in);

    Ok(BenchSummary {
        packets: records.len(),
        t_input: stats(column(|r| r.t_input_us as f64)),
        t_processing: stats(column(|r| r.t_processing_us as f64)),
        t_output: stats(column(|r| r.t_output_us as f64)),
        t_total: stats(column(|r| r.t_total_us as f64)),
        cpu: MetricStats::of(&cpu),
        mem: MetricStats::of(&mem),
        bytes_in,
        bytes_out,
        ratios,
        throughput: throughput(packets, elapsed_us as f64 / 1e6),
    })
}

impl fmt::Display for BenchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "packets: {}", self.packets)?;
        writeln!(
            f,
            "\n{:<16}{:>12}{:>12}{:>12}{:>12}{:>12}{:>12}",
            "metric", "minimum", "maximum", "average", "median", "1st quart.", "3rd quart."
        )?;
        let mut row = |name: &str, s: Option<&MetricStats>| match s {
            Some(s) => writeln!(
                f,
                "{name:<16}{:>12.3}{:>12.3}{:>12.3}{:>12.3}{:>12.3}{:>12.3}",
                s.min, s.max, s.mean, s.median, s.q1, s.q3
            ),
            None => writeln!(f, "{name:<16}{:>12}", "n/a"),
        };
        row("cpu_pct", self.cpu.as_ref())?;
        row("mem_kb", self.mem.as_ref())?;
        row("t_input_us", Some(&self.t_input))?;
        row("t_processing_us", Some(&self.t_processing))?;
        row("t_output_us", Some(&self.t_output))?;
        row("t_total_us", Some(&self.t_total))?;

        let total = self.t_input.mean + self.t_processing.mean + self.t_output.mean;
        if total > 0.0 {
            writeln!(f, "\naverage time per layer")?;
            for (name, s) in [("input", &self.t_input), ("processing", &self.t_processing), ("output", &self.t_output)] {
                writeln!(f, "{name:<16}{:>12.1} us{:>9.2}%", s.mean, s.mean / total * 100.0)?;
            }
        }

        writeln!(f, "\noutput / input size ratio")?;
        writeln!(f, "{:<16}{:>12}", "raw input", self.bytes_in)?;
        for r in &self.ratios {
            match r.percent {
                Some(p) => writeln!(f, "{:<16}{:>12}{:>11.2}%", r.name, r.bytes, p)?,
                None => writeln!(f, "{:<16}{:>12}{:>12}", r.name, r.bytes, "-")?,
            }
        }
        if let Some(t) = self.throughput {
            writeln!(f, "\nthroughput: {t:.2} packets/s")?;
        }
        Ok(())
    }
}
