//! Per-packet micro-benchmark logged as TSV and summarized offline.

mod log;
mod sampler;
mod summary;

pub use log::{
    read_log, write_log, BenchLog, LayerTimings, LogError, LogWriter, MetricRecord, RunTotals, COLUMNS, SENTINEL,
};
pub use sampler::{CpuScope, Sampler};
pub use summary::{quantile, ratio_percent, summarize, throughput, BenchSummary, MetricStats, RatioRow, ReportError};
