//! CPU and memory sampling from `/proc`.
//!
//! Platforms without `/proc` report the `-1` sentinel for every sample.

use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::log::SENTINEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpuScope {
    /// Whole-machine utilization, as host monitoring tools report it.
    #[default]
    System,
    /// This process only.
    Process,
}

impl std::str::FromStr for CpuScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "system" => Ok(CpuScope::System),
            "process" => Ok(CpuScope::Process),
            other => Err(format!("unknown cpu scope {other:?} (expected system or process)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum CpuMark {
    /// Busy and total jiffies across all CPUs.
    System { busy: u64, total: u64 },
    /// Process jiffies and the wall instant they were read at.
    Process { ticks: u64, at: Instant },
}

/// Stateful sampler: CPU is measured over the interval since the previous call,
/// memory as the change since construction.
#[derive(Debug)]
pub struct Sampler {
    scope: CpuScope,
    previous: Option<CpuMark>,
    baseline_kb: Option<f64>,
    ticks_per_sec: f64,
}

impl Sampler {
    pub fn new(scope: CpuScope) -> Self {
        let mut s = Sampler {
            scope,
            previous: None,
            baseline_kb: None,
            ticks_per_sec: clock_ticks(),
        };
        s.baseline_kb = s.memory_kb();
        s
    }

    /// `(cpu_pct, mem_kb)`. CPU is `None` when there is no previous mark to
    /// compare against; failures yield the sentinel.
    pub fn sample(&mut self) -> (Option<f64>, f64) {
        let mark = self.cpu_mark();
        let cpu = match (self.previous, mark) {
            (_, None) => Some(SENTINEL),
            (None, Some(_)) => None,
            (Some(prev), Some(now)) => Some(self.utilization(prev, now)),
        };
        if mark.is_some() {
            self.previous = mark;
        }
        let mem = match (self.memory_kb(), self.baseline_kb) {
            (Some(now), Some(base)) => (now - base).max(0.0),
            _ => SENTINEL,
        };
        (cpu, mem)
    }

    fn utilization(&self, prev: CpuMark, now: CpuMark) -> f64 {
        let pct = match (prev, now) {
            (CpuMark::System { busy: b0, total: t0 }, CpuMark::System { busy: b1, total: t1 }) => {
                let total = t1.saturating_sub(t0);
                if total == 0 {
                    0.0
                } else {
                    b1.saturating_sub(b0) as f64 / total as f64 * 100.0
                }
            }
            (CpuMark::Process { ticks: k0, at: a0 }, CpuMark::Process { ticks: k1, at: a1 }) => {
                let wall = a1.duration_since(a0).as_secs_f64();
                if wall <= 0.0 {
                    0.0
                } else {
                    k1.saturating_sub(k0) as f64 / self.ticks_per_sec / wall * 100.0
                }
            }
            _ => SENTINEL,
        };
        if pct == SENTINEL {
            pct
        } else {
            pct.clamp(0.0, 100.0)
        }
    }

    fn cpu_mark(&self) -> Option<CpuMark> {
        match self.scope {
            CpuScope::System => {
                let stat = fs::read_to_string("/proc/stat").ok()?;
                parse_proc_stat(&stat).map(|(busy, total)| CpuMark::System { busy, total })
            }
            CpuScope::Process => {
                let stat = fs::read_to_string("/proc/self/stat").ok()?;
                parse_self_stat(&stat).map(|ticks| CpuMark::Process {
                    ticks,
                    at: Instant::now(),
                })
            }
        }
    }

    fn memory_kb(&self) -> Option<f64> {
        match self.scope {
            CpuScope::System => parse_meminfo_used(&fs::read_to_string("/proc/meminfo").ok()?),
            CpuScope::Process => parse_status_rss(&fs::read_to_string("/proc/self/status").ok()?),
        }
    }
}

fn clock_ticks() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as f64
    } else {
        100.0
    }
}

/// `(busy, total)` jiffies from the aggregate `cpu` line. Guest time is
/// already folded into user time, so only the first eight fields count.
fn parse_proc_stat(text: &str) -> Option<(u64, u64)> {
    let line = text.lines().find(|l| l.starts_with("cpu "))?;
    let fields: Vec<u64> = line.split_whitespace().skip(1).take(8).map(|f| f.parse().ok()).collect::<Option<_>>()?;
    if fields.len() < 5 {
        return None;
    }
    let total: u64 = fields.iter().sum();
    let idle = fields[3] + fields[4];
    Some((total - idle, total))
}

/// utime + stime from `/proc/self/stat`. The command name may contain spaces,
/// so fields are counted from the closing parenthesis.
fn parse_self_stat(text: &str) -> Option<u64> {
    let rest = &text[text.rfind(')')? + 1..];
    let fields: Vec<&str> = rest.split_whitespace().collect();
    // After ")" the first field is state (field 3); utime and stime are fields 14 and 15.
    let utime: u64 = fields.get(11)?.parse().ok()?;
    let stime: u64 = fields.get(12)?.parse().ok()?;
    Some(utime + stime)
}

fn meminfo_field(text: &str, key: &str) -> Option<f64> {
    let line = text.lines().find(|l| l.starts_with(key) && l[key.len()..].starts_with(':'))?;
    line[key.len() + 1..].split_whitespace().next()?.parse().ok()
}

fn parse_meminfo_used(text: &str) -> Option<f64> {
    Some(meminfo_field(text, "MemTotal")? - meminfo_field(text, "MemAvailable")?)
}

fn parse_status_rss(text: &str) -> Option<f64> {
    meminfo_field(text, "VmRSS")
}
