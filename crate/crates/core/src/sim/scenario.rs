//! Deterministic dew-point feed with injected anomalies and a ground-truth log.
//!
//! The generator is ChaCha8 seeded from the scenario's `seed` via
//! `SeedableRng::seed_from_u64`, with Gaussian noise from `rand_distr::Normal`.
//! Same spec, same bytes.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use chrono::{DateTime, Duration as ChronoDuration, Utc};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Diagnostic};

fn default_sensors() -> usize {
    3
}
fn default_base() -> f64 {
    10.0
}
fn default_period() -> f64 {
    600.0
}
fn default_noise() -> f64 {
    0.1
}
fn default_magnitude() -> f64 {
    5.0
}
fn default_window() -> usize {
    20
}
fn default_k() -> f64 {
    3.0
}
fn default_ramp() -> f64 {
    0.3
}
fn default_decimals() -> usize {
    2
}
fn default_unit() -> String {
    "C".into()
}
fn default_start() -> DateTime<Utc> {
    DateTime::from_timestamp(1_609_459_200, 0).expect("valid epoch")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeSpec {
    /// Per-packet probability, after warmup.
    #[serde(default)]
    pub probability: f64,
    /// Exact number of spikes placed uniformly after warmup; overrides `probability`.
    #[serde(default)]
    pub count: Option<usize>,
    /// Minimum displacement from the clean signal in noise-sigma units.
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    /// Detector window size; spikes are placed only once it is full.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Detector band half-width in window standard deviations.
    #[serde(default = "default_k")]
    pub k: f64,
}

impl Default for SpikeSpec {
    fn default() -> Self {
        SpikeSpec {
            probability: 0.0,
            count: None,
            magnitude: default_magnitude(),
            window: default_window(),
            k: default_k(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Probability {
    All(f64),
    PerSensor(Vec<f64>),
}

impl Default for Probability {
    fn default() -> Self {
        Probability::All(0.0)
    }
}

impl Probability {
    fn for_sensor(&self, s: usize) -> f64 {
        match self {
            Probability::All(p) => *p,
            Probability::PerSensor(ps) => ps.get(s).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingSpec {
    #[serde(default)]
    pub probability: Probability,
    /// Exact number of missing readings; overrides `probability`.
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub start: u64,
    pub length: u64,
}

impl Episode {
    pub fn contains(&self, id: u64) -> bool {
        id >= self.start && id < self.start + self.length
    }

    pub fn last(&self) -> u64 {
        self.start + self.length - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default = "default_sensors")]
    pub sensors: usize,
    /// Number of packets.
    pub duration: u64,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default)]
    pub amplitude: f64,
    /// Sine period in packets.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Gaussian noise standard deviation.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub spike: SpikeSpec,
    #[serde(default)]
    pub missing: MissingSpec,
    /// The first sensor ramps up and the last ramps down during each episode.
    #[serde(default)]
    pub disagreements: Vec<Episode>,
    /// Ramp per packet during a disagreement episode.
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    /// Packets per second when streamed; absent means unthrottled.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default = "default_decimals")]
    pub decimals: usize,
    #[serde(default = "default_unit")]
    pub unit: String,
    /// Timestamp of packet 0; packet `i` is `start + i` seconds.
    #[serde(default = "default_start")]
    pub start: DateTime<Utc>,
}

impl ScenarioSpec {
    pub fn new(seed: u64, duration: u64) -> Self {
        ScenarioSpec {
            seed,
            sensors: default_sensors(),
            duration,
            base: default_base(),
            amplitude: 0.0,
            period: default_period(),
            noise: default_noise(),
            spike: SpikeSpec::default(),
            missing: MissingSpec::default(),
            disagreements: Vec::new(),
            ramp: default_ramp(),
            rate: None,
            decimals: default_decimals(),
            unit: default_unit(),
            start: default_start(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| ConfigError::single("scenario", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_json(&text)
    }

    /// Column names of the emitted frames.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["id".to_owned(), "timestamp".to_owned(), "unit".to_owned()];
        cols.extend((0..self.sensors).map(|s| self.sensor_name(s)));
        cols
    }

    /// `value` for a single sensor, `s1..sN` otherwise.
    pub fn sensor_name(&self, s: usize) -> String {
        if self.sensors == 1 {
            "value".into()
        } else {
            format!("s{}", s + 1)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut d = Vec::new();
        let prob = |d: &mut Vec<Diagnostic>, path: &str, p: f64| {
            if !(0.0..=1.0).contains(&p) {
                d.push(Diagnostic::new(path, format!("probability {p} outside [0, 1]")));
            }
        };
        if self.sensors == 0 {
            d.push(Diagnostic::new("sensors", "must be at least 1"));
        }
        if self.period.is_nan() || self.period <= 0.0 {
            d.push(Diagnostic::new("period", "must be positive"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            d.push(Diagnostic::new("noise", "must be a non-negative number"));
        }
        prob(&mut d, "spike.probability", self.spike.probability);
        if self.spike.window < 2 {
            d.push(Diagnostic::new("spike.window", "must be at least 2"));
        }
        if self.spike.k.is_nan() || self.spike.k < 0.0 {
            d.push(Diagnostic::new("spike.k", "must be non-negative"));
        }
        match &self.missing.probability {
            Probability::All(p) => prob(&mut d, "missing.probability", *p),
            Probability::PerSensor(ps) => {
                if ps.len() != self.sensors {
                    d.push(Diagnostic::new(
                        "missing.probability",
                        format!("{} entries for {} sensors", ps.len(), self.sensors),
                    ));
                }
                for (i, p) in ps.iter().enumerate() {
                    prob(&mut d, &format!("missing.probability[{i}]"), *p);
                }
            }
        }
        if !self.disagreements.is_empty() && self.sensors < 2 {
            d.push(Diagnostic::new("disagreements", "need at least two sensors"));
        }
        for (i, e) in self.disagreements.iter().enumerate() {
            if e.length == 0 || e.start == 0 || e.last() > self.duration {
                d.push(Diagnostic::new(
                    format!("disagreements[{i}]"),
                    format!("episode {}+{} outside packets 1..={}", e.start, e.length, self.duration),
                ));
            }
        }
        if let Some(r) = self.rate {
            if !(r > 0.0 && r.is_finite()) {
                d.push(Diagnostic::new("rate", "must be positive"));
            }
        }
        if self.decimals > 12 {
            d.push(Diagnostic::new("decimals", "at most 12"));
        }
        if self.unit.contains(['\t', '\n']) {
            d.push(Diagnostic::new("unit", "must not contain tabs or newlines"));
        }
        if d.is_empty() {
            Ok(())
        } else {
            Err(d.into())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    SpikeHigh,
    SpikeLow,
    Missing,
    Disagree,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SpikeHigh => "spike_high",
            EventKind::SpikeLow => "spike_low",
            EventKind::Missing => "missing",
            EventKind::Disagree => "disagree",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "spike_high" => EventKind::SpikeHigh,
            "spike_low" => EventKind::SpikeLow,
            "missing" => EventKind::Missing,
            "disagree" => EventKind::Disagree,
            other => return Err(format!("unknown event kind {other:?}")),
        })
    }
}

/// One ground-truth line. Disagreements list both sensors, `s1,s3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TruthEvent {
    pub packet_id: u64,
    pub kind: EventKind,
    pub sensor: String,
}

impl fmt::Display for TruthEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.packet_id, self.kind.as_str(), self.sensor)
    }
}

/// Generated frames (no terminators) plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub lines: Vec<String>,
    pub truth: Vec<TruthEvent>,
}

impl Scenario {
    /// Newline-terminated stream, as written to a file or socket.
    pub fn stream_text(&self) -> String {
        let mut s = String::with_capacity(self.lines.iter().map(|l| l.len() + 1).sum());
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn truth_text(&self) -> String {
        let mut s = String::new();
        for e in &self.truth {
            let _ = writeln!(s, "{e}");
        }
        s
    }

    pub fn write_stream(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.stream_text())
    }

    pub fn write_truth(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.truth_text())
    }

    pub fn events(&self, kind: EventKind) -> impl Iterator<Item = &TruthEvent> {
        self.truth.iter().filter(move |e| e.kind == kind)
    }
}

pub fn parse_truth(text: &str) -> Result<Vec<TruthEvent>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 3 {
                return Err(format!("line {}: expected 3 fields", i + 1));
            }
            Ok(TruthEvent {
                packet_id: f[0].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
                kind: f[1].parse().map_err(|e| format!("line {}: {e}", i + 1))?,
                sensor: f[2].to_owned(),
            })
        })
        .collect()
}

/// Smallest displacement from the mean of the other `n - 1` window values that
/// puts a value strictly outside mean ± k·stdev of all `n` (population stdev):
/// `k · s · sqrt(n / (n - 1 - k²))`, with `s` the population stdev of the others.
/// `None` when `n - 1 <= k²`, where no single value can leave the band.
pub fn detection_margin(others: &[f64], k: f64) -> Option<f64> {
    let n = others.len() as f64 + 1.0;
    if n - 1.0 - k * k <= 0.0 {
        return None;
    }
    let m = others.iter().sum::<f64>() / others.len() as f64;
    let var = others.iter().map(|x| (x - m).powi(2)).sum::<f64>() / others.len() as f64;
    Some(k * var.sqrt() * (n / (n - 1.0 - k * k)).sqrt())
}

pub fn generate(spec: &ScenarioSpec) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.duration;
    let sensors = spec.sensors;
    let scale = 10f64.powi(spec.decimals as i32);
    let quantum = 1.0 / scale;

    // Disagreement packets and the one after each episode stay intact so the
    // slope signature of every episode is observable.
    let protected: HashSet<u64> = spec
        .disagreements
        .iter()
        .flat_map(|e| e.start..=e.last() + 1)
        .collect();

    let warmup = spec.spike.window as u64;
    let spike_cells: HashSet<(u64, usize)> = match spec.spike.count {
        Some(count) => {
            let eligible: Vec<u64> = (warmup + 1..=n).filter(|id| !protected.contains(id)).collect();
            let amount = count.min(eligible.len());
            index::sample(&mut rng, eligible.len(), amount)
                .into_iter()
                .map(|i| (eligible[i], rng.random_range(0..sensors)))
                .collect()
        }
        None => HashSet::new(),
    };

    let missing_cells: HashSet<(u64, usize)> = match spec.missing.count {
        Some(count) => {
            let eligible: Vec<(u64, usize)> = (1..=n)
                .filter(|id| !protected.contains(id))
                .flat_map(|id| (0..sensors).map(move |s| (id, s)))
                .filter(|c| !spike_cells.contains(c))
                .collect();
            let amount = count.min(eligible.len());
            let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), amount).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| eligible[i]).collect()
        }
        None => HashSet::new(),
    };

    let normal = Normal::new(0.0, spec.noise.max(0.0)).expect("validated noise");
    let mut history: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n as usize); sensors];
    let mut lines = Vec::with_capacity(n as usize);
    let mut truth = Vec::new();
    let names: Vec<String> = (0..sensors).map(|s| spec.sensor_name(s)).collect();

    for id in 1..=n {
        let t = spec.start + ChronoDuration::seconds(id as i64);
        let mut line = String::with_capacity(64);
        let _ = write!(line, "{id}\t{}\t{}", t.format("%Y-%m-%dT%H:%M:%SZ"), spec.unit);
        let episode = spec.disagreements.iter().find(|e| e.contains(id));
        let phase = 2.0 * std::f64::consts::PI * id as f64 / spec.period;

        for s in 0..sensors {
            let mut value = spec.base + spec.amplitude * phase.sin() + normal.sample(&mut rng);
            if let Some(e) = episode {
                let ramp = spec.ramp * (id - e.start + 1) as f64;
                if s == 0 {
                    value += ramp;
                } else if s == sensors - 1 {
                    value -= ramp;
                }
            }

            let spiked = spec.spike.count.is_some() && spike_cells.contains(&(id, s))
                || spec.spike.count.is_none()
                    && id > warmup
                    && !protected.contains(&id)
                    && spec.spike.probability > 0.0
                    && rng.random::<f64>() < spec.spike.probability;
            let missing = if spec.missing.count.is_some() {
                missing_cells.contains(&(id, s))
            } else {
                let p = spec.missing.probability.for_sensor(s);
                !spiked && !protected.contains(&id) && p > 0.0 && rng.random::<f64>() < p
            };

            let emitted = if missing {
                truth.push(TruthEvent {
                    packet_id: id,
                    kind: EventKind::Missing,
                    sensor: names[s].clone(),
                });
                None
            } else if spiked {
                let high = rng.random::<bool>();
                let window = spec.spike.window;
                let others: Vec<f64> = history[s].iter().rev().take(window - 1).flatten().copied().collect();
                let wanted = spec.spike.magnitude * spec.noise;
                let displaced = match detection_margin(&others, spec.spike.k) {
                    Some(margin) if !others.is_empty() => {
                        let mean = others.iter().sum::<f64>() / others.len() as f64;
                        // 5% headroom over the exact boundary absorbs rounding.
                        let needed = (margin * 1.05).max(quantum);
                        if high {
                            (value + wanted).max(mean + needed)
                        } else {
                            (value - wanted).min(mean - needed)
                        }
                    }
                    _ => {
                        if high {
                            value + wanted
                        } else {
                            value - wanted
                        }
                    }
                };
                truth.push(TruthEvent {
                    packet_id: id,
                    kind: if high { EventKind::SpikeHigh } else { EventKind::SpikeLow },
                    sensor: names[s].clone(),
                });
                Some(if high {
                    (displaced * scale).ceil() / scale
                } else {
                    (displaced * scale).floor() / scale
                })
            } else {
                Some(value)
            };

            line.push('\t');
            let stored = emitted.map(|v| {
                let text = format!("{:.*}", spec.decimals, v);
                line.push_str(&text);
                text.parse::<f64>().expect("formatted float")
            });
            history[s].push(stored);
        }

        if episode.is_some() {
            truth.push(TruthEvent {
                packet_id: id,
                kind: EventKind::Disagree,
                sensor: format!("{},{}", names[0], names[sensors - 1]),
            });
        }
        lines.push(line);
    }
    truth.sort();
    Scenario { lines, truth }
}
