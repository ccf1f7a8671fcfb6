//! Shared fixtures for the criterion benchmarks in `benches/`.

use std::path::{Path, PathBuf};

use steam_core::ingest::{Frame, InputSpec, ParserSpec};
use steam_core::output::{EndpointSpec, FormatSpec, TargetSpec};
use steam_core::pipeline::{load_config_with, PipelineConfig};
use steam_core::sim::{generate, Episode, MissingSpec, Probability, ScenarioSpec};
use steam_core::{DataPacket, SlidingWindow, Value};

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Frames of a three-sensor stream with a few gaps and disagreement episodes.
pub fn multi_sensor_frames(packets: u64) -> Vec<Frame> {
    let mut spec = ScenarioSpec::new(1, packets);
    spec.noise = 0.02;
    spec.missing = MissingSpec {
        probability: Probability::All(0.005),
        count: None,
    };
    spec.disagreements = (1..packets / 500).map(|i| Episode { start: i * 500, length: 3 }).collect();
    generate(&spec).lines.iter().map(|l| Frame::from_text(&format!("{l}\n"))).collect()
}

/// The multi-sensor reference config with its HTTP endpoints removed and the
/// TSV log written under `out`.
pub fn multi_sensor_file_only(out: &Path) -> PipelineConfig {
    let vars = [("STEAM_OUT".to_owned(), out.display().to_string())].into();
    let mut c = load_config_with(&configs_dir().join("multi_sensor.json"), &vars).expect("reference config");
    c.endpoints.retain(|e| matches!(e.target, TargetSpec::File { .. }));
    c
}

/// A minimal single-column config publishing JSON to `path`.
pub fn single_column(path: &Path) -> PipelineConfig {
    let mut c = PipelineConfig::new(
        20,
        InputSpec::File {
            path: PathBuf::from("unused"),
            rate: None,
        },
        ParserSpec::new("\t", ["id", "value"]),
    );
    c.endpoints = vec![EndpointSpec::new(TargetSpec::file(path), FormatSpec::Json)];
    c
}

/// A full window of `len` noisy values with every tenth one missing.
pub fn value_window(len: usize) -> SlidingWindow {
    let mut w = SlidingWindow::new(len);
    for i in 0..len {
        let v = if i % 10 == 9 {
            Value::Missing
        } else {
            Value::Number(10.0 + ((i * 7919) % 97) as f64 / 100.0)
        };
        w.push(DataPacket::from_pairs([("value", v)]));
    }
    w
}
