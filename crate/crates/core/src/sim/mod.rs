//! Sensor simulator with replay and an HTTP test sink.

mod http_sink;
mod scenario;
mod stream;

pub use http_sink::HttpSink;
pub use scenario::{
    detection_margin, generate, parse_truth, Episode, EventKind, MissingSpec, Probability, Scenario, ScenarioSpec,
    SpikeSpec, TruthEvent,
};
pub use stream::{replay, send, SendSummary, SimSink};
