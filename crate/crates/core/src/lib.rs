//! Edge stream processing for sensor frames. Sliding-window analytics enrich
//! each packet before it is published to condition-gated endpoints.

pub mod analytics;
pub mod bench;
pub mod conditions;
pub mod error;
pub mod expr;
pub mod ingest;
pub mod model;
pub mod numfmt;
pub mod output;
pub mod pipeline;
pub mod sim;
pub mod window;

pub use error::{ConfigError, Diagnostic};
pub use model::{ColumnName, DataPacket, Value};
pub use window::SlidingWindow;
