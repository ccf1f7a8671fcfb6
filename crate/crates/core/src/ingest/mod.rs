//! Input layer: raw frames from TCP or file replay, parsed into packets.

mod input;
mod parser;

pub use input::{run_input, spawn_input, FileInput, IngestError, Input, InputSpec, InputSummary, TcpInput};
pub(crate) use input::Pacer;
pub use parser::{ColumnType, FrameError, Parser, ParserSpec};

/// One raw record as read from the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Frame content without the newline (and without a trailing `\r`).
    pub data: Vec<u8>,
    /// Bytes consumed from the source for this frame, delimiter included.
    pub wire_len: usize,
    pub arrival_ns: u64,
}

impl Frame {
    /// Builds a frame from a line that may still carry its `\n` / `\r\n` terminator.
    pub fn from_line(mut line: Vec<u8>, arrival_ns: u64) -> Self {
        let wire_len = line.len();
        if line.last() == Some(&b'\n') {
            line.pop();
            if line.last() == Some(&b'\r') {
                line.pop();
            }
        }
        Frame {
            data: line,
            wire_len,
            arrival_ns,
        }
    }

    /// A frame as if it had been received with a newline terminator.
    pub fn from_text(text: &str) -> Self {
        Frame {
            data: text.as_bytes().to_vec(),
            wire_len: text.len() + 1,
            arrival_ns: crate::model::monotonic_ns(),
        }
    }
}
