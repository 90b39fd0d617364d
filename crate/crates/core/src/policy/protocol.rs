//! Newline-delimited frame protocol spoken with external policy processes.
//!
//! Every frame is one canonical JSON object (keys sorted, no insignificant
//! whitespace) terminated by `\n`. Both sides open with a `hello` frame.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: &str = "scalebench-policy/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case", deny_unknown_fields)]
pub enum HostFrame {
    Hello {
        protocol: String,
        role: String,
        token_bound: usize,
    },
    /// `observation` is sent as the canonical serialized observation.
    Decide { seq: u64, observation: Value },
    ToolResult {
        seq: u64,
        call: u64,
        tool: String,
        result: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "frame", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Hello {
        protocol: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Action {
        seq: u64,
        target_executors: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        justification: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tokens_in: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tokens_out: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gate_open: Option<bool>,
    },
    Tool {
        seq: u64,
        call: u64,
        tool: String,
        #[serde(default)]
        args: Value,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
        code: String,
        message: String,
    },
}

/// Canonical single-line encoding, including the trailing newline.
pub fn encode<T: Serialize>(frame: &T) -> String {
    let mut s = serde_json::to_value(frame)
        .expect("frames serialize")
        .to_string();
    s.push('\n');
    s
}

/// Request frame carrying an already-serialized observation, byte-for-byte.
pub fn encode_decide(seq: u64, observation_text: &str) -> String {
    format!("{{\"frame\":\"decide\",\"observation\":{observation_text},\"seq\":{seq}}}\n")
}

pub fn decode_client(line: &str) -> Result<ClientFrame> {
    serde_json::from_str(line.trim_end_matches(['\r', '\n']))
        .map_err(|e| Error::Protocol(format!("malformed client frame ({e}): {line:?}")))
}

pub fn decode_host(line: &str) -> Result<HostFrame> {
    serde_json::from_str(line.trim_end_matches(['\r', '\n']))
        .map_err(|e| Error::Protocol(format!("malformed host frame ({e}): {line:?}")))
}

pub fn host_hello(token_bound: usize) -> HostFrame {
    HostFrame::Hello {
        protocol: PROTOCOL_VERSION.into(),
        role: "host".into(),
        token_bound,
    }
}
