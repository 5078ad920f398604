//! Minimal blocking client for the wire protocol.

use std::io::{BufReader, BufWriter, Read, Write};

use serde_json::{json, Value};
use vista_core::episode::RolloutMetrics;

use crate::protocol::{ProtocolError, WireMessage, PROTOCOL_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("server closed the connection")]
    Closed,

    #[error("server error `{code}`: {message}")]
    Server { code: String, message: String },

    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

impl From<std::io::Error> for ClientError {
    fn from(e: std::io::Error) -> Self {
        ClientError::Protocol(e.into())
    }
}

/// Reply to a `step` request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReply {
    pub done: bool,
    pub crashed: bool,
    pub deviation: f64,
    pub heading_error: f64,
    pub sim_time: f64,
}

pub struct Client<R: Read, W: Write> {
    reader: BufReader<R>,
    writer: BufWriter<W>,
}

impl<R: Read, W: Write> Client<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader: BufReader::new(reader), writer: BufWriter::new(writer) }
    }

    /// Sends one message and waits for the reply. Error replies are
    /// returned as messages, not as `Err`.
    pub fn request(&mut self, msg: &WireMessage) -> Result<WireMessage, ClientError> {
        msg.write_to(&mut self.writer)?;
        WireMessage::read_from(&mut self.reader)?.ok_or(ClientError::Closed)
    }

    /// Like [`Client::request`], but error replies become `Err`.
    pub fn call(&mut self, body: Value) -> Result<WireMessage, ClientError> {
        let reply = self.request(&WireMessage::new(body))?;
        if reply.is_error() {
            let s = |k: &str| reply.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
            return Err(ClientError::Server { code: s("error"), message: s("message") });
        }
        Ok(reply)
    }

    pub fn hello(&mut self) -> Result<(), ClientError> {
        self.call(json!({ "cmd": "hello", "version": PROTOCOL_VERSION })).map(drop)
    }

    /// Starts an episode and returns the initial `state` object.
    pub fn reset(&mut self, seed: Option<u64>, config: Option<Value>) -> Result<Value, ClientError> {
        let mut body = json!({ "cmd": "reset" });
        if let Some(s) = seed {
            body["seed"] = s.into();
        }
        if let Some(c) = config {
            body["config"] = c;
        }
        let reply = self.call(body)?;
        reply.get("state").cloned().ok_or_else(|| ClientError::Unexpected("reset reply without state".into()))
    }

    pub fn step(&mut self, curvature: f64) -> Result<StepReply, ClientError> {
        let r = self.call(json!({ "cmd": "step", "curvature": curvature }))?;
        let num = |k: &str| {
            r.get(k).and_then(Value::as_f64).ok_or_else(|| ClientError::Unexpected(format!("step reply without `{k}`")))
        };
        Ok(StepReply {
            done: r.get("done").and_then(Value::as_bool).unwrap_or(false),
            crashed: r.get("cause").and_then(Value::as_str) == Some("crash"),
            deviation: num("deviation")?,
            heading_error: num("heading_error")?,
            sim_time: num("sim_time")?,
        })
    }

    /// The sensor payload for the current pose.
    pub fn observe(&mut self) -> Result<Vec<u8>, ClientError> {
        let mut r = self.call(json!({ "cmd": "observe" }))?;
        if r.attachments.len() != 1 {
            return Err(ClientError::Unexpected(format!("observe returned {} attachments", r.attachments.len())));
        }
        Ok(r.attachments.pop().unwrap())
    }

    pub fn metrics(&mut self) -> Result<RolloutMetrics, ClientError> {
        let r = self.call(json!({ "cmd": "metrics" }))?;
        let m = r.get("metrics").cloned().ok_or_else(|| ClientError::Unexpected("metrics reply without metrics".into()))?;
        serde_json::from_value(m).map_err(|e| ClientError::Unexpected(e.to_string()))
    }

    pub fn close(&mut self) -> Result<(), ClientError> {
        self.call(json!({ "cmd": "close" })).map(drop)
    }
}
