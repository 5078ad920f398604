//! Length-prefixed wire format: a little-endian u32 body length, a UTF-8
//! JSON object, then raw attachments whose sizes the body lists under
//! `attachments`.

use std::io::{self, Read, Write};

use serde_json::{json, Map, Value};
use thiserror::Error;

pub const PROTOCOL_VERSION: &str = "1";

/// Largest accepted body or attachment, in bytes.
pub const MAX_FRAME: usize = 64 << 20;

const ATTACHMENTS: &str = "attachments";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),

    #[error("frame of {0} bytes exceeds the {MAX_FRAME} byte limit")]
    TooLarge(u64),

    /// The frame was read completely but its body is not a valid message.
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl ProtocolError {
    /// Whether the stream can no longer be trusted to sit on a frame boundary.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, ProtocolError::Malformed(_))
    }
}

/// One protocol message. `body` never holds the `attachments` key; it is
/// generated from `attachments` on the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub body: Map<String, Value>,
    pub attachments: Vec<Vec<u8>>,
}

impl WireMessage {
    /// Builds a message from a JSON object. Non-objects become an empty body.
    pub fn new(body: Value) -> Self {
        let mut body = match body {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        body.remove(ATTACHMENTS);
        Self { body, attachments: Vec::new() }
    }

    pub fn with_attachment(mut self, bytes: Vec<u8>) -> Self {
        self.attachments.push(bytes);
        self
    }

    pub fn command(cmd: &str) -> Self {
        Self::new(json!({ "cmd": cmd }))
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Self::new(json!({ "error": code, "message": message.into() }))
    }

    pub fn cmd(&self) -> Option<&str> {
        self.body.get("cmd").and_then(Value::as_str)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.body.get(key)
    }

    pub fn is_error(&self) -> bool {
        self.body.contains_key("error")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = self.body.clone();
        if !self.attachments.is_empty() {
            body.insert(ATTACHMENTS.into(), self.attachments.iter().map(|a| a.len()).collect());
        }
        let text = serde_json::to_vec(&Value::Object(body)).expect("json map serializes");
        let extra: usize = self.attachments.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(4 + text.len() + extra);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(&text);
        for a in &self.attachments {
            out.extend_from_slice(a);
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Reads one message. Returns `Ok(None)` on a clean end of stream
    /// between frames.
    pub fn read_from(mut r: impl Read) -> Result<Option<Self>, ProtocolError> {
        let mut len = [0u8; 4];
        match read_exact_or_eof(&mut r, &mut len)? {
            false => return Ok(None),
            true => {}
        }
        let n = u32::from_le_bytes(len) as usize;
        if n > MAX_FRAME {
            return Err(ProtocolError::TooLarge(n as u64));
        }
        let mut text = vec![0u8; n];
        r.read_exact(&mut text)?;
        let parsed: Result<Value, _> = serde_json::from_slice(&text);
        let mut body = match parsed {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(ProtocolError::Malformed("body is not a JSON object".into())),
            Err(e) => return Err(ProtocolError::Malformed(format!("body: {e}"))),
        };
        let sizes = match body.remove(ATTACHMENTS) {
            None => Vec::new(),
            Some(v) => parse_sizes(&v)?,
        };
        let mut attachments = Vec::with_capacity(sizes.len());
        for size in sizes {
            if size > MAX_FRAME as u64 {
                return Err(ProtocolError::TooLarge(size));
            }
            let mut buf = vec![0u8; size as usize];
            r.read_exact(&mut buf)?;
            attachments.push(buf);
        }
        Ok(Some(Self { body, attachments }))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut cursor = io::Cursor::new(bytes);
        let msg = Self::read_from(&mut cursor)?
            .ok_or_else(|| ProtocolError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "empty input")))?;
        if cursor.position() as usize != bytes.len() {
            return Err(ProtocolError::Malformed("trailing bytes after message".into()));
        }
        Ok(msg)
    }
}

/// Attachment sizes must be a list of nonnegative integers. An invalid list
/// means the attachment bytes cannot be located, so it is fatal.
fn parse_sizes(v: &Value) -> Result<Vec<u64>, ProtocolError> {
    let bad = || ProtocolError::Io(io::Error::new(io::ErrorKind::InvalidData, "invalid attachments field"));
    v.as_array().ok_or_else(bad)?.iter().map(|x| x.as_u64().ok_or_else(bad)).collect()
}

/// Like `read_exact`, but a stream that ends before the first byte is a
/// clean EOF rather than an error.
fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8]) -> io::Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(k) => got += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}
