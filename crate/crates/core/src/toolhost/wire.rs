//! Length-delimited frame protocol for remote tool hosting.
//!
//! Each frame is a big-endian `u32` payload length followed by that many
//! bytes of UTF-8 JSON. Requests carry `{id, method, params}`; responses
//! carry `{id, result}` or `{id, error: {code, message, class}}`. The two
//! methods are `tools/list` and `tools/call`; method naming follows the
//! convention of other tool-transport protocols so foreign clients feel
//! familiar.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::trace::ErrorClass;
use crate::toolhost::{ToolResult, ToolSchema, ToolStatus, ToolhostError};

pub const METHOD_LIST: &str = "tools/list";
pub const METHOD_CALL: &str = "tools/call";

/// Upper bound on a frame payload; anything larger is a protocol violation.
pub const MAX_FRAME_LEN: u32 = 16 * 1024 * 1024;

pub mod codes {
    pub const PARSE_ERROR: i64 = -32700;
    pub const INVALID_REQUEST: i64 = -32600;
    pub const METHOD_NOT_FOUND: i64 = -32601;
    pub const INVALID_PARAMS: i64 = -32602;
    pub const INTERNAL: i64 = -32603;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub method: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorFrame>,
}

impl Response {
    pub fn ok(id: u64, result: serde_json::Value) -> Self {
        Self {
            id,
            result: Some(result),
            error: None,
        }
    }

    pub fn fail(id: u64, code: i64, message: impl Into<String>, class: ErrorClass) -> Self {
        Self {
            id,
            result: None,
            error: Some(ErrorFrame {
                code,
                message: message.into(),
                class,
            }),
        }
    }
}

/// Protocol-level failure: unknown method, malformed params, internal fault.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub code: i64,
    pub message: String,
    pub class: ErrorClass,
}

/// `tools/list` result payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolListing {
    pub tools: Vec<ToolSchema>,
}

/// `tools/call` params payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallParams {
    pub name: String,
    pub call_id: String,
    #[serde(default)]
    pub arguments: std::collections::BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub confirmed: bool,
}

/// `tools/call` result payload. Durations travel as integer milliseconds;
/// they are advisory and excluded from cross-transport equality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireToolResult {
    pub call_id: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ErrorClass>,
    pub content: String,
    pub duration_ms: u64,
    pub content_tokens: u64,
}

impl WireToolResult {
    pub fn from_result(result: &ToolResult) -> Self {
        Self {
            call_id: result.call_id.clone(),
            status: match result.status {
                ToolStatus::Ok => "ok".to_string(),
                ToolStatus::Error(_) => "error".to_string(),
            },
            class: result.status.error_class(),
            content: result.content.clone(),
            duration_ms: result.duration.as_millis() as u64,
            content_tokens: result.content_tokens,
        }
    }

    pub fn into_result(self) -> ToolResult {
        let status = match self.class {
            Some(class) if self.status == "error" => ToolStatus::Error(class),
            // A malformed peer that says "error" without a class still must
            // not surface as success.
            None if self.status == "error" => ToolStatus::Error(ErrorClass::ProviderError),
            _ => ToolStatus::Ok,
        };
        ToolResult {
            call_id: self.call_id,
            status,
            content: self.content,
            duration: Duration::from_millis(self.duration_ms),
            content_tokens: self.content_tokens,
        }
    }
}

/// Writes one frame: length prefix then payload.
pub fn write_frame(writer: &mut impl Write, payload: &[u8]) -> io::Result<()> {
    if payload.len() > MAX_FRAME_LEN as usize {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {} bytes exceeds limit", payload.len()),
        ));
    }
    writer.write_all(&(payload.len() as u32).to_be_bytes())?;
    writer.write_all(payload)?;
    writer.flush()
}

/// Reads one frame. Truncation surfaces as `UnexpectedEof`, an oversized
/// length prefix as `InvalidData`.
pub fn read_frame(reader: &mut impl Read) -> io::Result<Vec<u8>> {
    let mut len_bytes = [0u8; 4];
    reader.read_exact(&mut len_bytes)?;
    let len = u32::from_be_bytes(len_bytes);
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("declared frame length {len} exceeds limit"),
        ));
    }
    let mut payload = vec![0u8; len as usize];
    reader.read_exact(&mut payload)?;
    Ok(payload)
}

pub(crate) fn classify_io(err: &io::Error) -> ErrorClass {
    match err.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => ErrorClass::Timeout,
        _ => ErrorClass::TransientNetwork,
    }
}

/// Blocking request/response client over one TCP connection.
pub struct FrameClient {
    stream: TcpStream,
    next_id: u64,
}

impl FrameClient {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, ToolhostError> {
        let transport_err = |detail: String, class: ErrorClass| ToolhostError::Transport {
            class,
            detail,
        };
        let sock_addr = addr
            .parse()
            .map_err(|e| transport_err(format!("bad address \"{addr}\": {e}"), ErrorClass::TransientNetwork))?;
        let stream = TcpStream::connect_timeout(&sock_addr, timeout)
            .map_err(|e| transport_err(format!("connect {addr}: {e}"), classify_io(&e)))?;
        stream
            .set_read_timeout(Some(timeout))
            .and_then(|_| stream.set_write_timeout(Some(timeout)))
            .map_err(|e| transport_err(format!("socket setup: {e}"), classify_io(&e)))?;
        Ok(Self { stream, next_id: 0 })
    }

    /// Sends one request and waits for its response. Error frames come back
    /// as `ToolhostError::Transport` carrying the frame's class.
    pub fn call(
        &mut self,
        method: &str,
        params: serde_json::Value,
    ) -> Result<serde_json::Value, ToolhostError> {
        self.next_id += 1;
        let id = self.next_id;
        let request = Request {
            id,
            method: method.to_string(),
            params,
        };
        let payload = serde_json::to_vec(&request).expect("request serialization cannot fail");
        let io_err = |e: io::Error| ToolhostError::Transport {
            class: classify_io(&e),
            detail: format!("{method}: {e}"),
        };
        write_frame(&mut self.stream, &payload).map_err(io_err)?;
        let reply = read_frame(&mut self.stream).map_err(io_err)?;
        let response: Response =
            serde_json::from_slice(&reply).map_err(|e| ToolhostError::Transport {
                class: ErrorClass::ProviderError,
                detail: format!("malformed response frame: {e}"),
            })?;
        if response.id != id {
            return Err(ToolhostError::Transport {
                class: ErrorClass::ProviderError,
                detail: format!("response id {} does not match request id {id}", response.id),
            });
        }
        if let Some(error) = response.error {
            return Err(ToolhostError::Transport {
                class: error.class,
                detail: error.message,
            });
        }
        response.result.ok_or_else(|| ToolhostError::Transport {
            class: ErrorClass::ProviderError,
            detail: "response carries neither result nor error".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_round_trip() {
        let mut buffer = Vec::new();
        write_frame(&mut buffer, b"{\"id\":1}").unwrap();
        write_frame(&mut buffer, b"").unwrap();
        let mut cursor = io::Cursor::new(buffer);
        assert_eq!(read_frame(&mut cursor).unwrap(), b"{\"id\":1}");
        assert_eq!(read_frame(&mut cursor).unwrap(), b"");
    }

    #[test]
    fn length_prefix_is_big_endian() {
        let mut buffer = Vec::new();
        write_frame(&mut buffer, b"abcd").unwrap();
        assert_eq!(&buffer[..4], &[0, 0, 0, 4]);
    }

    #[test]
    fn truncated_frame_is_unexpected_eof() {
        let mut buffer = Vec::new();
        write_frame(&mut buffer, b"abcdef").unwrap();
        buffer.truncate(7);
        let mut cursor = io::Cursor::new(buffer);
        let err = read_frame(&mut cursor).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::UnexpectedEof);
    }

    #[test]
    fn oversized_declared_length_is_rejected() {
        let mut buffer = (MAX_FRAME_LEN + 1).to_be_bytes().to_vec();
        buffer.extend_from_slice(b"x");
        let mut cursor = io::Cursor::new(buffer);
        let err = read_frame(&mut cursor).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::InvalidData);
    }

    #[test]
    fn wire_result_error_without_class_stays_an_error() {
        let wire = WireToolResult {
            call_id: "c1".to_string(),
            status: "error".to_string(),
            class: None,
            content: "broken peer".to_string(),
            duration_ms: 3,
            content_tokens: 2,
        };
        let result = wire.into_result();
        assert_eq!(
            result.status,
            ToolStatus::Error(ErrorClass::ProviderError)
        );
    }

    #[test]
    fn wire_result_round_trips_equality_fields() {
        let original = ToolResult {
            call_id: "c7".to_string(),
            status: ToolStatus::Error(ErrorClass::Timeout),
            content: "slow gateway".to_string(),
            duration: Duration::from_millis(1500),
            content_tokens: 2,
        };
        let back = WireToolResult::from_result(&original).into_result();
        assert_eq!(back.call_id, original.call_id);
        assert_eq!(back.status, original.status);
        assert_eq!(back.content, original.content);
        assert_eq!(back.content_tokens, original.content_tokens);
    }
}
