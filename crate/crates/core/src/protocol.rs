//! JSON messages exchanged between rank 0, the gateway and clients.
//!
//! Every message is one JSON object on its own line, tagged by `"type"`.
//!
//! | type       | direction            | body                                            |
//! |------------|----------------------|-------------------------------------------------|
//! | `register` | simulation → gateway | `protocol`, `name`, `ranks`, `sources`, `token?` |
//! | `registered` | gateway → simulation | `session`                                     |
//! | `frame`    | simulation → gateway → client | `step`, `image`, `metadata`            |
//! | `steer`    | client → gateway → simulation | `payload` (relayed byte for byte)      |
//! | `list`     | client → gateway, reply gateway → client | reply carries `sessions`    |
//! | `observe`  | client → gateway, reply gateway → client | `session`, `token?`         |
//! | `exit`     | simulation → gateway (session ends), client → gateway (disconnect) |   |
//! | `error`    | any direction        | `message`                                       |

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub name: String,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub protocol: u32,
    pub name: String,
    pub ranks: usize,
    pub sources: Vec<SourceInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

impl RegisterMessage {
    pub fn new(name: impl Into<String>, ranks: usize, sources: Vec<SourceInfo>) -> Self {
        Self {
            kind: "register".into(),
            protocol: PROTOCOL_VERSION,
            name: name.into(),
            ranks,
            sources,
            token: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImageEncoding {
    #[serde(rename = "raw-rgba8")]
    RawRgba8,
    #[serde(rename = "png")]
    Png,
}

impl ImageEncoding {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImageEncoding::RawRgba8 => "raw-rgba8",
            ImageEncoding::Png => "png",
        }
    }
}

impl std::str::FromStr for ImageEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw-rgba8" | "raw" => Ok(Self::RawRgba8),
            "png" => Ok(Self::Png),
            other => Err(format!("unknown image encoding '{other}'")),
        }
    }
}

/// Encoded frame. Pixels are premultiplied RGBA, 8 bits per channel, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePayload {
    pub width: usize,
    pub height: usize,
    pub encoding: ImageEncoding,
    pub quality: u8,
    /// Base64 of the encoded bytes.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    #[serde(rename = "type")]
    pub kind: String,
    pub step: u64,
    pub image: ImagePayload,
    pub metadata: Value,
}

impl FrameMessage {
    pub fn new(step: u64, image: ImagePayload, metadata: Value) -> Self {
        Self {
            kind: "frame".into(),
            step,
            image,
            metadata,
        }
    }
}

/// Session entry in a `list` reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: u64,
    pub name: String,
    pub ranks: usize,
    pub sources: Vec<SourceInfo>,
}

/// Value of the `type` field, if the line is a JSON object carrying one.
pub fn message_type(value: &Value) -> Option<&str> {
    value.get("type").and_then(Value::as_str)
}

pub fn error_line(message: impl std::fmt::Display) -> String {
    serde_json::json!({"type": "error", "message": message.to_string()}).to_string()
}
