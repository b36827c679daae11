//! Wire format.
//!
//! Client to server, one binary WebSocket message per frame:
//!
//! ```text
//! u32 LE  header length N
//! N bytes JSON header {"id": u64, "format": "jpeg" | "gray8", "width": u32, "height": u32}
//! rest    payload: encoded JPEG, or width * height gray bytes row-major
//! ```
//!
//! Server to client, one text message per reply: a [`FrameResult`] or an
//! [`ErrorReply`] as JSON.

use ferkit::{Emotion, FaceBox, ImagePlane};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Jpeg,
    Gray8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameHeader {
    pub id: u64,
    pub format: PixelFormat,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadMessage,
    FrameTooLarge,
    NotReady,
    DecodeFailed,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub id: Option<u64>,
    pub error: ErrorCode,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireBox {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

impl From<FaceBox> for WireBox {
    fn from(b: FaceBox) -> Self {
        WireBox {
            x: b.x,
            y: b.y,
            side: b.side,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub emotion: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub id: u64,
    pub face: Option<WireBox>,
    pub raw_emotion: Option<String>,
    pub current_emotion: Option<String>,
    /// Canonical emotion order; empty when no face was found.
    pub scores: Vec<LabelScore>,
    pub latency_ms: f64,
    /// Frames replaced in the mailbox before this one was picked up.
    pub dropped: u64,
}

pub fn emotion_name(e: Option<Emotion>) -> Option<String> {
    e.map(|e| e.name().to_string())
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub id: Option<u64>,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, id: Option<u64>, message: impl Into<String>) -> Self {
        ProtocolError {
            code,
            id,
            message: message.into(),
        }
    }

    pub fn reply(&self) -> ErrorReply {
        ErrorReply {
            id: self.id,
            error: self.code,
            message: self.message.clone(),
        }
    }
}

/// Frame message as the client sends it.
pub fn encode_frame(header: &FrameHeader, payload: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serialises");
    let mut out = Vec::with_capacity(4 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(payload);
    out
}

/// Split a frame message into header and payload, validating sizes.
pub fn split_frame(message: &[u8], max_pixels: usize) -> Result<(FrameHeader, &[u8]), ProtocolError> {
    let bad = |m: String| ProtocolError::new(ErrorCode::BadMessage, None, m);
    let len_bytes: [u8; 4] = message
        .get(..4)
        .ok_or_else(|| bad("message shorter than the length prefix".into()))?
        .try_into()
        .unwrap();
    let n = u32::from_le_bytes(len_bytes) as usize;
    let json = message
        .get(4..4 + n)
        .ok_or_else(|| bad(format!("header length {n} exceeds message")))?;
    let header: FrameHeader = serde_json::from_slice(json).map_err(|e| bad(format!("bad header: {e}")))?;
    let payload = &message[4 + n..];
    let pixels = header.width as usize * header.height as usize;
    if pixels == 0 {
        return Err(ProtocolError::new(ErrorCode::BadMessage, Some(header.id), "empty frame"));
    }
    if pixels > max_pixels {
        return Err(ProtocolError::new(
            ErrorCode::FrameTooLarge,
            Some(header.id),
            format!("{}x{} exceeds {max_pixels} pixels", header.width, header.height),
        ));
    }
    if header.format == PixelFormat::Gray8 && payload.len() != pixels {
        return Err(ProtocolError::new(
            ErrorCode::BadMessage,
            Some(header.id),
            format!("gray8 payload has {} bytes, expected {pixels}", payload.len()),
        ));
    }
    Ok((header, payload))
}

pub fn decode_payload(header: &FrameHeader, payload: &[u8]) -> Result<ImagePlane, ProtocolError> {
    let fail = |m: String| ProtocolError::new(ErrorCode::DecodeFailed, Some(header.id), m);
    let (w, h) = (header.width as usize, header.height as usize);
    let img = match header.format {
        PixelFormat::Gray8 => ImagePlane::gray(w, h, payload.to_vec()).map_err(|e| fail(e.to_string()))?,
        PixelFormat::Jpeg => ImagePlane::decode(payload).map_err(|e| fail(e.to_string()))?,
    };
    if (img.width(), img.height()) != (w, h) {
        return Err(fail(format!(
            "decoded {}x{} but header says {w}x{h}",
            img.width(),
            img.height()
        )));
    }
    Ok(img)
}
