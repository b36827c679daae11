//! Real-time emotion recognition over WebSocket.
//!
//! Each connection streams frames in, gets one JSON reply per processed
//! frame, and keeps its own five-frame smoothing window. See [`protocol`]
//! for the message layout.

pub mod engine;
pub mod protocol;
pub mod server;
pub mod window;

pub use engine::{empty_slot, process_frame, ready_slot, EngineSlot, ServiceError};
pub use protocol::{encode_frame, ErrorCode, ErrorReply, FrameHeader, FrameResult, PixelFormat};
pub use server::{bind, serve, ServeConfig};
pub use window::{mode, EmotionWindow, WINDOW_LEN};
