//! Session wire protocol: message schema and framing, and the per-session
//! dispatcher that the server and the bot harness both drive.

pub mod message;
pub mod transport;

pub use message::{
    decode_body, decode_message, encode_body, encode_message, Activity, BubbleInfo, Body, ErrorCode, FrameDecoder,
    InboundSeq, MalformedMessage, Message, Outbox, Pixels, ReasonCode, Role, KINDS, MAX_FRAME_LEN,
};
pub use transport::{
    crop, MemoryPixels, NoPixels, Outbound, PixelSource, ProtocolError, SessionTransport, Status, CURSOR_RATE_LIMIT,
    RECONNECT_GRACE_MS,
};
