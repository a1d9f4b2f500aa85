//! Wire messages and their framing: a 4-byte big-endian length prefix followed
//! by a UTF-8 JSON body `{"kind": .., "seq": .., "sent_at": .., "payload": {..}}`.

use std::fmt;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::game::{Outcome, Rect, Verdict};
use crate::lobby::LeaderboardEntry;

/// Upper bound on a single frame body. A full 300×300 RGB image in base64
/// is about 360 KB.
pub const MAX_FRAME_LEN: usize = 4 << 20;

pub const KINDS: [&str; 14] = [
    "join_lobby",
    "paired",
    "round_start",
    "cursor_move",
    "patch_revealed",
    "guess_submit",
    "guess_result",
    "skip",
    "score_update",
    "activity_notice",
    "round_end",
    "game_end",
    "leaderboard",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    Bubbling,
    Typing,
    Correct,
    Incorrect,
    Considering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    RoleViolation,
    SessionNotFound,
    MalformedMessage,
    UnexpectedMessage,
    RoundFinished,
    NoActiveRound,
    OutOfBounds,
    AlreadyPlayed,
    SequenceViolation,
    Internal,
}

/// Raw RGB bytes, carried as base64 on the wire.
#[derive(Clone, PartialEq, Eq)]
pub struct Pixels(pub Vec<u8>);

impl fmt::Debug for Pixels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pixels({} bytes)", self.0.len())
    }
}

impl Serialize for Pixels {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Pixels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s.as_bytes()).map(Pixels).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BubbleInfo {
    pub seq: u32,
    pub x: u32,
    pub y: u32,
    pub extent: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Body {
    JoinLobby {
        player_id: String,
    },
    Paired {
        session_id: String,
        partner: String,
        bot: bool,
        total_rounds: u32,
    },
    /// `image` is only ever filled in for the teacher.
    RoundStart {
        round_index: u32,
        total_rounds: u32,
        role: Role,
        width: u32,
        height: u32,
        image: Option<Pixels>,
    },
    CursorMove {
        x: i64,
        y: i64,
    },
    /// One revealed block of `w×h` RGB pixels; student only.
    PatchRevealed {
        seq: u32,
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        pixels: Option<Pixels>,
    },
    GuessSubmit {
        text: String,
    },
    GuessResult {
        text: String,
        verdict: Verdict,
    },
    Skip {},
    /// Sent to both players after every bubble; the teacher draws its overlay
    /// from `bubble`.
    ScoreUpdate {
        round_index: u32,
        round_bubbles: u32,
        total_score: u64,
        bubble: Option<BubbleInfo>,
    },
    ActivityNotice {
        actor: Role,
        activity: Activity,
    },
    RoundEnd {
        round_index: u32,
        outcome: Outcome,
        bubbles_used: u32,
        round_score: u64,
        total_score: u64,
        category: String,
    },
    GameEnd {
        final_score: u64,
        rounds_played: u32,
        rank: Option<usize>,
    },
    /// A client asks for the board with an empty payload.
    Leaderboard {
        #[serde(default)]
        entries: Vec<LeaderboardEntry>,
        mean_score: Option<f64>,
    },
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::JoinLobby { .. } => "join_lobby",
            Body::Paired { .. } => "paired",
            Body::RoundStart { .. } => "round_start",
            Body::CursorMove { .. } => "cursor_move",
            Body::PatchRevealed { .. } => "patch_revealed",
            Body::GuessSubmit { .. } => "guess_submit",
            Body::GuessResult { .. } => "guess_result",
            Body::Skip {} => "skip",
            Body::ScoreUpdate { .. } => "score_update",
            Body::ActivityNotice { .. } => "activity_notice",
            Body::RoundEnd { .. } => "round_end",
            Body::GameEnd { .. } => "game_end",
            Body::Leaderboard { .. } => "leaderboard",
            Body::Error { .. } => "error",
        }
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Body::Error {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub sent_at: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    ShortFrame,
    LengthMismatch,
    FrameTooLarge,
    InvalidUtf8,
    InvalidJson,
    UnknownKind,
    MissingField,
    InvalidField,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed message ({code:?}): {detail}")]
pub struct MalformedMessage {
    pub code: ReasonCode,
    pub detail: String,
}

impl MalformedMessage {
    fn new(code: ReasonCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

/// JSON body of a message, without the length prefix.
pub fn encode_body(m: &Message) -> Vec<u8> {
    serde_json::to_vec(m).expect("message serialization is infallible")
}

/// Full frame: big-endian `u32` length, then the body.
pub fn encode_message(m: &Message) -> Vec<u8> {
    let body = encode_body(m);
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decodes exactly one frame.
pub fn decode_message(bytes: &[u8]) -> Result<Message, MalformedMessage> {
    if bytes.len() < 4 {
        return Err(MalformedMessage::new(ReasonCode::ShortFrame, "frame shorter than its length prefix"));
    }
    let declared = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
    if declared > MAX_FRAME_LEN {
        return Err(MalformedMessage::new(ReasonCode::FrameTooLarge, format!("{declared} bytes")));
    }
    if declared != bytes.len() - 4 {
        return Err(MalformedMessage::new(
            ReasonCode::LengthMismatch,
            format!("prefix says {declared} bytes, frame holds {}", bytes.len() - 4),
        ));
    }
    decode_body(&bytes[4..])
}

pub fn decode_body(body: &[u8]) -> Result<Message, MalformedMessage> {
    let text = std::str::from_utf8(body).map_err(|e| MalformedMessage::new(ReasonCode::InvalidUtf8, e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| MalformedMessage::new(ReasonCode::InvalidJson, e.to_string()))?;
    let kind = match value.get("kind") {
        Some(serde_json::Value::String(k)) => k.as_str(),
        Some(_) => return Err(MalformedMessage::new(ReasonCode::InvalidField, "kind must be a string")),
        None => return Err(MalformedMessage::new(ReasonCode::MissingField, "missing field `kind`")),
    };
    if !KINDS.contains(&kind) {
        return Err(MalformedMessage::new(ReasonCode::UnknownKind, format!("unknown kind {kind:?}")));
    }
    if value.get("payload").is_none() {
        return Err(MalformedMessage::new(ReasonCode::MissingField, "missing field `payload`"));
    }
    serde_json::from_value(value).map_err(|e| {
        let detail = e.to_string();
        let code = if detail.contains("missing field") {
            ReasonCode::MissingField
        } else {
            ReasonCode::InvalidField
        };
        MalformedMessage::new(code, detail)
    })
}

/// Incremental frame splitter for a byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete message, if the buffer holds one. An oversized length
    /// prefix is reported as an error; the stream cannot recover from it.
    pub fn next_message(&mut self) -> Option<Result<Message, MalformedMessage>> {
        if self.buf.len() < 4 {
            return None;
        }
        let len = u32::from_be_bytes(self.buf[..4].try_into().unwrap()) as usize;
        if len > MAX_FRAME_LEN {
            return Some(Err(MalformedMessage::new(ReasonCode::FrameTooLarge, format!("{len} bytes"))));
        }
        if self.buf.len() < 4 + len {
            return None;
        }
        let frame: Vec<u8> = self.buf.drain(..4 + len).collect();
        Some(decode_body(&frame[4..]))
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Stamps outgoing messages with a gap-free per-connection sequence number.
#[derive(Debug, Default, Clone)]
pub struct Outbox {
    next_seq: u64,
}

impl Outbox {
    pub fn stamp(&mut self, body: Body, now: u64) -> Message {
        let seq = self.next_seq;
        self.next_seq += 1;
        Message { seq, sent_at: now, body }
    }
}

/// Enforces strictly increasing sequence numbers on an inbound stream.
#[derive(Debug, Default, Clone)]
pub struct InboundSeq {
    last: Option<u64>,
}

impl InboundSeq {
    pub fn accept(&mut self, seq: u64) -> bool {
        match self.last {
            Some(prev) if seq <= prev => false,
            _ => {
                self.last = Some(seq);
                true
            }
        }
    }
}
