//! Core of the Clicktionary platform: the two-player reveal game, its wire
//! protocol, scripted bot players, and the analysis pipeline that turns bubble
//! logs into importance maps and compares them against external heatmaps.

pub mod analysis;
pub mod bots;
pub mod game;
pub mod lobby;
pub mod maps;
pub mod protocol;
pub mod seed;
pub mod stats;
pub mod storage;

pub use game::{
    Bubble, GameConfig, GameError, GameSession, ImageRecord, Manifest, Outcome, PlayerId,
    RoundState, Verdict,
};
