//! Waiting room, FIFO pairing with bot fallback, and the top-10 leaderboard.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::PlayerId;

/// How long a lone player waits before being handed a bot partner.
pub const BOT_FALLBACK_MS: u64 = 120_000;
pub const LEADERBOARD_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LobbyError {
    #[error("player {0} has already played")]
    AlreadyPlayed(PlayerId),
    #[error("leaderboard: {0}")]
    Leaderboard(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketStatus {
    Waiting,
    Paired,
    BotAssigned,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LobbyTicket {
    pub player: PlayerId,
    pub entered_at: u64,
    pub status: TicketStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingEvent {
    /// `first` entered the lobby before `second` and teaches round 0.
    Paired { first: PlayerId, second: PlayerId },
    /// Nobody showed up in time; the session is played against a bot and is
    /// excluded from analysis.
    BotAssigned { player: PlayerId, waited_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TeamLabel {
    pub first: PlayerId,
    pub second: PlayerId,
}

impl TeamLabel {
    pub fn new(first: PlayerId, second: PlayerId) -> Self {
        Self { first, second }
    }
}

impl fmt::Display for TeamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}&{}", self.first, self.second)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub team: String,
    pub score: u64,
    pub completed_at: u64,
}

/// At most ten entries, ascending by score; ties go to the earlier finisher.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Leaderboard {
    entries: Vec<LeaderboardEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoardRow {
    rank: usize,
    team: String,
    score: u64,
    completed_at: u64,
}

impl Leaderboard {
    pub fn entries(&self) -> &[LeaderboardEntry] {
        &self.entries
    }

    /// Inserts the result if it makes the top ten and returns its 1-based rank.
    pub fn record_result(&mut self, team: &TeamLabel, score: u64, now: u64) -> Option<usize> {
        let pos = self
            .entries
            .iter()
            .position(|e| (e.score, e.completed_at) > (score, now))
            .unwrap_or(self.entries.len());
        if pos >= LEADERBOARD_SIZE {
            return None;
        }
        self.entries.insert(
            pos,
            LeaderboardEntry {
                team: team.to_string(),
                score,
                completed_at: now,
            },
        );
        self.entries.truncate(LEADERBOARD_SIZE);
        Some(pos + 1)
    }

    /// Arithmetic mean of the board's scores, shown in game as the
    /// "average of the top 10".
    pub fn mean_score(&self) -> Option<f64> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.iter().map(|e| e.score as f64).sum::<f64>() / self.entries.len() as f64)
        }
    }

    /// CSV with header `rank,team,score,completed_at`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LobbyError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["rank", "team", "score", "completed_at"])
            .map_err(|e| LobbyError::Leaderboard(e.to_string()))?;
        for (i, e) in self.entries.iter().enumerate() {
            w.serialize(BoardRow {
                rank: i + 1,
                team: e.team.clone(),
                score: e.score,
                completed_at: e.completed_at,
            })
            .map_err(|e| LobbyError::Leaderboard(e.to_string()))?;
        }
        w.flush().map_err(|e| LobbyError::Leaderboard(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LobbyError> {
        let mut board = Self::default();
        for row in csv::Reader::from_reader(input).deserialize::<BoardRow>() {
            let row = row.map_err(|e| LobbyError::Leaderboard(e.to_string()))?;
            board.entries.push(LeaderboardEntry {
                team: row.team,
                score: row.score,
                completed_at: row.completed_at,
            });
        }
        board.entries.sort_by_key(|e| (e.score, e.completed_at));
        board.entries.truncate(LEADERBOARD_SIZE);
        Ok(board)
    }
}

/// Lobby state. One owner mutates it; callers serialize access.
#[derive(Debug, Clone)]
pub struct Lobby {
    queue: VecDeque<LobbyTicket>,
    tickets: HashMap<PlayerId, LobbyTicket>,
    played: HashSet<PlayerId>,
    pub leaderboard: Leaderboard,
    wait_limit_ms: u64,
}

impl Default for Lobby {
    fn default() -> Self {
        Self::new(BOT_FALLBACK_MS)
    }
}

impl Lobby {
    pub fn new(wait_limit_ms: u64) -> Self {
        Self {
            queue: VecDeque::new(),
            tickets: HashMap::new(),
            played: HashSet::new(),
            leaderboard: Leaderboard::default(),
            wait_limit_ms,
        }
    }

    /// Marks players as having played already (e.g. restored from logs).
    pub fn mark_played<I: IntoIterator<Item = PlayerId>>(&mut self, players: I) {
        self.played.extend(players);
    }

    /// Puts a fresh player in the queue and returns the ticket together with
    /// a snapshot of the current leaderboard.
    pub fn enter_lobby(&mut self, player: PlayerId, now: u64) -> Result<(LobbyTicket, Leaderboard), LobbyError> {
        if !self.played.insert(player.clone()) {
            return Err(LobbyError::AlreadyPlayed(player));
        }
        let ticket = LobbyTicket {
            player: player.clone(),
            entered_at: now,
            status: TicketStatus::Waiting,
        };
        self.queue.push_back(ticket.clone());
        self.tickets.insert(player, ticket.clone());
        Ok((ticket, self.leaderboard.clone()))
    }

    /// Withdraws a waiting player (e.g. their connection dropped). They have
    /// not played yet, so they may enter again later.
    pub fn leave(&mut self, player: &PlayerId) -> bool {
        let before = self.queue.len();
        self.queue.retain(|t| &t.player != player);
        if self.tickets.get(player).is_some_and(|t| t.status == TicketStatus::Waiting) {
            self.tickets.remove(player);
            self.played.remove(player);
        }
        self.queue.len() != before
    }

    /// Pairs waiting players two at a time in arrival order, then hands any
    /// player who has waited longer than the limit to a bot.
    pub fn match_tick(&mut self, now: u64) -> Vec<PairingEvent> {
        let mut events = Vec::new();
        while self.queue.len() >= 2 {
            let a = self.queue.pop_front().unwrap();
            let b = self.queue.pop_front().unwrap();
            self.set_status(&a.player, TicketStatus::Paired);
            self.set_status(&b.player, TicketStatus::Paired);
            events.push(PairingEvent::Paired {
                first: a.player,
                second: b.player,
            });
        }
        let limit = self.wait_limit_ms;
        let mut still_waiting = VecDeque::new();
        while let Some(t) = self.queue.pop_front() {
            let waited = now.saturating_sub(t.entered_at);
            if waited > limit {
                self.set_status(&t.player, TicketStatus::BotAssigned);
                events.push(PairingEvent::BotAssigned {
                    player: t.player,
                    waited_ms: waited,
                });
            } else {
                still_waiting.push_back(t);
            }
        }
        self.queue = still_waiting;
        events
    }

    fn set_status(&mut self, player: &PlayerId, status: TicketStatus) {
        if let Some(t) = self.tickets.get_mut(player) {
            t.status = status;
        }
    }

    pub fn ticket(&self, player: &PlayerId) -> Option<&LobbyTicket> {
        self.tickets.get(player)
    }

    pub fn waiting(&self) -> impl Iterator<Item = &LobbyTicket> {
        self.queue.iter()
    }

    pub fn record_result(&mut self, team: &TeamLabel, score: u64, now: u64) -> Option<usize> {
        self.leaderboard.record_result(team, score, now)
    }
}
