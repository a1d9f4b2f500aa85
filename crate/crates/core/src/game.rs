//! Server-authoritative rules engine for one game: rounds, bubble placement,
//! guessing and scoring.
//!
//! Every transition is a synchronous method on plain state. Randomness enters
//! only through the `Rng` handed to the methods that schedule bubbles, so the
//! same event sequence with the same seed reproduces identical state.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("invalid game config: {0}")]
    InvalidConfig(String),
    #[error("invalid image record {id}: {reason}")]
    InvalidImage { id: String, reason: String },
    #[error("all rounds of this game have been played")]
    GameComplete,
    #[error("the previous round is still in progress")]
    RoundInProgress,
    #[error("no round is in progress")]
    NoActiveRound,
    #[error("only the teacher may do this")]
    NotTeacher,
    #[error("only the student may do this")]
    NotStudent,
    #[error("the round has already finished")]
    RoundFinished,
    #[error("({x}, {y}) lies outside the {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },
    #[error("unknown image {0}")]
    UnknownImage(String),
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("inconsistent recorded round: {0}")]
    InvalidRecord(String),
}

pub type Result<T, E = GameError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub bubble_size: u32,
    pub min_interval_ms: u64,
    pub max_interval_ms: u64,
    pub rounds_per_game: u32,
    pub skip_penalty: u64,
    /// Maximum Chebyshev distance between consecutive bubble centers.
    pub adjacency_radius: u32,
    pub tick_resolution_ms: u64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            image_width: 300,
            image_height: 300,
            bubble_size: 18,
            min_interval_ms: 50,
            max_interval_ms: 300,
            rounds_per_game: 110,
            skip_penalty: 100,
            adjacency_radius: 9,
            tick_resolution_ms: 10,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GameError::InvalidConfig(msg.to_string()));
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image dimensions must be positive");
        }
        if self.bubble_size == 0 || self.bubble_size > self.image_width.min(self.image_height) {
            return bad("bubble_size must be in 1..=min(image_width, image_height)");
        }
        if self.min_interval_ms == 0 || self.min_interval_ms > self.max_interval_ms {
            return bad("intervals must satisfy 0 < min_interval <= max_interval");
        }
        if self.rounds_per_game == 0 {
            return bad("rounds_per_game must be at least 1");
        }
        if self.tick_resolution_ms == 0 {
            return bad("tick_resolution must be positive");
        }
        Ok(())
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.image_width as i64 && y < self.image_height as i64
    }

    /// The pixel extent of a bubble centered at `(x, y)`, truncated at the
    /// image border. An even side `s` spans `[c - s/2, c + s/2 - 1]`.
    pub fn bubble_extent(&self, x: u32, y: u32) -> Rect {
        extent(x, y, self.bubble_size, self.image_width, self.image_height)
    }

    fn draw_interval<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(self.min_interval_ms..=self.max_interval_ms)
    }
}

/// Axis-aligned pixel rectangle: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.w && y < self.y + self.h
    }
}

pub fn extent(cx: u32, cy: u32, size: u32, width: u32, height: u32) -> Rect {
    let axis = |c: u32, limit: u32| {
        let lo = c as i64 - (size / 2) as i64;
        let hi = lo + size as i64; // exclusive
        let lo = lo.max(0);
        let hi = hi.min(limit as i64);
        (lo as u32, (hi - lo).max(0) as u32)
    };
    let (x, w) = axis(cx, width);
    let (y, h) = axis(cy, height);
    Rect { x, y, w, h }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub String);

impl PlayerId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PlayerId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn normalize_label(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRecord {
    pub id: String,
    pub category: String,
    pub accepted_labels: BTreeSet<String>,
    pub path: String,
}

impl ImageRecord {
    /// Builds a record, normalizing every label and adding the category to the
    /// accepted set.
    pub fn new<I, S>(id: impl Into<String>, category: impl Into<String>, labels: I, path: impl Into<String>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let id = id.into();
        let category = category.into();
        let normalized_category = normalize_label(&category);
        if normalized_category.is_empty() {
            return Err(GameError::InvalidImage {
                id,
                reason: "empty category".into(),
            });
        }
        let mut accepted: BTreeSet<String> = labels
            .into_iter()
            .map(|l| normalize_label(l.as_ref()))
            .filter(|l| !l.is_empty())
            .collect();
        accepted.insert(normalized_category);
        Ok(Self {
            id,
            category,
            accepted_labels: accepted,
            path: path.into(),
        })
    }

    pub fn accepts(&self, guess: &str) -> bool {
        self.accepted_labels.contains(&normalize_label(guess))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: String,
    category: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    path: String,
}

/// The image manifest: one JSON object per line with fields
/// `id`, `category`, `labels` and `path`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    images: Vec<ImageRecord>,
    index: HashMap<String, usize>,
}

impl Manifest {
    pub fn new(images: Vec<ImageRecord>) -> Result<Self> {
        let mut index = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            if index.insert(img.id.clone(), i).is_some() {
                return Err(GameError::InvalidImage {
                    id: img.id.clone(),
                    reason: "duplicate image id".into(),
                });
            }
        }
        Ok(Self { images, index })
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut images = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GameError::Manifest {
                line: n + 1,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ManifestLine = serde_json::from_str(&line).map_err(|e| GameError::Manifest {
                line: n + 1,
                reason: e.to_string(),
            })?;
            images.push(ImageRecord::new(rec.id, rec.category, rec.labels, rec.path)?);
        }
        Self::new(images)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref()).map_err(|e| GameError::Manifest {
            line: 0,
            reason: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for img in &self.images {
            let line = ManifestLine {
                id: img.id.clone(),
                category: img.category.clone(),
                labels: img.accepted_labels.iter().cloned().collect(),
                path: img.path.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ImageRecord> {
        self.index.get(id).map(|&i| &self.images[i])
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|i| i.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Categories other than the image's own, in manifest order, deduplicated.
    pub fn wrong_labels(&self, image_id: &str) -> Vec<String> {
        let own = self.get(image_id).map(|i| normalize_label(&i.category));
        let mut seen = BTreeSet::new();
        self.images
            .iter()
            .map(|i| normalize_label(&i.category))
            .filter(|c| Some(c) != own.as_ref() && seen.insert(c.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bubble {
    pub x: u32,
    pub y: u32,
    /// Milliseconds since the round started.
    pub placed_at: u64,
    pub seq: u32,
}

impl Bubble {
    pub fn chebyshev(&self, other: &Bubble) -> u32 {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    InProgress,
    Recognized,
    Skipped,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::InProgress
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::InProgress => "in_progress",
            Outcome::Recognized => "recognized",
            Outcome::Skipped => "skipped",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guess {
    pub text: String,
    pub verdict: Verdict,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundState {
    pub round_index: u32,
    pub image_id: String,
    pub teacher: PlayerId,
    pub student: PlayerId,
    pub started_at: u64,
    pub bubbles: Vec<Bubble>,
    pub bubbling_active: bool,
    pub next_bubble_due: Option<u64>,
    pub cursor: Option<(u32, u32)>,
    pub guesses: Vec<Guess>,
    pub outcome: Outcome,
}

impl RoundState {
    pub fn new(round_index: u32, image_id: String, teacher: PlayerId, student: PlayerId, now: u64) -> Self {
        Self {
            round_index,
            image_id,
            teacher,
            student,
            started_at: now,
            bubbles: Vec::new(),
            bubbling_active: false,
            next_bubble_due: None,
            cursor: None,
            guesses: Vec::new(),
            outcome: Outcome::InProgress,
        }
    }

    fn ensure_open(&self) -> Result<()> {
        if self.outcome.is_terminal() {
            Err(GameError::RoundFinished)
        } else {
            Ok(())
        }
    }

    fn elapsed(&self, now: u64) -> u64 {
        now.saturating_sub(self.started_at)
    }

    /// Records the teacher's cursor. The first in-bounds press starts bubbling
    /// and places the first bubble immediately.
    pub fn cursor_update<R: Rng + ?Sized>(
        &mut self,
        cfg: &GameConfig,
        caller: &PlayerId,
        x: i64,
        y: i64,
        now: u64,
        rng: &mut R,
    ) -> Result<Option<Bubble>> {
        if caller != &self.teacher {
            return Err(GameError::NotTeacher);
        }
        self.ensure_open()?;
        if !cfg.in_bounds(x, y) {
            return Err(GameError::OutOfBounds {
                x,
                y,
                width: cfg.image_width,
                height: cfg.image_height,
            });
        }
        let (x, y) = (x as u32, y as u32);
        self.cursor = Some((x, y));
        if self.bubbling_active {
            return Ok(None);
        }
        self.bubbling_active = true;
        let bubble = Bubble {
            x,
            y,
            placed_at: self.elapsed(now),
            seq: 0,
        };
        self.bubbles.push(bubble);
        self.next_bubble_due = Some(now + cfg.draw_interval(rng));
        Ok(Some(bubble))
    }

    /// Places at most one bubble when one is due. The bubble goes under the
    /// cursor, pulled back per axis to within `adjacency_radius` of the
    /// previous bubble.
    pub fn bubble_tick<R: Rng + ?Sized>(&mut self, cfg: &GameConfig, now: u64, rng: &mut R) -> Option<Bubble> {
        if self.outcome.is_terminal() || !self.bubbling_active {
            return None;
        }
        let due = self.next_bubble_due?;
        if now < due {
            return None;
        }
        let (cx, cy) = self.cursor?;
        let prev = *self.bubbles.last()?;
        let r = cfg.adjacency_radius;
        let clamp = |c: u32, p: u32| c.clamp(p.saturating_sub(r), p.saturating_add(r));
        let bubble = Bubble {
            x: clamp(cx, prev.x),
            y: clamp(cy, prev.y),
            placed_at: self.elapsed(now),
            seq: self.bubbles.len() as u32,
        };
        self.bubbles.push(bubble);
        self.next_bubble_due = Some(now + cfg.draw_interval(rng));
        Some(bubble)
    }

    pub fn submit_guess(&mut self, caller: &PlayerId, image: &ImageRecord, text: &str, now: u64) -> Result<Verdict> {
        if caller != &self.student {
            return Err(GameError::NotStudent);
        }
        self.ensure_open()?;
        if image.id != self.image_id {
            return Err(GameError::UnknownImage(image.id.clone()));
        }
        let verdict = if image.accepts(text) {
            Verdict::Correct
        } else {
            Verdict::Incorrect
        };
        self.guesses.push(Guess {
            text: text.to_string(),
            verdict,
            at: self.elapsed(now),
        });
        if verdict == Verdict::Correct {
            self.finish(Outcome::Recognized);
        }
        Ok(verdict)
    }

    pub fn skip(&mut self, caller: &PlayerId) -> Result<()> {
        if caller != &self.student {
            return Err(GameError::NotStudent);
        }
        self.ensure_open()?;
        self.finish(Outcome::Skipped);
        Ok(())
    }

    fn finish(&mut self, outcome: Outcome) {
        self.outcome = outcome;
        self.bubbling_active = false;
        self.next_bubble_due = None;
    }

    /// Bubble-equivalents this round adds to the score, once it is over.
    pub fn contribution(&self, cfg: &GameConfig) -> Option<u64> {
        let n = self.bubbles.len() as u64;
        match self.outcome {
            Outcome::InProgress => None,
            Outcome::Recognized => Some(n),
            Outcome::Skipped => Some(n + cfg.skip_penalty),
        }
    }

    /// Appends a bubble taken from a log, checking it against the round rules.
    pub fn apply_recorded_bubble(&mut self, cfg: &GameConfig, bubble: Bubble) -> Result<()> {
        self.ensure_open()?;
        if !cfg.in_bounds(bubble.x as i64, bubble.y as i64) {
            return Err(GameError::InvalidRecord(format!("bubble {} out of bounds", bubble.seq)));
        }
        if bubble.seq as usize != self.bubbles.len() {
            return Err(GameError::InvalidRecord(format!(
                "bubble seq {} where {} expected",
                bubble.seq,
                self.bubbles.len()
            )));
        }
        if let Some(prev) = self.bubbles.last() {
            if bubble.chebyshev(prev) > cfg.adjacency_radius || bubble.placed_at < prev.placed_at {
                return Err(GameError::InvalidRecord(format!("bubble {} breaks placement rules", bubble.seq)));
            }
        }
        self.bubbling_active = true;
        self.bubbles.push(bubble);
        Ok(())
    }

    pub fn apply_recorded_guess(&mut self, guess: Guess) -> Result<()> {
        self.ensure_open()?;
        let verdict = guess.verdict;
        self.guesses.push(guess);
        if verdict == Verdict::Correct {
            self.finish(Outcome::Recognized);
        }
        Ok(())
    }

    pub fn apply_recorded_skip(&mut self) -> Result<()> {
        self.ensure_open()?;
        self.finish(Outcome::Skipped);
        Ok(())
    }
}

/// What a round contributed once it closed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round_index: u32,
    pub image_id: String,
    pub outcome: Outcome,
    pub bubbles_used: u32,
    pub round_score: u64,
    pub total_score: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuessOutcome {
    pub verdict: Verdict,
    pub closed: Option<RoundSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameSession {
    pub session_id: String,
    pub player_a: PlayerId,
    pub player_b: PlayerId,
    pub image_sequence: Vec<String>,
    /// Index of the round being played, or of the next round to begin.
    pub round_index: u32,
    pub rounds: Vec<RoundState>,
    pub current: Option<RoundState>,
    pub score: u64,
    pub config: GameConfig,
}

impl GameSession {
    /// Starts a session on a random ordering of `image_ids`, truncated to
    /// `rounds_per_game`.
    pub fn new<R: Rng + ?Sized>(
        session_id: impl Into<String>,
        player_a: PlayerId,
        player_b: PlayerId,
        image_ids: &[String],
        config: GameConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sequence = image_ids.to_vec();
        sequence.shuffle(rng);
        sequence.truncate(config.rounds_per_game as usize);
        Self::with_sequence(session_id, player_a, player_b, sequence, config)
    }

    pub fn with_sequence(
        session_id: impl Into<String>,
        player_a: PlayerId,
        player_b: PlayerId,
        image_sequence: Vec<String>,
        config: GameConfig,
    ) -> Result<Self> {
        config.validate()?;
        if player_a == player_b {
            return Err(GameError::InvalidConfig("a player cannot partner with themselves".into()));
        }
        if image_sequence.is_empty() || image_sequence.len() > config.rounds_per_game as usize {
            return Err(GameError::InvalidConfig(format!(
                "image sequence must hold 1..={} images",
                config.rounds_per_game
            )));
        }
        Ok(Self {
            session_id: session_id.into(),
            player_a,
            player_b,
            image_sequence,
            round_index: 0,
            rounds: Vec::new(),
            current: None,
            score: 0,
            config,
        })
    }

    pub fn total_rounds(&self) -> u32 {
        self.image_sequence.len() as u32
    }

    pub fn is_complete(&self) -> bool {
        self.current.is_none() && self.round_index >= self.total_rounds()
    }

    /// Player A teaches even rounds, player B odd ones.
    pub fn teacher_for(&self, round: u32) -> &PlayerId {
        if round % 2 == 0 {
            &self.player_a
        } else {
            &self.player_b
        }
    }

    pub fn student_for(&self, round: u32) -> &PlayerId {
        if round % 2 == 0 {
            &self.player_b
        } else {
            &self.player_a
        }
    }

    pub fn has_player(&self, p: &PlayerId) -> bool {
        p == &self.player_a || p == &self.player_b
    }

    pub fn partner_of(&self, p: &PlayerId) -> Option<&PlayerId> {
        if p == &self.player_a {
            Some(&self.player_b)
        } else if p == &self.player_b {
            Some(&self.player_a)
        } else {
            None
        }
    }

    pub fn begin_round(&mut self, now: u64) -> Result<&RoundState> {
        if self.current.is_some() {
            return Err(GameError::RoundInProgress);
        }
        if self.round_index >= self.total_rounds() {
            return Err(GameError::GameComplete);
        }
        let k = self.round_index;
        let round = RoundState::new(
            k,
            self.image_sequence[k as usize].clone(),
            self.teacher_for(k).clone(),
            self.student_for(k).clone(),
            now,
        );
        Ok(self.current.insert(round))
    }

    pub fn current_round(&self) -> Option<&RoundState> {
        self.current.as_ref()
    }

    fn round_mut(&mut self) -> Result<&mut RoundState> {
        self.current.as_mut().ok_or(GameError::NoActiveRound)
    }

    pub fn cursor_update<R: Rng + ?Sized>(
        &mut self,
        caller: &PlayerId,
        x: i64,
        y: i64,
        now: u64,
        rng: &mut R,
    ) -> Result<Option<Bubble>> {
        let cfg = self.config;
        self.round_mut()?.cursor_update(&cfg, caller, x, y, now, rng)
    }

    pub fn tick<R: Rng + ?Sized>(&mut self, now: u64, rng: &mut R) -> Option<Bubble> {
        let cfg = self.config;
        self.current.as_mut()?.bubble_tick(&cfg, now, rng)
    }

    pub fn submit_guess(&mut self, caller: &PlayerId, image: &ImageRecord, text: &str, now: u64) -> Result<GuessOutcome> {
        let verdict = self.round_mut()?.submit_guess(caller, image, text, now)?;
        let closed = match verdict {
            Verdict::Correct => Some(self.close_round()),
            Verdict::Incorrect => None,
        };
        Ok(GuessOutcome { verdict, closed })
    }

    pub fn skip(&mut self, caller: &PlayerId) -> Result<RoundSummary> {
        self.round_mut()?.skip(caller)?;
        Ok(self.close_round())
    }

    /// Moves a terminal current round into the history and books its score.
    fn close_round(&mut self) -> RoundSummary {
        let round = self.current.take().expect("closing without a round");
        debug_assert!(round.outcome.is_terminal());
        let round_score = round.contribution(&self.config).unwrap_or(0);
        self.score += round_score;
        self.round_index += 1;
        let summary = RoundSummary {
            round_index: round.round_index,
            image_id: round.image_id.clone(),
            outcome: round.outcome,
            bubbles_used: round.bubbles.len() as u32,
            round_score,
            total_score: self.score,
        };
        self.rounds.push(round);
        summary
    }

    /// Closes the current round if a recorded transition made it terminal.
    pub fn settle_recorded_round(&mut self) -> Option<RoundSummary> {
        match &self.current {
            Some(r) if r.outcome.is_terminal() => Some(self.close_round()),
            _ => None,
        }
    }

    pub fn current_round_mut(&mut self) -> Option<&mut RoundState> {
        self.current.as_mut()
    }

    /// Score recomputed from the completed rounds; lower is better.
    pub fn session_score(&self) -> u64 {
        self.rounds
            .iter()
            .filter_map(|r| r.contribution(&self.config))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::DetRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn rng() -> DetRng {
        DetRng::seed_from_u64(11)
    }

    fn image() -> ImageRecord {
        ImageRecord::new("img-1", "dog", ["Border Collie"], "img-1.rgb").unwrap()
    }

    fn round() -> RoundState {
        RoundState::new(0, "img-1".into(), "a".into(), "b".into(), 1_000)
    }

    fn session(n_images: usize) -> GameSession {
        let ids: Vec<String> = (0..n_images).map(|i| format!("img-{i}")).collect();
        GameSession::new("s", "a".into(), "b".into(), &ids, GameConfig::default(), &mut rng()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_label("  Border   Collie "), "border collie");
        assert_eq!(normalize_label("dog"), "dog");
        assert_eq!(normalize_label("DOG"), "dog");
        assert_eq!(normalize_label(" \t "), "");
    }

    #[test]
    fn config_validation() {
        assert!(GameConfig::default().validate().is_ok());
        let mut c = GameConfig::default();
        c.bubble_size = 301;
        assert!(c.validate().is_err());
        let mut c = GameConfig::default();
        c.min_interval_ms = 400;
        assert!(c.validate().is_err());
        let mut c = GameConfig::default();
        c.rounds_per_game = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn extent_truncates_at_border() {
        let cfg = GameConfig::default();
        assert_eq!(cfg.bubble_extent(150, 150), Rect { x: 141, y: 141, w: 18, h: 18 });
        assert_eq!(cfg.bubble_extent(0, 0), Rect { x: 0, y: 0, w: 9, h: 9 });
        assert_eq!(cfg.bubble_extent(299, 299), Rect { x: 290, y: 290, w: 10, h: 10 });
    }

    #[test]
    fn roles_alternate_from_player_a() {
        let mut s = session(3);
        let r0 = s.begin_round(0).unwrap().clone();
        assert_eq!((r0.teacher.as_str(), r0.student.as_str()), ("a", "b"));
        s.skip(&"b".into()).unwrap();
        let r1 = s.begin_round(10).unwrap().clone();
        assert_eq!((r1.teacher.as_str(), r1.student.as_str()), ("b", "a"));
    }

    #[test]
    fn begin_round_guards() {
        let ids: Vec<String> = (0..120).map(|i| format!("img-{i}")).collect();
        let mut s = GameSession::new("s", "a".into(), "b".into(), &ids, GameConfig::default(), &mut rng()).unwrap();
        assert_eq!(s.total_rounds(), 110);
        s.begin_round(0).unwrap();
        assert_eq!(s.begin_round(1).unwrap_err(), GameError::RoundInProgress);
        for k in 0..110 {
            if k > 0 {
                s.begin_round(k as u64).unwrap();
            }
            let student = s.student_for(k).clone();
            s.skip(&student).unwrap();
        }
        assert_eq!(s.round_index, 110);
        assert_eq!(s.begin_round(999).unwrap_err(), GameError::GameComplete);
        assert!(s.is_complete());
    }

    #[test]
    fn first_cursor_press_places_bubble() {
        let cfg = GameConfig::default();
        let mut r = round();
        let b = r.cursor_update(&cfg, &"a".into(), 150, 150, 1_000, &mut rng()).unwrap();
        assert_eq!(b, Some(Bubble { x: 150, y: 150, placed_at: 0, seq: 0 }));
        assert!(r.bubbling_active);
        let due = r.next_bubble_due.unwrap();
        assert!((1_050..=1_300).contains(&due));
    }

    #[test]
    fn cursor_update_guards() {
        let cfg = GameConfig::default();
        let mut r = round();
        assert_eq!(
            r.cursor_update(&cfg, &"b".into(), 1, 1, 0, &mut rng()).unwrap_err(),
            GameError::NotTeacher
        );
        assert!(matches!(
            r.cursor_update(&cfg, &"a".into(), 300, 0, 0, &mut rng()),
            Err(GameError::OutOfBounds { .. })
        ));
        assert!(r.cursor_update(&cfg, &"a".into(), 299, 0, 0, &mut rng()).is_ok());
        assert_eq!(r.cursor, Some((299, 0)));
        r.submit_guess(&"b".into(), &image(), "dog", 5).unwrap();
        assert_eq!(
            r.cursor_update(&cfg, &"a".into(), 1, 1, 6, &mut rng()).unwrap_err(),
            GameError::RoundFinished
        );
    }

    #[test]
    fn tick_clamps_to_radius() {
        let cfg = GameConfig::default();
        let mut g = rng();
        let mut r = round();
        r.cursor_update(&cfg, &"a".into(), 100, 100, 1_000, &mut g).unwrap();
        let due = r.next_bubble_due.unwrap();
        assert_eq!(r.bubble_tick(&cfg, due - 1, &mut g), None);
        r.cursor_update(&cfg, &"a".into(), 100, 104, due - 1, &mut g).unwrap();
        let b = r.bubble_tick(&cfg, due, &mut g).unwrap();
        assert_eq!((b.x, b.y, b.seq), (100, 104, 1));

        let mut r = round();
        r.cursor_update(&cfg, &"a".into(), 100, 100, 1_000, &mut g).unwrap();
        r.cursor_update(&cfg, &"a".into(), 100, 150, 1_001, &mut g).unwrap();
        let b = r.bubble_tick(&cfg, 2_000, &mut g).unwrap();
        assert_eq!((b.x, b.y), (100, 109));
    }

    #[test]
    fn inactive_tick_is_noop() {
        let cfg = GameConfig::default();
        let mut r = round();
        assert_eq!(r.bubble_tick(&cfg, 50_000, &mut rng()), None);
        assert!(r.bubbles.is_empty());
    }

    #[test]
    fn guessing() {
        let img = image();
        let mut r = round();
        assert_eq!(r.submit_guess(&"a".into(), &img, "dog", 0).unwrap_err(), GameError::NotStudent);
        assert_eq!(r.submit_guess(&"b".into(), &img, "cat", 0).unwrap(), Verdict::Incorrect);
        assert_eq!(r.outcome, Outcome::InProgress);
        assert_eq!(r.submit_guess(&"b".into(), &img, "Border Collie", 0).unwrap(), Verdict::Correct);
        assert_eq!(r.outcome, Outcome::Recognized);
        assert_eq!(r.guesses.len(), 2);
        assert_eq!(r.submit_guess(&"b".into(), &img, "dog", 0).unwrap_err(), GameError::RoundFinished);

        let mut r = round();
        assert_eq!(r.submit_guess(&"b".into(), &img, "dog", 0).unwrap(), Verdict::Correct);
    }

    #[test]
    fn skip_penalty() {
        let cfg = GameConfig::default();
        let mut g = rng();
        let mut r = round();
        r.cursor_update(&cfg, &"a".into(), 50, 50, 0, &mut g).unwrap();
        let mut now = 0;
        while r.bubbles.len() < 7 {
            now += 10;
            r.bubble_tick(&cfg, now, &mut g);
        }
        r.skip(&"b".into()).unwrap();
        assert_eq!(r.contribution(&cfg), Some(107));
        assert_eq!(r.skip(&"b".into()).unwrap_err(), GameError::RoundFinished);

        let mut r = round();
        r.skip(&"b".into()).unwrap();
        assert_eq!(r.contribution(&cfg), Some(100));
    }

    fn play(s: &mut GameSession, bubbles: usize, recognize: bool, g: &mut DetRng) {
        let k = s.round_index;
        let t0 = k as u64 * 1_000_000;
        s.begin_round(t0).unwrap();
        let teacher = s.teacher_for(k).clone();
        let student = s.student_for(k).clone();
        if bubbles > 0 {
            s.cursor_update(&teacher, 10, 10, t0, g).unwrap();
            let mut now = t0;
            while s.current_round().unwrap().bubbles.len() < bubbles {
                now += 10;
                s.tick(now, g);
            }
        }
        if recognize {
            let img = ImageRecord::new(s.current_round().unwrap().image_id.clone(), "x", Vec::<String>::new(), "").unwrap();
            s.submit_guess(&student, &img, "x", t0 + 1).unwrap();
        } else {
            s.skip(&student).unwrap();
        }
    }

    #[test]
    fn session_score_examples() {
        let mut g = rng();
        assert_eq!(session(3).session_score(), 0);

        let mut s = session(3);
        play(&mut s, 5, true, &mut g);
        play(&mut s, 3, true, &mut g);
        assert_eq!(s.session_score(), 8);
        assert_eq!(s.score, 8);

        let mut s = session(3);
        play(&mut s, 5, true, &mut g);
        play(&mut s, 3, false, &mut g);
        assert_eq!(s.session_score(), 108);
        assert_eq!(s.score, 108);
    }

    #[test]
    fn manifest_parsing() {
        let text = "{\"id\":\"i1\",\"category\":\"dog\",\"labels\":[\"Border  Collie\"],\"path\":\"a.rgb\"}\n\n{\"id\":\"i2\",\"category\":\"Cat\",\"labels\":[],\"path\":\"b.rgb\"}\n";
        let m = Manifest::from_reader(text.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        let i1 = m.get("i1").unwrap();
        assert!(i1.accepted_labels.contains("border collie"));
        assert!(i1.accepted_labels.contains("dog"));
        assert!(m.get("i2").unwrap().accepts("CAT "));
        assert_eq!(m.wrong_labels("i1"), vec!["cat".to_string()]);

        let mut out = Vec::new();
        m.write_to(&mut out).unwrap();
        assert_eq!(Manifest::from_reader(out.as_slice()).unwrap(), m);

        assert!(matches!(
            Manifest::from_reader("{\"id\":1}".as_bytes()),
            Err(GameError::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn replay_is_deterministic() {
        let run = || {
            let mut g = rng();
            let mut s = session(4);
            play(&mut s, 12, true, &mut g);
            play(&mut s, 4, false, &mut g);
            s
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn walks_respect_adjacency_and_intervals(
            seed in any::<u64>(),
            moves in prop::collection::vec((0i64..300, 0i64..300), 1..200),
        ) {
            let cfg = GameConfig::default();
            let mut g = DetRng::seed_from_u64(seed);
            let mut r = round();
            let mut now = 1_000;
            r.cursor_update(&cfg, &"a".into(), moves[0].0, moves[0].1, now, &mut g).unwrap();
            for &(x, y) in &moves {
                for _ in 0..5 {
                    now += cfg.tick_resolution_ms;
                    r.bubble_tick(&cfg, now, &mut g);
                }
                r.cursor_update(&cfg, &"a".into(), x, y, now, &mut g).unwrap();
            }
            for w in r.bubbles.windows(2) {
                prop_assert!(w[1].chebyshev(&w[0]) <= cfg.adjacency_radius);
                let gap = w[1].placed_at - w[0].placed_at;
                prop_assert!(gap >= cfg.min_interval_ms);
                prop_assert!(gap <= cfg.max_interval_ms + cfg.tick_resolution_ms);
                prop_assert_eq!(w[1].seq, w[0].seq + 1);
            }
        }
    }
}
