//! Append-only session event logs, replay, and bubble-map export.
//!
//! Layout under a data directory:
//!
//! ```text
//! logs/<YYYY-MM-DD>/<session_id>.jsonl
//! exports/<experiment>/index.csv
//! exports/<experiment>/<image_id>/<pair_id>.fimap
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Bubble, GameConfig, GameError, GameSession, Guess, Manifest, Outcome, PlayerId, RoundSummary, Verdict};
use crate::maps::{self, rasterize_bubbles, BubbleMap, Dims, MapError};
use crate::stats::ImageMaps;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("event at {at} precedes the previous event at {previous} in session {session}")]
    OutOfOrder { session: String, at: u64, previous: u64 },
    #[error("session {0} already ended")]
    AlreadyEnded(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("corrupt log {path}: {reason} (last valid offset {offset})")]
    CorruptLog { path: String, offset: u64, reason: String },
    #[error("replay of {session} failed: {source}")]
    Replay {
        session: String,
        #[source]
        source: GameError,
    },
    #[error("replay of {session} diverged: {detail}")]
    Diverged { session: String, detail: String },
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("index: {0}")]
    Index(String),
}

impl StorageError {
    /// Both a regressing timestamp and a second terminal event count as out
    /// of order.
    pub fn is_out_of_order(&self) -> bool {
        matches!(self, StorageError::OutOfOrder { .. } | StorageError::AlreadyEnded(_))
    }
}

pub type Result<T, E = StorageError> = std::result::Result<T, E>;

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session_id: String,
    pub round_index: u32,
    /// Server clock, ms since the Unix epoch.
    pub at: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    SessionStart {
        player_a: PlayerId,
        player_b: PlayerId,
        image_sequence: Vec<String>,
        /// A bot stood in for one of the players.
        bot: bool,
        config: GameConfig,
    },
    RoundStart {
        image_id: String,
        teacher: PlayerId,
        student: PlayerId,
    },
    Cursor {
        x: u32,
        y: u32,
    },
    Bubble {
        x: u32,
        y: u32,
        seq: u32,
        placed_at: u64,
    },
    Guess {
        text: String,
        verdict: Verdict,
    },
    Skip {},
    RoundEnd {
        outcome: Outcome,
        bubbles: u32,
        round_score: u64,
        total_score: u64,
    },
    SessionEnd {
        score: u64,
    },
    Abandoned {
        reason: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::SessionStart { .. } => "session_start",
            EventKind::RoundStart { .. } => "round_start",
            EventKind::Cursor { .. } => "cursor",
            EventKind::Bubble { .. } => "bubble",
            EventKind::Guess { .. } => "guess",
            EventKind::Skip {} => "skip",
            EventKind::RoundEnd { .. } => "round_end",
            EventKind::SessionEnd { .. } => "session_end",
            EventKind::Abandoned { .. } => "abandoned",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, EventKind::SessionEnd { .. } | EventKind::Abandoned { .. })
    }
}

impl Event {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("events always serialize");
        s.push('\n');
        s
    }
}

/// Days since 1970-01-01 to a civil date.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

/// `YYYY-MM-DD` (UTC) of a ms timestamp.
pub fn day_of(at_ms: u64) -> String {
    let (y, m, d) = civil_from_days((at_ms / 86_400_000) as i64);
    format!("{y:04}-{m:02}-{d:02}")
}

/// `YYYY-MM-DDTHH:MM:SSZ` of a ms timestamp.
pub fn timestamp_of(at_ms: u64) -> String {
    let secs = at_ms / 1000;
    let rem = secs % 86_400;
    format!("{}T{:02}:{:02}:{:02}Z", day_of(at_ms), rem / 3600, rem / 60 % 60, rem % 60)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// fsync after every event.
    #[default]
    Sync,
    /// Flush to the OS on every event, fsync on close.
    Buffered,
}

/// The single writer for one session's log file.
#[derive(Debug)]
pub struct SessionStream {
    session_id: String,
    path: PathBuf,
    file: BufWriter<File>,
    last_at: Option<u64>,
    ended: bool,
    durability: Durability,
}

impl SessionStream {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, e: &Event) -> Result<()> {
        if e.session_id != self.session_id {
            return Err(StorageError::UnknownSession(e.session_id.clone()));
        }
        if self.ended {
            return Err(StorageError::AlreadyEnded(self.session_id.clone()));
        }
        if let Some(prev) = self.last_at {
            if e.at < prev {
                return Err(StorageError::OutOfOrder {
                    session: self.session_id.clone(),
                    at: e.at,
                    previous: prev,
                });
            }
        }
        self.file.write_all(e.to_line().as_bytes())?;
        self.file.flush()?;
        if self.durability == Durability::Sync {
            self.file.get_ref().sync_data()?;
        }
        self.last_at = Some(e.at);
        self.ended = e.kind.is_terminal();
        Ok(())
    }

    pub fn close(mut self) -> Result<()> {
        self.file.flush()?;
        self.file.get_ref().sync_all()?;
        Ok(())
    }
}

/// The `logs/` tree of a data directory.
#[derive(Debug)]
pub struct EventLog {
    root: PathBuf,
    durability: Durability,
    streams: HashMap<String, SessionStream>,
}

impl EventLog {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            durability: Durability::default(),
            streams: HashMap::new(),
        }
    }

    pub fn with_durability(mut self, durability: Durability) -> Self {
        self.durability = durability;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Opens the writer for a new session. The file lands in the directory
    /// of the day `started_at` falls on; an existing file is an error.
    pub fn open_stream(&self, session_id: &str, started_at: u64) -> Result<SessionStream> {
        let dir = self.root.join(day_of(started_at));
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{session_id}.jsonl"));
        let file = OpenOptions::new().write(true).create_new(true).open(&path)?;
        Ok(SessionStream {
            session_id: session_id.to_string(),
            path,
            file: BufWriter::new(file),
            last_at: None,
            ended: false,
            durability: self.durability,
        })
    }

    /// Appends through a writer owned by this log, opening it on the first
    /// event of a session.
    pub fn append_event(&mut self, e: &Event) -> Result<()> {
        if !self.streams.contains_key(&e.session_id) {
            let stream = self.open_stream(&e.session_id, e.at)?;
            self.streams.insert(e.session_id.clone(), stream);
        }
        let stream = self.streams.get_mut(&e.session_id).expect("just inserted");
        stream.append(e)?;
        if stream.ended {
            let stream = self.streams.remove(&e.session_id).expect("present");
            stream.close()?;
        }
        Ok(())
    }

    pub fn append_all<'a>(&mut self, events: impl IntoIterator<Item = &'a Event>) -> Result<()> {
        for e in events {
            self.append_event(e)?;
        }
        Ok(())
    }

    /// Every session log on disk, by session id.
    pub fn sessions(&self) -> Result<BTreeMap<String, PathBuf>> {
        let mut out = BTreeMap::new();
        if !self.root.exists() {
            return Ok(out);
        }
        let mut days: Vec<_> = fs::read_dir(&self.root)?.collect::<std::io::Result<Vec<_>>>()?;
        days.sort_by_key(|d| d.file_name());
        for day in days {
            if !day.file_type()?.is_dir() {
                continue;
            }
            for f in fs::read_dir(day.path())? {
                let path = f?.path();
                if path.extension().is_some_and(|x| x == "jsonl") {
                    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                        out.insert(stem.to_string(), path);
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn read_session(&self, session_id: &str) -> Result<Vec<Event>> {
        let sessions = self.sessions()?;
        let path = sessions
            .get(session_id)
            .ok_or_else(|| StorageError::UnknownSession(session_id.to_string()))?;
        read_events(path)
    }

    pub fn replay(&self, session_id: &str) -> Result<Replayed> {
        replay(&self.read_session(session_id)?)
    }
}

/// Parses a session log. A final line without its newline, or any line that
/// does not parse, is reported with the byte offset where valid data ends.
pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let corrupt = |offset: usize, reason: String| StorageError::CorruptLog {
        path: path.display().to_string(),
        offset: offset as u64,
        reason,
    };
    let mut events = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let Some(nl) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(corrupt(offset, "truncated final record".into()));
        };
        let line = &bytes[offset..offset + nl];
        let event: Event =
            serde_json::from_slice(line).map_err(|e| corrupt(offset, format!("line {}: {e}", events.len() + 1)))?;
        events.push(event);
        offset += nl + 1;
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Complete,
    Abandoned,
    /// The log stops without a terminal event.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub session: GameSession,
    pub bot: bool,
    pub status: SessionStatus,
    pub started_at: u64,
}

impl Replayed {
    pub fn session_id(&self) -> &str {
        &self.session.session_id
    }
}

/// Rebuilds a session from its events, re-checking every transition against
/// the game rules and every recorded score against the recomputed one.
pub fn replay(events: &[Event]) -> Result<Replayed> {
    let Some(first) = events.first() else {
        return Err(StorageError::Index("empty session log".into()));
    };
    let sid = first.session_id.clone();
    let fail = |source: GameError| StorageError::Replay {
        session: sid.clone(),
        source,
    };
    let diverged = |detail: String| StorageError::Diverged {
        session: sid.clone(),
        detail,
    };
    let EventKind::SessionStart {
        player_a,
        player_b,
        image_sequence,
        bot,
        config,
    } = &first.kind
    else {
        return Err(diverged(format!("first event is {}", first.kind.name())));
    };
    let mut session = GameSession::with_sequence(
        sid.clone(),
        player_a.clone(),
        player_b.clone(),
        image_sequence.clone(),
        *config,
    )
    .map_err(fail)?;
    let mut status = SessionStatus::Incomplete;
    let mut last_summary: Option<RoundSummary> = None;
    let mut round_started_at = first.at;
    for e in &events[1..] {
        if e.session_id != sid {
            return Err(diverged(format!("event for {} in this log", e.session_id)));
        }
        if status != SessionStatus::Incomplete {
            return Err(diverged(format!("{} after the terminal event", e.kind.name())));
        }
        match &e.kind {
            EventKind::SessionStart { .. } => return Err(diverged("second session_start".into())),
            EventKind::RoundStart {
                image_id,
                teacher,
                student,
            } => {
                let r = session.begin_round(e.at).map_err(fail)?;
                if &r.image_id != image_id || &r.teacher != teacher || &r.student != student {
                    return Err(diverged(format!("round {} does not match the session order", r.round_index)));
                }
                round_started_at = e.at;
            }
            EventKind::Cursor { x, y } => {
                let r = session.current_round_mut().ok_or(GameError::NoActiveRound).map_err(fail)?;
                r.cursor = Some((*x, *y));
            }
            EventKind::Bubble { x, y, seq, placed_at } => {
                let cfg = session.config;
                let r = session.current_round_mut().ok_or(GameError::NoActiveRound).map_err(fail)?;
                r.apply_recorded_bubble(
                    &cfg,
                    Bubble {
                        x: *x,
                        y: *y,
                        seq: *seq,
                        placed_at: *placed_at,
                    },
                )
                .map_err(fail)?;
            }
            EventKind::Guess { text, verdict } => {
                let r = session.current_round_mut().ok_or(GameError::NoActiveRound).map_err(fail)?;
                r.apply_recorded_guess(Guess {
                    text: text.clone(),
                    verdict: *verdict,
                    at: e.at.saturating_sub(round_started_at),
                })
                .map_err(fail)?;
                last_summary = session.settle_recorded_round().or(last_summary);
            }
            EventKind::Skip {} => {
                let r = session.current_round_mut().ok_or(GameError::NoActiveRound).map_err(fail)?;
                r.apply_recorded_skip().map_err(fail)?;
                last_summary = session.settle_recorded_round().or(last_summary);
            }
            EventKind::RoundEnd {
                outcome,
                bubbles,
                round_score,
                total_score,
            } => {
                let s = last_summary
                    .take()
                    .ok_or_else(|| diverged(format!("round_end for round {} while it is open", e.round_index)))?;
                if s.outcome != *outcome
                    || s.bubbles_used != *bubbles
                    || s.round_score != *round_score
                    || s.total_score != *total_score
                {
                    return Err(diverged(format!("round {} summary differs from the recorded one", s.round_index)));
                }
            }
            EventKind::SessionEnd { score } => {
                if !session.is_complete() {
                    return Err(diverged("session_end before the last round".into()));
                }
                if session.session_score() != *score || session.score != *score {
                    return Err(diverged(format!(
                        "recorded score {score}, replayed {}",
                        session.session_score()
                    )));
                }
                status = SessionStatus::Complete;
            }
            EventKind::Abandoned { .. } => status = SessionStatus::Abandoned,
        }
    }
    Ok(Replayed {
        session,
        bot: *bot,
        status,
        started_at: first.at,
    })
}

/// Which sessions an export takes. Defaults keep only complete sessions
/// between two people.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExportFilter {
    pub include_bot: bool,
    pub include_abandoned: bool,
    pub include_incomplete: bool,
}

impl ExportFilter {
    pub fn accepts(&self, r: &Replayed) -> bool {
        (self.include_bot || !r.bot)
            && match r.status {
                SessionStatus::Complete => true,
                SessionStatus::Abandoned => self.include_abandoned,
                SessionStatus::Incomplete => self.include_incomplete,
            }
    }
}

/// One row of `index.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRow {
    pub pair_id: String,
    pub image_id: String,
    pub bubble_count: u32,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExportSummary {
    pub sessions_seen: usize,
    pub sessions_exported: usize,
    /// Session id and the reason it was left out.
    pub excluded: Vec<(String, String)>,
    pub rows: Vec<IndexRow>,
}

/// Bubble map of every finished round of the given sessions. The pair id is
/// the session id.
pub fn bubble_maps_of(sessions: &[Replayed], include_skipped: bool) -> Result<Vec<(IndexRow, BubbleMap)>> {
    let mut out = Vec::new();
    for r in sessions {
        let cfg = r.session.config;
        let dims = Dims::new(cfg.image_height as usize, cfg.image_width as usize);
        for round in &r.session.rounds {
            if round.outcome == Outcome::Skipped && !include_skipped {
                continue;
            }
            let map = rasterize_bubbles(
                round.image_id.clone(),
                r.session.session_id.clone(),
                &round.bubbles,
                dims,
                cfg.bubble_size,
            )?;
            let row = IndexRow {
                pair_id: r.session.session_id.clone(),
                image_id: round.image_id.clone(),
                bubble_count: round.bubbles.len() as u32,
                outcome: round.outcome,
            };
            out.push((row, map));
        }
    }
    out.sort_by(|a, b| (&a.0.image_id, &a.0.pair_id).cmp(&(&b.0.image_id, &b.0.pair_id)));
    Ok(out)
}

/// Groups maps by image, both levels sorted by id.
pub fn group_by_image(maps: impl IntoIterator<Item = BubbleMap>) -> Vec<ImageMaps> {
    let mut by_image: BTreeMap<String, Vec<BubbleMap>> = BTreeMap::new();
    for m in maps {
        by_image.entry(m.image_id.clone()).or_default().push(m);
    }
    by_image
        .into_iter()
        .map(|(image_id, mut maps)| {
            maps.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
            ImageMaps { image_id, maps }
        })
        .collect()
}

/// Replays every session in the log, keeping the ones the filter accepts.
pub fn load_sessions(log: &EventLog, filter: &ExportFilter) -> Result<(Vec<Replayed>, ExportSummary)> {
    let mut summary = ExportSummary::default();
    let mut kept = Vec::new();
    for (sid, path) in log.sessions()? {
        summary.sessions_seen += 1;
        let r = replay(&read_events(&path)?)?;
        if filter.accepts(&r) {
            kept.push(r);
        } else {
            let why = if r.bot {
                "bot"
            } else if r.status == SessionStatus::Abandoned {
                "abandoned"
            } else {
                "incomplete"
            };
            summary.excluded.push((sid, why.to_string()));
        }
    }
    summary.sessions_exported = kept.len();
    Ok((kept, summary))
}

fn check_path_component(s: &str) -> Result<()> {
    if s.is_empty() || s.contains(['/', '\\']) || s == "." || s == ".." {
        return Err(StorageError::Index(format!("{s:?} cannot be used as a file name")));
    }
    Ok(())
}

/// Fails on the first session that played an image the manifest lacks.
pub fn check_images(sessions: &[Replayed], manifest: &Manifest) -> Result<()> {
    for r in sessions {
        if let Some(bad) = r.session.image_sequence.iter().find(|id| manifest.get(id).is_none()) {
            return Err(StorageError::Replay {
                session: r.session.session_id.clone(),
                source: GameError::UnknownImage(bad.clone()),
            });
        }
    }
    Ok(())
}

/// Writes one FIMAP grid per (pair, image) of `sessions` plus `index.csv`
/// into `out_dir`. Skipped rounds are written with their outcome; readers
/// choose whether to use them.
pub fn write_export(sessions: &[Replayed], out_dir: &Path) -> Result<Vec<IndexRow>> {
    let maps = bubble_maps_of(sessions, true)?;
    fs::create_dir_all(out_dir)?;
    let mut index = csv::Writer::from_path(out_dir.join("index.csv")).map_err(|e| StorageError::Index(e.to_string()))?;
    for (row, map) in &maps {
        check_path_component(&row.image_id)?;
        check_path_component(&row.pair_id)?;
        let dir = out_dir.join(&row.image_id);
        fs::create_dir_all(&dir)?;
        let grid = map.grid.mapv(|v| v as f32);
        maps::write_grid(&grid, dir.join(format!("{}.fimap", row.pair_id)))?;
        index.serialize(row).map_err(|e| StorageError::Index(e.to_string()))?;
    }
    index.flush()?;
    Ok(maps.into_iter().map(|(row, _)| row).collect())
}

/// Replays the log, applies the filter and writes the export.
pub fn export_bubble_maps(
    log: &EventLog,
    manifest: Option<&Manifest>,
    filter: &ExportFilter,
    out_dir: &Path,
) -> Result<ExportSummary> {
    let (sessions, mut summary) = load_sessions(log, filter)?;
    if let Some(m) = manifest {
        check_images(&sessions, m)?;
    }
    summary.rows = write_export(&sessions, out_dir)?;
    Ok(summary)
}

pub fn read_index(export_dir: &Path) -> Result<Vec<IndexRow>> {
    let path = export_dir.join("index.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| StorageError::Index(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<IndexRow>, _>>()
        .map_err(|e| StorageError::Index(e.to_string()))
}

/// Reads an export back into per-image bubble maps.
pub fn load_export(export_dir: &Path, include_skipped: bool) -> Result<Vec<ImageMaps>> {
    let rows = read_index(export_dir)?;
    let mut maps = Vec::with_capacity(rows.len());
    for row in rows {
        if row.outcome == Outcome::Skipped && !include_skipped {
            continue;
        }
        check_path_component(&row.image_id)?;
        check_path_component(&row.pair_id)?;
        let grid = maps::read_bubble_grid(export_dir.join(&row.image_id).join(format!("{}.fimap", row.pair_id)))?;
        maps.push(BubbleMap {
            image_id: row.image_id,
            pair_id: row.pair_id,
            grid,
            total_bubbles: row.bubble_count,
        });
    }
    Ok(group_by_image(maps))
}
