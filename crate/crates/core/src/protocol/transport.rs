//! Per-session dispatch: turns client messages into game transitions and the
//! resulting fan-out to both players, logging every transition as an event.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use super::message::{Activity, BubbleInfo, Body, ErrorCode, InboundSeq, Message, Pixels, Role};
use crate::game::{Bubble, GameError, GameSession, Manifest, PlayerId, Rect, RoundSummary, Verdict};
use crate::seed::DetRng;
use crate::storage::{Event, EventKind};

pub const CURSOR_RATE_LIMIT: usize = 60;
pub const RATE_WINDOW_MS: u64 = 1_000;
pub const RECONNECT_GRACE_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("{0}")]
    RoleViolation(String),
    #[error("no such session")]
    SessionNotFound,
    #[error("{0}")]
    Unexpected(String),
    #[error("sequence number {got} does not follow the previous one")]
    SequenceViolation { got: u64 },
    #[error(transparent)]
    Game(#[from] GameError),
}

impl ProtocolError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ProtocolError::RoleViolation(_) => ErrorCode::RoleViolation,
            ProtocolError::SessionNotFound => ErrorCode::SessionNotFound,
            ProtocolError::Unexpected(_) => ErrorCode::UnexpectedMessage,
            ProtocolError::SequenceViolation { .. } => ErrorCode::SequenceViolation,
            ProtocolError::Game(g) => match g {
                GameError::NotTeacher | GameError::NotStudent => ErrorCode::RoleViolation,
                GameError::RoundFinished => ErrorCode::RoundFinished,
                GameError::NoActiveRound => ErrorCode::NoActiveRound,
                GameError::OutOfBounds { .. } => ErrorCode::OutOfBounds,
                _ => ErrorCode::Internal,
            },
        }
    }

    /// The error message sent back to the offending client.
    pub fn to_body(&self) -> Body {
        Body::error(self.code(), self.to_string())
    }
}

/// A message body addressed to one player.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: PlayerId,
    pub body: Body,
}

/// Where round images come from. Pixels are RGB, row-major, 3 bytes each.
pub trait PixelSource: Send + Sync {
    fn image(&self, image_id: &str) -> Option<Arc<Vec<u8>>>;
}

/// No pixel data at all; used for headless simulation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoPixels;

impl PixelSource for NoPixels {
    fn image(&self, _: &str) -> Option<Arc<Vec<u8>>> {
        None
    }
}

#[derive(Debug, Default, Clone)]
pub struct MemoryPixels(pub HashMap<String, Arc<Vec<u8>>>);

impl PixelSource for MemoryPixels {
    fn image(&self, image_id: &str) -> Option<Arc<Vec<u8>>> {
        self.0.get(image_id).cloned()
    }
}

/// Copies the RGB block under `r` out of a full image.
pub fn crop(rgb: &[u8], image_width: u32, r: Rect) -> Vec<u8> {
    let mut out = Vec::with_capacity((r.w * r.h * 3) as usize);
    for y in r.y..r.y + r.h {
        let start = ((y * image_width + r.x) * 3) as usize;
        out.extend_from_slice(&rgb[start..start + (r.w * 3) as usize]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Active,
    Complete,
    Abandoned,
}

#[derive(Debug, Default)]
struct Connection {
    inbound: InboundSeq,
    cursor_times: VecDeque<u64>,
    disconnected_at: Option<u64>,
}

impl Connection {
    /// Sliding-window limit on cursor messages.
    fn admit_cursor(&mut self, now: u64) -> bool {
        while self.cursor_times.front().is_some_and(|&t| t + RATE_WINDOW_MS <= now) {
            self.cursor_times.pop_front();
        }
        if self.cursor_times.len() >= CURSOR_RATE_LIMIT {
            return false;
        }
        self.cursor_times.push_back(now);
        true
    }
}

/// Authoritative state of one running session.
pub struct SessionTransport {
    session: GameSession,
    manifest: Arc<Manifest>,
    pixels: Arc<dyn PixelSource>,
    rng: DetRng,
    bot: bool,
    status: Status,
    conns: [Connection; 2],
    events: Vec<Event>,
}

impl std::fmt::Debug for SessionTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionTransport")
            .field("session_id", &self.session.session_id)
            .field("round_index", &self.session.round_index)
            .field("status", &self.status)
            .finish()
    }
}

impl SessionTransport {
    /// `rng` drives bubble timing; it should be the one that shuffled the
    /// session's image order so one sub-seed covers the whole session.
    pub fn new(session: GameSession, manifest: Arc<Manifest>, pixels: Arc<dyn PixelSource>, rng: DetRng, bot: bool) -> Self {
        Self {
            session,
            manifest,
            pixels,
            rng,
            bot,
            status: Status::Active,
            conns: Default::default(),
            events: Vec::new(),
        }
    }

    pub fn session(&self) -> &GameSession {
        &self.session
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_bot_session(&self) -> bool {
        self.bot
    }

    pub fn current_image(&self) -> Option<&str> {
        self.session.current_round().map(|r| r.image_id.as_str())
    }

    /// Events logged since the last drain, in order.
    pub fn drain_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.events)
    }

    /// Next time `tick` can change anything: the due bubble or a grace expiry.
    pub fn next_wakeup(&self) -> Option<u64> {
        if self.status != Status::Active {
            return None;
        }
        let due = self.session.current_round().and_then(|r| r.next_bubble_due);
        let grace = self
            .conns
            .iter()
            .filter_map(|c| c.disconnected_at.map(|t| t + RECONNECT_GRACE_MS))
            .min();
        match (due, grace) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    fn log(&mut self, at: u64, kind: EventKind) {
        self.events.push(Event {
            session_id: self.session.session_id.clone(),
            round_index: self.session.round_index,
            at,
            kind,
        });
    }

    fn slot(&self, p: &PlayerId) -> Result<usize, ProtocolError> {
        if p == &self.session.player_a {
            Ok(0)
        } else if p == &self.session.player_b {
            Ok(1)
        } else {
            Err(ProtocolError::SessionNotFound)
        }
    }

    fn role_of(&self, p: &PlayerId) -> Option<Role> {
        let r = self.session.current_round()?;
        if p == &r.teacher {
            Some(Role::Teacher)
        } else if p == &r.student {
            Some(Role::Student)
        } else {
            None
        }
    }

    fn to_both(&self, body: Body, out: &mut Vec<Outbound>) {
        for p in [&self.session.player_a, &self.session.player_b] {
            out.push(Outbound {
                to: p.clone(),
                body: body.clone(),
            });
        }
    }

    /// Logs the session start and opens round 0.
    pub fn start(&mut self, now: u64) -> Vec<Outbound> {
        let s = &self.session;
        let kind = EventKind::SessionStart {
            player_a: s.player_a.clone(),
            player_b: s.player_b.clone(),
            image_sequence: s.image_sequence.clone(),
            bot: self.bot,
            config: s.config,
        };
        self.log(now, kind);
        let s = &self.session;
        let mut out = Vec::new();
        for (me, partner) in [(&s.player_a, &s.player_b), (&s.player_b, &s.player_a)] {
            out.push(Outbound {
                to: me.clone(),
                body: Body::Paired {
                    session_id: s.session_id.clone(),
                    partner: partner.to_string(),
                    bot: self.bot,
                    total_rounds: s.total_rounds(),
                },
            });
        }
        self.open_round(now, &mut out);
        out
    }

    fn round_start_bodies(&self) -> Option<[(PlayerId, Body); 2]> {
        let r = self.session.current_round()?;
        let cfg = &self.session.config;
        let body = |role: Role, image: Option<Pixels>| Body::RoundStart {
            round_index: r.round_index,
            total_rounds: self.session.total_rounds(),
            role,
            width: cfg.image_width,
            height: cfg.image_height,
            image,
        };
        let image = self.pixels.image(&r.image_id).map(|px| Pixels(px.to_vec()));
        Some([
            (r.teacher.clone(), body(Role::Teacher, image)),
            (r.student.clone(), body(Role::Student, None)),
        ])
    }

    fn open_round(&mut self, now: u64, out: &mut Vec<Outbound>) {
        let r = match self.session.begin_round(now) {
            Ok(r) => r,
            Err(_) => return,
        };
        let kind = EventKind::RoundStart {
            image_id: r.image_id.clone(),
            teacher: r.teacher.clone(),
            student: r.student.clone(),
        };
        self.log(now, kind);
        for (to, body) in self.round_start_bodies().expect("round just opened") {
            out.push(Outbound { to, body });
        }
        let student = self.session.current_round().expect("open").student.clone();
        out.push(Outbound {
            to: student,
            body: Body::ActivityNotice {
                actor: Role::Teacher,
                activity: Activity::Considering,
            },
        });
    }

    fn bubble_out(&mut self, b: Bubble, at: u64, out: &mut Vec<Outbound>) {
        self.log(
            at,
            EventKind::Bubble {
                x: b.x,
                y: b.y,
                seq: b.seq,
                placed_at: b.placed_at,
            },
        );
        let cfg = self.session.config;
        let r = self.session.current_round().expect("bubble without a round");
        let ext = cfg.bubble_extent(b.x, b.y);
        let pixels = self
            .pixels
            .image(&r.image_id)
            .map(|px| Pixels(crop(&px, cfg.image_width, ext)));
        let student = r.student.clone();
        let round_index = r.round_index;
        let round_bubbles = r.bubbles.len() as u32;
        // teacher confirmation first, so the teacher's next cursor lands before
        // the student can close the round
        self.to_both(
            Body::ScoreUpdate {
                round_index,
                round_bubbles,
                total_score: self.session.score,
                bubble: Some(BubbleInfo {
                    seq: b.seq,
                    x: b.x,
                    y: b.y,
                    extent: ext,
                }),
            },
            out,
        );
        out.push(Outbound {
            to: student.clone(),
            body: Body::PatchRevealed {
                seq: b.seq,
                x: ext.x,
                y: ext.y,
                w: ext.w,
                h: ext.h,
                pixels,
            },
        });
        if b.seq == 0 {
            out.push(Outbound {
                to: student,
                body: Body::ActivityNotice {
                    actor: Role::Teacher,
                    activity: Activity::Bubbling,
                },
            });
        }
    }

    /// Announces a closed round, then opens the next one or ends the game.
    pub fn broadcast_round_end(&mut self, summary: &RoundSummary, now: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        self.events.push(Event {
            session_id: self.session.session_id.clone(),
            round_index: summary.round_index,
            at: now,
            kind: EventKind::RoundEnd {
                outcome: summary.outcome,
                bubbles: summary.bubbles_used,
                round_score: summary.round_score,
                total_score: summary.total_score,
            },
        });
        let category = self
            .manifest
            .get(&summary.image_id)
            .map(|i| i.category.clone())
            .unwrap_or_default();
        self.to_both(
            Body::RoundEnd {
                round_index: summary.round_index,
                outcome: summary.outcome,
                bubbles_used: summary.bubbles_used,
                round_score: summary.round_score,
                total_score: summary.total_score,
                category,
            },
            &mut out,
        );
        if self.session.is_complete() {
            let score = self.session.score;
            self.log(now, EventKind::SessionEnd { score });
            self.status = Status::Complete;
            self.to_both(
                Body::GameEnd {
                    final_score: score,
                    rounds_played: self.session.rounds.len() as u32,
                    rank: None,
                },
                &mut out,
            );
        } else {
            self.open_round(now, &mut out);
        }
        out
    }

    /// Checks the sequence number, then dispatches the body.
    pub fn handle_message(&mut self, sender: &PlayerId, m: Message, now: u64) -> Result<Vec<Outbound>, ProtocolError> {
        let slot = self.slot(sender)?;
        if !self.conns[slot].inbound.accept(m.seq) {
            return Err(ProtocolError::SequenceViolation { got: m.seq });
        }
        self.handle(sender, m.body, now)
    }

    /// Applies one client message. On error nothing has changed.
    pub fn handle(&mut self, sender: &PlayerId, body: Body, now: u64) -> Result<Vec<Outbound>, ProtocolError> {
        let slot = self.slot(sender)?;
        if self.status != Status::Active {
            return Err(ProtocolError::SessionNotFound);
        }
        let mut out = Vec::new();
        match body {
            Body::CursorMove { x, y } => {
                let round = self.session.current_round().ok_or(GameError::NoActiveRound)?;
                if sender != &round.teacher {
                    return Err(ProtocolError::RoleViolation("only the teacher moves the cursor".into()));
                }
                if round.outcome.is_terminal() {
                    return Err(GameError::RoundFinished.into());
                }
                if !self.session.config.in_bounds(x, y) {
                    return Err(GameError::OutOfBounds {
                        x,
                        y,
                        width: self.session.config.image_width,
                        height: self.session.config.image_height,
                    }
                    .into());
                }
                if !self.conns[slot].admit_cursor(now) {
                    return Ok(out);
                }
                let placed = self.session.cursor_update(sender, x, y, now, &mut self.rng)?;
                self.log(now, EventKind::Cursor { x: x as u32, y: y as u32 });
                if let Some(b) = placed {
                    self.bubble_out(b, now, &mut out);
                }
            }
            Body::GuessSubmit { text } => {
                let round = self.session.current_round().ok_or(GameError::NoActiveRound)?;
                if sender != &round.student {
                    return Err(ProtocolError::RoleViolation("only the student guesses".into()));
                }
                let image = self
                    .manifest
                    .get(&round.image_id)
                    .cloned()
                    .ok_or_else(|| GameError::UnknownImage(round.image_id.clone()))?;
                let teacher = round.teacher.clone();
                let res = self.session.submit_guess(sender, &image, &text, now)?;
                self.log(now, EventKind::Guess { text: text.clone(), verdict: res.verdict });
                self.to_both(Body::GuessResult { text, verdict: res.verdict }, &mut out);
                out.push(Outbound {
                    to: teacher,
                    body: Body::ActivityNotice {
                        actor: Role::Student,
                        activity: match res.verdict {
                            Verdict::Correct => Activity::Correct,
                            Verdict::Incorrect => Activity::Incorrect,
                        },
                    },
                });
                if let Some(summary) = res.closed {
                    out.extend(self.broadcast_round_end(&summary, now));
                }
            }
            Body::Skip {} => {
                let round = self.session.current_round().ok_or(GameError::NoActiveRound)?;
                if sender != &round.student {
                    return Err(ProtocolError::RoleViolation("only the student skips".into()));
                }
                let summary = self.session.skip(sender)?;
                self.log(now, EventKind::Skip {});
                out.extend(self.broadcast_round_end(&summary, now));
            }
            Body::ActivityNotice { actor, activity } => {
                let role = self.role_of(sender).ok_or(GameError::NoActiveRound)?;
                if actor != role {
                    return Err(ProtocolError::RoleViolation(format!("sender is the {role:?}, not the {actor:?}")));
                }
                if role != Role::Student || activity != Activity::Typing {
                    return Err(ProtocolError::Unexpected(
                        "only student typing notices are relayed; other activity is inferred".into(),
                    ));
                }
                let partner = self.session.partner_of(sender).expect("member").clone();
                out.push(Outbound {
                    to: partner,
                    body: Body::ActivityNotice { actor, activity },
                });
            }
            other => {
                return Err(ProtocolError::Unexpected(format!("{} is not valid inside a session", other.kind())));
            }
        }
        Ok(out)
    }

    /// Advances the authoritative clock: places a due bubble and abandons the
    /// session once a disconnected player's grace runs out.
    pub fn tick(&mut self, now: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        if self.status != Status::Active {
            return out;
        }
        if let Some(slot) = self
            .conns
            .iter()
            .position(|c| c.disconnected_at.is_some_and(|t| now >= t + RECONNECT_GRACE_MS))
        {
            let gone = if slot == 0 { &self.session.player_a } else { &self.session.player_b }.clone();
            out.extend(self.abandon(&format!("{gone} did not reconnect"), now));
            return out;
        }
        if let Some(b) = self.session.tick(now, &mut self.rng) {
            self.bubble_out(b, now, &mut out);
        }
        out
    }

    pub fn abandon(&mut self, reason: &str, now: u64) -> Vec<Outbound> {
        if self.status != Status::Active {
            return Vec::new();
        }
        self.log(now, EventKind::Abandoned { reason: reason.to_string() });
        self.status = Status::Abandoned;
        let mut out = Vec::new();
        self.to_both(Body::error(ErrorCode::SessionNotFound, format!("session abandoned: {reason}")), &mut out);
        out
    }

    pub fn disconnect(&mut self, p: &PlayerId, now: u64) {
        if let Ok(slot) = self.slot(p) {
            self.conns[slot].disconnected_at.get_or_insert(now);
        }
    }

    pub fn is_connected(&self, p: &PlayerId) -> bool {
        self.slot(p).is_ok_and(|s| self.conns[s].disconnected_at.is_none())
    }

    /// Resumes a player within the grace period: a fresh connection starts a
    /// new inbound sequence and gets the current round state again.
    pub fn reconnect(&mut self, p: &PlayerId, now: u64) -> Result<Vec<Outbound>, ProtocolError> {
        let slot = self.slot(p)?;
        if self.status != Status::Active {
            return Err(ProtocolError::SessionNotFound);
        }
        match self.conns[slot].disconnected_at {
            Some(t) if now >= t + RECONNECT_GRACE_MS => return Err(ProtocolError::SessionNotFound),
            _ => {}
        }
        self.conns[slot] = Connection::default();
        let s = &self.session;
        let mut out = vec![Outbound {
            to: p.clone(),
            body: Body::Paired {
                session_id: s.session_id.clone(),
                partner: s.partner_of(p).expect("member").to_string(),
                bot: self.bot,
                total_rounds: s.total_rounds(),
            },
        }];
        if let Some(bodies) = self.round_start_bodies() {
            for (to, body) in bodies {
                if &to == p {
                    out.push(Outbound { to, body });
                }
            }
        }
        if let Some(r) = s.current_round() {
            let cfg = s.config;
            if &r.student == p {
                let px = self.pixels.image(&r.image_id);
                for b in &r.bubbles {
                    let ext = cfg.bubble_extent(b.x, b.y);
                    out.push(Outbound {
                        to: p.clone(),
                        body: Body::PatchRevealed {
                            seq: b.seq,
                            x: ext.x,
                            y: ext.y,
                            w: ext.w,
                            h: ext.h,
                            pixels: px.as_ref().map(|px| Pixels(crop(px, cfg.image_width, ext))),
                        },
                    });
                }
            }
            out.push(Outbound {
                to: p.clone(),
                body: Body::ScoreUpdate {
                    round_index: r.round_index,
                    round_bubbles: r.bubbles.len() as u32,
                    total_score: s.score,
                    bubble: None,
                },
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameConfig, ImageRecord, Outcome};
    use rand::SeedableRng;

    fn manifest(n: usize) -> Arc<Manifest> {
        let images = (0..n)
            .map(|i| ImageRecord::new(format!("img{i}"), if i % 2 == 0 { "dog" } else { "cat" }, ["border collie"], format!("{i}.rgb")).unwrap())
            .collect();
        Arc::new(Manifest::new(images).unwrap())
    }

    fn rgb(seed: u8) -> Arc<Vec<u8>> {
        Arc::new((0..300 * 300 * 3).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect())
    }

    fn transport(n: usize, pixels: Arc<dyn PixelSource>) -> SessionTransport {
        let m = manifest(n);
        let seq = m.ids();
        let s = GameSession::with_sequence("s", "a".into(), "b".into(), seq, GameConfig::default()).unwrap();
        SessionTransport::new(s, m, pixels, DetRng::seed_from_u64(1), false)
    }

    fn only_to<'a>(out: &'a [Outbound], who: &str) -> Vec<&'a Body> {
        out.iter().filter(|o| o.to.as_str() == who).map(|o| &o.body).collect()
    }

    #[test]
    fn start_sends_roles_and_image_to_teacher_only() {
        let px = Arc::new(MemoryPixels(HashMap::from([("img0".to_string(), rgb(0))])));
        let mut t = transport(2, px);
        let out = t.start(0);
        let a = only_to(&out, "a");
        let b = only_to(&out, "b");
        assert!(matches!(a[1], Body::RoundStart { role: Role::Teacher, image: Some(_), .. }));
        assert!(matches!(b[1], Body::RoundStart { role: Role::Student, image: None, .. }));
        assert!(b.contains(&&Body::ActivityNotice { actor: Role::Teacher, activity: Activity::Considering }));
    }

    #[test]
    fn teacher_cursor_reveals_patch_to_student() {
        let image = rgb(3);
        let px = Arc::new(MemoryPixels(HashMap::from([("img0".to_string(), image.clone())])));
        let mut t = transport(2, px);
        t.start(0);
        let out = t.handle(&"a".into(), Body::CursorMove { x: 150, y: 150 }, 10).unwrap();
        let to_b = only_to(&out, "b");
        let Some(Body::PatchRevealed { x, y, w, h, pixels: Some(p), .. }) =
            to_b.iter().find(|b| matches!(b, Body::PatchRevealed { .. }))
        else {
            panic!("{to_b:?}")
        };
        assert_eq!((*x, *y, *w, *h), (141, 141, 18, 18));
        assert_eq!(p.0, crop(&image, 300, Rect { x: 141, y: 141, w: 18, h: 18 }));
        assert!(only_to(&out, "a").iter().all(|b| !matches!(b, Body::PatchRevealed { .. })));
        assert!(matches!(only_to(&out, "a")[0], Body::ScoreUpdate { bubble: Some(_), .. }));
    }

    #[test]
    fn student_cursor_is_a_role_violation() {
        let mut t = transport(2, Arc::new(NoPixels));
        t.start(0);
        let before = t.session().clone();
        let err = t.handle(&"b".into(), Body::CursorMove { x: 1, y: 1 }, 5).unwrap_err();
        assert_eq!(err.code(), ErrorCode::RoleViolation);
        assert_eq!(t.session(), &before);
        assert_eq!(t.drain_events().len(), 2);
    }

    #[test]
    fn correct_guess_flows_to_next_round() {
        let mut t = transport(2, Arc::new(NoPixels));
        t.start(0);
        t.handle(&"a".into(), Body::CursorMove { x: 20, y: 20 }, 0).unwrap();
        let out = t.handle(&"b".into(), Body::GuessSubmit { text: "Dog".into() }, 40).unwrap();
        for who in ["a", "b"] {
            assert!(only_to(&out, who).contains(&&Body::GuessResult { text: "Dog".into(), verdict: Verdict::Correct }));
        }
        assert!(only_to(&out, "a").contains(&&Body::ActivityNotice { actor: Role::Student, activity: Activity::Correct }));
        let kinds: Vec<&str> = only_to(&out, "a").iter().map(|b| b.kind()).collect();
        assert_eq!(kinds, ["guess_result", "activity_notice", "round_end", "round_start", "activity_notice"]);
        // roles swap
        assert!(matches!(only_to(&out, "a")[3], Body::RoundStart { round_index: 1, role: Role::Student, .. }));
    }

    #[test]
    fn skip_on_last_round_ends_game() {
        let mut t = transport(1, Arc::new(NoPixels));
        t.start(0);
        let out = t.handle(&"b".into(), Body::Skip {}, 5).unwrap();
        assert!(matches!(
            only_to(&out, "a")[0],
            Body::RoundEnd { outcome: Outcome::Skipped, round_score: 100, total_score: 100, .. }
        ));
        assert!(matches!(only_to(&out, "b")[1], Body::GameEnd { final_score: 100, rounds_played: 1, .. }));
        assert_eq!(t.status(), Status::Complete);
        assert_eq!(t.handle(&"b".into(), Body::Skip {}, 6).unwrap_err(), ProtocolError::SessionNotFound);
    }

    #[test]
    fn cursor_rate_limit_drops_excess() {
        let mut t = transport(1, Arc::new(NoPixels));
        t.start(0);
        for i in 0..CURSOR_RATE_LIMIT as u64 {
            t.handle(&"a".into(), Body::CursorMove { x: 10, y: 10 }, i).unwrap();
        }
        t.drain_events();
        assert!(t.handle(&"a".into(), Body::CursorMove { x: 11, y: 10 }, 100).unwrap().is_empty());
        assert!(t.drain_events().is_empty());
        t.handle(&"a".into(), Body::CursorMove { x: 11, y: 10 }, 1000).unwrap();
        assert_eq!(t.drain_events().len(), 1);
    }

    #[test]
    fn sequence_and_foreign_players() {
        let mut t = transport(1, Arc::new(NoPixels));
        t.start(0);
        let m = |seq| Message { seq, sent_at: 0, body: Body::CursorMove { x: 1, y: 1 } };
        t.handle_message(&"a".into(), m(0), 0).unwrap();
        assert_eq!(t.handle_message(&"a".into(), m(0), 1).unwrap_err().code(), ErrorCode::SequenceViolation);
        assert_eq!(t.handle(&"zed".into(), Body::Skip {}, 1).unwrap_err(), ProtocolError::SessionNotFound);
        assert_eq!(
            t.handle(&"a".into(), Body::JoinLobby { player_id: "a".into() }, 1).unwrap_err().code(),
            ErrorCode::UnexpectedMessage
        );
    }

    #[test]
    fn grace_period_then_abandon() {
        let mut t = transport(1, Arc::new(NoPixels));
        t.start(0);
        t.disconnect(&"b".into(), 1_000);
        assert!(t.tick(30_999).is_empty());
        let back = t.reconnect(&"b".into(), 2_000).unwrap();
        assert!(matches!(back[1].body, Body::RoundStart { role: Role::Student, .. }));
        t.disconnect(&"b".into(), 5_000);
        assert_eq!(t.next_wakeup(), Some(35_000));
        let out = t.tick(35_000);
        assert_eq!(out.len(), 2);
        assert_eq!(t.status(), Status::Abandoned);
        assert!(matches!(t.drain_events().last().unwrap().kind, EventKind::Abandoned { .. }));
    }
}
