//! The single owner of cross-session state: the lobby, the leaderboard, and
//! the routing of each player's messages to their session.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clicktionary_core::bots::{BotPlayer, StudentPolicy, Strategy, TeacherPolicy, World};
use clicktionary_core::lobby::{Leaderboard, Lobby, LobbyError, PairingEvent, TeamLabel};
use clicktionary_core::protocol::{Body, ErrorCode, PixelSource, SessionTransport};
use clicktionary_core::seed::{domain, rng_for};
use clicktionary_core::storage::{Durability, EventLog};
use clicktionary_core::{GameConfig, GameSession, Manifest, PlayerId};
use tokio::sync::{mpsc, oneshot};
use tokio::time::MissedTickBehavior;

use crate::clock::Clock;
use crate::conn::{send, ConnCmd, ConnTx};
use crate::session::{SessionActor, SessionCmd};

/// Patches a bot student waits for before naming the image. The bot has no
/// notion of what the real image shows, so it answers after a fixed count.
pub const BOT_STUDENT_PATCHES: u32 = 30;

pub(crate) struct EndReply {
    pub rank: Option<usize>,
    pub board: Leaderboard,
}

pub(crate) struct SessionEnded {
    pub session_id: String,
    pub players: [PlayerId; 2],
    pub complete: bool,
    pub bot: bool,
    pub score: u64,
    pub reply: oneshot::Sender<EndReply>,
}

pub(crate) enum HubCmd {
    Join { player: PlayerId, conn_id: u64, tx: ConnTx },
    Inbound { player: PlayerId, conn_id: u64, body: Body },
    Closed { player: PlayerId, conn_id: u64 },
    SessionOver(SessionEnded),
}

/// Everything a session needs that does not change while the server runs.
pub(crate) struct Shared {
    pub manifest: Arc<Manifest>,
    pub image_ids: Vec<String>,
    pub pixels: Arc<dyn PixelSource>,
    pub world: Arc<World>,
    pub game: GameConfig,
    pub logs: PathBuf,
    pub leaderboard_path: PathBuf,
    pub durability: Durability,
    pub seed: u64,
    pub clock: Clock,
}

struct Route {
    session_id: String,
    tx: mpsc::UnboundedSender<SessionCmd>,
}

pub(crate) struct Hub {
    pub shared: Arc<Shared>,
    pub lobby: Lobby,
    pub next_session: u64,
    pub tx: mpsc::UnboundedSender<HubCmd>,
    conns: HashMap<PlayerId, (u64, ConnTx)>,
    routes: HashMap<PlayerId, Route>,
}

impl Hub {
    pub(crate) fn new(shared: Arc<Shared>, lobby: Lobby, next_session: u64, tx: mpsc::UnboundedSender<HubCmd>) -> Self {
        Self {
            shared,
            lobby,
            next_session,
            tx,
            conns: HashMap::new(),
            routes: HashMap::new(),
        }
    }

    pub(crate) async fn run(mut self, mut rx: mpsc::UnboundedReceiver<HubCmd>, match_every_ms: u64) {
        let mut ticks = tokio::time::interval(Duration::from_millis(match_every_ms));
        ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.apply(cmd),
                    None => break,
                },
                _ = ticks.tick() => self.match_tick(),
            }
        }
    }

    fn apply(&mut self, cmd: HubCmd) {
        let now = self.shared.clock.now();
        match cmd {
            HubCmd::Join { player, conn_id, tx } => self.join(player, conn_id, tx, now),
            HubCmd::Inbound { player, conn_id, body } => {
                if self.conns.get(&player).map(|c| c.0) != Some(conn_id) {
                    return;
                }
                let tx = &self.conns[&player].1;
                if let Body::Leaderboard { .. } = body {
                    send(tx, board_body(&self.lobby.leaderboard));
                } else if let Some(route) = self.routes.get(&player) {
                    let _ = route.tx.send(SessionCmd::Inbound { player, body });
                } else {
                    send(tx, Body::error(ErrorCode::UnexpectedMessage, "not in a session"));
                }
            }
            HubCmd::Closed { player, conn_id } => {
                if self.conns.get(&player).map(|c| c.0) != Some(conn_id) {
                    return;
                }
                self.conns.remove(&player);
                match self.routes.get(&player) {
                    Some(route) => {
                        let _ = route.tx.send(SessionCmd::Disconnect(player));
                    }
                    None => {
                        self.lobby.leave(&player);
                    }
                }
            }
            HubCmd::SessionOver(ended) => self.session_over(ended, now),
        }
    }

    fn join(&mut self, player: PlayerId, conn_id: u64, tx: ConnTx, now: u64) {
        if let Some(route) = self.routes.get(&player) {
            tracing::info!(player = %player, session = %route.session_id, "reconnecting");
            self.conns.insert(player.clone(), (conn_id, tx.clone()));
            let _ = route.tx.send(SessionCmd::Reconnect { player, tx });
            return;
        }
        match self.lobby.enter_lobby(player.clone(), now) {
            Ok((_, board)) => {
                tracing::info!(player = %player, "entered the lobby");
                send(&tx, board_body(&board));
                self.conns.insert(player, (conn_id, tx));
            }
            Err(e @ LobbyError::AlreadyPlayed(_)) => {
                send(&tx, Body::error(ErrorCode::AlreadyPlayed, e.to_string()));
                let _ = tx.send(ConnCmd::Close);
            }
            Err(e) => {
                send(&tx, Body::error(ErrorCode::Internal, e.to_string()));
                let _ = tx.send(ConnCmd::Close);
            }
        }
    }

    fn match_tick(&mut self) {
        let now = self.shared.clock.now();
        for event in self.lobby.match_tick(now) {
            match event {
                PairingEvent::Paired { first, second } => self.start_session(first, Some(second), now),
                PairingEvent::BotAssigned { player, waited_ms } => {
                    tracing::info!(player = %player, waited_ms, "no partner; playing a bot");
                    self.start_session(player, None, now)
                }
            }
        }
    }

    /// `second` is None for a bot fallback game.
    fn start_session(&mut self, first: PlayerId, second: Option<PlayerId>, now: u64) {
        let idx = self.next_session;
        self.next_session += 1;
        let sh = Arc::clone(&self.shared);
        let session_id = format!("s{now}-{idx:04}");
        let bot_id = PlayerId::new(format!("bot-{session_id}"));
        let partner = second.clone().unwrap_or_else(|| bot_id.clone());
        let mut rng = rng_for(sh.seed, domain::SESSION, idx);
        let session = match GameSession::new(&session_id, first.clone(), partner, &sh.image_ids, sh.game, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                tracing::error!("cannot start a session: {e}");
                for p in std::iter::once(&first).chain(second.as_ref()) {
                    if let Some((_, tx)) = self.conns.get(p) {
                        send(tx, Body::error(ErrorCode::Internal, e.to_string()));
                    }
                }
                return;
            }
        };
        let bot = second.is_none().then(|| {
            BotPlayer::new(
                bot_id,
                TeacherPolicy {
                    strategy: Strategy::UniformWalk,
                    ..Default::default()
                },
                StudentPolicy {
                    recognition_threshold: 0.0,
                    min_patches: BOT_STUDENT_PATCHES,
                    ..Default::default()
                },
                Arc::clone(&sh.world),
                Arc::clone(&sh.manifest),
                sh.game.bubble_size,
                rng_for(sh.seed, domain::NOISE, idx),
            )
        });
        let transport = SessionTransport::new(session, Arc::clone(&sh.manifest), Arc::clone(&sh.pixels), rng, bot.is_some());
        let (stx, srx) = mpsc::unbounded_channel();
        let mut conns = HashMap::new();
        for p in std::iter::once(first).chain(second) {
            if let Some((_, tx)) = self.conns.get(&p) {
                conns.insert(p.clone(), tx.clone());
            }
            self.routes.insert(
                p,
                Route {
                    session_id: session_id.clone(),
                    tx: stx.clone(),
                },
            );
        }
        tracing::info!(session = %session_id, bot = bot.is_some(), "session started");
        let actor = SessionActor {
            transport,
            bot,
            conns,
            log: EventLog::new(&sh.logs).with_durability(sh.durability),
            hub: self.tx.clone(),
            clock: sh.clock,
            tick_ms: sh.game.tick_resolution_ms,
        };
        tokio::spawn(actor.run(srx));
    }

    fn session_over(&mut self, ended: SessionEnded, now: u64) {
        for p in &ended.players {
            if self.routes.get(p).is_some_and(|r| r.session_id == ended.session_id) {
                self.routes.remove(p);
            }
        }
        let mut rank = None;
        if ended.complete && !ended.bot {
            let [a, b] = ended.players;
            rank = self.lobby.record_result(&TeamLabel::new(a, b), ended.score, now);
            if rank.is_some() {
                if let Err(e) = self.save_leaderboard() {
                    tracing::error!("saving the leaderboard: {e}");
                }
            }
        }
        tracing::info!(session = %ended.session_id, complete = ended.complete, score = ended.score, ?rank, "session over");
        let _ = ended.reply.send(EndReply {
            rank,
            board: self.lobby.leaderboard.clone(),
        });
    }

    fn save_leaderboard(&self) -> std::io::Result<()> {
        let path = &self.shared.leaderboard_path;
        let tmp = path.with_extension("csv.tmp");
        let file = std::fs::File::create(&tmp)?;
        self.lobby
            .leaderboard
            .write_csv(file)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        std::fs::rename(tmp, path)
    }
}

pub(crate) fn board_body(board: &Leaderboard) -> Body {
    Body::Leaderboard {
        entries: board.entries().to_vec(),
        mean_score: board.mean_score(),
    }
}
