//! One running session: owns its transport, its log writer and, for bot
//! fallback games, the bot. Client messages and clock ticks are applied in a
//! single order.

use std::collections::{HashMap, VecDeque};
use std::time::Duration;

use clicktionary_core::bots::BotPlayer;
use clicktionary_core::protocol::{Body, Outbound, SessionTransport, Status};
use clicktionary_core::storage::EventLog;
use clicktionary_core::PlayerId;
use tokio::sync::{mpsc, oneshot};
use tokio::time::MissedTickBehavior;

use crate::clock::Clock;
use crate::conn::{send, ConnCmd, ConnTx};
use crate::hub::{board_body, EndReply, HubCmd, SessionEnded};

#[derive(Debug)]
pub(crate) enum SessionCmd {
    Inbound { player: PlayerId, body: Body },
    Disconnect(PlayerId),
    Reconnect { player: PlayerId, tx: ConnTx },
}

pub(crate) struct SessionActor {
    pub transport: SessionTransport,
    pub bot: Option<BotPlayer>,
    pub conns: HashMap<PlayerId, ConnTx>,
    pub log: EventLog,
    pub hub: mpsc::UnboundedSender<HubCmd>,
    pub clock: Clock,
    pub tick_ms: u64,
}

impl SessionActor {
    pub(crate) async fn run(mut self, mut rx: mpsc::UnboundedReceiver<SessionCmd>) {
        let now = self.clock.now();
        let out = self.transport.start(now);
        self.step(out, now).await;
        let mut ticks = tokio::time::interval(Duration::from_millis(self.tick_ms));
        ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
        while self.transport.status() == Status::Active {
            tokio::select! {
                cmd = rx.recv() => {
                    let now = self.clock.now();
                    let out = match cmd {
                        Some(cmd) => self.apply(cmd, now),
                        None => self.transport.abandon("server shutting down", now),
                    };
                    self.step(out, now).await;
                }
                _ = ticks.tick() => {
                    let now = self.clock.now();
                    let out = self.transport.tick(now);
                    self.step(out, now).await;
                }
            }
        }
    }

    fn apply(&mut self, cmd: SessionCmd, now: u64) -> Vec<Outbound> {
        match cmd {
            SessionCmd::Inbound { player, body } => match self.transport.handle(&player, body, now) {
                Ok(out) => out,
                Err(e) => {
                    if let Some(tx) = self.conns.get(&player) {
                        send(tx, e.to_body());
                    }
                    Vec::new()
                }
            },
            SessionCmd::Disconnect(player) => {
                self.transport.disconnect(&player, now);
                Vec::new()
            }
            SessionCmd::Reconnect { player, tx } => match self.transport.reconnect(&player, now) {
                Ok(out) => {
                    self.conns.insert(player, tx);
                    out
                }
                Err(e) => {
                    send(&tx, e.to_body());
                    let _ = tx.send(ConnCmd::Close);
                    Vec::new()
                }
            },
        }
    }

    /// Lets the bot react, persists the new events, then delivers.
    async fn step(&mut self, out: Vec<Outbound>, now: u64) {
        let mut queue: VecDeque<Outbound> = out.into();
        let mut ready = Vec::new();
        while let Some(o) = queue.pop_front() {
            let Some(bot) = self.bot.as_mut().filter(|b| b.id == o.to) else {
                ready.push(o);
                continue;
            };
            let image = self.transport.current_image().map(str::to_string);
            for action in bot.on_message(&o.body, image.as_deref()) {
                match self.transport.handle(&bot.id, action, now) {
                    Ok(more) => queue.extend(more),
                    Err(e) => tracing::debug!(session = %self.transport.session().session_id, "bot action refused: {e}"),
                }
            }
        }
        let events = self.transport.drain_events();
        if let Err(e) = self.log.append_all(&events) {
            tracing::error!(session = %self.transport.session().session_id, "event log: {e}");
            ready.extend(self.transport.abandon("storage failure", now));
            let _ = self.log.append_all(&self.transport.drain_events());
        }
        if self.transport.status() != Status::Active {
            if let Some(end) = self.report_end().await {
                for o in &mut ready {
                    if let Body::GameEnd { rank, .. } = &mut o.body {
                        *rank = end.rank;
                    }
                }
                if self.transport.status() == Status::Complete {
                    let board = board_body(&end.board);
                    for p in self.conns.keys() {
                        ready.push(Outbound { to: p.clone(), body: board.clone() });
                    }
                }
            }
        }
        for o in ready {
            if let Some(tx) = self.conns.get(&o.to) {
                send(tx, o.body);
            }
        }
    }

    async fn report_end(&mut self) -> Option<EndReply> {
        let s = self.transport.session();
        let (reply, rank) = oneshot::channel();
        let ended = SessionEnded {
            session_id: s.session_id.clone(),
            players: [s.player_a.clone(), s.player_b.clone()],
            complete: self.transport.status() == Status::Complete,
            bot: self.transport.is_bot_session(),
            score: s.score,
            reply,
        };
        if self.hub.send(HubCmd::SessionOver(ended)).is_err() {
            return None;
        }
        rank.await.ok()
    }
}
