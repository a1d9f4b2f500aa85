//! TCP server for the Clicktionary game.
//!
//! One task per connection frames messages and hands them to the hub, which
//! owns the lobby and leaderboard. Each paired session runs as its own actor
//! with a private mailbox and tick timer, so distinct sessions progress
//! independently. Every session transition is appended to the event log
//! under `<data_dir>/logs` before the resulting messages go out.

mod client;
mod clock;
mod conn;
mod hub;
mod pixels;
mod session;

use std::future::Future;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clicktionary_core::bots::{World, WorldConfig};
use clicktionary_core::lobby::{Leaderboard, Lobby, LobbyError, BOT_FALLBACK_MS};
use clicktionary_core::storage::{read_events, Durability, EventKind, EventLog, StorageError};
use clicktionary_core::{GameConfig, GameError, Manifest};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::mpsc;

pub use client::Client;
pub use clock::Clock;
pub use hub::BOT_STUDENT_PATCHES;
pub use pixels::FilePixels;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("config: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(#[from] GameError),
    #[error("event log: {0}")]
    Storage(#[from] StorageError),
    #[error("leaderboard: {0}")]
    Leaderboard(#[from] LobbyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub listen: String,
    /// Authoritative clock resolution; also how often the lobby pairs.
    pub tick_ms: u64,
    pub manifest: PathBuf,
    pub data_dir: PathBuf,
    /// How long a lone player waits before a bot partner is assigned.
    pub bot_wait_ms: u64,
    pub seed: u64,
    pub game: GameConfig,
    pub durability: Durability,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".into(),
            tick_ms: 10,
            manifest: PathBuf::from("manifest.jsonl"),
            data_dir: PathBuf::from("data"),
            bot_wait_ms: BOT_FALLBACK_MS,
            seed: 0,
            game: GameConfig::default(),
            durability: Durability::Sync,
        }
    }
}

impl ServerConfig {
    pub fn leaderboard_path(&self) -> PathBuf {
        self.data_dir.join("leaderboard.csv")
    }

    pub fn log_dir(&self) -> PathBuf {
        self.data_dir.join("logs")
    }
}

/// Reads the leaderboard file, or an empty board when there is none yet.
pub fn load_leaderboard(path: &Path) -> Result<Leaderboard, ServerError> {
    match std::fs::File::open(path) {
        Ok(f) => Ok(Leaderboard::read_csv(f)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Leaderboard::default()),
        Err(e) => Err(e.into()),
    }
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<hub::Shared>,
    lobby: Lobby,
    next_session: u64,
}

impl Server {
    /// Loads the manifest, the leaderboard and the set of players who have
    /// already played, then binds the listening socket.
    pub async fn bind(cfg: ServerConfig) -> Result<Self, ServerError> {
        if cfg.tick_ms == 0 {
            return Err(ServerError::Config("tick must be at least 1 ms".into()));
        }
        let mut game = cfg.game;
        game.tick_resolution_ms = cfg.tick_ms;
        game.validate()?;
        let manifest = Manifest::load(&cfg.manifest)?;
        if manifest.is_empty() {
            return Err(ServerError::Config(format!("{} lists no images", cfg.manifest.display())));
        }
        std::fs::create_dir_all(cfg.log_dir())?;

        let mut lobby = Lobby::new(cfg.bot_wait_ms);
        lobby.leaderboard = load_leaderboard(&cfg.leaderboard_path())?;
        let log = EventLog::new(cfg.log_dir());
        let sessions = log.sessions()?;
        for path in sessions.values() {
            // a log cut short by a crash still names its players
            let first = read_events(path).ok().and_then(|ev| ev.into_iter().next());
            if let Some(EventKind::SessionStart { player_a, player_b, .. }) = first.map(|e| e.kind) {
                lobby.mark_played([player_a, player_b]);
            }
        }

        let base = cfg.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
        let pixels = FilePixels::new(&manifest, &base, game.image_width, game.image_height);
        let world = World::generate(&manifest, &WorldConfig::default(), game.image_width, game.image_height, cfg.seed);
        let listener = TcpListener::bind(&cfg.listen).await?;
        let shared = hub::Shared {
            image_ids: manifest.ids(),
            manifest: Arc::new(manifest),
            pixels: Arc::new(pixels),
            world: Arc::new(world),
            game,
            logs: cfg.log_dir(),
            leaderboard_path: cfg.leaderboard_path(),
            durability: cfg.durability,
            seed: cfg.seed,
            clock: Clock::start(),
        };
        Ok(Self {
            listener,
            shared: Arc::new(shared),
            lobby,
            next_session: sessions.len() as u64,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until `shutdown` resolves.
    pub async fn run_until<F: Future<Output = ()>>(self, shutdown: F) -> Result<(), ServerError> {
        let (hub_tx, hub_rx) = mpsc::unbounded_channel();
        let clock = self.shared.clock;
        let tick = self.shared.game.tick_resolution_ms;
        let hub = hub::Hub::new(self.shared, self.lobby, self.next_session, hub_tx.clone());
        tokio::spawn(hub.run(hub_rx, tick));
        tokio::pin!(shutdown);
        let mut conn_id = 0u64;
        loop {
            tokio::select! {
                _ = &mut shutdown => return Ok(()),
                accepted = self.listener.accept() => {
                    let (stream, peer) = match accepted {
                        Ok(a) => a,
                        Err(e) => {
                            tracing::warn!("accept failed: {e}");
                            continue;
                        }
                    };
                    tracing::debug!(%peer, conn_id, "connection");
                    tokio::spawn(conn::serve(stream, conn_id, hub_tx.clone(), clock));
                    conn_id += 1;
                }
            }
        }
    }
}
