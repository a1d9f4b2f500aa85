use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BotPlayer, StudentPolicy, Strategy, TeacherPolicy, World, WorldConfig};
use crate::game::{GameConfig, GameError, GameSession, ImageRecord, Manifest, PlayerId};
use crate::protocol::{NoPixels, Outbound, ProtocolError, SessionTransport, Status};
use crate::seed::{domain, rng_for};
use crate::storage::Event;

/// 2024-01-01T00:00:00Z; the default simulated clock origin.
pub const DEFAULT_START_MS: u64 = 1_704_067_200_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("session {session}: {source}")]
    Protocol {
        session: String,
        #[source]
        source: ProtocolError,
    },
    #[error("session {0} stalled: nothing scheduled and no bot acting")]
    Stalled(String),
    #[error("reading {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationGroup {
    pub name: String,
    pub pairs: usize,
    #[serde(default)]
    pub teacher: TeacherPolicy,
    #[serde(default)]
    pub student: StudentPolicy,
}

/// A simulated population. Read from TOML:
///
/// ```toml
/// seed = 7
/// images = 10            # synthetic images, when no manifest is given
/// # manifest = "images.jsonl"
///
/// [world]
/// hotspot_sigma = 16.0
///
/// [[groups]]
/// name = "hotspot"
/// pairs = 20
/// teacher = { strategy = "hotspot_walk", noise_scale = 4.0 }
/// student = { recognition_threshold = 0.5 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "default_images")]
    pub images: usize,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default = "default_start")]
    pub start_ms: u64,
    pub groups: Vec<PopulationGroup>,
}

fn default_images() -> usize {
    10
}

fn default_start() -> u64 {
    DEFAULT_START_MS
}

impl Scenario {
    fn base(seed: u64, images: usize, groups: Vec<PopulationGroup>) -> Self {
        Self {
            seed,
            images,
            manifest: None,
            world: WorldConfig::default(),
            game: GameConfig::default(),
            start_ms: DEFAULT_START_MS,
            groups,
        }
    }

    /// Every pair is drawn to the same hotspot on each image.
    pub fn hotspot(pairs: usize, images: usize, seed: u64) -> Self {
        Self::base(
            seed,
            images,
            vec![PopulationGroup {
                name: "hotspot".into(),
                pairs,
                teacher: TeacherPolicy::default(),
                student: StudentPolicy {
                    guess_noise: 0.1,
                    ..Default::default()
                },
            }],
        )
    }

    /// Independent random walkers; students name the image after a fixed
    /// number of patches whatever they show.
    pub fn uniform(pairs: usize, images: usize, seed: u64) -> Self {
        Self::base(seed, images, vec![Self::wanderers(pairs)])
    }

    /// Half tight hotspot pairs, half wanderers.
    pub fn mixed(pairs: usize, images: usize, seed: u64) -> Self {
        let tight = pairs / 2;
        Self::base(
            seed,
            images,
            vec![
                PopulationGroup {
                    name: "tight".into(),
                    pairs: tight,
                    teacher: TeacherPolicy {
                        noise_scale: 2.0,
                        ..Default::default()
                    },
                    student: StudentPolicy::default(),
                },
                Self::wanderers(pairs - tight),
            ],
        )
    }

    fn wanderers(pairs: usize) -> PopulationGroup {
        PopulationGroup {
            name: "wander".into(),
            pairs,
            teacher: TeacherPolicy {
                strategy: Strategy::UniformWalk,
                ..Default::default()
            },
            student: StudentPolicy {
                recognition_threshold: 0.0,
                min_patches: 40,
                ..Default::default()
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut s = Self::from_toml(&text)?;
        if let Some(m) = &s.manifest {
            if m.is_relative() {
                s.manifest = Some(path.parent().unwrap_or(Path::new(".")).join(m));
            }
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.game.validate()?;
        if self.total_pairs() == 0 {
            return Err(SimError::Scenario("no pairs to simulate".into()));
        }
        if self.manifest.is_none() && self.images == 0 {
            return Err(SimError::Scenario("no images".into()));
        }
        for g in &self.groups {
            let s = &g.student;
            if !(0.0..=1.0).contains(&s.recognition_threshold) || !(0.0..=1.0).contains(&s.guess_noise) {
                return Err(SimError::Scenario(format!("group {}: probabilities must lie in [0, 1]", g.name)));
            }
            if !(g.teacher.noise_scale >= 0.0 && g.teacher.noise_scale.is_finite()) {
                return Err(SimError::Scenario(format!("group {}: noise_scale must be >= 0", g.name)));
            }
            if s.give_up_after == 0 {
                return Err(SimError::Scenario(format!("group {}: give_up_after must be >= 1", g.name)));
            }
        }
        Ok(())
    }

    pub fn total_pairs(&self) -> usize {
        self.groups.iter().map(|g| g.pairs).sum()
    }

    /// The scenario's manifest, or synthetic images when it names none.
    pub fn load_manifest(&self) -> Result<Manifest, SimError> {
        match &self.manifest {
            Some(p) => Ok(Manifest::load(p)?),
            None => Ok(synthetic_manifest(self.images)),
        }
    }

    fn group_of(&self, pair: usize) -> &PopulationGroup {
        let mut k = pair;
        for g in &self.groups {
            if k < g.pairs {
                return g;
            }
            k -= g.pairs;
        }
        unreachable!("pair index beyond the population")
    }
}

const CATEGORIES: [&str; 12] = [
    "dog", "cat", "bird", "car", "boat", "chair", "horse", "plane", "bottle", "lamp", "tree", "clock",
];

/// `n` placeholder images cycling through a fixed category list.
pub fn synthetic_manifest(n: usize) -> Manifest {
    let images = (0..n)
        .map(|i| {
            let cat = CATEGORIES[i % CATEGORIES.len()];
            ImageRecord::new(format!("img{i:03}"), cat, [cat], format!("img{i:03}.rgb")).expect("valid record")
        })
        .collect();
    Manifest::new(images).expect("unique ids")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSession {
    pub session_id: String,
    pub group: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub sessions: Vec<SimSession>,
    pub world: Arc<World>,
}

/// Runs a session between two bots on a simulated clock until it ends.
/// Bots answer instantly; the clock jumps tick to tick, landing where a
/// fixed `tick_ms` poll would.
pub fn run_session(transport: &mut SessionTransport, bots: &mut [BotPlayer; 2], start_ms: u64) -> Result<Vec<Event>, SimError> {
    let tick = transport.session().config.tick_resolution_ms.max(1);
    let sid = transport.session().session_id.clone();
    let mut now = start_ms.div_ceil(tick) * tick;
    let mut queue: VecDeque<Outbound> = transport.start(now).into();
    let mut events = Vec::new();
    loop {
        while let Some(o) = queue.pop_front() {
            let Some(bot) = bots.iter_mut().find(|b| b.id == o.to) else { continue };
            let actions = bot.on_message(&o.body, transport.current_image());
            let sender = bot.id.clone();
            for a in actions {
                let out = transport.handle(&sender, a, now).map_err(|source| SimError::Protocol {
                    session: sid.clone(),
                    source,
                })?;
                queue.extend(out);
            }
        }
        events.extend(transport.drain_events());
        if transport.status() != Status::Active {
            return Ok(events);
        }
        let due = transport.next_wakeup().ok_or_else(|| SimError::Stalled(sid.clone()))?;
        now = due.max(now + 1).div_ceil(tick) * tick;
        queue.extend(transport.tick(now));
    }
}

/// Plays every pair of the scenario through the real transport and returns
/// their event logs, in pair order. Each pair's randomness comes from its own
/// sub-seed, so the output does not depend on how the work is scheduled.
pub fn simulate_population(scenario: &Scenario, manifest: &Manifest) -> Result<SimulationOutput, SimError> {
    scenario.validate()?;
    let manifest = Arc::new(manifest.clone());
    let cfg = scenario.game;
    let world = Arc::new(World::generate(
        &manifest,
        &scenario.world,
        cfg.image_width,
        cfg.image_height,
        scenario.seed,
    ));
    let ids = manifest.ids();
    let sessions = (0..scenario.total_pairs())
        .into_par_iter()
        .map(|i| {
            let group = scenario.group_of(i);
            let session_id = format!("sim{}-{i:04}", scenario.seed);
            let a = PlayerId::new(format!("{session_id}-a"));
            let b = PlayerId::new(format!("{session_id}-b"));
            let mut rng = rng_for(scenario.seed, domain::SESSION, i as u64);
            let session = GameSession::new(session_id.clone(), a.clone(), b.clone(), &ids, cfg, &mut rng)?;
            let mut transport = SessionTransport::new(session, manifest.clone(), Arc::new(NoPixels), rng, false);
            let bot = |p: PlayerId, k: u64| {
                BotPlayer::new(
                    p,
                    group.teacher,
                    group.student,
                    world.clone(),
                    manifest.clone(),
                    cfg.bubble_size,
                    rng_for(scenario.seed, domain::NOISE, 2 * i as u64 + k),
                )
            };
            let mut bots = [bot(a, 0), bot(b, 1)];
            let events = run_session(&mut transport, &mut bots, scenario.start_ms)?;
            Ok(SimSession {
                session_id,
                group: group.name.clone(),
                events,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(SimulationOutput { sessions, world })
}
