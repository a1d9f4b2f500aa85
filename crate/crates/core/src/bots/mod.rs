//! Scripted players. A [`BotPlayer`] speaks the session protocol like any
//! client: it sees only the messages addressed to it, plus the identity of the
//! current image, which stands in for actually looking at it.

mod sim;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::game::{extent, Manifest, PlayerId};
use crate::protocol::{Body, Role};
use crate::seed::{domain, rng_for, DetRng};

pub use sim::{
    run_session, simulate_population, synthetic_manifest, PopulationGroup, Scenario, SimError, SimSession,
    SimulationOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    HotspotWalk,
    UniformWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherPolicy {
    pub strategy: Strategy,
    /// Standard deviation in pixels of the jitter on the starting point.
    pub noise_scale: f64,
    /// Shift of the teacher's target away from the image hotspot, in pixels.
    pub target_offset: [i32; 2],
}

impl Default for TeacherPolicy {
    fn default() -> Self {
        Self {
            strategy: Strategy::HotspotWalk,
            noise_scale: 4.0,
            target_offset: [0, 0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentPolicy {
    /// Share of the diagnostic region that must be visible before guessing.
    pub recognition_threshold: f64,
    /// Chance of one wrong guess before the right one.
    pub guess_noise: f64,
    /// Skip once this many patches have arrived without recognition.
    pub give_up_after: u32,
    /// No guess before this many patches.
    pub min_patches: u32,
}

impl Default for StudentPolicy {
    fn default() -> Self {
        Self {
            recognition_threshold: 0.5,
            guess_noise: 0.0,
            give_up_after: 400,
            min_patches: 1,
        }
    }
}

impl StudentPolicy {
    /// Whether a student who has seen `covered` of `area` diagnostic pixels
    /// over `patches` patches would name the image.
    pub fn recognizes(&self, covered: u32, area: u32, patches: u32) -> bool {
        if patches < self.min_patches.max(1) {
            return false;
        }
        let share = if area == 0 { 1.0 } else { covered as f64 / area as f64 };
        share >= self.recognition_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Spread of the hotspot target around its center.
    pub hotspot_sigma: f64,
    /// Radius of the disk-shaped diagnostic region.
    pub mask_radius: f64,
    /// Hotspot centers keep this far from the border.
    pub margin: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            hotspot_sigma: 16.0,
            mask_radius: 24.0,
            margin: 40,
        }
    }
}

/// Ground truth for one image: where its diagnostic features sit.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageWorld {
    pub hotspot: (u32, u32),
    pub sigma: f64,
    /// Row-major diagnostic mask.
    pub mask: Vec<bool>,
    pub mask_area: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub width: u32,
    pub height: u32,
    pub images: BTreeMap<String, ImageWorld>,
}

impl World {
    /// Draws each image's hotspot from its own sub-seed, so adding images
    /// does not move the others.
    pub fn generate(manifest: &Manifest, cfg: &WorldConfig, width: u32, height: u32, seed: u64) -> Self {
        let mut images = BTreeMap::new();
        let margin = cfg.margin.min((width - 1) / 2).min((height - 1) / 2);
        for (i, img) in manifest.images().iter().enumerate() {
            let mut rng = rng_for(seed, domain::WORLD, i as u64);
            let cx = rng.gen_range(margin..width - margin);
            let cy = rng.gen_range(margin..height - margin);
            let r2 = cfg.mask_radius * cfg.mask_radius;
            let mask: Vec<bool> = (0..height)
                .flat_map(|y| (0..width).map(move |x| (x, y)))
                .map(|(x, y)| {
                    let (dx, dy) = (x as f64 - cx as f64, y as f64 - cy as f64);
                    dx * dx + dy * dy <= r2
                })
                .collect();
            let mask_area = mask.iter().filter(|&&m| m).count() as u32;
            images.insert(
                img.id.clone(),
                ImageWorld {
                    hotspot: (cx, cy),
                    sigma: cfg.hotspot_sigma,
                    mask,
                    mask_area,
                },
            );
        }
        Self { width, height, images }
    }
}

/// What a hotspot teacher is drawn to.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetMap {
    Gaussian { cx: f64, cy: f64, sigma: f64 },
    /// Row-major `height × width` grid.
    Grid { width: u32, values: Arc<Vec<f64>> },
}

impl TargetMap {
    pub fn value(&self, x: u32, y: u32) -> f64 {
        match self {
            TargetMap::Gaussian { cx, cy, sigma } => {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            }
            TargetMap::Grid { width, values } => values[(y * width + x) as usize],
        }
    }

    pub fn argmax(&self, width: u32, height: u32) -> (u32, u32) {
        match self {
            TargetMap::Gaussian { cx, cy, .. } => (
                cx.round().clamp(0.0, (width - 1) as f64) as u32,
                cy.round().clamp(0.0, (height - 1) as f64) as u32,
            ),
            TargetMap::Grid { .. } => self
                .best(width, height, |_, _| true)
                .unwrap_or((width / 2, height / 2)),
        }
    }

    /// Highest-valued pixel passing `keep`; earliest in row-major order on ties.
    fn best(&self, width: u32, height: u32, keep: impl Fn(u32, u32) -> bool) -> Option<(u32, u32)> {
        let mut best: Option<((u32, u32), f64)> = None;
        for y in 0..height {
            for x in 0..width {
                if !keep(x, y) {
                    continue;
                }
                let v = self.value(x, y);
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some(((x, y), v));
                }
            }
        }
        best.map(|(p, _)| p)
    }
}

#[derive(Debug, Clone)]
struct BotRound {
    role: Role,
    image_id: String,
    width: u32,
    height: u32,
    revealed: Vec<bool>,
    covered: u32,
    patches: u32,
    last: Option<(u32, u32)>,
    target: Option<TargetMap>,
    done: bool,
}

impl BotRound {
    fn reveal(&mut self, x: u32, y: u32, w: u32, h: u32, mask: Option<&[bool]>) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                let i = (yy * self.width + xx) as usize;
                if !self.revealed[i] {
                    self.revealed[i] = true;
                    if mask.is_some_and(|m| m[i]) {
                        self.covered += 1;
                    }
                }
            }
        }
    }
}

const RADIUS: i64 = 9;
const STEPS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// One scripted player, taking both roles as they alternate.
pub struct BotPlayer {
    pub id: PlayerId,
    teacher: TeacherPolicy,
    student: StudentPolicy,
    world: Arc<World>,
    manifest: Arc<Manifest>,
    bubble_size: u32,
    rng: DetRng,
    round: Option<BotRound>,
}

impl std::fmt::Debug for BotPlayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BotPlayer").field("id", &self.id).finish()
    }
}

impl BotPlayer {
    pub fn new(
        id: PlayerId,
        teacher: TeacherPolicy,
        student: StudentPolicy,
        world: Arc<World>,
        manifest: Arc<Manifest>,
        bubble_size: u32,
        rng: DetRng,
    ) -> Self {
        Self {
            id,
            teacher,
            student,
            world,
            manifest,
            bubble_size,
            rng,
            round: None,
        }
    }

    fn target_for(&self, image_id: &str) -> Option<TargetMap> {
        let w = self.world.images.get(image_id)?;
        Some(TargetMap::Gaussian {
            cx: w.hotspot.0 as f64 + self.teacher.target_offset[0] as f64,
            cy: w.hotspot.1 as f64 + self.teacher.target_offset[1] as f64,
            sigma: w.sigma,
        })
    }

    /// Reacts to one incoming message. `image_id` is the image on screen.
    pub fn on_message(&mut self, body: &Body, image_id: Option<&str>) -> Vec<Body> {
        match body {
            Body::RoundStart { role, width, height, .. } => {
                let Some(image_id) = image_id else { return Vec::new() };
                let target = match (role, self.teacher.strategy) {
                    (Role::Teacher, Strategy::HotspotWalk) => self.target_for(image_id),
                    _ => None,
                };
                self.round = Some(BotRound {
                    role: *role,
                    image_id: image_id.to_string(),
                    width: *width,
                    height: *height,
                    revealed: vec![false; (*width * *height) as usize],
                    covered: 0,
                    patches: 0,
                    last: None,
                    target,
                    done: false,
                });
                if *role == Role::Teacher {
                    let (x, y) = self.first_press();
                    vec![Body::CursorMove { x: x as i64, y: y as i64 }]
                } else {
                    Vec::new()
                }
            }
            Body::ScoreUpdate { bubble: Some(b), .. } => {
                let size = self.bubble_size;
                let Some(r) = self.round.as_mut().filter(|r| r.role == Role::Teacher) else {
                    return Vec::new();
                };
                r.reveal(b.extent.x, b.extent.y, b.extent.w, b.extent.h, None);
                let _ = size;
                r.last = Some((b.x, b.y));
                let (x, y) = self.next_cursor();
                vec![Body::CursorMove { x: x as i64, y: y as i64 }]
            }
            Body::PatchRevealed { x, y, w, h, .. } => self.on_patch(*x, *y, *w, *h),
            Body::RoundEnd { .. } | Body::GameEnd { .. } => {
                self.round = None;
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn first_press(&mut self) -> (u32, u32) {
        let r = self.round.as_ref().expect("round set");
        let (w, h) = (r.width, r.height);
        match (&r.target, self.teacher.strategy) {
            (Some(t), Strategy::HotspotWalk) => {
                let (ax, ay) = t.argmax(w, h);
                if self.teacher.noise_scale <= 0.0 {
                    return (ax, ay);
                }
                let n = Normal::new(0.0, self.teacher.noise_scale).expect("finite scale");
                let jx = n.sample(&mut self.rng).round() as i64;
                let jy = n.sample(&mut self.rng).round() as i64;
                (
                    (ax as i64 + jx).clamp(0, w as i64 - 1) as u32,
                    (ay as i64 + jy).clamp(0, h as i64 - 1) as u32,
                )
            }
            _ => (self.rng.gen_range(0..w), self.rng.gen_range(0..h)),
        }
    }

    fn next_cursor(&mut self) -> (u32, u32) {
        let size = self.bubble_size;
        let r = self.round.as_ref().expect("round set");
        let (w, h) = (r.width as i64, r.height as i64);
        let (lx, ly) = r.last.expect("after a bubble");
        let (lx, ly) = (lx as i64, ly as i64);
        match (&r.target, self.teacher.strategy) {
            (Some(t), Strategy::HotspotWalk) => {
                let gain = |cx: i64, cy: i64| {
                    let e = extent(cx as u32, cy as u32, size, w as u32, h as u32);
                    let mut g = 0.0;
                    for y in e.y..e.y + e.h {
                        for x in e.x..e.x + e.w {
                            if !r.revealed[(y * w as u32 + x) as usize] {
                                g += t.value(x, y);
                            }
                        }
                    }
                    g
                };
                let mut best = None;
                for (dx, dy) in STEPS {
                    let (cx, cy) = (lx + dx * RADIUS, ly + dy * RADIUS);
                    if cx < 0 || cy < 0 || cx >= w || cy >= h {
                        continue;
                    }
                    let g = gain(cx, cy);
                    if best.is_none_or(|(_, bg)| g > bg) {
                        best = Some(((cx, cy), g));
                    }
                }
                let peak = t.value(t.argmax(w as u32, h as u32).0, t.argmax(w as u32, h as u32).1);
                match best {
                    Some(((cx, cy), g)) if g > 1e-6 * peak => (cx as u32, cy as u32),
                    _ => {
                        // nothing left nearby: head for the best unrevealed pixel
                        let goal = t
                            .best(w as u32, h as u32, |x, y| !r.revealed[(y * w as u32 + x) as usize])
                            .unwrap_or((lx as u32, ly as u32));
                        (
                            (lx + (goal.0 as i64 - lx).clamp(-RADIUS, RADIUS)) as u32,
                            (ly + (goal.1 as i64 - ly).clamp(-RADIUS, RADIUS)) as u32,
                        )
                    }
                }
            }
            _ => {
                // symmetric proposal, stay put when it leaves the image
                let cx = lx + self.rng.gen_range(-RADIUS..=RADIUS);
                let cy = ly + self.rng.gen_range(-RADIUS..=RADIUS);
                if cx < 0 || cy < 0 || cx >= w || cy >= h {
                    (lx as u32, ly as u32)
                } else {
                    (cx as u32, cy as u32)
                }
            }
        }
    }

    fn on_patch(&mut self, x: u32, y: u32, w: u32, h: u32) -> Vec<Body> {
        let Some(r) = self.round.as_mut().filter(|r| r.role == Role::Student) else {
            return Vec::new();
        };
        if r.done {
            return Vec::new();
        }
        let img = self.world.images.get(&r.image_id);
        r.reveal(x, y, w, h, img.map(|i| i.mask.as_slice()));
        r.patches += 1;
        let area = img.map_or(0, |i| i.mask_area);
        if self.student.recognizes(r.covered, area, r.patches) {
            r.done = true;
            let category = self.manifest.get(&r.image_id).map(|i| i.category.clone()).unwrap_or_default();
            let mut out = Vec::new();
            if self.student.guess_noise > 0.0 && self.rng.gen_bool(self.student.guess_noise.min(1.0)) {
                let pool = self.manifest.wrong_labels(&r.image_id);
                if !pool.is_empty() {
                    let wrong = pool[self.rng.gen_range(0..pool.len())].clone();
                    out.push(Body::GuessSubmit { text: wrong });
                }
            }
            out.push(Body::GuessSubmit { text: category });
            return out;
        }
        if r.patches >= self.student.give_up_after {
            r.done = true;
            return vec![Body::Skip {}];
        }
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameConfig, ImageRecord};
    use crate::protocol::BubbleInfo;
    use rand::SeedableRng;

    fn fixture(teacher: TeacherPolicy, student: StudentPolicy) -> BotPlayer {
        let manifest = Arc::new(
            Manifest::new(vec![
                ImageRecord::new("i0", "dog", Vec::<String>::new(), "").unwrap(),
                ImageRecord::new("i1", "cat", Vec::<String>::new(), "").unwrap(),
            ])
            .unwrap(),
        );
        let cfg = GameConfig::default();
        let world = Arc::new(World::generate(&manifest, &WorldConfig::default(), 300, 300, 9));
        BotPlayer::new("bot".into(), teacher, student, world, manifest, cfg.bubble_size, DetRng::seed_from_u64(2))
    }

    fn round_start(role: Role) -> Body {
        Body::RoundStart {
            round_index: 0,
            total_rounds: 2,
            role,
            width: 300,
            height: 300,
            image: None,
        }
    }

    #[test]
    fn point_mass_start() {
        let mut bot = fixture(TeacherPolicy { noise_scale: 0.0, ..Default::default() }, StudentPolicy::default());
        let mut values = vec![0.0; 300 * 300];
        values[50 * 300 + 50] = 1.0;
        let t = TargetMap::Grid { width: 300, values: Arc::new(values) };
        assert_eq!(t.argmax(300, 300), (50, 50));
        // through the protocol: noise 0 presses on the hotspot itself
        let out = bot.on_message(&round_start(Role::Teacher), Some("i0"));
        let (hx, hy) = bot.world.images["i0"].hotspot;
        assert_eq!(out, vec![Body::CursorMove { x: hx as i64, y: hy as i64 }]);
    }

    #[test]
    fn walks_stay_within_radius_and_leave_revealed_areas() {
        for strategy in [Strategy::HotspotWalk, Strategy::UniformWalk] {
            let mut bot = fixture(TeacherPolicy { strategy, ..Default::default() }, StudentPolicy::default());
            let Body::CursorMove { mut x, mut y } = bot.on_message(&round_start(Role::Teacher), Some("i0"))[0] else {
                panic!()
            };
            let mut seen = std::collections::HashSet::new();
            for seq in 0..300u32 {
                let e = extent(x as u32, y as u32, 18, 300, 300);
                seen.insert((x, y));
                let info = BubbleInfo { seq, x: x as u32, y: y as u32, extent: e };
                let out = bot.on_message(
                    &Body::ScoreUpdate { round_index: 0, round_bubbles: seq + 1, total_score: 0, bubble: Some(info) },
                    Some("i0"),
                );
                let Body::CursorMove { x: nx, y: ny } = out[0] else { panic!() };
                assert!((nx - x).abs() <= 9 && (ny - y).abs() <= 9);
                assert!((0..300).contains(&nx) && (0..300).contains(&ny));
                (x, y) = (nx, ny);
            }
            if strategy == Strategy::HotspotWalk {
                // the greedy walk keeps moving into fresh territory
                assert!(seen.len() > 250, "{}", seen.len());
            }
        }
    }

    #[test]
    fn student_thresholds() {
        let p = StudentPolicy { recognition_threshold: 0.25, ..Default::default() };
        assert!(!p.recognizes(99, 400, 5));
        assert!(p.recognizes(100, 400, 5));
        let zero = StudentPolicy { recognition_threshold: 0.0, ..Default::default() };
        assert!(zero.recognizes(0, 400, 1));
        let full = StudentPolicy { recognition_threshold: 1.0, ..Default::default() };
        assert!(!full.recognizes(399, 400, 50));
        assert!(full.recognizes(400, 400, 50));
    }

    #[test]
    fn student_guesses_wrong_then_right_with_full_noise() {
        let mut bot = fixture(
            TeacherPolicy::default(),
            StudentPolicy { recognition_threshold: 0.0, guess_noise: 1.0, ..Default::default() },
        );
        bot.on_message(&round_start(Role::Student), Some("i0"));
        let out = bot.on_message(&Body::PatchRevealed { seq: 0, x: 0, y: 0, w: 9, h: 9, pixels: None }, Some("i0"));
        assert_eq!(out, vec![Body::GuessSubmit { text: "cat".into() }, Body::GuessSubmit { text: "dog".into() }]);
        // one decision per round
        assert!(bot
            .on_message(&Body::PatchRevealed { seq: 1, x: 0, y: 0, w: 9, h: 9, pixels: None }, Some("i0"))
            .is_empty());
    }

    #[test]
    fn student_gives_up() {
        let mut bot = fixture(
            TeacherPolicy::default(),
            StudentPolicy { recognition_threshold: 1.0, give_up_after: 3, ..Default::default() },
        );
        bot.on_message(&round_start(Role::Student), Some("i0"));
        let patch = Body::PatchRevealed { seq: 0, x: 0, y: 0, w: 9, h: 9, pixels: None };
        assert!(bot.on_message(&patch, Some("i0")).is_empty());
        assert!(bot.on_message(&patch, Some("i0")).is_empty());
        assert_eq!(bot.on_message(&patch, Some("i0")), vec![Body::Skip {}]);
    }
}
