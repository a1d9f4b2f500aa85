//! Acceptance checks, one line per criterion.
//!
//! Run with `cargo test -p clicktionary --test acceptance`. Exits non-zero if
//! any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use clicktionary_core::analysis::{compare, importance_maps, strip_header, AnalysisParams};
use clicktionary_core::bots::{simulate_population, Scenario, StudentPolicy};
use clicktionary_core::lobby::{Lobby, PairingEvent, TeamLabel, TicketStatus, BOT_FALLBACK_MS, LEADERBOARD_SIZE};
use clicktionary_core::maps::{rasterize_bubbles, resample_grid, Dims, ExternalHeatmap, HeatmapSource, ResampleMode};
use clicktionary_core::seed::DetRng;
use clicktionary_core::stats::{
    kurtosis, ks_normality, median_split_efficiency, spearman, split_half_consistency, t_test_ind, ImageMaps,
};
use clicktionary_core::storage::{bubble_maps_of, group_by_image, replay, EventKind, Replayed};
use clicktionary_core::{Bubble, Outcome, PlayerId};
use ndarray::Array2;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.1?}, limit {limit:?}"))?;
    Ok(took)
}

fn sessions_of(sc: &Scenario) -> Vec<Replayed> {
    let manifest = sc.load_manifest().unwrap();
    let out = simulate_population(sc, &manifest).unwrap();
    out.sessions.iter().map(|s| replay(&s.events).unwrap()).collect()
}

fn maps_of(sessions: &[Replayed]) -> Vec<ImageMaps> {
    group_by_image(bubble_maps_of(sessions, false).unwrap().into_iter().map(|(_, m)| m))
}

fn protocol_mechanics() -> Result<String, String> {
    let start = Instant::now();
    let (mut bubbles, mut skips, mut solved, mut games) = (0usize, 0usize, 0usize, 0usize);
    for seed in 1..=10u64 {
        let mut sc = Scenario::hotspot(1, 110, seed);
        // impatient, error-prone students so that skips and wrong guesses occur
        sc.groups[0].student = StudentPolicy {
            recognition_threshold: 0.8,
            guess_noise: 0.3,
            give_up_after: 10,
            min_patches: 1,
        };
        let cfg = sc.game;
        let manifest = sc.load_manifest().unwrap();
        let events = simulate_population(&sc, &manifest).unwrap().sessions.remove(0).events;

        let mut roles: Vec<(PlayerId, PlayerId)> = Vec::new();
        let mut last: Option<(u64, u32, u32)> = None;
        let mut total = 0u64;
        let mut ended = false;
        for e in &events {
            match &e.kind {
                EventKind::RoundStart { teacher, student, .. } => {
                    roles.push((teacher.clone(), student.clone()));
                    last = None;
                }
                EventKind::Bubble { x, y, .. } => {
                    if let Some((at, px, py)) = last {
                        let gap = e.at - at;
                        ensure(
                            (cfg.min_interval_ms..=cfg.max_interval_ms + cfg.tick_resolution_ms).contains(&gap),
                            || format!("seed {seed} round {}: interval {gap} ms", e.round_index),
                        )?;
                        let d = x.abs_diff(px).max(y.abs_diff(py));
                        ensure(d <= cfg.adjacency_radius, || {
                            format!("seed {seed} round {}: step of {d} px", e.round_index)
                        })?;
                    }
                    last = Some((e.at, *x, *y));
                    bubbles += 1;
                }
                EventKind::RoundEnd {
                    outcome,
                    bubbles: n,
                    round_score,
                    total_score,
                } => {
                    let expected = match outcome {
                        Outcome::Skipped => {
                            skips += 1;
                            u64::from(*n) + 100
                        }
                        _ => {
                            solved += 1;
                            u64::from(*n)
                        }
                    };
                    ensure(*round_score == expected, || {
                        format!("seed {seed} round {}: {outcome:?} scored {round_score} for {n} bubbles", e.round_index)
                    })?;
                    total += round_score;
                    ensure(*total_score == total, || format!("seed {seed}: running total {total_score} != {total}"))?;
                }
                EventKind::SessionEnd { score } => {
                    ensure(*score == total, || format!("seed {seed}: final score {score} != {total}"))?;
                    ended = true;
                }
                _ => {}
            }
        }
        ensure(ended, || format!("seed {seed}: game did not end"))?;
        ensure(roles.len() == 110, || format!("seed {seed}: {} rounds", roles.len()))?;
        for (k, w) in roles.windows(2).enumerate() {
            ensure(w[1].0 == w[0].1 && w[1].1 == w[0].0, || format!("seed {seed}: roles did not swap after round {k}"))?;
        }
        games += 1;
    }
    ensure(skips > 0 && solved > 0, || format!("{skips} skipped and {solved} solved rounds, need both"))?;
    let took = within(start, Duration::from_secs(30))?;
    Ok(format!("{games} games, {bubbles} bubbles, {solved} solved and {skips} skipped rounds in {took:.1?}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("clicktionary").chain(args.iter().copied());
    let code = clicktionary::run_with(argv, std::iter::empty(), &mut out, &mut err);
    ensure(code == 0, || format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err)))
}

fn files_under(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Result<String, String> {
    let mut compared = 0;
    for seed in ["3", "17", "2024"] {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let d = dir.path().to_str().unwrap().to_string();
                let common = ["--data-dir", d.as_str(), "--seed", seed];
                run_cli(&[&common[..], &["simulate", "--population", "mixed", "--pairs", "8", "--images", "4"]].concat())?;
                run_cli(&[&common[..], &["analyze", "--iterations", "200", "--out", "report.toml"]].concat())?;
                Ok(dir)
            })
            .collect::<Result<_, String>>()?;
        let (a, b) = (runs[0].path(), runs[1].path());
        let (logs_a, logs_b) = (files_under(&a.join("logs")), files_under(&b.join("logs")));
        ensure(!logs_a.is_empty(), || "no logs written".into())?;
        ensure(logs_a == logs_b, || format!("seed {seed}: event logs differ"))?;
        let (ra, rb) = (
            std::fs::read_to_string(a.join("report.toml")).unwrap(),
            std::fs::read_to_string(b.join("report.toml")).unwrap(),
        );
        ensure(strip_header(&ra) == strip_header(&rb), || format!("seed {seed}: reports differ"))?;
        compared += logs_a.len();
    }
    Ok(format!("3 seeds, {compared} log files and 3 reports identical"))
}

fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (brute_ranks(x), brute_ranks(y));
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (rx.iter().sum(), ry.iter().sum());
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let sxx: f64 = rx.iter().map(|a| a * a).sum();
    let syy: f64 = ry.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

fn exact_kurtosis(v: &[f64]) -> f64 {
    let xs: Vec<BigRational> = v.iter().map(|&x| BigRational::from_float(x).unwrap()).collect();
    let n = BigRational::from_integer(BigInt::from(v.len()));
    let m = xs.iter().fold(BigRational::zero(), |a, x| a + x) / &n;
    let (mut m2, mut m4) = (BigRational::zero(), BigRational::zero());
    for x in &xs {
        let d2 = (x - &m) * (x - &m);
        m4 += &d2 * &d2;
        m2 += d2;
    }
    let (m2, m4) = (m2 / &n, m4 / &n);
    (m4 / (&m2 * &m2)).to_f64().unwrap()
}

fn reference_t_p(a: &[f64], b: &[f64]) -> f64 {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let var = |s: &[f64], m: f64| s.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    let df = (a.len() + b.len() - 2) as f64;
    let sp = (var(a, ma) + var(b, mb)) / df;
    let t = (ma - mb) / (sp * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    2.0 * StudentsT::new(0.0, 1.0, df).unwrap().cdf(-t.abs())
}

fn reference_ks_d(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let normal = Normal::new(m, sd).unwrap();
    v.iter()
        .map(|&x| {
            let f = normal.cdf(x);
            let at_most = v.iter().filter(|&&y| y <= x).count() as f64 / n;
            let below = v.iter().filter(|&&y| y < x).count() as f64 / n;
            (at_most - f).abs().max((f - below).abs())
        })
        .fold(0.0, f64::max)
}

fn stats_oracles() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = DetRng::seed_from_u64(20_240_101);
    let mut worst = [0.0f64; 4];
    for i in 0..100 {
        let n = rng.gen_range(8..120);
        // every other instance draws from a few levels so that ties are common
        let draw = |rng: &mut DetRng| {
            if i % 2 == 0 {
                rng.gen_range(0..6) as f64
            } else {
                rng.gen_range(-50.0..50.0)
            }
        };
        let x: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        if let Ok(r) = spearman(&x, &y) {
            worst[0] = worst[0].max((r - brute_spearman(&x, &y)).abs());
        }
        let k = kurtosis(&x).map_err(|e| e.to_string())?;
        let exact = exact_kurtosis(&x);
        worst[1] = worst[1].max((k - exact).abs() / exact.abs().max(1.0));

        let m = rng.gen_range(2..60);
        let shift = rng.gen_range(-2.0..2.0);
        let a: Vec<f64> = (0..rng.gen_range(2..60)).map(|_| rng.gen_range(0.0..10.0)).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..10.0) + shift).collect();
        let t = t_test_ind(&a, &b).map_err(|e| e.to_string())?;
        worst[2] = worst[2].max((t.p - reference_t_p(&a, &b)).abs());

        let continuous: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0f64).powi(3)).collect();
        let ks = ks_normality(&continuous).map_err(|e| e.to_string())?;
        worst[3] = worst[3].max((ks.d - reference_ks_d(&continuous)).abs());
    }
    let tol = [1e-12, 1e-9, 1e-8, 1e-12];
    let names = ["spearman", "kurtosis", "t-test p", "KS D"];
    for i in 0..4 {
        ensure(worst[i] <= tol[i], || format!("{} off by {:e} (tolerance {:e})", names[i], worst[i], tol[i]))?;
    }
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "100 instances each, worst errors {:.1e} / {:.1e} / {:.1e} / {:.1e} in {took:.1?}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

fn split_half_discrimination() -> Result<String, String> {
    let start = Instant::now();
    let seed = 42;
    let hot = split_half_consistency(&maps_of(&sessions_of(&Scenario::hotspot(20, 10, seed))), 1000, seed)
        .map_err(|e| e.to_string())?;
    let uni = split_half_consistency(&maps_of(&sessions_of(&Scenario::uniform(20, 10, seed))), 1000, seed)
        .map_err(|e| e.to_string())?;
    ensure(hot.mean_rho >= 0.8, || format!("hotspot mean_rho {:.3}", hot.mean_rho))?;
    ensure(uni.mean_rho.abs() <= 0.15, || format!("uniform mean_rho {:.3}", uni.mean_rho))?;
    let took = within(start, Duration::from_secs(120))?;
    Ok(format!("hotspot {:.3}, uniform {:.3} in {took:.1?}", hot.mean_rho, uni.mean_rho))
}

fn median_split_ordering() -> Result<String, String> {
    let start = Instant::now();
    let mut held = 0;
    let mut misses = Vec::new();
    for seed in 1..=20u64 {
        let r = median_split_efficiency(&maps_of(&sessions_of(&Scenario::mixed(20, 10, seed))), 200, seed)
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let (e, i) = (&r.efficient, &r.inefficient);
        if e.mean_kurtosis > i.mean_kurtosis && e.split_half.mean_rho > i.split_half.mean_rho {
            held += 1;
        } else {
            misses.push(seed);
        }
    }
    ensure(held >= 19, || format!("orderings held in {held}/20 seeds, missed {misses:?}"))?;
    Ok(format!("orderings held in {held}/20 seeds in {:.1?}", start.elapsed()))
}

fn heatmaps(maps: impl IntoIterator<Item = (String, Array2<f64>)>) -> BTreeMap<HeatmapSource, Vec<ExternalHeatmap>> {
    let hms = maps
        .into_iter()
        .map(|(id, grid)| ExternalHeatmap::new(id, HeatmapSource::Other, grid).unwrap())
        .collect();
    BTreeMap::from([(HeatmapSource::Other, hms)])
}

fn permutation_calibration() -> Result<String, String> {
    let seed = 9;
    let params = AnalysisParams {
        iterations: 1000,
        seed,
        include_skipped: false,
    };
    // pairs 20..40 share the world but are played independently of 0..20
    let mut sessions = sessions_of(&Scenario::hotspot(40, 10, seed));
    let held_out = sessions.split_off(20);
    let population = maps_of(&sessions);
    let own = importance_maps(&maps_of(&held_out)).map_err(|e| e.to_string())?;
    let own = heatmaps(own.into_iter().map(|m| (m.image_id, m.grid)));
    let p_own = compare(&population, &own, &BTreeMap::new(), params).map_err(|e| e.to_string())?.results[0]
        .permutation_p
        .unwrap();

    let mut rng = DetRng::seed_from_u64(seed);
    let noise = heatmaps(
        population
            .iter()
            .map(|img| {
                let (h, w) = img.maps[0].grid.dim();
                (img.image_id.clone(), Array2::from_shape_fn((h, w), |_| rng.gen::<f64>()))
            })
            .collect::<Vec<_>>(),
    );
    let p_noise = compare(&population, &noise, &BTreeMap::new(), params).map_err(|e| e.to_string())?.results[0]
        .permutation_p
        .unwrap();
    ensure(p_own >= 0.5, || format!("own-population p {p_own:.4}"))?;
    ensure(p_noise <= 0.01, || format!("noise p {p_noise:.4}"))?;
    Ok(format!("own map p {p_own:.4}, noise p {p_noise:.4}"))
}

fn rasterization_mass() -> Result<String, String> {
    let mut rng = DetRng::seed_from_u64(77);
    let mut total = 0u64;
    for _ in 0..1000 {
        let (h, w) = (rng.gen_range(1..80usize), rng.gen_range(1..80usize));
        let size = rng.gen_range(1..=30u32);
        let bubbles: Vec<Bubble> = (0..rng.gen_range(0..60u32))
            .map(|seq| Bubble {
                x: rng.gen_range(0..w as u32),
                y: rng.gen_range(0..h as u32),
                placed_at: 0,
                seq,
            })
            .collect();
        let map = rasterize_bubbles("i", "p", &bubbles, Dims::new(h, w), size).map_err(|e| e.to_string())?;
        let mass: u64 = map.grid.iter().map(|&v| u64::from(v)).sum();
        // side covered along one axis: [c - size/2, c - size/2 + size) clipped to [0, limit)
        let side = |c: u32, limit: usize| {
            let lo = i64::from(c) - i64::from(size / 2);
            let hi = lo + i64::from(size);
            (hi.min(limit as i64) - lo.max(0)).max(0) as u64
        };
        let analytic: u64 = bubbles.iter().map(|b| side(b.x, w) * side(b.y, h)).sum();
        ensure(mass == analytic, || format!("mass {mass} != analytic {analytic}"))?;
        total += mass;
    }
    Ok(format!("1000 bubble lists, {total} pixel-hits total"))
}

fn resampling() -> Result<String, String> {
    let mut rng = DetRng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let target = Dims::new(rng.gen_range(1..20), rng.gen_range(1..20));
        let (fy, fx) = (rng.gen_range(1..6), rng.gen_range(1..6));
        let shape = (target.height * fy, target.width * fx);
        let g1 = Array2::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0));
        let g2 = Array2::from_shape_fn(shape, |_| rng.gen_range(-1.0..1.0));
        let a: f64 = rng.gen_range(-3.0..3.0);
        let c: f64 = rng.gen_range(-5.0..5.0);
        let r = |g: &Array2<f64>| resample_grid(g, target, ResampleMode::BoxMean).unwrap();
        let lhs = r(&(&g1 * a + &g2));
        let rhs = r(&g1) * a + r(&g2);
        worst = worst.max((&lhs - &rhs).iter().fold(0.0, |m, v| m.max(v.abs())));
        let constant = r(&Array2::from_elem(shape, c));
        worst = worst.max(constant.iter().fold(0.0, |m, v| m.max((v - c).abs())));
    }
    ensure(worst <= 1e-12, || format!("linearity/constant error {worst:e}"))?;

    // a 640x480 saliency-style map against 300x300 importance maps
    let population = maps_of(&sessions_of(&Scenario::hotspot(6, 3, 1)));
    let wide = heatmaps(population.iter().map(|img| {
        let grid = Array2::from_shape_fn((480, 640), |(y, x)| (x as f64 - 320.0).hypot(y as f64 - 240.0));
        (img.image_id.clone(), grid)
    }));
    let params = AnalysisParams {
        iterations: 50,
        seed: 1,
        include_skipped: false,
    };
    let report = compare(&population, &wide, &BTreeMap::new(), params).map_err(|e| e.to_string())?;
    let img = &report.results[0].images[0];
    Ok(format!(
        "100 grids, worst error {worst:.1e}; 480x640 compared on a {}x{} grid",
        img.height, img.width
    ))
}

fn lobby_churn() -> Result<String, String> {
    const TICK: u64 = 10;
    let limit = BOT_FALLBACK_MS;
    let mut rng = DetRng::seed_from_u64(50);
    let mut lobby = Lobby::new(limit);
    // (arrival time, client) schedule; some clients leave and come back
    let mut arrivals: Vec<(u64, usize)> = (0..50).map(|c| (rng.gen_range(0..7_200_000), c)).collect();
    let mut leave_at: BTreeMap<usize, u64> = BTreeMap::new();
    let (mut paired, mut bots, mut leaves, mut worst) = (0, 0, 0, 0u64);
    let end = 8_000_000 + limit;
    let mut now = 0;
    while now <= end {
        arrivals.sort();
        while arrivals.first().is_some_and(|&(t, _)| t <= now) {
            let (_, c) = arrivals.remove(0);
            let id = PlayerId::new(format!("client{c:02}"));
            lobby.enter_lobby(id, now).map_err(|e| e.to_string())?;
            if rng.gen_bool(0.3) {
                leave_at.insert(c, now + rng.gen_range(1_000..limit));
            }
        }
        let due: Vec<usize> = leave_at.iter().filter(|&(_, &t)| t <= now).map(|(&c, _)| c).collect();
        for c in due {
            leave_at.remove(&c);
            let id = PlayerId::new(format!("client{c:02}"));
            if lobby.ticket(&id).is_some_and(|t| t.status == TicketStatus::Waiting) {
                lobby.leave(&id);
                leaves += 1;
                arrivals.push((now + rng.gen_range(1_000..300_000), c));
            }
        }
        for ev in lobby.match_tick(now) {
            match ev {
                PairingEvent::Paired { first, second } => {
                    paired += 1;
                    lobby.record_result(&TeamLabel::new(first, second), rng.gen_range(200..2_000), now);
                }
                PairingEvent::BotAssigned { waited_ms, .. } => {
                    bots += 1;
                    worst = worst.max(waited_ms);
                }
            }
        }
        for t in lobby.waiting() {
            let waited = now - t.entered_at;
            worst = worst.max(waited);
            ensure(waited <= limit + TICK, || format!("{} waiting {waited} ms", t.player))?;
        }
        let board = lobby.leaderboard.entries();
        ensure(board.len() <= LEADERBOARD_SIZE, || format!("board has {} entries", board.len()))?;
        ensure(
            board.windows(2).all(|w| (w[0].score, w[0].completed_at) <= (w[1].score, w[1].completed_at)),
            || "board out of order".into(),
        )?;
        now += TICK;
    }
    ensure(lobby.waiting().next().is_none(), || "clients still waiting at the end".into())?;
    ensure(leaves > 0 && bots > 0 && paired > 0, || format!("churn too tame: {paired} pairs, {bots} bots, {leaves} leaves"))?;
    Ok(format!("50 clients, {paired} pairs, {bots} bot fallbacks, {leaves} withdrawals, longest wait {worst} ms"))
}

fn primary_only() -> Result<String, String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut members: Vec<String> = std::fs::read_dir(root.join("crates"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("Cargo.toml").exists())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    members.sort();
    ensure(!members.is_empty(), || "no workspace members found".into())?;
    ensure(members.iter().all(|m| !m.contains("webui")), || format!("members {members:?}"))?;
    for stray in ["package.json", "webui", "node_modules"] {
        ensure(!root.join(stray).exists(), || format!("found {stray} in the workspace"))?;
    }
    Ok(format!("workspace crates {members:?}, no browser client built"))
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("protocol mechanics", protocol_mechanics),
        ("determinism", determinism),
        ("statistics kernel oracles", stats_oracles),
        ("split-half discrimination", split_half_discrimination),
        ("median-split ordering", median_split_ordering),
        ("permutation p calibration", permutation_calibration),
        ("rasterization mass", rasterization_mass),
        ("resampling", resampling),
        ("lobby churn", lobby_churn),
        ("primary suite standalone", primary_only),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
