use std::fs;
use std::path::Path;

use clicktionary_core::maps::write_grid;
use ndarray::Array2;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("clicktionary").chain(args.iter().copied());
    let env = env.iter().map(|(k, v)| (k.to_string(), v.to_string()));
    let code = clicktionary::run_with(argv, env, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn run(args: &[&str]) -> Run {
    run_env(args, &[])
}

fn in_dir<'a>(dir: &'a Path, args: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--data-dir", dir.to_str().unwrap()];
    v.extend_from_slice(args);
    v
}

fn sessions_in(dir: &Path) -> usize {
    let mut n = 0;
    for day in fs::read_dir(dir.join("logs")).unwrap() {
        n += fs::read_dir(day.unwrap().path()).unwrap().count();
    }
    n
}

#[test]
fn help_and_usage_errors() {
    let r = run(&["--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("simulate"));
    let r = run(&["--nope"]);
    assert_eq!(r.code, 1);
    let r = run(&["frobnicate"]);
    assert_eq!(r.code, 1);
    let r = run(&["simulate", "--population", "swarm"]);
    assert_eq!(r.code, 1);
}

#[test]
fn randomized_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["simulate", "analyze", "serve"] {
        let r = run(&in_dir(dir.path(), &[cmd]));
        assert_eq!(r.code, 1, "{cmd}");
        assert!(r.err.starts_with("error: "), "{cmd}: {}", r.err);
        assert!(r.err.contains("seed"), "{cmd}: {}", r.err);
    }
}

#[test]
fn missing_data_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&in_dir(dir.path(), &["aggregate"]));
    assert_eq!(r.code, 2);
    assert_eq!(r.err.trim(), "error: no bubble maps found");
    let r = run(&in_dir(dir.path(), &["--seed", "1", "analyze"]));
    assert_eq!(r.code, 2);
    assert_eq!(r.err.trim(), "error: no bubble maps found");
    let r = run(&in_dir(dir.path(), &["--seed", "1", "simulate", "--manifest", "absent.jsonl"]));
    assert_eq!(r.code, 2);
}

#[test]
fn empty_leaderboard_prints_header() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&in_dir(dir.path(), &["leaderboard"]));
    assert_eq!(r.code, 0);
    assert_eq!(r.out, "rank,team,score,completed_at\n");
}

#[test]
fn config_file_env_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("settings.ini");
    fs::write(&cfg, "seed = 5\n\n[simulate]\npairs = 4\nimages = 3\npopulation = uniform\n").unwrap();
    let cfg = cfg.to_str().unwrap();

    let d1 = dir.path().join("a");
    let r = run(&["--config", cfg, "--data-dir", d1.to_str().unwrap(), "simulate"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(sessions_in(&d1), 4);

    let d2 = dir.path().join("b");
    let r = run_env(
        &["--config", cfg, "--data-dir", d2.to_str().unwrap(), "simulate"],
        &[("CLICKTIONARY_SIMULATE_PAIRS", "6")],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(sessions_in(&d2), 6);

    let d3 = dir.path().join("c");
    let r = run_env(
        &["--config", cfg, "--data-dir", d3.to_str().unwrap(), "simulate", "--pairs", "2"],
        &[("CLICKTIONARY_SIMULATE_PAIRS", "6")],
    );
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(sessions_in(&d3), 2);

    let r = run_env(&["--config", cfg, "simulate"], &[("CLICKTIONARY_SIMULATE_PAIRS", "lots")]);
    assert_eq!(r.code, 1);
    fs::write(dir.path().join("bad.ini"), "[nonsense]\nx = 1\n").unwrap();
    let r = run(&["--config", dir.path().join("bad.ini").to_str().unwrap(), "leaderboard"]);
    assert_eq!(r.code, 1);
}

#[test]
fn simulate_export_aggregate_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r = run(&in_dir(d, &["--seed", "11", "simulate", "--pairs", "6", "--images", "3", "--experiment", "e1"]));
    assert_eq!(r.code, 0, "{}", r.err);
    let simulated = fs::read(d.join("exports/e1/index.csv")).unwrap();

    // re-exporting from the logs reproduces the simulator's export
    let r = run(&in_dir(d, &["export", "--experiment", "e2"]));
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("6 sessions in the log, 6 exported"), "{}", r.out);
    assert_eq!(fs::read(d.join("exports/e2/index.csv")).unwrap(), simulated);
    let r = run(&in_dir(d, &["export", "--experiment", "e3", "--session-prefix", "nobody"]));
    assert_eq!(r.code, 0);
    assert!(r.out.contains("0 exported"), "{}", r.out);

    let r = run(&in_dir(d, &["aggregate", "--experiment", "e1"]));
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out.lines().count(), 4);
    assert!(r.out.starts_with("image_id,pairs,peak,mean\n"));
    assert!(d.join("maps/e1/index.csv").exists());
    assert_eq!(fs::read_dir(d.join("maps/e1")).unwrap().count(), 4);

    let r = run(&in_dir(
        d,
        &["--seed", "2", "--jobs", "2", "analyze", "--experiment", "e1", "--iterations", "50", "--out", "r.toml", "--tables", "t"],
    ));
    assert_eq!(r.code, 0, "{}", r.err);
    let report = fs::read_to_string(d.join("r.toml")).unwrap();
    assert!(report.starts_with("# generated "));
    assert!(report.contains("[split_half]"));
    assert!(d.join("t/images.csv").exists());

    // the same command twice gives the same report apart from the header
    let again = run(&in_dir(d, &["--seed", "2", "analyze", "--experiment", "e1", "--iterations", "50"]));
    assert_eq!(again.code, 0);
    let body = |s: &str| s.split_once('\n').unwrap().1.to_string();
    assert_eq!(body(&again.out), body(&report));

    let r = run(&in_dir(d, &["--seed", "2", "--jobs", "0", "analyze", "--experiment", "e1"]));
    assert_eq!(r.code, 1);
    let r = run(&in_dir(d, &["--seed", "2", "analyze", "--experiment", "../e1"]));
    assert_eq!(r.code, 1);
}

#[test]
fn compare_against_heatmap_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let r = run(&in_dir(d, &["--seed", "4", "simulate", "--pairs", "4", "--images", "2"]));
    assert_eq!(r.code, 0, "{}", r.err);
    let mut lines = String::new();
    for id in ["img000", "img001"] {
        let grid = Array2::from_shape_fn((480, 640), |(y, x)| ((x * 7 + y * 3) % 17) as f32);
        write_grid(&grid, d.join(format!("{id}.fimap"))).unwrap();
        lines.push_str(&format!("{{\"image_id\":\"{id}\",\"source\":\"cam\",\"path\":\"{id}.fimap\"}}\n"));
    }
    fs::write(d.join("heatmaps.jsonl"), lines).unwrap();

    let r = run(&in_dir(d, &["--seed", "4", "compare", "--heatmaps", "heatmaps.jsonl", "--iterations", "20"]));
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("cam"), "{}", r.out);
    assert!(r.out.contains("permutation_p"), "{}", r.out);

    let r = run(&in_dir(d, &["--seed", "4", "compare", "--heatmaps", "heatmaps.jsonl", "--source", "lrp"]));
    assert_eq!(r.code, 2, "{}", r.err);
    let r = run(&in_dir(d, &["--seed", "4", "compare"]));
    assert_eq!(r.code, 1);
}
