use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clicktionary_core::analysis::{
    analyze, categories_of, compare, importance_maps, load_heatmaps, read_heatmap_manifest, render_comparison,
    render_report, write_comparison_tables, write_tables, AnalysisError, AnalysisParams,
};
use clicktionary_core::bots::{simulate_population, Scenario};
use clicktionary_core::maps::{write_grid, HeatmapSource};
use clicktionary_core::stats::ImageMaps;
use clicktionary_core::storage::{
    check_images, load_export, load_sessions, replay, write_export, Durability, EventLog, ExportFilter, Replayed,
};
use clicktionary_core::Manifest;
use clicktionary_server::{load_leaderboard, Server, ServerConfig};

use crate::config::Settings;
use crate::{
    AggregateArgs, AnalyzeArgs, CliError, Command, CompareArgs, ExportArgs, Out, Population, ServeArgs, SimulateArgs,
};

pub const DEFAULT_EXPERIMENT: &str = "default";

pub(crate) struct Ctx<'a> {
    pub settings: Settings,
    pub data_dir: PathBuf,
    pub seed: Option<u64>,
    pub out: Out<'a>,
    pub err: Out<'a>,
}

impl Ctx<'_> {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    fn seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            CliError::Usage(format!(
                "{command} needs a seed: pass --seed, set seed in [global], or CLICKTIONARY_GLOBAL_SEED"
            ))
        })
    }

    fn flag(&self, flag: bool, section: &str, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.settings.get(section, key)?.unwrap_or(false))
    }

    fn experiment(&self, flag: Option<String>, section: &str) -> Result<String, CliError> {
        let name = self
            .settings
            .pick(flag, section, "experiment")?
            .unwrap_or_else(|| DEFAULT_EXPERIMENT.to_string());
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            return Err(CliError::Usage(format!("bad experiment name {name:?}")));
        }
        Ok(name)
    }

    fn log(&self) -> EventLog {
        EventLog::new(self.data_dir.join("logs"))
    }

    fn export_dir(&self, experiment: &str) -> PathBuf {
        self.data_dir.join("exports").join(experiment)
    }

    /// Exported bubble maps; a missing or empty export is a data error.
    fn load_maps(&self, experiment: &str, include_skipped: bool) -> Result<Vec<ImageMaps>, CliError> {
        let dir = self.export_dir(experiment);
        if !dir.join("index.csv").exists() {
            return Err(AnalysisError::NoMaps.into());
        }
        let images = load_export(&dir, include_skipped)?;
        if images.iter().all(|i| i.maps.is_empty()) {
            return Err(AnalysisError::NoMaps.into());
        }
        Ok(images)
    }

    fn emit(&mut self, out: Option<PathBuf>, text: &str) -> Result<(), CliError> {
        match out {
            Some(p) => {
                let p = self.path(&p);
                if let Some(dir) = p.parent() {
                    fs::create_dir_all(dir)?;
                }
                fs::write(&p, text)?;
                writeln!(self.err, "wrote {}", p.display())?;
            }
            None => self.out.write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn timestamp() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

pub(crate) fn dispatch(command: Command, ctx: &mut Ctx) -> Result<(), CliError> {
    match command {
        Command::Serve(a) => serve(a, ctx),
        Command::Simulate(a) => simulate(a, ctx),
        Command::Export(a) => export(a, ctx),
        Command::Aggregate(a) => aggregate(a, ctx),
        Command::Analyze(a) => analyze_cmd(a, ctx),
        Command::Compare(a) => compare_cmd(a, ctx),
        Command::Leaderboard => leaderboard(ctx),
    }
}

fn serve(a: ServeArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let s = &ctx.settings;
    let mut cfg = ServerConfig {
        seed: ctx.seed("serve")?,
        data_dir: ctx.data_dir.clone(),
        ..Default::default()
    };
    if let Some(v) = s.pick(a.listen, "server", "listen")? {
        cfg.listen = v;
    }
    if let Some(v) = s.pick(a.tick_ms, "server", "tick_ms")? {
        cfg.tick_ms = v;
    }
    if let Some(v) = s.pick(a.bot_wait_ms, "server", "bot_wait_ms")? {
        cfg.bot_wait_ms = v;
    }
    let manifest: PathBuf = s.pick(a.manifest, "server", "manifest")?.unwrap_or_else(|| "manifest.jsonl".into());
    cfg.manifest = ctx.path(&manifest);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let out = &mut ctx.out;
    rt.block_on(async move {
        let server = Server::bind(cfg).await?;
        writeln!(out, "listening on {}", server.local_addr()?)?;
        out.flush()?;
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn simulate(a: SimulateArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let s = &ctx.settings;
    let mut scenario = match s.pick(a.scenario, "simulate", "scenario")? {
        Some(p) => {
            let mut sc = Scenario::load(&ctx.path(&p))?;
            if let Some(seed) = ctx.seed {
                sc.seed = seed;
            }
            sc
        }
        None => {
            let seed = ctx.seed("simulate")?;
            let pairs = s.pick(a.pairs, "simulate", "pairs")?.unwrap_or(20);
            let images = s.pick(a.images, "simulate", "images")?.unwrap_or(10);
            match s.pick(a.population, "simulate", "population")?.unwrap_or(Population::Hotspot) {
                Population::Hotspot => Scenario::hotspot(pairs, images, seed),
                Population::Uniform => Scenario::uniform(pairs, images, seed),
                Population::Mixed => Scenario::mixed(pairs, images, seed),
            }
        }
    };
    if let Some(m) = s.pick::<PathBuf>(a.manifest, "simulate", "manifest")? {
        scenario.manifest = Some(ctx.path(&m));
    }
    scenario.validate()?;
    let experiment = ctx.experiment(a.experiment, "simulate")?;
    let no_export = ctx.flag(a.no_export, "simulate", "no_export")?;

    let manifest = scenario.load_manifest()?;
    let sim = simulate_population(&scenario, &manifest)?;
    let mut log = ctx.log().with_durability(Durability::Buffered);
    for session in &sim.sessions {
        log.append_all(&session.events)?;
    }
    writeln!(
        ctx.out,
        "simulated {} sessions (seed {}) into {}",
        sim.sessions.len(),
        scenario.seed,
        log.root().display()
    )?;
    if !no_export {
        let replayed = sim
            .sessions
            .iter()
            .map(|s| replay(&s.events))
            .collect::<Result<Vec<Replayed>, _>>()?;
        let dir = ctx.export_dir(&experiment);
        let rows = write_export(&replayed, &dir)?;
        writeln!(ctx.out, "exported {} bubble maps to {}", rows.len(), dir.display())?;
    }
    Ok(())
}

fn export(a: ExportArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let filter = ExportFilter {
        include_bot: ctx.flag(a.include_bot, "export", "include_bot")?,
        include_abandoned: ctx.flag(a.include_abandoned, "export", "include_abandoned")?,
        include_incomplete: ctx.flag(a.include_incomplete, "export", "include_incomplete")?,
    };
    let experiment = ctx.experiment(a.experiment, "export")?;
    let prefix: Option<String> = ctx.settings.pick(a.session_prefix, "export", "session_prefix")?;
    let manifest: Option<PathBuf> = ctx.settings.pick(a.manifest, "export", "manifest")?;

    let (mut sessions, summary) = load_sessions(&ctx.log(), &filter)?;
    if let Some(prefix) = &prefix {
        sessions.retain(|r| r.session_id().starts_with(prefix.as_str()));
    }
    if let Some(m) = manifest {
        check_images(&sessions, &Manifest::load(ctx.path(&m))?)?;
    }
    let dir = ctx.export_dir(&experiment);
    let rows = write_export(&sessions, &dir)?;
    for (sid, why) in &summary.excluded {
        writeln!(ctx.out, "excluded {sid}: {why}")?;
    }
    writeln!(
        ctx.out,
        "{} sessions in the log, {} exported, {} bubble maps written to {}",
        summary.sessions_seen,
        sessions.len(),
        rows.len(),
        dir.display()
    )?;
    Ok(())
}

fn aggregate(a: AggregateArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let experiment = ctx.experiment(a.experiment, "aggregate")?;
    let include_skipped = ctx.flag(a.include_skipped, "aggregate", "include_skipped")?;
    let images = ctx.load_maps(&experiment, include_skipped)?;
    let maps = importance_maps(&images)?;
    let dir = ctx.data_dir.join("maps").join(&experiment);
    fs::create_dir_all(&dir)?;
    let mut table = csv::Writer::from_writer(Vec::new());
    table.write_record(["image_id", "pairs", "peak", "mean"])?;
    for m in &maps {
        write_grid(&m.grid.mapv(|v| v as f32), dir.join(format!("{}.fimap", m.image_id)))?;
        let peak = m.grid.fold(0.0f64, |a, &b| a.max(b));
        let mean = m.grid.mean().unwrap_or(0.0);
        table.write_record([m.image_id.clone(), m.n_pairs.to_string(), peak.to_string(), mean.to_string()])?;
    }
    let table = table.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(dir.join("index.csv"), &table)?;
    ctx.out.write_all(&table)?;
    writeln!(ctx.err, "wrote {} importance maps to {}", maps.len(), dir.display())?;
    Ok(())
}

fn params(ctx: &Ctx, command: &str, iterations: Option<usize>, include_skipped: bool) -> Result<AnalysisParams, CliError> {
    let iterations = ctx.settings.pick(iterations, command, "iterations")?.unwrap_or(1000);
    if iterations == 0 {
        return Err(CliError::Usage("--iterations must be at least 1".into()));
    }
    Ok(AnalysisParams {
        iterations,
        seed: ctx.seed(command)?,
        include_skipped: ctx.flag(include_skipped, command, "include_skipped")?,
    })
}

fn analyze_cmd(a: AnalyzeArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let params = params(ctx, "analyze", a.iterations, a.include_skipped)?;
    let experiment = ctx.experiment(a.experiment, "analyze")?;
    let out: Option<PathBuf> = ctx.settings.pick(a.out, "analyze", "out")?;
    let tables: Option<PathBuf> = ctx.settings.pick(a.tables, "analyze", "tables")?;
    let images = ctx.load_maps(&experiment, params.include_skipped)?;
    let report = analyze(&images, params)?;
    ctx.emit(out, &render_report(&report, &timestamp()))?;
    if let Some(t) = tables {
        write_tables(&report, &ctx.path(&t))?;
    }
    Ok(())
}

fn compare_cmd(a: CompareArgs, ctx: &mut Ctx) -> Result<(), CliError> {
    let params = params(ctx, "compare", a.iterations, a.include_skipped)?;
    let experiment = ctx.experiment(a.experiment, "compare")?;
    let s = &ctx.settings;
    let heatmaps: PathBuf = s
        .pick(a.heatmaps, "compare", "heatmaps")?
        .ok_or_else(|| CliError::Usage("compare needs --heatmaps".into()))?;
    let source: Option<String> = s.pick(a.source, "compare", "source")?;
    let manifest: Option<PathBuf> = s.pick(a.manifest, "compare", "manifest")?;
    let out: Option<PathBuf> = s.pick(a.out, "compare", "out")?;
    let tables: Option<PathBuf> = s.pick(a.tables, "compare", "tables")?;

    let entries = read_heatmap_manifest(&ctx.path(&heatmaps))?;
    let sources: BTreeSet<HeatmapSource> = match source {
        Some(name) => [name.parse().map_err(|e| CliError::Usage(format!("--source: {e}")))?].into(),
        None => entries.iter().map(|e| e.source).collect(),
    };
    let mut by_source = BTreeMap::new();
    for src in sources {
        by_source.insert(src, load_heatmaps(&entries, src)?);
    }
    if by_source.is_empty() {
        return Err(CliError::Data(format!("{} lists no heatmaps", heatmaps.display())));
    }
    let categories = match manifest {
        Some(m) => categories_of(&Manifest::load(ctx.path(&m))?),
        None => BTreeMap::new(),
    };
    let images = ctx.load_maps(&experiment, params.include_skipped)?;
    let report = compare(&images, &by_source, &categories, params)?;
    ctx.emit(out, &render_comparison(&report, &timestamp()))?;
    if let Some(t) = tables {
        write_comparison_tables(&report, &ctx.path(&t))?;
    }
    Ok(())
}

fn leaderboard(ctx: &mut Ctx) -> Result<(), CliError> {
    let board = load_leaderboard(&ctx.data_dir.join("leaderboard.csv"))?;
    board.write_csv(&mut ctx.out)?;
    Ok(())
}
