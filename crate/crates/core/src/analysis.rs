//! End-to-end analysis over exported bubble maps: the consistency and
//! sparsity battery, comparisons against external heatmaps, and their
//! reports.
//!
//! Reports are TOML. The first line is a `# generated ...` comment carrying
//! the wall-clock time; everything after it depends only on the inputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::Manifest;
use crate::maps::{aggregate_importance, read_grid, ExternalHeatmap, HeatmapSource, ImportanceMap, MapError};
use crate::stats::{
    compare_to_external, kurtosis, ks_normality, mean, median_split_efficiency, split_half_consistency,
    ComparisonResult, ImageMaps, MedianSplitResult, SplitHalfResult, StatsError, TTest,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no bubble maps found")]
    NoMaps,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("heatmap manifest line {line}: {reason}")]
    HeatmapManifest { line: usize, reason: String },
    #[error("no {0} heatmaps in the manifest")]
    NoHeatmaps(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub iterations: usize,
    pub seed: u64,
    pub include_skipped: bool,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            seed: 0,
            include_skipped: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub image_id: String,
    pub pairs: usize,
    pub mean_bubbles: f64,
    pub kurtosis: Option<f64>,
    pub ks_d: Option<f64>,
    pub ks_critical: Option<f64>,
    pub ks_reject: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub params: AnalysisParams,
    pub images: Vec<ImageStats>,
    pub n_pairs: usize,
    pub split_half: SplitHalfResult,
    pub median_split: Result<MedianSplitResult, StatsError>,
}

impl AnalysisReport {
    pub fn mean_kurtosis(&self) -> Option<f64> {
        let k: Vec<f64> = self.images.iter().filter_map(|i| i.kurtosis).collect();
        (!k.is_empty()).then(|| mean(&k))
    }
}

fn image_stats(img: &ImageMaps, imp: &ImportanceMap) -> ImageStats {
    let values = imp.grid.as_slice().expect("standard layout");
    let ks = ks_normality(values).ok();
    ImageStats {
        image_id: img.image_id.clone(),
        pairs: img.maps.len(),
        mean_bubbles: mean(&img.maps.iter().map(|m| m.total_bubbles as f64).collect::<Vec<_>>()),
        kurtosis: kurtosis(values).ok(),
        ks_d: ks.map(|k| k.d),
        ks_critical: ks.map(|k| k.critical),
        ks_reject: ks.map(|k| k.reject),
    }
}

/// Per-image sparsity and normality, split-half consistency over all pairs,
/// and the median split by bubble count.
pub fn analyze(images: &[ImageMaps], params: AnalysisParams) -> Result<AnalysisReport, AnalysisError> {
    let images: Vec<&ImageMaps> = images.iter().filter(|i| !i.maps.is_empty()).collect();
    if images.is_empty() {
        return Err(AnalysisError::NoMaps);
    }
    let mut stats = Vec::with_capacity(images.len());
    for img in &images {
        let imp = aggregate_importance(&img.maps)?;
        stats.push(image_stats(img, &imp));
    }
    let owned: Vec<ImageMaps> = images.iter().map(|i| (*i).clone()).collect();
    let mut pairs: Vec<&str> = owned.iter().flat_map(|i| i.maps.iter().map(|m| m.pair_id.as_str())).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let split_half = split_half_consistency(&owned, params.iterations, params.seed)?;
    let median_split = median_split_efficiency(&owned, params.iterations, params.seed);
    Ok(AnalysisReport {
        params,
        images: stats,
        n_pairs: pairs.len(),
        split_half,
        median_split,
    })
}

#[derive(Serialize)]
struct TestRow {
    t: f64,
    df: f64,
    p: f64,
    saturated: bool,
}

impl From<&TTest> for TestRow {
    fn from(t: &TTest) -> Self {
        Self {
            t: t.t,
            df: t.df,
            p: t.p,
            saturated: t.saturated,
        }
    }
}

#[derive(Serialize)]
struct SplitHalfDoc {
    mean_rho: f64,
    iterations: usize,
    scored_iterations: usize,
    skipped_iterations: usize,
    seed: u64,
}

impl From<&SplitHalfResult> for SplitHalfDoc {
    fn from(s: &SplitHalfResult) -> Self {
        Self {
            mean_rho: s.mean_rho,
            iterations: s.n_iterations,
            scored_iterations: s.scores.len(),
            skipped_iterations: s.skipped_iterations,
            seed: s.seed,
        }
    }
}

#[derive(Serialize)]
struct MedianImageDoc {
    image_id: String,
    median: f64,
    efficient: usize,
    inefficient: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    kurtosis_efficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kurtosis_inefficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded: Option<String>,
}

#[derive(Serialize)]
struct MedianDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficient_mean_kurtosis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inefficient_mean_kurtosis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficient_split_half: Option<SplitHalfDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inefficient_split_half: Option<SplitHalfDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kurtosis_t_test: Option<TestRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    split_half_t_test: Option<TestRow>,
    images: Vec<MedianImageDoc>,
}

#[derive(Serialize)]
struct SummaryDoc {
    images: usize,
    pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_kurtosis: Option<f64>,
    ks_tested: usize,
    ks_rejected: usize,
}

#[derive(Serialize)]
struct AnalysisDoc<'a> {
    parameters: &'a AnalysisParams,
    summary: SummaryDoc,
    split_half: SplitHalfDoc,
    median_split: MedianDoc,
    images: &'a [ImageStats],
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn generated_header(timestamp: &str) -> String {
    format!("# generated {timestamp}\n")
}

/// Drops the `# generated` line so two reports can be compared byte for byte.
pub fn strip_header(report: &str) -> &str {
    match report.strip_prefix("# generated ") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => report,
    }
}

fn with_header(timestamp: &str, body: String) -> String {
    let mut s = generated_header(timestamp);
    s.push_str(&body);
    s
}

pub fn render_report(report: &AnalysisReport, timestamp: &str) -> String {
    let median_split = match &report.median_split {
        Err(e) => MedianDoc {
            error: Some(e.to_string()),
            efficient_mean_kurtosis: None,
            inefficient_mean_kurtosis: None,
            efficient_split_half: None,
            inefficient_split_half: None,
            kurtosis_t_test: None,
            split_half_t_test: None,
            images: Vec::new(),
        },
        Ok(m) => MedianDoc {
            error: None,
            efficient_mean_kurtosis: finite(m.efficient.mean_kurtosis),
            inefficient_mean_kurtosis: finite(m.inefficient.mean_kurtosis),
            efficient_split_half: Some((&m.efficient.split_half).into()),
            inefficient_split_half: Some((&m.inefficient.split_half).into()),
            kurtosis_t_test: m.kurtosis_test.as_ref().map(Into::into),
            split_half_t_test: m.rho_test.as_ref().map(Into::into),
            images: m
                .images
                .iter()
                .map(|s| MedianImageDoc {
                    image_id: s.image_id.clone(),
                    median: s.median,
                    efficient: s.efficient.len(),
                    inefficient: s.inefficient.len(),
                    kurtosis_efficient: s.kurtosis_efficient,
                    kurtosis_inefficient: s.kurtosis_inefficient,
                    excluded: s.excluded.clone(),
                })
                .collect(),
        },
    };
    let doc = AnalysisDoc {
        parameters: &report.params,
        summary: SummaryDoc {
            images: report.images.len(),
            pairs: report.n_pairs,
            mean_kurtosis: report.mean_kurtosis(),
            ks_tested: report.images.iter().filter(|i| i.ks_reject.is_some()).count(),
            ks_rejected: report.images.iter().filter(|i| i.ks_reject == Some(true)).count(),
        },
        split_half: (&report.split_half).into(),
        median_split,
        images: &report.images,
    };
    with_header(timestamp, toml::to_string(&doc).expect("report serializes"))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    group: &'a str,
    iteration: usize,
    rho: f64,
}

/// Writes the list-valued parts of the report as CSV tables into `dir`.
pub fn write_tables(report: &AnalysisReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let images = dir.join("images.csv");
    write_csv(&images, &report.images)?;
    written.push(images);
    let mut scores: Vec<ScoreRow> = report
        .split_half
        .scores
        .iter()
        .enumerate()
        .map(|(i, &rho)| ScoreRow { group: "all", iteration: i, rho })
        .collect();
    if let Ok(m) = &report.median_split {
        for (group, s) in [("efficient", &m.efficient.split_half), ("inefficient", &m.inefficient.split_half)] {
            scores.extend(s.scores.iter().enumerate().map(|(i, &rho)| ScoreRow { group, iteration: i, rho }));
        }
        let path = dir.join("median_split.csv");
        write_csv(
            &path,
            m.images.iter().map(|s| MedianImageDoc {
                image_id: s.image_id.clone(),
                median: s.median,
                efficient: s.efficient.len(),
                inefficient: s.inefficient.len(),
                kurtosis_efficient: s.kurtosis_efficient,
                kurtosis_inefficient: s.kurtosis_inefficient,
                excluded: s.excluded.clone(),
            }),
        )?;
        written.push(path);
    }
    let path = dir.join("split_half_scores.csv");
    write_csv(&path, scores)?;
    written.push(path);
    Ok(written)
}

/// One line of a heatmap manifest (JSON lines): which file holds which
/// image's map from which source. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub image_id: String,
    pub source: HeatmapSource,
    pub path: PathBuf,
}

pub fn read_heatmap_manifest(path: &Path) -> Result<Vec<HeatmapEntry>, AnalysisError> {
    let file = fs::File::open(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e: HeatmapEntry = serde_json::from_str(&line).map_err(|err| AnalysisError::HeatmapManifest {
            line: i + 1,
            reason: err.to_string(),
        })?;
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        out.push(e);
    }
    Ok(out)
}

/// Loads every heatmap of one source listed in the manifest.
pub fn load_heatmaps(entries: &[HeatmapEntry], source: HeatmapSource) -> Result<Vec<ExternalHeatmap>, AnalysisError> {
    let mut out = Vec::new();
    for e in entries.iter().filter(|e| e.source == source) {
        out.push(ExternalHeatmap::new(e.image_id.clone(), e.source, read_grid(&e.path)?)?);
    }
    if out.is_empty() {
        return Err(AnalysisError::NoHeatmaps(source.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub params: AnalysisParams,
    pub split_half: SplitHalfResult,
    pub results: Vec<ComparisonResult>,
}

pub fn importance_maps(images: &[ImageMaps]) -> Result<Vec<ImportanceMap>, AnalysisError> {
    images
        .iter()
        .filter(|i| !i.maps.is_empty())
        .map(|i| aggregate_importance(&i.maps).map_err(Into::into))
        .collect()
}

pub fn categories_of(manifest: &Manifest) -> BTreeMap<String, String> {
    manifest.images().iter().map(|i| (i.id.clone(), i.category.clone())).collect()
}

/// Compares the importance maps against each source's heatmaps, with the
/// permutation p taken against split-half consistency of the same pairs.
pub fn compare(
    images: &[ImageMaps],
    heatmaps: &BTreeMap<HeatmapSource, Vec<ExternalHeatmap>>,
    categories: &BTreeMap<String, String>,
    params: AnalysisParams,
) -> Result<CompareReport, AnalysisError> {
    let importance = importance_maps(images)?;
    if importance.is_empty() {
        return Err(AnalysisError::NoMaps);
    }
    let split_half = split_half_consistency(images, params.iterations, params.seed)?;
    let mut results = Vec::new();
    for hms in heatmaps.values() {
        results.push(compare_to_external(&importance, hms, categories)?.with_permutation(&split_half));
    }
    Ok(CompareReport {
        params,
        split_half,
        results,
    })
}

#[derive(Serialize)]
struct CategoryDoc<'a> {
    category: &'a str,
    mean_rho: f64,
    images: usize,
}

#[derive(Serialize)]
struct SourceDoc<'a> {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    overall_mean_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permutation_p: Option<f64>,
    images_compared: usize,
    degenerate: &'a [String],
    categories: Vec<CategoryDoc<'a>>,
}

#[derive(Serialize)]
struct CompareDoc<'a> {
    parameters: &'a AnalysisParams,
    split_half: SplitHalfDoc,
    sources: Vec<SourceDoc<'a>>,
}

pub fn render_comparison(report: &CompareReport, timestamp: &str) -> String {
    let doc = CompareDoc {
        parameters: &report.params,
        split_half: (&report.split_half).into(),
        sources: report
            .results
            .iter()
            .map(|r| SourceDoc {
                source: r.source.to_string(),
                overall_mean_rho: r.overall_mean_rho,
                permutation_p: r.permutation_p,
                images_compared: r.images.iter().filter(|i| i.rho.is_some()).count(),
                degenerate: &r.degenerate,
                categories: r
                    .categories
                    .iter()
                    .map(|c| CategoryDoc {
                        category: &c.category,
                        mean_rho: c.mean_rho,
                        images: c.n_images,
                    })
                    .collect(),
            })
            .collect(),
    };
    with_header(timestamp, toml::to_string(&doc).expect("report serializes"))
}

#[derive(Serialize)]
struct CompareRow<'a> {
    source: String,
    image_id: &'a str,
    category: &'a str,
    rho: Option<f64>,
    height: usize,
    width: usize,
}

pub fn write_comparison_tables(report: &CompareReport, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = dir.join("comparison.csv");
    write_csv(
        &path,
        report.results.iter().flat_map(|r| {
            r.images.iter().map(|i| CompareRow {
                source: r.source.to_string(),
                image_id: &i.image_id,
                category: &i.category,
                rho: i.rho,
                height: i.height,
                width: i.width,
            })
        }),
    )?;
    Ok(vec![path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::BubbleMap;
    use ndarray::Array2;

    fn images() -> Vec<ImageMaps> {
        (0..3)
            .map(|i| ImageMaps {
                image_id: format!("img{i}"),
                maps: (0..6)
                    .map(|p| BubbleMap {
                        image_id: format!("img{i}"),
                        pair_id: format!("p{p}"),
                        grid: Array2::from_shape_fn((20, 20), |(y, x)| u32::from((x + p) % 7 == 0 && y > 3 * i)),
                        total_bubbles: 5 + p as u32,
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn report_is_deterministic_apart_from_header() {
        let params = AnalysisParams { iterations: 50, seed: 4, include_skipped: false };
        let a = render_report(&analyze(&images(), params).unwrap(), "2026-01-01T00:00:00Z");
        let b = render_report(&analyze(&images(), params).unwrap(), "2026-02-02T00:00:00Z");
        assert_ne!(a, b);
        assert_eq!(strip_header(&a), strip_header(&b));
        assert!(a.starts_with("# generated 2026-01-01"));
        let parsed: toml::Value = toml::from_str(&a).unwrap();
        assert_eq!(parsed["summary"]["pairs"].as_integer(), Some(6));
        assert_eq!(parsed["parameters"]["iterations"].as_integer(), Some(50));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(analyze(&[], AnalysisParams::default()), Err(AnalysisError::NoMaps)));
        assert_eq!(AnalysisError::NoMaps.to_string(), "no bubble maps found");
    }

    #[test]
    fn tables_written() {
        let dir = tempfile::tempdir().unwrap();
        let r = analyze(&images(), AnalysisParams { iterations: 10, ..Default::default() }).unwrap();
        let files = write_tables(&r, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let scores = fs::read_to_string(dir.path().join("split_half_scores.csv")).unwrap();
        assert!(scores.starts_with("group,iteration,rho\nall,0,"));
    }
}
