use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::consistency::SplitHalfResult;
use super::correlation::spearman;
use super::moments::mean;
use super::{Result, StatsError};
use crate::maps::{common_grid, resample_grid, Dims, ExternalHeatmap, HeatmapSource, ImportanceMap, ResampleMode};

/// Smallest side allowed for the shared grid when neither map divides the
/// other evenly.
pub const MIN_COMMON_SIDE: usize = 8;

pub const UNCATEGORIZED: &str = "uncategorized";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageComparison {
    pub image_id: String,
    pub category: String,
    /// None when either side was constant on the compared grid.
    pub rho: Option<f64>,
    /// Grid the two maps were compared on.
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub category: String,
    pub mean_rho: f64,
    pub n_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub source: HeatmapSource,
    pub images: Vec<ImageComparison>,
    pub categories: Vec<CategoryMean>,
    pub overall_mean_rho: Option<f64>,
    pub degenerate: Vec<String>,
    pub permutation_p: Option<f64>,
}

impl ComparisonResult {
    /// Fills in `permutation_p` against a split-half distribution.
    pub fn with_permutation(mut self, split_half: &SplitHalfResult) -> Self {
        self.permutation_p = self.overall_mean_rho.map(|m| permutation_p(split_half, m));
        self
    }
}

fn align(importance: &Array2<f64>, heatmap: &Array2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (di, dh) = (Dims::of(importance), Dims::of(heatmap));
    if di == dh {
        return Ok((importance.clone(), heatmap.clone()));
    }
    let map_err = |e: crate::maps::MapError| StatsError::DimensionMismatch(e.to_string());
    if dh.height % di.height == 0 && dh.width % di.width == 0 {
        let h = resample_grid(heatmap, di, ResampleMode::BoxMean).map_err(map_err)?;
        return Ok((importance.clone(), h));
    }
    let common = common_grid(di, dh);
    if common.height < MIN_COMMON_SIDE || common.width < MIN_COMMON_SIDE {
        return Err(StatsError::DimensionMismatch(format!(
            "importance {di} and heatmap {dh} share only a {common} grid"
        )));
    }
    let i = resample_grid(importance, common, ResampleMode::BoxMean).map_err(map_err)?;
    let h = resample_grid(heatmap, common, ResampleMode::BoxMean).map_err(map_err)?;
    Ok((i, h))
}

/// Rank-correlates each importance map with its image's heatmap, then
/// averages per category and overall. Images where either side is constant
/// are listed in `degenerate` and left out of every mean.
pub fn compare_to_external(
    importance: &[ImportanceMap],
    heatmaps: &[ExternalHeatmap],
    categories: &BTreeMap<String, String>,
) -> Result<ComparisonResult> {
    let Some(first) = heatmaps.first() else {
        return Err(StatsError::MissingHeatmap(
            importance.first().map(|m| m.image_id.clone()).unwrap_or_default(),
        ));
    };
    let source = first.source;
    if let Some(other) = heatmaps.iter().find(|h| h.source != source) {
        return Err(StatsError::SourceMismatch(source.to_string(), other.source.to_string()));
    }
    let by_image: BTreeMap<&str, &ExternalHeatmap> = heatmaps.iter().map(|h| (h.image_id.as_str(), h)).collect();
    let mut images = Vec::with_capacity(importance.len());
    let mut degenerate = Vec::new();
    for imp in importance {
        let hm = by_image
            .get(imp.image_id.as_str())
            .ok_or_else(|| StatsError::MissingHeatmap(imp.image_id.clone()))?;
        let (a, b) = align(&imp.grid, &hm.grid)?;
        let rho = match spearman(a.as_slice().expect("standard layout"), b.as_slice().expect("standard layout")) {
            Ok(r) => Some(r),
            Err(StatsError::DegenerateInput) => {
                degenerate.push(imp.image_id.clone());
                None
            }
            Err(e) => return Err(e),
        };
        images.push(ImageComparison {
            image_id: imp.image_id.clone(),
            category: categories.get(&imp.image_id).cloned().unwrap_or_else(|| UNCATEGORIZED.into()),
            rho,
            height: a.nrows(),
            width: a.ncols(),
        });
    }
    let mut per_cat: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for c in &images {
        if let Some(r) = c.rho {
            per_cat.entry(c.category.as_str()).or_default().push(r);
        }
    }
    let category_means = per_cat
        .into_iter()
        .map(|(category, rhos)| CategoryMean {
            category: category.to_string(),
            mean_rho: mean(&rhos),
            n_images: rhos.len(),
        })
        .collect();
    let all: Vec<f64> = images.iter().filter_map(|c| c.rho).collect();
    Ok(ComparisonResult {
        source,
        overall_mean_rho: (!all.is_empty()).then(|| mean(&all)),
        images,
        categories: category_means,
        degenerate,
        permutation_p: None,
    })
}

/// Add-one share of split-half iterations scoring at or below `external_mean_rho`.
pub fn permutation_p(split_half: &SplitHalfResult, external_mean_rho: f64) -> f64 {
    let n = split_half.scores.len();
    let below = split_half.scores.iter().filter(|&&s| s <= external_mean_rho).count();
    (1 + below) as f64 / (n + 1) as f64
}
