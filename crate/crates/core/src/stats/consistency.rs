use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::spearman_counts;
use super::moments::{kurtosis, mean, t_test_ind, TTest};
use super::{Result, StatsError};
use crate::maps::{aggregate_importance, BubbleMap, ImportanceMap};
use crate::seed::{domain, rng_for};

/// Every pair's bubble map for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMaps {
    pub image_id: String,
    pub maps: Vec<BubbleMap>,
}

impl ImageMaps {
    pub fn importance(&self) -> Option<ImportanceMap> {
        aggregate_importance(&self.maps).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalfResult {
    /// One score per iteration that had at least one comparable image.
    pub scores: Vec<f64>,
    pub mean_rho: f64,
    pub n_iterations: usize,
    /// Iterations where no image had contributors in both halves.
    pub skipped_iterations: usize,
    pub seed: u64,
}

struct PreparedImage {
    /// (pair index, counts over the support)
    contributors: Vec<(usize, Vec<u32>)>,
    total: Vec<u32>,
    /// Pixels no contributor ever covered.
    zeros: usize,
}

struct Prepared {
    n_pairs: usize,
    images: Vec<PreparedImage>,
}

impl Prepared {
    fn new(images: &[ImageMaps]) -> Result<Self> {
        let mut pair_index = BTreeMap::new();
        for img in images {
            for m in &img.maps {
                pair_index.entry(m.pair_id.clone()).or_insert(());
            }
        }
        let pair_index: BTreeMap<String, usize> = pair_index.into_keys().enumerate().map(|(i, p)| (p, i)).collect();
        let mut prepared = Vec::with_capacity(images.len());
        for img in images {
            let Some(first) = img.maps.first() else { continue };
            let dim = first.grid.dim();
            if let Some(bad) = img.maps.iter().find(|m| m.grid.dim() != dim) {
                return Err(StatsError::DimensionMismatch(format!(
                    "image {}: pair {} has a {:?} grid, expected {:?}",
                    img.image_id,
                    bad.pair_id,
                    bad.grid.dim(),
                    dim
                )));
            }
            let n_pixels = first.grid.len();
            let mut full_total = vec![0u32; n_pixels];
            for m in &img.maps {
                for (t, &v) in full_total.iter_mut().zip(m.grid.iter()) {
                    *t += v;
                }
            }
            let support: Vec<usize> = (0..n_pixels).filter(|&i| full_total[i] > 0).collect();
            let contributors = img
                .maps
                .iter()
                .map(|m| {
                    let flat = m.grid.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| m.grid.iter().copied().collect());
                    (pair_index[&m.pair_id], support.iter().map(|&i| flat[i]).collect())
                })
                .collect();
            prepared.push(PreparedImage {
                contributors,
                total: support.iter().map(|&i| full_total[i]).collect(),
                zeros: n_pixels - support.len(),
            });
        }
        Ok(Self {
            n_pairs: pair_index.len(),
            images: prepared,
        })
    }

    /// Mean over images of the rank correlation between the two halves'
    /// summed maps. Sums stand in for means: rank correlation ignores the
    /// positive per-group scale.
    fn iteration(&self, seed: u64, index: usize) -> Option<f64> {
        let mut rng = rng_for(seed, domain::SPLIT_HALF, index as u64);
        let mut order: Vec<usize> = (0..self.n_pairs).collect();
        order.shuffle(&mut rng);
        let mut in_first = vec![false; self.n_pairs];
        for &p in &order[..self.n_pairs / 2] {
            in_first[p] = true;
        }
        let mut rhos = Vec::with_capacity(self.images.len());
        for img in &self.images {
            let mut first = vec![0u32; img.total.len()];
            let mut n_first = 0;
            for (pair, counts) in &img.contributors {
                if in_first[*pair] {
                    n_first += 1;
                    for (a, &c) in first.iter_mut().zip(counts) {
                        *a += c;
                    }
                }
            }
            if n_first == 0 || n_first == img.contributors.len() {
                continue;
            }
            let second: Vec<u32> = img.total.iter().zip(&first).map(|(t, a)| t - a).collect();
            if let Ok(rho) = spearman_counts(&first, &second, img.zeros) {
                rhos.push(rho);
            }
        }
        if rhos.is_empty() {
            None
        } else {
            Some(mean(&rhos))
        }
    }
}

/// Repeatedly splits the pairs into two random halves and correlates the
/// halves' mean importance maps image by image.
pub fn split_half_consistency(images: &[ImageMaps], n_iterations: usize, seed: u64) -> Result<SplitHalfResult> {
    let prepared = Prepared::new(images)?;
    if prepared.n_pairs < 2 {
        return Err(StatsError::TooFewPairs {
            needed: 2,
            got: prepared.n_pairs,
        });
    }
    if n_iterations == 0 {
        return Err(StatsError::TooFewValues { needed: 1, got: 0 });
    }
    let per_iteration: Vec<Option<f64>> = (0..n_iterations)
        .into_par_iter()
        .map(|i| prepared.iteration(seed, i))
        .collect();
    let scores: Vec<f64> = per_iteration.iter().flatten().copied().collect();
    let skipped = n_iterations - scores.len();
    let mean_rho = if scores.is_empty() { f64::NAN } else { mean(&scores) };
    Ok(SplitHalfResult {
        scores,
        mean_rho,
        n_iterations,
        skipped_iterations: skipped,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSplit {
    pub image_id: String,
    pub median: f64,
    pub efficient: Vec<String>,
    pub inefficient: Vec<String>,
    pub kurtosis_efficient: Option<f64>,
    pub kurtosis_inefficient: Option<f64>,
    /// Why the image did not enter the group maps, if it did not.
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub mean_kurtosis: f64,
    pub n_images: usize,
    pub split_half: SplitHalfResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianSplitResult {
    pub images: Vec<ImageSplit>,
    pub efficient: GroupSummary,
    pub inefficient: GroupSummary,
    /// Per-image kurtosis, efficient vs inefficient.
    pub kurtosis_test: Option<TTest>,
    /// Split-half iteration scores, efficient vs inefficient.
    pub rho_test: Option<TTest>,
    pub efficient_maps: Vec<ImportanceMap>,
    pub inefficient_maps: Vec<ImportanceMap>,
}

pub const MIN_PAIRS_FOR_SPLIT: usize = 4;

fn median(sorted: &[u32]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Per image, pairs that needed strictly fewer bubbles than the median are
/// efficient and the rest inefficient. Compares the two groups' map sparsity
/// (kurtosis) and internal consistency (split-half rho).
pub fn median_split_efficiency(images: &[ImageMaps], n_iterations: usize, seed: u64) -> Result<MedianSplitResult> {
    let mut splits = Vec::new();
    let mut eff_images = Vec::new();
    let mut ineff_images = Vec::new();
    let mut eff_maps = Vec::new();
    let mut ineff_maps = Vec::new();
    let mut most_pairs = 0;
    for img in images {
        most_pairs = most_pairs.max(img.maps.len());
        let mut counts: Vec<u32> = img.maps.iter().map(|m| m.total_bubbles).collect();
        counts.sort_unstable();
        let mut split = ImageSplit {
            image_id: img.image_id.clone(),
            median: f64::NAN,
            efficient: Vec::new(),
            inefficient: Vec::new(),
            kurtosis_efficient: None,
            kurtosis_inefficient: None,
            excluded: None,
        };
        if img.maps.len() < MIN_PAIRS_FOR_SPLIT {
            split.excluded = Some(format!("{} pairs, need {MIN_PAIRS_FOR_SPLIT}", img.maps.len()));
            splits.push(split);
            continue;
        }
        let med = median(&counts);
        split.median = med;
        let (eff, ineff): (Vec<&BubbleMap>, Vec<&BubbleMap>) =
            img.maps.iter().partition(|m| (m.total_bubbles as f64) < med);
        split.efficient = eff.iter().map(|m| m.pair_id.clone()).collect();
        split.inefficient = ineff.iter().map(|m| m.pair_id.clone()).collect();
        if eff.is_empty() || ineff.is_empty() {
            split.excluded = Some("all pairs tied at the median".into());
            splits.push(split);
            continue;
        }
        let eff_map = aggregate_importance(eff.iter().copied()).map_err(|e| StatsError::DimensionMismatch(e.to_string()))?;
        let ineff_map =
            aggregate_importance(ineff.iter().copied()).map_err(|e| StatsError::DimensionMismatch(e.to_string()))?;
        split.kurtosis_efficient = kurtosis(eff_map.grid.as_slice().expect("standard layout")).ok();
        split.kurtosis_inefficient = kurtosis(ineff_map.grid.as_slice().expect("standard layout")).ok();
        eff_images.push(ImageMaps {
            image_id: img.image_id.clone(),
            maps: eff.into_iter().cloned().collect(),
        });
        ineff_images.push(ImageMaps {
            image_id: img.image_id.clone(),
            maps: ineff.into_iter().cloned().collect(),
        });
        eff_maps.push(eff_map);
        ineff_maps.push(ineff_map);
        splits.push(split);
    }
    if eff_images.is_empty() && most_pairs >= MIN_PAIRS_FOR_SPLIT {
        return Err(StatsError::NoSplit);
    }
    if eff_images.is_empty() {
        return Err(StatsError::TooFewPairs {
            needed: MIN_PAIRS_FOR_SPLIT,
            got: most_pairs,
        });
    }
    // kurtosis compared over images where both groups have one
    let (k_eff, k_ineff): (Vec<f64>, Vec<f64>) = splits
        .iter()
        .filter_map(|s| Some((s.kurtosis_efficient?, s.kurtosis_inefficient?)))
        .unzip();
    let eff_half = split_half_consistency(&eff_images, n_iterations, seed)?;
    let ineff_half = split_half_consistency(&ineff_images, n_iterations, seed)?;
    let kurtosis_test = t_test_ind(&k_eff, &k_ineff).ok();
    let rho_test = t_test_ind(&eff_half.scores, &ineff_half.scores).ok();
    let summary = |k: &[f64], half: SplitHalfResult| GroupSummary {
        mean_kurtosis: if k.is_empty() { f64::NAN } else { mean(k) },
        n_images: k.len(),
        split_half: half,
    };
    Ok(MedianSplitResult {
        images: splits,
        efficient: summary(&k_eff, eff_half),
        inefficient: summary(&k_ineff, ineff_half),
        kurtosis_test,
        rho_test,
        efficient_maps: eff_maps,
        inefficient_maps: ineff_maps,
    })
}
