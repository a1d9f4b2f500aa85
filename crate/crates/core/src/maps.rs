//! Bubble maps, importance maps and external heatmaps, plus the FIMAP and CSV
//! grid formats.
//!
//! Grids are `ndarray::Array2` indexed `[row, column]`, i.e. `[y, x]`.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{extent, Bubble};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("bubble center ({x}, {y}) outside {width}x{height}")]
    CenterOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("no maps to aggregate")]
    EmptyInput,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("maps belong to different images ({0} vs {1})")]
    ImageMismatch(String, String),
    #[error("cannot box-resample {from_h}x{from_w} to {to_h}x{to_w}: ratios must be integers")]
    NonIntegerRatio { from_h: usize, from_w: usize, to_h: usize, to_w: usize },
    #[error("not a FIMAP grid: {0}")]
    BadMagic(String),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("csv grid: {0}")]
    Csv(String),
    #[error("unknown heatmap source {0:?}")]
    UnknownSource(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MapError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }

    pub fn of<T>(grid: &Array2<T>) -> Self {
        let (height, width) = grid.dim();
        Self { height, width }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// How many bubbles covered each pixel for one pair on one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BubbleMap {
    pub image_id: String,
    pub pair_id: String,
    pub grid: Array2<u32>,
    pub total_bubbles: u32,
}

/// Mean bubble count per pixel across the contributing pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub image_id: String,
    pub grid: Array2<f64>,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapSource {
    Lrp,
    Cam,
    Sensitivity,
    BottomUpSaliency,
    Deepgaze2,
    HumanSalicon,
    Other,
}

impl HeatmapSource {
    pub const ALL: [HeatmapSource; 7] = [
        HeatmapSource::Lrp,
        HeatmapSource::Cam,
        HeatmapSource::Sensitivity,
        HeatmapSource::BottomUpSaliency,
        HeatmapSource::Deepgaze2,
        HeatmapSource::HumanSalicon,
        HeatmapSource::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HeatmapSource::Lrp => "lrp",
            HeatmapSource::Cam => "cam",
            HeatmapSource::Sensitivity => "sensitivity",
            HeatmapSource::BottomUpSaliency => "bottom_up_saliency",
            HeatmapSource::Deepgaze2 => "deepgaze2",
            HeatmapSource::HumanSalicon => "human_salicon",
            HeatmapSource::Other => "other",
        }
    }
}

impl fmt::Display for HeatmapSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeatmapSource {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| MapError::UnknownSource(s.to_string()))
    }
}

/// A spatial map produced outside the game. Values may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalHeatmap {
    pub image_id: String,
    pub source: HeatmapSource,
    pub grid: Array2<f64>,
}

impl ExternalHeatmap {
    pub fn new(image_id: impl Into<String>, source: HeatmapSource, grid: Array2<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(MapError::DimensionMismatch("heatmap has no cells".into()));
        }
        check_finite(&grid)?;
        Ok(Self {
            image_id: image_id.into(),
            source,
            grid,
        })
    }
}

fn check_finite<T: Copy + Into<f64>>(grid: &Array2<T>) -> Result<()> {
    for ((row, col), v) in grid.indexed_iter() {
        if !(*v).into().is_finite() {
            return Err(MapError::NonFiniteValue { row, col });
        }
    }
    Ok(())
}

/// Adds +1 over each bubble's border-truncated square extent.
pub fn rasterize_bubbles(
    image_id: impl Into<String>,
    pair_id: impl Into<String>,
    bubbles: &[Bubble],
    dims: Dims,
    bubble_size: u32,
) -> Result<BubbleMap> {
    let (w, h) = (dims.width as u32, dims.height as u32);
    let mut grid = Array2::<u32>::zeros((dims.height, dims.width));
    for b in bubbles {
        if b.x >= w || b.y >= h {
            return Err(MapError::CenterOutOfBounds {
                x: b.x,
                y: b.y,
                width: w,
                height: h,
            });
        }
        let r = extent(b.x, b.y, bubble_size, w, h);
        grid.slice_mut(ndarray::s![
            r.y as usize..(r.y + r.h) as usize,
            r.x as usize..(r.x + r.w) as usize
        ])
        .mapv_inplace(|v| v + 1);
    }
    Ok(BubbleMap {
        image_id: image_id.into(),
        pair_id: pair_id.into(),
        grid,
        total_bubbles: bubbles.len() as u32,
    })
}

/// Elementwise mean of bubble maps for one image.
pub fn aggregate_importance<'a, I>(maps: I) -> Result<ImportanceMap>
where
    I: IntoIterator<Item = &'a BubbleMap>,
{
    let mut iter = maps.into_iter();
    let first = iter.next().ok_or(MapError::EmptyInput)?;
    let mut sum = first.grid.mapv(u64::from);
    let mut n = 1usize;
    for m in iter {
        if m.image_id != first.image_id {
            return Err(MapError::ImageMismatch(first.image_id.clone(), m.image_id.clone()));
        }
        if m.grid.dim() != first.grid.dim() {
            return Err(MapError::DimensionMismatch(format!(
                "{} vs {}",
                Dims::of(&first.grid),
                Dims::of(&m.grid)
            )));
        }
        Zip::from(&mut sum).and(&m.grid).for_each(|s, &v| *s += u64::from(v));
        n += 1;
    }
    let grid = sum.mapv(|s| s as f64 / n as f64);
    Ok(ImportanceMap {
        image_id: first.image_id.clone(),
        grid,
        n_pairs: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResampleMode {
    #[default]
    BoxMean,
}

/// Block-mean pooling to `target`. Both axes must shrink by an integer factor.
pub fn resample_grid(grid: &Array2<f64>, target: Dims, mode: ResampleMode) -> Result<Array2<f64>> {
    let ResampleMode::BoxMean = mode;
    let (h, w) = grid.dim();
    if target.height == 0 || target.width == 0 || h % target.height != 0 || w % target.width != 0 {
        return Err(MapError::NonIntegerRatio {
            from_h: h,
            from_w: w,
            to_h: target.height,
            to_w: target.width,
        });
    }
    let (fy, fx) = (h / target.height, w / target.width);
    if fy == 1 && fx == 1 {
        return Ok(grid.clone());
    }
    let area = (fy * fx) as f64;
    let mut out = Array2::<f64>::zeros((target.height, target.width));
    for ((ty, tx), cell) in out.indexed_iter_mut() {
        let block = grid.slice(ndarray::s![ty * fy..(ty + 1) * fy, tx * fx..(tx + 1) * fx]);
        *cell = block.sum() / area;
    }
    Ok(out)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The finest grid that both `a` and `b` reach by integer block pooling.
pub fn common_grid(a: Dims, b: Dims) -> Dims {
    Dims::new(gcd(a.height, b.height), gcd(a.width, b.width))
}

const FIMAP_MAGIC: &str = "FIMAP";
const FIMAP_VERSION: &str = "1";

/// Writes `FIMAP 1 <height> <width>\n` then row-major little-endian `f32`s.
pub fn write_fimap<W: Write>(grid: &Array2<f32>, mut out: W) -> Result<()> {
    check_finite(grid)?;
    let (h, w) = grid.dim();
    write!(out, "{FIMAP_MAGIC} {FIMAP_VERSION} {h} {w}\n")?;
    let mut buf = Vec::with_capacity(h * w * 4);
    for v in grid.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_fimap<R: Read>(input: R) -> Result<Array2<f32>> {
    let mut reader = BufReader::new(input);
    let mut header = Vec::new();
    (&mut reader).take(64).read_until(b'\n', &mut header)?;
    if header.last() != Some(&b'\n') {
        return Err(MapError::BadMagic("missing header line".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1]).map_err(|_| MapError::BadMagic("header is not text".into()))?;
    let parts: Vec<&str> = header.split(' ').collect();
    let (h, w) = match parts.as_slice() {
        [FIMAP_MAGIC, FIMAP_VERSION, h, w] => (
            h.parse::<usize>().map_err(|_| MapError::BadMagic(format!("bad height {h:?}")))?,
            w.parse::<usize>().map_err(|_| MapError::BadMagic(format!("bad width {w:?}")))?,
        ),
        _ => return Err(MapError::BadMagic(format!("unexpected header {header:?}"))),
    };
    let expected = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| MapError::BadMagic("dimensions overflow".into()))?;
    let mut payload = Vec::with_capacity(expected.min(1 << 26));
    reader.read_to_end(&mut payload)?;
    if payload.len() < expected {
        return Err(MapError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(MapError::BadMagic(format!("{} trailing bytes", payload.len() - expected)));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let grid = Array2::from_shape_vec((h, w), values).expect("length checked");
    check_finite(&grid)?;
    Ok(grid)
}

/// Plain CSV: one grid row per line, no header.
pub fn write_csv_grid<W: Write>(grid: &Array2<f64>, out: W) -> Result<()> {
    check_finite(grid)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in grid.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| MapError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv_grid<R: Read>(input: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| MapError::Csv(e.to_string()))?;
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(MapError::Csv(format!("row {} has {} cells, expected {w}", height + 1, rec.len())));
            }
            _ => {}
        }
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| MapError::Csv(format!("row {}, column {}: {cell:?}", height + 1, col + 1)))?;
            if !v.is_finite() {
                return Err(MapError::NonFiniteValue { row: height, col });
            }
            values.push(v);
        }
        height += 1;
    }
    let width = width.unwrap_or(0);
    if height == 0 || width == 0 {
        return Err(MapError::Csv("empty grid".into()));
    }
    Ok(Array2::from_shape_vec((height, width), values).expect("shape checked"))
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a grid from disk, choosing the format by extension (`.csv` or FIMAP).
pub fn read_grid(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let file = File::open(path)?;
    if is_csv(path) {
        read_csv_grid(file)
    } else {
        Ok(read_fimap(file)?.mapv(f64::from))
    }
}

pub fn write_grid(grid: &Array2<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_csv_grid(&grid.mapv(f64::from), &mut out)?;
    } else {
        write_fimap(grid, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bubble_grid(path: impl AsRef<Path>) -> Result<Array2<u32>> {
    let g = read_fimap(File::open(path)?)?;
    Ok(g.mapv(|v| v as u32))
}
