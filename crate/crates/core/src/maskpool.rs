//! View-field and content masking on the ground-truth footprint, and
//! rectangular tile pooling of metric fields.

use std::collections::HashSet;
use std::io::Write;

use crate::errorfield::{ErrorField, MetricFields, MetricKind};
use crate::meshio::{Label, TriangleMesh};

/// Default pooling grid.
pub const DEFAULT_COLUMNS: usize = 6;
pub const DEFAULT_ROWS: usize = 5;
/// A tile with a larger outlier fraction than this gets no value.
pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("mask is {mask_w}×{mask_h} but the field is {field_w}×{field_h}")]
    DimensionMismatch { mask_w: usize, mask_h: usize, field_w: usize, field_h: usize },
    #[error("a {width}×{height} image cannot be split into {cols}×{rows} tiles")]
    TooSmall { width: usize, height: usize, cols: usize, rows: usize },
    #[error("outlier threshold {0} is outside (0, 1]")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    width: usize,
    height: usize,
    keep: Vec<bool>,
}

impl PixelMask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, keep: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let keep = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self { width, height, keep }
    }

    /// True where the field has a sample.
    pub fn validity(field: &ErrorField) -> Self {
        Self {
            width: field.width(),
            height: field.height(),
            keep: field.samples().iter().map(Option::is_some).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.keep[y * self.width + x]
    }

    pub fn at(&self, index: usize) -> bool {
        self.keep[index]
    }

    pub fn count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn and(&self, other: &PixelMask) -> Result<PixelMask, PoolError> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(PoolError::DimensionMismatch {
                mask_w: other.width,
                mask_h: other.height,
                field_w: self.width,
                field_h: self.height,
            });
        }
        Ok(PixelMask {
            width: self.width,
            height: self.height,
            keep: self.keep.iter().zip(&other.keep).map(|(a, b)| *a && *b).collect(),
        })
    }
}

/// Mesh vertex ids touched by a camera's closest-point lookups.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Footprint {
    ids: HashSet<u32>,
}

impl Footprint {
    pub fn from_ids(ids: impl IntoIterator<Item = u32>) -> Self {
        Self { ids: ids.into_iter().collect() }
    }

    pub fn contains(&self, id: u32) -> bool {
        self.ids.contains(&id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn sorted_ids(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.ids.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn extend(&mut self, other: &Footprint) {
        self.ids.extend(other.ids.iter().copied());
    }
}

/// Union of the footprint vertices of every valid pixel.
pub fn footprint_of(field: &ErrorField) -> Footprint {
    Footprint::from_ids(field.samples().iter().flatten().flat_map(|s| s.footprint))
}

fn vote(field: &ErrorField, accept: impl Fn(u32) -> bool) -> PixelMask {
    PixelMask {
        width: field.width(),
        height: field.height(),
        keep: field
            .samples()
            .iter()
            .map(|s| s.is_some_and(|s| s.footprint.iter().filter(|&&v| accept(v)).count() >= 2))
            .collect(),
    }
}

/// Keeps a pixel when at least 2 of its 3 footprint vertices were also seen
/// by the other camera.
pub fn viewfield_mask(field: &ErrorField, other: &Footprint) -> PixelMask {
    vote(field, |v| other.contains(v))
}

/// Keeps a pixel when at least 2 of its 3 footprint vertices are Inlier.
pub fn content_mask(field: &ErrorField, mesh: &TriangleMesh) -> PixelMask {
    let labels = mesh.labels();
    vote(field, |v| labels.get(v as usize) == Some(&Label::Inlier))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileSpec {
    pub columns: usize,
    pub rows: usize,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec { columns: DEFAULT_COLUMNS, rows: DEFAULT_ROWS }
    }
}

impl TileSpec {
    pub fn count(&self) -> usize {
        self.columns * self.rows
    }

    /// Pixel range of tile `k` along an axis of `len` pixels split in `n`:
    /// equal floor-sized tiles, the last one absorbing the remainder.
    pub fn span(len: usize, n: usize, k: usize) -> std::ops::Range<usize> {
        let size = len / n;
        let start = k * size;
        let end = if k + 1 == n { len } else { start + size };
        start..end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tile {
    /// 1-based, row-major.
    pub id: u32,
    pub value: Option<f64>,
    /// Pixels that are valid and kept by the mask.
    pub support: usize,
    /// Total pixels in the tile.
    pub pixels: usize,
    pub outlier_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub spec: TileSpec,
    pub tiles: Vec<Tile>,
}

impl TileGrid {
    pub fn values(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.tiles.iter().filter_map(|t| t.value.map(|v| (t.id, v)))
    }

    pub fn present_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.value.is_some()).count()
    }
}

/// Tile grids for the three metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledMetrics {
    pub depth_accuracy: TileGrid,
    pub time_variability: TileGrid,
    pub shape_precision: TileGrid,
}

impl PooledMetrics {
    pub fn get(&self, metric: MetricKind) -> &TileGrid {
        match metric {
            MetricKind::DepthAccuracy => &self.depth_accuracy,
            MetricKind::TimeVariability => &self.time_variability,
            MetricKind::ShapePrecision => &self.shape_precision,
        }
    }
}

/// Averages each metric over the valid, mask-true pixels of every tile.
pub fn pool(
    fields: &MetricFields,
    mask: &PixelMask,
    spec: TileSpec,
    outlier_threshold: f64,
) -> Result<PooledMetrics, PoolError> {
    let (w, h) = (fields.width(), fields.height());
    if (mask.width, mask.height) != (w, h) {
        return Err(PoolError::DimensionMismatch { mask_w: mask.width, mask_h: mask.height, field_w: w, field_h: h });
    }
    if spec.columns == 0 || spec.rows == 0 || w < spec.columns || h < spec.rows {
        return Err(PoolError::TooSmall { width: w, height: h, cols: spec.columns, rows: spec.rows });
    }
    if !(outlier_threshold > 0.0 && outlier_threshold <= 1.0) {
        return Err(PoolError::Threshold(outlier_threshold));
    }

    let mut grids: [Vec<Tile>; 3] = Default::default();
    for row in 0..spec.rows {
        for col in 0..spec.columns {
            let id = (row * spec.columns + col + 1) as u32;
            let xs = TileSpec::span(w, spec.columns, col);
            let ys = TileSpec::span(h, spec.rows, row);
            let pixels = xs.len() * ys.len();
            let mut sums = [0.0; 3];
            let mut kept = 0usize;
            for y in ys {
                for x in xs.clone() {
                    let i = y * w + x;
                    if let (Some(p), true) = (fields.pixels()[i], mask.at(i)) {
                        kept += 1;
                        for (s, m) in sums.iter_mut().zip(MetricKind::ALL) {
                            *s += m.value(&p);
                        }
                    }
                }
            }
            let outliers = pixels - kept;
            let outlier_fraction = outliers as f64 / pixels as f64;
            // Integer comparison with a relative guard so exactly-at-threshold tiles stay.
            let dropped = outliers as f64 > outlier_threshold * pixels as f64 * (1.0 + 1e-12) || kept == 0;
            for (grid, s) in grids.iter_mut().zip(sums) {
                grid.push(Tile {
                    id,
                    value: (!dropped).then(|| s / kept as f64),
                    support: kept,
                    pixels,
                    outlier_fraction,
                });
            }
        }
    }
    let [da, tv, sp] = grids;
    Ok(PooledMetrics {
        depth_accuracy: TileGrid { spec, tiles: da },
        time_variability: TileGrid { spec, tiles: tv },
        shape_precision: TileGrid { spec, tiles: sp },
    })
}

/// `tile_id,metric,value,support,outlier_frac`; absent values are empty.
pub fn write_tiles_csv<W: Write>(pooled: &PooledMetrics, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "tile_id,metric,value,support,outlier_frac")?;
    for metric in MetricKind::ALL {
        for t in &pooled.get(metric).tiles {
            let value = t.value.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", t.id, metric.name(), value, t.support, t.outlier_fraction)?;
        }
    }
    Ok(())
}
