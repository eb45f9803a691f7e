//! PPM heatmaps and flat CSV export of metric fields.

use std::io::Write;

use super::MetricFields;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    DepthAccuracy,
    TimeVariability,
    ShapePrecision,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] =
        [MetricKind::DepthAccuracy, MetricKind::TimeVariability, MetricKind::ShapePrecision];

    /// Name used in CSV files and the long table.
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::DepthAccuracy => "depth_accuracy",
            MetricKind::TimeVariability => "time_variability",
            MetricKind::ShapePrecision => "shape_precision",
        }
    }

    pub fn from_name(s: &str) -> Option<MetricKind> {
        MetricKind::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn value(self, p: &super::PixelMetrics) -> f64 {
        match self {
            MetricKind::DepthAccuracy => p.mean,
            MetricKind::TimeVariability => p.sd,
            MetricKind::ShapePrecision => p.shifted_ae,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Colormap {
    /// Blue (−limit) → white (0) → red (+limit).
    Diverging { limit: f64 },
    /// White (0) → red (max), for unsigned metrics.
    Sequential { max: f64 },
}

fn channel(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn diverging_color(value: f64, limit: f64) -> [u8; 3] {
    let t = (value / limit).clamp(-1.0, 1.0);
    if t < 0.0 {
        [channel(1.0 + t), channel(1.0 + t), 255]
    } else {
        [255, channel(1.0 - t), channel(1.0 - t)]
    }
}

pub fn sequential_color(value: f64, max: f64) -> [u8; 3] {
    let t = (value / max).clamp(0.0, 1.0);
    [255, channel(1.0 - t), channel(1.0 - t)]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

/// Invalid (`None`) pixels are black.
pub fn render_heatmap(width: usize, height: usize, values: impl Fn(usize) -> Option<f64>, map: Colormap) -> Heatmap {
    let mut rgb = Vec::with_capacity(width * height * 3);
    for i in 0..width * height {
        let c = match values(i) {
            None => [0, 0, 0],
            Some(v) => match map {
                Colormap::Diverging { limit } => diverging_color(v, limit),
                Colormap::Sequential { max } => sequential_color(v, max),
            },
        };
        rgb.extend_from_slice(&c);
    }
    Heatmap { width, height, rgb }
}

impl MetricFields {
    /// Depth Accuracy uses the diverging map over `±range`; the unsigned
    /// metrics use the sequential map over `[0, range]`.
    pub fn heatmap(&self, metric: MetricKind, range: f64) -> Heatmap {
        let map = match metric {
            MetricKind::DepthAccuracy => Colormap::Diverging { limit: range },
            _ => Colormap::Sequential { max: range },
        };
        render_heatmap(self.width(), self.height(), |i| self.pixels()[i].map(|p| metric.value(&p)), map)
    }
}

/// Binary PPM (P6).
pub fn write_ppm<W: Write>(map: &Heatmap, w: &mut W) -> std::io::Result<()> {
    write!(w, "P6\n{} {}\n255\n", map.width, map.height)?;
    w.write_all(&map.rgb)
}

/// `px,py,mean,sd,shifted_ae` for every retained pixel, row-major.
pub fn write_metrics_csv<W: Write>(fields: &MetricFields, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "px,py,mean,sd,shifted_ae")?;
    for (i, p) in fields.pixels().iter().enumerate() {
        if let Some(p) = p {
            writeln!(w, "{},{},{},{},{}", i % fields.width(), i / fields.width(), p.mean, p.sd, p.shifted_ae)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(diverging_color(-0.01, 0.01), [0, 0, 255]);
        assert_eq!(diverging_color(0.0, 0.01), [255, 255, 255]);
        assert_eq!(diverging_color(0.05, 0.01), [255, 0, 0]);
        assert_eq!(sequential_color(0.0, 0.01), [255, 255, 255]);
    }

    #[test]
    fn ppm_layout() {
        let map = render_heatmap(2, 1, |i| (i == 1).then_some(0.0), Colormap::Diverging { limit: 0.01 });
        let mut out = Vec::new();
        write_ppm(&map, &mut out).unwrap();
        assert_eq!(out, b"P6\n2 1\n255\n\x00\x00\x00\xff\xff\xff");
    }
}
