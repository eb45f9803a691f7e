//! Per-pixel signed error against the ground-truth mesh and the temporal
//! metrics built from it (Depth Accuracy, Time Variability, Shape Precision).
//!
//! Sign convention: positive error means the measured point lies closer to
//! the camera than the ground-truth surface.

mod export;
mod kdtree;

pub use export::{
    diverging_color, render_heatmap, sequential_color, write_metrics_csv, write_ppm, Colormap, Heatmap, MetricKind,
};
pub use kdtree::{Neighbor, VertexIndex, LEAF_SIZE};

use crate::exec::Exec;
use crate::geom::{Point3, RigidTransform, Triangle};
use crate::meshio::{CloudPoint, FrameSequence, OrganizedCloud, TriangleMesh};

/// Cross-product norm (twice the triangle area, m²) at or below which the
/// three nearest vertices count as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ErrorFieldError {
    #[error("empty field: no pixel has enough valid frames")]
    EmptyField,
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("frame is {got_w}×{got_h}, expected {want_w}×{want_h}")]
    DimensionMismatch { got_w: usize, got_h: usize, want_w: usize, want_h: usize },
    #[error("{frames} frames but {transforms} transforms")]
    TransformCount { frames: usize, transforms: usize },
}

/// How the distance to the ground truth is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Plane of the triangle spanned by the three nearest mesh vertices,
    /// measured from its centroid.
    #[default]
    NearestVertices,
    /// True point-to-triangle distance over the faces incident to the
    /// nearest vertex.
    ExactFace,
}

/// Ground-truth mesh with the lookup structures the error field needs.
#[derive(Debug, Clone)]
pub struct ReferenceSurface {
    mesh: TriangleMesh,
    index: VertexIndex,
    boundary: Vec<bool>,
    vertex_faces: Vec<Vec<u32>>,
}

impl ReferenceSurface {
    pub fn new(mesh: TriangleMesh) -> Self {
        let index = VertexIndex::build(mesh.vertices());
        let boundary = mesh.boundary_vertices();
        let vertex_faces = mesh.vertex_faces();
        Self { mesh, index, boundary, vertex_faces }
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn index(&self) -> &VertexIndex {
        &self.index
    }

    pub fn is_boundary(&self, vertex: u32) -> bool {
        self.boundary[vertex as usize]
    }
}

/// One evaluated pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    /// Signed distance in meters, positive toward the camera.
    pub error: f64,
    /// Triangle centroid (or closest face point), organ frame.
    pub closest: Point3,
    /// Vertex ids of the triangle used for the distance.
    pub footprint: [u32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FieldDiagnostics {
    /// Valid pixels in the source cloud.
    pub input_valid: usize,
    /// Pixels dropped because their triangle was degenerate.
    pub degenerate: usize,
    /// Evaluated pixels whose footprint touches a mesh boundary vertex.
    pub boundary: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorField {
    width: usize,
    height: usize,
    samples: Vec<Option<ErrorSample>>,
    diagnostics: FieldDiagnostics,
}

impl ErrorField {
    pub fn from_samples(width: usize, height: usize, samples: Vec<Option<ErrorSample>>) -> Self {
        assert_eq!(samples.len(), width * height, "sample count does not match grid");
        let input_valid = samples.iter().filter(|s| s.is_some()).count();
        Self { width, height, samples, diagnostics: FieldDiagnostics { input_valid, ..Default::default() } }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[Option<ErrorSample>] {
        &self.samples
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&ErrorSample> {
        self.samples[y * self.width + x].as_ref()
    }

    pub fn diagnostics(&self) -> FieldDiagnostics {
        self.diagnostics
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_some()).count()
    }

    /// Adds `delta` meters to every valid error.
    pub fn shifted(&self, delta: f64) -> ErrorField {
        let mut out = self.clone();
        for s in out.samples.iter_mut().flatten() {
            s.error += delta;
        }
        out
    }
}

enum PixelOutcome {
    Invalid,
    Degenerate,
    Sample(ErrorSample),
}

/// Signed error of every valid pixel of `cloud`, registered with
/// `camera_to_organ`, using the default execution strategy.
pub fn signed_error_frame(
    cloud: &OrganizedCloud,
    camera_to_organ: &RigidTransform,
    surface: &ReferenceSurface,
    mode: DistanceMode,
) -> ErrorField {
    signed_error_frame_with(Exec::default(), cloud, camera_to_organ, surface, mode)
}

pub fn signed_error_frame_with(
    exec: Exec,
    cloud: &OrganizedCloud,
    camera_to_organ: &RigidTransform,
    surface: &ReferenceSurface,
    mode: DistanceMode,
) -> ErrorField {
    let camera_center = camera_to_organ.translation();
    let width = cloud.width();
    let cells = cloud.cells();
    let rows = exec.map_range(cloud.height(), |y| {
        cells[y * width..(y + 1) * width]
            .iter()
            .map(|cell| match cell {
                None => PixelOutcome::Invalid,
                Some(c) => evaluate_point(camera_to_organ.apply(c.position), camera_center, surface, mode),
            })
            .collect::<Vec<_>>()
    });

    let mut diagnostics = FieldDiagnostics { input_valid: cloud.valid_count(), ..Default::default() };
    let mut samples = Vec::with_capacity(cells.len());
    for outcome in rows.into_iter().flatten() {
        match outcome {
            PixelOutcome::Invalid => samples.push(None),
            PixelOutcome::Degenerate => {
                diagnostics.degenerate += 1;
                samples.push(None);
            }
            PixelOutcome::Sample(s) => {
                if s.footprint.iter().any(|&v| surface.is_boundary(v)) {
                    diagnostics.boundary += 1;
                }
                samples.push(Some(s));
            }
        }
    }
    ErrorField { width, height: cloud.height(), samples, diagnostics }
}

fn evaluate_point(p: Point3, camera: Point3, surface: &ReferenceSurface, mode: DistanceMode) -> PixelOutcome {
    let Some(near) = surface.index.nearest3(p) else {
        return PixelOutcome::Degenerate;
    };
    match mode {
        DistanceMode::NearestVertices => {
            let ids = near.map(|n| n.id);
            let [a, b, c] = ids.map(|i| surface.mesh.vertices()[i as usize]);
            let normal = (b - a).cross(c - a);
            let len = normal.norm();
            if !(len > COLLINEAR_TOLERANCE) {
                return PixelOutcome::Degenerate;
            }
            let centroid = (a + b + c) / 3.0;
            let mut n = normal / len;
            if n.dot(camera - centroid) < 0.0 {
                n = -n;
            }
            PixelOutcome::Sample(ErrorSample { error: (p - centroid).dot(n), closest: centroid, footprint: ids })
        }
        DistanceMode::ExactFace => {
            let nearest = near[0].id as usize;
            let mut best: Option<(f64, Point3, Triangle)> = None;
            for &fi in &surface.vertex_faces[nearest] {
                let face = surface.mesh.faces()[fi as usize];
                let [a, b, c] = surface.mesh.triangle_points(&face);
                let q = closest_point_on_triangle(p, a, b, c);
                let d2 = p.distance_squared(q);
                if best.is_none_or(|(bd, _, _)| d2 < bd) {
                    best = Some((d2, q, face));
                }
            }
            let Some((d2, q, face)) = best else {
                return PixelOutcome::Degenerate;
            };
            let [a, b, c] = surface.mesh.triangle_points(&face);
            let Some(mut n) = (b - a).cross(c - a).normalized() else {
                return PixelOutcome::Degenerate;
            };
            if n.dot(camera - (a + b + c) / 3.0) < 0.0 {
                n = -n;
            }
            let side = (p - q).dot(n);
            let error = if side < 0.0 { -d2.sqrt() } else { d2.sqrt() };
            PixelOutcome::Sample(ErrorSample { error, closest: q, footprint: face.0 })
        }
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: Point3, a: Point3, b: Point3, c: Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Per-pixel temporal statistics of one camera and condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelMetrics {
    /// Depth Accuracy: temporal mean of the signed error (m).
    pub mean: f64,
    /// Time Variability: sample standard deviation over frames (m).
    pub sd: f64,
    /// Shape Precision: |mean − mean over the analyzed pixels| (m).
    pub shifted_ae: f64,
    /// Frames in which the pixel was valid.
    pub support: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricFields {
    width: usize,
    height: usize,
    n_frames: usize,
    pixels: Vec<Option<PixelMetrics>>,
}

impl MetricFields {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn pixels(&self) -> &[Option<PixelMetrics>] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&PixelMetrics> {
        self.pixels[y * self.width + x].as_ref()
    }

    pub fn valid_count(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }

    /// Recomputes Shape Precision relative to the mean Depth Accuracy of the
    /// pixels selected by `keep(pixel_index)`. Returns that mean, or `None`
    /// (leaving the field untouched) when no retained pixel is selected.
    pub fn recenter_shape_precision(&mut self, keep: impl Fn(usize) -> bool) -> Option<f64> {
        let (sum, n) = self
            .pixels
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.filter(|_| keep(i)))
            .fold((0.0, 0usize), |(s, n), p| (s + p.mean, n + 1));
        if n == 0 {
            return None;
        }
        let center = sum / n as f64;
        for p in self.pixels.iter_mut().flatten() {
            p.shifted_ae = (p.mean - center).abs();
        }
        Some(center)
    }

    /// Adds `delta` to every pixel mean; Shape Precision is recentered on the
    /// same pixels, so it is unchanged up to rounding.
    pub fn with_offset(&self, delta: f64) -> MetricFields {
        let mut out = self.clone();
        for p in out.pixels.iter_mut().flatten() {
            p.mean += delta;
        }
        out.recenter_shape_precision(|_| true);
        out
    }

    /// Drops every pixel for which `keep(pixel_index)` is false.
    pub fn masked(&self, keep: impl Fn(usize) -> bool) -> MetricFields {
        let mut out = self.clone();
        for (i, p) in out.pixels.iter_mut().enumerate() {
            if !keep(i) {
                *p = None;
            }
        }
        out
    }
}

/// Streaming per-pixel mean / sample SD over error fields.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    width: usize,
    height: usize,
    frames: usize,
    count: Vec<u32>,
    sum: Vec<f64>,
    running_mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MetricAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            frames: 0,
            count: vec![0; n],
            sum: vec![0.0; n],
            running_mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn add(&mut self, field: &ErrorField) -> Result<(), ErrorFieldError> {
        if field.width != self.width || field.height != self.height {
            return Err(ErrorFieldError::DimensionMismatch {
                got_w: field.width,
                got_h: field.height,
                want_w: self.width,
                want_h: self.height,
            });
        }
        self.frames += 1;
        for (i, s) in field.samples.iter().enumerate() {
            if let Some(s) = s {
                // Welford update for the variance, plain sum for the mean.
                self.count[i] += 1;
                self.sum[i] += s.error;
                let delta = s.error - self.running_mean[i];
                self.running_mean[i] += delta / self.count[i] as f64;
                self.m2[i] += delta * (s.error - self.running_mean[i]);
            }
        }
        Ok(())
    }

    /// A pixel is retained when valid in at least half of the frames.
    pub fn finish(&self) -> Result<MetricFields, ErrorFieldError> {
        if self.frames < 2 {
            return Err(ErrorFieldError::TooFewFrames { needed: 2, got: self.frames });
        }
        let pixels: Vec<Option<PixelMetrics>> = (0..self.count.len())
            .map(|i| {
                let n = self.count[i] as usize;
                (n > 0 && 2 * n >= self.frames).then(|| PixelMetrics {
                    mean: self.sum[i] / n as f64,
                    // A single observation has no spread estimate; report 0.
                    sd: if n > 1 { (self.m2[i].max(0.0) / (n - 1) as f64).sqrt() } else { 0.0 },
                    shifted_ae: 0.0,
                    support: n as u32,
                })
            })
            .collect();
        let mut fields = MetricFields { width: self.width, height: self.height, n_frames: self.frames, pixels };
        fields.recenter_shape_precision(|_| true).ok_or(ErrorFieldError::EmptyField)?;
        Ok(fields)
    }
}

/// Error fields for every frame (with its own transform) folded into metrics.
pub fn aggregate(
    seq: &FrameSequence,
    transforms: &[RigidTransform],
    surface: &ReferenceSurface,
    mode: DistanceMode,
) -> Result<MetricFields, ErrorFieldError> {
    aggregate_with(Exec::default(), seq, transforms, surface, mode)
}

pub fn aggregate_with(
    exec: Exec,
    seq: &FrameSequence,
    transforms: &[RigidTransform],
    surface: &ReferenceSurface,
    mode: DistanceMode,
) -> Result<MetricFields, ErrorFieldError> {
    if transforms.len() != seq.frames().len() {
        return Err(ErrorFieldError::TransformCount { frames: seq.frames().len(), transforms: transforms.len() });
    }
    if seq.frames().len() < 2 {
        return Err(ErrorFieldError::TooFewFrames { needed: 2, got: seq.frames().len() });
    }
    let mut acc = MetricAccumulator::new(seq.width(), seq.height());
    for (frame, t) in seq.frames().iter().zip(transforms) {
        acc.add(&signed_error_frame_with(exec, frame, t, surface, mode))?;
    }
    acc.finish()
}

/// Streaming per-pixel mean of valid points with the ≥ 50 % support rule.
#[derive(Debug, Clone)]
pub struct TemporalMean {
    width: usize,
    height: usize,
    frames: usize,
    time_sum: f64,
    count: Vec<u32>,
    position: Vec<Point3>,
    color: Vec<[u64; 3]>,
}

impl TemporalMean {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            frames: 0,
            time_sum: 0.0,
            count: vec![0; n],
            position: vec![Point3::ZERO; n],
            color: vec![[0; 3]; n],
        }
    }

    pub fn add(&mut self, cloud: &OrganizedCloud) -> Result<(), ErrorFieldError> {
        if cloud.width() != self.width || cloud.height() != self.height {
            return Err(ErrorFieldError::DimensionMismatch {
                got_w: cloud.width(),
                got_h: cloud.height(),
                want_w: self.width,
                want_h: self.height,
            });
        }
        self.frames += 1;
        self.time_sum += cloud.timestamp();
        for (i, c) in cloud.cells().iter().enumerate() {
            if let Some(c) = c {
                self.count[i] += 1;
                self.position[i] += c.position;
                for k in 0..3 {
                    self.color[i][k] += c.color[k] as u64;
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> OrganizedCloud {
        if self.frames == 0 {
            return OrganizedCloud::empty(self.width, self.height, 0.0);
        }
        let cells = (0..self.count.len())
            .map(|i| {
                let n = self.count[i] as usize;
                (n > 0 && 2 * n >= self.frames).then(|| CloudPoint {
                    position: self.position[i] / n as f64,
                    color: self.color[i].map(|c| ((c as f64) / n as f64).round() as u8),
                })
            })
            .collect();
        OrganizedCloud::new(self.width, self.height, self.time_sum / self.frames as f64, cells)
            .expect("mean of valid points is valid")
    }
}

pub fn temporal_mean_cloud(seq: &FrameSequence) -> OrganizedCloud {
    let mut acc = TemporalMean::new(seq.width(), seq.height());
    for f in seq.frames() {
        acc.add(f).expect("sequence frames share dimensions");
    }
    acc.finish()
}
