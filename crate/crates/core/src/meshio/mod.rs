//! Ground-truth meshes, organized point-cloud sequences, pose logs and pin
//! correspondences, plus their file formats (PLY, OCF v1, CSV).

mod ocf;
mod ply;
mod tables;

use std::fmt;
use std::path::{Path, PathBuf};

use crate::geom::{Point3, RigidTransform, Triangle};

pub use ocf::{read_frames, write_frames, OcfHeader, OcfReader, OcfWriter};
pub use ply::{read_ply, read_ply_from, write_ply, write_ply_to, PlyFormat};
pub use tables::{
    read_correspondences, read_correspondences_from, read_pose_log, read_pose_log_from, write_correspondences,
    write_correspondences_to, write_pose_log, write_pose_log_to,
};

/// Where in a file a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(u64),
    Byte(u64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Byte(n) => write!(f, "byte offset {n}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MeshIoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {inner}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        inner: Box<MeshIoError>,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("{at}: malformed header: {msg}")]
    Header { at: Location, msg: String },
    #[error("{at}: non-triangle face with {count} vertices")]
    NonTriangleFace { at: Location, count: usize },
    #[error("{at}: vertex index {index} out of range (vertex count {count})")]
    IndexOutOfRange { at: Location, index: i64, count: usize },
    #[error("{at}: truncated payload ({msg})")]
    Truncated { at: Location, msg: String },
    #[error("{at}: {msg}")]
    Malformed { at: Location, msg: String },
    #[error("invalid data: {0}")]
    Invalid(String),
}

impl MeshIoError {
    /// Attaches `path` unless the error already names a file.
    pub fn in_file(self, path: &Path) -> MeshIoError {
        match self {
            MeshIoError::Stream(source) => MeshIoError::Io { path: path.to_owned(), source },
            e @ (MeshIoError::Io { .. } | MeshIoError::InFile { .. }) => e,
            e => MeshIoError::InFile { path: path.to_owned(), inner: Box::new(e) },
        }
    }

    /// Location of the problem inside the file, when known.
    pub fn location(&self) -> Option<Location> {
        match self {
            MeshIoError::InFile { inner, .. } => inner.location(),
            MeshIoError::Header { at, .. }
            | MeshIoError::NonTriangleFace { at, .. }
            | MeshIoError::IndexOutOfRange { at, .. }
            | MeshIoError::Truncated { at, .. }
            | MeshIoError::Malformed { at, .. } => Some(*at),
            _ => None,
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<std::fs::File, MeshIoError> {
    std::fs::File::open(path).map_err(|source| MeshIoError::Io { path: path.to_owned(), source })
}

pub(crate) fn create(path: &Path) -> Result<std::fs::File, MeshIoError> {
    std::fs::File::create(path).map_err(|source| MeshIoError::Io { path: path.to_owned(), source })
}

/// Per-vertex content label used by content masking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Label {
    Outlier,
    #[default]
    Inlier,
}

impl Label {
    pub fn from_byte(b: u8) -> Label {
        if b == 0 {
            Label::Outlier
        } else {
            Label::Inlier
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Label::Outlier => 0,
            Label::Inlier => 1,
        }
    }
}

/// Faces with area at or below this (m²) are dropped when a mesh is built.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Ground-truth surface mesh with per-vertex labels and material ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    faces: Vec<Triangle>,
    colors: Option<Vec<[u8; 3]>>,
    labels: Vec<Label>,
    materials: Vec<u8>,
}

impl TriangleMesh {
    /// Mesh with default labels (Inlier) and materials (0), no colors.
    pub fn new(vertices: Vec<Point3>, faces: Vec<Triangle>) -> Result<Self, MeshIoError> {
        let n = vertices.len();
        Self::from_parts(vertices, faces, None, vec![Label::Inlier; n], vec![0; n])
    }

    /// Validates every attribute array and drops zero-area faces.
    pub fn from_parts(
        vertices: Vec<Point3>,
        faces: Vec<Triangle>,
        colors: Option<Vec<[u8; 3]>>,
        labels: Vec<Label>,
        materials: Vec<u8>,
    ) -> Result<Self, MeshIoError> {
        let n = vertices.len();
        if let Some(bad) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(MeshIoError::Invalid(format!("vertex {bad} has non-finite coordinates")));
        }
        if labels.len() != n || materials.len() != n || colors.as_ref().is_some_and(|c| c.len() != n) {
            return Err(MeshIoError::Invalid("per-vertex attribute count does not match vertex count".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&i) = f.0.iter().find(|&&i| i as usize >= n) {
                return Err(MeshIoError::Invalid(format!("face {fi} references vertex {i} (vertex count {n})")));
            }
        }
        let faces = faces
            .into_iter()
            .filter(|f| {
                let [a, b, c] = f.indices();
                f.is_valid_for(n) && triangle_area(vertices[a], vertices[b], vertices[c]) > DEGENERATE_AREA
            })
            .collect();
        Ok(Self { vertices, faces, colors, labels, materials })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Triangle] {
        &self.faces
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn materials(&self) -> &[u8] {
        &self.materials
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn set_labels(&mut self, labels: Vec<Label>) -> Result<(), MeshIoError> {
        if labels.len() != self.vertices.len() {
            return Err(MeshIoError::Invalid("label count mismatch".into()));
        }
        self.labels = labels;
        Ok(())
    }

    pub fn set_materials(&mut self, materials: Vec<u8>) -> Result<(), MeshIoError> {
        if materials.len() != self.vertices.len() {
            return Err(MeshIoError::Invalid("material count mismatch".into()));
        }
        self.materials = materials;
        Ok(())
    }

    pub fn set_colors(&mut self, colors: Option<Vec<[u8; 3]>>) -> Result<(), MeshIoError> {
        if colors.as_ref().is_some_and(|c| c.len() != self.vertices.len()) {
            return Err(MeshIoError::Invalid("color count mismatch".into()));
        }
        self.colors = colors;
        Ok(())
    }

    pub fn triangle_points(&self, f: &Triangle) -> [Point3; 3] {
        f.indices().map(|i| self.vertices[i])
    }

    /// Vertex flags for vertices lying on an edge used by exactly one face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut edges: std::collections::HashMap<(u32, u32), u32> = Default::default();
        for f in &self.faces {
            let [a, b, c] = f.0;
            for (p, q) in [(a, b), (b, c), (c, a)] {
                *edges.entry((p.min(q), p.max(q))).or_default() += 1;
            }
        }
        let mut flags = vec![false; self.vertices.len()];
        for ((p, q), count) in edges {
            if count == 1 {
                flags[p as usize] = true;
                flags[q as usize] = true;
            }
        }
        flags
    }

    /// Faces incident to each vertex.
    pub fn vertex_faces(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for i in f.indices() {
                adj[i].push(fi as u32);
            }
        }
        adj
    }
}

pub fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    0.5 * (b - a).cross(c - a).norm()
}

/// A valid pixel of an organized cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    /// Camera frame, meters.
    pub position: Point3,
    pub color: [u8; 3],
}

/// W×H grid of optional camera-frame points.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganizedCloud {
    width: usize,
    height: usize,
    timestamp: f64,
    cells: Vec<Option<CloudPoint>>,
}

impl OrganizedCloud {
    pub fn new(
        width: usize,
        height: usize,
        timestamp: f64,
        cells: Vec<Option<CloudPoint>>,
    ) -> Result<Self, MeshIoError> {
        if cells.len() != width * height {
            return Err(MeshIoError::Invalid(format!("{} cells for a {width}×{height} grid", cells.len())));
        }
        if !timestamp.is_finite() {
            return Err(MeshIoError::Invalid("non-finite timestamp".into()));
        }
        if let Some(i) = cells.iter().position(|c| c.is_some_and(|c| !c.position.is_finite() || c.position.z <= 0.0)) {
            return Err(MeshIoError::Invalid(format!(
                "pixel ({}, {}) has a non-finite point or non-positive depth",
                i % width.max(1),
                i / width.max(1)
            )));
        }
        Ok(Self { width, height, timestamp, cells })
    }

    pub fn empty(width: usize, height: usize, timestamp: f64) -> Self {
        Self { width, height, timestamp, cells: vec![None; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn cells(&self) -> &[Option<CloudPoint>] {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&CloudPoint> {
        self.cells.get(y * self.width + x).and_then(Option::as_ref)
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// n static frames of one scene from one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<OrganizedCloud>,
    camera: String,
    conditions: Vec<(String, String)>,
}

impl FrameSequence {
    pub fn new(
        frames: Vec<OrganizedCloud>,
        camera: impl Into<String>,
        conditions: Vec<(String, String)>,
    ) -> Result<Self, MeshIoError> {
        let Some(first) = frames.first() else {
            return Err(MeshIoError::Invalid("a frame sequence needs at least one frame".into()));
        };
        let (w, h) = (first.width, first.height);
        if frames.iter().any(|f| f.width != w || f.height != h) {
            return Err(MeshIoError::Invalid("frames have differing dimensions".into()));
        }
        let camera = camera.into();
        validate_token(&camera, "camera id", true)?;
        for (k, v) in &conditions {
            validate_token(k, "condition key", false)?;
            validate_token(v, "condition value", true)?;
        }
        Ok(Self { frames, camera, conditions })
    }

    pub fn frames(&self) -> &[OrganizedCloud] {
        &self.frames
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn camera(&self) -> &str {
        &self.camera
    }

    pub fn conditions(&self) -> &[(String, String)] {
        &self.conditions
    }

    pub fn condition(&self, key: &str) -> Option<&str> {
        self.conditions.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn header(&self) -> OcfHeader {
        OcfHeader {
            width: self.width(),
            height: self.height(),
            frames: self.frames.len(),
            camera: self.camera.clone(),
            conditions: self.conditions.clone(),
        }
    }
}

fn validate_token(s: &str, what: &str, allow_spaces: bool) -> Result<(), MeshIoError> {
    let bad =
        s.is_empty() || s.contains(['\n', '\r']) || (!allow_spaces && s.contains(char::is_whitespace)) || s.trim() != s;
    if bad {
        return Err(MeshIoError::Invalid(format!("{what} {s:?} is not a valid header token")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    /// Seconds.
    pub time: f64,
    pub transform: RigidTransform,
}

/// Tracker measurements of the arm→tray transform over time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseLog {
    samples: Vec<PoseSample>,
}

impl PoseLog {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self, MeshIoError> {
        if let Some(i) = samples.windows(2).position(|w| !(w[1].time > w[0].time)) {
            return Err(MeshIoError::Invalid(format!("pose timestamps not strictly increasing at sample {}", i + 1)));
        }
        if samples.iter().any(|s| !s.time.is_finite()) {
            return Err(MeshIoError::Invalid("non-finite pose timestamp".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.time, self.samples.last()?.time))
    }
}

/// One fiducial pin seen in both the ground truth and the camera cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pin_id: u32,
    /// Ground-truth (organ) frame.
    pub organ: Point3,
    /// Camera frame.
    pub camera: Point3,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self, MeshIoError> {
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            if !seen.insert(p.pin_id) {
                return Err(MeshIoError::Invalid(format!("duplicate pin id {}", p.pin_id)));
            }
            if !p.organ.is_finite() || !p.camera.is_finite() {
                return Err(MeshIoError::Invalid(format!("pin {} has non-finite coordinates", p.pin_id)));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
