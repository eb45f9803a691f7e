//! Synthetic ground-truth scenes and a depth-camera simulator with
//! injectable error models (range offsets per material, blob artifacts,
//! temporal noise), used to exercise the evaluation pipeline end to end.
//!
//! Offsets and blob amplitudes follow the signed-error convention: a
//! negative value makes the camera measure the surface farther away than it
//! is, and the pipeline then reports a negative Depth Accuracy.

mod bvh;
mod render;
mod scene;

pub use bvh::{intersect_triangle, Bvh, RayHit};
pub use render::{
    render_depth, render_pin_observations, segmented_pose_log, synthetic_pose_log, PixelRay, PoseSegment, Renderer,
    DEFAULT_FPS,
};
pub use scene::{generate_scene, PinSite, Scene};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::{Point3, RigidTransform};
use crate::meshio::MeshIoError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("camera sees no part of the mesh")]
    NothingVisible,
    #[error("only {visible} pins visible, need at least {needed}")]
    TooFewPins { visible: usize, needed: usize },
    #[error(transparent)]
    Mesh(#[from] MeshIoError),
}

/// Image size and focal parameters. The principal point defaults to the
/// image centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cy: Option<f64>,
}

impl Default for Intrinsics {
    /// 640×360 with a narrow (~26° horizontal) field of view.
    fn default() -> Self {
        Intrinsics { width: 640, height: 360, fx: 1400.0, fy: 1400.0, cx: None, cy: None }
    }
}

/// Pinhole camera; `pose` maps camera-frame points into the organ frame.
/// Camera frame: +z along the optical axis, +x right, +y down; pixel
/// `(u, v)` has its centre at `(u + 0.5, v + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    pose: RigidTransform,
}

impl PinholeCamera {
    pub fn new(intrinsics: Intrinsics, pose: RigidTransform) -> Result<Self, SimError> {
        let Intrinsics { width, height, fx, fy, cx, cy } = intrinsics;
        let cx = cx.unwrap_or(width as f64 / 2.0);
        let cy = cy.unwrap_or(height as f64 / 2.0);
        if width == 0 || height == 0 {
            return Err(SimError::InvalidCamera(format!("image size {width}×{height}")));
        }
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(SimError::InvalidCamera(format!("focal lengths ({fx}, {fy}) must be positive")));
        }
        if !(cx >= 0.0 && cx <= width as f64 && cy >= 0.0 && cy <= height as f64) {
            return Err(SimError::InvalidCamera(format!("principal point ({cx}, {cy}) outside the image")));
        }
        Ok(PinholeCamera { fx, fy, cx, cy, width, height, pose })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn focal(&self) -> (f64, f64) {
        (self.fx, self.fy)
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    /// Camera-frame unit direction through the centre of pixel `(u, v)`.
    pub fn ray_direction(&self, u: usize, v: usize) -> Point3 {
        let d = Point3::new((u as f64 + 0.5 - self.cx) / self.fx, (v as f64 + 0.5 - self.cy) / self.fy, 1.0);
        d / d.norm()
    }

    /// Continuous pixel coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: Point3) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn in_image(&self, (u, v): (f64, f64)) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Whether a blob pushes the measured surface toward the camera (a "hill")
/// or away from it (a "hole").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlobSign {
    Hill,
    Hole,
}

/// Localized artifact: a smooth cosine bump of the measured range around a
/// point on the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: Point3,
    pub radius: f64,
    pub amplitude: f64,
    pub sign: BlobSign,
}

impl Blob {
    /// Signed displacement (positive = toward the camera) at surface point `p`.
    pub fn displacement(&self, p: Point3) -> f64 {
        let d = p.distance(self.center);
        if d >= self.radius {
            return 0.0;
        }
        let s = match self.sign {
            BlobSign::Hill => 1.0,
            BlobSign::Hole => -1.0,
        };
        s * self.amplitude * 0.5 * (1.0 + (std::f64::consts::PI * d / self.radius).cos())
    }
}

/// Error model of one simulated camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Temporal noise σ = (sigma + sigma_per_meter · depth) · illumination, in meters.
    pub sigma: f64,
    pub sigma_per_meter: f64,
    pub illumination: f64,
    /// Range offset per material id (m); negative = measured farther.
    pub material_offsets: BTreeMap<u8, f64>,
    pub blobs: Vec<Blob>,
    /// Per-axis noise of simulated pin picking (m).
    pub pin_sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            sigma: 0.0,
            sigma_per_meter: 0.0,
            illumination: 1.0,
            material_offsets: BTreeMap::new(),
            blobs: Vec::new(),
            pin_sigma: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel::default()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidNoise(m));
        if !(self.sigma >= 0.0 && self.sigma_per_meter >= 0.0 && self.pin_sigma >= 0.0) {
            return bad("sigmas must be non-negative".into());
        }
        if !(self.illumination >= 0.0 && self.illumination.is_finite()) {
            return bad(format!("illumination factor {} must be non-negative", self.illumination));
        }
        if let Some((m, o)) = self.material_offsets.iter().find(|(_, o)| !o.is_finite()) {
            return bad(format!("offset {o} for material {m} is not finite"));
        }
        if let Some(b) = self.blobs.iter().find(|b| !(b.radius > 0.0) || !b.amplitude.is_finite()) {
            return bad(format!("blob radius {} must be positive", b.radius));
        }
        Ok(())
    }

    /// Temporal σ at a given camera-frame depth.
    pub fn sigma_at(&self, depth: f64) -> f64 {
        (self.sigma + self.sigma_per_meter * depth) * self.illumination
    }

    pub fn offset_for(&self, material: u8) -> f64 {
        self.material_offsets.get(&material).copied().unwrap_or(0.0)
    }

    pub fn blob_displacement(&self, p: Point3) -> f64 {
        self.blobs.iter().map(|b| b.displacement(p)).sum()
    }
}

/// Surface shape of a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SurfaceKind {
    Planar,
    /// Height field of `count` seeded Gaussian bumps of standard deviation
    /// `width` (m); the highest point has height exactly `amplitude`.
    Bumps {
        count: usize,
        amplitude: f64,
        width: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionShape {
    Rect { min: [f64; 2], max: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
}

impl RegionShape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            RegionShape::Rect { min, max } => x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1],
            RegionShape::Disc { center, radius } => (x - center[0]).hypot(y - center[1]) <= radius,
        }
    }
}

/// Paints material and/or label onto the vertices whose (x, y) fall inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub shape: RegionShape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlier: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinLayout {
    pub count: usize,
    /// Distance of the outermost pins from the scene edge (m).
    pub margin: f64,
}

impl Default for PinLayout {
    fn default() -> Self {
        PinLayout { count: 24, margin: 0.015 }
    }
}

/// A viewing condition: the camera looks at the scene centre from
/// `distance` meters, tilted `tilt_deg` about the scene's x axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCondition {
    pub name: String,
    pub distance: f64,
    #[serde(default)]
    pub tilt_deg: f64,
}

impl ViewCondition {
    pub fn far() -> Self {
        ViewCondition { name: "far".into(), distance: 0.16, tilt_deg: 0.0 }
    }

    pub fn close() -> Self {
        ViewCondition { name: "close".into(), distance: 0.08, tilt_deg: 0.0 }
    }

    /// Camera→organ pose for a scene whose surface faces +z.
    pub fn camera_pose(&self) -> Result<RigidTransform, SimError> {
        if !(self.distance > 0.0) {
            return Err(SimError::InvalidSpec(format!("condition {} has distance {}", self.name, self.distance)));
        }
        let tilt = self.tilt_deg.to_radians();
        let eye = Point3::new(0.0, -self.distance * tilt.sin(), self.distance * tilt.cos());
        RigidTransform::look_at(eye, Point3::ZERO, Point3::new(0.0, 1.0, 0.0))
            .ok_or_else(|| SimError::InvalidSpec(format!("condition {} looks along the up axis", self.name)))
    }
}

/// Generator parameters for a ground-truth scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub surface: SurfaceKind,
    /// Size along x and y (m), centred on the origin.
    #[serde(default = "default_extent")]
    pub extent: [f64; 2],
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub pins: PinLayout,
}

fn default_extent() -> [f64; 2] {
    [0.12, 0.08]
}

fn default_spacing() -> f64 {
    0.001
}

impl SceneSpec {
    pub fn planar() -> Self {
        SceneSpec {
            surface: SurfaceKind::Planar,
            extent: default_extent(),
            spacing: default_spacing(),
            regions: Vec::new(),
            pins: PinLayout::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidSpec(m));
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(format!("vertex spacing {} must be positive", self.spacing));
        }
        if !(self.extent[0] >= self.spacing && self.extent[1] >= self.spacing) {
            return bad(format!("extent {:?} is smaller than the vertex spacing", self.extent));
        }
        let cells = (self.extent[0] / self.spacing + 1.0) * (self.extent[1] / self.spacing + 1.0);
        if cells > 2.0e7 {
            return bad(format!("{cells:.0} vertices is too many"));
        }
        if let SurfaceKind::Bumps { amplitude, width, .. } = self.surface {
            if !(width > 0.0) || !amplitude.is_finite() {
                return bad("bump width must be positive and amplitude finite".into());
            }
        }
        if 2.0 * self.pins.margin >= self.extent[0].min(self.extent[1]) || self.pins.margin < 0.0 {
            return bad(format!("pin margin {} does not fit the extent", self.pins.margin));
        }
        Ok(())
    }
}

/// One simulated camera: its intrinsics and error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub name: String,
    #[serde(default)]
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub noise: NoiseModel,
}

/// Everything `simulate` needs: one scene (one tissue), several cameras
/// and viewing conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(default = "default_tissue")]
    pub tissue: String,
    pub scene: SceneSpec,
    pub cameras: Vec<CameraSpec>,
    #[serde(default = "default_conditions")]
    pub conditions: Vec<ViewCondition>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_tissue() -> String {
    "tissue".into()
}

fn default_conditions() -> Vec<ViewCondition> {
    vec![ViewCondition::far(), ViewCondition::close()]
}

fn default_frames() -> usize {
    125
}

fn default_fps() -> f64 {
    30.0
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.scene.validate()?;
        if self.cameras.is_empty() {
            return Err(SimError::InvalidSpec("no cameras configured".into()));
        }
        for c in &self.cameras {
            c.noise.validate()?;
            PinholeCamera::new(c.intrinsics, RigidTransform::IDENTITY)?;
        }
        for c in &self.conditions {
            c.camera_pose()?;
        }
        if self.frames == 0 || !(self.fps > 0.0) {
            return Err(SimError::InvalidSpec("frames and fps must be positive".into()));
        }
        let names = self.cameras.iter().map(|c| &c.name).chain(self.conditions.iter().map(|c| &c.name));
        for n in names.chain(std::iter::once(&self.tissue)) {
            if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(SimError::InvalidSpec(format!("name {n:?} must be a non-empty [A-Za-z0-9_-] token")));
            }
        }
        Ok(())
    }
}

/// Deterministic sub-seed for a named stream (FNV-1a folded with
/// SplitMix64), stable across platforms and releases.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camera_validation_and_projection() {
        assert!(PinholeCamera::new(Intrinsics { fx: 0.0, ..Intrinsics::default() }, RigidTransform::IDENTITY).is_err());
        assert!(PinholeCamera::new(Intrinsics { cx: Some(-1.0), ..Intrinsics::default() }, RigidTransform::IDENTITY)
            .is_err());
        let cam = PinholeCamera::new(Intrinsics::default(), RigidTransform::IDENTITY).unwrap();
        let d = cam.ray_direction(100, 50);
        let (u, v) = cam.project(d * 0.3).unwrap();
        assert!((u - 100.5).abs() < 1e-9 && (v - 50.5).abs() < 1e-9);
        assert!(cam.project(Point3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn blob_profile() {
        let b = Blob { center: Point3::ZERO, radius: 0.01, amplitude: 0.002, sign: BlobSign::Hole };
        assert_eq!(b.displacement(Point3::ZERO), -0.002);
        assert!((b.displacement(Point3::new(0.005, 0.0, 0.0)) + 0.001).abs() < 1e-15);
        assert_eq!(b.displacement(Point3::new(0.01, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::default().validate().is_ok());
        assert!(NoiseModel { sigma: -1.0, ..NoiseModel::default() }.validate().is_err());
        let blob = Blob { center: Point3::ZERO, radius: 0.0, amplitude: 0.001, sign: BlobSign::Hill };
        assert!(NoiseModel { blobs: vec![blob], ..NoiseModel::default() }.validate().is_err());
        let m = NoiseModel { sigma: 0.001, sigma_per_meter: 0.01, illumination: 2.0, ..NoiseModel::default() };
        assert!((m.sigma_at(0.1) - 0.004).abs() < 1e-15);
    }

    #[test]
    fn config_json_defaults() {
        let json = r#"{
            "scene": {"surface": {"kind": "planar"}},
            "cameras": [{"name": "lidar", "noise": {"sigma": 0.00036, "material_offsets": {"1": -0.005}}}]
        }"#;
        let cfg: SimulationConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.frames, 125);
        assert_eq!(cfg.conditions, vec![ViewCondition::far(), ViewCondition::close()]);
        assert_eq!(cfg.cameras[0].noise.offset_for(1), -0.005);
        assert_eq!(cfg.cameras[0].intrinsics, Intrinsics::default());
        let back: SimulationConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn far_pose_looks_down() {
        let pose = ViewCondition::far().camera_pose().unwrap();
        assert!(pose.translation().distance(Point3::new(0.0, 0.0, 0.16)) < 1e-15);
        let axis = pose.apply_vector(Point3::new(0.0, 0.0, 1.0));
        assert!(axis.distance(Point3::new(0.0, 0.0, -1.0)) < 1e-15);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(9, "far"), derive_seed(9, "far"));
    }
}
