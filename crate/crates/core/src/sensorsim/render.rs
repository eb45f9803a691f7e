use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{splitmix64, NoiseModel, PinholeCamera, Scene, SimError};
use crate::exec::Exec;
use crate::geom::{Point3, RigidTransform};
use crate::meshio::{
    CloudPoint, Correspondence, CorrespondenceSet, FrameSequence, OrganizedCloud, PoseLog, PoseSample,
};
use crate::registration::MIN_CORRESPONDENCES;

/// Frame rate used by [`render_depth`] for timestamps.
pub const DEFAULT_FPS: f64 = 30.0;
/// Relative range slack when testing whether a pin is occluded.
const OCCLUSION_SLACK: f64 = 1e-6;
const GRAY: [u8; 3] = [128, 128, 128];

/// Noise-free part of one pixel's measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRay {
    /// Camera-frame unit direction through the pixel centre.
    pub direction: Point3,
    /// True range to the first surface hit (m).
    pub true_range: f64,
    /// Range after material offset and blob displacement, before temporal noise.
    pub range: f64,
    pub sigma: f64,
    pub color: [u8; 3],
}

/// Casts every pixel ray once; frames then only add temporal noise.
#[derive(Debug, Clone)]
pub struct Renderer {
    camera: PinholeCamera,
    rays: Vec<Option<PixelRay>>,
    seed: u64,
    exec: Exec,
}

impl Renderer {
    pub fn new(scene: &Scene, camera: PinholeCamera, noise: &NoiseModel, seed: u64) -> Result<Self, SimError> {
        Self::with_exec(Exec::default(), scene, camera, noise, seed)
    }

    pub fn with_exec(
        exec: Exec,
        scene: &Scene,
        camera: PinholeCamera,
        noise: &NoiseModel,
        seed: u64,
    ) -> Result<Self, SimError> {
        noise.validate()?;
        let (w, h) = (camera.width(), camera.height());
        let pose = *camera.pose();
        let origin = pose.translation();
        let mesh = scene.mesh();
        let rows = exec.map_range(h, |v| {
            (0..w)
                .map(|u| {
                    let direction = camera.ray_direction(u, v);
                    let hit = scene.bvh().intersect(origin, pose.apply_vector(direction), 0.0)?;
                    let point = origin + pose.apply_vector(direction) * hit.t;
                    let face = mesh.faces()[hit.face as usize].indices();
                    let bary = hit.barycentric();
                    let dominant = face[(0..3).max_by(|&a, &b| bary[a].total_cmp(&bary[b])).unwrap()];
                    let shift = noise.offset_for(mesh.materials()[dominant]) + noise.blob_displacement(point);
                    Some(PixelRay {
                        direction,
                        true_range: hit.t,
                        range: hit.t - shift,
                        sigma: noise.sigma_at(direction.z * hit.t),
                        color: mesh.colors().map_or(GRAY, |c| c[dominant]),
                    })
                })
                .collect::<Vec<_>>()
        });
        let rays: Vec<Option<PixelRay>> = rows.into_iter().flatten().collect();
        if rays.iter().all(Option::is_none) {
            return Err(SimError::NothingVisible);
        }
        Ok(Renderer { camera, rays, seed, exec })
    }

    pub fn camera(&self) -> &PinholeCamera {
        &self.camera
    }

    pub fn rays(&self) -> &[Option<PixelRay>] {
        &self.rays
    }

    /// Frame `index` with the given timestamp. Each (seed, frame, row) has
    /// its own random stream, so frames can be produced in any order and on
    /// any number of threads with identical results.
    pub fn frame(&self, index: u64, timestamp: f64) -> OrganizedCloud {
        let w = self.camera.width();
        let frame_seed = splitmix64(self.seed ^ splitmix64(index.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        let rows = self.exec.map_range(self.camera.height(), |v| {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(frame_seed ^ v as u64));
            self.rays[v * w..(v + 1) * w]
                .iter()
                .map(|ray| {
                    // Draw for every pixel so the stream layout is fixed.
                    let n: f64 = StandardNormal.sample(&mut rng);
                    let ray = ray.as_ref()?;
                    let range = ray.range + ray.sigma * n;
                    (range > 0.0).then(|| CloudPoint { position: ray.direction * range, color: ray.color })
                })
                .collect::<Vec<_>>()
        });
        OrganizedCloud::new(w, self.camera.height(), timestamp, rows.into_iter().flatten().collect())
            .expect("rendered points lie in front of the camera")
    }
}

/// Renders `n_frames` frames at [`DEFAULT_FPS`]. Keeps every frame in
/// memory; use [`Renderer::frame`] to stream long sequences.
pub fn render_depth(
    scene: &Scene,
    camera: PinholeCamera,
    noise: &NoiseModel,
    n_frames: usize,
    seed: u64,
) -> Result<FrameSequence, SimError> {
    let r = Renderer::new(scene, camera, noise, seed)?;
    let frames = (0..n_frames as u64).map(|f| r.frame(f, f as f64 / DEFAULT_FPS)).collect();
    Ok(FrameSequence::new(frames, "sim", Vec::new())?)
}

/// Camera-frame observations of every pin that is inside the image and not
/// occluded, with per-axis Gaussian picking noise of `noise.pin_sigma`.
pub fn render_pin_observations(
    scene: &Scene,
    camera: &PinholeCamera,
    noise: &NoiseModel,
    seed: u64,
) -> Result<CorrespondenceSet, SimError> {
    noise.validate()?;
    let pose = camera.pose();
    let to_camera = pose.inverse();
    let origin = pose.translation();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for pin in scene.pins() {
        let jitter = Point3::new(
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ) * noise.pin_sigma;
        let local = to_camera.apply(pin.position);
        if !camera.project(local).is_some_and(|px| camera.in_image(px)) {
            continue;
        }
        // Parameterized so the pin sits at t = 1.
        let occluded =
            scene.bvh().intersect(origin, pin.position - origin, 0.0).is_some_and(|hit| hit.t < 1.0 - OCCLUSION_SLACK);
        if !occluded {
            pairs.push(Correspondence { pin_id: pin.id, organ: pin.position, camera: local + jitter });
        }
    }
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(SimError::TooFewPins { visible: pairs.len(), needed: MIN_CORRESPONDENCES });
    }
    Ok(CorrespondenceSet::new(pairs)?)
}

/// Tracker log for a static camera: `T_AT = T_CA⁻¹ · T_CO` sampled at
/// `rate` Hz over `[start, end]`.
pub fn synthetic_pose_log(
    camera_arm: &RigidTransform,
    camera_to_organ: &RigidTransform,
    start: f64,
    end: f64,
    rate: f64,
) -> PoseLog {
    let arm_tray = camera_arm.inverse().compose(camera_to_organ);
    let n = ((end - start) * rate).floor().max(0.0) as usize;
    let mut samples: Vec<PoseSample> =
        (0..=n).map(|k| PoseSample { time: start + k as f64 / rate, transform: arm_tray }).collect();
    if samples.last().is_some_and(|s| s.time < end) {
        samples.push(PoseSample { time: end, transform: arm_tray });
    }
    PoseLog::new(samples).expect("sample times increase")
}

/// A stretch of time during which the camera holds one pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSegment {
    pub start: f64,
    pub end: f64,
    pub camera_to_organ: RigidTransform,
}

/// Tracker log for a camera that holds a sequence of poses, e.g. a pin
/// registration pose followed by the recording pose. Poses between
/// segments are whatever the log interpolation makes of them, so segments
/// should only be queried inside their own interval.
pub fn segmented_pose_log(
    camera_arm: &RigidTransform,
    segments: &[PoseSegment],
    rate: f64,
) -> Result<PoseLog, SimError> {
    let mut samples = Vec::new();
    for s in segments {
        let part = synthetic_pose_log(camera_arm, &s.camera_to_organ, s.start, s.end, rate);
        samples.extend_from_slice(part.samples());
    }
    PoseLog::new(samples).map_err(|_| SimError::InvalidSpec("pose segments must be ordered and disjoint".into()))
}
