//! End-to-end evaluation of one camera/condition recording: per-frame
//! signed error → temporal metrics → masking → tile pooling.

use crate::errorfield::{
    signed_error_frame_with, DistanceMode, ErrorFieldError, MetricAccumulator, MetricFields, MetricKind,
    ReferenceSurface, TemporalMean,
};
use crate::exec::Exec;
use crate::geom::RigidTransform;
use crate::maskpool::{
    content_mask, footprint_of, pool, viewfield_mask, Footprint, PixelMask, PoolError, PooledMetrics, TileSpec,
    DEFAULT_OUTLIER_THRESHOLD,
};
use crate::meshio::{MeshIoError, OrganizedCloud, PoseLog};
use crate::registration::{solve_kine, KinematicChain, RegistrationError};
use crate::stats::{LongTable, Record, StatsError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] MeshIoError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    ErrorField(#[from] ErrorFieldError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("no pixel survives masking")]
    EverythingMasked,
}

/// Camera→organ transform for each frame.
#[derive(Debug, Clone)]
pub enum FrameRegistration {
    /// One transform for the whole recording (pin registration).
    Fixed(RigidTransform),
    /// Chain anchored at a pin registration, then following the tracker log.
    Kinematic { chain: KinematicChain, log: PoseLog },
}

impl FrameRegistration {
    pub fn at(&self, time: f64) -> Result<RigidTransform, RegistrationError> {
        match self {
            FrameRegistration::Fixed(t) => Ok(*t),
            FrameRegistration::Kinematic { chain, log } => Ok(solve_kine(chain, time, log)?.camera_to_organ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub mode: DistanceMode,
    pub content_mask: bool,
    /// Footprint of the camera being compared against; `None` disables the
    /// view-field mask.
    pub viewfield: Option<Footprint>,
    pub tiles: TileSpec,
    pub outlier_threshold: f64,
    pub exec: Exec,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            mode: DistanceMode::default(),
            content_mask: true,
            viewfield: None,
            tiles: TileSpec::default(),
            outlier_threshold: DEFAULT_OUTLIER_THRESHOLD,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Metrics of the pixels that survived masking, Shape Precision
    /// recentered on them.
    pub fields: MetricFields,
    /// Unmasked metrics (Shape Precision centred on all retained pixels).
    pub raw_fields: MetricFields,
    pub mask: PixelMask,
    /// Mesh vertices seen by this recording (from its temporal-mean cloud).
    pub footprint: Footprint,
    pub pooled: PooledMetrics,
    /// Mean Depth Accuracy over the surviving pixels.
    pub center: f64,
    pub frames: usize,
    /// Degenerate-footprint pixels summed over frames.
    pub degenerate: usize,
}

/// Streams `frames` through the error field and metric accumulators; no
/// frame is kept after it has been folded in.
pub fn evaluate<I>(
    surface: &ReferenceSurface,
    frames: I,
    registration: &FrameRegistration,
    options: &EvaluateOptions,
) -> Result<Evaluation, PipelineError>
where
    I: IntoIterator<Item = Result<OrganizedCloud, MeshIoError>>,
{
    let mut acc: Option<(MetricAccumulator, TemporalMean)> = None;
    let mut degenerate = 0;
    for frame in frames {
        let frame = frame?;
        let (metrics, mean) = acc.get_or_insert_with(|| {
            (MetricAccumulator::new(frame.width(), frame.height()), TemporalMean::new(frame.width(), frame.height()))
        });
        let t = registration.at(frame.timestamp())?;
        let field = signed_error_frame_with(options.exec, &frame, &t, surface, options.mode);
        degenerate += field.diagnostics().degenerate;
        metrics.add(&field)?;
        mean.add(&frame)?;
    }
    let Some((metrics, mean)) = acc else {
        return Err(ErrorFieldError::TooFewFrames { needed: 2, got: 0 }.into());
    };
    let frames = metrics.frames();
    let raw_fields = metrics.finish()?;

    // Masks are decided once, on the temporal-mean cloud.
    let mean_cloud = mean.finish();
    let mean_t = registration.at(mean_cloud.timestamp())?;
    let mean_field = signed_error_frame_with(options.exec, &mean_cloud, &mean_t, surface, options.mode);
    let footprint = footprint_of(&mean_field);

    let (w, h) = (raw_fields.width(), raw_fields.height());
    let mut mask = PixelMask::from_fn(w, h, |x, y| raw_fields.get(x, y).is_some());
    if let Some(other) = &options.viewfield {
        mask = mask.and(&viewfield_mask(&mean_field, other))?;
    }
    if options.content_mask {
        mask = mask.and(&content_mask(&mean_field, surface.mesh()))?;
    }

    let mut fields = raw_fields.masked(|i| mask.at(i));
    let center = fields.recenter_shape_precision(|_| true).ok_or(PipelineError::EverythingMasked)?;
    let pooled = pool(&fields, &mask, options.tiles, options.outlier_threshold)?;
    Ok(Evaluation { fields, raw_fields, mask, footprint, pooled, center, frames, degenerate })
}

/// Footprint of a recording alone (temporal-mean cloud only), for use as
/// another camera's view-field mask. Much cheaper than a full [`evaluate`].
pub fn recording_footprint<I>(
    surface: &ReferenceSurface,
    frames: I,
    registration: &FrameRegistration,
    mode: DistanceMode,
    exec: Exec,
) -> Result<Footprint, PipelineError>
where
    I: IntoIterator<Item = Result<OrganizedCloud, MeshIoError>>,
{
    let mut mean: Option<TemporalMean> = None;
    for frame in frames {
        let frame = frame?;
        mean.get_or_insert_with(|| TemporalMean::new(frame.width(), frame.height())).add(&frame)?;
    }
    let mean_cloud = mean.ok_or(ErrorFieldError::TooFewFrames { needed: 1, got: 0 })?.finish();
    let t = registration.at(mean_cloud.timestamp())?;
    Ok(footprint_of(&signed_error_frame_with(exec, &mean_cloud, &t, surface, mode)))
}

/// Long-table records for every present tile value of every metric.
pub fn pooled_records(pooled: &PooledMetrics, factors: &[String; 3], replicate: Option<&str>) -> LongTable {
    let records = MetricKind::ALL
        .iter()
        .flat_map(|&m| {
            pooled.get(m).values().map(move |(tile, value)| Record {
                tile,
                factors: factors.clone(),
                metric: m.name().to_string(),
                value,
                replicate: replicate.map(str::to_string),
            })
        })
        .collect();
    LongTable::new(records).expect("pooled values are finite and unique per tile")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshio::Label;
    use crate::sensorsim::{
        generate_scene, Intrinsics, NoiseModel, PinholeCamera, Region, RegionShape, Renderer, SceneSpec, ViewCondition,
    };

    fn run(spec: &SceneSpec, noise: &NoiseModel, options: &EvaluateOptions) -> Evaluation {
        let scene = generate_scene(spec, 1).unwrap();
        let intr = Intrinsics { width: 120, height: 60, fx: 260.0, fy: 260.0, cx: None, cy: None };
        let cam = PinholeCamera::new(intr, ViewCondition::far().camera_pose().unwrap()).unwrap();
        let r = Renderer::new(&scene, cam, noise, 3).unwrap();
        let surface = ReferenceSurface::new(scene.mesh().clone());
        let frames = (0..6u64).map(|f| Ok(r.frame(f, f as f64 / 30.0)));
        evaluate(&surface, frames, &FrameRegistration::Fixed(*cam.pose()), options).unwrap()
    }

    #[test]
    fn noiseless_plane_is_exact() {
        let e = run(&SceneSpec::planar(), &NoiseModel::noiseless(), &EvaluateOptions::default());
        assert_eq!(e.pooled.depth_accuracy.present_count(), 30);
        assert!(e.pooled.depth_accuracy.values().all(|(_, v)| v.abs() < 1e-9));
        assert_eq!(e.frames, 6);
    }

    #[test]
    fn content_mask_removes_outlier_region() {
        let spec = SceneSpec {
            regions: vec![Region {
                shape: RegionShape::Rect { min: [-1.0, -1.0], max: [-0.01, 1.0] },
                material: None,
                outlier: Some(true),
            }],
            ..SceneSpec::planar()
        };
        let with = run(&spec, &NoiseModel::noiseless(), &EvaluateOptions::default());
        let without =
            run(&spec, &NoiseModel::noiseless(), &EvaluateOptions { content_mask: false, ..Default::default() });
        assert!(with.mask.count() < without.mask.count());
        assert!(with.pooled.depth_accuracy.present_count() < 30);
        assert_eq!(without.pooled.depth_accuracy.present_count(), 30);
        let labels = generate_scene(&spec, 1).unwrap().mesh().labels().iter().filter(|l| **l == Label::Outlier).count();
        assert!(labels > 0);
    }

    #[test]
    fn viewfield_with_disjoint_footprint_masks_everything() {
        let opts = EvaluateOptions { viewfield: Some(Footprint::default()), ..Default::default() };
        let scene = generate_scene(&SceneSpec::planar(), 1).unwrap();
        let intr = Intrinsics { width: 60, height: 30, fx: 130.0, fy: 130.0, cx: None, cy: None };
        let cam = PinholeCamera::new(intr, ViewCondition::far().camera_pose().unwrap()).unwrap();
        let r = Renderer::new(&scene, cam, &NoiseModel::noiseless(), 3).unwrap();
        let surface = ReferenceSurface::new(scene.mesh().clone());
        let frames = (0..3u64).map(|f| Ok(r.frame(f, 0.0)));
        let err = evaluate(&surface, frames, &FrameRegistration::Fixed(*cam.pose()), &opts).unwrap_err();
        assert!(matches!(err, PipelineError::EverythingMasked));
    }

    #[test]
    fn standalone_footprint_matches_evaluation() {
        let scene = generate_scene(&SceneSpec::planar(), 1).unwrap();
        let intr = Intrinsics { width: 60, height: 30, fx: 130.0, fy: 130.0, cx: None, cy: None };
        let cam = PinholeCamera::new(intr, ViewCondition::far().camera_pose().unwrap()).unwrap();
        let r = Renderer::new(&scene, cam, &NoiseModel { sigma: 0.0003, ..NoiseModel::default() }, 3).unwrap();
        let surface = ReferenceSurface::new(scene.mesh().clone());
        let reg = FrameRegistration::Fixed(*cam.pose());
        let frames = || (0..4u64).map(|f| Ok(r.frame(f, f as f64 / 30.0)));
        let full = evaluate(&surface, frames(), &reg, &EvaluateOptions::default()).unwrap();
        let alone = recording_footprint(&surface, frames(), &reg, DistanceMode::default(), Exec::default()).unwrap();
        assert_eq!(alone, full.footprint);
        assert!(!alone.is_empty());
    }

    #[test]
    fn records_cover_present_tiles() {
        let e = run(&SceneSpec::planar(), &NoiseModel::noiseless(), &EvaluateOptions::default());
        let factors = ["lidar".to_string(), "liver".to_string(), "far".to_string()];
        let t = pooled_records(&e.pooled, &factors, None);
        assert_eq!(t.len(), 90);
    }
}
