//! Synthetic recordings: one ground-truth mesh per tissue and, for every
//! camera × viewing condition, a frame file, pin observations, a tracker
//! log, the true pose and a ready-to-use run config.
//!
//! Timeline of one recording: pins are observed at t = 0. If enough pins
//! are visible from the recording pose, recording starts right there and
//! the run uses pin registration. Otherwise the pins are observed from the
//! registration view, the camera moves, recording starts at
//! [`RECORDING_START`] and the run uses the kinematic chain.

use std::io::Write;
use std::path::{Path, PathBuf};

use depthmetric::geom::{Mat3, Point3, RigidTransform};
use depthmetric::meshio::write_pose_log_to;
use depthmetric::meshio::{write_correspondences_to, write_ply_to, OcfHeader, OcfWriter, PlyFormat};
use depthmetric::registration::Method;
use depthmetric::sensorsim::{
    derive_seed, generate_scene, render_pin_observations, segmented_pose_log, CameraSpec, PinholeCamera, PoseSegment,
    Renderer, SimError, SimulationConfig, ViewCondition,
};
use serde::Deserialize;

use super::register::RegistrationRecord;
use super::{require_config, Globals};
use crate::config::{
    read_json, MaskConfig, RegistrationConfig, RunConfig, TileConfig, DEFAULT_HEATMAP_RANGE_MM, DEFAULT_LONG_TABLE,
};
use crate::error::CliError;
use crate::output::Staged;

/// Recording start (s) when the camera first has to move away from the
/// registration view.
pub const RECORDING_START: f64 = 1.0;
pub const DEFAULT_TRACKER_RATE: f64 = 100.0;

/// Simulation settings beyond [`SimulationConfig`], read from the same
/// JSON object. (Kept as a separate pass: serde's `flatten` would turn the
/// numeric material-offset keys into strings.)
#[derive(Debug, Clone, Deserialize)]
pub struct SimulateExtras {
    /// Where the camera observes the pins when the recording pose cannot.
    #[serde(default = "ViewCondition::far")]
    pub registration_view: ViewCondition,
    /// Tracker sampling rate (Hz).
    #[serde(default = "default_tracker_rate")]
    pub tracker_rate: f64,
}

fn default_tracker_rate() -> f64 {
    DEFAULT_TRACKER_RATE
}

#[derive(Debug, Clone)]
pub struct SimulateConfig {
    pub simulation: SimulationConfig,
    pub extras: SimulateExtras,
}

impl SimulateConfig {
    pub fn load(path: &Path) -> Result<SimulateConfig, CliError> {
        let cfg = SimulateConfig { simulation: read_json(path)?, extras: read_json(path)? };
        cfg.simulation.validate().map_err(|e| CliError::config(path, e.to_string()))?;
        cfg.extras.registration_view.camera_pose().map_err(|e| CliError::config(path, e.to_string()))?;
        if !(cfg.extras.tracker_rate > 0.0 && cfg.extras.tracker_rate.is_finite()) {
            return Err(CliError::config(path, "tracker_rate must be positive"));
        }
        Ok(cfg)
    }
}

/// Fixed per-camera hand-eye transform (camera←arm), drawn from the seed.
fn camera_arm(seed: u64, camera: &str) -> RigidTransform {
    let u = |k: usize| derive_seed(seed, &format!("arm/{camera}/{k}")) as f64 / u64::MAX as f64 * 2.0 - 1.0;
    let rotation = Mat3::from_axis_angle(Point3::new(u(0), u(1), u(2)), 0.5 * u(3));
    let translation = Point3::new(0.05 * u(4), 0.05 * u(5), 0.1 + 0.02 * u(6));
    RigidTransform::new(rotation, translation).expect("axis-angle matrices are rotations")
}

struct Recording {
    label: String,
    visible_pins: usize,
    method: Method,
}

fn file_names(prefix: &str) -> [String; 5] {
    ["frames", "pins", "pose", "truth", "run"].map(|kind| {
        let ext = match kind {
            "frames" => "ocf",
            "pins" | "pose" => "csv",
            _ => "json",
        };
        format!("{kind}_{prefix}.{ext}")
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate_recording(
    staged: &mut Staged,
    out: &Path,
    cfg: &SimulateConfig,
    scene: &depthmetric::sensorsim::Scene,
    mesh_file: &str,
    cam: &CameraSpec,
    cond: &ViewCondition,
    partner: Option<&str>,
    seed: u64,
) -> Result<Recording, CliError> {
    let sim = &cfg.simulation;
    let prefix = format!("{}_{}_{}", sim.tissue, cam.name, cond.name);
    let [frames_file, pins_file, pose_file, truth_file, run_file] = file_names(&prefix);
    let pose = cond.camera_pose()?;
    let camera = PinholeCamera::new(cam.intrinsics, pose)?;
    let pin_seed = derive_seed(seed, &format!("pins/{prefix}"));

    let (pins, method, anchor_pose) = match render_pin_observations(scene, &camera, &cam.noise, pin_seed) {
        Ok(pins) => (pins, Method::Pins, pose),
        Err(SimError::TooFewPins { .. }) => {
            let reg_pose = cfg.extras.registration_view.camera_pose()?;
            let reg_camera = PinholeCamera::new(cam.intrinsics, reg_pose)?;
            let pins = render_pin_observations(scene, &reg_camera, &cam.noise, pin_seed)?;
            (pins, Method::Kine, reg_pose)
        }
        Err(e) => return Err(e.into()),
    };
    let duration = (sim.frames - 1) as f64 / sim.fps;
    let (start, segments) = match method {
        Method::Pins => (0.0, vec![PoseSegment { start: 0.0, end: duration, camera_to_organ: pose }]),
        Method::Kine => (
            RECORDING_START,
            vec![
                PoseSegment { start: 0.0, end: 0.0, camera_to_organ: anchor_pose },
                PoseSegment { start: RECORDING_START, end: RECORDING_START + duration, camera_to_organ: pose },
            ],
        ),
    };
    let log = segmented_pose_log(&camera_arm(seed, &cam.name), &segments, cfg.extras.tracker_rate)?;

    let renderer = Renderer::new(scene, camera, &cam.noise, derive_seed(seed, &format!("frames/{prefix}")))?;
    let header = OcfHeader {
        width: camera.width(),
        height: camera.height(),
        frames: sim.frames,
        camera: cam.name.clone(),
        conditions: vec![("tissue".into(), sim.tissue.clone()), ("zoom".into(), cond.name.clone())],
    };
    staged.write(&out.join(&frames_file), |w| {
        let mut writer = OcfWriter::new(w, header)?;
        for f in 0..sim.frames as u64 {
            writer.write_frame(&renderer.frame(f, start + f as f64 / sim.fps))?;
        }
        writer.finish()?;
        Ok(())
    })?;
    staged.write(&out.join(&pins_file), |w| Ok(write_correspondences_to(&pins, w)?))?;
    staged.write(&out.join(&pose_file), |w| Ok(write_pose_log_to(&log, w)?))?;
    let truth = RegistrationRecord::new("truth", None, &pose, 0.0, 0);
    staged.write(&out.join(&truth_file), |w| Ok(w.write_all(truth.to_json().as_bytes())?))?;

    let run = RunConfig {
        mesh: mesh_file.into(),
        frames: frames_file.into(),
        correspondences: Some(pins_file.into()),
        pose_log: Some(pose_file.into()),
        output_dir: Some(PathBuf::from("eval").join(&prefix)),
        registration: RegistrationConfig { mode: method, anchor_time: 0.0 },
        masks: MaskConfig::default(),
        viewfield_partner: partner.map(|p| file_names(&format!("{}_{p}_{}", sim.tissue, cond.name))[4].clone().into()),
        tiles: TileConfig::default(),
        outlier_threshold: depthmetric::maskpool::DEFAULT_OUTLIER_THRESHOLD,
        heatmap_range_mm: DEFAULT_HEATMAP_RANGE_MM,
        factors: None,
        replicate: None,
        long_table: DEFAULT_LONG_TABLE.into(),
    };
    let run_json = serde_json::to_string_pretty(&run).expect("plain data serializes") + "\n";
    staged.write(&out.join(&run_file), |w| Ok(w.write_all(run_json.as_bytes())?))?;

    Ok(Recording { label: format!("{}/{}", cam.name, cond.name), visible_pins: pins.len(), method })
}

pub fn run(globals: &Globals) -> Result<(), CliError> {
    let config_path = require_config(globals)?;
    let cfg = SimulateConfig::load(config_path)?;
    let out = globals.out.clone().ok_or_else(|| CliError::Usage("simulate needs --out <dir>".into()))?;
    let sim = &cfg.simulation;
    let seed = globals.seed;

    let scene = generate_scene(&sim.scene, derive_seed(seed, &format!("scene/{}", sim.tissue)))?;
    let mesh_file = format!("mesh_{}.ply", sim.tissue);
    let mut staged = Staged::new();
    staged.create_dir(&out)?;
    staged.write(&out.join(&mesh_file), |w| Ok(write_ply_to(scene.mesh(), w, PlyFormat::BinaryLittleEndian)?))?;

    let mut recordings = Vec::new();
    for (i, cam) in sim.cameras.iter().enumerate() {
        // With exactly two cameras each is the other's view-field partner.
        let partner = (sim.cameras.len() == 2).then(|| sim.cameras[1 - i].name.as_str());
        for cond in &sim.conditions {
            recordings.push(simulate_recording(&mut staged, &out, &cfg, &scene, &mesh_file, cam, cond, partner, seed)?);
        }
    }
    let written = staged.commit()?;

    println!(
        "simulated tissue `{}` (seed {seed}): {} vertices, {} pins",
        sim.tissue,
        scene.mesh().vertex_count(),
        scene.pins().len()
    );
    for r in &recordings {
        let method = match r.method {
            Method::Pins => "pin registration".to_string(),
            Method::Kine => format!("kinematic registration (pins seen from `{}`)", cfg.extras.registration_view.name),
        };
        println!("  {:<20} {} frames, {:>2} pins visible, {method}", r.label, sim.frames, r.visible_pins);
    }
    for p in written {
        println!("  wrote {}", p.display());
    }
    Ok(())
}
