use std::path::{Path, PathBuf};

use depthmetric::geom::RigidTransform;
use depthmetric::meshio::{read_correspondences, read_pose_log};
use depthmetric::pipeline::FrameRegistration;
use depthmetric::registration::{build_chain, fit_rigid_svd, solve_kine, Method, RegistrationResult};
use serde::{Deserialize, Serialize};

use super::{require_config, Globals};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Staged;

pub const REGISTRATION_FILE: &str = "registration.json";

fn js<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

/// Registration output: camera→organ transform as a row-major 4×4 matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub method: String,
    /// Time the transform applies to (kinematic registrations only).
    #[serde(default)]
    pub time: Option<f64>,
    pub matrix: [[f64; 4]; 4],
    /// Pin residual RMS (m). For `kine`, that of the anchoring pin fit.
    pub rms: f64,
    pub n_points: usize,
}

impl RegistrationRecord {
    pub fn new(method: &str, time: Option<f64>, transform: &RigidTransform, rms: f64, n_points: usize) -> Self {
        RegistrationRecord { method: method.into(), time, matrix: transform.to_matrix4(), rms, n_points }
    }

    /// Pretty JSON with one matrix row per line.
    pub fn to_json(&self) -> String {
        let rows: Vec<String> = self.matrix.iter().map(|r| format!("    {}", js(r))).collect();
        let mut s = format!("{{\n  \"method\": {},\n", js(&self.method));
        if let Some(t) = self.time {
            s += &format!("  \"time\": {},\n", js(&t));
        }
        s += &format!("  \"matrix\": [\n{}\n  ],\n", rows.join(",\n"));
        s += &format!("  \"rms\": {},\n  \"n_points\": {}\n}}\n", js(&self.rms), self.n_points);
        s
    }
}

fn registration_error(path: &Path) -> impl FnOnce(depthmetric::registration::RegistrationError) -> CliError + '_ {
    move |source| CliError::Registration { path: path.to_path_buf(), source }
}

/// The pin fit of a run (at the anchor time, for kinematic runs).
pub fn pin_fit(cfg: &RunConfig) -> Result<RegistrationResult, CliError> {
    let path = cfg.correspondences.as_ref().expect("validated: correspondences present");
    let pins = read_correspondences(path)?;
    fit_rigid_svd(&pins).map_err(registration_error(path))
}

/// Per-frame registration of a run, plus the pin fit it is anchored on.
pub fn frame_registration(cfg: &RunConfig) -> Result<(FrameRegistration, RegistrationResult), CliError> {
    let pins = pin_fit(cfg)?;
    let frames = match cfg.registration.mode {
        Method::Pins => FrameRegistration::Fixed(pins.camera_to_organ),
        Method::Kine => {
            let path = cfg.pose_log.as_ref().expect("validated: pose log present");
            let log = read_pose_log(path)?;
            let chain = build_chain(cfg.registration.anchor_time, &pins.camera_to_organ, &log)
                .map_err(registration_error(path))?;
            FrameRegistration::Kinematic { chain, log }
        }
    };
    Ok((frames, pins))
}

pub fn run(globals: &Globals, at: Option<f64>) -> Result<(), CliError> {
    let config_path = require_config(globals)?;
    let cfg = RunConfig::load(config_path)?;
    let (frames, pins) = frame_registration(&cfg)?;
    let record = match &frames {
        FrameRegistration::Fixed(t) => RegistrationRecord::new("pins", None, t, pins.rms, pins.n_points),
        FrameRegistration::Kinematic { chain, log } => {
            let time = at.unwrap_or(cfg.registration.anchor_time);
            let path = cfg.pose_log.as_ref().expect("kine runs have a pose log");
            let t = solve_kine(chain, time, log).map_err(registration_error(path))?.camera_to_organ;
            RegistrationRecord::new("kine", Some(time), &t, pins.rms, pins.n_points)
        }
    };
    let out_dir = globals.out_dir(&cfg)?;
    let dest: PathBuf = out_dir.join(REGISTRATION_FILE);
    let json = record.to_json();
    let mut staged = Staged::new();
    staged.write(&dest, |w| Ok(std::io::Write::write_all(w, json.as_bytes())?))?;
    staged.commit()?;
    print!("{json}");
    eprintln!("wrote {}", dest.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use depthmetric::geom::{Mat3, Point3};

    #[test]
    fn json_round_trips() {
        let t = RigidTransform::new(Mat3::rot_z(0.3), Point3::new(0.1, -0.2, 0.16)).unwrap();
        for time in [None, Some(1.25)] {
            let rec = RegistrationRecord::new("kine", time, &t, 1e-4, 6);
            let back: RegistrationRecord = serde_json::from_str(&rec.to_json()).unwrap();
            assert_eq!(back, rec);
        }
        let json = RegistrationRecord::new("pins", None, &t, 0.0, 4).to_json();
        assert!(!json.contains("time"));
        assert_eq!(json.lines().count(), 11);
    }
}
