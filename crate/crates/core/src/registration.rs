//! Camera-to-world registration.
//!
//! Two routes to the camera→organ transform `T_CO`:
//! * fiducial pins: least-squares rigid fit of camera-frame pin positions onto
//!   their ground-truth positions (SVD of the cross-covariance);
//! * kinematics: a pin fit at an anchor time `t_p` closes the chain
//!   `T_CO(t) = T_CA · T_AT(t) · T_TO` with `T_TO = I`, which yields the static
//!   camera←arm term; later poses then follow the tracker log.

use serde::{Deserialize, Serialize};

use crate::geom::{svd3, Mat3, Point3, RigidTransform};
use crate::meshio::{CorrespondenceSet, PoseLog};

/// Fewest pin pairs accepted by the rigid fit.
pub const MIN_CORRESPONDENCES: usize = 4;
/// Second singular value of the (per-point) cross-covariance below which the
/// pin layout is treated as collinear.
pub const DEGENERATE_SINGULAR_VALUE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistrationError {
    #[error("insufficient correspondences: {found} pairs, need at least {MIN_CORRESPONDENCES}")]
    InsufficientCorrespondences { found: usize },
    #[error("degenerate geometry: pin positions are (nearly) collinear")]
    DegenerateGeometry,
    #[error("pose log is empty")]
    EmptyPoseLog,
    #[error("time {t} s is outside the pose log range [{start}, {end}] s")]
    OutOfRange { t: f64, start: f64, end: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pins,
    Kine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationResult {
    /// Maps camera-frame points into the organ (ground-truth) frame.
    pub camera_to_organ: RigidTransform,
    /// Root-mean-square pin residual in meters (0 for the kinematic route,
    /// which has no residual of its own).
    pub rms: f64,
    pub method: Method,
    pub n_points: usize,
}

/// Fits `T` minimizing `Σ‖T·c_i − o_i‖²` over camera points `c_i` and organ
/// points `o_i`, with a reflection guard.
pub fn fit_rigid_svd(corr: &CorrespondenceSet) -> Result<RegistrationResult, RegistrationError> {
    let pairs = corr.pairs();
    let n = pairs.len();
    if n < MIN_CORRESPONDENCES {
        return Err(RegistrationError::InsufficientCorrespondences { found: n });
    }
    let inv_n = 1.0 / n as f64;
    let cam_mean = pairs.iter().fold(Point3::ZERO, |acc, p| acc + p.camera) * inv_n;
    let org_mean = pairs.iter().fold(Point3::ZERO, |acc, p| acc + p.organ) * inv_n;

    let mut cov = Mat3::ZERO;
    for p in pairs {
        cov = cov + Mat3::outer(p.camera - cam_mean, p.organ - org_mean);
    }
    let cov = cov * inv_n;
    let svd = svd3(&cov);
    if svd.s[1] < DEGENERATE_SINGULAR_VALUE {
        return Err(RegistrationError::DegenerateGeometry);
    }
    // cov = U S Vᵀ  ⇒  R = V · diag(1, 1, d) · Uᵀ
    let d = (svd.v * svd.u.transpose()).determinant().signum();
    let rotation = svd.v * Mat3::from_diagonal([1.0, 1.0, d]) * svd.u.transpose();
    let translation = org_mean - rotation * cam_mean;
    let transform = RigidTransform::new_orthonormalized(rotation, translation)
        .map_err(|_| RegistrationError::DegenerateGeometry)?;

    let sq: f64 = pairs.iter().map(|p| transform.apply(p.camera).distance_squared(p.organ)).sum();
    Ok(RegistrationResult { camera_to_organ: transform, rms: (sq * inv_n).sqrt(), method: Method::Pins, n_points: n })
}

/// Static part of the kinematic chain, anchored at a pin registration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicChain {
    /// Camera←arm transform.
    pub camera_arm: RigidTransform,
    /// Tray←organ transform (identity: the scan origin coincides with the tray sensor).
    pub tray_organ: RigidTransform,
    pub anchor_time: f64,
}

/// `T_CA = T_pins · I · T_AT(t_p)⁻¹`.
pub fn build_chain(
    anchor_time: f64,
    pins: &RigidTransform,
    pose_log: &PoseLog,
) -> Result<KinematicChain, RegistrationError> {
    let arm_tray = interpolate_pose(pose_log, anchor_time)?;
    Ok(KinematicChain {
        camera_arm: pins.compose(&RigidTransform::IDENTITY).compose(&arm_tray.inverse()),
        tray_organ: RigidTransform::IDENTITY,
        anchor_time,
    })
}

/// `T_CO(t_k) = T_CA · T_AT(t_k) · T_TO`.
pub fn solve_kine(
    chain: &KinematicChain,
    time: f64,
    pose_log: &PoseLog,
) -> Result<RegistrationResult, RegistrationError> {
    let arm_tray = interpolate_pose(pose_log, time)?;
    Ok(RegistrationResult {
        camera_to_organ: chain.camera_arm.compose(&arm_tray).compose(&chain.tray_organ),
        rms: 0.0,
        method: Method::Kine,
        n_points: 0,
    })
}

/// Tracker pose at `time`: translation interpolated linearly, rotation by
/// slerp between the bracketing samples.
pub fn interpolate_pose(log: &PoseLog, time: f64) -> Result<RigidTransform, RegistrationError> {
    let samples = log.samples();
    let (start, end) = log.time_range().ok_or(RegistrationError::EmptyPoseLog)?;
    if !(start..=end).contains(&time) {
        return Err(RegistrationError::OutOfRange { t: time, start, end });
    }
    // First sample with time >= t.
    let hi = samples.partition_point(|s| s.time < time);
    let b = &samples[hi];
    if b.time == time || hi == 0 {
        return Ok(b.transform);
    }
    let a = &samples[hi - 1];
    let s = (time - a.time) / (b.time - a.time);
    let q = a.transform.quaternion().slerp(&b.transform.quaternion(), s);
    let translation = a.transform.translation().lerp(b.transform.translation(), s);
    Ok(RigidTransform::from_quaternion(q, translation))
}
