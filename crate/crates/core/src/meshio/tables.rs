//! CSV pose logs (`t,tx,ty,tz,qx,qy,qz,qw`) and pin correspondences
//! (`pin_id,ox,oy,oz,cx,cy,cz`).

use std::io::{Read, Write};
use std::path::Path;

use super::{create, open, Correspondence, CorrespondenceSet, Location, MeshIoError, PoseLog, PoseSample};
use crate::geom::{Point3, Quaternion, RigidTransform};

const POSE_HEADER: [&str; 8] = ["t", "tx", "ty", "tz", "qx", "qy", "qz", "qw"];
const CORR_HEADER: [&str; 7] = ["pin_id", "ox", "oy", "oz", "cx", "cy", "cz"];

/// Largest accepted deviation of a quaternion norm from 1.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), MeshIoError> {
    let headers = rdr.headers().map_err(|e| csv_error(e, 1))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(MeshIoError::Header { at: Location::Line(1), msg: format!("expected `{}`", expected.join(",")) });
    }
    Ok(())
}

fn csv_error(e: csv::Error, fallback_line: u64) -> MeshIoError {
    let line = e.position().map_or(fallback_line, |p| p.line());
    MeshIoError::Malformed { at: Location::Line(line), msg: e.to_string() }
}

fn numbers<const N: usize>(rec: &csv::StringRecord, line: u64) -> Result<[f64; N], MeshIoError> {
    if rec.len() != N {
        return Err(MeshIoError::Malformed {
            at: Location::Line(line),
            msg: format!("expected {N} fields, found {}", rec.len()),
        });
    }
    let mut out = [0.0; N];
    for (o, field) in out.iter_mut().zip(rec.iter()) {
        *o = field
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| MeshIoError::Malformed { at: Location::Line(line), msg: format!("bad number `{field}`") })?;
    }
    Ok(out)
}

pub fn read_pose_log(path: impl AsRef<Path>) -> Result<PoseLog, MeshIoError> {
    let path = path.as_ref();
    read_pose_log_from(open(path)?).map_err(|e| e.in_file(path))
}

/// Quaternions are renormalized; rows whose norm is off by more than
/// [`QUATERNION_NORM_TOLERANCE`] are rejected.
pub fn read_pose_log_from<R: Read>(r: R) -> Result<PoseLog, MeshIoError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &POSE_HEADER)?;
    let mut samples: Vec<PoseSample> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line());
        let [t, tx, ty, tz, qx, qy, qz, qw] = numbers::<8>(&rec, line)?;
        let q = Quaternion::new(qx, qy, qz, qw);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(MeshIoError::Malformed {
                at: Location::Line(line),
                msg: format!("quaternion norm {:.6} is not 1", q.norm()),
            });
        }
        if let Some(prev) = samples.last() {
            if t <= prev.time {
                return Err(MeshIoError::Malformed {
                    at: Location::Line(line),
                    msg: format!("timestamp {t} does not increase (previous {})", prev.time),
                });
            }
        }
        samples.push(PoseSample {
            time: t,
            transform: RigidTransform::from_quaternion(q.normalized(), Point3::new(tx, ty, tz)),
        });
    }
    PoseLog::new(samples)
}

pub fn write_pose_log(log: &PoseLog, path: impl AsRef<Path>) -> Result<(), MeshIoError> {
    let path = path.as_ref();
    write_pose_log_to(log, create(path)?).map_err(|e| e.in_file(path))
}

pub fn write_pose_log_to<W: Write>(log: &PoseLog, w: W) -> Result<(), MeshIoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| MeshIoError::Invalid(e.to_string());
    wtr.write_record(POSE_HEADER).map_err(io)?;
    for s in log.samples() {
        let t = s.transform.translation();
        let q = s.transform.quaternion();
        wtr.write_record([s.time, t.x, t.y, t.z, q.x, q.y, q.z, q.w].map(|v| v.to_string())).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet, MeshIoError> {
    let path = path.as_ref();
    read_correspondences_from(open(path)?).map_err(|e| e.in_file(path))
}

pub fn read_correspondences_from<R: Read>(r: R) -> Result<CorrespondenceSet, MeshIoError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &CORR_HEADER)?;
    let mut pairs: Vec<Correspondence> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id_field = rec.get(0).unwrap_or_default();
        let pin_id: u32 = id_field.parse().map_err(|_| MeshIoError::Malformed {
            at: Location::Line(line),
            msg: format!("bad pin id `{id_field}`"),
        })?;
        if pairs.iter().any(|p| p.pin_id == pin_id) {
            return Err(MeshIoError::Malformed { at: Location::Line(line), msg: format!("duplicate pin id {pin_id}") });
        }
        let mut rest = csv::StringRecord::new();
        rec.iter().skip(1).for_each(|f| rest.push_field(f));
        if rec.len() != 7 {
            return Err(MeshIoError::Malformed {
                at: Location::Line(line),
                msg: format!("expected 7 fields, found {}", rec.len()),
            });
        }
        let [ox, oy, oz, cx, cy, cz] = numbers::<6>(&rest, line)?;
        pairs.push(Correspondence { pin_id, organ: Point3::new(ox, oy, oz), camera: Point3::new(cx, cy, cz) });
    }
    CorrespondenceSet::new(pairs)
}

pub fn write_correspondences(set: &CorrespondenceSet, path: impl AsRef<Path>) -> Result<(), MeshIoError> {
    let path = path.as_ref();
    write_correspondences_to(set, create(path)?).map_err(|e| e.in_file(path))
}

pub fn write_correspondences_to<W: Write>(set: &CorrespondenceSet, w: W) -> Result<(), MeshIoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| MeshIoError::Invalid(e.to_string());
    wtr.write_record(CORR_HEADER).map_err(io)?;
    for p in set.pairs() {
        let mut row = vec![p.pin_id.to_string()];
        row.extend([p.organ.x, p.organ.y, p.organ.z, p.camera.x, p.camera.y, p.camera.z].map(|v| v.to_string()));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}
