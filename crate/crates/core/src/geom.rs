//! Small fixed-size geometry: points, 3×3 matrices, rigid transforms and
//! a one-sided Jacobi SVD for 3×3 matrices.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point or displacement in 3D, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        (self - o).norm()
    }

    pub fn distance_squared(self, o: Point3) -> f64 {
        (self - o).norm_squared()
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<Point3> {
        let n = self.norm();
        (n > f64::MIN_POSITIVE && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn lerp(self, o: Point3, s: f64) -> Point3 {
        self + (o - self) * s
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Point3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Point3 index {i} out of range"),
        }
    }
}

impl IndexMut<usize> for Point3 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Point3 index {i} out of range"),
        }
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    fn add_assign(&mut self, o: Point3) {
        *self = *self + o;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Default for Mat3 {
    fn default() -> Self {
        Mat3::IDENTITY
    }
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn from_diagonal(d: [f64; 3]) -> Mat3 {
        Mat3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn from_columns(c0: Point3, c1: Point3, c2: Point3) -> Mat3 {
        Mat3([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    /// `a · bᵀ`
    pub fn outer(a: Point3, b: Point3) -> Mat3 {
        let mut m = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = a[i] * b[j];
            }
        }
        m
    }

    pub fn rot_x(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    }

    pub fn rot_y(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn rot_z(angle: f64) -> Mat3 {
        let (s, c) = angle.sin_cos();
        Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    /// Rotation of `angle` radians about `axis` (Rodrigues). A zero axis gives identity.
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Mat3 {
        let Some(k) = axis.normalized() else {
            return Mat3::IDENTITY;
        };
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        Mat3([
            [t * k.x * k.x + c, t * k.x * k.y - s * k.z, t * k.x * k.z + s * k.y],
            [t * k.x * k.y + s * k.z, t * k.y * k.y + c, t * k.y * k.z - s * k.x],
            [t * k.x * k.z - s * k.y, t * k.y * k.z + s * k.x, t * k.z * k.z + c],
        ])
    }

    pub fn column(&self, j: usize) -> Point3 {
        Point3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn row(&self, i: usize) -> Point3 {
        Point3::from(self.0[i])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([[m[0][0], m[1][0], m[2][0]], [m[0][1], m[1][1], m[2][1]], [m[0][2], m[1][2], m[2][2]]])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn mul_vec(&self, v: Point3) -> Point3 {
        Point3::new(self.row(0).dot(v), self.row(1).dot(v), self.row(2).dot(v))
    }

    pub fn max_abs_diff(&self, o: &Mat3) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((self.0[i][j] - o.0[i][j]).abs());
            }
        }
        d
    }

    /// `‖MᵀM − I‖_max`
    pub fn orthonormality_error(&self) -> f64 {
        (self.transpose() * *self).max_abs_diff(&Mat3::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Rotation angle of a rotation matrix, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        // atan2 form stays accurate near 0 and π, unlike acos of the trace.
        let m = &self.0;
        let sin_vec = Point3::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]);
        let s = 0.5 * sin_vec.norm();
        let c = 0.5 * (self.trace() - 1.0);
        s.atan2(c)
    }

    /// Nearest rotation in the Frobenius sense (polar factor via SVD).
    pub fn nearest_rotation(&self) -> Mat3 {
        let Svd3 { u, v, .. } = svd3(self);
        let d = (u * v.transpose()).determinant().signum();
        u * Mat3::from_diagonal([1.0, 1.0, d]) * v.transpose()
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut r = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        r
    }
}

impl Mul<Point3> for Mat3 {
    type Output = Point3;
    fn mul(self, v: Point3) -> Point3 {
        self.mul_vec(v)
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut r = self;
        for i in 0..3 {
            for j in 0..3 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut r = self;
        r.0.iter_mut().flatten().for_each(|v| *v *= s);
        r
    }
}

/// Unit quaternion in (x, y, z, w) order. Only used at I/O boundaries and
/// for rotation interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Self { x, y, z, w }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z + self.w * o.w
    }

    pub fn to_matrix(&self) -> Mat3 {
        let Quaternion { x, y, z, w } = self.normalized();
        Mat3([
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
            [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
            [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
        ])
    }

    /// Shepperd's method; result has `w >= 0`.
    pub fn from_matrix(m: &Mat3) -> Quaternion {
        let r = &m.0;
        let tr = m.trace();
        let q = if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            Quaternion::new((r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s, 0.25 * s)
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (1.0 + r[0][0] - r[1][1] - r[2][2]).sqrt() * 2.0;
            Quaternion::new(0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s, (r[2][1] - r[1][2]) / s)
        } else if r[1][1] > r[2][2] {
            let s = (1.0 + r[1][1] - r[0][0] - r[2][2]).sqrt() * 2.0;
            Quaternion::new((r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s, (r[0][2] - r[2][0]) / s)
        } else {
            let s = (1.0 + r[2][2] - r[0][0] - r[1][1]).sqrt() * 2.0;
            Quaternion::new((r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s, (r[1][0] - r[0][1]) / s)
        };
        let q = q.normalized();
        if q.w < 0.0 {
            Quaternion::new(-q.x, -q.y, -q.z, -q.w)
        } else {
            q
        }
    }

    /// Shortest-arc spherical linear interpolation.
    pub fn slerp(&self, other: &Quaternion, s: f64) -> Quaternion {
        let mut b = *other;
        let mut d = self.dot(&b);
        if d < 0.0 {
            b = Quaternion::new(-b.x, -b.y, -b.z, -b.w);
            d = -d;
        }
        let (wa, wb) = if d > 1.0 - 1e-12 {
            (1.0 - s, s)
        } else {
            let theta = d.min(1.0).acos();
            let sin = theta.sin();
            (((1.0 - s) * theta).sin() / sin, (s * theta).sin() / sin)
        };
        Quaternion::new(wa * self.x + wb * b.x, wa * self.y + wb * b.y, wa * self.z + wb * b.z, wa * self.w + wb * b.w)
            .normalized()
    }
}

/// Tolerance for the rotation-matrix invariants.
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Drift beyond which a composed rotation is projected back onto SO(3).
const REORTHONORMALIZE_DRIFT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransformError {
    #[error("rotation is not orthonormal (‖RᵀR − I‖ = {0:.3e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant {0} is not +1")]
    Reflection(f64),
    #[error("transform has non-finite entries")]
    NonFinite,
}

/// Element of SE(3): `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTransform", into = "RawTransform")]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Point3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform { rotation: Mat3::IDENTITY, translation: Point3::ZERO };

    pub fn new(rotation: Mat3, translation: Point3) -> Result<Self, TransformError> {
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(TransformError::NonFinite);
        }
        let ortho = rotation.orthonormality_error();
        if ortho > ROTATION_TOLERANCE {
            return Err(TransformError::NotOrthonormal(ortho));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(TransformError::Reflection(det));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_rotation(rotation: Mat3) -> Result<Self, TransformError> {
        Self::new(rotation, Point3::ZERO)
    }

    pub fn from_translation(translation: Point3) -> Self {
        Self { rotation: Mat3::IDENTITY, translation }
    }

    /// Builds a transform from a unit quaternion (x, y, z, w) and translation.
    pub fn from_quaternion(q: Quaternion, translation: Point3) -> Self {
        Self { rotation: q.to_matrix(), translation }
    }

    /// Projects an almost-rotation onto SO(3) first.
    pub fn new_orthonormalized(rotation: Mat3, translation: Point3) -> Result<Self, TransformError> {
        Self::new(rotation.nearest_rotation(), translation)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Point3 {
        self.translation
    }

    pub fn quaternion(&self) -> Quaternion {
        Quaternion::from_matrix(&self.rotation)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if rotation.orthonormality_error() > REORTHONORMALIZE_DRIFT {
            rotation = rotation.nearest_rotation();
        }
        RigidTransform { rotation, translation: self.rotation * other.translation + self.translation }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// Rotates a direction (no translation).
    pub fn apply_vector(&self, v: Point3) -> Point3 {
        self.rotation * v
    }

    /// Row-major homogeneous 4×4 matrix.
    pub fn to_matrix4(&self) -> [[f64; 4]; 4] {
        let r = &self.rotation.0;
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t.x],
            [r[1][0], r[1][1], r[1][2], t.y],
            [r[2][0], r[2][1], r[2][2], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_matrix4(m: &[[f64; 4]; 4]) -> Result<Self, TransformError> {
        let rotation = Mat3([[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]]);
        Self::new(rotation, Point3::new(m[0][3], m[1][3], m[2][3]))
    }

    /// Angle of the relative rotation, in radians.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        (self.rotation.transpose() * other.rotation).rotation_angle()
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        self.translation.distance(other.translation)
    }

    /// Largest absolute difference between the 4×4 matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        let a = self.to_matrix4();
        let b = other.to_matrix4();
        a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Camera pose looking from `eye` toward `target`: camera z points at the
    /// target, camera y is aligned as closely as possible with `-up`.
    pub fn look_at(eye: Point3, target: Point3, up: Point3) -> Option<RigidTransform> {
        let z = (target - eye).normalized()?;
        let x = z.cross(up).normalized()?;
        let y = z.cross(x);
        Some(RigidTransform { rotation: Mat3::from_columns(x, y, z), translation: eye })
    }
}

#[derive(Serialize, Deserialize)]
struct RawTransform {
    matrix: [[f64; 4]; 4],
}

impl TryFrom<RawTransform> for RigidTransform {
    type Error = TransformError;
    fn try_from(raw: RawTransform) -> Result<Self, Self::Error> {
        RigidTransform::from_matrix4(&raw.matrix)
    }
}

impl From<RigidTransform> for RawTransform {
    fn from(t: RigidTransform) -> Self {
        RawTransform { matrix: t.to_matrix4() }
    }
}

/// Three vertex indices into a mesh's vertex list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triangle(pub [u32; 3]);

impl Triangle {
    pub fn new(a: u32, b: u32, c: u32) -> Self {
        Triangle([a, b, c])
    }

    pub fn indices(&self) -> [usize; 3] {
        self.0.map(|i| i as usize)
    }

    /// Distinct indices, all below `vertex_count`.
    pub fn is_valid_for(&self, vertex_count: usize) -> bool {
        let [a, b, c] = self.0;
        a != b && b != c && a != c && self.0.iter().all(|&i| (i as usize) < vertex_count)
    }
}

/// `m = u · diag(s) · vᵀ`, singular values descending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd3 {
    pub u: Mat3,
    pub s: [f64; 3],
    pub v: Mat3,
}

impl Svd3 {
    pub fn reconstruct(&self) -> Mat3 {
        self.u * Mat3::from_diagonal(self.s) * self.v.transpose()
    }
}

const JACOBI_THRESHOLD: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 60;

/// One-sided Jacobi SVD of a 3×3 matrix.
///
/// Column pairs of `A·V` are rotated until mutually orthogonal; the column
/// norms are then the singular values. Columns that collapse to round-off
/// get a zero singular value and an orthonormal completion in `U`.
pub fn svd3(m: &Mat3) -> Svd3 {
    let mut a = m.0;
    let mut v = Mat3::IDENTITY.0;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let mut alpha = 0.0;
            let mut beta = 0.0;
            let mut gamma = 0.0;
            for row in &a {
                alpha += row[i] * row[i];
                beta += row[j] * row[j];
                gamma += row[i] * row[j];
            }
            if gamma == 0.0 || gamma.abs() <= JACOBI_THRESHOLD * (alpha * beta).sqrt() {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = c * t;
            for row in a.iter_mut().chain(v.iter_mut()) {
                let (ri, rj) = (row[i], row[j]);
                row[i] = c * ri - s * rj;
                row[j] = s * ri + c * rj;
            }
        }
        if !rotated {
            break;
        }
    }

    let a = Mat3(a);
    let v = Mat3(v);
    let norms = [0, 1, 2].map(|j| a.column(j).norm());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&p, &q| norms[q].total_cmp(&norms[p]));

    let s_max = norms[order[0]];
    let tol = s_max * 4.0 * f64::EPSILON;
    let mut s = [0.0; 3];
    let mut u_cols: [Option<Point3>; 3] = [None; 3];
    let mut v_cols = [Point3::ZERO; 3];
    for (k, &j) in order.iter().enumerate() {
        v_cols[k] = v.column(j);
        if norms[j] > tol && norms[j] > 0.0 {
            s[k] = norms[j];
            u_cols[k] = Some(a.column(j) / norms[j]);
        }
    }
    let u_cols = complete_orthonormal(u_cols);
    Svd3 {
        u: Mat3::from_columns(u_cols[0], u_cols[1], u_cols[2]),
        s,
        v: Mat3::from_columns(v_cols[0], v_cols[1], v_cols[2]),
    }
}

/// Fills missing columns with unit vectors orthogonal to the present ones.
fn complete_orthonormal(cols: [Option<Point3>; 3]) -> [Point3; 3] {
    let mut out: Vec<Point3> = cols.iter().flatten().copied().collect();
    let axes = [Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0), Point3::new(0.0, 0.0, 1.0)];
    let mut filled = [Point3::ZERO; 3];
    let mut present = 0;
    for (k, c) in cols.iter().enumerate() {
        match c {
            Some(c) => {
                filled[k] = *c;
                present += 1;
            }
            None => {
                // Gram-Schmidt the axis least aligned with the existing columns.
                let candidate = axes
                    .iter()
                    .map(|&e| {
                        let mut w = e;
                        for &q in &out {
                            w = w - q * q.dot(w);
                        }
                        w
                    })
                    .max_by(|p, q| p.norm().total_cmp(&q.norm()))
                    .and_then(Point3::normalized)
                    .unwrap_or(axes[k]);
                let mut w = candidate;
                for &q in &out {
                    w = w - q * q.dot(w);
                }
                let w = w.normalized().unwrap_or(candidate);
                out.push(w);
                filled[k] = w;
            }
        }
    }
    debug_assert!(present <= 3);
    filled
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rz(deg: f64) -> RigidTransform {
        RigidTransform::from_rotation(Mat3::rot_z(deg.to_radians())).unwrap()
    }

    #[test]
    fn compose_with_identity() {
        let t = RigidTransform::new(Mat3::rot_x(0.3), Point3::new(1.0, -2.0, 0.5)).unwrap();
        assert_eq!(RigidTransform::IDENTITY.compose(&t), t);
    }

    #[test]
    fn compose_quarter_turns() {
        // Rz(90)·Rz(90) by hand: [[0,-1,0],[1,0,0],[0,0,1]]² = [[-1,0,0],[0,-1,0],[0,0,1]]
        let r = rz(90.0).compose(&rz(90.0));
        let expected = Mat3([[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(r.rotation().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(RigidTransform::IDENTITY.inverse(), RigidTransform::IDENTITY);
        let t = RigidTransform::from_translation(Point3::new(1.0, 2.0, 3.0));
        assert_eq!(t.inverse().translation(), Point3::new(-1.0, -2.0, -3.0));
        let t = RigidTransform::new(Mat3::rot_z(30f64.to_radians()), Point3::new(0.1, 0.2, 0.3)).unwrap();
        assert!(t.compose(&t.inverse()).max_abs_diff(&RigidTransform::IDENTITY) < 1e-12);
    }

    #[test]
    fn apply_cases() {
        let p = Point3::new(0.3, -0.1, 2.0);
        assert_eq!(RigidTransform::IDENTITY.apply(p), p);
        let d = Point3::new(1.0, 1.0, -1.0);
        assert_eq!(RigidTransform::from_translation(d).apply(p), p + d);
        let q = rz(90.0).apply(Point3::new(1.0, 0.0, 0.0));
        assert!(q.distance(Point3::new(0.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn rejects_reflection_and_skew() {
        let mirror = Mat3::from_diagonal([1.0, 1.0, -1.0]);
        assert!(matches!(RigidTransform::from_rotation(mirror), Err(TransformError::Reflection(_))));
        let skew = Mat3([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(matches!(RigidTransform::from_rotation(skew), Err(TransformError::NotOrthonormal(_))));
    }

    #[test]
    fn svd_of_diagonals() {
        let s = svd3(&Mat3::IDENTITY);
        assert_eq!(s.s, [1.0, 1.0, 1.0]);
        let s = svd3(&Mat3::from_diagonal([3.0, 2.0, 1.0]));
        assert_eq!(s.s, [3.0, 2.0, 1.0]);
        let s = svd3(&Mat3::from_diagonal([1.0, 3.0, 2.0]));
        assert_eq!(s.s, [3.0, 2.0, 1.0]);
        assert!(s.reconstruct().max_abs_diff(&Mat3::from_diagonal([1.0, 3.0, 2.0])) < 1e-15);
    }

    #[test]
    fn svd_rank_deficient() {
        let a = Point3::new(1.0, 2.0, 3.0);
        let b = Point3::new(-1.0, 0.5, 2.0);
        let rank1 = Mat3::outer(a, b);
        let s = svd3(&rank1);
        assert!((s.s[0] - a.norm() * b.norm()).abs() < 1e-12);
        assert!(s.s[1].abs() < 1e-14 && s.s[2].abs() < 1e-14);
        assert!(s.u.orthonormality_error() < 1e-12);
        assert!(s.v.orthonormality_error() < 1e-12);
        assert!(s.reconstruct().max_abs_diff(&rank1) < 1e-12);

        let zero = svd3(&Mat3::ZERO);
        assert_eq!(zero.s, [0.0; 3]);
        assert!(zero.u.orthonormality_error() < 1e-15);
    }

    #[test]
    fn axis_angle_and_quaternion_agree() {
        let axis = Point3::new(0.2, -0.7, 0.4);
        let angle = 2.1;
        let m = Mat3::from_axis_angle(axis, angle);
        let q = Quaternion::from_matrix(&m);
        assert!(q.to_matrix().max_abs_diff(&m) < 1e-14);
        assert!((m.rotation_angle() - angle).abs() < 1e-13);
        // Near-π rotations survive the round trip too.
        let m = Mat3::from_axis_angle(axis, PI - 1e-9);
        assert!(Quaternion::from_matrix(&m).to_matrix().max_abs_diff(&m) < 1e-12);
    }

    #[test]
    fn quaternion_rz90() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = Quaternion::new(0.0, 0.0, h, h).to_matrix();
        assert!(m.max_abs_diff(&Mat3::rot_z(FRAC_PI_2)) < 1e-15);
    }

    #[test]
    fn look_at_points_z_at_target() {
        let t = RigidTransform::look_at(Point3::new(0.0, 0.0, 0.16), Point3::ZERO, Point3::new(0.0, 1.0, 0.0)).unwrap();
        let dir = t.apply_vector(Point3::new(0.0, 0.0, 1.0));
        assert!(dir.distance(Point3::new(0.0, 0.0, -1.0)) < 1e-15);
        assert!(RigidTransform::new(*t.rotation(), t.translation()).is_ok());
    }
}
