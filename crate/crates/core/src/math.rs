//! Small rotation and rigid-transform helpers on top of nalgebra.
//!
//! Quaternions are stored as plain `[w, x, y, z]` arrays, the layout used by
//! Gaussian splat PLY files (`rot_0..rot_3`).

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
/// Quaternion as `[w, x, y, z]`.
pub type Quat = [f64; 4];

pub const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

/// A rotation followed by a translation: `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Reads the upper 3×4 block; the bottom row is ignored.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> RigidTransform {
        RigidTransform {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }
}

pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues' formula.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    Rotation3::new(*w).into_inner()
}

/// Axis-angle vector of a rotation matrix.
pub fn log_so3(r: &Mat3) -> Vec3 {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

pub fn rotation_about(axis: &Vec3, angle: f64) -> Mat3 {
    exp_so3(&(axis.normalize() * angle))
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a * b.transpose();
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    let rtr = r.transpose() * r;
    (rtr - Mat3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Nearest proper rotation in the Frobenius sense.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Gradient with respect to `w` of `f(exp([w]×) R)` at `w = 0`, given the
/// Euclidean gradient `g = ∂f/∂R`.
pub fn left_tangent_grad(r: &Mat3, g: &Mat3) -> Vec3 {
    vee_antisym(&(g * r.transpose()))
}

/// Gradient with respect to `w` of `f(R exp([w]×))` at `w = 0`.
pub fn right_tangent_grad(r: &Mat3, g: &Mat3) -> Vec3 {
    vee_antisym(&(r.transpose() * g))
}

/// `<M, [w]×>_F` as a linear function of `w`.
fn vee_antisym(m: &Mat3) -> Vec3 {
    Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

pub fn quat_norm(q: &Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

pub fn quat_normalize(q: &Quat) -> Quat {
    let n = quat_norm(q);
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// Rotation matrix of a (not necessarily unit) quaternion; the quaternion is
/// normalized first.
pub fn quat_to_matrix(q: &Quat) -> Mat3 {
    let [w, x, y, z] = quat_normalize(q);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Unit quaternion with non-negative `w`.
pub fn matrix_to_quat(r: &Mat3) -> Quat {
    let uq = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let q = uq.quaternion();
    let out = [q.w, q.i, q.j, q.k];
    if out[0] < 0.0 {
        [-out[0], -out[1], -out[2], -out[3]]
    } else {
        out
    }
}

/// Back-propagates `g = ∂f/∂M` through `M = quat_to_matrix(q)`, including the
/// normalization of `q`.
pub fn quat_to_matrix_backward(q: &Quat, g: &Mat3) -> Quat {
    let n = quat_norm(q);
    let [w, x, y, z] = quat_normalize(q);
    let g = |r: usize, c: usize| g[(r, c)];
    let dw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
        + z * g(2, 0)
        + w * g(2, 1)
        - 2.0 * x * g(2, 2));
    let dy = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
        - w * g(2, 0)
        + z * g(2, 1)
        - 2.0 * y * g(2, 2));
    let dz = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0)
        - 2.0 * z * g(1, 1)
        + y * g(1, 2)
        + x * g(2, 0)
        + y * g(2, 1));
    // Project out the radial component and undo the 1/|q| scaling.
    let dn = [dw, dx, dy, dz];
    let unit = [w, x, y, z];
    let radial: f64 = dn.iter().zip(unit.iter()).map(|(a, b)| a * b).sum();
    [
        (dn[0] - radial * unit[0]) / n,
        (dn[1] - radial * unit[1]) / n,
        (dn[2] - radial * unit[2]) / n,
        (dn[3] - radial * unit[3]) / n,
    ]
}

/// Backward of `n = a / |a|`.
pub fn normalize_backward(a: &Vec3, dn: &Vec3) -> Vec3 {
    let len = a.norm();
    let n = a / len;
    (dn - n * n.dot(dn)) / len
}
