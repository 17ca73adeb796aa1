//! Articulated hand rig: forward kinematics, linear blend skinning and
//! translation de-normalization.
//!
//! Joint order follows the usual 21-joint hand layout: the wrist is joint 0,
//! followed by thumb, index, middle, ring and pinky with four joints each
//! (the last one of every finger being the fingertip). Rigs with a different
//! joint count are accepted as long as the parent table forms a tree whose
//! parents precede their children.
//!
//! The wrist transform is `[Y·h₀ | Y·r₀ + t]`: the global rotation `Y` acts
//! about the world origin and the translation `t` is applied afterwards in
//! world coordinates. Every other joint composes its parent transform with a
//! rotation `hⱼ` about its own rest position, so bone lengths never change.

use crate::error::{Error, Result};
use crate::math::{is_rotation, left_tangent_grad, right_tangent_grad, exp_so3, orthonormalize};
use crate::math::{Mat3, RigidTransform, Vec3};

pub const NUM_JOINTS: usize = 21;
pub const NUM_FINGERS: usize = 5;
pub const FINGER_NAMES: [&str; NUM_FINGERS] = ["thumb", "index", "middle", "ring", "pinky"];

/// Tolerance used when checking rotation matrices supplied by callers.
pub const ROTATION_TOL: f64 = 1e-6;
const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Global rotation, wrist translation and per-joint parent-relative
/// rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct HandPose {
    pub global_rotation: Mat3,
    pub translation: Vec3,
    pub joint_rotations: Vec<Mat3>,
}

impl HandPose {
    pub fn identity(num_joints: usize) -> Self {
        Self {
            global_rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            joint_rotations: vec![Mat3::identity(); num_joints],
        }
    }

    /// Checks orthonormality of every rotation and the expected joint count.
    pub fn validate(&self, num_joints: usize) -> Result<()> {
        if self.joint_rotations.len() != num_joints {
            return Err(Error::structural(format!(
                "pose has {} joint rotations, rig has {num_joints} joints",
                self.joint_rotations.len()
            )));
        }
        if !is_rotation(&self.global_rotation, ROTATION_TOL) {
            return Err(Error::validation("global rotation is not a proper rotation"));
        }
        for (j, r) in self.joint_rotations.iter().enumerate() {
            if !is_rotation(r, ROTATION_TOL) {
                return Err(Error::validation(format!(
                    "joint rotation {j} is not a proper rotation"
                )));
            }
        }
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("translation is not finite"));
        }
        Ok(())
    }

    /// Moves the whole hand rigidly: `Y ← R·Y`, `t ← R·t + s`.
    pub fn rigidly_moved(&self, rotation: &Mat3, shift: &Vec3) -> HandPose {
        HandPose {
            global_rotation: rotation * self.global_rotation,
            translation: rotation * self.translation + shift,
            joint_rotations: self.joint_rotations.clone(),
        }
    }

    /// Applies a tangent-space step: `Y ← exp(ω)·Y`, `t ← t + δ`,
    /// `hⱼ ← hⱼ·exp(ωⱼ)`, re-orthonormalizing every rotation that moved.
    /// Zero components leave their rotation bit-for-bit unchanged.
    pub fn retract(&self, step: &PoseTangent) -> HandPose {
        let global_rotation = if step.global_rotation == Vec3::zeros() {
            self.global_rotation
        } else {
            orthonormalize(&(exp_so3(&step.global_rotation) * self.global_rotation))
        };
        HandPose {
            global_rotation,
            translation: self.translation + step.translation,
            joint_rotations: self
                .joint_rotations
                .iter()
                .zip(&step.joint_rotations)
                .map(|(h, w)| if *w == Vec3::zeros() { *h } else { orthonormalize(&(h * exp_so3(w))) })
                .collect(),
        }
    }
}

/// Tangent vector at a pose, laid out like [`HandPose::retract`] expects.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTangent {
    pub global_rotation: Vec3,
    pub translation: Vec3,
    pub joint_rotations: Vec<Vec3>,
}

impl PoseTangent {
    pub fn zeros(num_joints: usize) -> Self {
        Self {
            global_rotation: Vec3::zeros(),
            translation: Vec3::zeros(),
            joint_rotations: vec![Vec3::zeros(); num_joints],
        }
    }

    /// Flattens to `[ω(3), δ(3), ω₀(3), ω₁(3), ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 + 3 * self.joint_rotations.len());
        out.extend(self.global_rotation.iter());
        out.extend(self.translation.iter());
        for w in &self.joint_rotations {
            out.extend(w.iter());
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let v = |k: usize| Vec3::new(flat[k], flat[k + 1], flat[k + 2]);
        Self {
            global_rotation: v(0),
            translation: v(3),
            joint_rotations: (6..flat.len()).step_by(3).map(v).collect(),
        }
    }
}

/// Skinned hand mesh with its kinematic tree.
#[derive(Debug, Clone, PartialEq)]
pub struct HandRig {
    pub template_vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// `None` only for the root joint.
    pub parent_index: Vec<Option<usize>>,
    pub rest_joint_positions: Vec<Vec3>,
    /// One row per vertex, one column per joint.
    pub skinning_weights: Vec<Vec<f64>>,
    /// Fingertip vertex groups, thumb to pinky. May be empty for rigs that are
    /// not used for grasp checks.
    pub fingertip_groups: Vec<Vec<usize>>,
}

impl HandRig {
    /// Builds a rig and checks every invariant.
    pub fn new(
        template_vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
        parent_index: Vec<Option<usize>>,
        rest_joint_positions: Vec<Vec3>,
        skinning_weights: Vec<Vec<f64>>,
        fingertip_groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let rig = Self {
            template_vertices,
            faces,
            parent_index,
            rest_joint_positions,
            skinning_weights,
            fingertip_groups,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn num_joints(&self) -> usize {
        self.parent_index.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.template_vertices.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vertices();
        let nj = self.num_joints();
        if nj == 0 {
            return Err(Error::structural("parent_index: rig has no joints"));
        }
        if self.rest_joint_positions.len() != nj {
            return Err(Error::structural(format!(
                "rest_joint_positions: expected {nj} entries, got {}",
                self.rest_joint_positions.len()
            )));
        }
        validate_parents(&self.parent_index)?;
        if self.skinning_weights.len() != n {
            return Err(Error::structural(format!(
                "skinning_weights: expected {n} rows, got {}",
                self.skinning_weights.len()
            )));
        }
        for (i, row) in self.skinning_weights.iter().enumerate() {
            if row.len() != nj {
                return Err(Error::structural(format!(
                    "skinning_weights: row {i} has {} columns, expected {nj}",
                    row.len()
                )));
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::validation(format!(
                    "skinning_weights: row {i} has a negative or non-finite weight"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::validation(format!(
                    "skinning_weights: row {i} sums to {sum}"
                )));
            }
        }
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&v| v >= n) {
                return Err(Error::validation(format!(
                    "faces: face {f} references a vertex >= {n}"
                )));
            }
        }
        let mut owner = vec![usize::MAX; n];
        for (g, group) in self.fingertip_groups.iter().enumerate() {
            for &v in group {
                if v >= n {
                    return Err(Error::validation(format!(
                        "fingertip_groups: group {g} references vertex {v} >= {n}"
                    )));
                }
                if owner[v] != usize::MAX && owner[v] != g {
                    return Err(Error::validation(format!(
                        "fingertip_groups: vertex {v} is in groups {} and {g}",
                        owner[v]
                    )));
                }
                owner[v] = g;
            }
        }
        if self
            .template_vertices
            .iter()
            .chain(&self.rest_joint_positions)
            .any(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::validation("rig coordinates must be finite"));
        }
        Ok(())
    }

    /// Per-joint offset from the parent in the rest pose (the root's offset is
    /// its rest position).
    pub fn rest_offset(&self, joint: usize) -> Vec3 {
        match self.parent_index[joint] {
            Some(p) => self.rest_joint_positions[joint] - self.rest_joint_positions[p],
            None => self.rest_joint_positions[joint],
        }
    }
}

fn validate_parents(parents: &[Option<usize>]) -> Result<()> {
    let nj = parents.len();
    if parents[0].is_some() {
        return Err(Error::validation("parent_index: joint 0 must be the root"));
    }
    for (j, p) in parents.iter().enumerate().skip(1) {
        let Some(p) = *p else {
            return Err(Error::validation(format!(
                "parent_index: joint {j} has no parent; only joint 0 may be a root"
            )));
        };
        if p >= nj {
            return Err(Error::validation(format!(
                "parent_index: joint {j} has parent {p} >= {nj}"
            )));
        }
        if p >= j {
            // Walk upwards to tell a cycle apart from a mere ordering problem.
            let mut cur = j;
            for _ in 0..=nj {
                match parents[cur] {
                    Some(next) if next == j => {
                        return Err(Error::validation(format!(
                            "parent_index: cycle through joint {j}"
                        )))
                    }
                    Some(next) => cur = next,
                    None => break,
                }
            }
            return Err(Error::validation(format!(
                "parent_index: joint {j} precedes its parent {p}; joints must be topologically ordered"
            )));
        }
    }
    Ok(())
}

/// Posed joint transforms and positions.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStates {
    pub global_transforms: Vec<RigidTransform>,
    pub joint_positions: Vec<Vec3>,
}

pub fn forward_kinematics(rig: &HandRig, pose: &HandPose) -> Result<JointStates> {
    pose.validate(rig.num_joints())?;
    let nj = rig.num_joints();
    let mut transforms: Vec<RigidTransform> = Vec::with_capacity(nj);
    for j in 0..nj {
        let g = match rig.parent_index[j] {
            None => RigidTransform::new(
                pose.global_rotation * pose.joint_rotations[j],
                pose.global_rotation * rig.rest_joint_positions[j] + pose.translation,
            ),
            Some(p) => transforms[p].compose(&RigidTransform::new(
                pose.joint_rotations[j],
                rig.rest_offset(j),
            )),
        };
        transforms.push(g);
    }
    let joint_positions = transforms.iter().map(|g| g.translation).collect();
    Ok(JointStates {
        global_transforms: transforms,
        joint_positions,
    })
}

/// Linear blend skinning: `v' = Σⱼ wᵢⱼ · Gⱼ · Ĝⱼ⁻¹ · v` with `Ĝⱼ` the rest
/// transform of joint `j` (identity rotation at its rest position).
pub fn skin_mesh(rig: &HandRig, states: &JointStates) -> Result<Vec<Vec3>> {
    check_states(rig, states)?;
    let offsets = skinning_offsets(rig, states);
    Ok(rig
        .template_vertices
        .iter()
        .zip(&rig.skinning_weights)
        .map(|(v, row)| {
            let mut out = Vec3::zeros();
            for (j, &w) in row.iter().enumerate() {
                if w != 0.0 {
                    out += w * (states.global_transforms[j].rotation * v + offsets[j]);
                }
            }
            out
        })
        .collect())
}

fn check_states(rig: &HandRig, states: &JointStates) -> Result<()> {
    if states.global_transforms.len() != rig.num_joints()
        || states.joint_positions.len() != rig.num_joints()
    {
        return Err(Error::structural(format!(
            "joint states have {} transforms, rig has {} joints",
            states.global_transforms.len(),
            rig.num_joints()
        )));
    }
    Ok(())
}

/// Translation part of `Gⱼ · Ĝⱼ⁻¹`, i.e. `pⱼ − Rⱼ rⱼ`.
fn skinning_offsets(rig: &HandRig, states: &JointStates) -> Vec<Vec3> {
    states
        .global_transforms
        .iter()
        .zip(&rig.rest_joint_positions)
        .map(|(g, r)| g.translation - g.rotation * r)
        .collect()
}

/// Gradients with respect to every joint's global rotation and position.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGradients {
    pub rotations: Vec<Mat3>,
    pub positions: Vec<Vec3>,
}

impl JointGradients {
    pub fn zeros(num_joints: usize) -> Self {
        Self {
            rotations: vec![Mat3::zeros(); num_joints],
            positions: vec![Vec3::zeros(); num_joints],
        }
    }
}

/// Reverse-mode pass of [`skin_mesh`].
pub fn skin_mesh_backward(rig: &HandRig, d_vertices: &[Vec3]) -> Result<JointGradients> {
    if d_vertices.len() != rig.num_vertices() {
        return Err(Error::structural(format!(
            "vertex gradient has {} rows, rig has {} vertices",
            d_vertices.len(),
            rig.num_vertices()
        )));
    }
    let mut grads = JointGradients::zeros(rig.num_joints());
    for ((v, row), dv) in rig
        .template_vertices
        .iter()
        .zip(&rig.skinning_weights)
        .zip(d_vertices)
    {
        for (j, &w) in row.iter().enumerate() {
            if w != 0.0 {
                let local = v - rig.rest_joint_positions[j];
                grads.rotations[j] += w * dv * local.transpose();
                grads.positions[j] += w * dv;
            }
        }
    }
    Ok(grads)
}

/// Euclidean gradient with respect to the pose matrices and translation.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseGradient {
    pub global_rotation: Mat3,
    pub translation: Vec3,
    pub joint_rotations: Vec<Mat3>,
}

impl PoseGradient {
    /// Projects onto the tangent space used by [`HandPose::retract`].
    pub fn to_tangent(&self, pose: &HandPose) -> PoseTangent {
        PoseTangent {
            global_rotation: left_tangent_grad(&pose.global_rotation, &self.global_rotation),
            translation: self.translation,
            joint_rotations: pose
                .joint_rotations
                .iter()
                .zip(&self.joint_rotations)
                .map(|(h, g)| right_tangent_grad(h, g))
                .collect(),
        }
    }
}

/// Reverse-mode pass of [`forward_kinematics`], walking the tree leaves first.
pub fn forward_kinematics_backward(
    rig: &HandRig,
    pose: &HandPose,
    states: &JointStates,
    joint_grads: &JointGradients,
) -> Result<PoseGradient> {
    check_states(rig, states)?;
    let nj = rig.num_joints();
    if joint_grads.rotations.len() != nj || joint_grads.positions.len() != nj {
        return Err(Error::structural("joint gradient length does not match rig"));
    }
    let mut d_rot = joint_grads.rotations.clone();
    let mut d_pos = joint_grads.positions.clone();
    let mut out = PoseGradient {
        global_rotation: Mat3::zeros(),
        translation: Vec3::zeros(),
        joint_rotations: vec![Mat3::zeros(); nj],
    };
    for j in (0..nj).rev() {
        let h = &pose.joint_rotations[j];
        match rig.parent_index[j] {
            Some(p) => {
                let parent_rot = states.global_transforms[p].rotation;
                let offset = rig.rest_offset(j);
                out.joint_rotations[j] = parent_rot.transpose() * d_rot[j];
                let (dr, dp) = (d_rot[j], d_pos[j]);
                d_rot[p] += dr * h.transpose() + dp * offset.transpose();
                d_pos[p] += dp;
            }
            None => {
                let y = &pose.global_rotation;
                out.joint_rotations[j] = y.transpose() * d_rot[j];
                out.global_rotation += d_rot[j] * h.transpose()
                    + d_pos[j] * rig.rest_joint_positions[j].transpose();
                out.translation += d_pos[j];
            }
        }
    }
    Ok(out)
}

/// Per-axis statistics used to normalize wrist translations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: Vec3,
    pub std: Vec3,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::validation("translation std must be positive on every axis"));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::validation("translation mean must be finite"));
        }
        Ok(())
    }
}

/// `t = tₙ ⊙ σ + μ`.
pub fn denormalize_translation(normalized: &Vec3, stats: &NormStats) -> Result<Vec3> {
    stats.validate()?;
    Ok(normalized.component_mul(&stats.std) + stats.mean)
}

/// `tₙ = (t − μ) ⊘ σ`.
pub fn normalize_translation(translation: &Vec3, stats: &NormStats) -> Result<Vec3> {
    stats.validate()?;
    Ok((translation - stats.mean).component_div(&stats.std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_about;

    fn two_joint_rig() -> HandRig {
        HandRig::new(
            vec![Vec3::new(0.0, 0.05, 0.0), Vec3::new(0.01, 0.0, 0.0)],
            vec![],
            vec![None, Some(0)],
            vec![Vec3::zeros(), Vec3::new(0.0, 0.05, 0.0)],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn child_follows_root_rotation() {
        let rig = two_joint_rig();
        let mut pose = HandPose::identity(2);
        pose.joint_rotations[0] = rotation_about(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let states = forward_kinematics(&rig, &pose).unwrap();
        // Rz(90°)·(0, 0.05, 0) = (−0.05, 0, 0), composed by hand.
        let rel = states.joint_positions[1] - states.joint_positions[0];
        assert!((rel - Vec3::new(-0.05, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn identity_pose_reproduces_rest() {
        let rig = two_joint_rig();
        let states = forward_kinematics(&rig, &HandPose::identity(2)).unwrap();
        assert_eq!(states.joint_positions, rig.rest_joint_positions);
        let verts = skin_mesh(&rig, &states).unwrap();
        for (a, b) in verts.iter().zip(&rig.template_vertices) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn single_weight_vertex_follows_its_joint() {
        let rig = two_joint_rig();
        let mut pose = HandPose::identity(2);
        let r = rotation_about(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        pose.joint_rotations[1] = r;
        let states = forward_kinematics(&rig, &pose).unwrap();
        let verts = skin_mesh(&rig, &states).unwrap();
        // Vertex 0 sits exactly on joint 1 and is weighted to it alone.
        let g = &states.global_transforms[1];
        let expected = g.apply(&(rig.template_vertices[0] - rig.rest_joint_positions[1]));
        assert!((verts[0] - expected).norm() < 1e-15);
        // Vertex 1 is weighted to the unrotated root and stays put.
        assert!((verts[1] - rig.template_vertices[1]).norm() < 1e-15);
    }

    #[test]
    fn rejects_parent_cycle() {
        let err = validate_parents(&[None, Some(2), Some(1)]).unwrap_err();
        assert!(err.to_string().contains("cycle"), "{err}");
        let err = validate_parents(&[None, Some(2), Some(0)]).unwrap_err();
        assert!(err.to_string().contains("topologically"), "{err}");
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let rig = two_joint_rig();
        let mut pose = HandPose::identity(2);
        pose.joint_rotations[1][(0, 0)] = 1.1;
        assert!(matches!(
            forward_kinematics(&rig, &pose),
            Err(Error::Validation(_))
        ));
        let short = HandPose::identity(1);
        assert!(matches!(
            forward_kinematics(&rig, &short),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn denormalize_examples() {
        let stats = NormStats {
            mean: Vec3::new(0.1, -0.2, 0.3),
            std: Vec3::new(2.0, 2.0, 2.0),
        };
        assert_eq!(denormalize_translation(&Vec3::zeros(), &stats).unwrap(), stats.mean);
        let unit = NormStats {
            mean: Vec3::zeros(),
            std: Vec3::new(2.0, 2.0, 2.0),
        };
        assert_eq!(
            denormalize_translation(&Vec3::new(1.0, 1.0, 1.0), &unit).unwrap(),
            Vec3::new(2.0, 2.0, 2.0)
        );
        let t = Vec3::new(0.37, -1.2, 4.0);
        let back = denormalize_translation(&normalize_translation(&t, &stats).unwrap(), &stats).unwrap();
        assert!((back - t).amax() < 1e-12);
        let bad = NormStats {
            mean: Vec3::zeros(),
            std: Vec3::new(1.0, 0.0, 1.0),
        };
        assert!(denormalize_translation(&t, &bad).is_err());
    }
}
