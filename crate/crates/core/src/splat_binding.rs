//! Gaussians carried by the faces of a deforming hand mesh.
//!
//! Every Gaussian is attached once, in the rest pose, to its nearest
//! triangle. Each triangle `(v0, v1, v2)` defines a frame:
//!
//! ```text
//! T  = (v0 + v1 + v2) / 3
//! a1 = v2 − v1,   a2 = a1 × (v0 − v1),   a3 = a1 × a2
//! R  = [a1/|a1|, a2/|a2|, a3/|a3|]
//! k  = ½ (|a1| + |a2| / |v0 − v2|)
//! ```
//!
//! Bound Gaussians are stored in face-local, `k`-normalized coordinates so
//! that deforming with the rest pose gives back the original cloud, and a
//! posed mesh moves them as `x̂ = T + k R x`, `R̂ = R Rₗ`, `Ŝ = k S₀`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::point_triangle_distance;
use crate::hand_rig::HandRig;
use crate::math::{is_rotation, matrix_to_quat, normalize_backward, quat_norm, quat_to_matrix};
use crate::math::{Mat3, Quat, Vec3};

/// Faces whose `|a2|` or `|v0 − v2|` falls below this are rejected.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// K anisotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianSet {
    pub positions: Vec<Vec3>,
    /// Unit quaternions `[w, x, y, z]`.
    pub orientations: Vec<Quat>,
    /// Standard deviations along the local axes, meters.
    pub scales: Vec<Vec3>,
    pub opacities: Vec<f64>,
    pub colors: Vec<Vec3>,
}

impl GaussianSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vec3, orientation: Quat, scale: Vec3, opacity: f64, color: Vec3) {
        self.positions.push(position);
        self.orientations.push(orientation);
        self.scales.push(scale);
        self.opacities.push(opacity);
        self.colors.push(color);
    }

    pub fn check_lengths(&self) -> Result<()> {
        let k = self.positions.len();
        if self.orientations.len() != k
            || self.scales.len() != k
            || self.opacities.len() != k
            || self.colors.len() != k
        {
            return Err(Error::structural(format!(
                "gaussian set fields disagree in length (positions {k}, orientations {}, scales {}, opacities {}, colors {})",
                self.orientations.len(),
                self.scales.len(),
                self.opacities.len(),
                self.colors.len()
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check_lengths()?;
        for i in 0..self.len() {
            if !self.positions[i].iter().all(|v| v.is_finite()) {
                return Err(Error::validation(format!("gaussian {i}: position not finite")));
            }
            if (quat_norm(&self.orientations[i]) - 1.0).abs() > 1e-6 {
                return Err(Error::validation(format!("gaussian {i}: quaternion not unit norm")));
            }
            if self.scales[i].iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::validation(format!("gaussian {i}: scales must be positive")));
            }
            let o = self.opacities[i];
            if !(o > 0.0 && o < 1.0) {
                return Err(Error::validation(format!("gaussian {i}: opacity {o} outside (0,1)")));
            }
            if self.colors[i].iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::validation(format!("gaussian {i}: color outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Rigid frame plus isotropic scale attached to one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceFrame {
    pub translation: Vec3,
    pub rotation: Mat3,
    pub scale: f64,
}

/// Computes the frame of triangle `(v0, v1, v2)`. `face` is only used in the
/// error message.
pub fn face_frame_indexed(face: usize, v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Result<FaceFrame> {
    let a1 = v2 - v1;
    let a2 = a1.cross(&(v0 - v1));
    let a3 = a1.cross(&a2);
    let span = (v0 - v2).norm();
    let a2_len = a2.norm();
    if a2_len < DEGENERATE_EPS || span < DEGENERATE_EPS {
        return Err(Error::DegenerateFace {
            face,
            reason: format!("|a2| = {a2_len:e}, |v0 - v2| = {span:e}"),
        });
    }
    let rotation = Mat3::from_columns(&[a1.normalize(), a2 / a2_len, a3.normalize()]);
    Ok(FaceFrame {
        translation: (v0 + v1 + v2) / 3.0,
        rotation,
        scale: 0.5 * (a1.norm() + a2_len / span),
    })
}

pub fn face_frame(v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Result<FaceFrame> {
    face_frame_indexed(0, v0, v1, v2)
}

/// Upstream gradient of a [`FaceFrame`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceFrameGrad {
    pub translation: Vec3,
    pub rotation: Mat3,
    pub scale: f64,
}

impl FaceFrameGrad {
    pub fn zeros() -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation: Mat3::zeros(),
            scale: 0.0,
        }
    }
}

/// Reverse-mode pass of [`face_frame`]; returns gradients for `v0, v1, v2`.
pub fn face_frame_backward(v0: &Vec3, v1: &Vec3, v2: &Vec3, grad: &FaceFrameGrad) -> [Vec3; 3] {
    let a1 = v2 - v1;
    let e01 = v0 - v1;
    let a2 = a1.cross(&e01);
    let a3 = a1.cross(&a2);
    let e02 = v0 - v2;
    let (a1_len, a2_len, span) = (a1.norm(), a2.norm(), e02.norm());

    let mut d_a1 = normalize_backward(&a1, &grad.rotation.column(0).into_owned());
    let mut d_a2 = normalize_backward(&a2, &grad.rotation.column(1).into_owned());
    let d_a3 = normalize_backward(&a3, &grad.rotation.column(2).into_owned());

    d_a1 += 0.5 * grad.scale * a1 / a1_len;
    d_a2 += 0.5 * grad.scale * a2 / (a2_len * span);
    let d_e02 = -0.5 * grad.scale * a2_len * e02 / (span * span * span);

    // a3 = a1 × a2
    d_a1 += a2.cross(&d_a3);
    d_a2 += d_a3.cross(&a1);
    // a2 = a1 × e01
    d_a1 += e01.cross(&d_a2);
    let d_e01 = d_a2.cross(&a1);

    let d_t = grad.translation / 3.0;
    let d_v0 = d_t + d_e01 + d_e02;
    let d_v1 = d_t - d_a1 - d_e01;
    let d_v2 = d_t + d_a1 - d_e02;
    [d_v0, d_v1, d_v2]
}

/// Per-Gaussian attachment to the rest-pose mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingTable {
    pub face_index: Vec<usize>,
    pub local_position: Vec<Vec3>,
    pub local_orientation: Vec<Quat>,
    pub canonical_scale: Vec<Vec3>,
    /// Opacity and color pass through deformation unchanged.
    pub opacities: Vec<f64>,
    pub colors: Vec<Vec3>,
}

impl BindingTable {
    pub fn len(&self) -> usize {
        self.face_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.face_index.is_empty()
    }

    pub fn validate(&self, num_faces: usize) -> Result<()> {
        let k = self.face_index.len();
        if self.local_position.len() != k
            || self.local_orientation.len() != k
            || self.canonical_scale.len() != k
            || self.opacities.len() != k
            || self.colors.len() != k
        {
            return Err(Error::structural("binding table fields disagree in length"));
        }
        if let Some(i) = self.face_index.iter().position(|&f| f >= num_faces) {
            return Err(Error::validation(format!(
                "binding entry {i} references face {} >= {num_faces}",
                self.face_index[i]
            )));
        }
        Ok(())
    }
}

/// Frames for every face of a mesh.
pub fn face_frames(vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<Vec<FaceFrame>> {
    faces
        .iter()
        .enumerate()
        .map(|(f, [i, j, k])| face_frame_indexed(f, &vertices[*i], &vertices[*j], &vertices[*k]))
        .collect()
}

/// Attaches each Gaussian to its nearest rest-pose face (lowest index on
/// ties) and stores it in that face's normalized local frame.
pub fn bind_gaussians(gaussians: &GaussianSet, rig: &HandRig) -> Result<BindingTable> {
    gaussians.check_lengths()?;
    if rig.faces.is_empty() {
        return Err(Error::validation("rig mesh has no faces to bind to"));
    }
    let verts = &rig.template_vertices;
    let faces = &rig.faces;
    let frames = face_frames(verts, faces)?;
    let face_index: Vec<usize> = gaussians
        .positions
        .par_iter()
        .map(|p| {
            let mut best = (0usize, f64::INFINITY);
            for (f, [i, j, k]) in faces.iter().enumerate() {
                let d = point_triangle_distance(p, &verts[*i], &verts[*j], &verts[*k]);
                if d < best.1 {
                    best = (f, d);
                }
            }
            best.0
        })
        .collect();

    let mut table = BindingTable {
        face_index,
        local_position: Vec::with_capacity(gaussians.len()),
        local_orientation: Vec::with_capacity(gaussians.len()),
        canonical_scale: Vec::with_capacity(gaussians.len()),
        opacities: gaussians.opacities.clone(),
        colors: gaussians.colors.clone(),
    };
    for i in 0..gaussians.len() {
        let frame = &frames[table.face_index[i]];
        let rt = frame.rotation.transpose();
        table
            .local_position
            .push(rt * (gaussians.positions[i] - frame.translation) / frame.scale);
        table
            .local_orientation
            .push(matrix_to_quat(&(rt * quat_to_matrix(&gaussians.orientations[i]))));
        table.canonical_scale.push(gaussians.scales[i] / frame.scale);
    }
    Ok(table)
}

/// Moves bound Gaussians onto a posed mesh.
pub fn deform_gaussians(
    binding: &BindingTable,
    posed_vertices: &[Vec3],
    faces: &[[usize; 3]],
) -> Result<GaussianSet> {
    binding.validate(faces.len())?;
    check_vertex_refs(posed_vertices, faces)?;
    let frames = used_frames(binding, posed_vertices, faces)?;
    let mut out = GaussianSet {
        positions: Vec::with_capacity(binding.len()),
        orientations: Vec::with_capacity(binding.len()),
        scales: Vec::with_capacity(binding.len()),
        opacities: binding.opacities.clone(),
        colors: binding.colors.clone(),
    };
    for i in 0..binding.len() {
        let frame = frames[binding.face_index[i]].as_ref().expect("frame computed for bound face");
        out.positions
            .push(frame.translation + frame.scale * (frame.rotation * binding.local_position[i]));
        out.orientations.push(matrix_to_quat(
            &(frame.rotation * quat_to_matrix(&binding.local_orientation[i])),
        ));
        out.scales.push(binding.canonical_scale[i] * frame.scale);
    }
    Ok(out)
}

fn check_vertex_refs(vertices: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    if let Some(f) = faces.iter().position(|f| f.iter().any(|&v| v >= vertices.len())) {
        return Err(Error::structural(format!(
            "face {f} references a vertex beyond the {} posed vertices",
            vertices.len()
        )));
    }
    Ok(())
}

/// Frames for the faces that carry at least one Gaussian.
fn used_frames(
    binding: &BindingTable,
    vertices: &[Vec3],
    faces: &[[usize; 3]],
) -> Result<Vec<Option<FaceFrame>>> {
    let mut frames: Vec<Option<FaceFrame>> = vec![None; faces.len()];
    for &f in &binding.face_index {
        if frames[f].is_none() {
            let [i, j, k] = faces[f];
            frames[f] = Some(face_frame_indexed(f, &vertices[i], &vertices[j], &vertices[k])?);
        }
    }
    Ok(frames)
}

/// Upstream gradients of a deformed Gaussian set. Orientation gradients are
/// taken with respect to each Gaussian's rotation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformGrad {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Mat3>,
    pub scales: Vec<Vec3>,
}

/// Reverse-mode pass of [`deform_gaussians`]: gradients for every posed
/// vertex.
pub fn deform_gaussians_backward(
    binding: &BindingTable,
    posed_vertices: &[Vec3],
    faces: &[[usize; 3]],
    grad: &DeformGrad,
) -> Result<Vec<Vec3>> {
    binding.validate(faces.len())?;
    check_vertex_refs(posed_vertices, faces)?;
    if grad.positions.len() != binding.len()
        || grad.rotations.len() != binding.len()
        || grad.scales.len() != binding.len()
    {
        return Err(Error::structural("deform gradient length does not match binding"));
    }
    let frames = used_frames(binding, posed_vertices, faces)?;
    let mut frame_grads = vec![FaceFrameGrad::zeros(); faces.len()];
    for i in 0..binding.len() {
        let f = binding.face_index[i];
        let frame = frames[f].as_ref().expect("frame computed for bound face");
        let local = binding.local_position[i];
        let local_rot = quat_to_matrix(&binding.local_orientation[i]);
        let g = &mut frame_grads[f];
        let dx = grad.positions[i];
        g.translation += dx;
        g.scale += dx.dot(&(frame.rotation * local)) + grad.scales[i].dot(&binding.canonical_scale[i]);
        g.rotation += frame.scale * dx * local.transpose() + grad.rotations[i] * local_rot.transpose();
    }
    let mut d_vertices = vec![Vec3::zeros(); posed_vertices.len()];
    for (f, g) in frame_grads.iter().enumerate() {
        if frames[f].is_none() {
            continue;
        }
        let [i, j, k] = faces[f];
        let [d0, d1, d2] =
            face_frame_backward(&posed_vertices[i], &posed_vertices[j], &posed_vertices[k], g);
        d_vertices[i] += d0;
        d_vertices[j] += d1;
        d_vertices[k] += d2;
    }
    Ok(d_vertices)
}

/// `hand ∪ object`, hand Gaussians first.
pub fn compose_scene(hand: &GaussianSet, object: &GaussianSet) -> GaussianSet {
    let mut out = hand.clone();
    out.positions.extend_from_slice(&object.positions);
    out.orientations.extend_from_slice(&object.orientations);
    out.scales.extend_from_slice(&object.scales);
    out.opacities.extend_from_slice(&object.opacities);
    out.colors.extend_from_slice(&object.colors);
    out
}

/// True when `frame.rotation` is a proper rotation and the scale positive.
pub fn frame_is_valid(frame: &FaceFrame) -> bool {
    is_rotation(&frame.rotation, 1e-6) && frame.scale > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_about;

    #[test]
    fn face_frame_hand_computed() {
        let f = face_frame(
            &Vec3::new(0.0, 1.0, 0.0),
            &Vec3::zeros(),
            &Vec3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        // a1 = (1,0,0); a2 = a1 × (0,1,0) = (0,0,1); a3 = a1 × a2 = (0,−1,0).
        let expected_r = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((f.translation - Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!((f.rotation - expected_r).amax() < 1e-15);
        // |a1| = 1, |a2| = 1, |v0 − v2| = √2.
        assert!((f.scale - 0.5 * (1.0 + 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!(frame_is_valid(&f));
    }

    #[test]
    fn face_frame_scales_linearly() {
        let (v0, v1, v2) = (
            Vec3::new(0.1, 0.7, -0.2),
            Vec3::new(-0.3, 0.05, 0.4),
            Vec3::new(0.9, -0.1, 0.3),
        );
        let base = face_frame(&v0, &v1, &v2).unwrap();
        let c = 2.5;
        let scaled = face_frame(&(v0 * c), &(v1 * c), &(v2 * c)).unwrap();
        assert!((scaled.scale - c * base.scale).abs() < 1e-12);
        assert!((scaled.rotation - base.rotation).amax() < 1e-12);
    }

    #[test]
    fn degenerate_face_is_rejected() {
        let err = face_frame_indexed(
            7,
            &Vec3::new(0.0, 0.0, 0.0),
            &Vec3::new(1.0, 0.0, 0.0),
            &Vec3::new(2.0, 0.0, 0.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { face: 7, .. }));
    }

    #[test]
    fn face_frame_backward_matches_finite_differences() {
        let v = [
            Vec3::new(0.1, 0.7, -0.2),
            Vec3::new(-0.3, 0.05, 0.4),
            Vec3::new(0.9, -0.1, 0.3),
        ];
        let g = FaceFrameGrad {
            translation: Vec3::new(0.3, -0.2, 1.0),
            rotation: Mat3::new(0.5, -1.0, 0.2, 0.3, 0.8, -0.4, 1.1, 0.0, -0.6),
            scale: 0.7,
        };
        let objective = |v: &[Vec3; 3]| {
            let f = face_frame(&v[0], &v[1], &v[2]).unwrap();
            f.translation.dot(&g.translation) + f.rotation.component_mul(&g.rotation).sum() + f.scale * g.scale
        };
        let analytic = face_frame_backward(&v[0], &v[1], &v[2], &g);
        let h = 1e-6;
        for a in 0..3 {
            for c in 0..3 {
                let (mut vp, mut vm) = (v, v);
                vp[a][c] += h;
                vm[a][c] -= h;
                let fd = (objective(&vp) - objective(&vm)) / (2.0 * h);
                assert!((fd - analytic[a][c]).abs() < 1e-6 * (1.0 + fd.abs()), "v{a}[{c}] fd={fd} an={}", analytic[a][c]);
            }
        }
    }

    fn single_triangle_rig() -> HandRig {
        HandRig::new(
            vec![Vec3::new(0.0, 0.02, 0.0), Vec3::zeros(), Vec3::new(0.03, 0.0, 0.0)],
            vec![[0, 1, 2]],
            vec![None],
            vec![Vec3::zeros()],
            vec![vec![1.0]; 3],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn centroid_and_normal_offsets() {
        let rig = single_triangle_rig();
        let frame = face_frame(&rig.template_vertices[0], &rig.template_vertices[1], &rig.template_vertices[2]).unwrap();
        let normal = frame.rotation.column(1).into_owned();
        let d = 0.004;
        let mut set = GaussianSet::default();
        for p in [frame.translation, frame.translation + normal * d] {
            set.push(p, [1.0, 0.0, 0.0, 0.0], Vec3::new(0.001, 0.002, 0.003), 0.5, Vec3::new(0.2, 0.4, 0.6));
        }
        let table = bind_gaussians(&set, &rig).unwrap();
        assert!(table.local_position[0].norm() < 1e-15);
        assert!((table.local_position[1].norm() - d / frame.scale).abs() < 1e-12);
        let back = deform_gaussians(&table, &rig.template_vertices, &rig.faces).unwrap();
        for i in 0..2 {
            assert!((back.positions[i] - set.positions[i]).norm() < 1e-12);
            assert!((back.scales[i] - set.scales[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn nearest_face_ties_go_to_lowest_index() {
        // Two coplanar triangles sharing an edge; a point on the shared edge.
        let rig = HandRig::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 1.0, 0.0)],
            vec![[0, 1, 2], [1, 3, 2]],
            vec![None],
            vec![Vec3::zeros()],
            vec![vec![1.0]; 4],
            vec![],
        )
        .unwrap();
        let mut set = GaussianSet::default();
        set.push(Vec3::new(0.5, 0.5, 0.1), [1.0, 0.0, 0.0, 0.0], Vec3::repeat(0.1), 0.5, Vec3::repeat(0.5));
        assert_eq!(bind_gaussians(&set, &rig).unwrap().face_index, vec![0]);
    }

    #[test]
    fn rigid_motion_moves_gaussians_rigidly() {
        let rig = single_triangle_rig();
        let mut set = GaussianSet::default();
        set.push(Vec3::new(0.01, 0.005, 0.002), [0.9, 0.1, -0.3, 0.2], Vec3::new(0.001, 0.002, 0.0005), 0.6, Vec3::repeat(0.3));
        set.orientations[0] = crate::math::quat_normalize(&set.orientations[0]);
        let table = bind_gaussians(&set, &rig).unwrap();
        let r = rotation_about(&Vec3::new(0.2, 1.0, -0.4), 0.9);
        let s = Vec3::new(0.3, -0.1, 0.05);
        let moved: Vec<Vec3> = rig.template_vertices.iter().map(|v| r * v + s).collect();
        let out = deform_gaussians(&table, &moved, &rig.faces).unwrap();
        assert!((out.positions[0] - (r * set.positions[0] + s)).norm() < 1e-12);
        assert!((out.scales[0] - set.scales[0]).norm() < 1e-12);
        let expected_rot = r * quat_to_matrix(&set.orientations[0]);
        assert!((quat_to_matrix(&out.orientations[0]) - expected_rot).amax() < 1e-12);
        // Uniform ×2 scaling doubles the Gaussian scales.
        let doubled: Vec<Vec3> = rig.template_vertices.iter().map(|v| v * 2.0).collect();
        let out = deform_gaussians(&table, &doubled, &rig.faces).unwrap();
        assert!((out.scales[0] - set.scales[0] * 2.0).norm() < 1e-12);
        assert!((out.positions[0] - set.positions[0] * 2.0).norm() < 1e-12);
    }

    #[test]
    fn compose_concatenates_hand_first() {
        let mut a = GaussianSet::default();
        let mut b = GaussianSet::default();
        for i in 0..10 {
            a.push(Vec3::repeat(i as f64), [1.0, 0.0, 0.0, 0.0], Vec3::repeat(0.1), 0.5, Vec3::repeat(0.1));
        }
        for i in 0..20 {
            b.push(Vec3::repeat(-(i as f64)), [1.0, 0.0, 0.0, 0.0], Vec3::repeat(0.2), 0.5, Vec3::repeat(0.9));
        }
        let c = compose_scene(&a, &b);
        assert_eq!(c.len(), 30);
        assert_eq!(c.positions[0], a.positions[0]);
        assert_eq!(c.positions[10], b.positions[0]);
        assert_eq!(compose_scene(&GaussianSet::default(), &b), b);
    }
}
