//! Procedural fixtures: a low-poly 21-joint hand rig, Gaussian clouds sampled
//! on mesh surfaces and orbiting camera rigs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::TriangleMesh;
use crate::hand_rig::{HandPose, HandRig, NUM_JOINTS};
use crate::math::{matrix_to_quat, rotation_about, Mat3, Vec3};
use crate::rasterizer::Camera;
use crate::splat_binding::{face_frame, GaussianSet};

struct FingerShape {
    base: [f64; 3],
    direction: [f64; 3],
    lengths: [f64; 3],
    radius: f64,
}

const FINGERS: [FingerShape; 5] = [
    FingerShape { base: [0.038, 0.015, -0.005], direction: [0.8, 1.0, -0.35], lengths: [0.035, 0.032, 0.027], radius: 0.0105 },
    FingerShape { base: [0.029, 0.087, 0.0], direction: [0.05, 1.0, 0.0], lengths: [0.042, 0.025, 0.021], radius: 0.0092 },
    FingerShape { base: [0.0095, 0.090, 0.0], direction: [0.0, 1.0, 0.0], lengths: [0.046, 0.028, 0.022], radius: 0.0094 },
    FingerShape { base: [-0.0105, 0.087, 0.0], direction: [-0.04, 1.0, 0.0], lengths: [0.043, 0.026, 0.021], radius: 0.0089 },
    FingerShape { base: [-0.029, 0.080, 0.0], direction: [-0.1, 1.0, 0.0], lengths: [0.034, 0.020, 0.018], radius: 0.0080 },
];

const RING_SIDES: usize = 6;
const RADIUS_TAPER: [f64; 4] = [1.0, 0.95, 0.9, 0.8];

/// A 21-joint hand: a box palm bound to the wrist plus five hexagonal finger
/// tubes. Fingers point along `+y`, the palm faces `−z`.
pub fn toy_hand_rig() -> HandRig {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut parents: Vec<Option<usize>> = vec![None];
    let mut joints = vec![Vec3::zeros()];
    let mut tips = Vec::new();

    let one_hot = |j: usize| {
        let mut w = vec![0.0; NUM_JOINTS];
        w[j] = 1.0;
        w
    };
    let blend = |a: usize, b: usize| {
        let mut w = vec![0.0; NUM_JOINTS];
        w[a] += 0.5;
        w[b] += 0.5;
        w
    };

    // Palm box.
    let (lo, hi) = (Vec3::new(-0.042, -0.01, -0.013), Vec3::new(0.042, 0.085, 0.013));
    for i in 0..8 {
        vertices.push(Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        ));
        weights.push(one_hot(0));
    }
    faces.extend_from_slice(&[
        [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6],
        [0, 1, 4], [1, 5, 4], [2, 6, 3], [3, 6, 7],
        [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
    ]);

    for (f, shape) in FINGERS.iter().enumerate() {
        let dir = Vec3::from(shape.direction).normalize();
        let base = Vec3::from(shape.base);
        let first_joint = 1 + 4 * f;
        let mut centers = vec![base];
        for l in shape.lengths {
            centers.push(centers.last().unwrap() + dir * l);
        }
        for (s, c) in centers.iter().enumerate() {
            parents.push(Some(if s == 0 { 0 } else { first_joint + s - 1 }));
            joints.push(*c);
        }
        let e1 = dir.cross(&Vec3::z()).normalize();
        let e2 = dir.cross(&e1);
        let ring_weights = [
            blend(0, first_joint),
            blend(first_joint, first_joint + 1),
            blend(first_joint + 1, first_joint + 2),
            one_hot(first_joint + 2),
        ];
        let mut rings = Vec::new();
        for (s, c) in centers.iter().enumerate() {
            let start = vertices.len();
            for k in 0..RING_SIDES {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / RING_SIDES as f64;
                let r = shape.radius * RADIUS_TAPER[s];
                vertices.push(c + r * (theta.cos() * e1 + theta.sin() * e2));
                weights.push(ring_weights[s].clone());
            }
            rings.push(start);
        }
        for pair in rings.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            for k in 0..RING_SIDES {
                let k1 = (k + 1) % RING_SIDES;
                faces.push([a + k, a + k1, b + k1]);
                faces.push([a + k, b + k1, b + k]);
            }
        }
        let base_cap = vertices.len();
        vertices.push(base - dir * 0.004);
        weights.push(ring_weights[0].clone());
        let tip_cap = vertices.len();
        vertices.push(centers[3] + dir * 0.006);
        weights.push(ring_weights[3].clone());
        for k in 0..RING_SIDES {
            let k1 = (k + 1) % RING_SIDES;
            faces.push([base_cap, rings[0] + k1, rings[0] + k]);
            faces.push([rings[3] + k, rings[3] + k1, tip_cap]);
        }
        let mut group: Vec<usize> = (rings[3]..rings[3] + RING_SIDES).collect();
        group.push(tip_cap);
        tips.push(group);
    }

    HandRig::new(vertices, faces, parents, joints, weights, tips).expect("toy rig is valid")
}

/// Gentle power-grasp pose: fingers flexed about their local x axis, thumb
/// opposed, wrist turned so the palm faces the camera rig.
pub fn toy_grasp_pose() -> HandPose {
    let mut pose = HandPose::identity(NUM_JOINTS);
    for f in 1..5 {
        for s in 0..3 {
            pose.joint_rotations[1 + 4 * f + s] = rotation_about(&Vec3::x(), -0.35 - 0.1 * s as f64);
        }
    }
    for s in 0..3 {
        pose.joint_rotations[1 + s] = rotation_about(&Vec3::new(0.3, -0.2, 1.0), 0.25);
    }
    pose.global_rotation = rotation_about(&Vec3::new(0.2, 1.0, 0.1), 0.4);
    pose.translation = Vec3::new(0.01, -0.02, 0.015);
    pose
}

/// Samples `count` flat Gaussians uniformly over a mesh surface (area
/// weighted). Each Gaussian lies in its face plane and is thin along the
/// face normal.
pub fn sample_mesh_gaussians(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    count: usize,
    splat_size: f64,
    opacity: f64,
    seed: u64,
    color: impl Fn(&Vec3) -> Vec3,
) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut acc = 0.0;
    for [i, j, k] in faces {
        acc += 0.5 * (vertices[*j] - vertices[*i]).cross(&(vertices[*k] - vertices[*i])).norm();
        cumulative.push(acc);
    }
    let mut set = GaussianSet::default();
    for _ in 0..count {
        let pick = rng.gen::<f64>() * acc;
        let f = cumulative.partition_point(|c| *c < pick).min(faces.len() - 1);
        let [i, j, k] = faces[f];
        let (a, b, c) = (vertices[i], vertices[j], vertices[k]);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        let p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        let frame = face_frame(&a, &b, &c).expect("sampled face is not degenerate");
        let spin = rotation_about(&Vec3::y(), rng.gen_range(0.0..std::f64::consts::TAU));
        let orientation = matrix_to_quat(&(frame.rotation * spin));
        let jitter = rng.gen_range(0.8..1.2);
        set.push(
            p,
            orientation,
            Vec3::new(splat_size * jitter, splat_size * 0.3, splat_size / jitter),
            opacity,
            clamp_color(color(&p)),
        );
    }
    set
}

fn clamp_color(c: Vec3) -> Vec3 {
    c.map(|v| v.clamp(0.0, 1.0))
}

/// Skin-like color with a position-dependent pattern so that misaligned
/// renders differ visibly.
pub fn hand_color(p: &Vec3) -> Vec3 {
    let base = Vec3::new(0.86, 0.62, 0.50);
    let wave = (p.x * 157.0 + 1.0).sin() * (p.y * 191.0).cos();
    let band = (p.y * 70.0 + p.z * 90.0).sin();
    base + Vec3::new(0.12 * wave, 0.10 * band, 0.08 * (wave - band))
}

/// Hand Gaussians on the rest-pose surface of `rig`.
pub fn toy_hand_gaussians(rig: &HandRig, count: usize, seed: u64) -> GaussianSet {
    sample_mesh_gaussians(&rig.template_vertices, &rig.faces, count, 0.004, 0.85, seed, hand_color)
}

/// A checkered sphere of Gaussians.
pub fn sphere_object_gaussians(center: Vec3, radius: f64, count: usize, seed: u64) -> GaussianSet {
    let mesh = TriangleMesh::uv_sphere(center, radius, 24, 16);
    sample_mesh_gaussians(&mesh.vertices, &mesh.faces, count, radius * 0.12, 0.9, seed, move |p| {
        let d = (p - center) / radius;
        let checker = ((d.x * 3.0).floor() + (d.y * 3.0).floor() + (d.z * 3.0).floor()) as i64;
        if checker.rem_euclid(2) == 0 {
            Vec3::new(0.15, 0.35, 0.85)
        } else {
            Vec3::new(0.95, 0.85, 0.2)
        }
    })
}

/// `count` cameras on a circle of `radius` around `center` in the plane
/// `y = center.y + height`, all looking at `center`.
pub fn orbit_cameras(center: Vec3, radius: f64, height: f64, count: usize, focal: f64, size: usize) -> Vec<Camera> {
    (0..count)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / count as f64;
            let eye = center + Vec3::new(radius * theta.sin(), height, -radius * theta.cos());
            Camera::look_at(eye, center, Vec3::y(), focal, size, size)
        })
        .collect()
}

/// Everything needed for a synthetic grasp: a rig, its hand cloud, a sphere
/// touched by three fingertips of the ground-truth pose, and cameras around
/// it.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub rig: HandRig,
    pub hand: GaussianSet,
    pub object: GaussianSet,
    pub object_mesh: TriangleMesh,
    pub cameras: Vec<Camera>,
    pub truth: HandPose,
}

pub const TOY_OBJECT_RADIUS: f64 = 0.041;

/// Builds a [`ToyScene`] with `views` cameras of `size`×`size` pixels.
pub fn toy_scene(hand_count: usize, object_count: usize, views: usize, size: usize, seed: u64) -> ToyScene {
    let rig = toy_hand_rig();
    let truth = toy_grasp_pose();
    let hand = toy_hand_gaussians(&rig, hand_count, seed);
    let center = truth.global_rotation * Vec3::new(0.008, 0.12, -0.085) + truth.translation;
    let object = sphere_object_gaussians(center, TOY_OBJECT_RADIUS, object_count, seed.wrapping_add(1));
    let object_mesh = TriangleMesh::uv_sphere(center, TOY_OBJECT_RADIUS, 24, 16);
    let look = truth.global_rotation * Vec3::new(0.005, 0.08, -0.03) + truth.translation;
    let focal = 1.4 * size as f64;
    let cameras = orbit_cameras(look, 0.3, 0.08, views, focal, size);
    ToyScene {
        rig,
        hand,
        object,
        object_mesh,
        cameras,
        truth,
    }
}

/// Turns the wrist by `angle` radians about a random axis and shifts it by
/// `distance` in a random direction.
pub fn perturb_wrist(pose: &HandPose, angle: f64, distance: f64, rng: &mut impl Rng) -> HandPose {
    let mut out = pose.clone();
    out.global_rotation = random_rotation(rng, angle) * pose.global_rotation;
    out.translation += random_unit(rng) * distance;
    out
}

/// Rotation of `angle` radians about a random axis.
pub fn random_rotation(rng: &mut impl Rng, angle: f64) -> Mat3 {
    rotation_about(&random_unit(rng), angle)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
