//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use handsplat_core::geometry::{point_triangle_distance, MeshIndex, TriangleMesh};
use handsplat_core::grasp_eval::{finger_contacts, ObjectSurface};
use handsplat_core::hand_rig::{forward_kinematics, skin_mesh, HandPose, HandRig};
use handsplat_core::image::Image;
use handsplat_core::io;
use handsplat_core::losses::{
    mano_losses, photometric_loss, schedule_alpha, soft_argmax, ssim, HandEstimate, HeatmapStack, LossWeights,
};
use handsplat_core::math::{quat_to_matrix, rotation_about, Mat3, Quat, RigidTransform, Vec3};
use handsplat_core::rasterizer::{render, render_backward, Camera};
use handsplat_core::refiner::{refine_pose, render_pose, wrist_error, RefineConfig, Scene, View, ViewpointSet};
use handsplat_core::splat_binding::{bind_gaussians, deform_gaussians, GaussianSet};
use handsplat_core::synthetic::{perturb_wrist, random_rotation, random_unit, toy_hand_gaussians, toy_hand_rig, toy_scene};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

// ---------------------------------------------------------------------------
// 1. Rasterizer gradients

fn random_scene(rng: &mut ChaCha8Rng, focal: f64) -> GaussianSet {
    let n = rng.gen_range(1..=20);
    let mut set = GaussianSet::default();
    for _ in 0..n {
        let z = rng.gen_range(2.0..4.0);
        let p = Vec3::new(rng.gen_range(-0.35..0.35) * z, rng.gen_range(-0.35..0.35) * z, z);
        let q: Quat = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let px = |rng: &mut ChaCha8Rng| rng.gen_range(0.8..4.0) * z / focal;
        let s = Vec3::new(px(rng), px(rng), px(rng));
        let color = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        set.push(p, q, s, rng.gen_range(0.2..0.95), color);
    }
    set
}

/// The scalar being differentiated: `Σ w ⊙ image` plus the fragment
/// fingerprint of the render.
fn weighted(scene: &GaussianSet, cam: &Camera, bg: &Vec3, w: &Image) -> (f64, u64) {
    let (img, aux) = render(scene, cam, bg).unwrap();
    let v = img.pixels.data.iter().zip(&w.data).map(|(a, b)| a * b).sum();
    (v, aux.fragment_signature())
}

#[derive(Default)]
struct GradStats {
    checks: usize,
    straddles: usize,
    failures: usize,
    worst: f64,
}

impl GradStats {
    /// Relative error with the denominator floored at 1e-6.
    fn record(&mut self, what: &str, analytic: f64, numeric: f64) {
        const REL: f64 = 1e-3;
        const FLOOR: f64 = 1e-6;
        self.checks += 1;
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        if err > REL {
            self.failures += 1;
            if std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
                eprintln!("{what}: analytic {analytic:e} numeric {numeric:e}");
            }
        }
        self.worst = self.worst.max(err);
    }
}

/// Five-point central difference, shrinking the step while any probe sees a
/// different fragment set than the base render. Returns `None` if every
/// step straddles a cutoff.
fn central_difference(
    scene: &GaussianSet,
    cam: &Camera,
    bg: &Vec3,
    w: &Image,
    base_sig: u64,
    h0: f64,
    apply: &dyn Fn(&mut GaussianSet, f64),
) -> Option<f64> {
    let mut h = h0;
    'step: for _ in 0..4 {
        let mut f = [0.0; 4];
        for (slot, offset) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
            let mut probe = scene.clone();
            apply(&mut probe, offset * h);
            let (v, sig) = weighted(&probe, cam, bg, w);
            if sig != base_sig {
                h *= 0.1;
                continue 'step;
            }
            f[slot] = v;
        }
        return Some((-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h));
    }
    None
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let focal = 32.0;
    let cam = Camera {
        fx: focal,
        fy: focal,
        cx: 16.0,
        cy: 16.0,
        world_to_camera: RigidTransform::identity(),
        width: 32,
        height: 32,
        near_clip: 0.1,
    };
    let mut stats = GradStats::default();
    for scene_id in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + scene_id);
        let scene = random_scene(&mut rng, focal);
        let bg = Vec3::new(rng.gen(), rng.gen(), rng.gen());
        let w = Image::from_data(32, 32, (0..32 * 32 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let (img, aux) = render(&scene, &cam, &bg).unwrap();
        let base_sig = aux.fragment_signature();
        let _ = img;
        let g = render_backward(&aux, &scene, &cam, &w).unwrap();
        for i in 0..scene.len() {
            let mut check = |name: &str, analytic: f64, h: f64, apply: &dyn Fn(&mut GaussianSet, f64)| {
                match central_difference(&scene, &cam, &bg, &w, base_sig, h, apply) {
                    Some(numeric) => stats.record(&format!("scene {scene_id} gaussian {i} {name}"), analytic, numeric),
                    None => stats.straddles += 1,
                }
            };
            for k in 0..3 {
                check("position", g.d_positions[i][k], 1e-4, &|s, h| s.positions[i][k] += h);
                check("scale", g.d_scales[i][k], 1e-4, &|s, h| s.scales[i][k] += h);
                check("color", g.d_colors[i][k], 1e-4, &|s, h| s.colors[i][k] += h);
            }
            for k in 0..4 {
                check("orientation", g.d_orientations[i][k], 1e-4, &|s, h| s.orientations[i][k] += h);
            }
            check("opacity", g.d_opacities[i], 1e-4, &|s, h| s.opacities[i] += h);
        }
    }
    let elapsed = start.elapsed();
    // A probe that straddles a cutoff at every step size has no derivative to
    // compare; those are reported and must stay rare.
    let straddle_ok = stats.straddles * 100 <= stats.checks;
    let pass = stats.failures == 0 && straddle_ok && within(elapsed, Duration::from_secs(120));
    outcome(
        pass,
        format!(
            "50 scenes, {} gradient entries, {} failures, worst rel err {:.2e}, {} skipped at cutoffs, {:.1} s",
            stats.checks,
            stats.failures,
            stats.worst,
            stats.straddles,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Binding identity

fn criterion_2() -> Outcome {
    let rig = toy_hand_rig();
    let hand = toy_hand_gaussians(&rig, 5000, 7);
    let start = Instant::now();
    let table = bind_gaussians(&hand, &rig).unwrap();
    let back = deform_gaussians(&table, &rig.template_vertices, &rig.faces).unwrap();
    let elapsed = start.elapsed();
    let mut pos: f64 = 0.0;
    let mut scale: f64 = 0.0;
    let mut min_dot: f64 = 1.0;
    for i in 0..hand.len() {
        pos = pos.max((back.positions[i] - hand.positions[i]).amax());
        scale = scale.max((back.scales[i] - hand.scales[i]).amax());
        let (a, b) = (back.orientations[i], hand.orientations[i]);
        let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]).abs();
        min_dot = min_dot.min(dot);
    }
    let pass = pos <= 1e-6 && scale <= 1e-6 && min_dot >= 1.0 - 1e-6 && within(elapsed, Duration::from_secs(5));
    outcome(
        pass,
        format!(
            "5000 Gaussians, max pos err {pos:.1e}, max scale err {scale:.1e}, min |q·q'| 1-{:.1e}, {:.2} s",
            1.0 - min_dot,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. Rigid equivariance through the pose

fn deform_at(rig: &HandRig, table: &handsplat_core::BindingTable, pose: &HandPose) -> GaussianSet {
    let verts = skin_mesh(rig, &forward_kinematics(rig, pose).unwrap()).unwrap();
    deform_gaussians(table, &verts, &rig.faces).unwrap()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let rig = toy_hand_rig();
    let hand = toy_hand_gaussians(&rig, 2000, 3);
    let table = bind_gaussians(&hand, &rig).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst_pos: f64 = 0.0;
    let mut worst_rot: f64 = 0.0;
    let bases = [HandPose::identity(rig.num_joints()), handsplat_core::synthetic::toy_grasp_pose()];
    for m in 0..20 {
        let base = &bases[m % 2];
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let r = random_rotation(&mut rng, angle);
        let s = random_unit(&mut rng) * rng.gen_range(0.0..0.5);
        let reference = deform_at(&rig, &table, base);
        let moved = deform_at(&rig, &table, &base.rigidly_moved(&r, &s));
        for i in 0..reference.len() {
            worst_pos = worst_pos.max((moved.positions[i] - (r * reference.positions[i] + s)).amax());
            let want = r * quat_to_matrix(&reference.orientations[i]);
            worst_rot = worst_rot.max((quat_to_matrix(&moved.orientations[i]) - want).amax());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst_pos <= 1e-9 && worst_rot <= 1e-6 && within(elapsed, Duration::from_secs(5));
    outcome(
        pass,
        format!(
            "20 motions x 2000 Gaussians, max pos err {worst_pos:.1e}, max rot err {worst_rot:.1e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Loss arithmetic

fn estimate(nv: usize, nj: usize) -> HandEstimate {
    HandEstimate {
        vertices: vec![Vec3::zeros(); nv],
        joints: vec![Vec3::zeros(); 21],
        pose: HandPose::identity(nj),
    }
}

fn criterion_4() -> Outcome {
    let w = LossWeights::default();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut expect = |name: &str, got: f64, want: f64| {
        let ok = (got - want).abs() <= 1e-12;
        pass &= ok;
        if !ok {
            notes.push(format!("{name}: {got} vs {want}"));
        }
    };

    let truth = estimate(768, 21);
    let b = mano_losses(&truth.clone(), &truth, &w).unwrap();
    for (name, v) in [("verts", b.verts), ("joints", b.joints), ("pose", b.pose), ("transl", b.transl), ("reg", b.reg), ("mano", b.mano)] {
        expect(name, v, 0.0);
    }

    let mut pred = estimate(768, 21);
    pred.vertices[100] += Vec3::new(1.0, 0.0, 0.0);
    let b = mano_losses(&pred, &truth, &w).unwrap();
    expect("single vertex", b.verts, 1e-4 / 768.0);
    expect("single vertex mano", b.mano, 1e-4 / 768.0);

    let mut pred = estimate(768, 21);
    pred.pose.joint_rotations[5] = rotation_about(&Vec3::z(), std::f64::consts::PI);
    let b = mano_losses(&pred, &truth, &w).unwrap();
    expect("half-turn reg", b.reg, 8.0 / 21.0);
    expect("half-turn pose", b.pose, 10.0 * 8.0 / 21.0);
    expect("half-turn mano", b.mano, 11.0 * 8.0 / 21.0);

    let a0 = schedule_alpha(0, 50).unwrap();
    let a1 = schedule_alpha(50, 50).unwrap();
    let endpoints = a0 == 1.0 && a1 == 0.0;

    let zeros = Image::zeros(32, 32);
    let ones = Image::filled(32, 32, Vec3::new(1.0, 1.0, 1.0));
    let c1 = 0.01f64.powi(2);
    let want = 0.8 + 0.2 * (1.0 - c1 / (1.0 + c1));
    let photo = photometric_loss(&zeros, &ones, 0.8).unwrap();
    let photo_ok = (photo - 0.99998).abs() <= 1e-4 && (photo - want).abs() <= 1e-9;

    let all = pass && endpoints && photo_ok;
    let mut detail = format!("mano examples exact to 1e-12, alpha(0)={a0}, alpha(last)={a1}, constant-image loss {photo:.6}");
    if !notes.is_empty() {
        detail.push_str(&format!(" [{}]", notes.join("; ")));
    }
    outcome(all, detail)
}

// ---------------------------------------------------------------------------
// 5. Synthetic pose recovery

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let scene = toy_scene(2000, 2000, 4, 128, 1);
    let binding = bind_gaussians(&scene.hand, &scene.rig).unwrap();
    let config = RefineConfig::default();
    let s = Scene {
        rig: &scene.rig,
        binding: &binding,
        object: &scene.object,
    };
    let views: Vec<View> = scene
        .cameras
        .iter()
        .map(|c| View {
            camera: c.clone(),
            target: render_pose(&s, &scene.truth, c, &config.background, &config.raster).unwrap(),
        })
        .collect();
    let mut recovered = 0;
    let mut max_iters = 0;
    let mut errors = Vec::new();
    for trial in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let init = perturb_wrist(&scene.truth, 5f64.to_radians(), 0.01, &mut rng);
        let set = ViewpointSet::new(views.clone(), trial).unwrap();
        let report = refine_pose(&init, &scene.rig, &binding, &scene.object, &set, &config).unwrap();
        let (angle, dist) = wrist_error(&report.pose, &scene.truth);
        if angle.to_degrees() <= 1.0 && dist <= 0.002 && report.iterations <= 300 {
            recovered += 1;
        }
        max_iters = max_iters.max(report.iterations);
        errors.push(format!("{:.2}°/{:.2}mm", angle.to_degrees(), dist * 1e3));
    }
    let elapsed = start.elapsed();
    let pass = recovered >= 8 && max_iters <= 300 && within(elapsed, Duration::from_secs(600));
    outcome(
        pass,
        format!(
            "{recovered}/10 trials within 1°/2 mm, max {max_iters} iterations, {:.1} s [{}]",
            elapsed.as_secs_f64(),
            errors.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. SSIM

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_data(w, h, (0..w * h * 3).map(|_| rng.gen()).collect()).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut self_err: f64 = 0.0;
    let mut sym_err: f64 = 0.0;
    for _ in 0..10 {
        let (w, h) = (rng.gen_range(8..40), rng.gen_range(8..40));
        let a = random_image(&mut rng, w, h);
        let b = random_image(&mut rng, w, h);
        self_err = self_err.max((ssim(&a, &a).unwrap() - 1.0).abs());
        sym_err = sym_err.max((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs());
    }
    let c1 = 0.01f64.powi(2);
    let constant = ssim(&Image::zeros(24, 24), &Image::filled(24, 24, Vec3::new(1.0, 1.0, 1.0))).unwrap();
    let const_err = (constant - c1 / (1.0 + c1)).abs();
    let pass = self_err <= 1e-12 && sym_err <= 1e-12 && const_err <= 1e-6;
    outcome(
        pass,
        format!("self-similarity err {self_err:.1e}, symmetry err {sym_err:.1e}, constant case {constant:.6e} (err {const_err:.1e})"),
    )
}

// ---------------------------------------------------------------------------
// 7. Soft-argmax

fn single(rows: usize, cols: usize, values: Vec<f64>, beta: f64) -> [f64; 2] {
    soft_argmax(&HeatmapStack { rows, cols, values, beta: vec![beta] }).unwrap()[0]
}

fn brute_soft_argmax(rows: usize, cols: usize, values: &[f64], beta: f64) -> [f64; 2] {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| (beta * (v - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    let mut p = [0.0; 2];
    for u in 0..rows {
        for v in 0..cols {
            p[0] += e[u * cols + v] / z * u as f64;
            p[1] += e[u * cols + v] / z * v as f64;
        }
    }
    p
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut delta = vec![0.0; 8 * 8];
    delta[3 * 8 + 5] = 1e6;
    let p = single(8, 8, delta, 1.0);
    let delta_ok = (p[0] - 3.0).abs() <= 1e-6 && (p[1] - 5.0).abs() <= 1e-6;
    notes.push(format!("delta ({:.3}, {:.3})", p[0], p[1]));

    let p = single(2, 2, vec![0.3; 4], 1.0);
    let uniform_ok = (p[0] - 0.5).abs() <= 1e-12 && (p[1] - 0.5).abs() <= 1e-12;
    notes.push(format!("uniform ({:.3}, {:.3})", p[0], p[1]));

    let mut two = vec![0.0; 10 * 12];
    two[2 * 12 + 9] = 1.0;
    two[7 * 12 + 3] = 0.8;
    let mut two_ok = true;
    for beta in [1.0, 10.0, 100.0, 1000.0] {
        let got = single(10, 12, two.clone(), beta);
        let want = brute_soft_argmax(10, 12, &two, beta);
        two_ok &= (got[0] - want[0]).abs() <= 1e-9 && (got[1] - want[1]).abs() <= 1e-9;
    }
    let sharp = single(10, 12, two, 1000.0);
    two_ok &= (sharp[0] - 2.0).abs() <= 1e-6 && (sharp[1] - 9.0).abs() <= 1e-6;
    notes.push(format!("two-peak beta=1000 ({:.4}, {:.4})", sharp[0], sharp[1]));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut outside = 0;
    for _ in 0..1000 {
        let (rows, cols) = (rng.gen_range(1..16), rng.gen_range(1..16));
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let beta = 10f64.powf(rng.gen_range(-3.0..3.0));
        let p = single(rows, cols, values, beta);
        if !(p[0] >= 0.0 && p[0] <= (rows - 1) as f64 && p[1] >= 0.0 && p[1] <= (cols - 1) as f64) {
            outside += 1;
        }
    }
    notes.push(format!("{outside}/1000 random maps outside the grid"));
    outcome(delta_ok && uniform_ok && two_ok && outside == 0, notes.join(", "))
}

// ---------------------------------------------------------------------------
// 8. Grasp proxy

/// Parity of ray crossings along an irrational direction.
fn inside_by_ray(mesh: &TriangleMesh, p: &Vec3) -> bool {
    let dir = Vec3::new(0.5773, 0.6124, 0.5399).normalize();
    let mut hits = 0;
    for f in 0..mesh.faces.len() {
        let (a, b, c) = mesh.triangle(f);
        let e1 = b - a;
        let e2 = c - a;
        let h = dir.cross(&e2);
        let det = e1.dot(&h);
        if det.abs() < 1e-15 {
            continue;
        }
        let s = p - a;
        let u = s.dot(&h) / det;
        let q = s.cross(&e1);
        let v = dir.dot(&q) / det;
        let t = e2.dot(&q) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
            hits += 1;
        }
    }
    hits % 2 == 1
}

fn brute_signed(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    let d = (0..mesh.faces.len())
        .map(|f| {
            let (a, b, c) = mesh.triangle(f);
            point_triangle_distance(p, &a, &b, &c)
        })
        .fold(f64::INFINITY, f64::min);
    if inside_by_ray(mesh, p) {
        -d
    } else {
        d
    }
}

fn criterion_8() -> Outcome {
    let rig = toy_hand_rig();
    let grasp = handsplat_core::synthetic::toy_grasp_pose();
    let scene = toy_scene(10, 10, 1, 16, 0);
    let center = scene.object_mesh.vertices.iter().sum::<Vec3>() / scene.object_mesh.vertices.len() as f64;
    let mesh = TriangleMesh::uv_sphere(center, 0.04, 25, 21);
    let n_tri = mesh.faces.len();
    let index = MeshIndex::build(mesh.clone()).unwrap();
    let surface = ObjectSurface::Mesh(index.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut inside_points = 0;
    let mut report_mismatch = 0;
    for _ in 0..20 {
        let angle = rng.gen_range(0.0..0.5);
        let r = random_rotation(&mut rng, angle);
        let pose = HandPose {
            global_rotation: r * grasp.global_rotation,
            translation: grasp.translation + random_unit(&mut rng) * rng.gen_range(0.0..0.02),
            joint_rotations: grasp.joint_rotations.clone(),
        };
        let verts = skin_mesh(&rig, &forward_kinematics(&rig, &pose).unwrap()).unwrap();
        let brute: Vec<f64> = verts.iter().map(|p| brute_signed(&mesh, p)).collect();
        for (p, b) in verts.iter().zip(&brute) {
            worst = worst.max((index.signed_distance(p) - b).abs());
            inside_points += (*b < 0.0) as usize;
        }
        let report = finger_contacts(&verts, &rig, &surface, 0.005, 0.002).unwrap();
        for (f, group) in rig.fingertip_groups.iter().enumerate() {
            let want = group.iter().map(|&v| brute[v]).fold(f64::INFINITY, f64::min);
            if (report.min_distance[f] - want).abs() > 1e-9 || report.contacts[f] != (want <= 0.005) {
                report_mismatch += 1;
            }
        }
        let pen = brute.iter().map(|d| (-d).max(0.0)).fold(0.0, f64::max);
        if (report.max_penetration.unwrap() - pen).abs() > 1e-9 {
            report_mismatch += 1;
        }
    }
    let equivalence = worst <= 1e-9 && report_mismatch == 0 && inside_points > 0;

    // Constructed scenarios against a 0.1 m cube centered at the origin.
    let cube = TriangleMesh::cube(Vec3::zeros(), 0.1);
    let cube_surface = ObjectSurface::Mesh(MeshIndex::build(cube).unwrap());
    let far: Vec<Vec3> = rig.template_vertices.iter().map(|v| v + Vec3::new(1.0, 1.0, 1.0)).collect();
    let r_far = finger_contacts(&far, &rig, &cube_surface, 0.005, 0.002).unwrap();
    let far_ok = r_far.contact_count() == 0 && !r_far.success;

    let mut touching = far.clone();
    touching[rig.fingertip_groups[0][0]] = Vec3::new(0.05, 0.0, 0.0);
    touching[rig.fingertip_groups[1][0]] = Vec3::new(0.0, 0.05, 0.01);
    let r_touch = finger_contacts(&touching, &rig, &cube_surface, 0.005, 0.002).unwrap();
    let touch_ok = r_touch.contact_count() == 2 && r_touch.success;

    let mut pressing = touching.clone();
    pressing[rig.fingertip_groups[1][0]] = Vec3::new(0.0, 0.047, 0.01);
    let r_press = finger_contacts(&pressing, &rig, &cube_surface, 0.005, 0.002).unwrap();
    let pen = r_press.max_penetration.unwrap();
    let press_ok = r_press.contact_count() == 2 && !r_press.success && (pen - 0.003).abs() <= 1e-9;

    outcome(
        equivalence && far_ok && touch_ok && press_ok,
        format!(
            "20 poses vs {n_tri}-triangle mesh: max |sd - brute| {worst:.1e} ({inside_points} inside samples, {report_mismatch} report mismatches); far {} touching {} pressing {} (penetration {:.4} m)",
            if far_ok { "ok" } else { "WRONG" },
            if touch_ok { "ok" } else { "WRONG" },
            if press_ok { "ok" } else { "WRONG" },
            pen
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. CLI determinism and golden image

fn cli(args: &[String]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["handsplat".to_string()];
    argv.extend_from_slice(args);
    let code = handsplat_cli::run(argv, &mut out, &mut err);
    (code, out)
}

fn strings(args: &[&str]) -> Vec<String> {
    args.iter().map(|s| s.to_string()).collect()
}

fn path(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let golden: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/fixtures/golden");

    let mut mismatched = Vec::new();
    let mut failed = Vec::new();
    // `{k}` is replaced by the run number; outputs land in per-run files.
    let mut twice = |name: &str, args: Vec<String>, output: Option<&str>| {
        let mut runs = Vec::new();
        for k in 0..2 {
            let argv: Vec<String> = args.iter().map(|a| a.replace("{k}", &k.to_string())).collect();
            let (code, stdout) = cli(&argv);
            let file = output.map(|o| {
                let p = o.replace("{k}", &k.to_string());
                if Path::new(&p).is_dir() {
                    let mut all = Vec::new();
                    let mut names: Vec<_> = std::fs::read_dir(&p).unwrap().map(|e| e.unwrap().path()).collect();
                    names.sort();
                    for n in names {
                        all.extend(std::fs::read(n).unwrap());
                    }
                    all
                } else {
                    std::fs::read(&p).unwrap_or_default()
                }
            });
            runs.push((code, stdout, file));
        }
        if runs[0].0 > 3 {
            failed.push(format!("{name} exited {}", runs[0].0));
        }
        if runs[0] != runs[1] {
            mismatched.push(name.to_string());
        }
    };

    let toy = |k: &str| path(&root.join(format!("toy{k}")));
    twice(
        "make-toy",
        strings(&["make-toy", "--out-dir", &toy("{k}"), "--hand-gaussians", "500", "--object-gaussians", "500", "--views", "2", "--size", "48", "--seed", "4"]),
        Some(&toy("{k}")),
    );
    let project = root.join("toy0/project.json");
    let p = |name: &str| path(&root.join("toy0").join(name));
    let out = |name: &str| path(&root.join(name));
    twice(
        "bind",
        strings(&["bind", "--rig", &p("rig.json"), "--hand-ply", &p("hand.ply"), "--out", &out("bind{k}"), "--seed", "4"]),
        Some(&out("bind{k}")),
    );
    twice(
        "render",
        strings(&["render", "--config", &path(&project), "--pose", &p("init_pose.json"), "--camera-index", "1", "--out", &out("render{k}.png"), "--seed", "4"]),
        Some(&out("render{k}.png")),
    );
    twice(
        "refine",
        strings(&["refine", "--config", &path(&project), "--init-pose", &p("init_pose.json"), "--out", &out("refine{k}.json"), "--seed", "4"]),
        Some(&out("refine{k}.json")),
    );
    twice(
        "grasp-check",
        strings(&["grasp-check", "--config", &path(&project), "--pose", &p("truth_pose.json"), "--object-mesh", &p("object.obj"), "--seed", "4"]),
        None,
    );

    let rig = toy_hand_rig();
    let pose = handsplat_core::synthetic::toy_grasp_pose();
    let states = forward_kinematics(&rig, &pose).unwrap();
    let est = HandEstimate {
        vertices: skin_mesh(&rig, &states).unwrap(),
        joints: states.joint_positions.clone(),
        pose,
    };
    io::save_hand_estimate(&est, root.join("pred.json")).unwrap();
    io::save_hand_estimate(&estimate_like(&est), root.join("truth.json")).unwrap();
    twice(
        "loss",
        strings(&["loss", "--pred", &out("pred.json"), "--truth", &out("truth.json"), "--epoch", "2", "--epochs", "9", "--seed", "4"]),
        None,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let maps = HeatmapStack {
        rows: 16,
        cols: 16,
        values: (0..21 * 256).map(|_| rng.gen_range(0.0..5.0)).collect(),
        beta: vec![1.0; 21],
    };
    io::save_heatmaps(&maps, root.join("maps.json")).unwrap();
    twice(
        "decode-heatmap",
        strings(&["decode-heatmap", "--in", &out("maps.json"), "--beta", "3", "--seed", "4"]),
        None,
    );

    let (code, _) = cli(&strings(&[
        "render",
        "--config",
        &path(&golden.join("project.json")),
        "--pose",
        &path(&golden.join("rest_pose.json")),
        "--out",
        &out("golden.png"),
    ]));
    let golden_err = if code == 0 {
        io::load_image(root.join("golden.png"))
            .unwrap()
            .max_abs_diff(&io::load_image(golden.join("golden.png")).unwrap())
    } else {
        f64::INFINITY
    };
    let golden_ok = golden_err <= 1.0 / 255.0;
    let pass = mismatched.is_empty() && failed.is_empty() && golden_ok;
    outcome(
        pass,
        format!(
            "7 subcommands run twice: {} differing, {} failing; golden render max err {:.4} (limit {:.4})",
            if mismatched.is_empty() { "none".to_string() } else { mismatched.join(" ") },
            if failed.is_empty() { "none".to_string() } else { failed.join(" ") },
            golden_err,
            1.0 / 255.0
        ),
    )
}

fn estimate_like(e: &HandEstimate) -> HandEstimate {
    let mut t = e.clone();
    t.pose.translation += Vec3::new(0.01, 0.0, -0.02);
    t.pose.joint_rotations[3] = Mat3::identity();
    t
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("rasterizer gradient check", criterion_1),
        ("binding identity", criterion_2),
        ("rigid equivariance", criterion_3),
        ("loss arithmetic", criterion_4),
        ("synthetic pose recovery", criterion_5),
        ("SSIM conformance", criterion_6),
        ("soft-argmax", criterion_7),
        ("grasp proxy", criterion_8),
        ("CLI determinism and golden image", criterion_9),
    ];
    // `cargo test -- <filter>` style selection by criterion number.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!("criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
