//! Render-and-compare refinement of a hand pose.
//!
//! Each iteration picks one viewpoint at random, poses and skins the hand,
//! moves the bound Gaussians, merges them with the object cloud, renders,
//! scores the image against the target and back-propagates the photometric
//! loss through rasterizer, deformation, skinning and kinematics into the
//! pose. Rotations are updated in the tangent space at the current estimate
//! with bias-corrected Adam and re-orthonormalized after every step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hand_rig::{
    forward_kinematics, forward_kinematics_backward, skin_mesh, skin_mesh_backward, HandPose, HandRig,
    PoseTangent,
};
use crate::image::Image;
use crate::losses::{photometric_loss, photometric_loss_with_grad};
use crate::math::{rotation_angle_between, Vec3};
use crate::rasterizer::{render_backward, render_with, Camera, RasterConfig};
use crate::splat_binding::{compose_scene, deform_gaussians, deform_gaussians_backward, BindingTable, DeformGrad, GaussianSet};

/// A camera and the image it should see.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub target: Image,
}

/// Predefined viewpoints around the object plus the sampling seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointSet {
    pub views: Vec<View>,
    pub seed: u64,
}

impl ViewpointSet {
    pub fn new(views: Vec<View>, seed: u64) -> Result<Self> {
        let set = Self { views, seed };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::validation("viewpoint set is empty"));
        }
        for (i, v) in self.views.iter().enumerate() {
            v.camera.validate()?;
            if v.target.width != v.camera.width || v.target.height != v.camera.height {
                return Err(Error::structural(format!(
                    "view {i}: target is {}×{}, camera is {}×{}",
                    v.target.width, v.target.height, v.camera.width, v.camera.height
                )));
            }
        }
        Ok(())
    }
}

/// Uniform choice of a view, deterministic in `(seed, iteration)`.
pub fn sample_viewpoint(set: &ViewpointSet, iteration: u64) -> Result<usize> {
    if set.views.is_empty() {
        return Err(Error::validation("viewpoint set is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(set.seed);
    rng.set_stream(iteration);
    Ok(rng.gen_range(0..set.views.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Step size for rotations, radians in the tangent space.
    pub lr_rotation: f64,
    /// Step size for the wrist translation, meters.
    pub lr_translation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop when the sum over views of the lowest loss seen so far has
    /// dropped by less than this over the last `convergence_window`
    /// iterations.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    /// Stop immediately once a view's loss is at or below this.
    pub loss_tolerance: f64,
    pub lambda_1: f64,
    /// Also refine the joint rotations below the root; otherwise only the
    /// wrist moves.
    pub optimize_joints: bool,
    pub background: Vec3,
    pub raster: RasterConfig,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            lr_rotation: 1e-2,
            lr_translation: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            convergence_tol: 1e-6,
            convergence_window: 20,
            loss_tolerance: 1e-6,
            lambda_1: 0.8,
            optimize_joints: true,
            background: Vec3::zeros(),
            raster: RasterConfig::default(),
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        if !(self.lr_rotation >= 0.0 && self.lr_translation >= 0.0) {
            return Err(Error::validation("learning rates must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::validation("adam moments must lie in [0, 1) and epsilon be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda_1) {
            return Err(Error::validation("lambda_1 must lie in [0, 1]"));
        }
        if self.convergence_window == 0 {
            return Err(Error::validation("convergence window must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineReport {
    pub pose: HandPose,
    /// Photometric loss of the sampled view at every evaluated iteration.
    pub loss_trace: Vec<f64>,
    /// View sampled at every evaluated iteration.
    pub view_trace: Vec<usize>,
    /// Loss of every view at the final pose.
    pub per_view_loss: Vec<f64>,
    pub iterations: usize,
    /// Iterations abandoned because a posed face degenerated.
    pub skipped_iterations: usize,
    pub converged: bool,
    pub diverged: bool,
}

/// The static parts of a refinement problem.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub rig: &'a HandRig,
    pub binding: &'a BindingTable,
    pub object: &'a GaussianSet,
}

/// Renders the composed hand+object scene for `pose`.
pub fn render_pose(scene: &Scene, pose: &HandPose, camera: &Camera, background: &Vec3, raster: &RasterConfig) -> Result<Image> {
    let states = forward_kinematics(scene.rig, pose)?;
    let verts = skin_mesh(scene.rig, &states)?;
    let hand = deform_gaussians(scene.binding, &verts, &scene.rig.faces)?;
    let (img, _) = render_with(&compose_scene(&hand, scene.object), camera, background, raster)?;
    Ok(img.pixels)
}

/// Photometric loss of one view and, when requested, its gradient in the
/// tangent space of `pose`.
pub fn photometric_objective(
    scene: &Scene,
    pose: &HandPose,
    view: &View,
    config: &RefineConfig,
    want_grad: bool,
) -> Result<(f64, Option<PoseTangent>)> {
    let states = forward_kinematics(scene.rig, pose)?;
    let verts = skin_mesh(scene.rig, &states)?;
    let hand = deform_gaussians(scene.binding, &verts, &scene.rig.faces)?;
    let composed = compose_scene(&hand, scene.object);
    let (img, aux) = render_with(&composed, &view.camera, &config.background, &config.raster)?;
    if !want_grad {
        return Ok((photometric_loss(&img.pixels, &view.target, config.lambda_1)?, None));
    }
    let (loss, d_img) = photometric_loss_with_grad(&img.pixels, &view.target, config.lambda_1)?;
    let grads = render_backward(&aux, &composed, &view.camera, &d_img)?;
    let k = hand.len();
    let deform_grad = DeformGrad {
        positions: grads.d_positions[..k].to_vec(),
        rotations: grads.d_rotations[..k].to_vec(),
        scales: grads.d_scales[..k].to_vec(),
    };
    let d_verts = deform_gaussians_backward(scene.binding, &verts, &scene.rig.faces, &deform_grad)?;
    let joint_grads = skin_mesh_backward(scene.rig, &d_verts)?;
    let pose_grad = forward_kinematics_backward(scene.rig, pose, &states, &joint_grads)?;
    Ok((loss, Some(pose_grad.to_tangent(pose))))
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    fn new(n: usize, config: &RefineConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
        }
    }

    /// Returns the descent step for gradient `g` with per-coordinate rates.
    fn step(&mut self, g: &[f64], lr: &[f64]) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, gi)| {
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * gi;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = self.m[i] / c1;
                let v_hat = self.v[i] / c2;
                -lr[i] * m_hat / (v_hat.sqrt() + self.epsilon)
            })
            .collect()
    }
}

/// Minimizes the photometric loss over the hand pose.
pub fn refine_pose(
    init: &HandPose,
    rig: &HandRig,
    binding: &BindingTable,
    object: &GaussianSet,
    views: &ViewpointSet,
    config: &RefineConfig,
) -> Result<RefineReport> {
    config.validate()?;
    views.validate()?;
    rig.validate()?;
    binding.validate(rig.faces.len())?;
    init.validate(rig.num_joints())?;
    let scene = Scene { rig, binding, object };

    let nj = rig.num_joints();
    let n = 6 + 3 * nj;
    let mut lr = vec![config.lr_rotation; n];
    lr[3..6].fill(config.lr_translation);
    if !config.optimize_joints {
        lr[6..].fill(0.0);
    }
    // The root joint rotation multiplies the global rotation directly, so
    // only the latter is optimized.
    lr[6..9].fill(0.0);
    let mut adam = Adam::new(n, config);

    let mut pose = init.clone();
    let mut last_valid = init.clone();
    let mut step_scale = 1.0;
    let mut report = RefineReport {
        pose: init.clone(),
        loss_trace: Vec::new(),
        view_trace: Vec::new(),
        per_view_loss: Vec::new(),
        iterations: 0,
        skipped_iterations: 0,
        converged: false,
        diverged: false,
    };
    // Lowest loss seen per view, and their sum after every iteration once
    // each view has been seen.
    let mut best: Vec<Option<f64>> = vec![None; views.views.len()];
    let mut best_sum: Vec<Option<f64>> = Vec::new();

    for it in 0..config.max_iterations {
        let v = sample_viewpoint(views, it as u64)?;
        let (loss, grad) = match photometric_objective(&scene, &pose, &views.views[v], config, true) {
            Ok(r) => r,
            Err(Error::DegenerateFace { face, reason }) => {
                log::warn!("iteration {it}: posed face {face} degenerate ({reason}); rolling back");
                report.skipped_iterations += 1;
                pose = last_valid.clone();
                step_scale *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            report.diverged = true;
            pose = last_valid.clone();
            break;
        }
        last_valid = pose.clone();
        let t = report.loss_trace.len();
        report.loss_trace.push(loss);
        report.view_trace.push(v);

        if loss <= config.loss_tolerance {
            report.converged = true;
            break;
        }
        best[v] = Some(best[v].map_or(loss, |b| b.min(loss)));
        best_sum.push(best.iter().copied().sum::<Option<f64>>());
        if let Some(before) = t.checked_sub(config.convergence_window).and_then(|i| best_sum[i]) {
            if before - best_sum[t].expect("sum defined once all views were seen") < config.convergence_tol {
                report.converged = true;
                break;
            }
        }

        let g = grad.expect("gradient requested").to_flat();
        if g.iter().any(|x| !x.is_finite()) {
            report.diverged = true;
            break;
        }
        let scaled: Vec<f64> = lr.iter().map(|r| r * step_scale).collect();
        let step = adam.step(&g, &scaled);
        pose = pose.retract(&PoseTangent::from_flat(&step));
    }

    report.iterations = report.loss_trace.len();
    report.pose = pose;
    report.per_view_loss = views
        .views
        .iter()
        .map(|view| photometric_objective(&scene, &report.pose, view, config, false).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(report)
}

/// Rotation angle (radians) and translation distance (meters) between the
/// wrists of two poses.
pub fn wrist_error(a: &HandPose, b: &HandPose) -> (f64, f64) {
    (
        rotation_angle_between(&a.global_rotation, &b.global_rotation),
        (a.translation - b.translation).norm(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn views(n: usize, seed: u64) -> ViewpointSet {
        let cams = crate::synthetic::orbit_cameras(Vec3::zeros(), 0.5, 0.1, n, 60.0, 8);
        ViewpointSet::new(
            cams.into_iter().map(|camera| View { target: Image::zeros(8, 8), camera }).collect(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn singleton_and_determinism() {
        let one = views(1, 9);
        for it in 0..20 {
            assert_eq!(sample_viewpoint(&one, it).unwrap(), 0);
        }
        let four = views(4, 9);
        for it in 0..20 {
            assert_eq!(sample_viewpoint(&four, it).unwrap(), sample_viewpoint(&four, it).unwrap());
        }
    }

    #[test]
    fn empty_set_is_rejected() {
        let set = ViewpointSet { views: vec![], seed: 0 };
        assert!(sample_viewpoint(&set, 0).is_err());
        assert!(ViewpointSet::new(vec![], 0).is_err());
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        let cfg = RefineConfig::default();
        let mut adam = Adam::new(2, &cfg);
        let s = adam.step(&[3.0, -0.5], &[0.1, 0.2]);
        assert!((s[0] + 0.1).abs() < 1e-6 && (s[1] - 0.2).abs() < 1e-6);
    }
}
