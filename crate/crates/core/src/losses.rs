//! Loss terms and decoding helpers.
//!
//! * hand supervision: vertex, joint, pose, translation and regularization
//!   terms and their sum;
//! * photometric loss `λ₁·L1 + (1 − λ₁)·(1 − SSIM)` with its image gradient;
//! * the cosine schedule that hands weight from the hand terms to the
//!   photometric term over training;
//! * sinusoidal 2D positional encoding and heatmap soft-argmax.

use crate::error::{Error, Result};
use crate::hand_rig::HandPose;
use crate::image::Image;
use crate::math::{Mat3, Vec3};

/// Balance factors of the individual loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_verts: f64,
    pub lambda_joints: f64,
    pub lambda_pose: f64,
    pub lambda_transl: f64,
    pub lambda_reg: f64,
    /// Share of the L1 term in the photometric loss.
    pub lambda_1: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_verts: 1e-4,
            lambda_joints: 1e-4,
            lambda_pose: 10.0,
            lambda_transl: 10.0,
            lambda_reg: 1.0,
            lambda_1: 0.8,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_verts,
            self.lambda_joints,
            self.lambda_pose,
            self.lambda_transl,
            self.lambda_reg,
            self.lambda_1,
        ];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::validation("loss weights must be finite and non-negative"));
        }
        if self.lambda_1 > 1.0 {
            return Err(Error::validation("lambda_1 must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Hand prediction or ground truth fed to [`mano_losses`].
#[derive(Debug, Clone, PartialEq)]
pub struct HandEstimate {
    pub vertices: Vec<Vec3>,
    pub joints: Vec<Vec3>,
    pub pose: HandPose,
}

/// Individual loss values. `img` and `total` are only present when a
/// photometric term was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub verts: f64,
    pub joints: f64,
    pub pose: f64,
    pub transl: f64,
    pub reg: f64,
    pub mano: f64,
    pub img: Option<f64>,
    pub total: Option<f64>,
}

fn mean_sq_dist(a: &[Vec3], b: &[Vec3]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>() / a.len() as f64
}

fn frobenius_sq(m: &Mat3) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Hand supervision terms. Rotation distances are squared Frobenius norms
/// of matrix differences, averaged over the joint rotations.
pub fn mano_losses(pred: &HandEstimate, truth: &HandEstimate, weights: &LossWeights) -> Result<LossBreakdown> {
    weights.validate()?;
    if pred.vertices.len() != truth.vertices.len() {
        return Err(Error::structural(format!(
            "vertex count mismatch: {} vs {}",
            pred.vertices.len(),
            truth.vertices.len()
        )));
    }
    if pred.joints.len() != truth.joints.len() {
        return Err(Error::structural(format!(
            "joint count mismatch: {} vs {}",
            pred.joints.len(),
            truth.joints.len()
        )));
    }
    let nj = pred.pose.joint_rotations.len();
    if nj != truth.pose.joint_rotations.len() || nj == 0 {
        return Err(Error::structural("joint rotation counts differ or are empty"));
    }
    let verts = weights.lambda_verts * mean_sq_dist(&pred.vertices, &truth.vertices);
    let joints = weights.lambda_joints * mean_sq_dist(&pred.joints, &truth.joints);
    let pose = weights.lambda_pose
        * pred
            .pose
            .joint_rotations
            .iter()
            .zip(&truth.pose.joint_rotations)
            .map(|(a, b)| frobenius_sq(&(a - b)))
            .sum::<f64>()
        / nj as f64;
    let transl = weights.lambda_transl * (pred.pose.translation - truth.pose.translation).norm_squared();
    let reg = weights.lambda_reg
        * pred
            .pose
            .joint_rotations
            .iter()
            .map(|h| frobenius_sq(&(Mat3::identity() - h)))
            .sum::<f64>()
        / nj as f64;
    Ok(LossBreakdown {
        verts,
        joints,
        pose,
        transl,
        reg,
        mano: verts + joints + pose + transl + reg,
        img: None,
        total: None,
    })
}

/// Weight of the hand terms at epoch `current` of `last`:
/// `α = ½ (1 + cos(π · current / last))`.
pub fn schedule_alpha(current: u32, last: u32) -> Result<f64> {
    if last == 0 {
        return Err(Error::validation("last epoch must be at least 1"));
    }
    if current > last {
        return Err(Error::validation(format!("epoch {current} is beyond last epoch {last}")));
    }
    Ok(0.5 * (1.0 + (std::f64::consts::PI * current as f64 / last as f64).cos()))
}

/// `α·mano + (1 − α)·img`; returns `(total, α)`.
pub fn combined_loss(mano: f64, img: f64, current: u32, last: u32) -> Result<(f64, f64)> {
    let alpha = schedule_alpha(current, last)?;
    Ok((alpha * mano + (1.0 - alpha) * img, alpha))
}

/// Parameters of the SSIM window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

/// Gaussian blur whose kernel is renormalized over the in-image support, so
/// constant images stay constant up to the borders.
struct WindowFilter {
    kernel: Vec<f64>,
    radius: usize,
    norm_x: Vec<f64>,
    norm_y: Vec<f64>,
    width: usize,
    height: usize,
}

impl WindowFilter {
    fn new(params: &SsimParams, width: usize, height: usize) -> Self {
        let radius = params.window / 2;
        let kernel: Vec<f64> = (0..params.window)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / (2.0 * params.sigma * params.sigma)).exp()
            })
            .collect();
        let norms = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|p| {
                    (0..kernel.len())
                        .filter_map(|k| (p + k).checked_sub(radius).filter(|&q| q < n).map(|_| kernel[k]))
                        .sum()
                })
                .collect()
        };
        Self {
            norm_x: norms(width),
            norm_y: norms(height),
            kernel,
            radius,
            width,
            height,
        }
    }

    /// Separable correlation with the unnormalized kernel and zero padding.
    fn raw(&self, src: &[f64]) -> Vec<f64> {
        let (w, h, r) = (self.width, self.height, self.radius);
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in self.kernel.iter().enumerate() {
                    if let Some(q) = (x + k).checked_sub(r).filter(|&q| q < w) {
                        acc += kv * src[y * w + q];
                    }
                }
                tmp[y * w + x] = acc;
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, kv) in self.kernel.iter().enumerate() {
                    if let Some(q) = (y + k).checked_sub(r).filter(|&q| q < h) {
                        acc += kv * tmp[q * w + x];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    }

    fn apply(&self, src: &[f64]) -> Vec<f64> {
        let mut out = self.raw(src);
        for y in 0..self.height {
            for x in 0..self.width {
                out[y * self.width + x] /= self.norm_x[x] * self.norm_y[y];
            }
        }
        out
    }

    fn apply_transpose(&self, src: &[f64]) -> Vec<f64> {
        let mut scaled = src.to_vec();
        for y in 0..self.height {
            for x in 0..self.width {
                scaled[y * self.width + x] /= self.norm_x[x] * self.norm_y[y];
            }
        }
        // The kernel is symmetric, so correlation is its own transpose.
        self.raw(&scaled)
    }
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over pixels and channels, optionally with its gradient with
/// respect to `a`.
fn ssim_impl(a: &Image, b: &Image, params: &SsimParams, want_grad: bool) -> Result<(f64, Option<Image>)> {
    a.same_shape(b)?;
    let n = a.num_pixels();
    if n == 0 {
        return Err(Error::structural("ssim of an empty image"));
    }
    let filter = WindowFilter::new(params, a.width, a.height);
    let (c1, c2) = (params.c1, params.c2);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::zeros(a.width, a.height));
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let mu_x = filter.apply(&x);
        let mu_y = filter.apply(&y);
        let sq = |v: &[f64]| v.iter().map(|t| t * t).collect::<Vec<_>>();
        let e_xx = filter.apply(&sq(&x));
        let e_yy = filter.apply(&sq(&y));
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let e_xy = filter.apply(&xy);

        let mut g_mu = vec![0.0; n];
        let mut g_xx = vec![0.0; n];
        let mut g_xy = vec![0.0; n];
        for p in 0..n {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let var_x = e_xx[p] - mx * mx;
            let var_y = e_yy[p] - my * my;
            let cov = e_xy[p] - mx * my;
            let n1 = 2.0 * mx * my + c1;
            let n2 = 2.0 * cov + c2;
            let d1 = mx * mx + my * my + c1;
            let d2 = var_x + var_y + c2;
            let s = (n1 * n2) / (d1 * d2);
            total += s;
            if want_grad {
                g_mu[p] = s * (2.0 * my / n1 - 2.0 * my / n2 - 2.0 * mx / d1 + 2.0 * mx / d2);
                g_xx[p] = -s / d2;
                g_xy[p] = 2.0 * s / n2;
            }
        }
        if let Some(grad) = grad.as_mut() {
            let t_mu = filter.apply_transpose(&g_mu);
            let t_xx = filter.apply_transpose(&g_xx);
            let t_xy = filter.apply_transpose(&g_xy);
            let scale = 1.0 / (3 * n) as f64;
            for p in 0..n {
                grad.data[3 * p + c] = scale * (t_mu[p] + 2.0 * x[p] * t_xx[p] + y[p] * t_xy[p]);
            }
        }
    }
    Ok((total / (3 * n) as f64, grad))
}

/// Mean structural similarity (11×11 Gaussian window, σ = 1.5,
/// C1 = 0.01², C2 = 0.03²) averaged over the three channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_impl(a, b, &SsimParams::default(), false).map(|r| r.0)
}

pub fn ssim_with(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    ssim_impl(a, b, params, false).map(|r| r.0)
}

/// SSIM and its gradient with respect to the first image.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    let (v, g) = ssim_impl(a, b, &SsimParams::default(), true)?;
    Ok((v, g.expect("gradient requested")))
}

fn check_lambda(lambda_1: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda_1) {
        return Err(Error::validation(format!("lambda_1 = {lambda_1} outside [0, 1]")));
    }
    Ok(())
}

/// `λ₁ · mean|r − t| + (1 − λ₁) · (1 − SSIM(r, t))`.
pub fn photometric_loss(rendered: &Image, target: &Image, lambda_1: f64) -> Result<f64> {
    check_lambda(lambda_1)?;
    rendered.same_shape(target)?;
    let l1 = mean_abs_diff(rendered, target);
    if lambda_1 == 1.0 {
        return Ok(l1);
    }
    Ok(lambda_1 * l1 + (1.0 - lambda_1) * (1.0 - ssim(rendered, target)?))
}

fn mean_abs_diff(a: &Image, b: &Image) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64
}

/// Photometric loss and its gradient with respect to `rendered`.
pub fn photometric_loss_with_grad(rendered: &Image, target: &Image, lambda_1: f64) -> Result<(f64, Image)> {
    check_lambda(lambda_1)?;
    rendered.same_shape(target)?;
    let count = rendered.data.len() as f64;
    let l1 = mean_abs_diff(rendered, target);
    let mut grad = Image::zeros(rendered.width, rendered.height);
    for (g, (r, t)) in grad.data.iter_mut().zip(rendered.data.iter().zip(&target.data)) {
        let d = r - t;
        *g = if d > 0.0 {
            lambda_1 / count
        } else if d < 0.0 {
            -lambda_1 / count
        } else {
            0.0
        };
    }
    if lambda_1 == 1.0 {
        return Ok((l1, grad));
    }
    let (s, ds) = ssim_with_grad(rendered, target)?;
    for (g, d) in grad.data.iter_mut().zip(&ds.data) {
        *g -= (1.0 - lambda_1) * d;
    }
    Ok((lambda_1 * l1 + (1.0 - lambda_1) * (1.0 - s), grad))
}

/// Sinusoidal encoding of a 2D coordinate. For each axis and each
/// `i ∈ [0, D/2)` it emits `sin(v / τ^(2i/D))` then `cos(v / τ^((2i+1)/D))`;
/// the x block (length `D`) precedes the y block.
pub fn positional_encoding(x: f64, y: f64, dim: usize, tau: f64) -> Result<Vec<f64>> {
    if dim < 2 || !dim.is_multiple_of(2) {
        return Err(Error::validation(format!("encoding dimension {dim} must be even and >= 2")));
    }
    if !(tau > 0.0) {
        return Err(Error::validation("temperature must be positive"));
    }
    let d = dim as f64;
    let mut out = Vec::with_capacity(2 * dim);
    for v in [x, y] {
        for i in 0..dim / 2 {
            let i = i as f64;
            out.push((v / tau.powf(2.0 * i / d)).sin());
            out.push((v / tau.powf((2.0 * i + 1.0) / d)).cos());
        }
    }
    Ok(out)
}

/// Per-joint score maps of size `rows × cols` (`u` indexes rows, `v`
/// columns) with their softmax sharpness.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    pub rows: usize,
    pub cols: usize,
    /// Joint-major, then row-major.
    pub values: Vec<f64>,
    pub beta: Vec<f64>,
}

impl HeatmapStack {
    pub fn num_maps(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::validation("heatmap grid must be at least 1×1"));
        }
        if self.values.len() != self.beta.len() * self.rows * self.cols {
            return Err(Error::structural(format!(
                "heatmap has {} values, expected {}×{}×{}",
                self.values.len(),
                self.beta.len(),
                self.rows,
                self.cols
            )));
        }
        if self.beta.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(Error::validation("beta must be positive and finite"));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("heatmap value {i} is not finite")));
        }
        Ok(())
    }
}

/// Expected `(u, v)` under `softmax(βⱼ Mⱼ)` taken jointly over the grid.
pub fn soft_argmax(stack: &HeatmapStack) -> Result<Vec<[f64; 2]>> {
    stack.validate()?;
    let cells = stack.rows * stack.cols;
    Ok(stack
        .values
        .chunks(cells)
        .zip(&stack.beta)
        .map(|(map, beta)| {
            let peak = map.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = map.iter().map(|v| (beta * v - peak).exp()).collect();
            let z: f64 = weights.iter().sum();
            let (mut u, mut v) = (0.0, 0.0);
            for (i, w) in weights.iter().enumerate() {
                u += w * (i / stack.cols) as f64;
                v += w * (i % stack.cols) as f64;
            }
            [u / z, v / z]
        })
        .collect())
}
