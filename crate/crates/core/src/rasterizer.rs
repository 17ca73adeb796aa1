//! CPU reference rasterizer for 3D Gaussians with an exact backward pass.
//!
//! Forward: every Gaussian is projected with the EWA approximation
//! `Σ₂ = J W Σ W̅ᵀ Jᵀ + λ I`, splats are sorted globally by view depth (ties
//! by index) and composited front to back per pixel:
//!
//! ```text
//! C = Σᵢ cᵢ αᵢ Tᵢ + T_N · background,   Tᵢ = Πⱼ<ᵢ (1 − αⱼ)
//! αᵢ = min(α_max, oᵢ exp(−½ Δᵀ Σ₂⁻¹ Δ))
//! ```
//!
//! Fragments beyond the `cutoff_sigma` ellipse or with `α < alpha_min` are
//! skipped. Pixel `(x, y)` samples the image plane at its integer
//! coordinates, so a point projecting onto `(cx, cy)` hits pixel
//! `(cx, cy)` dead center.
//!
//! Camera space follows the computer-vision convention: `+x` right, `+y`
//! down, `+z` forward. The per-pixel fragment lists recorded in
//! [`RenderAux`] let [`render_backward`] replay compositing exactly.

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{quat_to_matrix, quat_to_matrix_backward, Mat3, Quat, RigidTransform, Vec3};
use crate::splat_binding::GaussianSet;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Tunable constants of the rasterizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterConfig {
    /// Added to both diagonal entries of every 2D covariance, px².
    pub blur: f64,
    pub alpha_max: f64,
    pub alpha_min: f64,
    /// Splats only influence pixels inside this Mahalanobis radius.
    pub cutoff_sigma: f64,
    pub tile_size: usize,
    /// 2D covariances with a smaller determinant are skipped.
    pub min_cov_det: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            blur: 0.3,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            cutoff_sigma: 3.0,
            tile_size: 16,
            min_cov_det: 1e-12,
        }
    }
}

/// Pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: RigidTransform,
    pub width: usize,
    pub height: usize,
    pub near_clip: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::validation("camera focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("camera image size must be at least 1×1"));
        }
        if !(self.near_clip > 0.0) {
            return Err(Error::validation("camera near clip must be positive"));
        }
        if !crate::math::is_rotation(&self.world_to_camera.rotation, 1e-6) {
            return Err(Error::validation("camera extrinsic rotation is not a proper rotation"));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`, with `up` pointing roughly up in
    /// the image. Principal point at the image center.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Camera {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Camera {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            world_to_camera: RigidTransform::new(rotation, -(rotation * eye)),
            width,
            height,
            near_clip: 0.01,
        }
    }
}

/// 2D footprint of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub mean2d: Vec2,
    pub cov2d: Mat2,
    pub depth: f64,
}

fn projection_jacobian(t: &Vec3, camera: &Camera) -> Matrix2x3<f64> {
    let (x, y, z) = (t.x, t.y, t.z);
    Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * y / (z * z),
    )
}

fn covariance_3d(rotation: &Mat3, scale: &Vec3) -> Mat3 {
    let s2 = Mat3::from_diagonal(&scale.component_mul(scale));
    rotation * s2 * rotation.transpose()
}

/// Projects a Gaussian; `None` when it lies in front of the near plane.
pub fn project_gaussian_with(
    mean: &Vec3,
    orientation: &Quat,
    scale: &Vec3,
    camera: &Camera,
    config: &RasterConfig,
) -> Option<ProjectedGaussian> {
    let t = camera.world_to_camera.apply(mean);
    if t.z <= camera.near_clip {
        return None;
    }
    let j = projection_jacobian(&t, camera);
    let m = j * camera.world_to_camera.rotation;
    let cov = m * covariance_3d(&quat_to_matrix(orientation), scale) * m.transpose()
        + Mat2::identity() * config.blur;
    Some(ProjectedGaussian {
        mean2d: Vec2::new(camera.fx * t.x / t.z + camera.cx, camera.fy * t.y / t.z + camera.cy),
        cov2d: cov,
        depth: t.z,
    })
}

pub fn project_gaussian(mean: &Vec3, orientation: &Quat, scale: &Vec3, camera: &Camera) -> Option<ProjectedGaussian> {
    project_gaussian_with(mean, orientation, scale, camera, &RasterConfig::default())
}

/// Output of [`render`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    pub pixels: Image,
    /// Accumulated opacity `1 − T_N` per pixel, row-major.
    pub alpha: Vec<f64>,
    pub stats: RenderStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderStats {
    /// Splats at or behind the near plane.
    pub culled: usize,
    /// Splats skipped for a near-singular 2D covariance.
    pub degenerate: usize,
    /// Fragments that contributed to some pixel.
    pub fragments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Splat {
    mean2d: Vec2,
    conic: Mat2,
    view_mean: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Fragment {
    /// Index into the owning tile's splat list.
    local: u32,
    alpha: f64,
    /// Transmittance in front of this fragment.
    transmittance: f64,
    gauss: f64,
    clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct TileRecord {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    splats: Vec<u32>,
    /// Per pixel (row-major within the tile): fragment range and final
    /// transmittance.
    ranges: Vec<(u32, u32, f64)>,
    fragments: Vec<Fragment>,
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderAux {
    num_gaussians: usize,
    width: usize,
    height: usize,
    background: Vec3,
    config: RasterConfig,
    splats: Vec<Option<Splat>>,
    /// Splat indices sorted by depth.
    order: Vec<u32>,
    tiles: Vec<TileRecord>,
}

impl RenderAux {
    pub fn num_gaussians(&self) -> usize {
        self.num_gaussians
    }

    /// Depth-sorted indices of the splats that survived culling.
    pub fn sorted_order(&self) -> &[u32] {
        &self.order
    }

    /// A fingerprint of which (pixel, splat) pairs contributed; changes when
    /// a parameter moves a fragment across a cutoff.
    pub fn fragment_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        for tile in &self.tiles {
            for f in &tile.fragments {
                mix(tile.splats[f.local as usize] as u64);
                mix(f.clamped as u64);
            }
            for r in &tile.ranges {
                mix(r.1 as u64 - r.0 as u64);
            }
        }
        h
    }

    /// Opacity of every stored fragment after clamping.
    pub fn fragment_alphas(&self) -> impl Iterator<Item = f64> + '_ {
        self.tiles.iter().flat_map(|t| t.fragments.iter().map(|f| f.alpha))
    }
}

/// Renders with the default [`RasterConfig`].
pub fn render(scene: &GaussianSet, camera: &Camera, background: &Vec3) -> Result<(RenderedImage, RenderAux)> {
    render_with(scene, camera, background, &RasterConfig::default())
}

pub fn render_with(
    scene: &GaussianSet,
    camera: &Camera,
    background: &Vec3,
    config: &RasterConfig,
) -> Result<(RenderedImage, RenderAux)> {
    scene.check_lengths()?;
    camera.validate()?;
    if config.tile_size == 0 {
        return Err(Error::validation("tile size must be positive"));
    }
    let (width, height) = (camera.width, camera.height);
    let mut stats = RenderStats::default();

    let projected: Vec<Option<(ProjectedGaussian, Vec3)>> = (0..scene.len())
        .into_par_iter()
        .map(|i| {
            project_gaussian_with(&scene.positions[i], &scene.orientations[i], &scene.scales[i], camera, config)
                .map(|p| (p, camera.world_to_camera.apply(&scene.positions[i])))
        })
        .collect();

    let mut splats: Vec<Option<Splat>> = Vec::with_capacity(scene.len());
    let mut depths: Vec<(f64, u32)> = Vec::new();
    for (i, p) in projected.iter().enumerate() {
        match p {
            None => {
                stats.culled += 1;
                splats.push(None);
            }
            Some((proj, view_mean)) => {
                let det = proj.cov2d.determinant();
                if !(det >= config.min_cov_det) {
                    stats.degenerate += 1;
                    splats.push(None);
                    continue;
                }
                let c = &proj.cov2d;
                let conic = Mat2::new(c[(1, 1)], -c[(0, 1)], -c[(1, 0)], c[(0, 0)]) / det;
                splats.push(Some(Splat {
                    mean2d: proj.mean2d,
                    conic,
                    view_mean: *view_mean,
                }));
                depths.push((proj.depth, i as u32));
            }
        }
    }
    depths.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let order: Vec<u32> = depths.iter().map(|d| d.1).collect();

    // Tile binning over each splat's cutoff-ellipse bounding box.
    let ts = config.tile_size;
    let (tiles_x, tiles_y) = (width.div_ceil(ts), height.div_ceil(ts));
    let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &idx in &order {
        let s = splats[idx as usize].as_ref().unwrap();
        let cov = projected[idx as usize].as_ref().unwrap().0.cov2d;
        let rx = config.cutoff_sigma * cov[(0, 0)].sqrt();
        let ry = config.cutoff_sigma * cov[(1, 1)].sqrt();
        let Some((px0, px1)) = pixel_span(s.mean2d.x - rx, s.mean2d.x + rx, width) else {
            continue;
        };
        let Some((py0, py1)) = pixel_span(s.mean2d.y - ry, s.mean2d.y + ry, height) else {
            continue;
        };
        for ty in py0 / ts..=py1 / ts {
            for tx in px0 / ts..=px1 / ts {
                tile_lists[ty * tiles_x + tx].push(idx);
            }
        }
    }

    let cutoff_sq = config.cutoff_sigma * config.cutoff_sigma;
    let tiles: Vec<TileRecord> = tile_lists
        .into_par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let (x0, y0) = (tx * ts, ty * ts);
            let (x1, y1) = ((x0 + ts).min(width), (y0 + ts).min(height));
            let mut ranges = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut fragments = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let start = fragments.len() as u32;
                    let pix = Vec2::new(x as f64, y as f64);
                    let mut trans = 1.0;
                    for (local, &idx) in list.iter().enumerate() {
                        let s = splats[idx as usize].as_ref().unwrap();
                        let d = pix - s.mean2d;
                        let power = (d.transpose() * s.conic * d)[0];
                        if power > cutoff_sq {
                            continue;
                        }
                        let gauss = (-0.5 * power).exp();
                        let raw = scene.opacities[idx as usize] * gauss;
                        let clamped = raw > config.alpha_max;
                        let alpha = if clamped { config.alpha_max } else { raw };
                        if alpha < config.alpha_min {
                            continue;
                        }
                        fragments.push(Fragment {
                            local: local as u32,
                            alpha,
                            transmittance: trans,
                            gauss,
                            clamped,
                        });
                        trans *= 1.0 - alpha;
                    }
                    ranges.push((start, fragments.len() as u32, trans));
                }
            }
            TileRecord {
                x0,
                y0,
                x1,
                y1,
                splats: list,
                ranges,
                fragments,
            }
        })
        .collect();

    let mut pixels = Image::zeros(width, height);
    let mut alpha = vec![0.0; width * height];
    for tile in &tiles {
        stats.fragments += tile.fragments.len();
        let tw = tile.x1 - tile.x0;
        for (p, &(start, end, trans)) in tile.ranges.iter().enumerate() {
            let (x, y) = (tile.x0 + p % tw, tile.y0 + p / tw);
            let mut c = background * trans;
            for f in &tile.fragments[start as usize..end as usize] {
                let idx = tile.splats[f.local as usize] as usize;
                c += scene.colors[idx] * (f.alpha * f.transmittance);
            }
            pixels.set_pixel(x, y, c);
            alpha[y * width + x] = 1.0 - trans;
        }
    }

    let aux = RenderAux {
        num_gaussians: scene.len(),
        width,
        height,
        background: *background,
        config: *config,
        splats,
        order,
        tiles,
    };
    Ok((RenderedImage { pixels, alpha, stats }, aux))
}

/// Inclusive pixel range covered by `[lo, hi]`, or `None` when it misses the
/// image.
fn pixel_span(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    let a = lo.ceil().max(0.0);
    let b = hi.floor().min(size as f64 - 1.0);
    if !(a <= b) {
        return None;
    }
    Some((a as usize, b as usize))
}

/// Gradients of a scalar loss with respect to every Gaussian parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub d_positions: Vec<Vec3>,
    /// With respect to the raw (possibly unnormalized) quaternion.
    pub d_orientations: Vec<Quat>,
    /// With respect to the rotation matrix built from the quaternion.
    pub d_rotations: Vec<Mat3>,
    pub d_scales: Vec<Vec3>,
    pub d_opacities: Vec<f64>,
    pub d_colors: Vec<Vec3>,
}

impl RenderGradients {
    pub fn zeros(k: usize) -> Self {
        Self {
            d_positions: vec![Vec3::zeros(); k],
            d_orientations: vec![[0.0; 4]; k],
            d_rotations: vec![Mat3::zeros(); k],
            d_scales: vec![Vec3::zeros(); k],
            d_opacities: vec![0.0; k],
            d_colors: vec![Vec3::zeros(); k],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ScreenGrad {
    mean2d: Vec2,
    conic: Mat2,
    opacity: f64,
    color: Vec3,
}

impl ScreenGrad {
    fn zero() -> Self {
        Self {
            mean2d: Vec2::zeros(),
            conic: Mat2::zeros(),
            opacity: 0.0,
            color: Vec3::zeros(),
        }
    }
}

/// Reverse-mode pass of [`render`]. `d_image` is the gradient of the loss
/// with respect to the rendered colors.
pub fn render_backward(
    aux: &RenderAux,
    scene: &GaussianSet,
    camera: &Camera,
    d_image: &Image,
) -> Result<RenderGradients> {
    scene.check_lengths()?;
    if scene.len() != aux.num_gaussians {
        return Err(Error::structural(format!(
            "render aux was recorded for {} gaussians, scene has {}",
            aux.num_gaussians,
            scene.len()
        )));
    }
    if d_image.width != aux.width || d_image.height != aux.height || camera.width != aux.width || camera.height != aux.height {
        return Err(Error::structural("image gradient size does not match the rendered image"));
    }

    // Screen-space gradients, one partial list per tile, merged in order.
    let partials: Vec<Vec<ScreenGrad>> = aux
        .tiles
        .par_iter()
        .map(|tile| {
            let mut grads = vec![ScreenGrad::zero(); tile.splats.len()];
            let tw = tile.x1 - tile.x0;
            for (p, &(start, end, final_trans)) in tile.ranges.iter().enumerate() {
                let (x, y) = (tile.x0 + p % tw, tile.y0 + p / tw);
                let d_c = d_image.pixel(x, y);
                if d_c == Vec3::zeros() {
                    continue;
                }
                let pix = Vec2::new(x as f64, y as f64);
                // Color accumulated behind the current fragment.
                let mut behind = aux.background * final_trans;
                for f in tile.fragments[start as usize..end as usize].iter().rev() {
                    let idx = tile.splats[f.local as usize] as usize;
                    let color = scene.colors[idx];
                    let g = &mut grads[f.local as usize];
                    g.color += d_c * (f.alpha * f.transmittance);
                    let d_alpha = d_c.dot(&(color * f.transmittance - behind / (1.0 - f.alpha)));
                    behind += color * (f.alpha * f.transmittance);
                    if f.clamped {
                        continue;
                    }
                    g.opacity += d_alpha * f.gauss;
                    let d_gauss = d_alpha * scene.opacities[idx];
                    let d_power = -0.5 * f.gauss * d_gauss;
                    let s = aux.splats[idx].as_ref().unwrap();
                    let d = pix - s.mean2d;
                    g.mean2d -= 2.0 * d_power * (s.conic * d);
                    g.conic += d_power * d * d.transpose();
                }
            }
            grads
        })
        .collect();

    let k = scene.len();
    let mut screen = vec![ScreenGrad::zero(); k];
    for (tile, grads) in aux.tiles.iter().zip(&partials) {
        for (&idx, g) in tile.splats.iter().zip(grads) {
            let s = &mut screen[idx as usize];
            s.mean2d += g.mean2d;
            s.conic += g.conic;
            s.opacity += g.opacity;
            s.color += g.color;
        }
    }

    let w = camera.world_to_camera.rotation;
    let per_splat: Vec<(Vec3, Mat3, Quat, Vec3)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let Some(s) = aux.splats[i].as_ref() else {
                return (Vec3::zeros(), Mat3::zeros(), [0.0; 4], Vec3::zeros());
            };
            let g = &screen[i];
            let t = s.view_mean;
            let (x, y, z) = (t.x, t.y, t.z);
            let (fx, fy) = (camera.fx, camera.fy);
            let rot = quat_to_matrix(&scene.orientations[i]);
            let scale = scene.scales[i];
            let sigma3 = covariance_3d(&rot, &scale);
            let jac = projection_jacobian(&t, camera);
            let tm = jac * w;

            // conic = Σ₂⁻¹
            let d_cov2 = -(s.conic.transpose() * g.conic * s.conic.transpose());
            let d_sigma3 = tm.transpose() * d_cov2 * tm;
            let d_tm = d_cov2 * tm * sigma3.transpose() + d_cov2.transpose() * tm * sigma3;
            let d_jac = d_tm * w.transpose();

            let mut d_t = Vec3::zeros();
            d_t.x += g.mean2d.x * fx / z;
            d_t.y += g.mean2d.y * fy / z;
            d_t.z += -g.mean2d.x * fx * x / (z * z) - g.mean2d.y * fy * y / (z * z);
            d_t.x += d_jac[(0, 2)] * (-fx / (z * z));
            d_t.y += d_jac[(1, 2)] * (-fy / (z * z));
            d_t.z += d_jac[(0, 0)] * (-fx / (z * z))
                + d_jac[(0, 2)] * (2.0 * fx * x / (z * z * z))
                + d_jac[(1, 1)] * (-fy / (z * z))
                + d_jac[(1, 2)] * (2.0 * fy * y / (z * z * z));
            let d_mean = w.transpose() * d_t;

            let s2 = Mat3::from_diagonal(&scale.component_mul(&scale));
            let d_rot = d_sigma3 * rot * s2 + d_sigma3.transpose() * rot * s2;
            let inner = rot.transpose() * d_sigma3 * rot;
            let d_scale = Vec3::new(
                2.0 * scale.x * inner[(0, 0)],
                2.0 * scale.y * inner[(1, 1)],
                2.0 * scale.z * inner[(2, 2)],
            );
            let d_quat = quat_to_matrix_backward(&scene.orientations[i], &d_rot);
            (d_mean, d_rot, d_quat, d_scale)
        })
        .collect();

    let mut out = RenderGradients::zeros(k);
    for (i, (d_mean, d_rot, d_quat, d_scale)) in per_splat.into_iter().enumerate() {
        out.d_positions[i] = d_mean;
        out.d_rotations[i] = d_rot;
        out.d_orientations[i] = d_quat;
        out.d_scales[i] = d_scale;
        out.d_opacities[i] = screen[i].opacity;
        out.d_colors[i] = screen[i].color;
    }
    Ok(out)
}
