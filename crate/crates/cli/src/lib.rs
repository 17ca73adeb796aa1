//! Command-line workflows over `handsplat-core`.
//!
//! [`run`] takes the argument vector and output streams so the commands can
//! be driven in-process as well as from the `handsplat` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use handsplat_core::geometry::MeshIndex;
use handsplat_core::hand_rig::{forward_kinematics, skin_mesh, HandPose, HandRig};
use handsplat_core::io;
use handsplat_core::losses::{combined_loss, mano_losses, photometric_loss, soft_argmax};
use handsplat_core::refiner::{refine_pose, render_pose, Scene, View, ViewpointSet};
use handsplat_core::splat_binding::{bind_gaussians, BindingTable, GaussianSet};
use handsplat_core::synthetic::{perturb_wrist, toy_scene};
use handsplat_core::{finger_contacts, Error, ObjectSurface};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Failed grasp check.
    pub const NEGATIVE: i32 = 1;
    pub const DIVERGED: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const DATA: i32 = 65;
    pub const NO_INPUT: i32 = 66;
}

#[derive(Debug, Parser)]
#[command(name = "handsplat", version, about = "Hand Gaussian splatting and grasp-pose refinement")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Copy)]
pub struct SeedArg {
    /// Seed for every random choice the command makes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attach hand Gaussians to the faces of the rig mesh.
    Bind {
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        hand_ply: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Render the hand at a pose together with the object.
    Render {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long, default_value_t = 0)]
        camera_index: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Refine a hand pose against the target images of the viewpoint file.
    Refine {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        init_pose: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the refined pose here.
        #[arg(long)]
        pose_out: Option<PathBuf>,
        /// Overrides the seed of the project config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hand supervision losses between a prediction and ground truth.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, requires = "epochs")]
        epoch: Option<u32>,
        #[arg(long, requires = "epoch")]
        epochs: Option<u32>,
        /// Rendered image for the photometric term.
        #[arg(long, requires = "target")]
        rendered: Option<PathBuf>,
        #[arg(long, requires = "rendered")]
        target: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Fingertip contact and penetration check against an object mesh.
    GraspCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long)]
        object_mesh: PathBuf,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Keypoints from a stack of joint heatmaps.
    DecodeHeatmap {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        beta: f64,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Write a self-contained synthetic project (rig, clouds, cameras,
    /// targets, poses and config) into a directory.
    MakeToy {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2000)]
        hand_gaussians: usize,
        #[arg(long, default_value_t = 2000)]
        object_gaussians: usize,
        #[arg(long, default_value_t = 4)]
        views: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => exit::NO_INPUT,
            _ => exit::DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    exit::OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    exit::USAGE
                }
            };
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> std::result::Result<(), Failure> {
    out.write_all(text.as_bytes()).map_err(|e| Failure {
        code: exit::NO_INPUT,
        message: format!("writing output: {e}"),
    })
}

fn load_rig(path: &Path, err: &mut dyn Write) -> std::result::Result<HandRig, Failure> {
    let (rig, warnings) = io::load_rig_with_warnings(path)?;
    for w in warnings {
        let _ = writeln!(err, "warning: {}: {w}", path.display());
    }
    Ok(rig)
}

/// Everything the config-driven commands share.
struct Project {
    config: io::ProjectConfig,
    rig: HandRig,
    binding: BindingTable,
    object: GaussianSet,
}

fn load_project(path: &Path, err: &mut dyn Write) -> std::result::Result<Project, Failure> {
    let config = io::load_project_config(path)?;
    let rig = load_rig(&config.rig, err)?;
    let binding = match &config.binding {
        Some(b) => io::load_binding(b, Some(rig.faces.len()))?,
        None => bind_gaussians(&io::load_gaussian_ply(&config.hand_ply)?, &rig)?,
    };
    let object = match &config.object_ply {
        Some(p) => io::load_gaussian_ply(p)?,
        None => GaussianSet::default(),
    };
    Ok(Project {
        config,
        rig,
        binding,
        object,
    })
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match command {
        Command::Bind {
            rig, hand_ply, out: dst, ..
        } => {
            let rig = load_rig(&rig, err)?;
            let hand = io::load_gaussian_ply(&hand_ply)?;
            let table = bind_gaussians(&hand, &rig)?;
            io::save_binding(&table, rig.faces.len(), &dst)?;
            Ok(exit::OK)
        }
        Command::Render {
            config,
            pose,
            camera_index,
            out: dst,
            ..
        } => {
            let project = load_project(&config, err)?;
            let pose = io::load_pose(&pose)?;
            let (cameras, _, _) = io::load_cameras(&project.config.viewpoints)?;
            let camera = cameras.get(camera_index).ok_or_else(|| Failure {
                code: exit::DATA,
                message: format!("camera index {camera_index} out of range ({} cameras)", cameras.len()),
            })?;
            let scene = Scene {
                rig: &project.rig,
                binding: &project.binding,
                object: &project.object,
            };
            let refine = &project.config.refine;
            let image = render_pose(&scene, &pose, camera, &refine.background, &refine.raster)?;
            io::save_image(&image, &dst)?;
            Ok(exit::OK)
        }
        Command::Refine {
            config,
            init_pose,
            out: dst,
            pose_out,
            seed,
        } => {
            let project = load_project(&config, err)?;
            let init = io::load_pose(&init_pose)?;
            let mut views = io::load_viewpoints(&project.config.viewpoints)?;
            views.seed = seed.unwrap_or(project.config.seed);
            let report = refine_pose(
                &init,
                &project.rig,
                &project.binding,
                &project.object,
                &views,
                &project.config.refine,
            )?;
            std::fs::write(&dst, io::encode_refine_report(&report)).map_err(|e| Error::Io {
                path: dst.clone(),
                source: e,
            })?;
            if let Some(p) = pose_out {
                io::save_pose(&report.pose, p)?;
            }
            Ok(if report.diverged {
                exit::DIVERGED
            } else if report.converged {
                exit::OK
            } else {
                exit::NOT_CONVERGED
            })
        }
        Command::Loss {
            pred,
            truth,
            epoch,
            epochs,
            rendered,
            target,
            ..
        } => {
            let pred = io::load_hand_estimate(&pred)?;
            let truth = io::load_hand_estimate(&truth)?;
            let weights = handsplat_core::LossWeights::default();
            let mut breakdown = mano_losses(&pred, &truth, &weights)?;
            if let (Some(r), Some(t)) = (rendered, target) {
                let img = photometric_loss(&io::load_image(&r)?, &io::load_image(&t)?, weights.lambda_1)?;
                breakdown.img = Some(img);
            }
            let mut alpha = None;
            if let (Some(o), Some(last)) = (epoch, epochs) {
                let (total, a) = combined_loss(breakdown.mano, breakdown.img.unwrap_or(0.0), o, last)?;
                alpha = Some(a);
                if breakdown.img.is_some() {
                    breakdown.total = Some(total);
                }
            }
            emit(out, &io::encode_loss_breakdown(&breakdown, alpha))?;
            Ok(exit::OK)
        }
        Command::GraspCheck {
            config,
            pose,
            object_mesh,
            ..
        } => {
            let config = io::load_project_config(&config)?;
            let rig = load_rig(&config.rig, err)?;
            let pose = io::load_pose(&pose)?;
            let mesh = io::load_obj(&object_mesh)?;
            let states = forward_kinematics(&rig, &pose)?;
            let verts = skin_mesh(&rig, &states)?;
            let surface = ObjectSurface::Mesh(MeshIndex::build(mesh)?);
            let report = finger_contacts(&verts, &rig, &surface, config.contact_eps, config.penetration_limit)?;
            emit(out, &io::encode_contact_report(&report))?;
            Ok(if report.success { exit::OK } else { exit::NEGATIVE })
        }
        Command::DecodeHeatmap { input, beta, .. } => {
            let stack = io::load_heatmaps(&input, beta)?;
            emit(out, &io::encode_keypoints(&soft_argmax(&stack)?))?;
            Ok(exit::OK)
        }
        Command::MakeToy {
            out_dir,
            hand_gaussians,
            object_gaussians,
            views,
            size,
            seed,
        } => {
            make_toy(&out_dir, hand_gaussians, object_gaussians, views, size, seed.seed)?;
            Ok(exit::OK)
        }
    }
}

fn make_toy(
    dir: &Path,
    hand_count: usize,
    object_count: usize,
    views: usize,
    size: usize,
    seed: u64,
) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let scene = toy_scene(hand_count, object_count, views, size, seed);
    io::save_rig(&scene.rig, dir.join("rig.json"))?;
    io::save_gaussian_ply(&scene.hand, dir.join("hand.ply"))?;
    io::save_gaussian_ply(&scene.object, dir.join("object.ply"))?;
    io::save_obj(&scene.object_mesh, dir.join("object.obj"))?;
    io::save_pose(&scene.truth, dir.join("truth_pose.json"))?;
    io::save_pose(&HandPose::identity(scene.rig.num_joints()), dir.join("rest_pose.json"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = perturb_wrist(&scene.truth, 5f64.to_radians(), 0.01, &mut rng);
    io::save_pose(&init, dir.join("init_pose.json"))?;

    // Targets come from the files just written so that refinement sees the
    // same quantized clouds.
    let hand = io::load_gaussian_ply(dir.join("hand.ply"))?;
    let object = io::load_gaussian_ply(dir.join("object.ply"))?;
    let binding = bind_gaussians(&hand, &scene.rig)?;
    io::save_binding(&binding, scene.rig.faces.len(), dir.join("hand.bind"))?;
    let config = handsplat_core::RefineConfig::default();
    let s = Scene {
        rig: &scene.rig,
        binding: &binding,
        object: &object,
    };
    let mut targets = Vec::new();
    let mut view_list = Vec::new();
    for (i, cam) in scene.cameras.iter().enumerate() {
        // Float targets keep the ground truth an exact fixed point; the PNG
        // is only a preview.
        let name = format!("target_{i}.pfm");
        let img = render_pose(&s, &scene.truth, cam, &config.background, &config.raster)?;
        io::save_image(&img, dir.join(&name))?;
        io::save_image(&img, dir.join(format!("target_{i}.png")))?;
        targets.push(Some(PathBuf::from(name)));
        view_list.push(View {
            camera: cam.clone(),
            target: img,
        });
    }
    ViewpointSet::new(view_list, seed)?;
    io::save_viewpoints(dir.join("viewpoints.json"), &scene.cameras, &targets, seed)?;
    let project = io::ProjectConfig {
        rig: "rig.json".into(),
        hand_ply: "hand.ply".into(),
        object_ply: Some("object.ply".into()),
        viewpoints: "viewpoints.json".into(),
        binding: Some("hand.bind".into()),
        loss_weights: handsplat_core::LossWeights::default(),
        refine: handsplat_core::RefineConfig {
            background: Vector3::zeros(),
            ..config
        },
        contact_eps: handsplat_core::grasp_eval::DEFAULT_CONTACT_EPS,
        penetration_limit: handsplat_core::grasp_eval::DEFAULT_PENETRATION_LIMIT,
        seed,
    };
    io::save_project_config(&project, dir.join("project.json"))?;
    Ok(())
}
