//! Articulated 3D Gaussian splatting for hands.
//!
//! A Gaussian cloud is attached to the faces of a skinned 21-joint hand mesh,
//! deformed with the hand pose, merged with a rigid object cloud and rendered
//! by a differentiable CPU rasterizer. Gradients flow from a photometric
//! image loss back to the pose, which lets [`refiner::refine_pose`] recover a
//! grasp from a handful of target views.
//!
//! Modules, bottom up:
//! - [`hand_rig`]: forward kinematics and linear blend skinning;
//! - [`splat_binding`]: face frames, binding and deformation of Gaussians;
//! - [`rasterizer`]: projection, compositing and the backward pass;
//! - [`losses`]: hand supervision terms, photometric loss, decoding helpers;
//! - [`refiner`]: render-and-compare pose optimization;
//! - [`grasp_eval`]: fingertip contact check;
//! - [`io`]: PLY, rig, pose, camera, image and binding files.

// Validation uses `!(x >= lo)` so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod grasp_eval;
pub mod hand_rig;
pub mod image;
pub mod io;
pub mod losses;
pub mod math;
pub mod rasterizer;
pub mod refiner;
pub mod splat_binding;
pub mod synthetic;

pub use error::{Error, Result};
pub use geometry::{MeshIndex, TriangleMesh};
pub use grasp_eval::{finger_contacts, ContactReport, ObjectSurface};
pub use hand_rig::{
    denormalize_translation, forward_kinematics, skin_mesh, HandPose, HandRig, JointStates, NormStats,
};
pub use image::Image;
pub use losses::{LossBreakdown, LossWeights};
pub use math::{Mat3, Quat, RigidTransform, Vec3};
pub use rasterizer::{render, render_backward, Camera, RenderAux, RenderGradients, RenderedImage};
pub use refiner::{refine_pose, RefineConfig, RefineReport, ViewpointSet};
pub use splat_binding::{bind_gaussians, compose_scene, deform_gaussians, BindingTable, GaussianSet};
