//! Shared fixture for the criterion benchmarks in `benches/`.

use handsplat_core::refiner::{render_pose, RefineConfig, Scene, View};
use handsplat_core::splat_binding::{bind_gaussians, compose_scene, deform_gaussians, BindingTable, GaussianSet};
use handsplat_core::synthetic::{toy_scene, ToyScene};
use handsplat_core::{forward_kinematics, skin_mesh};

/// Toy grasp scene with its binding, target views and the composed cloud
/// at the true pose.
pub struct Fixture {
    pub toy: ToyScene,
    pub binding: BindingTable,
    pub views: Vec<View>,
    pub composed: GaussianSet,
    pub config: RefineConfig,
}

impl Fixture {
    pub fn new(hand: usize, object: usize, views: usize, size: usize) -> Self {
        let toy = toy_scene(hand, object, views, size, 1);
        let binding = bind_gaussians(&toy.hand, &toy.rig).expect("toy hand binds");
        let config = RefineConfig::default();
        let scene = Scene { rig: &toy.rig, binding: &binding, object: &toy.object };
        let views = toy
            .cameras
            .iter()
            .map(|c| View {
                camera: c.clone(),
                target: render_pose(&scene, &toy.truth, c, &config.background, &config.raster).expect("toy renders"),
            })
            .collect();
        let verts = skin_mesh(&toy.rig, &forward_kinematics(&toy.rig, &toy.truth).expect("valid pose")).expect("skin");
        let hand_cloud = deform_gaussians(&binding, &verts, &toy.rig.faces).expect("deform");
        let composed = compose_scene(&hand_cloud, &toy.object);
        Self { toy, binding, views, composed, config }
    }

    pub fn scene(&self) -> Scene<'_> {
        Scene { rig: &self.toy.rig, binding: &self.binding, object: &self.toy.object }
    }
}
