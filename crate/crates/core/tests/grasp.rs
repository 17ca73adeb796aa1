//! Properties of the contact and penetration proxy.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use handsplat_core::geometry::{MeshIndex, TriangleMesh};
use handsplat_core::grasp_eval::{finger_contacts, ObjectSurface};
use handsplat_core::hand_rig::{forward_kinematics, skin_mesh};
use handsplat_core::math::Vec3;
use handsplat_core::synthetic::{random_rotation, random_unit, toy_grasp_pose, toy_hand_rig, toy_scene};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reports_are_invariant_under_joint_rigid_motion(seed in any::<u64>()) {
        let rig = toy_hand_rig();
        let scene = toy_scene(10, 10, 1, 16, 0);
        let verts = skin_mesh(&rig, &forward_kinematics(&rig, &toy_grasp_pose()).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        let r = random_rotation(&mut rng, angle);
        let s = random_unit(&mut rng) * rng.gen_range(0.0..1.0);
        let surface = ObjectSurface::Mesh(MeshIndex::build(scene.object_mesh.clone()).unwrap());
        let moved_mesh = scene.object_mesh.transformed(|p| r * p + s);
        let moved_surface = ObjectSurface::Mesh(MeshIndex::build(moved_mesh).unwrap());
        let moved_verts: Vec<Vec3> = verts.iter().map(|p| r * p + s).collect();
        let a = finger_contacts(&verts, &rig, &surface, 0.005, 0.002).unwrap();
        let b = finger_contacts(&moved_verts, &rig, &moved_surface, 0.005, 0.002).unwrap();
        prop_assert_eq!(a.contacts, b.contacts);
        prop_assert_eq!(a.success, b.success);
        for f in 0..5 {
            prop_assert!((a.min_distance[f] - b.min_distance[f]).abs() < 1e-9);
        }
        prop_assert!((a.max_penetration.unwrap() - b.max_penetration.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn contacts_grow_with_the_threshold(seed in any::<u64>()) {
        let rig = toy_hand_rig();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = random_unit(&mut rng) * 0.05 + Vec3::new(0.0, 0.1, 0.0);
        let mesh = TriangleMesh::uv_sphere(center, rng.gen_range(0.02..0.06), 16, 12);
        let surface = ObjectSurface::Mesh(MeshIndex::build(mesh).unwrap());
        let verts = skin_mesh(&rig, &forward_kinematics(&rig, &toy_grasp_pose()).unwrap()).unwrap();
        let mut prev = 0;
        for eps in [0.0, 0.001, 0.005, 0.01, 0.05, 0.1] {
            let r = finger_contacts(&verts, &rig, &surface, eps, 0.002).unwrap();
            prop_assert!(r.contact_count() >= prev);
            prev = r.contact_count();
        }
    }
}

#[test]
fn point_sets_report_no_penetration() {
    let rig = toy_hand_rig();
    let verts = skin_mesh(&rig, &forward_kinematics(&rig, &toy_grasp_pose()).unwrap()).unwrap();
    let points = vec![verts[rig.fingertip_groups[0][0]], verts[rig.fingertip_groups[1][0]]];
    let r = finger_contacts(&verts, &rig, &ObjectSurface::Points(points), 0.005, 0.002).unwrap();
    assert_eq!(r.max_penetration, None);
    assert!(r.contacts[0] && r.contacts[1]);
    assert!(r.success);
}

#[test]
fn empty_objects_are_rejected() {
    let rig = toy_hand_rig();
    assert!(finger_contacts(&rig.template_vertices, &rig, &ObjectSurface::Points(vec![]), 0.005, 0.002).is_err());
}
