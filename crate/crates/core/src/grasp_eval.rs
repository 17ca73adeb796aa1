//! Geometric grasp-success proxy.
//!
//! A finger touches the object when the closest vertex of its fingertip
//! group is within `contact_eps` of the object surface (signed distance, so
//! vertices inside count as touching). A grasp succeeds when at least two
//! fingers touch and no hand vertex sinks deeper than `penetration_limit`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::MeshIndex;
use crate::hand_rig::{HandRig, NUM_FINGERS};
use crate::math::Vec3;

pub const DEFAULT_CONTACT_EPS: f64 = 0.005;
pub const DEFAULT_PENETRATION_LIMIT: f64 = 0.002;
pub const MIN_CONTACT_FINGERS: usize = 2;

/// Object surface to test contacts against.
#[derive(Debug, Clone)]
pub enum ObjectSurface {
    /// Closed, outward-oriented triangle mesh; distances are signed.
    Mesh(MeshIndex),
    /// Bare samples; distances are unsigned and penetration is unknown.
    Points(Vec<Vec3>),
}

impl ObjectSurface {
    fn check(&self) -> Result<()> {
        match self {
            ObjectSurface::Mesh(m) if m.mesh().faces.is_empty() => {
                Err(Error::validation("object mesh is empty"))
            }
            ObjectSurface::Points(p) if p.is_empty() => Err(Error::validation("object point set is empty")),
            _ => Ok(()),
        }
    }

    /// Signed distance for meshes, unsigned for point sets.
    pub fn distance(&self, p: &Vec3) -> f64 {
        match self {
            ObjectSurface::Mesh(m) => m.signed_distance(p),
            ObjectSurface::Points(points) => points
                .iter()
                .map(|q| (p - q).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    pub contacts: [bool; NUM_FINGERS],
    /// Minimum distance per finger, meters (negative inside a mesh).
    pub min_distance: [f64; NUM_FINGERS],
    /// Deepest penetration of any hand vertex, meters (0 when none).
    /// `None` for point-set objects.
    pub max_penetration: Option<f64>,
    pub success: bool,
}

impl ContactReport {
    pub fn contact_count(&self) -> usize {
        self.contacts.iter().filter(|c| **c).count()
    }
}

pub fn finger_contacts(
    posed_vertices: &[Vec3],
    rig: &HandRig,
    object: &ObjectSurface,
    contact_eps: f64,
    penetration_limit: f64,
) -> Result<ContactReport> {
    object.check()?;
    if posed_vertices.len() != rig.num_vertices() {
        return Err(Error::structural(format!(
            "{} posed vertices for a rig with {}",
            posed_vertices.len(),
            rig.num_vertices()
        )));
    }
    if rig.fingertip_groups.len() != NUM_FINGERS {
        return Err(Error::validation(format!(
            "rig has {} fingertip groups, expected {NUM_FINGERS}",
            rig.fingertip_groups.len()
        )));
    }
    if let Some(g) = rig.fingertip_groups.iter().position(|g| g.is_empty()) {
        return Err(Error::validation(format!("fingertip group {g} is empty")));
    }
    if !(contact_eps >= 0.0) || !(penetration_limit >= 0.0) {
        return Err(Error::validation("contact thresholds must be non-negative"));
    }

    let mut contacts = [false; NUM_FINGERS];
    let mut min_distance = [f64::INFINITY; NUM_FINGERS];
    for (f, group) in rig.fingertip_groups.iter().enumerate() {
        let d = group
            .iter()
            .map(|&v| object.distance(&posed_vertices[v]))
            .fold(f64::INFINITY, f64::min);
        min_distance[f] = d;
        contacts[f] = d <= contact_eps;
    }
    let max_penetration = match object {
        ObjectSurface::Mesh(m) => Some(
            posed_vertices
                .par_iter()
                .map(|p| (-m.signed_distance(p)).max(0.0))
                .reduce(|| 0.0, f64::max),
        ),
        ObjectSurface::Points(_) => None,
    };
    let count = contacts.iter().filter(|c| **c).count();
    let success = count >= MIN_CONTACT_FINGERS && max_penetration.is_none_or(|p| p <= penetration_limit);
    Ok(ContactReport {
        contacts,
        min_distance,
        max_penetration,
        success,
    })
}
