//! Point-to-triangle queries, a bounding-volume hierarchy for nearest-triangle
//! lookups and winding-number inside tests for closed meshes.

use crate::error::{Error, Result};
use crate::math::Vec3;

/// Closest point on triangle `(a, b, c)` to `p` (Ericson, Real-Time Collision
/// Detection, 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm()
}

/// Index of the triangle closest to `p`; ties go to the lowest index.
pub fn nearest_face_brute_force(p: &Vec3, vertices: &[Vec3], faces: &[[usize; 3]]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (f, [i, j, k]) in faces.iter().enumerate() {
        let d = point_triangle_distance(p, &vertices[*i], &vertices[*j], &vertices[*k]);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((f, d));
        }
    }
    best
}

/// Signed solid angle subtended by a triangle (Van Oosterom and Strackee).
fn solid_angle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (ra, rb, rc) = (a - p, b - p, c - p);
    let (la, lb, lc) = (ra.norm(), rb.norm(), rc.norm());
    let num = ra.dot(&rb.cross(&rc));
    let den = la * lb * lc + ra.dot(&rb) * lc + rb.dot(&rc) * la + rc.dot(&ra) * lb;
    2.0 * num.atan2(den)
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(f) = faces.iter().position(|f| f.iter().any(|&v| v >= vertices.len())) {
            return Err(Error::validation(format!(
                "mesh face {f} references a vertex >= {}",
                vertices.len()
            )));
        }
        Ok(Self { vertices, faces })
    }

    pub fn triangle(&self, f: usize) -> (Vec3, Vec3, Vec3) {
        let [i, j, k] = self.faces[f];
        (self.vertices[i], self.vertices[j], self.vertices[k])
    }

    /// Generalized winding number of `p`; about 1 inside a closed,
    /// outward-oriented mesh and 0 outside.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let total: f64 = (0..self.faces.len())
            .map(|f| {
                let (a, b, c) = self.triangle(f);
                solid_angle(p, &a, &b, &c)
            })
            .sum();
        total / (4.0 * std::f64::consts::PI)
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Axis-aligned cube with outward-facing triangles.
    pub fn cube(center: Vec3, size: f64) -> TriangleMesh {
        let h = size * 0.5;
        let vertices = (0..8)
            .map(|i| {
                center
                    + Vec3::new(
                        if i & 1 == 0 { -h } else { h },
                        if i & 2 == 0 { -h } else { h },
                        if i & 4 == 0 { -h } else { h },
                    )
            })
            .collect();
        let faces = vec![
            [0, 2, 1], [1, 2, 3], // z-
            [4, 5, 6], [5, 7, 6], // z+
            [0, 1, 4], [1, 5, 4], // y-
            [2, 6, 3], [3, 6, 7], // y+
            [0, 4, 2], [2, 4, 6], // x-
            [1, 3, 5], [3, 7, 5], // x+
        ];
        TriangleMesh { vertices, faces }
    }

    /// Latitude-longitude sphere with `2·slices·(stacks−1)` outward-facing
    /// triangles.
    pub fn uv_sphere(center: Vec3, radius: f64, slices: usize, stacks: usize) -> TriangleMesh {
        let mut vertices = vec![center + Vec3::new(0.0, 0.0, radius)];
        for s in 1..stacks {
            let theta = std::f64::consts::PI * s as f64 / stacks as f64;
            for k in 0..slices {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / slices as f64;
                vertices.push(
                    center
                        + radius
                            * Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()),
                );
            }
        }
        let south = vertices.len();
        vertices.push(center - Vec3::new(0.0, 0.0, radius));
        let ring = |s: usize, k: usize| 1 + (s - 1) * slices + (k % slices);
        let mut faces = Vec::new();
        for k in 0..slices {
            faces.push([0, ring(1, k), ring(1, k + 1)]);
        }
        for s in 1..stacks - 1 {
            for k in 0..slices {
                let (a, b) = (ring(s, k), ring(s, k + 1));
                let (c, d) = (ring(s + 1, k), ring(s + 1, k + 1));
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
        for k in 0..slices {
            faces.push([south, ring(stacks - 1, k + 1), ring(stacks - 1, k)]);
        }
        TriangleMesh { vertices, faces }
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let d = (self.min - p).sup(&(p - self.max)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over a triangle mesh for nearest-triangle
/// queries.
#[derive(Debug, Clone)]
pub struct MeshIndex {
    mesh: TriangleMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl MeshIndex {
    pub fn build(mesh: TriangleMesh) -> Result<Self> {
        if mesh.faces.is_empty() {
            return Err(Error::validation("object mesh has no triangles"));
        }
        let centroids: Vec<Vec3> = (0..mesh.faces.len())
            .map(|f| {
                let (a, b, c) = mesh.triangle(f);
                (a + b + c) / 3.0
            })
            .collect();
        let mut index = MeshIndex {
            order: (0..mesh.faces.len()).collect(),
            mesh,
            nodes: Vec::new(),
        };
        index.build_node(&centroids, 0, index.order.len());
        Ok(index)
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    fn build_node(&mut self, centroids: &[Vec3], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &f in &self.order[start..end] {
            let (a, b, c) = self.mesh.triangle(f);
            bounds.grow(&a);
            bounds.grow(&b);
            bounds.grow(&c);
            cbounds.grow(&centroids[f]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let axis = (cbounds.max - cbounds.min).imax();
        self.order[start..end].sort_by(|&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let mid = (start + end) / 2;
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.build_node(centroids, start, mid);
        let right = self.build_node(centroids, mid, end);
        self.nodes[id] = Node::Inner { bounds, left, right };
        id
    }

    /// Unsigned distance from `p` to the mesh surface.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.bounds().distance_sq(p) >= best * best {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[*start..*end] {
                        let (a, b, c) = self.mesh.triangle(f);
                        best = best.min(point_triangle_distance(p, &a, &b, &c));
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_sq(p);
                    let dr = self.nodes[*right].bounds().distance_sq(p);
                    // Visit the nearer child first.
                    if dl < dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }

    /// Distance to the surface, negative inside the (closed) mesh.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let d = self.distance(p);
        if d > 0.0 && self.mesh.winding_number(p) > 0.5 {
            -d
        } else {
            d
        }
    }
}
