//! Reading and writing every artifact the pipeline touches.
//!
//! Gaussian clouds use the binary PLY layout of common splatting tools.
//! Rigs, poses, viewpoints, project configs and reports are JSON. Meshes are
//! Wavefront OBJ, images 8-bit PNG, PPM or float PFM, and binding tables a small
//! versioned little-endian binary format.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::grasp_eval::{ContactReport, DEFAULT_CONTACT_EPS, DEFAULT_PENETRATION_LIMIT};
use crate::hand_rig::{HandPose, HandRig, FINGER_NAMES};
use crate::image::Image;
use crate::losses::{HandEstimate, HeatmapStack, LossBreakdown, LossWeights};
use crate::math::{is_rotation, orthonormalize, quat_norm, quat_normalize, Mat3, RigidTransform, Vec3};
use crate::rasterizer::Camera;
use crate::refiner::{RefineConfig, RefineReport, View, ViewpointSet};
use crate::splat_binding::{BindingTable, GaussianSet};

/// Zeroth-order spherical-harmonic basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
/// Opacities are pulled into `(OPACITY_CLAMP, 1 − OPACITY_CLAMP)` before the
/// logit is taken.
pub const OPACITY_CLAMP: f64 = 1e-6;
/// How far a stored rotation may be from orthonormal before it is rejected.
pub const ROTATION_LOAD_TOL: f64 = 1e-4;
/// How far a skinning-weight row may be from summing to one before it is
/// rejected rather than renormalized.
pub const WEIGHT_SUM_TOL: f64 = 1e-4;

pub const BINDING_MAGIC: &[u8; 8] = b"HSBIND\0\0";
pub const BINDING_VERSION: u8 = 1;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_json_string(value).as_bytes())
}

/// Resolves `p` against the directory holding `base`.
fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or_else(|| Path::new("")).join(p)
    }
}

fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn mat_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

fn mat_from_rows(r: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2])
}

// ---------------------------------------------------------------------------
// Gaussian PLY

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

const PLY_FIELDS: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
    "rot_3",
];

/// Splits a PLY file into its header lines and the offset of the body.
fn ply_header<'a>(bytes: &'a [u8], path: &Path) -> Result<(Vec<&'a str>, usize)> {
    const END: &[u8] = b"end_header";
    let pos = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, "missing end_header"))?;
    let mut body = pos + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::format(path, "end_header not followed by a newline"));
    }
    let header =
        std::str::from_utf8(&bytes[..pos]).map_err(|_| Error::format(path, "header is not valid text"))?;
    Ok((header.lines().map(str::trim).filter(|l| !l.is_empty()).collect(), body + 1))
}

/// Parses Gaussian PLY bytes; `path` is only used in error messages.
pub fn decode_gaussian_ply(bytes: &[u8], path: &Path) -> Result<GaussianSet> {
    let (lines, body) = ply_header(bytes, path)?;
    if lines.first() != Some(&"ply") {
        return Err(Error::format(path, "missing 'ply' magic"));
    }
    let mut count = None;
    let mut props: Vec<(String, Scalar)> = Vec::new();
    let mut format_ok = false;
    let mut in_vertex = false;
    for line in &lines[1..] {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, ..] => {
                return Err(Error::format(path, format!("unsupported PLY format '{other}'")));
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                if count.is_some() {
                    return Err(Error::format(path, "duplicate vertex element"));
                }
                count = Some(n.parse::<usize>().map_err(|_| Error::format(path, format!("bad vertex count '{n}'")))?);
                in_vertex = true;
            }
            ["element", name, _] => {
                if count.is_none() {
                    return Err(Error::format(path, format!("element '{name}' precedes the vertex element")));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::format(path, "list properties are not supported on vertices"));
            }
            ["property", ty, name] if in_vertex => {
                let s = Scalar::parse(ty)
                    .ok_or_else(|| Error::format(path, format!("unknown property type '{ty}'")))?;
                props.push((name.to_string(), s));
            }
            ["property", ..] => {}
            _ => return Err(Error::format(path, format!("unrecognized header line '{line}'"))),
        }
    }
    if !format_ok {
        return Err(Error::format(path, "missing 'format binary_little_endian 1.0' line"));
    }
    let count = count.ok_or_else(|| Error::format(path, "missing vertex element"))?;

    let mut offsets = Vec::with_capacity(PLY_FIELDS.len());
    let mut cursor = 0;
    let mut layout = Vec::new();
    for (name, s) in &props {
        layout.push((name.as_str(), *s, cursor));
        cursor += s.size();
    }
    let stride = cursor;
    for field in PLY_FIELDS {
        let (_, s, off) = layout
            .iter()
            .find(|(n, _, _)| *n == field)
            .ok_or_else(|| Error::format(path, format!("missing required property '{field}'")))?;
        offsets.push((*s, *off));
    }
    let needed = count
        .checked_mul(stride)
        .and_then(|n| n.checked_add(body))
        .ok_or_else(|| Error::format(path, "vertex count overflows"))?;
    if bytes.len() < needed {
        return Err(Error::format(
            path,
            format!("body holds {} bytes, {count} vertices need {}", bytes.len() - body, needed - body),
        ));
    }

    let mut set = GaussianSet::default();
    let mut vals = [0.0; 14];
    for i in 0..count {
        let rec = &bytes[body + i * stride..body + (i + 1) * stride];
        for (k, (s, off)) in offsets.iter().enumerate() {
            vals[k] = s.read(&rec[*off..]);
            if !vals[k].is_finite() {
                return Err(Error::format(path, format!("element {i}: property '{}' is not finite", PLY_FIELDS[k])));
            }
        }
        let color = Vec3::new(vals[3], vals[4], vals[5]).map(|c| (0.5 + SH_C0 * c).clamp(0.0, 1.0));
        let opacity = 1.0 / (1.0 + (-vals[6]).exp());
        let scale = Vec3::new(vals[7].exp(), vals[8].exp(), vals[9].exp());
        let q = [vals[10], vals[11], vals[12], vals[13]];
        if quat_norm(&q) < 1e-12 {
            return Err(Error::format(path, format!("element {i}: zero quaternion")));
        }
        let q = quat_normalize(&q);
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::format(path, format!("element {i}: scale out of range")));
        }
        set.push(Vec3::new(vals[0], vals[1], vals[2]), q, scale, opacity, color);
    }
    Ok(set)
}

pub fn load_gaussian_ply(path: impl AsRef<Path>) -> Result<GaussianSet> {
    let path = path.as_ref();
    decode_gaussian_ply(&read_bytes(path)?, path)
}

/// Serializes a Gaussian set as binary little-endian PLY with float fields.
pub fn encode_gaussian_ply(set: &GaussianSet) -> Result<Vec<u8>> {
    set.check_lengths()?;
    let mut out = Vec::new();
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", set.len()).as_bytes());
    for f in PLY_FIELDS {
        out.extend_from_slice(format!("property float {f}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for i in 0..set.len() {
        let p = set.positions[i];
        let c = set.colors[i];
        let o = set.opacities[i].clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
        let s = set.scales[i];
        let q = set.orientations[i];
        let vals = [
            p.x,
            p.y,
            p.z,
            (c.x - 0.5) / SH_C0,
            (c.y - 0.5) / SH_C0,
            (c.z - 0.5) / SH_C0,
            (o / (1.0 - o)).ln(),
            s.x.ln(),
            s.y.ln(),
            s.z.ln(),
            q[0],
            q[1],
            q[2],
            q[3],
        ];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn save_gaussian_ply(set: &GaussianSet, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_gaussian_ply(set)?)
}

// ---------------------------------------------------------------------------
// OBJ

/// Reads `v` and `f` records; polygons are fan-triangulated and negative
/// indices count from the end.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::format(path, format!("line {}: bad vertex", ln + 1)))?;
                if c.len() != 3 || c.iter().any(|x| !x.is_finite()) {
                    return Err(Error::format(path, format!("line {}: vertex needs 3 finite coordinates", ln + 1)));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let raw: i64 = head
                        .parse()
                        .map_err(|_| Error::format(path, format!("line {}: bad face index '{t}'", ln + 1)))?;
                    let n = vertices.len() as i64;
                    let i = if raw > 0 { raw - 1 } else { n + raw };
                    if raw == 0 || i < 0 {
                        return Err(Error::format(path, format!("line {}: face index {raw} out of range", ln + 1)));
                    }
                    idx.push(i as usize);
                }
                if idx.len() < 3 {
                    return Err(Error::format(path, format!("line {}: face needs at least 3 vertices", ln + 1)));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    parse_obj(&read_text(path)?, path)
}

pub fn encode_obj(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in &mesh.faces {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

pub fn save_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode_obj(mesh).as_bytes())
}

// ---------------------------------------------------------------------------
// Rig

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mesh_obj: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    template_vertices: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    faces: Option<Vec<[usize; 3]>>,
    parent_index: Vec<Option<usize>>,
    rest_joint_positions: Vec<[f64; 3]>,
    skinning_weights: Vec<Vec<f64>>,
    #[serde(default)]
    fingertip_groups: Vec<Vec<usize>>,
}

/// Parses a rig document. Returns the rig and any renormalization warnings.
pub fn parse_rig(text: &str, path: &Path) -> Result<(HandRig, Vec<String>)> {
    let doc: RigDoc = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    let (vertices, faces) = match (doc.mesh_obj, doc.template_vertices, doc.faces) {
        (Some(obj), None, None) => {
            let mesh = load_obj(relative_to(path, &obj))?;
            (mesh.vertices, mesh.faces)
        }
        (None, Some(v), Some(f)) => (v.into_iter().map(vec3).collect(), f),
        _ => {
            return Err(Error::format(
                path,
                "give either 'mesh_obj' or both 'template_vertices' and 'faces'",
            ))
        }
    };
    let mut warnings = Vec::new();
    let mut weights = doc.skinning_weights;
    for (i, row) in weights.iter_mut().enumerate() {
        if let Some(j) = row.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation(format!("skinning_weights[{i}][{j}] must be finite and non-negative")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::validation(format!("skinning_weights[{i}] sums to {sum}, expected 1")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            row.iter_mut().for_each(|w| *w /= sum);
            warnings.push(format!("skinning_weights[{i}] summed to {sum}; renormalized"));
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", path.display());
    }
    let rig = HandRig::new(
        vertices,
        faces,
        doc.parent_index,
        doc.rest_joint_positions.into_iter().map(vec3).collect(),
        weights,
        doc.fingertip_groups,
    )?;
    Ok((rig, warnings))
}

pub fn load_rig_with_warnings(path: impl AsRef<Path>) -> Result<(HandRig, Vec<String>)> {
    let path = path.as_ref();
    parse_rig(&read_text(path)?, path)
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<HandRig> {
    load_rig_with_warnings(path).map(|r| r.0)
}

/// Rig document with the mesh inlined.
pub fn encode_rig(rig: &HandRig) -> String {
    to_json_string(&RigDoc {
        mesh_obj: None,
        template_vertices: Some(rig.template_vertices.iter().map(arr3).collect()),
        faces: Some(rig.faces.clone()),
        parent_index: rig.parent_index.clone(),
        rest_joint_positions: rig.rest_joint_positions.iter().map(arr3).collect(),
        skinning_weights: rig.skinning_weights.clone(),
        fingertip_groups: rig.fingertip_groups.clone(),
    })
}

pub fn save_rig(rig: &HandRig, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode_rig(rig).as_bytes())
}

// ---------------------------------------------------------------------------
// Poses and hand estimates

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseDoc {
    global_rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    joint_rotations: Vec<[[f64; 3]; 3]>,
}

impl PoseDoc {
    fn from_pose(p: &HandPose) -> Self {
        Self {
            global_rotation: mat_rows(&p.global_rotation),
            translation: arr3(&p.translation),
            joint_rotations: p.joint_rotations.iter().map(mat_rows).collect(),
        }
    }

    fn into_pose(self, path: &Path) -> Result<HandPose> {
        let fix = |name: String, rows: &[[f64; 3]; 3]| -> Result<Mat3> {
            let m = mat_from_rows(rows);
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::format(path, format!("{name} has non-finite entries")));
            }
            if !is_rotation(&m, ROTATION_LOAD_TOL) {
                return Err(Error::validation(format!("{name} is not a rotation within {ROTATION_LOAD_TOL}")));
            }
            Ok(orthonormalize(&m))
        };
        let t = vec3(self.translation);
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::format(path, "translation has non-finite entries"));
        }
        Ok(HandPose {
            global_rotation: fix("global_rotation".into(), &self.global_rotation)?,
            translation: t,
            joint_rotations: self
                .joint_rotations
                .iter()
                .enumerate()
                .map(|(j, r)| fix(format!("joint_rotations[{j}]"), r))
                .collect::<Result<_>>()?,
        })
    }
}

pub fn parse_pose(text: &str, path: &Path) -> Result<HandPose> {
    let doc: PoseDoc = serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
    doc.into_pose(path)
}

pub fn load_pose(path: impl AsRef<Path>) -> Result<HandPose> {
    let path = path.as_ref();
    parse_pose(&read_text(path)?, path)
}

pub fn encode_pose(pose: &HandPose) -> String {
    to_json_string(&PoseDoc::from_pose(pose))
}

pub fn save_pose(pose: &HandPose, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode_pose(pose).as_bytes())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateDoc {
    vertices: Vec<[f64; 3]>,
    joints: Vec<[f64; 3]>,
    pose: PoseDoc,
}

/// Vertices, joints and pose of one hand, as compared by the supervision
/// losses.
pub fn load_hand_estimate(path: impl AsRef<Path>) -> Result<HandEstimate> {
    let path = path.as_ref();
    let doc: EstimateDoc = parse_json(path)?;
    Ok(HandEstimate {
        vertices: doc.vertices.into_iter().map(vec3).collect(),
        joints: doc.joints.into_iter().map(vec3).collect(),
        pose: doc.pose.into_pose(path)?,
    })
}

pub fn save_hand_estimate(est: &HandEstimate, path: impl AsRef<Path>) -> Result<()> {
    write_json(
        path.as_ref(),
        &EstimateDoc {
            vertices: est.vertices.iter().map(arr3).collect(),
            joints: est.joints.iter().map(arr3).collect(),
            pose: PoseDoc::from_pose(&est.pose),
        },
    )
}

// ---------------------------------------------------------------------------
// Cameras and viewpoints

fn default_near() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraDoc {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    #[serde(default = "default_near")]
    near_clip: f64,
    /// Row-major 4×4.
    world_to_camera: [[f64; 4]; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewpointDoc {
    #[serde(default)]
    seed: u64,
    cameras: Vec<CameraDoc>,
}

impl CameraDoc {
    fn from_camera(c: &Camera, target: Option<PathBuf>) -> Self {
        let h = c.world_to_camera.to_homogeneous();
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().enumerate() {
            for (col, v) in row.iter_mut().enumerate() {
                *v = h[(r, col)];
            }
        }
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            near_clip: c.near_clip,
            world_to_camera: m,
            target,
        }
    }

    fn to_camera(&self, index: usize) -> Result<Camera> {
        let m = &self.world_to_camera;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("camera {index}: extrinsics contain non-finite values")));
        }
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::validation(format!("camera {index}: extrinsics bottom row must be 0 0 0 1")));
        }
        let rot = Mat3::new(m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]);
        if rot.determinant().abs() < 1e-12 {
            return Err(Error::validation(format!("camera {index}: extrinsics are not invertible")));
        }
        if !is_rotation(&rot, 1e-6) {
            return Err(Error::validation(format!("camera {index}: extrinsic rotation is not orthonormal")));
        }
        let cam = Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            world_to_camera: RigidTransform::new(rot, Vec3::new(m[0][3], m[1][3], m[2][3])),
            width: self.width,
            height: self.height,
            near_clip: self.near_clip,
        };
        cam.validate()
            .map_err(|e| Error::validation(format!("camera {index}: {e}")))?;
        Ok(cam)
    }
}

/// Cameras of a viewpoint file with their (unresolved) target paths.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<(Vec<Camera>, Vec<Option<PathBuf>>, u64)> {
    let path = path.as_ref();
    let doc: ViewpointDoc = parse_json(path)?;
    let mut cams = Vec::with_capacity(doc.cameras.len());
    let mut targets = Vec::with_capacity(doc.cameras.len());
    for (i, c) in doc.cameras.iter().enumerate() {
        cams.push(c.to_camera(i)?);
        targets.push(c.target.as_ref().map(|t| relative_to(path, t)));
    }
    Ok((cams, targets, doc.seed))
}

/// Cameras plus their target images. Every camera needs a target of the
/// same size.
pub fn load_viewpoints(path: impl AsRef<Path>) -> Result<ViewpointSet> {
    let path = path.as_ref();
    let (cams, targets, seed) = load_cameras(path)?;
    let mut views = Vec::with_capacity(cams.len());
    for (i, (camera, target)) in cams.into_iter().zip(targets).enumerate() {
        let target = target.ok_or_else(|| Error::validation(format!("camera {i} has no target image")))?;
        let image = load_image(&target)?;
        if image.width != camera.width || image.height != camera.height {
            return Err(Error::structural(format!(
                "camera {i} is {}×{} but its target {} is {}×{}",
                camera.width,
                camera.height,
                target.display(),
                image.width,
                image.height
            )));
        }
        views.push(View { camera, target: image });
    }
    ViewpointSet::new(views, seed)
}

/// Writes a viewpoint file. `targets` are stored verbatim, so relative paths
/// resolve against the file's directory.
pub fn save_viewpoints(path: impl AsRef<Path>, cameras: &[Camera], targets: &[Option<PathBuf>], seed: u64) -> Result<()> {
    if cameras.len() != targets.len() {
        return Err(Error::structural("one target entry per camera required"));
    }
    let doc = ViewpointDoc {
        seed,
        cameras: cameras
            .iter()
            .zip(targets)
            .map(|(c, t)| CameraDoc::from_camera(c, t.clone()))
            .collect(),
    };
    write_json(path.as_ref(), &doc)
}

// ---------------------------------------------------------------------------
// Images

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ImageKind {
    Png,
    Ppm,
    Pfm,
}

fn image_kind(path: &Path) -> ImageKind {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") => ImageKind::Ppm,
        Some("pfm") => ImageKind::Pfm,
        _ => ImageKind::Png,
    }
}

pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), image.width as u32, image.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc
            .write_header()
            .map_err(|e| Error::validation(format!("png encode: {e}")))?;
        let data: Vec<u8> = image.data.iter().map(|v| to_u8(*v)).collect();
        w.write_image_data(&data)
            .map_err(|e| Error::validation(format!("png encode: {e}")))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut dec = png::Decoder::new(bytes);
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format(path, "indexed PNG was not expanded")),
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for px in buf[..info.buffer_size()].chunks(channels).take(w * h) {
        if channels < 3 {
            data.extend([px[0] as f64 / 255.0; 3]);
        } else {
            data.extend(px[..3].iter().map(|c| *c as f64 / 255.0));
        }
    }
    Image::from_data(w, h, data)
}

/// ASCII PPM (P3) with maximum value 255.
pub fn encode_ppm(image: &Image) -> String {
    let mut s = format!("P3\n{} {}\n255\n", image.width, image.height);
    for row in image.data.chunks(image.width * 3) {
        let line: Vec<String> = row.iter().map(|v| to_u8(*v).to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Reads ASCII (P3) or binary (P6) PPM.
pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos).ok_or_else(|| Error::format(path, "empty file"))?;
    let mut header = [0usize; 3];
    for h in header.iter_mut() {
        *h = next_token(&mut pos)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::format(path, "bad PPM header"))?;
    }
    let [w, h, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(path, format!("PPM max value {maxval} out of range")));
    }
    let n = w * h * 3;
    let mut data = Vec::with_capacity(n);
    match magic.as_str() {
        "P3" => {
            for i in 0..n {
                let v: usize = next_token(&mut pos)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::format(path, format!("sample {i} missing or malformed")))?;
                if v > maxval {
                    return Err(Error::format(path, format!("sample {i} exceeds max value")));
                }
                data.push(v as f64 / maxval as f64);
            }
        }
        "P6" => {
            let body = &bytes[(pos + 1).min(bytes.len())..];
            let width = if maxval < 256 { 1 } else { 2 };
            if body.len() < n * width {
                return Err(Error::format(path, "PPM body is truncated"));
            }
            for i in 0..n {
                let v = if width == 1 {
                    body[i] as usize
                } else {
                    u16::from_be_bytes([body[2 * i], body[2 * i + 1]]) as usize
                };
                data.push(v as f64 / maxval as f64);
            }
        }
        other => return Err(Error::format(path, format!("unsupported PPM magic '{other}'"))),
    }
    Image::from_data(w, h, data)
}

/// Color PFM: 32-bit float samples, rows stored bottom to top. Lossless
/// for values representable in `f32`.
pub fn encode_pfm(image: &Image) -> Vec<u8> {
    let mut out = format!("PF\n{} {}\n-1.0\n", image.width, image.height).into_bytes();
    for row in image.data.chunks(image.width * 3).rev() {
        for v in row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Image> {
    let mut lines = Vec::new();
    let mut pos = 0;
    while lines.len() < 3 {
        let end = bytes[pos..]
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| Error::format(path, "truncated PFM header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| Error::format(path, "bad PFM header"))?;
        lines.push(line.trim().to_string());
        pos += end + 1;
    }
    if lines[0] != "PF" {
        return Err(Error::format(path, "only color PFM ('PF') is supported"));
    }
    let dims: Vec<usize> = lines[1].split_whitespace().filter_map(|t| t.parse().ok()).collect();
    let scale: f64 = lines[2].parse().map_err(|_| Error::format(path, "bad PFM scale"))?;
    if dims.len() != 2 || scale == 0.0 {
        return Err(Error::format(path, "bad PFM header"));
    }
    let (w, h) = (dims[0], dims[1]);
    let body = &bytes[pos..];
    if body.len() != w * h * 12 {
        return Err(Error::format(path, format!("PFM body holds {} bytes, expected {}", body.len(), w * h * 12)));
    }
    let read = |c: &[u8]| -> f64 {
        let b: [u8; 4] = c.try_into().unwrap();
        if scale < 0.0 {
            f32::from_le_bytes(b) as f64
        } else {
            f32::from_be_bytes(b) as f64
        }
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for row in body.chunks(w * 12).rev() {
        data.extend(row.chunks(4).map(read));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "PFM holds non-finite samples"));
    }
    Image::from_data(w, h, data)
}

/// Loads a PNG, PPM (`.ppm`) or PFM (`.pfm`) image. 8-bit formats map
/// linearly onto `[0, 1]`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    match image_kind(path) {
        ImageKind::Ppm => decode_ppm(&bytes, path),
        ImageKind::Pfm => decode_pfm(&bytes, path),
        ImageKind::Png => decode_png(&bytes, path),
    }
}

/// Saves by extension: PPM for `.ppm`, PFM for `.pfm`, PNG otherwise. The
/// 8-bit formats clamp to `[0, 1]` and round.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match image_kind(path) {
        ImageKind::Ppm => write_bytes(path, encode_ppm(image).as_bytes()),
        ImageKind::Pfm => write_bytes(path, &encode_pfm(image)),
        ImageKind::Png => write_bytes(path, &encode_png(image)?),
    }
}

// ---------------------------------------------------------------------------
// Binding tables

pub fn encode_binding(table: &BindingTable, num_faces: usize) -> Result<Vec<u8>> {
    table.validate(num_faces)?;
    let mut out = Vec::with_capacity(25 + table.len() * 116);
    out.extend_from_slice(BINDING_MAGIC);
    out.push(BINDING_VERSION);
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    out.extend_from_slice(&(num_faces as u64).to_le_bytes());
    for i in 0..table.len() {
        out.extend_from_slice(&(table.face_index[i] as u32).to_le_bytes());
        let q = table.local_orientation[i];
        let vals = table.local_position[i]
            .iter()
            .chain(q.iter())
            .chain(table.canonical_scale[i].iter())
            .chain(std::iter::once(&table.opacities[i]))
            .chain(table.colors[i].iter());
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a binding file. With `expected_faces` set, the stored face count
/// must match it.
pub fn decode_binding(bytes: &[u8], path: &Path, expected_faces: Option<usize>) -> Result<BindingTable> {
    const HEADER: usize = 8 + 1 + 8 + 8;
    const RECORD: usize = 4 + 14 * 8;
    if bytes.len() < HEADER || &bytes[..8] != BINDING_MAGIC {
        return Err(Error::format(path, "not a binding file"));
    }
    if bytes[8] != BINDING_VERSION {
        return Err(Error::format(path, format!("unsupported binding version {}", bytes[8])));
    }
    let count = u64::from_le_bytes(bytes[9..17].try_into().unwrap()) as usize;
    let faces = u64::from_le_bytes(bytes[17..25].try_into().unwrap()) as usize;
    if let Some(expected) = expected_faces {
        if expected != faces {
            return Err(Error::validation(format!(
                "binding was made for a mesh with {faces} faces, rig has {expected}"
            )));
        }
    }
    if count.checked_mul(RECORD).map(|n| n + HEADER) != Some(bytes.len()) {
        return Err(Error::format(path, format!("file size does not match {count} entries")));
    }
    let mut t = BindingTable {
        face_index: Vec::with_capacity(count),
        local_position: Vec::with_capacity(count),
        local_orientation: Vec::with_capacity(count),
        canonical_scale: Vec::with_capacity(count),
        opacities: Vec::with_capacity(count),
        colors: Vec::with_capacity(count),
    };
    for i in 0..count {
        let rec = &bytes[HEADER + i * RECORD..HEADER + (i + 1) * RECORD];
        let face = u32::from_le_bytes(rec[..4].try_into().unwrap()) as usize;
        let f: Vec<f64> = rec[4..]
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(path, format!("entry {i} has non-finite values")));
        }
        t.face_index.push(face);
        t.local_position.push(Vec3::new(f[0], f[1], f[2]));
        t.local_orientation.push([f[3], f[4], f[5], f[6]]);
        t.canonical_scale.push(Vec3::new(f[7], f[8], f[9]));
        t.opacities.push(f[10]);
        t.colors.push(Vec3::new(f[11], f[12], f[13]));
    }
    t.validate(faces)?;
    Ok(t)
}

pub fn save_binding(table: &BindingTable, num_faces: usize, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_binding(table, num_faces)?)
}

pub fn load_binding(path: impl AsRef<Path>, expected_faces: Option<usize>) -> Result<BindingTable> {
    let path = path.as_ref();
    decode_binding(&read_bytes(path)?, path, expected_faces)
}

// ---------------------------------------------------------------------------
// Heatmaps

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatmapDoc {
    rows: usize,
    cols: usize,
    /// One row-major map per joint.
    maps: Vec<Vec<f64>>,
}

/// Loads score maps and attaches the same `beta` to each of them.
pub fn load_heatmaps(path: impl AsRef<Path>, beta: f64) -> Result<HeatmapStack> {
    let path = path.as_ref();
    let doc: HeatmapDoc = parse_json(path)?;
    let cells = doc.rows * doc.cols;
    if let Some(j) = doc.maps.iter().position(|m| m.len() != cells) {
        return Err(Error::structural(format!("map {j} does not hold {}×{} values", doc.rows, doc.cols)));
    }
    let stack = HeatmapStack {
        rows: doc.rows,
        cols: doc.cols,
        beta: vec![beta; doc.maps.len()],
        values: doc.maps.into_iter().flatten().collect(),
    };
    stack.validate()?;
    Ok(stack)
}

pub fn save_heatmaps(stack: &HeatmapStack, path: impl AsRef<Path>) -> Result<()> {
    stack.validate()?;
    let cells = stack.rows * stack.cols;
    write_json(
        path.as_ref(),
        &HeatmapDoc {
            rows: stack.rows,
            cols: stack.cols,
            maps: stack.values.chunks(cells).map(<[f64]>::to_vec).collect(),
        },
    )
}

// ---------------------------------------------------------------------------
// Project configuration

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossWeightsDoc {
    lambda_verts: Option<f64>,
    lambda_joints: Option<f64>,
    lambda_pose: Option<f64>,
    lambda_transl: Option<f64>,
    lambda_reg: Option<f64>,
    lambda_1: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefineDoc {
    max_iterations: Option<usize>,
    lr_rotation: Option<f64>,
    lr_translation: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    convergence_tol: Option<f64>,
    convergence_window: Option<usize>,
    loss_tolerance: Option<f64>,
    optimize_joints: Option<bool>,
    background: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraspDoc {
    contact_eps: Option<f64>,
    penetration_limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectDoc {
    rig: PathBuf,
    hand_ply: PathBuf,
    #[serde(default)]
    object_ply: Option<PathBuf>,
    viewpoints: PathBuf,
    #[serde(default)]
    binding: Option<PathBuf>,
    #[serde(default)]
    loss_weights: LossWeightsDoc,
    #[serde(default)]
    refine: RefineDoc,
    #[serde(default)]
    grasp: GraspDoc,
    #[serde(default)]
    seed: u64,
}

/// Paths and settings shared by the CLI workflows. Paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectConfig {
    pub rig: PathBuf,
    pub hand_ply: PathBuf,
    /// Without an object cloud the hand is rendered alone.
    pub object_ply: Option<PathBuf>,
    /// Cameras and their target images.
    pub viewpoints: PathBuf,
    /// Precomputed binding; when absent the hand cloud is bound on load.
    pub binding: Option<PathBuf>,
    pub loss_weights: LossWeights,
    pub refine: RefineConfig,
    pub contact_eps: f64,
    pub penetration_limit: f64,
    pub seed: u64,
}

fn check_exists(p: &Path, field: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::io(
            p,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("'{field}' file does not exist")),
        ))
    }
}

pub fn load_project_config(path: impl AsRef<Path>) -> Result<ProjectConfig> {
    let path = path.as_ref();
    let doc: ProjectDoc = parse_json(path)?;
    let resolve = |p: &Path, field: &str| -> Result<PathBuf> {
        let r = relative_to(path, p);
        check_exists(&r, field)?;
        Ok(r)
    };

    let mut w = LossWeights::default();
    let lw = &doc.loss_weights;
    for (slot, v) in [
        (&mut w.lambda_verts, lw.lambda_verts),
        (&mut w.lambda_joints, lw.lambda_joints),
        (&mut w.lambda_pose, lw.lambda_pose),
        (&mut w.lambda_transl, lw.lambda_transl),
        (&mut w.lambda_reg, lw.lambda_reg),
        (&mut w.lambda_1, lw.lambda_1),
    ] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    w.validate()?;

    let mut r = RefineConfig {
        lambda_1: w.lambda_1,
        ..RefineConfig::default()
    };
    let rd = &doc.refine;
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = rd.$f { r.$f = v; } )* };
    }
    take!(max_iterations, lr_rotation, lr_translation, beta1, beta2, epsilon, convergence_tol, convergence_window, loss_tolerance, optimize_joints);
    if let Some(b) = rd.background {
        r.background = vec3(b);
    }
    r.validate()?;

    let contact_eps = doc.grasp.contact_eps.unwrap_or(DEFAULT_CONTACT_EPS);
    let penetration_limit = doc.grasp.penetration_limit.unwrap_or(DEFAULT_PENETRATION_LIMIT);
    if !(contact_eps > 0.0 && penetration_limit >= 0.0) {
        return Err(Error::validation("contact_eps must be positive and penetration_limit non-negative"));
    }

    Ok(ProjectConfig {
        rig: resolve(&doc.rig, "rig")?,
        hand_ply: resolve(&doc.hand_ply, "hand_ply")?,
        object_ply: doc.object_ply.as_deref().map(|p| resolve(p, "object_ply")).transpose()?,
        viewpoints: resolve(&doc.viewpoints, "viewpoints")?,
        binding: doc.binding.as_deref().map(|p| resolve(p, "binding")).transpose()?,
        loss_weights: w,
        refine: r,
        contact_eps,
        penetration_limit,
        seed: doc.seed,
    })
}

/// Writes a config with every path stored as given.
pub fn save_project_config(config: &ProjectConfig, path: impl AsRef<Path>) -> Result<()> {
    let w = &config.loss_weights;
    let r = &config.refine;
    let doc = ProjectDoc {
        rig: config.rig.clone(),
        hand_ply: config.hand_ply.clone(),
        object_ply: config.object_ply.clone(),
        viewpoints: config.viewpoints.clone(),
        binding: config.binding.clone(),
        loss_weights: LossWeightsDoc {
            lambda_verts: Some(w.lambda_verts),
            lambda_joints: Some(w.lambda_joints),
            lambda_pose: Some(w.lambda_pose),
            lambda_transl: Some(w.lambda_transl),
            lambda_reg: Some(w.lambda_reg),
            lambda_1: Some(w.lambda_1),
        },
        refine: RefineDoc {
            max_iterations: Some(r.max_iterations),
            lr_rotation: Some(r.lr_rotation),
            lr_translation: Some(r.lr_translation),
            beta1: Some(r.beta1),
            beta2: Some(r.beta2),
            epsilon: Some(r.epsilon),
            convergence_tol: Some(r.convergence_tol),
            convergence_window: Some(r.convergence_window),
            loss_tolerance: Some(r.loss_tolerance),
            optimize_joints: Some(r.optimize_joints),
            background: Some(arr3(&r.background)),
        },
        grasp: GraspDoc {
            contact_eps: Some(config.contact_eps),
            penetration_limit: Some(config.penetration_limit),
        },
        seed: config.seed,
    };
    write_json(path.as_ref(), &doc)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Serialize)]
struct RefineReportDoc<'a> {
    converged: bool,
    diverged: bool,
    iterations: usize,
    skipped_iterations: usize,
    final_loss: Option<f64>,
    per_view_loss: &'a [f64],
    loss_trace: &'a [f64],
    view_trace: &'a [usize],
    pose: PoseDoc,
}

pub fn encode_refine_report(report: &RefineReport) -> String {
    to_json_string(&RefineReportDoc {
        converged: report.converged,
        diverged: report.diverged,
        iterations: report.iterations,
        skipped_iterations: report.skipped_iterations,
        final_loss: report.loss_trace.last().copied(),
        per_view_loss: &report.per_view_loss,
        loss_trace: &report.loss_trace,
        view_trace: &report.view_trace,
        pose: PoseDoc::from_pose(&report.pose),
    })
}

#[derive(Serialize)]
struct FingerDoc {
    finger: &'static str,
    contact: bool,
    min_distance: f64,
}

#[derive(Serialize)]
struct ContactReportDoc {
    success: bool,
    contact_count: usize,
    max_penetration: Option<f64>,
    fingers: Vec<FingerDoc>,
}

pub fn encode_contact_report(report: &ContactReport) -> String {
    to_json_string(&ContactReportDoc {
        success: report.success,
        contact_count: report.contact_count(),
        max_penetration: report.max_penetration,
        fingers: FINGER_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| FingerDoc {
                finger: name,
                contact: report.contacts[i],
                min_distance: report.min_distance[i],
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct LossDoc {
    verts: f64,
    joints: f64,
    pose: f64,
    transl: f64,
    reg: f64,
    mano: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    img: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total: Option<f64>,
}

/// Loss values, plus the schedule weight when one was applied.
pub fn encode_loss_breakdown(b: &LossBreakdown, alpha: Option<f64>) -> String {
    to_json_string(&LossDoc {
        verts: b.verts,
        joints: b.joints,
        pose: b.pose,
        transl: b.transl,
        reg: b.reg,
        mano: b.mano,
        alpha,
        img: b.img,
        total: b.total,
    })
}

/// `(u, v)` per joint.
pub fn encode_keypoints(points: &[[f64; 2]]) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        keypoints: &'a [[f64; 2]],
    }
    to_json_string(&Doc { keypoints: points })
}
