//! Triangle meshes with per-vertex features.
//!
//! A [`Mesh`] stores positions in meters, triangle faces and optional
//! per-vertex colors, normals and class labels. Every mesh level of a
//! hierarchy is a `Mesh`, so the operations here are used both for raw input
//! and for pooled levels.

mod interpolate;
mod normals;
pub mod off;
pub mod ply;
mod subdivide;

use std::fmt;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::neighborhoods::EdgeSet;

pub use interpolate::interpolate_from_point_cloud;
pub use normals::compute_vertex_normals;
pub use subdivide::midpoint_subdivide;

/// Class index stored per vertex. [`UNLABELED`] marks vertices without ground truth.
pub type Label = u32;

/// Sentinel label for vertices without annotation. Never a valid class index.
pub const UNLABELED: Label = u32::MAX;

const NORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    /// RGB in `[0, 1]`.
    pub colors: Option<Vec<Vector3<f64>>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub labels: Option<Vec<Label>>,
}

/// Annotated point samples used to transfer colors and labels onto a mesh.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Vec<Vector3<f64>>,
    pub labels: Vec<Label>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3<f64>>, colors: Vec<Vector3<f64>>, labels: Vec<Label>) -> Result<Self> {
        if points.len() != colors.len() || points.len() != labels.len() {
            return Err(Error::Shape(format!(
                "point cloud attribute lengths differ: {} points, {} colors, {} labels",
                points.len(),
                colors.len(),
                labels.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, colors, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A broken mesh invariant together with the offending element.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    DegenerateFace {
        face: usize,
        indices: [usize; 3],
    },
    NonFiniteCoordinate {
        vertex: usize,
    },
    NonUnitNormal {
        vertex: usize,
        length: f64,
    },
    ColorOutOfRange {
        vertex: usize,
    },
    AttributeLength {
        attribute: &'static str,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FaceIndexOutOfRange {
                face,
                index,
                vertex_count,
            } => write!(
                f,
                "face index out of range: face {face} references vertex {index} but the mesh has {vertex_count} vertices"
            ),
            Violation::DegenerateFace { face, indices } => write!(
                f,
                "degenerate face: face {face} repeats a vertex ({}, {}, {})",
                indices[0], indices[1], indices[2]
            ),
            Violation::NonFiniteCoordinate { vertex } => {
                write!(f, "non-finite coordinate at vertex {vertex}")
            }
            Violation::NonUnitNormal { vertex, length } => {
                write!(f, "normal of vertex {vertex} has length {length}, expected 1")
            }
            Violation::ColorOutOfRange { vertex } => {
                write!(f, "color of vertex {vertex} is outside [0, 1]")
            }
            Violation::AttributeLength {
                attribute,
                expected,
                found,
            } => write!(
                f,
                "attribute {attribute} has {found} entries, expected {expected}"
            ),
        }
    }
}

/// Supported mesh file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    PlyBinary,
    PlyAscii,
    Off,
}

impl MeshFormat {
    /// Guesses a format from the file extension; PLY defaults to binary for writing.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("ply") => Ok(MeshFormat::PlyBinary),
            Some("off") => Ok(MeshFormat::Off),
            _ => Err(Error::Config(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

impl Mesh {
    pub fn new(positions: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            positions,
            faces,
            ..Default::default()
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Returns every broken invariant; empty iff the mesh is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate_mesh(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Axis-aligned bounding box `(min, max)`; `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Point3<f64>, Point3<f64>)> {
        bounds(&self.positions)
    }

    pub fn geodesic_edge_set(&self) -> EdgeSet {
        geodesic_edge_set(self)
    }

    /// Sub-mesh induced by `keep` (one flag per vertex). Faces survive only
    /// when all three corners are kept. Returns the mesh and the old index of
    /// every new vertex.
    pub fn induced_submesh(&self, keep: &[bool]) -> (Mesh, Vec<usize>) {
        let mut remap = vec![usize::MAX; self.vertex_count()];
        let mut old = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = old.len();
                old.push(i);
            }
        }
        let faces = self
            .faces
            .iter()
            .filter(|f| f.iter().all(|&v| keep[v]))
            .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        let pick = |v: &Vec<Vector3<f64>>| old.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let mesh = Mesh {
            positions: old.iter().map(|&i| self.positions[i]).collect(),
            faces,
            colors: self.colors.as_ref().map(pick),
            normals: self.normals.as_ref().map(pick),
            labels: self.labels.as_ref().map(|l| old.iter().map(|&i| l[i]).collect()),
        };
        (mesh, old)
    }

    /// Total triangle area in square meters.
    pub fn surface_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let a = self.positions[f[0]];
                let b = self.positions[f[1]];
                let c = self.positions[f[2]];
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }
}

pub(crate) fn bounds(points: &[Point3<f64>]) -> Option<(Point3<f64>, Point3<f64>)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Some((lo, hi))
}

pub fn validate_mesh(mesh: &Mesh) -> Vec<Violation> {
    let n = mesh.vertex_count();
    let mut out = Vec::new();

    for (vertex, p) in mesh.positions.iter().enumerate() {
        if !p.iter().all(|c| c.is_finite()) {
            out.push(Violation::NonFiniteCoordinate { vertex });
        }
    }
    for (face, f) in mesh.faces.iter().enumerate() {
        let mut bad_index = false;
        for &index in f {
            if index >= n {
                out.push(Violation::FaceIndexOutOfRange {
                    face,
                    index,
                    vertex_count: n,
                });
                bad_index = true;
            }
        }
        if !bad_index && (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            out.push(Violation::DegenerateFace { face, indices: *f });
        }
    }
    if let Some(colors) = &mesh.colors {
        if colors.len() != n {
            out.push(Violation::AttributeLength {
                attribute: "colors",
                expected: n,
                found: colors.len(),
            });
        } else {
            for (vertex, c) in colors.iter().enumerate() {
                if !c.iter().all(|x| (0.0..=1.0).contains(x)) {
                    out.push(Violation::ColorOutOfRange { vertex });
                }
            }
        }
    }
    if let Some(normals) = &mesh.normals {
        if normals.len() != n {
            out.push(Violation::AttributeLength {
                attribute: "normals",
                expected: n,
                found: normals.len(),
            });
        } else {
            for (vertex, nrm) in normals.iter().enumerate() {
                let length = nrm.norm();
                if !((length - 1.0).abs() <= NORMAL_TOLERANCE) {
                    out.push(Violation::NonUnitNormal { vertex, length });
                }
            }
        }
    }
    if let Some(labels) = &mesh.labels {
        if labels.len() != n {
            out.push(Violation::AttributeLength {
                attribute: "labels",
                expected: n,
                found: labels.len(),
            });
        }
    }
    out
}

/// Undirected 1-hop adjacency induced by the faces, sorted and deduplicated.
pub fn geodesic_edge_set(mesh: &Mesh) -> EdgeSet {
    let mut lists: Vec<Vec<usize>> = vec![Vec::new(); mesh.vertex_count()];
    for f in &mesh.faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            if a != b {
                lists[a].push(b);
                lists[b].push(a);
            }
        }
    }
    for l in &mut lists {
        l.sort_unstable();
        l.dedup();
    }
    EdgeSet::from_lists(lists)
}

/// Reads a mesh file and validates it. PLY encoding is detected from the header.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<Mesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io_path(path, e))?;
    let mesh = match format {
        MeshFormat::PlyAscii | MeshFormat::PlyBinary => ply::parse_ply(&bytes)?,
        MeshFormat::Off => off::parse_off(&bytes)?,
    };
    mesh.ensure_valid()?;
    Ok(mesh)
}

pub fn save_mesh(mesh: &Mesh, path: &Path, format: MeshFormat) -> Result<()> {
    let bytes = match format {
        MeshFormat::PlyBinary => ply::encode_ply(mesh, ply::PlyEncoding::BinaryLittleEndian),
        MeshFormat::PlyAscii => ply::encode_ply(mesh, ply::PlyEncoding::Ascii),
        MeshFormat::Off => off::encode_off(mesh),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io_path(path, e))
}
