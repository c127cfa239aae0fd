//! Triangle meshes: validation, loading and midpoint densification.

mod io;
pub mod primitives;
mod subdivide;

use nalgebra::Point3;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::load_mesh;
pub use subdivide::{subdivide_midpoint, unique_edges, upsample_until};

/// Errors raised while loading or validating a mesh.
#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read mesh file: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported mesh format for {0:?} (expected .ply or .obj)")]
    UnsupportedFormat(std::path::PathBuf),
    #[error("malformed mesh file: {0}")]
    Parse(String),
    #[error("unsupported element type: {0}")]
    UnsupportedElement(String),
    #[error("face {face} references vertex {index} but mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} repeats vertex {index}")]
    DegenerateFace { face: usize, index: usize },
    #[error("mesh has no vertices")]
    Empty,
}

/// SHA-256 digest of a vertex buffer.
pub type Fingerprint = [u8; 32];

/// Triangle mesh with vertex positions in millimeters.
///
/// Faces are index triples into `vertices`; counter-clockwise winding is
/// assumed for outward normals but nothing here depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, checking that every face index is in range and that no
    /// face repeats a vertex.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i as usize >= n {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index: i as usize,
                        vertex_count: n,
                    });
                }
            }
            if f[0] == f[1] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    index: f[0] as usize,
                });
            }
            if f[1] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    index: f[1] as usize,
                });
            }
        }
        Ok(Self { vertices, faces })
    }

    /// Point cloud without faces. Used for encoding raw vertex sets.
    pub fn from_points(vertices: Vec<Point3<f64>>) -> Result<Self, MeshError> {
        Self::new(vertices, Vec::new())
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Hash of the little-endian f64 vertex buffer. Two meshes with the same
    /// vertex positions in the same order share a fingerprint.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut h = Sha256::new();
        for v in &self.vertices {
            h.update(v.x.to_le_bytes());
            h.update(v.y.to_le_bytes());
            h.update(v.z.to_le_bytes());
        }
        h.finalize().into()
    }

    /// Arithmetic mean of all vertices.
    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .vertices
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, v| acc + v.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Number of edges used by exactly one face.
    pub fn boundary_edge_count(&self) -> usize {
        let mut counts = std::collections::HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        counts.values().filter(|&&c| c == 1).count()
    }
}

/// Lowercase hex rendering of a fingerprint.
pub fn fingerprint_hex(fp: &Fingerprint) -> String {
    fp.iter().map(|b| format!("{b:02x}")).collect()
}
