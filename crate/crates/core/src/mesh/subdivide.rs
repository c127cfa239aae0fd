use std::collections::HashMap;

use nalgebra::{center, Point3};

use super::TriangleMesh;

/// Unique undirected edges as `(min, max)` index pairs in lexicographic order.
pub fn unique_edges(mesh: &TriangleMesh) -> Vec<(u32, u32)> {
    let mut edges: Vec<(u32, u32)> = mesh
        .faces()
        .iter()
        .flat_map(|f| (0..3).map(move |k| (f[k], f[(k + 1) % 3])))
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// One round of midpoint subdivision.
///
/// Each unique edge contributes one midpoint vertex, appended after the
/// original vertices in lexicographic order of the edge's index pair. Every
/// face `(a, b, c)` becomes four faces with the same winding.
pub fn subdivide_midpoint(mesh: &TriangleMesh) -> TriangleMesh {
    let edges = unique_edges(mesh);
    let base = mesh.vertex_count() as u32;
    let mut vertices: Vec<Point3<f64>> = Vec::with_capacity(mesh.vertex_count() + edges.len());
    vertices.extend_from_slice(mesh.vertices());
    let mut index: HashMap<(u32, u32), u32> = HashMap::with_capacity(edges.len());
    for (k, &(a, b)) in edges.iter().enumerate() {
        vertices.push(center(
            &mesh.vertices()[a as usize],
            &mesh.vertices()[b as usize],
        ));
        index.insert((a, b), base + k as u32);
    }
    let mid = |a: u32, b: u32| index[&(a.min(b), a.max(b))];

    let mut faces = Vec::with_capacity(mesh.face_count() * 4);
    for &[a, b, c] in mesh.faces() {
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        faces.push([a, ab, ca]);
        faces.push([ab, b, bc]);
        faces.push([ca, bc, c]);
        faces.push([ab, bc, ca]);
    }
    TriangleMesh::new(vertices, faces).expect("subdivision preserves validity")
}

/// Subdivides until the vertex count strictly exceeds `min_vertices`.
///
/// Meshes without faces cannot grow; they are returned as-is.
pub fn upsample_until(mesh: &TriangleMesh, min_vertices: usize) -> TriangleMesh {
    let mut current = mesh.clone();
    while current.vertex_count() <= min_vertices && current.face_count() > 0 {
        current = subdivide_midpoint(&current);
    }
    current
}
