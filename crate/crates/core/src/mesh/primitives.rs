//! Small procedural meshes used by tests, benches and the synthetic harness.

use nalgebra::Point3;

use super::TriangleMesh;

fn build(v: &[[f64; 3]], f: &[[u32; 3]]) -> TriangleMesh {
    TriangleMesh::new(
        v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
        f.to_vec(),
    )
    .expect("primitive mesh is valid")
}

/// Regular tetrahedron with vertices on alternating unit-cube corners.
pub fn tetrahedron() -> TriangleMesh {
    build(
        &[
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ],
        &[[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
}

pub fn single_triangle() -> TriangleMesh {
    build(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[[0, 1, 2]])
}

/// Unit square split along one diagonal: V=4, E=5, F=2.
pub fn two_triangles() -> TriangleMesh {
    build(
        &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        &[[0, 1, 2], [0, 2, 3]],
    )
}

/// Axis-aligned cube `[0, side]^3`, 8 vertices and 12 outward-facing triangles.
pub fn cube(side: f64) -> TriangleMesh {
    let s = side;
    build(
        &[
            [0.0, 0.0, 0.0],
            [s, 0.0, 0.0],
            [s, s, 0.0],
            [0.0, s, 0.0],
            [0.0, 0.0, s],
            [s, 0.0, s],
            [s, s, s],
            [0.0, s, s],
        ],
        &[
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ],
    )
}

/// Regular icosahedron centered at the origin with circumradius `radius`.
pub fn icosahedron(radius: f64) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let norm = (1.0 + phi * phi).sqrt();
    let v: Vec<[f64; 3]> = raw
        .iter()
        .map(|p| [p[0] / norm * radius, p[1] / norm * radius, p[2] / norm * radius])
        .collect();
    build(
        &v,
        &[
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ],
    )
}

/// Scales every vertex component-wise.
pub fn scaled(mesh: &TriangleMesh, scale: [f64; 3]) -> TriangleMesh {
    let v = mesh
        .vertices()
        .iter()
        .map(|p| Point3::new(p.x * scale[0], p.y * scale[1], p.z * scale[2]))
        .collect();
    TriangleMesh::new(v, mesh.faces().to_vec()).expect("scaling keeps topology")
}
