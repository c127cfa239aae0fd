use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use nalgebra::Point3;
use ply_rs::parser::Parser;
use ply_rs::ply::{DefaultElement, Property};

use super::{MeshError, TriangleMesh};

/// Loads a PLY (ascii or binary) or OBJ mesh. Vertex order follows the file;
/// polygons with more than three corners are fan-triangulated.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    let reader = BufReader::new(File::open(path)?);
    match ext.as_deref() {
        Some("ply") => read_ply(reader),
        Some("obj") => read_obj(reader),
        _ => Err(MeshError::UnsupportedFormat(path.to_path_buf())),
    }
}

fn fan(poly: &[u32], faces: &mut Vec<[u32; 3]>) -> Result<(), MeshError> {
    if poly.len() < 3 {
        return Err(MeshError::Parse(format!(
            "face with {} vertices",
            poly.len()
        )));
    }
    for k in 1..poly.len() - 1 {
        faces.push([poly[0], poly[k], poly[k + 1]]);
    }
    Ok(())
}

fn scalar(p: &Property) -> Option<f64> {
    Some(match *p {
        Property::Char(v) => v as f64,
        Property::UChar(v) => v as f64,
        Property::Short(v) => v as f64,
        Property::UShort(v) => v as f64,
        Property::Int(v) => v as f64,
        Property::UInt(v) => v as f64,
        Property::Float(v) => v as f64,
        Property::Double(v) => v,
        _ => return None,
    })
}

fn index_list(p: &Property) -> Result<Vec<u32>, MeshError> {
    fn conv<T: Copy + TryInto<u32>>(v: &[T]) -> Result<Vec<u32>, MeshError> {
        v.iter()
            .map(|&x| {
                x.try_into()
                    .map_err(|_| MeshError::Parse("negative face index".into()))
            })
            .collect()
    }
    match p {
        Property::ListChar(v) => conv(v),
        Property::ListUChar(v) => conv(v),
        Property::ListShort(v) => conv(v),
        Property::ListUShort(v) => conv(v),
        Property::ListInt(v) => conv(v),
        Property::ListUInt(v) => Ok(v.clone()),
        other => Err(MeshError::UnsupportedElement(format!(
            "face index list of type {other:?}"
        ))),
    }
}

fn read_ply<R: BufRead>(mut reader: R) -> Result<TriangleMesh, MeshError> {
    let parser = Parser::<DefaultElement>::new();
    let ply = parser
        .read_ply(&mut reader)
        .map_err(|e| MeshError::Parse(e.to_string()))?;

    let verts = ply
        .payload
        .get("vertex")
        .ok_or_else(|| MeshError::Parse("no vertex element".into()))?;
    let mut vertices = Vec::with_capacity(verts.len());
    for v in verts {
        let coord = |k: &str| -> Result<f64, MeshError> {
            let p = v
                .get(k)
                .ok_or_else(|| MeshError::Parse(format!("vertex without {k}")))?;
            scalar(p).ok_or_else(|| MeshError::UnsupportedElement(format!("vertex {k}: {p:?}")))
        };
        vertices.push(Point3::new(coord("x")?, coord("y")?, coord("z")?));
    }

    let mut faces = Vec::new();
    if let Some(elems) = ply.payload.get("face") {
        for f in elems {
            let list = f
                .get("vertex_indices")
                .or_else(|| f.get("vertex_index"))
                .ok_or_else(|| MeshError::Parse("face without vertex_indices".into()))?;
            fan(&index_list(list)?, &mut faces)?;
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn read_obj<R: BufRead>(reader: R) -> Result<TriangleMesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| MeshError::Parse(format!("line {}: {e}", lineno + 1)))?;
                if c.len() != 3 {
                    return Err(MeshError::Parse(format!(
                        "line {}: vertex needs 3 coordinates",
                        lineno + 1
                    )));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in tok {
                    // v, v/vt, v//vn, v/vt/vn: only the position index matters
                    let head = t.split('/').next().unwrap_or_default();
                    let raw: i64 = head
                        .parse()
                        .map_err(|e| MeshError::Parse(format!("line {}: {e}", lineno + 1)))?;
                    let idx = match raw {
                        0 => {
                            return Err(MeshError::Parse(format!(
                                "line {}: OBJ indices are 1-based",
                                lineno + 1
                            )))
                        }
                        r if r > 0 => r - 1,
                        r => vertices.len() as i64 + r,
                    };
                    if idx < 0 {
                        return Err(MeshError::IndexOutOfRange {
                            face: faces.len(),
                            index: 0,
                            vertex_count: vertices.len(),
                        });
                    }
                    poly.push(idx as u32);
                }
                fan(&poly, &mut faces)?;
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const TETRA_PLY: &str = "ply
format ascii 1.0
element vertex 4
property float x
property float y
property float z
element face 4
property list uchar int vertex_indices
end_header
1 1 1
1 -1 -1
-1 1 -1
-1 -1 1
3 0 1 2
3 0 3 1
3 0 2 3
3 1 3 2
";

    fn write_tmp(name: &str, bytes: &[u8]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        (dir, p)
    }

    #[test]
    fn ascii_ply_tetrahedron() {
        let (_d, p) = write_tmp("t.ply", TETRA_PLY.as_bytes());
        let m = load_mesh(&p).unwrap();
        assert_eq!((m.vertex_count(), m.face_count()), (4, 4));
        assert_eq!(m, crate::mesh::primitives::tetrahedron());
    }

    #[test]
    fn binary_ply_matches_ascii() {
        let mut bytes = b"ply
format binary_little_endian 1.0
element vertex 4
property float x
property float y
property float z
element face 4
property list uchar int vertex_indices
end_header
"
        .to_vec();
        for v in [[1f32, 1., 1.], [1., -1., -1.], [-1., 1., -1.], [-1., -1., 1.]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
        }
        for f in [[0i32, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]] {
            bytes.push(3);
            for i in f {
                bytes.extend_from_slice(&i.to_le_bytes());
            }
        }
        let (_d, p) = write_tmp("t.ply", &bytes);
        assert_eq!(load_mesh(&p).unwrap(), crate::mesh::primitives::tetrahedron());
    }

    #[test]
    fn ply_index_out_of_range() {
        let bad = TETRA_PLY.replace("3 1 3 2", "3 1 9 2");
        let (_d, p) = write_tmp("bad.ply", bad.as_bytes());
        assert!(matches!(
            load_mesh(&p),
            Err(MeshError::IndexOutOfRange { index: 9, .. })
        ));
    }

    #[test]
    fn obj_quad_is_fan_triangulated() {
        let src = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2/1/1 3/1/1 4/1/1\n";
        let (_d, p) = write_tmp("q.obj", src.as_bytes());
        let m = load_mesh(&p).unwrap();
        assert_eq!(m.face_count(), 2);
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_negative_indices() {
        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n";
        let (_d, p) = write_tmp("n.obj", src.as_bytes());
        assert_eq!(load_mesh(&p).unwrap().faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn unknown_extension_and_missing_file() {
        let (_d, p) = write_tmp("m.stl", b"solid");
        assert!(matches!(load_mesh(&p), Err(MeshError::UnsupportedFormat(_))));
        assert!(matches!(
            load_mesh("/nonexistent/mesh.ply"),
            Err(MeshError::Io(_))
        ));
    }
}
