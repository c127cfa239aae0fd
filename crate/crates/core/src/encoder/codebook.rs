use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};

use super::code::{Code, CodeLayout};
use super::hierarchy::{relabel_layout, GroupingHierarchy};
use super::{EncodeError, EncodingParams};
use crate::mesh::{Fingerprint, TriangleMesh};

/// Vertex codes plus the code → leaf-centroid lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    params: EncodingParams,
    layout: CodeLayout,
    fingerprint: Fingerprint,
    vertex_codes: Vec<Code>,
    table: BTreeMap<Code, Point3<f64>>,
}

/// Size and extent statistics over the leaf groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafStats {
    /// `sizes[k]` = number of leaves with exactly `k` members.
    pub size_histogram: BTreeMap<usize, usize>,
    pub max_diameter_mm: f64,
    pub leaf_count: usize,
}

impl Codebook {
    /// Builds the lookup table: each leaf code maps to the arithmetic mean of
    /// its member vertices.
    pub fn build(mesh: &TriangleMesh, hierarchy: &GroupingHierarchy) -> Result<Self, EncodeError> {
        if hierarchy.vertex_count() != mesh.vertex_count() {
            return Err(EncodeError::Inconsistent {
                hierarchy: hierarchy.vertex_count(),
                mesh: mesh.vertex_count(),
            });
        }
        let mut sums: BTreeMap<Code, (Vector3<f64>, usize)> = BTreeMap::new();
        for (v, &c) in mesh.vertices().iter().zip(hierarchy.codes()) {
            let e = sums.entry(c).or_insert((Vector3::zeros(), 0));
            e.0 += v.coords;
            e.1 += 1;
        }
        let table = sums
            .into_iter()
            .map(|(c, (s, n))| (c, Point3::from(s / n as f64)))
            .collect();
        Ok(Self {
            params: *hierarchy.params(),
            layout: hierarchy.layout(),
            fingerprint: mesh.fingerprint(),
            vertex_codes: hierarchy.codes().to_vec(),
            table,
        })
    }

    /// Reassembles a codebook from stored parts (used by the file reader).
    pub fn from_parts(
        params: EncodingParams,
        fingerprint: Fingerprint,
        vertex_codes: Vec<Code>,
        table: BTreeMap<Code, Point3<f64>>,
    ) -> Result<Self, EncodeError> {
        let layout = params.layout()?;
        if let Some(bad) = vertex_codes
            .iter()
            .chain(table.keys())
            .find(|&&c| !layout.is_valid(c))
        {
            return Err(EncodeError::InvalidParams(format!(
                "code {bad:#x} is not a valid {}-digit radix-{} code",
                layout.digits(),
                layout.radix()
            )));
        }
        Ok(Self {
            params,
            layout,
            fingerprint,
            vertex_codes,
            table,
        })
    }

    pub fn params(&self) -> &EncodingParams {
        &self.params
    }

    pub fn layout(&self) -> CodeLayout {
        self.layout
    }

    pub fn fingerprint(&self) -> &Fingerprint {
        &self.fingerprint
    }

    pub fn vertex_codes(&self) -> &[Code] {
        &self.vertex_codes
    }

    /// Lookup table sorted by code.
    pub fn table(&self) -> &BTreeMap<Code, Point3<f64>> {
        &self.table
    }

    pub fn encode(&self, vertex: usize) -> Code {
        self.vertex_codes[vertex]
    }

    /// Centroid for `code`, or `None` when no leaf carries it.
    pub fn decode(&self, code: Code) -> Option<Point3<f64>> {
        self.table.get(&code).copied()
    }

    /// Whether every one of the `r^d` codes has a table entry.
    pub fn is_complete(&self) -> bool {
        self.layout
            .class_count()
            .is_some_and(|k| k == self.table.len() as u64)
    }

    /// Number of vertices per leaf code.
    pub fn leaf_sizes(&self) -> BTreeMap<Code, usize> {
        let mut m = BTreeMap::new();
        for &c in &self.vertex_codes {
            *m.entry(c).or_insert(0) += 1;
        }
        m
    }

    /// Lookup over the first `keep` digits. Each prefix maps to the centroid
    /// of the union of its leaves, computed as the size-weighted mean of the
    /// leaf centroids.
    pub fn truncate(&self, keep: u32) -> Result<Self, EncodeError> {
        let layout = self.layout.truncated(keep)?;
        if keep == self.layout.digits() {
            return Ok(self.clone());
        }
        let sizes = self.leaf_sizes();
        let mut acc: BTreeMap<Code, (Vector3<f64>, usize)> = BTreeMap::new();
        for (code, centroid) in &self.table {
            let n = sizes.get(code).copied().unwrap_or(0);
            let e = acc
                .entry(self.layout.prefix(*code, keep))
                .or_insert((Vector3::zeros(), 0));
            e.0 += centroid.coords * n as f64;
            e.1 += n;
        }
        let table = acc
            .into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(c, (s, n))| (c, Point3::from(s / n as f64)))
            .collect();
        Ok(Self {
            params: EncodingParams {
                digits: keep,
                ..self.params
            },
            layout,
            fingerprint: self.fingerprint,
            vertex_codes: self
                .vertex_codes
                .iter()
                .map(|&c| self.layout.prefix(c, keep))
                .collect(),
            table,
        })
    }

    /// The same table read in another power-of-two radix. Codes are
    /// relabeled, never regrouped.
    pub fn convert_radix(&self, radix: u32) -> Result<Self, EncodeError> {
        let layout = relabel_layout(self.layout, radix)?;
        Ok(Self {
            params: EncodingParams {
                radix,
                digits: layout.digits(),
                seed: self.params.seed,
            },
            layout,
            ..self.clone()
        })
    }

    /// Leaf size histogram and the largest leaf diameter, measured on the
    /// mesh the codebook was built from.
    pub fn leaf_stats(&self, mesh: &TriangleMesh) -> LeafStats {
        let mut members: BTreeMap<Code, Vec<usize>> = BTreeMap::new();
        for (i, &c) in self.vertex_codes.iter().enumerate() {
            members.entry(c).or_default().push(i);
        }
        let mut size_histogram = BTreeMap::new();
        let mut max_diameter_mm = 0.0f64;
        let v = mesh.vertices();
        for m in members.values() {
            *size_histogram.entry(m.len()).or_insert(0) += 1;
            for (a, &i) in m.iter().enumerate() {
                for &k in &m[a + 1..] {
                    max_diameter_mm = max_diameter_mm.max((v[i] - v[k]).norm());
                }
            }
        }
        LeafStats {
            size_histogram,
            max_diameter_mm,
            leaf_count: members.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::build_hierarchy;
    use crate::mesh::{primitives, subdivide_midpoint};

    #[test]
    fn singleton_leaf_decodes_to_vertex() {
        let m = primitives::cube(2.0);
        let h = build_hierarchy(&m, &EncodingParams::new(2, 3, 0)).unwrap();
        let cb = Codebook::build(&m, &h).unwrap();
        for (i, v) in m.vertices().iter().enumerate() {
            assert_eq!(cb.decode(cb.encode(i)), Some(*v));
        }
        assert!(cb.is_complete());
    }

    #[test]
    fn pair_leaf_centroid_is_mean() {
        let m = TriangleMesh::from_points(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(100.0, 0.0, 0.0),
            Point3::new(102.0, 0.0, 0.0),
        ])
        .unwrap();
        let h = build_hierarchy(&m, &EncodingParams::new(2, 1, 0)).unwrap();
        let cb = Codebook::build(&m, &h).unwrap();
        assert_eq!(cb.decode(cb.encode(0)), Some(Point3::new(1.0, 0.0, 0.0)));
        assert_eq!(cb.decode(cb.encode(3)), Some(Point3::new(101.0, 0.0, 0.0)));
    }

    #[test]
    fn unknown_code_is_no_match() {
        let m = primitives::cube(1.0);
        let h = build_hierarchy(&m, &EncodingParams::new(2, 2, 0)).unwrap();
        let cb = Codebook::build(&m, &h).unwrap();
        assert_eq!(cb.decode(0b111), None);
    }

    #[test]
    fn quantization_bounded_by_leaf_diameter() {
        let m = subdivide_midpoint(&primitives::tetrahedron());
        let h = build_hierarchy(&m, &EncodingParams::new(2, 3, 5)).unwrap();
        let cb = Codebook::build(&m, &h).unwrap();
        // brute-force per-group diameter
        let groups = h.groups(3);
        for (code, members) in groups {
            let mut diam = 0.0f64;
            for &a in &members {
                for &b in &members {
                    diam = diam.max((m.vertices()[a as usize] - m.vertices()[b as usize]).norm());
                }
            }
            let c = cb.decode(code).unwrap();
            for &a in &members {
                assert!((m.vertices()[a as usize] - c).norm() <= diam + 1e-12);
            }
        }
    }

    #[test]
    fn truncation_matches_raw_vertex_means() {
        let m = subdivide_midpoint(&subdivide_midpoint(&primitives::icosahedron(50.0)));
        let h = build_hierarchy(&m, &EncodingParams::new(2, 6, 3)).unwrap();
        let cb = Codebook::build(&m, &h).unwrap();
        assert_eq!(cb.truncate(6).unwrap(), cb);
        for j in 1..6 {
            let t = cb.truncate(j).unwrap();
            for (prefix, members) in h.groups(j) {
                let mean = members
                    .iter()
                    .fold(Vector3::zeros(), |a, &i| a + m.vertices()[i as usize].coords)
                    / members.len() as f64;
                assert!((t.decode(prefix).unwrap().coords - mean).norm() < 1e-9);
            }
        }
        // the two halves average back to the mesh centroid
        let halves = cb.truncate(1).unwrap();
        let sizes = halves.leaf_sizes();
        let wsum = halves
            .table()
            .iter()
            .fold(Vector3::zeros(), |a, (c, p)| a + p.coords * sizes[c] as f64);
        assert!((wsum / m.vertex_count() as f64 - m.centroid().coords).norm() < 1e-9);
    }

    #[test]
    fn radix_relabel_keeps_centroids() {
        let m = subdivide_midpoint(&primitives::icosahedron(10.0));
        let h = build_hierarchy(&m, &EncodingParams::new(2, 4, 1)).unwrap();
        let cb = Codebook::build(&m, &h).unwrap();
        let q = cb.convert_radix(4).unwrap();
        assert_eq!(q.layout().digits(), 2);
        assert_eq!(q.table(), cb.table());
        assert!(cb.convert_radix(8).is_err());
    }
}
