use nalgebra::Point2;

use crate::camera::{CameraIntrinsics, PoseSE3};
use crate::mesh::TriangleMesh;
use crate::par;

/// Rows per parallel work unit.
const BAND_ROWS: u32 = 8;
/// Faces with a vertex at or closer than this depth (mm) are skipped.
const NEAR_MM: f64 = 1e-6;

/// Front-most face index and its depth at every pixel center.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceBuffer {
    pub width: u32,
    pub height: u32,
    pub face: Vec<Option<u32>>,
    /// Camera-frame z in mm; 0 where no face covers the pixel.
    pub depth: Vec<f32>,
}

#[derive(Clone, Copy)]
struct Edge {
    origin: Point2<f64>,
    dir: Point2<f64>,
    sign: f64,
    top_left: bool,
}

impl Edge {
    /// Edge `a -> b` of a positively oriented triangle. The function is
    /// evaluated from the lexicographically smaller endpoint so that the two
    /// triangles sharing an edge see exactly negated values.
    fn new(a: Point2<f64>, b: Point2<f64>) -> Self {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let top_left = (dy == 0.0 && dx > 0.0) || dy < 0.0;
        let (origin, other, sign) = if (a.x, a.y) <= (b.x, b.y) {
            (a, b, 1.0)
        } else {
            (b, a, -1.0)
        };
        Self {
            origin,
            dir: Point2::new(other.x - origin.x, other.y - origin.y),
            sign,
            top_left,
        }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.sign * (self.dir.x * (y - self.origin.y) - self.dir.y * (x - self.origin.x))
    }

    fn covers(&self, w: f64) -> bool {
        w > 0.0 || (w == 0.0 && self.top_left)
    }
}

fn signed_area(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

struct Tri {
    face: u32,
    /// `edges[k]` is opposite vertex `k`.
    edges: [Edge; 3],
    inv_z: [f64; 3],
    x0: u32,
    x1: u32,
    y0: u32,
    y1: u32,
}

fn setup(face: u32, mut v: [(Point2<f64>, f64); 3], w: u32, h: u32) -> Option<Tri> {
    let area = signed_area(v[0].0, v[1].0, v[2].0);
    if !area.is_finite() || area == 0.0 {
        return None;
    }
    if area < 0.0 {
        v.swap(1, 2);
    }
    let xs = v.map(|p| p.0.x);
    let ys = v.map(|p| p.0.y);
    let lo = |a: [f64; 3]| a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = |a: [f64; 3]| a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // pixel p is a candidate when its center p + 0.5 lies in [min, max]
    let first = |m: f64| (m - 0.5).ceil().max(0.0);
    let last = |m: f64, n: u32| (m - 0.5).floor().min(n as f64 - 1.0);
    let (fx, lx) = (first(lo(xs)), last(hi(xs), w));
    let (fy, ly) = (first(lo(ys)), last(hi(ys), h));
    if fx > lx || fy > ly {
        return None;
    }
    Some(Tri {
        face,
        edges: [
            Edge::new(v[1].0, v[2].0),
            Edge::new(v[2].0, v[0].0),
            Edge::new(v[0].0, v[1].0),
        ],
        inv_z: v.map(|p| p.1),
        x0: fx as u32,
        x1: lx as u32,
        y0: fy as u32,
        y1: ly as u32,
    })
}

/// Z-buffered rasterization of `mesh` under `pose`.
///
/// A pixel belongs to a triangle when its center is strictly inside or on a
/// top-left edge. Depth is compared through perspective-correct `1/z`; on
/// equal depth the lower face index wins. Triangles are not clipped: any
/// face with a vertex at `z <= 0` is dropped. No back-face culling.
pub fn rasterize(mesh: &TriangleMesh, pose: &PoseSE3, cam: &CameraIntrinsics) -> FaceBuffer {
    let (w, h) = (cam.width, cam.height);
    let projected = par::map_slice(mesh.vertices(), |p| {
        let c = pose.transform(p);
        (c.z > NEAR_MM).then(|| (cam.project(&c).unwrap(), 1.0 / c.z))
    });

    let tris: Vec<Tri> = mesh
        .faces()
        .iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            let v = [
                projected[f[0] as usize]?,
                projected[f[1] as usize]?,
                projected[f[2] as usize]?,
            ];
            setup(fi as u32, v, w, h)
        })
        .collect();

    let bands = h.div_ceil(BAND_ROWS) as usize;
    let mut binned: Vec<Vec<u32>> = vec![Vec::new(); bands];
    for (ti, t) in tris.iter().enumerate() {
        for b in (t.y0 / BAND_ROWS)..=(t.y1 / BAND_ROWS) {
            binned[b as usize].push(ti as u32);
        }
    }

    let mut buf: Vec<(f64, u32)> = vec![(0.0, u32::MAX); w as usize * h as usize];
    par::for_each_chunk_mut(&mut buf, (w * BAND_ROWS) as usize, |band, chunk| {
        let row0 = band as u32 * BAND_ROWS;
        let rows = (chunk.len() / w as usize) as u32;
        for &ti in &binned[band] {
            let t = &tris[ti as usize];
            for py in t.y0.max(row0)..=t.y1.min(row0 + rows - 1) {
                let y = py as f64 + 0.5;
                let row = &mut chunk[((py - row0) * w) as usize..][..w as usize];
                for px in t.x0..=t.x1 {
                    let x = px as f64 + 0.5;
                    let e = t.edges.map(|e| e.eval(x, y));
                    if !(0..3).all(|k| t.edges[k].covers(e[k])) {
                        continue;
                    }
                    let sum = e[0] + e[1] + e[2];
                    let inv_z = (e[0] * t.inv_z[0] + e[1] * t.inv_z[1] + e[2] * t.inv_z[2]) / sum;
                    let slot = &mut row[px as usize];
                    if inv_z > slot.0 {
                        *slot = (inv_z, t.face);
                    }
                }
            }
        }
    });

    let face = buf
        .iter()
        .map(|&(_, f)| (f != u32::MAX).then_some(f))
        .collect();
    let depth = buf
        .iter()
        .map(|&(iz, f)| if f == u32::MAX { 0.0 } else { (1.0 / iz) as f32 })
        .collect();
    FaceBuffer {
        width: w,
        height: h,
        face,
        depth,
    }
}
