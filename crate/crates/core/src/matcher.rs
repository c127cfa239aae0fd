//! Code map → 2D-3D correspondences.

use std::collections::HashMap;

use nalgebra::{Point2, Point3};
use thiserror::Error;

use crate::encoder::{Code, CodeLayout, Codebook};
use crate::par;
use crate::render::CodeMap;

/// Default neighborhood radius of the coherence filter, pixels.
pub const DEFAULT_RADIUS_PX: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("code map uses radix {map_radix} with {map_digits} digits, codebook radix {book_radix} with {book_digits}")]
    LayoutMismatch {
        map_radix: u32,
        map_digits: u32,
        book_radix: u32,
        book_digits: u32,
    },
    #[error("invalid ROI: {0}")]
    InvalidRoi(String),
}

/// Maps pixel coordinates of a resized crop back to the full image:
/// `image = origin + roi * crop / resized`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiTransform {
    origin: [f64; 2],
    crop: [f64; 2],
    resized: [f64; 2],
}

impl RoiTransform {
    pub fn new(origin: [f64; 2], crop: [f64; 2], resized: [f64; 2]) -> Result<Self, MatchError> {
        let ok = |v: [f64; 2]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !ok(crop) || !ok(resized) || !origin.iter().all(|x| x.is_finite()) {
            return Err(MatchError::InvalidRoi(format!(
                "origin {origin:?}, crop {crop:?}, resized {resized:?}"
            )));
        }
        Ok(Self {
            origin,
            crop,
            resized,
        })
    }

    /// The map already is the full image.
    pub fn identity(width: u32, height: u32) -> Self {
        let s = [width as f64, height as f64];
        Self {
            origin: [0.0, 0.0],
            crop: s,
            resized: s,
        }
    }

    pub fn to_image(&self, roi: Point2<f64>) -> Point2<f64> {
        Point2::new(
            self.origin[0] + roi.x * self.crop[0] / self.resized[0],
            self.origin[1] + roi.y * self.crop[1] / self.resized[1],
        )
    }
}

/// A full-image pixel paired with the model-frame point its code decodes to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub pixel: Point2<f64>,
    pub point: Point3<f64>,
    pub code: Code,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Row-major order of the source pixels.
    pub correspondences: Vec<Correspondence>,
    /// Masked pixels whose code has no table entry.
    pub unknown: usize,
}

impl MatchResult {
    pub fn masked(&self) -> usize {
        self.correspondences.len() + self.unknown
    }
}

fn check_layout(map: CodeLayout, book: CodeLayout) -> Result<(), MatchError> {
    if map != book {
        return Err(MatchError::LayoutMismatch {
            map_radix: map.radix(),
            map_digits: map.digits(),
            book_radix: book.radix(),
            book_digits: book.digits(),
        });
    }
    Ok(())
}

/// One correspondence per masked pixel whose code is in the table, taken at
/// the pixel center and mapped through `roi`. Unknown codes are skipped.
pub fn match_codes(
    map: &CodeMap,
    codebook: &Codebook,
    roi: &RoiTransform,
) -> Result<MatchResult, MatchError> {
    check_layout(map.layout(), codebook.layout())?;
    let w = map.width();
    let rows = par::map_range(map.height() as usize, |v| {
        let mut out = Vec::new();
        let mut unknown = 0;
        for u in 0..w {
            let Some(code) = map.code(u, v as u32) else {
                continue;
            };
            match codebook.decode(code) {
                Some(point) => out.push(Correspondence {
                    pixel: roi.to_image(Point2::new(u as f64 + 0.5, v as f64 + 0.5)),
                    point,
                    code,
                }),
                None => unknown += 1,
            }
        }
        (out, unknown)
    });
    let mut correspondences = Vec::new();
    let mut unknown = 0;
    for (c, n) in rows {
        correspondences.extend(c);
        unknown += n;
    }
    Ok(MatchResult {
        correspondences,
        unknown,
    })
}

struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(corrs: &[Correspondence], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, c) in corrs.iter().enumerate() {
            cells.entry(Self::key(c.pixel, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn key(p: Point2<f64>, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Indices other than `i` within `radius` of `corrs[i]`, ascending.
    fn neighbors(&self, corrs: &[Correspondence], i: usize, radius: f64) -> Vec<usize> {
        let p = corrs[i].pixel;
        let (kx, ky) = Self::key(p, self.cell);
        let mut out = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(list) = self.cells.get(&(kx + dx, ky + dy)) {
                    out.extend(
                        list.iter()
                            .copied()
                            .filter(|&k| k != i && (corrs[k].pixel - p).norm() <= radius),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median 3D distance from each correspondence to those within `radius_px`
/// in the image; `None` when it has no neighbors.
pub fn neighborhood_spreads(corrs: &[Correspondence], radius_px: f64) -> Vec<Option<f64>> {
    assert!(radius_px > 0.0, "radius must be positive");
    let grid = Grid::new(corrs, radius_px);
    par::map_range(corrs.len(), |i| {
        let nb = grid.neighbors(corrs, i, radius_px);
        (!nb.is_empty()).then(|| {
            median(
                nb.iter()
                    .map(|&k| (corrs[k].point - corrs[i].point).norm())
                    .collect(),
            )
        })
    })
}

/// Drops correspondences whose neighborhood spread exceeds `max_spread_mm`.
/// Isolated correspondences are kept; survivors keep their order.
pub fn coherence_filter(
    corrs: &[Correspondence],
    radius_px: f64,
    max_spread_mm: f64,
) -> Vec<Correspondence> {
    neighborhood_spreads(corrs, radius_px)
        .into_iter()
        .zip(corrs)
        .filter(|(s, _)| s.map_or(true, |s| s <= max_spread_mm))
        .map(|(_, c)| *c)
        .collect()
}

/// Filter threshold from clean correspondence sets: twice the 95th
/// percentile (nearest rank) of all neighborhood spreads, raised to the
/// largest spread seen so the filter keeps every clean correspondence.
/// Silhouette pixels give the spread a long tail. `None` if no
/// correspondence has a neighbor.
pub fn calibrate_spread<'a>(
    clean: impl IntoIterator<Item = &'a [Correspondence]>,
    radius_px: f64,
) -> Option<f64> {
    let mut all: Vec<f64> = clean
        .into_iter()
        .flat_map(|c| neighborhood_spreads(c, radius_px).into_iter().flatten())
        .collect();
    if all.is_empty() {
        return None;
    }
    all.sort_by(f64::total_cmp);
    let rank = ((0.95 * all.len() as f64).ceil() as usize).clamp(1, all.len());
    let max = all[all.len() - 1];
    Some((2.0 * all[rank - 1]).max(max))
}
