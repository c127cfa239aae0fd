//! Coarse-to-fine surface encoding.
//!
//! Vertices are grouped over `d` iterations: the single group of all vertices
//! is split into `r` equally sized children, each child again into `r`, and so
//! on. A vertex's code stacks the child index it received at every iteration,
//! so the first `j` digits identify its group after `j` splits. The
//! [`Codebook`] maps each full code to the centroid of its leaf group.

mod code;
mod codebook;
mod hierarchy;
mod split;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use code::{radix_convert, radix_expand, Code, CodeLayout};
pub use codebook::{Codebook, LeafStats};
pub use hierarchy::{build_hierarchy, GroupingHierarchy};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("invalid encoding parameters: {0}")]
    InvalidParams(String),
    #[error("{classes} classes requested but the mesh has only {vertices} vertices")]
    TooManyClasses { classes: u64, vertices: usize },
    #[error("need at least 2 points to split, got {0}")]
    TooFewPoints(usize),
    #[error("expected {expected} digits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{bits} bits cannot be grouped into digits of {group} bits")]
    IndivisibleLength { bits: usize, group: usize },
    #[error("radix {0} is not a power of two")]
    NotPowerOfTwo(u32),
    #[error("hierarchy covers {hierarchy} vertices but the mesh has {mesh}")]
    Inconsistent { hierarchy: usize, mesh: usize },
}

/// Radix, code length and clustering seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingParams {
    pub radix: u32,
    pub digits: u32,
    pub seed: u64,
}

impl Default for EncodingParams {
    /// Binary codes of 16 digits, i.e. 256² classes.
    fn default() -> Self {
        Self {
            radix: 2,
            digits: 16,
            seed: 0,
        }
    }
}

impl EncodingParams {
    pub fn new(radix: u32, digits: u32, seed: u64) -> Self {
        Self {
            radix,
            digits,
            seed,
        }
    }

    pub fn layout(&self) -> Result<CodeLayout, EncodeError> {
        CodeLayout::new(self.radix, self.digits)
    }

    /// `K = r^d`.
    pub fn total_classes(&self) -> Option<u64> {
        (self.radix as u64).checked_pow(self.digits)
    }

    /// Output channels a classifier needs for these codes: `r * d`.
    pub fn logit_count(&self) -> u32 {
        self.radix * self.digits
    }

    /// Checks `r^d <= vertex_count` (every leaf group non-empty).
    pub fn validate_for(&self, vertex_count: usize) -> Result<CodeLayout, EncodeError> {
        let layout = self.layout()?;
        match self.total_classes() {
            Some(k) if k <= vertex_count as u64 => Ok(layout),
            k => Err(EncodeError::TooManyClasses {
                classes: k.unwrap_or(u64::MAX),
                vertices: vertex_count,
            }),
        }
    }
}

/// Builds the code → centroid lookup for a hierarchy over `mesh`.
pub fn build_codebook(
    mesh: &crate::mesh::TriangleMesh,
    hierarchy: &GroupingHierarchy,
) -> Result<Codebook, EncodeError> {
    Codebook::build(mesh, hierarchy)
}

/// Balanced two-way k-means split of a point set.
///
/// Returns positions into `points`; the left set has `ceil(n/2)` members.
pub fn balanced_two_split(
    points: &[Point3<f64>],
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EncodeError> {
    if points.len() < 2 {
        return Err(EncodeError::TooFewPoints(points.len()));
    }
    let idx: Vec<u32> = (0..points.len() as u32).collect();
    let [l, r] = split::two_split(points, &idx, seed);
    Ok((
        l.into_iter().map(|i| i as usize).collect(),
        r.into_iter().map(|i| i as usize).collect(),
    ))
}
