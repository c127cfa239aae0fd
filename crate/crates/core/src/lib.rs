//! Coarse-to-fine binary surface codes for dense 2D-3D correspondence.
//!
//! The crate covers the geometric side of a code-based pose pipeline:
//!
//! - [`mesh`]: loading and midpoint densification of triangle meshes.
//! - [`encoder`]: balanced hierarchical grouping of vertices into codes and
//!   the code → centroid lookup table.
//! - [`render`]: z-buffered rasterization of per-pixel code maps.
//! - [`matcher`]: code map → 2D-3D correspondences, with a spatial
//!   coherence prefilter.
//! - [`pnp`]: EPnP and a RANSAC wrapper.
//! - [`losses`]: the hierarchical training objective as plain numerics.
//! - [`metrics`]: ADD, ADD-S, recall and AUC.
//! - [`formats`]: binary codebook/code-map files and text interchange.
//! - [`harness`]: synthetic scenes with controlled code corruption.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise.

pub mod camera;
pub mod encoder;
pub mod formats;
pub mod harness;
pub mod losses;
pub mod matcher;
pub mod mesh;
pub mod metrics;
pub mod par;
pub mod pnp;
pub mod render;

pub use camera::{CameraIntrinsics, PoseSE3};
pub use encoder::{Code, CodeLayout, Codebook, EncodingParams, GroupingHierarchy};
pub use matcher::{Correspondence, RoiTransform};
pub use mesh::TriangleMesh;
pub use render::CodeMap;
