//! Synthetic end-to-end experiments: render ground-truth code maps for
//! random poses, corrupt them in a controlled way, then match, solve and
//! score.

mod bench;
mod config;
mod sample;

use thiserror::Error;

pub use bench::{
    run_bench, truncate_map, upsample_for, write_outputs, BenchOutput, BenchReport, BitStats, ConditionSummary, ObjectInfo,
    PoseRow, PreparedObject, Timings, REPORT_SCHEMA_VERSION,
};
pub use config::{
    AblationSpec, Builtin, CorruptionSpec, FilterMode, FilterSpec, MeshSpec, PoseSamplerSpec, ScenarioConfig,
};
pub use sample::{
    corrupt, digit_probabilities, erode, sample_pose, sample_poses, stream_rng, uniform_rotation, MAX_POSE_TRIES,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("no in-frame pose for pose {pose} after {tries} tries")]
    PoseSampling { pose: usize, tries: usize },
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Encode(#[from] crate::encoder::EncodeError),
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Match(#[from] crate::matcher::MatchError),
    #[error(transparent)]
    Pnp(#[from] crate::pnp::PnpError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Format(#[from] crate::formats::FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Whether the error comes from the scenario rather than the pipeline.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::Camera(_) | HarnessError::Pnp(crate::pnp::PnpError::InvalidConfig(_))
        ) || matches!(self, HarnessError::Encode(crate::encoder::EncodeError::InvalidParams(_)))
    }
}
