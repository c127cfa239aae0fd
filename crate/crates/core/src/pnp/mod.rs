//! Pose from 2D-3D correspondences: EPnP and a RANSAC wrapper.

mod epnp;
mod refine;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, PoseSE3};
use crate::matcher::Correspondence;
use crate::par;

pub use epnp::epnp;
pub use refine::{refine_pose, MAX_REFINE_ITERS};

/// Minimal sample size.
pub const SAMPLE_SIZE: usize = 4;
/// Hypotheses evaluated together before the early-exit test.
const BATCH: usize = 16;
const MAX_REFITS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum PnpError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("every candidate pose puts the points behind the camera")]
    BehindCamera,
    #[error("best hypothesis has {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub reproj_threshold_px: f64,
    pub max_iterations: usize,
    pub min_inliers: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            reproj_threshold_px: 2.0,
            max_iterations: 150,
            min_inliers: 6,
            confidence: 0.999,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), PnpError> {
        if !(self.reproj_threshold_px > 0.0) {
            return Err(PnpError::InvalidConfig("threshold must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(PnpError::InvalidConfig("iterations must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(PnpError::InvalidConfig("confidence must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Pixel distance between the projection of `corr.point` and `corr.pixel`;
/// infinite when the point lands behind the camera.
pub fn reprojection_error(pose: &PoseSE3, cam: &CameraIntrinsics, corr: &Correspondence) -> f64 {
    let p = pose.transform(&corr.point);
    match cam.project(&p) {
        Some(q) => (q - corr.pixel).norm(),
        None => f64::INFINITY,
    }
}

pub fn mean_reprojection_error(pose: &PoseSE3, cam: &CameraIntrinsics, corrs: &[Correspondence]) -> f64 {
    corrs
        .iter()
        .map(|c| reprojection_error(pose, cam, c))
        .sum::<f64>()
        / corrs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: PoseSE3,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    pub iterations_used: usize,
}

#[derive(Debug, Clone, Copy)]
struct Score {
    inliers: usize,
    mean_residual: f64,
}

impl Score {
    /// More inliers first, then a lower mean inlier residual.
    fn better_than(&self, other: &Score) -> bool {
        self.inliers > other.inliers
            || (self.inliers == other.inliers && self.mean_residual < other.mean_residual)
    }
}

fn score(pose: &PoseSE3, cam: &CameraIntrinsics, corrs: &[Correspondence], thr: f64) -> (Score, Vec<bool>) {
    let mut mask = Vec::with_capacity(corrs.len());
    let mut sum = 0.0;
    let mut n = 0;
    for c in corrs {
        let e = reprojection_error(pose, cam, c);
        let inl = e <= thr;
        if inl {
            sum += e;
            n += 1;
        }
        mask.push(inl);
    }
    let mean_residual = if n > 0 { sum / n as f64 } else { f64::INFINITY };
    (Score { inliers: n, mean_residual }, mask)
}

fn inlier_subset(corrs: &[Correspondence], mask: &[bool]) -> Vec<Correspondence> {
    corrs.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect()
}

/// Replaces a promising hypothesis by repeated refits on its own inliers
/// (EPnP, then the reprojection polish) until the inlier set settles. A
/// minimal-sample pose can be bent just enough to admit a few extra
/// borderline points, so ranking raw hypotheses by inlier count favors
/// distorted poses over the least-squares one. The result replaces the
/// hypothesis unless it has lost more than 1% of the inliers.
fn local_optimization(
    s: Score,
    pose: PoseSE3,
    cam: &CameraIntrinsics,
    corrs: &[Correspondence],
    thr: f64,
) -> (Score, PoseSE3) {
    let (_, mut mask) = score(&pose, cam, corrs, thr);
    let mut cur = (s, pose);
    for _ in 0..MAX_REFITS {
        let inl = inlier_subset(corrs, &mask);
        let start = epnp(&inl, cam).unwrap_or(cur.1);
        let refit = refine_pose(&start, cam, &inl);
        let (rs, rmask) = score(&refit, cam, corrs, thr);
        if rs.inliers * 100 < s.inliers * 99 {
            break;
        }
        let settled = rmask == mask;
        cur = (rs, refit);
        mask = rmask;
        if settled {
            break;
        }
    }
    cur
}

/// Iterations needed for `confidence` given inlier ratio `w`, reached once
/// `1 - (1 - w^4)^k >= confidence`.
fn enough(k: usize, w: f64, confidence: f64) -> bool {
    let miss = 1.0 - w.powi(SAMPLE_SIZE as i32);
    1.0 - miss.powi(k as i32) >= confidence
}

/// RANSAC over minimal EPnP hypotheses, then refits on the inlier set:
/// EPnP followed by a reprojection-error polish.
///
/// All samples are drawn up front from the seeded generator and evaluated
/// in fixed-size batches, so the result does not depend on thread count.
/// A refit is accepted only when it keeps at least as many inliers as the
/// winning hypothesis had.
pub fn ransac_pnp(
    corrs: &[Correspondence],
    cam: &CameraIntrinsics,
    config: &SolverConfig,
) -> Result<RansacResult, PnpError> {
    config.validate()?;
    let n = corrs.len();
    if n < SAMPLE_SIZE {
        return Err(PnpError::TooFewPoints(n));
    }
    let thr = config.reproj_threshold_px;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples: Vec<Vec<usize>> = (0..config.max_iterations)
        .map(|_| sample(&mut rng, n, SAMPLE_SIZE).into_vec())
        .collect();

    let mut best: Option<(Score, usize, PoseSE3)> = None;
    let mut used = 0;
    for batch in samples.chunks(BATCH) {
        let evaluated = par::map_slice(batch, |idx| {
            let subset: Vec<Correspondence> = idx.iter().map(|&i| corrs[i]).collect();
            epnp(&subset, cam).ok().map(|pose| (score(&pose, cam, corrs, thr).0, pose))
        });
        for (k, res) in evaluated.into_iter().enumerate() {
            let Some((s, pose)) = res else { continue };
            if best.as_ref().map_or(true, |(b, _, _)| s.better_than(b)) {
                let (s, pose) = local_optimization(s, pose, cam, corrs, thr);
                if best.as_ref().map_or(true, |(b, _, _)| s.better_than(b)) {
                    best = Some((s, used + k, pose));
                }
            }
        }
        used += batch.len();
        if let Some((s, _, _)) = &best {
            if enough(used, s.inliers as f64 / n as f64, config.confidence) {
                break;
            }
        }
    }

    let Some((s, _, mut pose)) = best else {
        return Err(PnpError::NoConsensus {
            best: 0,
            required: config.min_inliers,
        });
    };
    if s.inliers < config.min_inliers.max(SAMPLE_SIZE) {
        return Err(PnpError::NoConsensus {
            best: s.inliers,
            required: config.min_inliers,
        });
    }

    let (mut cur, mut mask) = score(&pose, cam, corrs, thr);
    for _ in 0..MAX_REFITS {
        let inl: Vec<Correspondence> = corrs
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(c, _)| *c)
            .collect();
        let Ok(refit) = epnp(&inl, cam) else { break };
        let refit = refine_pose(&refit, cam, &inl);
        let (ns, nmask) = score(&refit, cam, corrs, thr);
        if ns.inliers < s.inliers {
            break;
        }
        let same = nmask == mask;
        pose = refit;
        cur = ns;
        mask = nmask;
        if same {
            break;
        }
    }

    Ok(RansacResult {
        pose,
        inlier_count: cur.inliers,
        inliers: mask,
        iterations_used: used,
    })
}
