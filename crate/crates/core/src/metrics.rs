//! Pose accuracy: ADD, ADD-S, threshold recall and AUC.

use std::collections::BTreeMap;

use nalgebra::Point3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rstar::primitives::GeomWithData;
use rstar::RTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::PoseSE3;
use crate::par;

/// Point cap for ADD-S and the seed of the subsample above it.
pub const ADDS_MAX_POINTS: usize = 10_000;
pub const ADDS_SUBSAMPLE_SEED: u64 = 0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("point set is empty")]
    EmptyPoints,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Exact area under the accuracy step curve.
    AllPoints,
    /// Mean accuracy at 11 evenly spaced thresholds from 0 to the maximum.
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub diameter_mm: f64,
    pub threshold_fraction: f64,
    pub auc_max_mm: f64,
}

impl EvalConfig {
    pub fn new(diameter_mm: f64) -> Result<Self, MetricsError> {
        let c = Self {
            diameter_mm,
            threshold_fraction: 0.10,
            auc_max_mm: 100.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.diameter_mm > 0.0) {
            return Err(MetricsError::InvalidConfig(format!("diameter {}", self.diameter_mm)));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction <= 1.0) {
            return Err(MetricsError::InvalidConfig(format!(
                "threshold fraction {}",
                self.threshold_fraction
            )));
        }
        if !(self.auc_max_mm > 0.0) {
            return Err(MetricsError::InvalidConfig(format!("AUC max {}", self.auc_max_mm)));
        }
        Ok(())
    }

    pub fn threshold_mm(&self) -> f64 {
        self.threshold_fraction * self.diameter_mm
    }
}

/// Mean distance between corresponding model points under the two poses.
pub fn add_error(pred: &PoseSE3, gt: &PoseSE3, points: &[Point3<f64>]) -> Result<f64, MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::EmptyPoints);
    }
    let d = par::map_slice(points, |p| (pred.transform(p) - gt.transform(p)).norm());
    Ok(d.iter().sum::<f64>() / points.len() as f64)
}

/// Mean distance from each predicted model point to the closest model point
/// under the ground-truth pose. Nearest neighbors come from an R-tree; the
/// distance is recomputed from the returned point.
pub fn adds_error(pred: &PoseSE3, gt: &PoseSE3, points: &[Point3<f64>]) -> Result<f64, MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::EmptyPoints);
    }
    let targets: Vec<Point3<f64>> = points.iter().map(|p| gt.transform(p)).collect();
    let tree = RTree::bulk_load(
        targets
            .iter()
            .enumerate()
            .map(|(i, p)| GeomWithData::new([p.x, p.y, p.z], i))
            .collect(),
    );
    let d = par::map_slice(points, |p| {
        let q = pred.transform(p);
        let nn = tree.nearest_neighbor(&[q.x, q.y, q.z]).expect("tree is non-empty");
        (q - targets[nn.data]).norm()
    });
    Ok(d.iter().sum::<f64>() / points.len() as f64)
}

/// At most `cap` points, chosen by a seeded uniform index sample and kept
/// in their original order.
pub fn subsample_points(points: &[Point3<f64>], cap: usize, seed: u64) -> Vec<Point3<f64>> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, points.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| points[i]).collect()
}

/// Whether an error counts as correct at threshold `tau`: strictly below
/// it, except that a zero error is correct at every threshold including 0.
fn correct(e: f64, tau: f64) -> bool {
    e < tau || e == 0.0
}

/// Fraction of errors strictly below `threshold_fraction * diameter`.
/// Empty input gives 0.
pub fn recall_add(errors: &[f64], config: &EvalConfig) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let t = config.threshold_mm();
    errors.iter().filter(|&&e| e < t).count() as f64 / errors.len() as f64
}

/// Area under the accuracy-vs-threshold curve on `[0, auc_max_mm]`,
/// normalized to `[0, 1]`. Empty input gives 0.
pub fn auc_add(errors: &[f64], config: &EvalConfig, mode: Interpolation) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let max = config.auc_max_mm;
    let n = errors.len() as f64;
    match mode {
        // each error contributes the length of the threshold range where it
        // is correct
        Interpolation::AllPoints => errors.iter().map(|&e| (max - e).max(0.0)).sum::<f64>() / (n * max),
        Interpolation::ElevenPoint => {
            (0..=10)
                .map(|k| {
                    let tau = max * k as f64 / 10.0;
                    errors.iter().filter(|&&e| correct(e, tau)).count() as f64 / n
                })
                .sum::<f64>()
                / 11.0
        }
    }
}

/// Exact largest pairwise distance.
///
/// Points are visited by decreasing distance `r` from the centroid; a pair
/// can only beat the current best if `r_i + r_j` does, which prunes most
/// of the quadratic scan.
pub fn diameter(points: &[Point3<f64>]) -> Result<f64, MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    let c = points.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / points.len() as f64;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.coords - c).norm(), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // slack so rounding in the bound never prunes a true maximum
    let bound = |x: f64| x * (1.0 + 1e-12);
    let mut best = 0.0f64;
    for a in 0..order.len() {
        let (ra, ia) = order[a];
        if a + 1 < order.len() && bound(ra + order[a + 1].0) < best {
            break;
        }
        for &(rb, ib) in &order[a + 1..] {
            if bound(ra + rb) < best {
                break;
            }
            best = best.max((points[ia] - points[ib]).norm());
        }
    }
    Ok(best)
}

/// Summary of one object's pose errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectEval {
    pub n: usize,
    pub recall_add: f64,
    pub auc_add_allpoints: f64,
    pub auc_add_11pt: f64,
    pub mean_error_mm: f64,
}

impl ObjectEval {
    pub fn from_errors(errors: &[f64], config: &EvalConfig) -> Self {
        let n = errors.len();
        Self {
            n,
            recall_add: recall_add(errors, config),
            auc_add_allpoints: auc_add(errors, config, Interpolation::AllPoints),
            auc_add_11pt: auc_add(errors, config, Interpolation::ElevenPoint),
            mean_error_mm: if n == 0 { 0.0 } else { errors.iter().sum::<f64>() / n as f64 },
        }
    }
}

/// Per-object results plus their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub objects: BTreeMap<String, ObjectEval>,
    pub mean: ObjectEval,
}

impl EvalReport {
    pub fn new(objects: BTreeMap<String, ObjectEval>) -> Self {
        let k = objects.len().max(1) as f64;
        let avg = |f: fn(&ObjectEval) -> f64| objects.values().map(f).sum::<f64>() / k;
        let mean = ObjectEval {
            n: objects.values().map(|o| o.n).sum(),
            recall_add: avg(|o| o.recall_add),
            auc_add_allpoints: avg(|o| o.auc_add_allpoints),
            auc_add_11pt: avg(|o| o.auc_add_11pt),
            mean_error_mm: avg(|o| o.mean_error_mm),
        };
        Self { objects, mean }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn cfg() -> EvalConfig {
        EvalConfig::new(100.0).unwrap()
    }

    #[test]
    fn add_of_shift_is_its_length() {
        let pts = crate::mesh::primitives::icosahedron(30.0).vertices().to_vec();
        let gt = PoseSE3::identity();
        let pred = PoseSE3::from_translation(Vector3::new(3.0, 4.0, 0.0));
        assert!((add_error(&pred, &gt, &pts).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(add_error(&gt, &gt, &pts).unwrap(), 0.0);
        assert_eq!(adds_error(&gt, &gt, &pts).unwrap(), 0.0);
        assert_eq!(add_error(&gt, &gt, &[]), Err(MetricsError::EmptyPoints));
    }

    #[test]
    fn recall_threshold_is_strict() {
        assert_eq!(recall_add(&[0.0, 0.0], &cfg()), 1.0);
        assert_eq!(recall_add(&[5.0, 15.0], &cfg()), 0.5);
        assert_eq!(recall_add(&[10.0], &cfg()), 0.0);
    }

    #[test]
    fn auc_reference_values() {
        let c = cfg();
        for mode in [Interpolation::AllPoints, Interpolation::ElevenPoint] {
            assert_eq!(auc_add(&[0.0, 0.0], &c, mode), 1.0);
            assert_eq!(auc_add(&[101.0, 250.0], &c, mode), 0.0);
        }
        assert_eq!(auc_add(&[50.0], &c, Interpolation::AllPoints), 0.5);
        assert!((auc_add(&[50.0], &c, Interpolation::ElevenPoint) - 5.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn diameter_small_cases() {
        let cube = crate::mesh::primitives::cube(1.0);
        assert!((diameter(cube.vertices()).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        let two = [Point3::origin(), Point3::new(0.0, 7.0, 0.0)];
        assert_eq!(diameter(&two).unwrap(), 7.0);
        assert_eq!(diameter(&two[..1]), Err(MetricsError::TooFewPoints(1)));
    }

    #[test]
    fn subsample_is_capped_and_ordered() {
        let pts: Vec<Point3<f64>> = (0..50).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let s = subsample_points(&pts, 10, 3);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0].x < w[1].x));
        assert_eq!(subsample_points(&pts, 100, 3), pts);
    }

    #[test]
    fn report_means() {
        let mut m = BTreeMap::new();
        m.insert("a".into(), ObjectEval::from_errors(&[0.0, 0.0], &cfg()));
        m.insert("b".into(), ObjectEval::from_errors(&[200.0, 200.0], &cfg()));
        let r = EvalReport::new(m);
        assert_eq!(r.mean.recall_add, 0.5);
        assert_eq!(r.mean.n, 4);
        assert_eq!(r.mean.mean_error_mm, 100.0);
    }
}
