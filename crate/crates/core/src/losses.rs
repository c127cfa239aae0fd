//! The hierarchical code objective as plain numerics.
//!
//! Everything here works on `f64` slices so a training framework can call
//! it directly or use it as a reference. Per-bit quantities are indexed by
//! bit position `j = 0..d`, with `j = 0` the coarsest bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Code, CodeLayout};
use crate::render::CodeMap;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probability {value} at index {index} is outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

fn check_len(expected: usize, got: usize) -> Result<(), LossError> {
    if expected == got {
        Ok(())
    } else {
        Err(LossError::LengthMismatch { expected, got })
    }
}

fn check_probs(p: &[f64]) -> Result<(), LossError> {
    match p.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(index) => Err(LossError::InvalidProbability {
            index,
            value: p[index],
        }),
        None => Ok(()),
    }
}

/// Per-pixel bit probabilities and mask probability, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionMap {
    pub width: u32,
    pub height: u32,
    pub digits: u32,
    /// `bits[(pixel * digits) + j]`.
    pub bits: Vec<f64>,
    pub mask: Vec<f64>,
}

impl PredictionMap {
    pub fn new(width: u32, height: u32, digits: u32, bits: Vec<f64>, mask: Vec<f64>) -> Result<Self, LossError> {
        let map = Self {
            width,
            height,
            digits,
            bits,
            mask,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let n = self.width as usize * self.height as usize;
        if self.digits == 0 || self.digits > 64 {
            return Err(LossError::InvalidParams(format!("{} bits per code", self.digits)));
        }
        check_len(n, self.mask.len())?;
        check_len(n * self.digits as usize, self.bits.len())?;
        check_probs(&self.bits)?;
        check_probs(&self.mask)
    }

    pub fn pixel_count(&self) -> usize {
        self.mask.len()
    }

    pub fn pixel_bits(&self, i: usize) -> &[f64] {
        let d = self.digits as usize;
        &self.bits[i * d..(i + 1) * d]
    }
}

/// Exponential moving average of the per-bit error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub values: Vec<f64>,
    pub lambda: f64,
}

impl ErrorHistogram {
    pub const DEFAULT_LAMBDA: f64 = 0.05;

    pub fn new(digits: usize, lambda: f64) -> Self {
        Self {
            values: vec![0.0; digits],
            lambda,
        }
    }
}

/// Normalized per-bit loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossParams {
    /// Weight of the code term against the mask term.
    pub alpha: f64,
    /// Log arguments are clamped to `[eps, 1 - eps]`.
    pub eps: f64,
    /// Sharpness of the active-bit weighting.
    pub sigma: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            eps: 1e-7,
            sigma: 0.5,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.alpha >= 0.0) {
            return Err(LossError::InvalidParams(format!("alpha = {}", self.alpha)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(LossError::InvalidParams(format!("eps = {}", self.eps)));
        }
        Ok(())
    }
}

fn bit(code: Code, j: usize, d: usize) -> bool {
    code >> (d - 1 - j) & 1 == 1
}

/// Rounds probabilities to a binary code map: bit set iff `p >= 0.5`, pixel
/// masked iff its mask probability is `>= 0.5`.
pub fn round_codes(pred: &PredictionMap) -> Result<CodeMap, LossError> {
    pred.validate()?;
    let layout = CodeLayout::binary(pred.digits).map_err(|e| LossError::InvalidParams(e.to_string()))?;
    let codes = (0..pred.pixel_count())
        .map(|i| {
            (pred.mask[i] >= 0.5).then(|| {
                pred.pixel_bits(i)
                    .iter()
                    .fold(0, |acc, &p| (acc << 1) | Code::from(p >= 0.5))
            })
        })
        .collect();
    Ok(CodeMap::from_parts(pred.width, pred.height, layout, codes, None))
}

/// Weighted binary cross-entropy between target bits and probabilities:
/// `sum_j w_j * -(b_j ln p_j + (1 - b_j) ln(1 - p_j))`, with `p` clamped to
/// `[eps, 1 - eps]`.
pub fn hamming_bce(bits: &[bool], p: &[f64], w: &WeightVector, eps: f64) -> Result<f64, LossError> {
    check_len(bits.len(), p.len())?;
    check_len(bits.len(), w.0.len())?;
    Ok(bits
        .iter()
        .zip(p)
        .zip(&w.0)
        .map(|((&b, &p), &w)| {
            let p = p.clamp(eps, 1.0 - eps);
            w * -(if b { p.ln() } else { (1.0 - p).ln() })
        })
        .sum())
}

/// Gradient of [`hamming_bce`] with respect to `p`:
/// `w_j * (-(b_j / p_j) + (1 - b_j) / (1 - p_j))`. Zero where `p` lies
/// outside the clamp interval.
pub fn hamming_bce_grad(bits: &[bool], p: &[f64], w: &WeightVector, eps: f64) -> Result<Vec<f64>, LossError> {
    check_len(bits.len(), p.len())?;
    check_len(bits.len(), w.0.len())?;
    Ok(bits
        .iter()
        .zip(p)
        .zip(&w.0)
        .map(|((&b, &p), &w)| {
            if p < eps || p > 1.0 - eps {
                0.0
            } else if b {
                -w / p
            } else {
                w / (1.0 - p)
            }
        })
        .collect())
}

/// `H_j <- lambda * err_j + (1 - lambda) * H_j`, where `err_j` is the
/// fraction of pairs whose bit `j` differs. An empty batch leaves the
/// histogram unchanged.
pub fn update_histogram(hist: &ErrorHistogram, gt: &[Code], pred: &[Code]) -> Result<ErrorHistogram, LossError> {
    check_len(gt.len(), pred.len())?;
    if gt.is_empty() {
        return Ok(hist.clone());
    }
    let d = hist.values.len();
    let mut wrong = vec![0usize; d];
    for (&g, &p) in gt.iter().zip(pred) {
        let diff = g ^ p;
        for (j, w) in wrong.iter_mut().enumerate() {
            *w += usize::from(bit(diff, j, d));
        }
    }
    let n = gt.len() as f64;
    let l = hist.lambda;
    Ok(ErrorHistogram {
        values: hist
            .values
            .iter()
            .zip(wrong)
            .map(|(&h, w)| l * (w as f64 / n) + (1.0 - l) * h)
            .collect(),
        lambda: l,
    })
}

/// `w_j = exp(sigma * min(H_j, 0.5 - H_j))`, normalized to sum to 1.
pub fn compute_weights(hist: &ErrorHistogram, sigma: f64) -> WeightVector {
    let raw: Vec<f64> = hist
        .values
        .iter()
        .map(|&h| (sigma * h.min(0.5 - h)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    WeightVector(raw.into_iter().map(|r| r / total).collect())
}

/// Mean absolute difference between mask probabilities and the target mask.
pub fn mask_loss(pred: &[f64], gt: &[bool]) -> Result<f64, LossError> {
    check_len(gt.len(), pred.len())?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| (p - f64::from(u8::from(g))).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TotalLoss {
    pub total: f64,
    pub mask: f64,
    pub hier: f64,
    /// Pixels that entered the code term.
    pub gated_pixels: usize,
    pub histogram: ErrorHistogram,
    pub weights: WeightVector,
}

/// `L_mask + alpha * L_hier`.
///
/// The code term is averaged over pixels that are inside the rounded
/// predicted mask and carry a ground-truth code. The histogram is first
/// updated with that batch; the refreshed histogram sets the weights used
/// in the same call.
pub fn total_loss(
    pred: &PredictionMap,
    gt: &CodeMap,
    hist: &ErrorHistogram,
    params: &LossParams,
) -> Result<TotalLoss, LossError> {
    pred.validate()?;
    params.validate()?;
    check_len(pred.pixel_count(), gt.pixel_count())?;
    let d = pred.digits as usize;
    check_len(d, gt.layout().total_bits() as usize)?;
    check_len(d, hist.values.len())?;

    let rounded = round_codes(pred)?;
    let gated: Vec<(usize, Code, Code)> = (0..pred.pixel_count())
        .filter_map(|i| Some((i, gt.codes()[i]?, rounded.codes()[i]?)))
        .collect();
    let (gt_codes, pred_codes): (Vec<Code>, Vec<Code>) = gated.iter().map(|&(_, g, p)| (g, p)).unzip();
    let histogram = update_histogram(hist, &gt_codes, &pred_codes)?;
    let weights = compute_weights(&histogram, params.sigma);

    let mut hier_sum = 0.0;
    for &(i, g, _) in &gated {
        let bits: Vec<bool> = (0..d).map(|j| bit(g, j, d)).collect();
        hier_sum += hamming_bce(&bits, pred.pixel_bits(i), &weights, params.eps)?;
    }
    let hier = if gated.is_empty() {
        0.0
    } else {
        hier_sum / gated.len() as f64
    };
    let mask = mask_loss(&pred.mask, &gt.mask())?;
    Ok(TotalLoss {
        total: mask + params.alpha * hier,
        mask,
        hier,
        gated_pixels: gated.len(),
        histogram,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_ties_go_up() {
        let p = PredictionMap::new(2, 1, 2, vec![0.9, 0.1, 0.5, 0.49], vec![1.0, 0.5]).unwrap();
        let m = round_codes(&p).unwrap();
        assert_eq!(m.codes(), &[Some(0b10), Some(0b10)]);
        let off = PredictionMap::new(1, 1, 2, vec![0.9, 0.9], vec![0.49]).unwrap();
        assert_eq!(round_codes(&off).unwrap().codes(), &[None]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PredictionMap::new(1, 1, 2, vec![1.2, 0.0], vec![0.0]).is_err());
        assert!(PredictionMap::new(1, 1, 2, vec![0.2], vec![0.0]).is_err());
        assert!(hamming_bce(&[true], &[0.5, 0.5], &WeightVector::uniform(2), 1e-7).is_err());
        assert!(mask_loss(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn half_probability_costs_ln2() {
        let l = hamming_bce(&[true, false, true], &[0.5; 3], &WeightVector::uniform(3), 1e-7).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn histogram_limits() {
        let mut h = ErrorHistogram::new(1, 0.05);
        for _ in 0..2000 {
            h = update_histogram(&h, &[0, 0, 0, 0], &[1, 0, 0, 0]).unwrap();
        }
        assert!((h.values[0] - 0.25).abs() < 1e-12);
        let same = update_histogram(&h, &[], &[]).unwrap();
        assert_eq!(same, h);
    }

    #[test]
    fn weights_are_symmetric_about_quarter() {
        // dyadic values keep 0.5 - h exact
        let a = compute_weights(&ErrorHistogram { values: vec![0.125, 0.3125, 0.0625], lambda: 0.05 }, 0.5);
        let b = compute_weights(&ErrorHistogram { values: vec![0.375, 0.1875, 0.4375], lambda: 0.05 }, 0.5);
        assert_eq!(a, b);
    }
}
