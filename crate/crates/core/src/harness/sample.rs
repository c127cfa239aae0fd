//! Seeded pose sampling and code-map corruption.

use std::f64::consts::TAU;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraIntrinsics, PoseSE3};
use crate::encoder::{Code, CodeLayout, Codebook};
use crate::render::CodeMap;

use super::config::PoseSamplerSpec;
use super::HarnessError;

/// Rejection cap per pose.
pub const MAX_POSE_TRIES: usize = 1000;

/// Independent generator for item `index` of stream family `tag`.
pub fn stream_rng(seed: u64, tag: u32, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((tag as u64) << 32) | index as u64);
    rng
}

/// Uniform rotation on SO(3) (Shoemake's subgroup algorithm).
pub fn uniform_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(
        b * (TAU * u3).cos(),
        a * (TAU * u2).sin(),
        a * (TAU * u2).cos(),
        b * (TAU * u3).sin(),
    );
    UnitQuaternion::new_normalize(q)
}

fn in_frame(pose: &PoseSE3, cam: &CameraIntrinsics, points: &[Point3<f64>]) -> bool {
    points.iter().all(|p| {
        cam.project(&pose.transform(p)).is_some_and(|q| {
            q.x >= 0.0 && q.y >= 0.0 && q.x < cam.width as f64 && q.y < cam.height as f64
        })
    })
}

/// Draws a pose whose projection of every point in `hull` lies inside the
/// image. Passing the vertices of the unsubdivided mesh is enough since
/// subdivision never leaves their convex hull.
pub fn sample_pose<R: Rng>(
    rng: &mut R,
    spec: &PoseSamplerSpec,
    cam: &CameraIntrinsics,
    hull: &[Point3<f64>],
) -> Option<PoseSE3> {
    let range = |rng: &mut R, [lo, hi]: [f64; 2]| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    for _ in 0..MAX_POSE_TRIES {
        let q = uniform_rotation(rng);
        let t = Vector3::new(range(rng, spec.x_mm), range(rng, spec.y_mm), range(rng, spec.z_mm));
        let pose = PoseSE3::from_quaternion(&q, t);
        if in_frame(&pose, cam, hull) {
            return Some(pose);
        }
    }
    None
}

/// `spec.count` poses; pose `i` uses its own generator so the sequence does
/// not depend on evaluation order.
pub fn sample_poses(
    spec: &PoseSamplerSpec,
    cam: &CameraIntrinsics,
    hull: &[Point3<f64>],
) -> Result<Vec<PoseSE3>, HarnessError> {
    (0..spec.count)
        .map(|i| {
            sample_pose(&mut stream_rng(spec.seed, 0, i), spec, cam, hull)
                .ok_or(HarnessError::PoseSampling { pose: i, tries: MAX_POSE_TRIES })
        })
        .collect()
}

/// Unmasks every pixel with an unmasked pixel (or the image border) within
/// `radius` in Chebyshev distance.
pub fn erode(map: &CodeMap, radius: u32) -> CodeMap {
    if radius == 0 {
        return map.clone();
    }
    let (w, h) = (map.width() as i64, map.height() as i64);
    let r = radius as i64;
    let mut out = map.clone();
    for v in 0..h {
        for u in 0..w {
            if !map.is_masked(u as u32, v as u32) {
                continue;
            }
            let keep = (-r..=r).all(|dv| {
                (-r..=r).all(|du| {
                    let (x, y) = (u + du, v + dv);
                    x >= 0 && y >= 0 && x < w && y < h && map.is_masked(x as u32, y as u32)
                })
            });
            if !keep {
                out.set_code(u as u32, v as u32, None);
            }
        }
    }
    out
}

/// Probability that digit `k` of `layout` changes when bits flip
/// independently with `bit_p` (most significant bit first).
pub fn digit_probabilities(layout: &CodeLayout, bit_p: &[f64]) -> Vec<f64> {
    let b = layout.bits_per_digit() as usize;
    bit_p.chunks(b).map(|c| 1.0 - c.iter().map(|p| 1.0 - p).product::<f64>()).collect()
}

/// Replaces each digit of each masked code, with its digit probability, by
/// a uniformly chosen different digit; for radix 2 this is a bit flip.
/// Afterwards each masked pixel is, with `unknown_rate`, replaced by a code
/// missing from `book`'s table when one can be found.
pub fn corrupt<R: Rng>(
    map: &CodeMap,
    book: &Codebook,
    bit_p: &[f64],
    unknown_rate: f64,
    rng: &mut R,
) -> CodeMap {
    let layout = map.layout();
    let r = layout.radix();
    let digit_p = digit_probabilities(&layout, bit_p);
    let complete = book.is_complete();
    let mut out = map.clone();
    for slot in out.codes_mut().iter_mut() {
        let Some(code) = slot else { continue };
        let mut digits = layout.to_digits(*code);
        for (d, &p) in digits.iter_mut().zip(&digit_p) {
            if p > 0.0 && rng.gen::<f64>() < p {
                *d = (*d + 1 + rng.gen_range(0..r - 1)) % r;
            }
        }
        *code = layout.from_digits(&digits).expect("digits stay in range");
        if unknown_rate > 0.0 && !complete && rng.gen::<f64>() < unknown_rate {
            if let Some(c) = missing_code(&layout, book, rng) {
                *code = c;
            }
        }
    }
    out
}

fn missing_code<R: Rng>(layout: &CodeLayout, book: &Codebook, rng: &mut R) -> Option<Code> {
    let bits = layout.total_bits();
    (0..64)
        .map(|_| {
            let c: Code = rng.gen();
            if bits >= 64 { c } else { c & ((1 << bits) - 1) }
        })
        .find(|&c| layout.is_valid(c) && book.decode(c).is_none())
}
