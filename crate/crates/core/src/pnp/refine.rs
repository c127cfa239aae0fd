//! Levenberg-Marquardt polish of a pose on its reprojection error.

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3, Vector6};

use crate::camera::{CameraIntrinsics, PoseSE3};
use crate::matcher::Correspondence;

/// Iteration cap for [`refine_pose`].
pub const MAX_REFINE_ITERS: usize = 30;

fn cost(pose: &PoseSE3, cam: &CameraIntrinsics, corrs: &[Correspondence]) -> f64 {
    corrs
        .iter()
        .map(|c| {
            let p = pose.transform(&c.point);
            if p.z <= 0.0 {
                return f64::INFINITY;
            }
            let u = cam.fx * p.x / p.z + cam.cx - c.pixel.x;
            let v = cam.fy * p.y / p.z + cam.cy - c.pixel.y;
            u * u + v * v
        })
        .sum()
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Minimizes the summed squared pixel error of `corrs` starting from
/// `pose`. Updates are applied on the left, `R <- exp(w) R` and
/// `t <- exp(w) t + dt`. Never returns a pose with a higher cost than the
/// input.
pub fn refine_pose(pose: &PoseSE3, cam: &CameraIntrinsics, corrs: &[Correspondence]) -> PoseSE3 {
    if corrs.len() < 3 {
        return *pose;
    }
    let mut cur = *pose;
    let mut cur_cost = cost(&cur, cam, corrs);
    if !cur_cost.is_finite() {
        return cur;
    }
    let mut mu = 1e-3;
    for _ in 0..MAX_REFINE_ITERS {
        let mut jtj = Matrix6::<f64>::zeros();
        let mut jtr = Vector6::<f64>::zeros();
        for c in corrs {
            let p = cur.transform(&c.point).coords;
            let iz = 1.0 / p.z;
            let r = [
                cam.fx * p.x * iz + cam.cx - c.pixel.x,
                cam.fy * p.y * iz + cam.cy - c.pixel.y,
            ];
            // d(projection)/d(camera point)
            let dp = [
                Vector3::new(cam.fx * iz, 0.0, -cam.fx * p.x * iz * iz),
                Vector3::new(0.0, cam.fy * iz, -cam.fy * p.y * iz * iz),
            ];
            let dw = -skew(&p);
            for k in 0..2 {
                let jw = dw.transpose() * dp[k];
                let j = Vector6::new(jw.x, jw.y, jw.z, dp[k].x, dp[k].y, dp[k].z);
                jtj += j * j.transpose();
                jtr += j * r[k];
            }
        }
        let mut improved = false;
        while mu < 1e12 {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += mu * jtj[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let step = chol.solve(&-jtr);
            let rot = Rotation3::new(Vector3::new(step[0], step[1], step[2]));
            let next = PoseSE3 {
                rotation: rot * cur.rotation,
                translation: rot * cur.translation + Vector3::new(step[3], step[4], step[5]),
            };
            let next_cost = cost(&next, cam, corrs);
            if next_cost < cur_cost {
                let gain = cur_cost - next_cost;
                cur = next;
                cur_cost = next_cost;
                mu = (mu * 0.1).max(1e-12);
                improved = gain > 1e-12 * cur_cost.max(1e-300) && step.norm() > 1e-14;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    cur.rotation = PoseSE3::orthonormalize(&cur.rotation);
    cur
}
