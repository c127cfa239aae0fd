use nalgebra::{DMatrix, DVector, Matrix3, Point2, Point3, SymmetricEigen, Vector3};

use super::{reprojection_error, PnpError};
use crate::camera::{CameraIntrinsics, PoseSE3};
use crate::matcher::Correspondence;

/// Eigenvalue ratio below which the point cloud is treated as flat.
const PLANAR_RATIO: f64 = 1e-12;
const GAUSS_NEWTON_ITERS: usize = 10;
/// Per-point cap when scoring candidates, so a point behind the camera does
/// not make every candidate infinitely bad.
const SCORE_CAP_PX: f64 = 1e9;

/// Control points from the principal axes of the model points: the centroid
/// plus one point per axis at the RMS extent along it. A flat cloud gets
/// three control points.
fn control_points(pw: &[Point3<f64>]) -> Result<Vec<Point3<f64>>, PnpError> {
    let n = pw.len() as f64;
    let c0 = Point3::from(pw.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n);
    let mut cov = Matrix3::zeros();
    for p in pw {
        let d = p - c0;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lam = order.map(|k| eig.eigenvalues[k].max(0.0));
    if !(lam[0] > 0.0) || lam[1] <= PLANAR_RATIO * lam[0] {
        return Err(PnpError::Degenerate(
            "model points are collinear or coincident".into(),
        ));
    }
    let axes = if lam[2] <= PLANAR_RATIO * lam[0] { 2 } else { 3 };
    let mut out = vec![c0];
    for a in 0..axes {
        let v = eig.eigenvectors.column(order[a]).into_owned();
        out.push(c0 + v * (lam[a] / n).sqrt());
    }
    Ok(out)
}

/// Barycentric coordinates of each point with respect to the control points.
fn barycentric(pw: &[Point3<f64>], cw: &[Point3<f64>]) -> Result<Vec<Vec<f64>>, PnpError> {
    let nc = cw.len();
    let basis = DMatrix::from_fn(3, nc - 1, |r, c| cw[c + 1][r] - cw[0][r]);
    // least squares so the planar (3x2) case works too
    let pinv = basis
        .clone()
        .pseudo_inverse(1e-300)
        .map_err(|e| PnpError::Degenerate(e.to_string()))?;
    Ok(pw
        .iter()
        .map(|p| {
            let a = &pinv * DVector::from_column_slice((p - cw[0]).as_slice());
            let mut alpha = Vec::with_capacity(nc);
            alpha.push(1.0 - a.sum());
            alpha.extend(a.iter());
            alpha
        })
        .collect())
}

fn pairs(nc: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::new();
    for a in 0..nc {
        for b in a + 1..nc {
            p.push((a, b));
        }
    }
    p
}

struct NullSpace {
    /// Candidate null vectors, each of length 3 * nc, best first.
    vectors: Vec<DVector<f64>>,
    nc: usize,
}

impl NullSpace {
    fn control_diff(&self, i: usize, a: usize, b: usize) -> Vector3<f64> {
        let v = &self.vectors[i];
        Vector3::new(
            v[3 * a] - v[3 * b],
            v[3 * a + 1] - v[3 * b + 1],
            v[3 * a + 2] - v[3 * b + 2],
        )
    }

    /// `dots[k][i][j] = dv_i · dv_j` for control-point pair `k`.
    fn dots(&self, n: usize) -> Vec<Vec<Vec<f64>>> {
        pairs(self.nc)
            .into_iter()
            .map(|(a, b)| {
                let dv: Vec<Vector3<f64>> = (0..n).map(|i| self.control_diff(i, a, b)).collect();
                (0..n)
                    .map(|i| (0..n).map(|j| dv[i].dot(&dv[j])).collect())
                    .collect()
            })
            .collect()
    }
}

fn null_space(alphas: &[Vec<f64>], xs: &[Point2<f64>], nc: usize) -> NullSpace {
    let m = 3 * nc;
    let mut mtm = DMatrix::<f64>::zeros(m, m);
    let mut row = vec![0.0; m];
    for (alpha, x) in alphas.iter().zip(xs) {
        for (coord, obs) in [(0usize, x.x), (1usize, x.y)] {
            row.iter_mut().for_each(|r| *r = 0.0);
            for j in 0..nc {
                row[3 * j + coord] = alpha[j];
                row[3 * j + 2] = -alpha[j] * obs;
            }
            for r in 0..m {
                if row[r] == 0.0 {
                    continue;
                }
                for c in 0..m {
                    mtm[(r, c)] += row[r] * row[c];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    NullSpace {
        vectors: order
            .iter()
            .take(4)
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect(),
        nc,
    }
}

/// Monomials `b_ij = beta_i beta_j` used to linearize each case.
fn monomials(n: usize, pair_count: usize) -> Vec<(usize, usize)> {
    match n {
        1 => vec![(0, 0)],
        2 => vec![(0, 0), (0, 1), (1, 1)],
        3 if pair_count >= 6 => vec![(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)],
        _ => (0..n).map(|k| (0, k)).collect(),
    }
}

fn initial_betas(n: usize, dots: &[Vec<Vec<f64>>], rho: &[f64]) -> Option<Vec<f64>> {
    let mono = monomials(n, rho.len());
    let l = DMatrix::from_fn(rho.len(), mono.len(), |k, c| {
        let (i, j) = mono[c];
        if i == j {
            dots[k][i][i]
        } else {
            2.0 * dots[k][i][j]
        }
    });
    let b = l
        .svd(true, true)
        .solve(&DVector::from_column_slice(rho), 1e-300)
        .ok()?;
    let lookup = |i: usize, j: usize| mono.iter().position(|&m| m == (i, j)).map(|p| b[p]);
    let b11 = lookup(0, 0)?;
    let beta1 = b11.abs().sqrt();
    if beta1 == 0.0 {
        return None;
    }
    let mut beta = vec![beta1];
    for k in 1..n {
        let v = match lookup(k, k) {
            Some(bkk) => bkk.abs().sqrt() * lookup(0, k)?.signum(),
            None => lookup(0, k)? / beta1,
        };
        beta.push(v);
    }
    Some(beta)
}

/// Refines betas so the control-point distances match the model's.
fn gauss_newton(beta: &mut [f64], dots: &[Vec<Vec<f64>>], rho: &[f64]) {
    let n = beta.len();
    for _ in 0..GAUSS_NEWTON_ITERS {
        let mut jac = DMatrix::zeros(rho.len(), n);
        let mut res = DVector::zeros(rho.len());
        for (k, d) in dots.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..n {
                let mut g = 0.0;
                for j in 0..n {
                    s += beta[i] * beta[j] * d[i][j];
                    g += beta[j] * d[i][j];
                }
                jac[(k, i)] = 2.0 * g;
            }
            res[k] = rho[k] - s;
        }
        let Ok(step) = jac.svd(true, true).solve(&res, 1e-300) else {
            return;
        };
        if step.iter().any(|s| !s.is_finite()) {
            return;
        }
        for i in 0..n {
            beta[i] += step[i];
        }
    }
}

/// Least-squares rigid transform taking `src` onto `dst`.
pub(crate) fn absolute_orientation(src: &[Point3<f64>], dst: &[Point3<f64>]) -> PoseSE3 {
    let n = src.len() as f64;
    let cs = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d.coords - cd) * (s.coords - cs).transpose();
    }
    let r = PoseSE3::orthonormalize(&h);
    PoseSE3 {
        rotation: r,
        translation: cd - r * cs,
    }
}

/// Closed-form EPnP. Tries null-space dimensions 1..4 (1..3 for flat
/// models) and keeps the candidate with the lowest mean reprojection error.
pub fn epnp(corrs: &[Correspondence], cam: &CameraIntrinsics) -> Result<PoseSE3, PnpError> {
    if corrs.len() < 4 {
        return Err(PnpError::TooFewPoints(corrs.len()));
    }
    let pw: Vec<Point3<f64>> = corrs.iter().map(|c| c.point).collect();
    let xs: Vec<Point2<f64>> = corrs.iter().map(|c| cam.normalize(&c.pixel)).collect();
    let cw = control_points(&pw)?;
    let nc = cw.len();
    let alphas = barycentric(&pw, &cw)?;
    let ns = null_space(&alphas, &xs, nc);
    let rho: Vec<f64> = pairs(nc)
        .into_iter()
        .map(|(a, b)| (cw[a] - cw[b]).norm_squared())
        .collect();
    let max_n = if nc == 4 { 4 } else { 3 };
    let dots = ns.dots(max_n);

    let mut best: Option<(f64, PoseSE3)> = None;
    for n in 1..=max_n {
        let sub: Vec<Vec<Vec<f64>>> = dots
            .iter()
            .map(|d| d[..n].iter().map(|r| r[..n].to_vec()).collect())
            .collect();
        let Some(mut beta) = initial_betas(n, &sub, &rho) else {
            continue;
        };
        gauss_newton(&mut beta, &sub, &rho);
        let x = (0..n).fold(DVector::zeros(3 * nc), |acc, i| acc + &ns.vectors[i] * beta[i]);
        let cc: Vec<Vector3<f64>> = (0..nc)
            .map(|j| Vector3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]))
            .collect();
        let mut pc: Vec<Point3<f64>> = alphas
            .iter()
            .map(|a| Point3::from((0..nc).fold(Vector3::zeros(), |s, j| s + cc[j] * a[j])))
            .collect();
        if pc.iter().filter(|p| p.z < 0.0).count() * 2 > pc.len() {
            pc.iter_mut().for_each(|p| *p = Point3::from(-p.coords));
        }
        let pose = absolute_orientation(&pw, &pc);
        if !pw.iter().any(|p| pose.transform(p).z > 0.0) {
            continue;
        }
        let err = corrs
            .iter()
            .map(|c| reprojection_error(&pose, cam, c).min(SCORE_CAP_PX))
            .sum::<f64>()
            / corrs.len() as f64;
        if err.is_finite() && best.as_ref().map_or(true, |(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, p)| p).ok_or(PnpError::BehindCamera)
}
