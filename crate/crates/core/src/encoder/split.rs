//! Size-constrained k-means used to build the grouping hierarchy.
//!
//! Both splitters seed centers with k-means++ and then run Lloyd iterations
//! in which the assignment step respects fixed child capacities. The
//! two-way splitter additionally starts from median cuts along the principal
//! axes, which escapes the symmetric fixed points k-means++ seeds fall into
//! on regular point sets. For two centers the capacity-constrained
//! assignment that minimizes the summed squared distance is exact: sort by
//! `|p-a|^2 - |p-b|^2` and cut at the median. All starts are tried and the
//! lowest within-group sum of squares wins.

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lloyd iterations per restart.
pub const MAX_LLOYD_ITERS: usize = 32;
/// Center movement (mm) below which Lloyd stops early.
pub const CONVERGENCE_MM: f64 = 1e-9;
/// Independent k-means++ seedings per split.
pub const RESTARTS: usize = 4;

fn mean(points: &[Point3<f64>], idx: &[u32]) -> Point3<f64> {
    let s = idx
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i as usize].coords);
    Point3::from(s / idx.len() as f64)
}

fn sse(points: &[Point3<f64>], groups: &[Vec<u32>]) -> f64 {
    groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let c = mean(points, g);
            g.iter()
                .map(|&i| (points[i as usize] - c).norm_squared())
                .sum::<f64>()
        })
        .sum()
}

/// k-means++ seeding over the subset `idx`.
fn seed_centers(
    points: &[Point3<f64>],
    idx: &[u32],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Point3<f64>> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[idx[rng.gen_range(0..idx.len())] as usize]);
    let mut d2: Vec<f64> = idx
        .iter()
        .map(|&i| (points[i as usize] - centers[0]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = idx.len() - 1;
            for (n, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = n;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..idx.len())
        };
        let c = points[idx[pick] as usize];
        centers.push(c);
        for (n, &i) in idx.iter().enumerate() {
            d2[n] = d2[n].min((points[i as usize] - c).norm_squared());
        }
    }
    centers
}

/// Center pairs from median cuts along the three principal axes.
fn axis_starts(points: &[Point3<f64>], idx: &[u32], n_left: usize) -> Vec<(Point3<f64>, Point3<f64>)> {
    let c = mean(points, idx);
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i as usize] - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    (0..3)
        .map(|k| {
            let axis = eig.eigenvectors.column(k).into_owned();
            let mut keyed: Vec<(f64, u32)> = idx
                .iter()
                .map(|&i| (axis.dot(&(points[i as usize] - c)), i))
                .collect();
            keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let left: Vec<u32> = keyed[..n_left].iter().map(|x| x.1).collect();
            let right: Vec<u32> = keyed[n_left..].iter().map(|x| x.1).collect();
            (mean(points, &left), mean(points, &right))
        })
        .collect()
}

/// Splits `idx` into two groups of sizes `ceil(n/2)` and `floor(n/2)`.
///
/// Returned index lists are sorted ascending. A single index yields
/// `([i], [])`. Ties in the assignment key are broken by index.
pub(crate) fn two_split(points: &[Point3<f64>], idx: &[u32], seed: u64) -> [Vec<u32>; 2] {
    let n = idx.len();
    if n <= 1 {
        return [idx.to_vec(), Vec::new()];
    }
    let n_left = n.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, [Vec<u32>; 2])> = None;
    let mut keyed: Vec<(f64, u32)> = Vec::with_capacity(n);

    let mut starts = axis_starts(points, idx, n_left);
    for _ in 0..RESTARTS {
        let c = seed_centers(points, idx, 2, &mut rng);
        starts.push((c[0], c[1]));
    }
    for (mut a, mut b) in starts {
        let mut groups = [Vec::new(), Vec::new()];
        for _ in 0..MAX_LLOYD_ITERS {
            keyed.clear();
            keyed.extend(idx.iter().map(|&i| {
                let p = points[i as usize];
                ((p - a).norm_squared() - (p - b).norm_squared(), i)
            }));
            if n_left < n {
                keyed.select_nth_unstable_by(n_left, |x, y| {
                    x.0.total_cmp(&y.0).then(x.1.cmp(&y.1))
                });
            }
            let mut left: Vec<u32> = keyed[..n_left].iter().map(|x| x.1).collect();
            let mut right: Vec<u32> = keyed[n_left..].iter().map(|x| x.1).collect();
            left.sort_unstable();
            right.sort_unstable();
            let (na, nb) = (mean(points, &left), mean(points, &right));
            let moved = (na - a).norm().max((nb - b).norm());
            a = na;
            b = nb;
            groups = [left, right];
            if moved < CONVERGENCE_MM {
                break;
            }
        }
        let score = sse(points, &groups);
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, groups));
        }
    }
    best.expect("at least one restart").1
}

/// Balanced `k`-way split: child `c` receives `ceil(n/k)` members if
/// `c < n mod k`, else `floor(n/k)`.
///
/// Assignment visits points in order of decreasing regret (gap between the
/// nearest and second-nearest center) and gives each the nearest center that
/// still has capacity.
pub(crate) fn k_split(points: &[Point3<f64>], idx: &[u32], k: usize, seed: u64) -> Vec<Vec<u32>> {
    assert!(k >= 2);
    let n = idx.len();
    if n <= 1 {
        let mut out = vec![Vec::new(); k];
        out[0] = idx.to_vec();
        return out;
    }
    let caps: Vec<usize> = (0..k).map(|c| n / k + usize::from(c < n % k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<Vec<u32>>)> = None;

    for _ in 0..RESTARTS {
        let mut centers = seed_centers(points, idx, k, &mut rng);
        let mut groups = vec![Vec::new(); k];
        for _ in 0..MAX_LLOYD_ITERS {
            // (regret, vertex, centers sorted by distance)
            let mut order: Vec<(f64, u32, Vec<usize>)> = idx
                .iter()
                .map(|&i| {
                    let p = points[i as usize];
                    let mut ranked: Vec<(f64, usize)> = centers
                        .iter()
                        .enumerate()
                        .map(|(c, ctr)| ((p - ctr).norm_squared(), c))
                        .collect();
                    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    let regret = ranked[1].0 - ranked[0].0;
                    (regret, i, ranked.into_iter().map(|r| r.1).collect())
                })
                .collect();
            order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            let mut fill = vec![0usize; k];
            let mut next = vec![Vec::new(); k];
            for (_, i, ranked) in &order {
                let c = *ranked
                    .iter()
                    .find(|&&c| fill[c] < caps[c])
                    .expect("capacities sum to n");
                fill[c] += 1;
                next[c].push(*i);
            }
            for g in next.iter_mut() {
                g.sort_unstable();
            }
            let mut moved = 0.0f64;
            for (c, g) in next.iter().enumerate() {
                if !g.is_empty() {
                    let m = mean(points, g);
                    moved = moved.max((m - centers[c]).norm());
                    centers[c] = m;
                }
            }
            groups = next;
            if moved < CONVERGENCE_MM {
                break;
            }
        }
        let score = sse(points, &groups);
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, groups));
        }
    }
    best.expect("at least one restart").1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 3]]) -> Vec<Point3<f64>> {
        v.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()
    }

    #[test]
    fn k_split_capacities() {
        let p: Vec<Point3<f64>> = (0..11).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let idx: Vec<u32> = (0..11).collect();
        let g = k_split(&p, &idx, 3, 5);
        let sizes: Vec<usize> = g.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
        let mut all: Vec<u32> = g.concat();
        all.sort_unstable();
        assert_eq!(all, idx);
        // contiguous runs on a line
        for grp in &g {
            assert_eq!(grp.last().unwrap() - grp[0] + 1, grp.len() as u32);
        }
    }

    #[test]
    fn single_point_goes_left() {
        let p = pts(&[[1.0, 2.0, 3.0]]);
        assert_eq!(two_split(&p, &[0], 1), [vec![0], vec![]]);
        assert_eq!(k_split(&p, &[0], 3, 1)[0], vec![0]);
    }

    #[test]
    fn identical_points_still_balance() {
        let p = pts(&[[1.0, 1.0, 1.0]; 7]);
        let idx: Vec<u32> = (0..7).collect();
        let [l, r] = two_split(&p, &idx, 9);
        assert_eq!((l.len(), r.len()), (4, 3));
    }
}
