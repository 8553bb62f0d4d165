//! Minimum-norm point of the convex hull of a finite point set.
//!
//! Wolfe's method: keep a "corral" of affinely independent points, move to
//! the affine minimizer of the corral when it lies in the relative interior
//! and otherwise step back to the boundary and drop a point. A Frank–Wolfe
//! loop takes over if the major-cycle cap is hit or an affine solve fails.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-9;
const RIDGE: f64 = 1e-12;
const WEIGHT_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HullError {
    #[error("point set is empty")]
    Empty,
    #[error("point {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
}

/// A nonempty list of finite points of a common dimension `d ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vec<f64>>,
}

impl PointSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, HullError> {
        let d = points.first().ok_or(HullError::Empty)?.len();
        if d == 0 {
            return Err(HullError::DimensionMismatch {
                index: 0,
                expected: 1,
                got: 0,
            });
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(HullError::DimensionMismatch {
                    index: i,
                    expected: d,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(HullError::NonFinite(i));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinNormPoint {
    pub distance: f64,
    pub point: Vec<f64>,
    /// Convex coefficients, one per input point.
    pub weights: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combine(points: &[Vec<f64>], idx: &[usize], lambda: &[f64], d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for (&i, &l) in idx.iter().zip(lambda) {
        for (xk, pk) in x.iter_mut().zip(&points[i]) {
            *xk += l * pk;
        }
    }
    x
}

/// Point of smallest norm in `conv S`, within `tol` of optimal.
pub fn min_norm_point(set: &PointSet, tol: f64) -> MinNormPoint {
    let tol = if tol > 0.0 { tol } else { DEFAULT_TOL };
    let pts = set.points();
    let n = pts.len();
    let d = set.dimension();

    let finish = |x: Vec<f64>, weights: Vec<f64>| MinNormPoint {
        distance: dot(&x, &x).sqrt(),
        point: x,
        weights,
    };

    if n == 1 {
        return finish(pts[0].clone(), vec![1.0]);
    }

    let gram: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| pts.iter().map(|q| dot(p, q)).collect())
        .collect();

    let start = (0..n)
        .min_by(|&i, &j| gram[i][i].total_cmp(&gram[j][j]))
        .expect("nonempty");
    let mut corral = vec![start];
    let mut lambda = vec![1.0];

    let max_major = 100 + 50 * n;
    let mut solved = false;
    'major: for _ in 0..max_major {
        let x = combine(pts, &corral, &lambda, d);
        let xx = dot(&x, &x);
        if xx.sqrt() <= tol {
            solved = true;
            break;
        }
        let (j, xs) = lowest_index_argmin(pts, &x);
        if xx - xs <= tol * xx.sqrt() || corral.contains(&j) {
            solved = true;
            break;
        }
        corral.push(j);
        lambda.push(0.0);

        for _ in 0..=n {
            let Some(alpha) = affine_minimizer(&gram, &corral) else {
                break 'major;
            };
            if alpha.iter().all(|&w| w > WEIGHT_EPS) {
                lambda = alpha;
                continue 'major;
            }
            // Walk from lambda toward alpha until the first weight hits zero.
            let mut theta = f64::INFINITY;
            let mut hit = 0;
            for (k, (&l, &w)) in lambda.iter().zip(&alpha).enumerate() {
                if w <= WEIGHT_EPS {
                    let t = if l - w > 0.0 { l / (l - w) } else { 0.0 };
                    if t < theta {
                        theta = t;
                        hit = k;
                    }
                }
            }
            let theta = theta.clamp(0.0, 1.0);
            for (l, w) in lambda.iter_mut().zip(&alpha) {
                *l = (1.0 - theta) * *l + theta * w;
            }
            lambda[hit] = 0.0;
            let mut k = 0;
            corral.retain(|_| {
                let keep = lambda[k] > WEIGHT_EPS;
                k += 1;
                keep
            });
            lambda.retain(|&l| l > WEIGHT_EPS);
            let s: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= s);
        }
        break;
    }

    let mut weights = vec![0.0; n];
    for (&i, &l) in corral.iter().zip(&lambda) {
        weights[i] += l;
    }
    if !solved {
        weights = frank_wolfe(pts, weights, tol);
    }
    let all: Vec<usize> = (0..n).collect();
    finish(combine(pts, &all, &weights, d), weights)
}

fn lowest_index_argmin(pts: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, dot(x, &pts[0]));
    for (j, p) in pts.iter().enumerate().skip(1) {
        let v = dot(x, p);
        if v < best.1 {
            best = (j, v);
        }
    }
    best
}

/// Weights summing to one that minimize `‖Σ α_k s_k‖` over the affine hull of
/// the corral, via the bordered Gram system with a small ridge.
fn affine_minimizer(gram: &[Vec<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let m = corral.len();
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    for (r, &i) in corral.iter().enumerate() {
        for (c, &j) in corral.iter().enumerate() {
            a[(r, c)] = gram[i][j];
        }
        a[(r, r)] += RIDGE;
        a[(r, m)] = 1.0;
        a[(m, r)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = a.lu().solve(&rhs)?;
    let alpha: Vec<f64> = sol.iter().take(m).copied().collect();
    alpha.iter().all(|w| w.is_finite()).then_some(alpha)
}

fn frank_wolfe(pts: &[Vec<f64>], mut w: Vec<f64>, tol: f64) -> Vec<f64> {
    let n = pts.len();
    let d = pts[0].len();
    let all: Vec<usize> = (0..n).collect();
    if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        w = vec![1.0 / n as f64; n];
    }
    let mut x = combine(pts, &all, &w, d);
    for _ in 0..200_000 {
        let xx = dot(&x, &x);
        let (j, xs) = lowest_index_argmin(pts, &x);
        if xx - xs <= tol * xx.sqrt() {
            break;
        }
        let dir: Vec<f64> = pts[j].iter().zip(&x).map(|(p, q)| p - q).collect();
        let dd = dot(&dir, &dir);
        if dd == 0.0 {
            break;
        }
        let gamma = (-dot(&x, &dir) / dd).clamp(0.0, 1.0);
        for (xk, dk) in x.iter_mut().zip(&dir) {
            *xk += gamma * dk;
        }
        for wk in w.iter_mut() {
            *wk *= 1.0 - gamma;
        }
        w[j] += gamma;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mnp(points: Vec<Vec<f64>>) -> MinNormPoint {
        min_norm_point(&PointSet::new(points).unwrap(), DEFAULT_TOL)
    }

    #[test]
    fn singleton() {
        let r = mnp(vec![vec![3.0, 4.0]]);
        assert_eq!(r.distance, 5.0);
        assert_eq!(r.weights, vec![1.0]);
    }

    #[test]
    fn symmetric_segment_contains_origin() {
        let r = mnp(vec![vec![-1.0], vec![1.0]]);
        assert!(r.distance < 1e-12);
        assert!((r.weights[0] - 0.5).abs() < 1e-12);
        assert!((r.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unit_vectors_match_weight_grid() {
        // Oracle: scan w on a 1e-3 grid for w e1 + (1 - w) e2.
        let grid_best = (0..=1000)
            .map(|k| {
                let w = k as f64 / 1000.0;
                (w * w + (1.0 - w) * (1.0 - w)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let r = mnp(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((r.distance - grid_best).abs() < 1e-9);
        assert!((r.point[0] - 0.5).abs() < 1e-12 && (r.point[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn duplicated_and_collinear_points() {
        let r = mnp(vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        assert!((r.distance - 2f64.sqrt()).abs() < 1e-9);
        let r = mnp(vec![vec![1.0, -1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!((r.distance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn origin_inside_triangle() {
        let r = mnp(vec![vec![1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]]);
        assert!(r.distance < 1e-9);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frank_wolfe_agrees() {
        let pts = vec![vec![2.0, 1.0], vec![1.0, 3.0], vec![4.0, -1.0]];
        let r = mnp(pts.clone());
        let w = frank_wolfe(&pts, vec![1.0 / 3.0; 3], 1e-12);
        let x = combine(&pts, &[0, 1, 2], &w, 2);
        assert!((dot(&x, &x).sqrt() - r.distance).abs() < 1e-6);
    }

    #[test]
    fn invalid_sets() {
        assert_eq!(PointSet::new(vec![]).unwrap_err(), HullError::Empty);
        assert!(PointSet::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PointSet::new(vec![vec![f64::NAN]]).is_err());
    }
}
