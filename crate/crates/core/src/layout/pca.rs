//! Two-component PCA fitted on topic embeddings.

use serde::{Deserialize, Serialize};

use super::LayoutError;
use crate::model::Point;

/// Fraction of the canvas extent the farthest fitted topic is mapped to.
const EXTENT_FILL: f64 = 0.8;
const ZERO_VARIANCE: f64 = 1e-18;
const DEGENERATE_RATIO: f64 = 1e-12;

/// A frozen 2D projection of embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Embedding-space to canvas-unit factor.
    pub scale: f64,
    /// Number of topics the basis was fitted on.
    pub fitted_on: usize,
}

impl PcaBasis {
    /// Canvas position of an embedding under this basis.
    pub fn project(&self, embedding: &[f64]) -> Point {
        let (u, v) = self.components(embedding);
        Point::new(self.scale * u, self.scale * v)
    }

    fn components(&self, e: &[f64]) -> (f64, f64) {
        let mut u = 0.0;
        let mut v = 0.0;
        for ((x, m), (a, b)) in e.iter().zip(&self.mean).zip(self.axis1.iter().zip(&self.axis2)) {
            let c = x - m;
            u += c * a;
            v += c * b;
        }
        (u, v)
    }

    /// Invariant violations, for the canvas validator.
    pub fn problems(&self, dim: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.mean.len();
        if self.axis1.len() != d || self.axis2.len() != d {
            out.push("basis vectors have inconsistent lengths".to_owned());
            return out;
        }
        if let Some(dim) = dim {
            if dim != d {
                out.push(format!("basis dimension {d} differs from embedding dimension {dim}"));
            }
        }
        for (name, axis) in [("axis1", &self.axis1), ("axis2", &self.axis2)] {
            let n = dot(axis, axis).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                out.push(format!("{name} has norm {n}"));
            }
        }
        let cross = dot(&self.axis1, &self.axis2);
        if cross.abs() > 1e-6 {
            out.push(format!("axes are not orthogonal (dot {cross})"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            out.push(format!("scale {} is not positive", self.scale));
        }
        out
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits the top two principal axes of `embeddings` (sample covariance),
/// sign-normalised so each axis's first non-negligible coordinate is
/// positive, with `scale` chosen so the farthest input projects to
/// `0.8 * canvas_extent`.
///
/// Zero-variance input yields the canonical basis `e1, e2` with every input at
/// the origin. A rank-one input keeps its principal axis and completes it with
/// the first canonical direction not parallel to it.
pub fn fit_pca_basis(embeddings: &[Vec<f64>], canvas_extent: f64) -> Result<PcaBasis, LayoutError> {
    let n = embeddings.len();
    let first = embeddings.first().ok_or(LayoutError::EmptyInput)?;
    let d = first.len();
    if d < 2 {
        return Err(LayoutError::DimensionTooSmall(d));
    }
    if let Some(bad) = embeddings.iter().find(|e| e.len() != d) {
        return Err(LayoutError::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    if canvas_extent.is_nan() || canvas_extent <= 0.0 {
        return Err(LayoutError::InvalidParams(format!("canvas extent {canvas_extent}")));
    }

    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, x) in mean.iter_mut().zip(e) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();

    let (axis1, axis2) = match principal_axes(&centered, d) {
        Some(axes) => axes,
        None => (canonical(d, 0), canonical(d, 1)),
    };

    let mut basis = PcaBasis {
        mean,
        axis1,
        axis2,
        scale: 1.0,
        fitted_on: n,
    };
    let reach = embeddings
        .iter()
        .map(|e| {
            let (u, v) = basis.components(e);
            u.hypot(v)
        })
        .fold(0.0, f64::max);
    if reach > 1e-12 {
        basis.scale = EXTENT_FILL * canvas_extent / reach;
    }
    Ok(basis)
}

/// Top-two eigenvectors of the sample covariance of `centered`, or `None`
/// when the covariance is zero. Works on whichever of the `n x n` Gram
/// matrix or the `d x d` covariance is smaller.
fn principal_axes(centered: &[Vec<f64>], d: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = centered.len();
    if n < 2 {
        return None;
    }
    let denom = (n - 1) as f64;

    let mut pairs: Vec<(f64, Vec<f64>)> = if n <= d {
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let g = dot(&centered[i], &centered[j]) / denom;
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let (values, vectors) = jacobi_eigen(gram, n);
        (0..n)
            .map(|k| {
                // v = Xc^T u lifts a Gram eigenvector to feature space.
                let mut v = vec![0.0; d];
                for (i, row) in centered.iter().enumerate() {
                    let w = vectors[i * n + k];
                    for (vj, x) in v.iter_mut().zip(row) {
                        *vj += w * x;
                    }
                }
                (values[k], v)
            })
            .collect()
    } else {
        let mut cov = vec![0.0; d * d];
        for row in centered {
            for i in 0..d {
                for j in i..d {
                    cov[i * d + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= denom;
                cov[j * d + i] = cov[i * d + j];
            }
        }
        let (values, vectors) = jacobi_eigen(cov, d);
        (0..d)
            .map(|k| (values[k], (0..d).map(|i| vectors[i * d + k]).collect()))
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (l1, v1) = &pairs[0];
    if *l1 <= ZERO_VARIANCE {
        return None;
    }
    let mut axis1 = unit(v1.clone())?;
    sign_normalize(&mut axis1);

    let second = pairs
        .get(1)
        .filter(|(l2, _)| *l2 > DEGENERATE_RATIO * l1)
        .and_then(|(_, v)| orthonormal_to(v.clone(), &axis1));
    let mut axis2 = match second {
        Some(v) => v,
        None => (0..d).find_map(|k| orthonormal_to(canonical(d, k), &axis1))?,
    };
    sign_normalize(&mut axis2);
    Some((axis1, axis2))
}

fn canonical(d: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[k] = 1.0;
    e
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = dot(&v, &v).sqrt();
    if n.is_nan() || n <= 1e-150 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

/// Gram-Schmidt `v` against unit `axis`; `None` if nearly parallel.
fn orthonormal_to(mut v: Vec<f64>, axis: &[f64]) -> Option<Vec<f64>> {
    let before = dot(&v, &v).sqrt();
    let p = dot(&v, axis);
    for (x, a) in v.iter_mut().zip(axis) {
        *x -= p * a;
    }
    if dot(&v, &v).sqrt() <= 1e-6 * before {
        return None;
    }
    unit(v)
}

fn sign_normalize(v: &mut [f64]) {
    if let Some(first) = v.iter().copied().find(|x| x.abs() > 1e-9) {
        if first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric row-major `n x n` matrix.
/// Returns eigenvalues and the eigenvector matrix (column `k` pairs with
/// value `k`).
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diagonalises_a_known_matrix() {
        // [[2,1],[1,2]] has eigenpairs 3:(1,1)/sqrt2 and 1:(1,-1)/sqrt2.
        let (values, vectors) = jacobi_eigen(vec![2.0, 1.0, 1.0, 2.0], 2);
        let mut idx = [0, 1];
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        assert!((values[idx[0]] - 3.0).abs() < 1e-12);
        assert!((values[idx[1]] - 1.0).abs() < 1e-12);
        let k = idx[0];
        assert!((vectors[k].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((vectors[2 + k].abs() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn identical_embeddings_fall_back_to_canonical_axes() {
        let e = vec![0.6, 0.8, 0.0];
        let basis = fit_pca_basis(&[e.clone(), e.clone(), e.clone()], 500.0).unwrap();
        assert_eq!(basis.axis1, vec![1.0, 0.0, 0.0]);
        assert_eq!(basis.axis2, vec![0.0, 1.0, 0.0]);
        assert_eq!(basis.scale, 1.0);
        assert!(basis.project(&e).norm() < 1e-12);
        assert!(basis.problems(Some(3)).is_empty());
    }

    #[test]
    fn points_on_the_diagonal() {
        // Covariance of (1,1),(2,2),(3,3) is [[1,1],[1,1]]: eigenvalues 2 and 0,
        // principal axis (1,1)/sqrt2.
        let pts = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]];
        let basis = fit_pca_basis(&pts, 500.0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((basis.axis1[0] - h).abs() < 1e-12 && (basis.axis1[1] - h).abs() < 1e-12);
        assert!(dot(&basis.axis1, &basis.axis2).abs() < 1e-12);
        assert_eq!(basis.mean, vec![2.0, 2.0]);
        // Endpoints land at +-400 along the first axis.
        let far = basis.project(&pts[2]);
        assert!((far.x - 400.0).abs() < 1e-9 && far.y.abs() < 1e-9);
    }

    #[test]
    fn mean_projects_to_origin() {
        let pts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let basis = fit_pca_basis(&pts, 500.0).unwrap();
        let p = basis.project(&basis.mean.clone());
        assert_eq!(p, Point::ORIGIN);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(fit_pca_basis(&[], 1.0), Err(LayoutError::EmptyInput));
        assert_eq!(fit_pca_basis(&[vec![1.0]], 1.0), Err(LayoutError::DimensionTooSmall(1)));
        assert!(matches!(
            fit_pca_basis(&[vec![1.0, 0.0], vec![1.0]], 1.0),
            Err(LayoutError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_embedding_sits_at_origin() {
        let basis = fit_pca_basis(&[vec![0.0, 1.0]], 500.0).unwrap();
        assert_eq!(basis.fitted_on, 1);
        assert_eq!(basis.project(&[0.0, 1.0]), Point::ORIGIN);
    }
}
