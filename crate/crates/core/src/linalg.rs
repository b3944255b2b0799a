//! Small dense kernels on slices and tiny matrices.

use ndarray::{Array1, Array2};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Singular values and right singular vectors of a `rows x cols` matrix given
/// column by column, computed with one-sided (Hestenes) Jacobi rotations.
///
/// Returns `(sigma, v)` where `v` is `cols x cols` orthogonal and column `j` of
/// `v` pairs with `sigma[j]`. Singular values are not sorted.
pub fn jacobi_svd(columns: &[Array1<f64>]) -> (Vec<f64>, Array2<f64>) {
    let n = columns.len();
    let mut a: Vec<Array1<f64>> = columns.to_vec();
    let mut v = Array2::<f64>::eye(n);
    const MAX_SWEEPS: usize = 80;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = a[p].dot(&a[p]);
                let beta = a[q].dot(&a[q]);
                let gamma = a[p].dot(&a[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (ap, aq) = (a[p].clone(), a[q].clone());
                a[p] = &ap * c - &aq * s;
                a[q] = &ap * s + &aq * c;
                for r in 0..n {
                    let (vp, vq) = (v[[r, p]], v[[r, q]]);
                    v[[r, p]] = c * vp - s * vq;
                    v[[r, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = a.iter().map(|c| c.dot(c).sqrt()).collect();
    (sigma, v)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes.
pub fn solve_dense(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))?;
        if m[[pivot, col]] == 0.0 || !m[[pivot, col]].is_finite() {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                m.swap([col, k], [pivot, k]);
            }
            rhs.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = m[[row, col]] / m[[col, col]];
            if f != 0.0 {
                for k in col..n {
                    m[[row, k]] -= f * m[[col, k]];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = Array1::<f64>::zeros(n);
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in (row + 1)..n {
            s -= m[[row, k]] * x[k];
        }
        x[row] = s / m[[row, row]];
    }
    Some(x)
}

/// Largest eigenvalue of the symmetric positive semidefinite operator `apply`
/// by power iteration. The estimate approaches the true value from below.
pub fn power_iteration<F>(dim: usize, mut apply: F, max_iter: usize, rel_tol: f64) -> f64
where
    F: FnMut(&Array1<f64>) -> Array1<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v = Array1::from_iter((0..dim).map(|i| 1.0 + (i as f64 * 0.618_033_988_7).fract()));
    v /= v.dot(&v).sqrt();
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - estimate).abs() <= rel_tol * next.abs() {
            return next.max(estimate);
        }
        estimate = next;
    }
    estimate
}
