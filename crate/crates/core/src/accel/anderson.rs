use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg::jacobi_svd;

/// Tikhonov weight `xi_k` for the inner least-squares problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    Fixed(f64),
    /// `xi_k = scale * trace(R^T R)`
    TraceScaled(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Self::TraceScaled(1e-10)
    }
}

/// Ring of past map evaluations `x^j = T(y^j)` and residuals `r^j = y^j - x^j`.
#[derive(Debug, Clone)]
pub struct AndersonMemory {
    capacity: usize,
    regularization: Regularization,
    mapped: VecDeque<Array1<f64>>,
    residuals: VecDeque<Array1<f64>>,
}

impl AndersonMemory {
    pub fn new(capacity: usize, regularization: Regularization) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter {
                name: "memory",
                reason: "must be at least 1".into(),
            });
        }
        let xi = match regularization {
            Regularization::Fixed(v) | Regularization::TraceScaled(v) => v,
        };
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::InvalidParameter {
                name: "regularization",
                reason: format!("must be >= 0, got {xi}"),
            });
        }
        Ok(Self {
            capacity,
            regularization,
            mapped: VecDeque::with_capacity(capacity + 1),
            residuals: VecDeque::with_capacity(capacity + 1),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn regularization(&self) -> Regularization {
        self.regularization
    }

    /// Number of stored columns, at most `capacity + 1`.
    pub fn len(&self) -> usize {
        self.mapped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapped.is_empty()
    }

    pub fn clear(&mut self) {
        self.mapped.clear();
        self.residuals.clear();
    }

    /// Stores the pair `(y, T(y))`, dropping the oldest when full.
    pub fn push(&mut self, y: &Array1<f64>, mapped: Array1<f64>) -> Result<()> {
        if let Some(first) = self.mapped.front() {
            if first.len() != y.len() || mapped.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    what: "anderson column",
                    expected: first.len(),
                    actual: y.len(),
                });
            }
        }
        if self.mapped.len() == self.capacity + 1 {
            self.mapped.pop_front();
            self.residuals.pop_front();
        }
        self.residuals.push_back(y - &mapped);
        self.mapped.push_back(mapped);
        Ok(())
    }

    /// Minimizer of `||R a||^2 + xi ||a||^2` subject to `sum(a) = 1`.
    pub fn weights(&self) -> Result<Vec<f64>> {
        let c = self.residuals.len();
        if c == 0 {
            return Err(Error::DegenerateSolve);
        }
        if c == 1 {
            return Ok(vec![1.0]);
        }
        let columns: Vec<Array1<f64>> = self.residuals.iter().cloned().collect();
        let (sigma, v) = jacobi_svd(&columns);
        let xi = match self.regularization {
            Regularization::Fixed(v) => v,
            Regularization::TraceScaled(s) => s * sigma.iter().map(|x| x * x).sum::<f64>(),
        };
        let proj: Vec<f64> = (0..c).map(|j| v.column(j).sum()).collect();
        let mut w = Array1::<f64>::zeros(c);
        if xi > 0.0 {
            for j in 0..c {
                w.scaled_add(proj[j] / (sigma[j] * sigma[j] + xi), &v.column(j));
            }
        } else {
            let dim = columns[0].len();
            let smax = sigma.iter().cloned().fold(0.0, f64::max);
            let cutoff = c.max(dim) as f64 * f64::EPSILON * smax;
            let null: Vec<usize> = (0..c).filter(|&j| sigma[j] <= cutoff).collect();
            let null_weight: f64 = null.iter().map(|&j| proj[j] * proj[j]).sum();
            if null_weight > 1e-10 {
                // limit of the regularized solution as xi -> 0+
                for &j in &null {
                    w.scaled_add(proj[j], &v.column(j));
                }
            } else {
                for j in (0..c).filter(|j| sigma[*j] > cutoff) {
                    w.scaled_add(proj[j] / (sigma[j] * sigma[j]), &v.column(j));
                }
            }
        }
        let total = w.sum();
        if !total.is_finite()
            || total.abs() <= f64::EPSILON * w.iter().map(|x| x.abs()).sum::<f64>()
        {
            return Err(Error::DegenerateSolve);
        }
        Ok(w.iter().map(|x| x / total).collect())
    }

    /// `sum_j a_j x^j` over the stored columns.
    pub fn extrapolate(&self) -> Result<Array1<f64>> {
        let alpha = self.weights()?;
        let mut out = Array1::zeros(self.mapped[0].len());
        for (a, x) in alpha.iter().zip(&self.mapped) {
            out.scaled_add(*a, x);
        }
        Ok(out)
    }

    /// Evaluates `map` at `y`, stores the pair and returns the extrapolated point.
    pub fn propose<F>(&mut self, y: &Array1<f64>, map: F) -> Result<Array1<f64>>
    where
        F: FnOnce(&Array1<f64>) -> Result<Array1<f64>>,
    {
        let mapped = map(y)?;
        self.push(y, mapped)?;
        self.extrapolate()
    }

    #[cfg(test)]
    fn residual_columns(&self) -> impl Iterator<Item = &Array1<f64>> {
        self.residuals.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rnorm(r: &[&Array1<f64>], alpha: &[f64]) -> f64 {
        let mut acc = Array1::<f64>::zeros(r[0].len());
        for (c, a) in r.iter().zip(alpha) {
            acc.scaled_add(*a, c);
        }
        acc.dot(&acc).sqrt()
    }

    #[test]
    fn single_column_is_plain_iteration() {
        let mut mem = AndersonMemory::new(3, Regularization::default()).unwrap();
        let y = array![1.0, 2.0];
        let out = mem.propose(&y, |y| Ok(y * 0.5)).unwrap();
        assert_eq!(mem.weights().unwrap(), vec![1.0]);
        assert_eq!(out, array![0.5, 1.0]);
    }

    #[test]
    fn identical_residuals_split_evenly() {
        let mut mem = AndersonMemory::new(2, Regularization::Fixed(0.1)).unwrap();
        mem.push(&array![1.0, 1.0], array![0.0, 1.0]).unwrap();
        mem.push(&array![3.0, 2.0], array![2.0, 2.0]).unwrap();
        let a = mem.weights().unwrap();
        assert!((a[0] - 0.5).abs() < 1e-15 && (a[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn keeps_at_most_capacity_plus_one_columns() {
        let mut mem = AndersonMemory::new(2, Regularization::default()).unwrap();
        for k in 0..6 {
            mem.push(&array![k as f64], array![0.5 * k as f64]).unwrap();
            assert_eq!(mem.len(), (k + 1).min(3));
        }
        mem.clear();
        assert!(mem.is_empty());
    }

    #[test]
    fn weights_sum_to_one_and_minimize_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let mut mem = AndersonMemory::new(4, Regularization::Fixed(0.0)).unwrap();
            for _ in 0..5 {
                let y = Array1::from_iter((0..8).map(|_| rng.random_range(-1.0..1.0)));
                let t = Array1::from_iter((0..8).map(|_| rng.random_range(-1.0..1.0)));
                mem.push(&y, t).unwrap();
            }
            let a = mem.weights().unwrap();
            assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let cols: Vec<&Array1<f64>> = mem.residual_columns().collect();
            let best = rnorm(&cols, &a);
            for _ in 0..100 {
                let mut alt: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let s: f64 = alt.iter().sum();
                alt[0] += 1.0 - s;
                assert!(best <= rnorm(&cols, &alt) + 1e-12);
            }
        }
    }

    #[test]
    fn matches_constrained_normal_equations() {
        // oracle: KKT system [2(R^T R + xi I) 1; 1^T 0] [a; mu] = [0; 1]
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xi = 0.3;
        let mut mem = AndersonMemory::new(3, Regularization::Fixed(xi)).unwrap();
        for _ in 0..4 {
            let y = Array1::from_iter((0..6).map(|_| rng.random_range(-1.0..1.0)));
            mem.push(&y, Array1::zeros(6)).unwrap();
        }
        let cols: Vec<&Array1<f64>> = mem.residual_columns().collect();
        let c = cols.len();
        let mut kkt = nalgebra::DMatrix::<f64>::zeros(c + 1, c + 1);
        for i in 0..c {
            for j in 0..c {
                kkt[(i, j)] = 2.0 * cols[i].dot(cols[j]) + if i == j { 2.0 * xi } else { 0.0 };
            }
            kkt[(i, c)] = 1.0;
            kkt[(c, i)] = 1.0;
        }
        let mut rhs = nalgebra::DVector::<f64>::zeros(c + 1);
        rhs[c] = 1.0;
        let sol = kkt.lu().solve(&rhs).unwrap();
        let a = mem.weights().unwrap();
        for i in 0..c {
            assert!((a[i] - sol[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_fixed_point_found_after_enough_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 3;
        let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-0.2..0.2));
        let b = Array1::from_iter((0..d).map(|_| rng.random_range(-1.0..1.0)));
        let mut mem = AndersonMemory::new(d + 1, Regularization::Fixed(0.0)).unwrap();
        let mut y = Array1::zeros(d);
        for _ in 0..=d + 1 {
            y = mem.propose(&y, |y| Ok(a.dot(y) + &b)).unwrap();
        }
        let fixed = &y - &(a.dot(&y) + &b);
        assert!(fixed.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn rejects_zero_capacity_and_negative_xi() {
        assert!(AndersonMemory::new(0, Regularization::default()).is_err());
        assert!(AndersonMemory::new(2, Regularization::Fixed(-1.0)).is_err());
    }
}
