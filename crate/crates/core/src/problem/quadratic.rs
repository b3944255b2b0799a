use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{full_gradient_unchecked, FiniteSumProblem, ProxTerm};
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::linalg::solve_dense;

/// Components `f_i(x) = x^T Q_i x / 2 - b_i^T x` with symmetric PSD `Q_i`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    hessians: Vec<Array2<f64>>,
    linear: Vec<Array1<f64>>,
    lipschitz: Vec<f64>,
    prox: ProxTerm,
    dim: usize,
}

impl QuadraticProblem {
    /// `lipschitz[i]` must bound the largest eigenvalue of `hessians[i]`.
    pub fn new(
        hessians: Vec<Array2<f64>>,
        linear: Vec<Array1<f64>>,
        lipschitz: Vec<f64>,
        prox: ProxTerm,
    ) -> Result<Self> {
        let n = hessians.len();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "hessians",
                reason: "at least one component is required".into(),
            });
        }
        let dim = hessians[0].nrows();
        if dim == 0 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        for (q, b) in hessians.iter().zip(&linear) {
            if q.dim() != (dim, dim) || b.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "quadratic component",
                    expected: dim,
                    actual: b.len(),
                });
            }
            ensure_finite(q.iter().chain(b.iter()), "quadratic data")?;
        }
        if linear.len() != n || lipschitz.len() != n {
            return Err(Error::DimensionMismatch {
                what: "component count",
                expected: n,
                actual: lipschitz.len(),
            });
        }
        for l in &lipschitz {
            ensure_positive(*l, "lipschitz")?;
        }
        if let ProxTerm::SquaredL2 { mask, .. } = &prox {
            if mask.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "prox mask",
                    expected: dim,
                    actual: mask.len(),
                });
            }
        }
        Ok(Self {
            hessians,
            linear,
            lipschitz,
            prox,
            dim,
        })
    }

    /// `f_i(x) = a_i ||x||^2 / 2`
    pub fn isotropic(curvatures: &[f64], dim: usize, prox: ProxTerm) -> Result<Self> {
        let hessians = curvatures.iter().map(|a| Array2::eye(dim) * *a).collect();
        let linear = curvatures.iter().map(|_| Array1::zeros(dim)).collect();
        Self::new(hessians, linear, curvatures.to_vec(), prox)
    }

    /// Random strongly convex components with spectra drawn from `[0.05, 2]`.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        dim: usize,
        prox: ProxTerm,
    ) -> Result<Self> {
        Self::random_with_spectrum(rng, n, dim, 0.05, 2.0, prox)
    }

    /// Each `Q_i = V diag(e) V^T` with `V` a random orthonormal basis and `e`
    /// uniform on `[lo, hi]`, so `L_i = max(e)` is exact.
    pub fn random_with_spectrum<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        dim: usize,
        lo: f64,
        hi: f64,
        prox: ProxTerm,
    ) -> Result<Self> {
        let mut hessians = Vec::with_capacity(n);
        let mut linear = Vec::with_capacity(n);
        let mut lipschitz = Vec::with_capacity(n);
        for _ in 0..n {
            let basis = random_orthonormal(rng, dim);
            let eig: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
            let mut q = Array2::<f64>::zeros((dim, dim));
            for (k, e) in eig.iter().enumerate() {
                let v = &basis[k];
                for r in 0..dim {
                    for c in 0..dim {
                        q[[r, c]] += e * v[r] * v[c];
                    }
                }
            }
            // symmetrize against rounding
            let q = (&q + &q.t()) * 0.5;
            hessians.push(q);
            linear.push(Array1::from_iter(
                (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)),
            ));
            lipschitz.push(eig.iter().cloned().fold(f64::MIN, f64::max));
        }
        Self::new(hessians, linear, lipschitz, prox)
    }

    pub fn hessian(&self, i: usize) -> &Array2<f64> {
        &self.hessians[i]
    }

    pub fn linear_term(&self, i: usize) -> &Array1<f64> {
        &self.linear[i]
    }

    /// Minimizer of `F + g`: closed form for smooth `g`, proximal-gradient
    /// iteration for the L1 term.
    pub fn minimizer(&self) -> Result<Array1<f64>> {
        let n = self.hessians.len() as f64;
        let mut q_mean = self
            .hessians
            .iter()
            .fold(Array2::zeros((self.dim, self.dim)), |acc, q| acc + q)
            / n;
        let b_mean = self
            .linear
            .iter()
            .fold(Array1::zeros(self.dim), |acc, b| acc + b)
            / n;
        match &self.prox {
            ProxTerm::Zero => {}
            ProxTerm::SquaredL2 { weight, mask } => {
                for (j, m) in mask.iter().enumerate() {
                    if *m {
                        q_mean[[j, j]] += weight;
                    }
                }
            }
            ProxTerm::L1 { .. } => return self.prox_gradient_minimizer(),
        }
        solve_dense(&q_mean, &b_mean).ok_or(Error::DegenerateSolve)
    }

    fn prox_gradient_minimizer(&self) -> Result<Array1<f64>> {
        let step = 1.0 / self.smoothness_modulus();
        let mut x = Array1::<f64>::zeros(self.dim);
        for _ in 0..1_000_000 {
            let g = full_gradient_unchecked(self, x.as_slice().unwrap());
            let mut next = &x - &(g * step);
            self.prox.prox_in_place(step, &mut next);
            let moved = (&next - &x).mapv(|v| v * v).sum();
            x = next;
            if moved == 0.0 {
                return Ok(x);
            }
        }
        Ok(x)
    }
}

fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v = Array1::from_iter((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // two passes of Gram-Schmidt for orthogonality to rounding level
        for _ in 0..2 {
            for b in &basis {
                let c = v.dot(b);
                v = v - b * c;
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    basis
}

impl FiniteSumProblem for QuadraticProblem {
    fn n_components(&self) -> usize {
        self.hessians.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn prox_term(&self) -> &ProxTerm {
        &self.prox
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let q = &self.hessians[i];
        let b = &self.linear[i];
        let mut quad = 0.0;
        for r in 0..self.dim {
            let row: f64 = (0..self.dim).map(|c| q[[r, c]] * x[c]).sum();
            quad += x[r] * row;
        }
        let lin: f64 = b.iter().zip(x).map(|(bi, xi)| bi * xi).sum();
        0.5 * quad - lin
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let q = &self.hessians[i];
        let b = &self.linear[i];
        for r in 0..self.dim {
            out[r] = (0..self.dim).map(|c| q[[r, c]] * x[c]).sum::<f64>() - b[r];
        }
    }
}
