//! Finite-sum composite problems `(1/N) sum_i f_i(x) + g(x)`.

mod logistic;
mod prox;
mod quadratic;

pub use logistic::{Formulation, LogisticRegression};
pub use prox::ProxTerm;
pub use quadratic::QuadraticProblem;

use ndarray::Array1;

use crate::error::{ensure_finite, Error, Result};

/// A composite problem whose smooth part is an average of `N` convex,
/// `L_i`-smooth components.
///
/// Implementors provide the unchecked slice kernels; the provided methods add
/// index, shape and finiteness validation on top of them.
pub trait FiniteSumProblem: Send + Sync {
    fn n_components(&self) -> usize;

    fn dim(&self) -> usize;

    /// Per-component smoothness moduli `L_i`.
    fn lipschitz(&self) -> &[f64];

    fn prox_term(&self) -> &ProxTerm;

    /// `f_i(x)` without validation.
    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64;

    /// Writes `grad f_i(x)` into `out` without validation.
    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]);

    /// An upper estimate of the smoothness modulus of `F = (1/N) sum_i f_i`.
    fn smoothness_modulus(&self) -> f64 {
        self.lipschitz().iter().sum::<f64>() / self.n_components() as f64
    }

    fn check_point(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "primal point",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        ensure_finite(x.iter(), "primal point")
    }

    fn component_gradient(&self, i: usize, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_index(i)?;
        self.check_point(x)?;
        let mut out = Array1::zeros(self.dim());
        self.component_gradient_into(i, slice(x), out.as_slice_mut().expect("contiguous"));
        Ok(out)
    }

    fn component_value(&self, i: usize, x: &Array1<f64>) -> Result<f64> {
        self.check_index(i)?;
        self.check_point(x)?;
        Ok(self.component_value_unchecked(i, slice(x)))
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n_components() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                n_components: self.n_components(),
            })
        }
    }

    /// `(1/N) sum_i grad f_i(x)`
    fn full_gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_point(x)?;
        Ok(full_gradient_unchecked(self, slice(x)))
    }

    /// `F(x) = (1/N) sum_i f_i(x)`
    fn smooth_value(&self, x: &Array1<f64>) -> Result<f64> {
        self.check_point(x)?;
        Ok(smooth_value_unchecked(self, slice(x)))
    }

    /// `F(x) + g(x)`
    fn objective(&self, x: &Array1<f64>) -> Result<f64> {
        self.check_point(x)?;
        Ok(smooth_value_unchecked(self, slice(x)) + self.prox_term().value(x.view()))
    }

    /// `grad F(x) + grad g(x)`; fails when `g` is not differentiable.
    fn objective_gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        let grad_g = self
            .prox_term()
            .gradient(x.view())
            .ok_or(Error::NonSmooth {
                what: "the objective gradient",
            })?;
        Ok(self.full_gradient(x)? + grad_g)
    }
}

#[inline]
pub(crate) fn slice(x: &Array1<f64>) -> &[f64] {
    x.as_slice().expect("vectors are contiguous")
}

pub(crate) fn full_gradient_unchecked<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    x: &[f64],
) -> Array1<f64> {
    let d = problem.dim();
    let mut acc = Array1::<f64>::zeros(d);
    let mut g = vec![0.0; d];
    for i in 0..problem.n_components() {
        problem.component_gradient_into(i, x, &mut g);
        acc.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi);
    }
    acc / problem.n_components() as f64
}

pub(crate) fn smooth_value_unchecked<P: FiniteSumProblem + ?Sized>(problem: &P, x: &[f64]) -> f64 {
    let n = problem.n_components();
    (0..n)
        .map(|i| problem.component_value_unchecked(i, x))
        .sum::<f64>()
        / n as f64
}
