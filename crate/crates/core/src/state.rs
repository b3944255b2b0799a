//! Primal-dual iterates, the block-diagonal metric and the residual/merit pair.

use ndarray::{Array1, Array2};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::problem::{slice, FiniteSumProblem};

/// `z = (x, y_1, ..., y_N)`; row `i` of `y` is the stored gradient of `f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualState {
    pub x: Array1<f64>,
    pub y: Array2<f64>,
}

impl PrimalDualState {
    pub fn new(x: Array1<f64>, y: Array2<f64>) -> Result<Self> {
        if y.ncols() != x.len() {
            return Err(Error::DimensionMismatch {
                what: "dual block width",
                expected: x.len(),
                actual: y.ncols(),
            });
        }
        ensure_finite(x.iter().chain(y.iter()), "primal-dual state")?;
        Ok(Self {
            x,
            y: y.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self {
            x: Array1::zeros(d),
            y: Array2::zeros((n, d)),
        }
    }

    /// `(x, grad f_1(x), ..., grad f_N(x))`
    pub fn lifted<P: FiniteSumProblem + ?Sized>(problem: &P, x: Array1<f64>) -> Result<Self> {
        problem.check_point(&x)?;
        let mut y = Array2::zeros((problem.n_components(), problem.dim()));
        for (i, mut row) in y.rows_mut().into_iter().enumerate() {
            problem.component_gradient_into(
                i,
                slice(&x),
                row.as_slice_mut().expect("standard layout"),
            );
        }
        Ok(Self { x, y })
    }

    pub fn n_components(&self) -> usize {
        self.y.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `(1/N) sum_i y_i`
    pub fn dual_mean(&self) -> Array1<f64> {
        mean_rows(&self.y)
    }

    pub fn check_shape<P: FiniteSumProblem + ?Sized>(&self, problem: &P) -> Result<()> {
        if self.dim() != problem.dim() {
            return Err(Error::DimensionMismatch {
                what: "state dimension",
                expected: problem.dim(),
                actual: self.dim(),
            });
        }
        if self.n_components() != problem.n_components() {
            return Err(Error::DimensionMismatch {
                what: "state dual blocks",
                expected: problem.n_components(),
                actual: self.n_components(),
            });
        }
        ensure_finite(self.x.iter().chain(self.y.iter()), "primal-dual state")
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: &self.x - &other.x,
            y: &self.y - &other.y,
        }
    }
}

pub(crate) fn mean_rows(y: &Array2<f64>) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(y.ncols());
    for row in y.rows() {
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    acc / y.nrows() as f64
}

/// `Gamma = blkdiag(I, w_1 I, ..., w_N I)` with `w_i = step / (N rho_i L_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMetric {
    step: f64,
    weights: Vec<f64>,
}

impl GammaMetric {
    pub fn new(step: f64, rho: &[f64], lipschitz: &[f64]) -> Result<Self> {
        ensure_positive(step, "step")?;
        if rho.len() != lipschitz.len() || rho.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "rho vs lipschitz",
                expected: lipschitz.len(),
                actual: rho.len(),
            });
        }
        let n = rho.len() as f64;
        let weights = rho
            .iter()
            .zip(lipschitz)
            .map(|(r, l)| {
                ensure_positive(*r, "rho")?;
                ensure_positive(*l, "lipschitz")?;
                Ok(step / (n * r * l))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { step, weights })
    }

    /// Explicit dual weights; every weight must be positive.
    pub fn with_weights(step: f64, weights: Vec<f64>) -> Result<Self> {
        ensure_positive(step, "step")?;
        for w in &weights {
            ensure_positive(*w, "weight")?;
        }
        Ok(Self { step, weights })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check(&self, z: &PrimalDualState) -> Result<()> {
        if z.n_components() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                what: "metric blocks",
                expected: self.weights.len(),
                actual: z.n_components(),
            });
        }
        Ok(())
    }

    pub fn norm_sq(&self, z: &PrimalDualState) -> Result<f64> {
        self.check(z)?;
        let mut total = norm_sq(slice(&z.x));
        for (row, w) in z.y.rows().into_iter().zip(&self.weights) {
            total += w * row.iter().map(|v| v * v).sum::<f64>();
        }
        Ok(total)
    }

    /// `sqrt(<z, Gamma z>)`
    pub fn norm(&self, z: &PrimalDualState) -> Result<f64> {
        Ok(self.norm_sq(z)?.sqrt())
    }

    pub fn distance_sq(&self, a: &PrimalDualState, b: &PrimalDualState) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                what: "state dimension",
                expected: a.dim(),
                actual: b.dim(),
            });
        }
        let mut total = dist_sq(slice(&a.x), slice(&b.x));
        for ((ra, rb), w) in a.y.rows().into_iter().zip(b.y.rows()).zip(&self.weights) {
            total += w * ra
                .iter()
                .zip(rb)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>();
        }
        Ok(total)
    }

    pub fn distance(&self, a: &PrimalDualState, b: &PrimalDualState) -> Result<f64> {
        Ok(self.distance_sq(a, b)?.sqrt())
    }
}

/// The primal-dual residual, laid out like a state:
/// primal block `x - prox(x - step * mean(y))`, dual block `i` `y_i - grad f_i(x)`.
pub fn residual<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    step: f64,
    z: &PrimalDualState,
) -> Result<PrimalDualState> {
    ensure_positive(step, "step")?;
    z.check_shape(problem)?;
    Ok(residual_unchecked(problem, step, z).0)
}

/// Residual plus the full smooth gradient at `z.x`, which falls out of the
/// dual-block evaluation for free.
pub(crate) fn residual_unchecked<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    step: f64,
    z: &PrimalDualState,
) -> (PrimalDualState, Array1<f64>) {
    let mut shifted = &z.x - &(z.dual_mean() * step);
    problem.prox_term().prox_in_place(step, &mut shifted);
    let primal = &z.x - &shifted;
    let d = problem.dim();
    let mut duals = Array2::zeros((problem.n_components(), d));
    let mut grad_sum = Array1::<f64>::zeros(d);
    let x = slice(&z.x);
    for (i, mut row) in duals.rows_mut().into_iter().enumerate() {
        let out = row.as_slice_mut().expect("standard layout");
        problem.component_gradient_into(i, x, out);
        grad_sum
            .iter_mut()
            .zip(out.iter())
            .for_each(|(a, g)| *a += g);
        let yi = z.y.row(i);
        out.iter_mut().zip(yi).for_each(|(o, y)| *o = y - *o);
    }
    (
        PrimalDualState {
            x: primal,
            y: duals,
        },
        grad_sum / problem.n_components() as f64,
    )
}

/// `V(z) = ||R z||_Gamma`, evaluated with the metric's step.
pub fn merit<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    metric: &GammaMetric,
    z: &PrimalDualState,
) -> Result<f64> {
    let r = residual(problem, metric.step(), z)?;
    metric.norm(&r)
}

pub(crate) fn merit_and_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    metric: &GammaMetric,
    z: &PrimalDualState,
) -> Result<(f64, Array1<f64>)> {
    z.check_shape(problem)?;
    let (r, grad) = residual_unchecked(problem, metric.step(), z);
    Ok((metric.norm(&r)?, grad))
}
