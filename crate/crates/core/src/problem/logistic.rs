use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{FiniteSumProblem, ProxTerm};
use crate::data::Dataset;
use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::linalg::{dot, power_iteration};

/// Where the `(xi/2)||w||^2` regularizer lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Regularizer folded into every component, `g = 0`.
    SmoothOnly,
    /// Purely logistic components, regularizer handled by the prox term.
    ProxSplit,
}

/// Regularized binary logistic regression
/// `sum_i [log(1 + e^{t_i}) - u_i t_i] + (xi/2)||w||^2`, `t_i = theta_i^T w + b`,
/// over the variable `x = (w, b)`. The bias is the last coordinate and is
/// never regularized.
///
/// Components are scaled as `f_i = N * loss_i (+ (xi/2)||w||^2)` so that
/// `(1/N) sum_i f_i` reproduces the objective above.
#[derive(Debug, Clone)]
pub struct LogisticRegression {
    features: Array2<f64>,
    labels: Array1<f64>,
    xi: f64,
    formulation: Formulation,
    lipschitz: Vec<f64>,
    prox: ProxTerm,
    smoothness: f64,
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegression {
    pub fn new(
        features: Array2<f64>,
        labels: Array1<f64>,
        xi: f64,
        formulation: Formulation,
    ) -> Result<Self> {
        let (n, p) = features.dim();
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "features",
                reason: "no samples".into(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: n,
                actual: labels.len(),
            });
        }
        ensure_positive(xi, "xi")?;
        ensure_finite(features.iter(), "features")?;
        if let Some(bad) = labels.iter().find(|u| **u != 0.0 && **u != 1.0) {
            return Err(Error::InvalidParameter {
                name: "labels",
                reason: format!("label {bad} not in {{0, 1}}"),
            });
        }
        let features = features.as_standard_layout().into_owned();
        let nf = n as f64;
        let reg = match formulation {
            Formulation::SmoothOnly => xi,
            Formulation::ProxSplit => 0.0,
        };
        let lipschitz = features
            .rows()
            .into_iter()
            .map(|row| nf / 4.0 * (row.dot(&row) + 1.0) + reg)
            .collect();
        let prox = match formulation {
            Formulation::SmoothOnly => ProxTerm::Zero,
            Formulation::ProxSplit => {
                let mut mask = vec![true; p + 1];
                mask[p] = false;
                ProxTerm::squared_l2(xi, mask)?
            }
        };
        // Hessian of the data term is bounded by (1/4) A^T A with A = [Theta, 1].
        let data_bound = power_iteration(
            p + 1,
            |v| {
                let w = v.slice(ndarray::s![..p]);
                let b = v[p];
                let av = features.dot(&w) + b;
                let mut out = Array1::zeros(p + 1);
                out.slice_mut(ndarray::s![..p])
                    .assign(&features.t().dot(&av));
                out[p] = av.sum();
                out
            },
            2000,
            1e-12,
        );
        let smoothness = data_bound / 4.0 + reg;
        Ok(Self {
            features,
            labels,
            xi,
            formulation,
            lipschitz,
            prox,
            smoothness,
        })
    }

    pub fn from_dataset(data: &Dataset, xi: f64, formulation: Formulation) -> Result<Self> {
        Self::new(data.features.clone(), data.labels.clone(), xi, formulation)
    }

    /// Gaussian features with labels drawn from a noisy logistic model, so
    /// classes overlap and the problem is well posed.
    pub fn synthetic<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        dim: usize,
        xi: f64,
        formulation: Formulation,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParameter {
                name: "dim",
                reason: "must be at least 1".into(),
            });
        }
        let p = dim - 1;
        // rows have unit expected squared norm; margins have standard deviation 1
        let scale = 1.0 / (p.max(1) as f64).sqrt();
        let features =
            Array2::from_shape_fn((n, p), |_| scale * rng.sample::<f64, _>(StandardNormal));
        let truth: Array1<f64> =
            Array1::from_iter((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let labels = Array1::from_iter(features.rows().into_iter().map(|row| {
            let prob = sigmoid(row.dot(&truth) + 0.25);
            if rng.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        }));
        Self::new(features, labels, xi, formulation)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn formulation(&self) -> Formulation {
        self.formulation
    }

    #[inline]
    fn margin(&self, i: usize, x: &[f64]) -> f64 {
        let p = self.features.ncols();
        let row = self.features.row(i);
        dot(row.as_slice().expect("standard layout"), &x[..p]) + x[p]
    }

    fn regularizer(&self, x: &[f64]) -> f64 {
        let p = self.features.ncols();
        0.5 * self.xi * x[..p].iter().map(|v| v * v).sum::<f64>()
    }
}

impl FiniteSumProblem for LogisticRegression {
    fn n_components(&self) -> usize {
        self.features.nrows()
    }

    fn dim(&self) -> usize {
        self.features.ncols() + 1
    }

    fn lipschitz(&self) -> &[f64] {
        &self.lipschitz
    }

    fn prox_term(&self) -> &ProxTerm {
        &self.prox
    }

    fn smoothness_modulus(&self) -> f64 {
        self.smoothness
    }

    fn component_value_unchecked(&self, i: usize, x: &[f64]) -> f64 {
        let t = self.margin(i, x);
        let loss = self.n_components() as f64 * (softplus(t) - self.labels[i] * t);
        match self.formulation {
            Formulation::SmoothOnly => loss + self.regularizer(x),
            Formulation::ProxSplit => loss,
        }
    }

    fn component_gradient_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        let p = self.features.ncols();
        let t = self.margin(i, x);
        let scale = self.n_components() as f64 * (sigmoid(t) - self.labels[i]);
        let row = self.features.row(i);
        let row = row.as_slice().expect("standard layout");
        match self.formulation {
            Formulation::SmoothOnly => {
                for j in 0..p {
                    out[j] = scale * row[j] + self.xi * x[j];
                }
            }
            Formulation::ProxSplit => {
                for j in 0..p {
                    out[j] = scale * row[j];
                }
            }
        }
        out[p] = scale;
    }
}
