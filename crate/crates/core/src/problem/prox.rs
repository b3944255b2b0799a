use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{ensure_finite, Error, Result};

/// The (possibly non-smooth) term `g` of the composite objective.
#[derive(Debug, Clone, PartialEq)]
pub enum ProxTerm {
    Zero,
    /// `(weight / 2) * sum_{j in mask} x_j^2`
    SquaredL2 {
        weight: f64,
        mask: Vec<bool>,
    },
    /// `weight * ||x||_1`
    L1 {
        weight: f64,
    },
}

impl ProxTerm {
    pub fn squared_l2(weight: f64, mask: Vec<bool>) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: format!("must be nonnegative, got {weight}"),
            });
        }
        Ok(ProxTerm::SquaredL2 { weight, mask })
    }

    pub fn l1(weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: format!("must be nonnegative, got {weight}"),
            });
        }
        Ok(ProxTerm::L1 { weight })
    }

    /// True when `g` is differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, ProxTerm::L1 { weight } if *weight > 0.0)
    }

    pub fn value(&self, x: ArrayView1<'_, f64>) -> f64 {
        match self {
            ProxTerm::Zero => 0.0,
            ProxTerm::SquaredL2 { weight, mask } => {
                let s: f64 = x
                    .iter()
                    .zip(mask)
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| v * v)
                    .sum();
                0.5 * weight * s
            }
            ProxTerm::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }

    /// Gradient of `g`, when it exists.
    pub fn gradient(&self, x: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
        match self {
            ProxTerm::Zero => Some(Array1::zeros(x.len())),
            ProxTerm::SquaredL2 { weight, mask } => {
                Some(Array1::from_iter(x.iter().zip(mask).map(|(v, m)| {
                    if *m {
                        weight * v
                    } else {
                        0.0
                    }
                })))
            }
            ProxTerm::L1 { weight } if *weight == 0.0 => Some(Array1::zeros(x.len())),
            ProxTerm::L1 { .. } => None,
        }
    }

    /// `argmin_u g(u) + ||u - v||^2 / (2 step)`
    pub fn prox(&self, step: f64, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidParameter {
                name: "step",
                reason: format!("prox step must be positive, got {step}"),
            });
        }
        ensure_finite(v.iter(), "prox argument")?;
        if let ProxTerm::SquaredL2 { mask, .. } = self {
            if mask.len() != v.len() {
                return Err(Error::DimensionMismatch {
                    what: "prox mask",
                    expected: mask.len(),
                    actual: v.len(),
                });
            }
        }
        let mut out = v.to_owned();
        self.prox_in_place(step, &mut out);
        Ok(out)
    }

    /// Unchecked in-place variant used on hot paths.
    pub(crate) fn prox_in_place(&self, step: f64, v: &mut Array1<f64>) {
        match self {
            ProxTerm::Zero => {}
            ProxTerm::SquaredL2 { weight, mask } => {
                let shrink = 1.0 / (1.0 + step * weight);
                Zip::from(v).and(mask).for_each(|vi, m| {
                    if *m {
                        *vi *= shrink;
                    }
                });
            }
            ProxTerm::L1 { weight } => {
                let t = step * weight;
                v.mapv_inplace(|vi| vi.signum() * (vi.abs() - t).max(0.0));
            }
        }
    }
}
