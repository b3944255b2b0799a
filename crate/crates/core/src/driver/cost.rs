use crate::accel::CandidateCost;
use crate::error::{Error, Result};

/// Per-iteration floating point operation counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Back-tracking overhead for lBFGS, in units of one full gradient.
    pub xi_bt: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self { xi_bt: 0.3 }
    }
}

impl CostModel {
    pub fn new(xi_bt: f64) -> Result<Self> {
        if xi_bt >= 0.0 && xi_bt.is_finite() {
            Ok(Self { xi_bt })
        } else {
            Err(Error::InvalidParameter {
                name: "xi_bt",
                reason: format!("must be >= 0, got {xi_bt}"),
            })
        }
    }

    /// `4 N d`
    pub fn gradient_descent(&self, n: usize, d: usize) -> f64 {
        4.0 * n as f64 * d as f64
    }

    /// `12 N d`
    pub fn lsvrg(&self, n: usize, d: usize) -> f64 {
        12.0 * n as f64 * d as f64
    }

    /// `4 N d + (4/3) m^3 + 2 m^2 d`
    pub fn anderson(&self, n: usize, d: usize, m: usize) -> f64 {
        let (n, d, m) = (n as f64, d as f64, m as f64);
        4.0 * n * d + 4.0 / 3.0 * m.powi(3) + 2.0 * m * m * d
    }

    /// `4 N d + 2 d^2 + 13 m d + xi_bt 4 N d`
    pub fn lbfgs(&self, n: usize, d: usize, m: usize) -> f64 {
        let (n, d, m) = (n as f64, d as f64, m as f64);
        4.0 * n * d + 2.0 * d * d + 13.0 * m * d + self.xi_bt * 4.0 * n * d
    }

    /// One stochastic step of the basic method: the L-SVRG count spread
    /// over the `N` steps that make up one pass.
    pub fn basic_step(&self, n: usize, d: usize) -> f64 {
        self.lsvrg(n, d) / n as f64
    }

    pub fn candidate(&self, kind: CandidateCost, n: usize, d: usize) -> f64 {
        match kind {
            CandidateCost::Anderson { memory } => self.anderson(n, d, memory),
            CandidateCost::Lbfgs { memory } => self.lbfgs(n, d, memory),
        }
    }
}
