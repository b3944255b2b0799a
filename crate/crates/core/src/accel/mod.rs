//! Candidate generators for the hybrid scheme: Anderson acceleration on the
//! gradient-descent map and lBFGS with Armijo backtracking.

mod anderson;
mod lbfgs;

pub use anderson::{AndersonMemory, Regularization};
pub use lbfgs::{
    line_search, minimize, ArmijoConfig, LbfgsMemory, LbfgsOptions, LbfgsOutcome, LineSearchResult,
};

use log::warn;
use ndarray::Array1;

use crate::error::{ensure_positive, Error, Result};
use crate::problem::FiniteSumProblem;
use crate::state::PrimalDualState;

/// `T(x) = x - step * grad F(x)`
pub fn gd_map<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    step: f64,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    if !(step >= 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter {
            name: "step",
            reason: format!("must be >= 0, got {step}"),
        });
    }
    let bound = 2.0 / problem.smoothness_modulus();
    if step >= bound {
        warn!("gd map step {step} is not below 2/L = {bound}");
    }
    let g = problem.full_gradient(x)?;
    Ok(x - &(g * step))
}

/// Which cost formula a candidate is charged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateCost {
    Anderson { memory: usize },
    Lbfgs { memory: usize },
}

/// Proposes primal points from the current iterate and its full smooth
/// gradient `grad = grad F(x)`.
pub trait CandidateGenerator {
    fn propose<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &Array1<f64>,
        grad: &Array1<f64>,
    ) -> Result<Array1<f64>>;

    /// Called when the driver rejects the last proposal.
    fn reject(&mut self);

    fn cost(&self) -> CandidateCost;

    /// Whether the regularizer must be differentiable.
    fn requires_smooth_regularizer(&self) -> bool {
        false
    }
}

/// Runs one accelerator step and lifts the result to
/// `(x+, grad f_1(x+), ..., grad f_N(x+))`.
pub fn propose_candidate<P, A>(
    accel: &mut A,
    problem: &P,
    x: &Array1<f64>,
    grad: &Array1<f64>,
) -> Result<PrimalDualState>
where
    P: FiniteSumProblem + ?Sized,
    A: CandidateGenerator + ?Sized,
{
    let x_plus = accel.propose(problem, x, grad)?;
    PrimalDualState::lifted(problem, x_plus)
}

/// Anderson acceleration on `y -> prox(y - step grad F(y))`.
#[derive(Debug, Clone)]
pub struct AndersonAccelerator {
    memory: AndersonMemory,
    map_step: Option<f64>,
}

impl AndersonAccelerator {
    /// `map_step = None` uses `1 / L` with `L` the smoothness modulus of `F`.
    pub fn new(
        memory: usize,
        regularization: Regularization,
        map_step: Option<f64>,
    ) -> Result<Self> {
        if let Some(s) = map_step {
            ensure_positive(s, "map_step")?;
        }
        Ok(Self {
            memory: AndersonMemory::new(memory, regularization)?,
            map_step,
        })
    }

    pub fn memory(&self) -> &AndersonMemory {
        &self.memory
    }
}

impl CandidateGenerator for AndersonAccelerator {
    fn propose<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &Array1<f64>,
        grad: &Array1<f64>,
    ) -> Result<Array1<f64>> {
        let step = self
            .map_step
            .unwrap_or_else(|| 1.0 / problem.smoothness_modulus());
        self.memory.propose(x, |y| {
            let mut t = y - &(grad * step);
            problem.prox_term().prox_in_place(step, &mut t);
            Ok(t)
        })
    }

    fn reject(&mut self) {
        self.memory.clear();
    }

    fn cost(&self) -> CandidateCost {
        CandidateCost::Anderson {
            memory: self.memory.capacity(),
        }
    }
}

/// lBFGS on the full objective `F + g`; `g` must be smooth.
#[derive(Debug, Clone)]
pub struct LbfgsAccelerator {
    memory: LbfgsMemory,
    armijo: ArmijoConfig,
    last: Option<(Array1<f64>, Array1<f64>)>,
}

impl LbfgsAccelerator {
    pub fn new(memory: usize, armijo: ArmijoConfig) -> Result<Self> {
        Ok(Self {
            memory: LbfgsMemory::new(memory)?,
            armijo,
            last: None,
        })
    }

    pub fn memory(&self) -> &LbfgsMemory {
        &self.memory
    }
}

impl CandidateGenerator for LbfgsAccelerator {
    fn propose<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &Array1<f64>,
        grad: &Array1<f64>,
    ) -> Result<Array1<f64>> {
        let reg = problem.prox_term();
        let reg_grad = reg.gradient(x.view()).ok_or(Error::NonSmooth {
            what: "regularizer",
        })?;
        let g = grad + &reg_grad;
        if let Some((x_prev, g_prev)) = self.last.take() {
            if x_prev != *x {
                self.memory.push(x - &x_prev, &g - &g_prev);
            }
        }
        let mut p = self.memory.direction(&g);
        if !(g.dot(&p) > 0.0) {
            self.memory.clear();
            p = g.clone();
        }
        let fx = problem.objective(x)?;
        let result = line_search(|y| problem.objective(y), x, &p, &g, fx, &self.armijo)?;
        self.last = Some((x.clone(), g));
        Ok(result.point)
    }

    fn reject(&mut self) {
        self.memory.clear();
        self.last = None;
    }

    fn cost(&self) -> CandidateCost {
        CandidateCost::Lbfgs {
            memory: self.memory.capacity(),
        }
    }

    fn requires_smooth_regularizer(&self) -> bool {
        true
    }
}

/// Accelerator selection for configuration-driven runs.
#[derive(Debug, Clone, PartialEq)]
pub enum AcceleratorConfig {
    None,
    Anderson {
        memory: usize,
        regularization: Regularization,
        map_step: Option<f64>,
    },
    Lbfgs {
        memory: usize,
        armijo: ArmijoConfig,
    },
}

impl AcceleratorConfig {
    pub fn anderson(memory: usize) -> Self {
        Self::Anderson {
            memory,
            regularization: Regularization::default(),
            map_step: None,
        }
    }

    pub fn lbfgs(memory: usize) -> Self {
        Self::Lbfgs {
            memory,
            armijo: ArmijoConfig::default(),
        }
    }

    pub fn build(&self) -> Result<Option<Accelerator>> {
        Ok(match self {
            Self::None => None,
            Self::Anderson {
                memory,
                regularization,
                map_step,
            } => Some(Accelerator::Anderson(AndersonAccelerator::new(
                *memory,
                *regularization,
                *map_step,
            )?)),
            Self::Lbfgs { memory, armijo } => {
                Some(Accelerator::Lbfgs(LbfgsAccelerator::new(*memory, *armijo)?))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub enum Accelerator {
    Anderson(AndersonAccelerator),
    Lbfgs(LbfgsAccelerator),
}

impl CandidateGenerator for Accelerator {
    fn propose<P: FiniteSumProblem + ?Sized>(
        &mut self,
        problem: &P,
        x: &Array1<f64>,
        grad: &Array1<f64>,
    ) -> Result<Array1<f64>> {
        match self {
            Self::Anderson(a) => a.propose(problem, x, grad),
            Self::Lbfgs(a) => a.propose(problem, x, grad),
        }
    }

    fn reject(&mut self) {
        match self {
            Self::Anderson(a) => a.reject(),
            Self::Lbfgs(a) => a.reject(),
        }
    }

    fn cost(&self) -> CandidateCost {
        match self {
            Self::Anderson(a) => a.cost(),
            Self::Lbfgs(a) => a.cost(),
        }
    }

    fn requires_smooth_regularizer(&self) -> bool {
        match self {
            Self::Anderson(a) => a.requires_smooth_regularizer(),
            Self::Lbfgs(a) => a.requires_smooth_regularizer(),
        }
    }
}
