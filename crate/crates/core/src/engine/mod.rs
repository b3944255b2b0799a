//! The variance-reduced basic method: gradient estimator, primal and dual
//! updates, samplers and dual-update policies.

mod certify;

pub use certify::{
    enumerate_outcomes, expected_descent, step_bounds, BoundCheck, BoundReport, DescentCertificate,
    ZetaTerms,
};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{ensure_positive, Error, Result};
use crate::linalg::axpy;
use crate::problem::{slice, FiniteSumProblem};
use crate::state::PrimalDualState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Uniform,
    /// `p_i = L_i / sum_j L_j`
    Lipschitz,
    Custom,
}

/// Distribution of the sampled component index.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    kind: SamplerKind,
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SamplerConfig {
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "at least one component".into(),
            });
        }
        Self::build(SamplerKind::Uniform, vec![1.0 / n as f64; n])
    }

    pub fn lipschitz(lipschitz: &[f64]) -> Result<Self> {
        for l in lipschitz {
            ensure_positive(*l, "lipschitz")?;
        }
        let total: f64 = lipschitz.iter().sum();
        Self::build(
            SamplerKind::Lipschitz,
            lipschitz.iter().map(|l| l / total).collect(),
        )
    }

    pub fn custom(probabilities: Vec<f64>) -> Result<Self> {
        Self::build(SamplerKind::Custom, probabilities)
    }

    fn build(kind: SamplerKind, probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::InvalidParameter {
                name: "probabilities",
                reason: "empty".into(),
            });
        }
        if let Some(bad) = probabilities
            .iter()
            .find(|p| !(**p > 0.0) || !p.is_finite())
        {
            return Err(Error::InvalidParameter {
                name: "probabilities",
                reason: format!("every probability must be positive, got {bad}"),
            });
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "probabilities",
                reason: format!("must sum to one, sum is {total}"),
            });
        }
        let cumulative = probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            kind,
            probabilities,
            cumulative,
        })
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let n = self.probabilities.len();
        match self.kind {
            SamplerKind::Uniform => rng.random_range(0..n),
            _ => {
                let u: f64 = rng.random();
                self.cumulative.partition_point(|c| *c <= u).min(n - 1)
            }
        }
    }
}

/// How the stored gradients are refreshed each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualUpdatePolicy {
    /// Only the sampled component's dual is refreshed.
    Saga,
    /// With probability `rho` every dual is refreshed.
    LooplessSvrg { rho: f64 },
}

impl DualUpdatePolicy {
    pub fn loopless_svrg(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho <= 1.0 {
            Ok(Self::LooplessSvrg { rho })
        } else {
            Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("must lie in (0, 1], got {rho}"),
            })
        }
    }

    /// Per-block probability that the dual is refreshed in one step.
    pub fn effective_rho(&self, sampler: &SamplerConfig) -> Vec<f64> {
        match self {
            Self::Saga => sampler.probabilities().to_vec(),
            Self::LooplessSvrg { rho } => vec![*rho; sampler.len()],
        }
    }
}

/// One realization of the step randomness: the sampled index and, for
/// L-SVRG, whether the duals are refreshed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub index: usize,
    pub refresh: bool,
}

impl StepOutcome {
    /// Whether dual block `i` is overwritten under `policy`.
    pub fn updates(&self, policy: &DualUpdatePolicy, i: usize) -> bool {
        match policy {
            DualUpdatePolicy::Saga => i == self.index,
            DualUpdatePolicy::LooplessSvrg { .. } => self.refresh,
        }
    }
}

pub fn draw_outcome<R: Rng + ?Sized>(
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
    rng: &mut R,
) -> StepOutcome {
    let index = sampler.sample(rng);
    let refresh = match policy {
        DualUpdatePolicy::Saga => false,
        DualUpdatePolicy::LooplessSvrg { rho } => rng.random::<f64>() < *rho,
    };
    StepOutcome { index, refresh }
}

/// `(grad f_i(x) - y_i) / (N p_i) + (1/N) sum_j y_j`
pub fn estimate_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    index: usize,
    sampler: &SamplerConfig,
) -> Result<Array1<f64>> {
    problem.check_index(index)?;
    z.check_shape(problem)?;
    check_sampler(problem, sampler)?;
    let p = sampler.probabilities()[index];
    if !(p > 0.0) {
        return Err(Error::ZeroProbability { index });
    }
    let n = problem.n_components() as f64;
    let g = problem.component_gradient(index, &z.x)?;
    Ok((g - z.y.row(index)) / (n * p) + z.dual_mean())
}

fn check_sampler<P: FiniteSumProblem + ?Sized>(problem: &P, sampler: &SamplerConfig) -> Result<()> {
    if sampler.len() != problem.n_components() {
        return Err(Error::DimensionMismatch {
            what: "sampler size",
            expected: problem.n_components(),
            actual: sampler.len(),
        });
    }
    Ok(())
}

/// One step of the basic method for a given outcome. The duals are refreshed
/// from the pre-update primal point.
pub fn basic_step<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
    outcome: StepOutcome,
) -> Result<PrimalDualState> {
    ensure_positive(step, "step")?;
    let estimate = estimate_gradient(problem, z, outcome.index, sampler)?;
    let mut x = &z.x - &(estimate * step);
    problem.prox_term().prox_in_place(step, &mut x);
    let mut y = z.y.clone();
    for (i, mut row) in y.rows_mut().into_iter().enumerate() {
        if outcome.updates(policy, i) {
            problem.component_gradient_into(
                i,
                slice(&z.x),
                row.as_slice_mut().expect("standard layout"),
            );
        }
    }
    Ok(PrimalDualState { x, y })
}

/// Draws an outcome from `rng` and applies [`basic_step`].
pub fn basic_step_random<P: FiniteSumProblem + ?Sized, R: Rng + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
    rng: &mut R,
) -> Result<PrimalDualState> {
    basic_step(
        problem,
        z,
        step,
        sampler,
        policy,
        draw_outcome(sampler, policy, rng),
    )
}

/// `min_i N p_i / (2 L_i)`; step sizes must stay strictly below it.
pub fn max_step_size(lipschitz: &[f64], sampler: &SamplerConfig) -> Result<f64> {
    if lipschitz.is_empty() {
        return Err(Error::InvalidParameter {
            name: "lipschitz",
            reason: "empty".into(),
        });
    }
    if lipschitz.len() != sampler.len() {
        return Err(Error::DimensionMismatch {
            what: "sampler size",
            expected: lipschitz.len(),
            actual: sampler.len(),
        });
    }
    let n = lipschitz.len() as f64;
    lipschitz
        .iter()
        .zip(sampler.probabilities())
        .map(|(l, p)| {
            ensure_positive(*l, "lipschitz")?;
            Ok(n * p / (2.0 * l))
        })
        .try_fold(f64::INFINITY, |acc, v: Result<f64>| Ok(acc.min(v?)))
}

/// In-place runner for the basic method that keeps the dual sum up to date
/// incrementally and recomputes it exactly every `N` steps.
#[derive(Debug, Clone)]
pub struct BasicMethod<'p, P: ?Sized> {
    problem: &'p P,
    step: f64,
    sampler: SamplerConfig,
    policy: DualUpdatePolicy,
    state: PrimalDualState,
    dual_sum: Array1<f64>,
    since_recompute: usize,
    grad: Vec<f64>,
}

impl<'p, P: FiniteSumProblem + ?Sized> BasicMethod<'p, P> {
    pub fn new(
        problem: &'p P,
        step: f64,
        sampler: SamplerConfig,
        policy: DualUpdatePolicy,
        state: PrimalDualState,
    ) -> Result<Self> {
        ensure_positive(step, "step")?;
        check_sampler(problem, &sampler)?;
        state.check_shape(problem)?;
        let dual_sum = sum_rows(&state.y);
        Ok(Self {
            problem,
            step,
            sampler,
            policy,
            state,
            dual_sum,
            since_recompute: 0,
            grad: vec![0.0; problem.dim()],
        })
    }

    pub fn state(&self) -> &PrimalDualState {
        &self.state
    }

    pub fn into_state(self) -> PrimalDualState {
        self.state
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn sampler(&self) -> &SamplerConfig {
        &self.sampler
    }

    pub fn policy(&self) -> &DualUpdatePolicy {
        &self.policy
    }

    /// Replaces the iterate (e.g. after an accepted candidate).
    pub fn set_state(&mut self, state: PrimalDualState) -> Result<()> {
        state.check_shape(self.problem)?;
        self.dual_sum = sum_rows(&state.y);
        self.since_recompute = 0;
        self.state = state;
        Ok(())
    }

    /// Draws one outcome and applies it. Returns the outcome and the number
    /// of component gradient evaluations performed.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (StepOutcome, usize) {
        let outcome = draw_outcome(&self.sampler, &self.policy, rng);
        let evals = self.apply(outcome);
        (outcome, evals)
    }

    /// Applies a given outcome in place; returns gradient evaluations used.
    pub fn apply(&mut self, outcome: StepOutcome) -> usize {
        let n = self.problem.n_components();
        let nf = n as f64;
        let i = outcome.index;
        let x_old = self.state.x.clone();
        self.problem
            .component_gradient_into(i, slice(&x_old), &mut self.grad);

        let scale = 1.0 / (nf * self.sampler.probabilities()[i]);
        {
            let yi = self.state.y.row(i);
            let x = self.state.x.as_slice_mut().expect("contiguous");
            for (j, xj) in x.iter_mut().enumerate() {
                let estimate = scale * (self.grad[j] - yi[j]) + self.dual_sum[j] / nf;
                *xj -= self.step * estimate;
            }
        }
        self.problem
            .prox_term()
            .prox_in_place(self.step, &mut self.state.x);

        let evals;
        match self.policy {
            DualUpdatePolicy::Saga => {
                let mut row = self.state.y.row_mut(i);
                let row = row.as_slice_mut().expect("standard layout");
                for j in 0..row.len() {
                    self.dual_sum[j] += self.grad[j] - row[j];
                }
                row.copy_from_slice(&self.grad);
                evals = 1;
                self.since_recompute += 1;
            }
            DualUpdatePolicy::LooplessSvrg { .. } if outcome.refresh => {
                let x = slice(&x_old);
                for (k, mut row) in self.state.y.rows_mut().into_iter().enumerate() {
                    let row = row.as_slice_mut().expect("standard layout");
                    if k == i {
                        row.copy_from_slice(&self.grad);
                    } else {
                        self.problem.component_gradient_into(k, x, row);
                    }
                }
                evals = n;
                self.since_recompute = n;
            }
            DualUpdatePolicy::LooplessSvrg { .. } => {
                evals = 1;
                self.since_recompute += 1;
            }
        }
        if self.since_recompute >= n {
            self.dual_sum = sum_rows(&self.state.y);
            self.since_recompute = 0;
        }
        evals
    }
}

fn sum_rows(y: &Array2<f64>) -> Array1<f64> {
    let mut acc = Array1::zeros(y.ncols());
    for row in y.rows() {
        axpy(
            1.0,
            row.as_slice().expect("standard layout"),
            acc.as_slice_mut().expect("contiguous"),
        );
    }
    acc
}
