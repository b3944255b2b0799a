//! Exact expectations over the step randomness, for checking the one-step
//! descent certificate and its supporting inequalities on small problems.

use std::fmt;

use ndarray::Array1;

use super::{basic_step, estimate_gradient, DualUpdatePolicy, SamplerConfig, StepOutcome};
use crate::error::{ensure_positive, Error, Result};
use crate::linalg::{dist_sq, norm_sq};
use crate::problem::{slice, FiniteSumProblem};
use crate::state::{residual, GammaMetric, PrimalDualState};

/// Every outcome of one step with its probability. L-SVRG outcomes are
/// split by the refresh coin; outcomes of probability zero are dropped.
pub fn enumerate_outcomes(
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
) -> Vec<(StepOutcome, f64)> {
    let mut out = Vec::new();
    for (index, p) in sampler.probabilities().iter().enumerate() {
        match policy {
            DualUpdatePolicy::Saga => out.push((
                StepOutcome {
                    index,
                    refresh: false,
                },
                *p,
            )),
            DualUpdatePolicy::LooplessSvrg { rho } => {
                out.push((
                    StepOutcome {
                        index,
                        refresh: true,
                    },
                    p * rho,
                ));
                if *rho < 1.0 {
                    out.push((
                        StepOutcome {
                            index,
                            refresh: false,
                        },
                        p * (1.0 - rho),
                    ));
                }
            }
        }
    }
    out
}

/// The additive pieces of `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZetaTerms {
    /// `sum_i (step/(N L_i) - 2 step^2/(N^2 p_i)) ||grad f_i(x) - grad f_i(x*)||^2`
    pub gradient_gap: f64,
    /// Same weights applied to `||y_i - y_i*||^2`.
    pub dual_gap: f64,
    /// `2 step^2 / N^2 ||sum_i (y_i - y_i*)||^2`
    pub dual_sum: f64,
    /// `step^2 ||grad F(x) - grad F(x*)||^2`
    pub full_gradient: f64,
    /// `E ||x+ - x + step (g - grad F(x*))||^2`
    pub expected_step: f64,
}

impl ZetaTerms {
    pub fn total(&self) -> f64 {
        self.gradient_gap + self.dual_gap + self.dual_sum + self.full_gradient + self.expected_step
    }
}

/// `E ||z+ - z*||^2_Gamma <= ||z - z*||^2_Gamma - zeta`, evaluated exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentCertificate {
    pub zeta: f64,
    pub expected_next_dist_sq: f64,
    pub current_dist_sq: f64,
    pub terms: ZetaTerms,
}

impl DescentCertificate {
    /// `||z - z*||^2 - zeta - E||z+ - z*||^2`; nonnegative when the bound holds.
    pub fn slack(&self) -> f64 {
        self.current_dist_sq - self.zeta - self.expected_next_dist_sq
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.slack() >= -tol && self.zeta >= -tol
    }
}

impl fmt::Display for DescentCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "E next {:.6e} | current {:.6e} | zeta {:.6e} (gradient gap {:.6e}, dual gap {:.6e}, dual sum {:.6e}, \
             full gradient {:.6e}, expected step {:.6e}) | slack {:.3e}",
            self.expected_next_dist_sq,
            self.current_dist_sq,
            self.zeta,
            self.terms.gradient_gap,
            self.terms.dual_gap,
            self.terms.dual_sum,
            self.terms.full_gradient,
            self.terms.expected_step,
            self.slack()
        )
    }
}

/// `lhs` should be `<= rhs` (or equal, for the dual identity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl BoundCheck {
    pub fn gap(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn le(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }

    pub fn eq(&self, tol: f64) -> bool {
        (self.lhs - self.rhs).abs() <= tol
    }
}

/// The three supporting bounds behind the certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    /// `E ||x+ - x*||^2` bound.
    pub primal: BoundCheck,
    /// Identity for the weighted expected dual distance.
    pub dual: BoundCheck,
    /// Second-moment bound on the estimator.
    pub estimator: BoundCheck,
}

impl BoundReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.primal.le(tol) && self.dual.eq(tol) && self.estimator.le(tol)
    }
}

struct Expectations {
    next_dist_sq: f64,
    step_term: f64,
    primal_dist_sq: f64,
    dual_weighted: f64,
    estimator_var: f64,
}

struct Fixed {
    metric: GammaMetric,
    grad_gap: Vec<f64>,
    dual_gap: Vec<f64>,
    dual_diff_sum: Array1<f64>,
    full_grad_gap: f64,
    grad_star: Array1<f64>,
}

fn prepare<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    z_star: &PrimalDualState,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
) -> Result<Fixed> {
    ensure_positive(step, "step")?;
    z.check_shape(problem)?;
    z_star.check_shape(problem)?;
    let r = residual(problem, step, z_star)?;
    let scale =
        1.0 + norm_sq(slice(&z_star.x)).sqrt() + z_star.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r_norm = (norm_sq(slice(&r.x)) + r.y.iter().map(|v| v * v).sum::<f64>()).sqrt();
    if r_norm > 1e-9 * scale {
        return Err(Error::NotASolution { merit: r_norm });
    }
    let metric = GammaMetric::new(step, &policy.effective_rho(sampler), problem.lipschitz())?;
    let n = problem.n_components();
    let mut grad_gap = Vec::with_capacity(n);
    let mut dual_gap = Vec::with_capacity(n);
    let mut dual_diff_sum = Array1::zeros(problem.dim());
    let mut grad_diff_sum = Array1::<f64>::zeros(problem.dim());
    let mut grad_star = Array1::<f64>::zeros(problem.dim());
    for i in 0..n {
        let g = problem.component_gradient(i, &z.x)?;
        let gs = problem.component_gradient(i, &z_star.x)?;
        grad_gap.push(dist_sq(slice(&g), slice(&gs)));
        grad_diff_sum += &(&g - &gs);
        grad_star += &gs;
        let yi = z.y.row(i);
        let ys = z_star.y.row(i);
        dual_gap.push(yi.iter().zip(ys).map(|(a, b)| (a - b) * (a - b)).sum());
        dual_diff_sum += &(&yi - &ys);
    }
    let nf = n as f64;
    Ok(Fixed {
        metric,
        grad_gap,
        dual_gap,
        dual_diff_sum,
        full_grad_gap: norm_sq(slice(&grad_diff_sum)) / (nf * nf),
        grad_star: grad_star / nf,
    })
}

fn expectations<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    z_star: &PrimalDualState,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
    fixed: &Fixed,
) -> Result<Expectations> {
    let mut e = Expectations {
        next_dist_sq: 0.0,
        step_term: 0.0,
        primal_dist_sq: 0.0,
        dual_weighted: 0.0,
        estimator_var: 0.0,
    };
    for (outcome, prob) in enumerate_outcomes(sampler, policy) {
        let next = basic_step(problem, z, step, sampler, policy, outcome)?;
        let g = estimate_gradient(problem, z, outcome.index, sampler)?;
        let g_err = &g - &fixed.grad_star;
        let step_vec = &(&next.x - &z.x) + &(&g_err * step);
        e.next_dist_sq += prob * fixed.metric.distance_sq(&next, z_star)?;
        e.step_term += prob * norm_sq(slice(&step_vec));
        e.primal_dist_sq += prob * dist_sq(slice(&next.x), slice(&z_star.x));
        let dual: f64 = next
            .y
            .rows()
            .into_iter()
            .zip(z_star.y.rows())
            .zip(fixed.metric.weights())
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
            .sum();
        e.dual_weighted += prob * dual;
        e.estimator_var += prob * norm_sq(slice(&g_err));
    }
    Ok(e)
}

/// Evaluates both sides of the one-step descent bound exactly by enumerating
/// every outcome. `z_star` must be a fixed point (residual zero).
pub fn expected_descent<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    z_star: &PrimalDualState,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
) -> Result<DescentCertificate> {
    let fixed = prepare(problem, z, z_star, step, sampler, policy)?;
    let e = expectations(problem, z, z_star, step, sampler, policy, &fixed)?;
    let n = problem.n_components() as f64;
    let l = problem.lipschitz();
    let p = sampler.probabilities();
    let coef = |i: usize| step / (n * l[i]) - 2.0 * step * step / (n * n * p[i]);
    let terms = ZetaTerms {
        gradient_gap: (0..l.len()).map(|i| coef(i) * fixed.grad_gap[i]).sum(),
        dual_gap: (0..l.len()).map(|i| coef(i) * fixed.dual_gap[i]).sum(),
        dual_sum: 2.0 * step * step / (n * n) * norm_sq(slice(&fixed.dual_diff_sum)),
        full_gradient: step * step * fixed.full_grad_gap,
        expected_step: e.step_term,
    };
    Ok(DescentCertificate {
        zeta: terms.total(),
        expected_next_dist_sq: e.next_dist_sq,
        current_dist_sq: fixed.metric.distance_sq(z, z_star)?,
        terms,
    })
}

/// Both sides of each supporting bound, computed by exact enumeration.
pub fn step_bounds<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    z: &PrimalDualState,
    z_star: &PrimalDualState,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
) -> Result<BoundReport> {
    let fixed = prepare(problem, z, z_star, step, sampler, policy)?;
    let e = expectations(problem, z, z_star, step, sampler, policy, &fixed)?;
    let n = problem.n_components() as f64;
    let l = problem.lipschitz();
    let p = sampler.probabilities();
    let rho = policy.effective_rho(sampler);
    let w = fixed.metric.weights();

    let primal_rhs = dist_sq(slice(&z.x), slice(&z_star.x))
        - (0..l.len())
            .map(|i| 2.0 * step / (n * l[i]) * fixed.grad_gap[i])
            .sum::<f64>()
        - e.step_term
        + step * step * e.estimator_var;
    let dual_rhs = (0..l.len())
        .map(|i| step / (n * l[i]) * fixed.grad_gap[i] + (1.0 - rho[i]) * w[i] * fixed.dual_gap[i])
        .sum();
    let estimator_rhs = (0..l.len())
        .map(|i| 2.0 / (n * n * p[i]) * (fixed.grad_gap[i] + fixed.dual_gap[i]))
        .sum::<f64>()
        - 2.0 * norm_sq(slice(&fixed.dual_diff_sum)) / (n * n)
        - fixed.full_grad_gap;

    Ok(BoundReport {
        primal: BoundCheck {
            lhs: e.primal_dist_sq,
            rhs: primal_rhs,
        },
        dual: BoundCheck {
            lhs: e.dual_weighted,
            rhs: dual_rhs,
        },
        estimator: BoundCheck {
            lhs: e.estimator_var,
            rhs: estimator_rhs,
        },
    })
}
