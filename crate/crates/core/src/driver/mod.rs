//! The safeguarded hybrid loop: accelerator candidates are accepted only
//! when they pass both safeguard inequalities, otherwise `K0` steps of the
//! basic method run.

mod cost;
mod trace;

pub use cost::CostModel;
pub use trace::{CandidateLog, EventKind, RunTrace, SafeguardValues, StopReason, TraceRecord};

use log::{debug, info};
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::accel::{propose_candidate, Accelerator, AcceleratorConfig, CandidateGenerator};
use crate::engine::{max_step_size, BasicMethod, DualUpdatePolicy, SamplerConfig};
use crate::error::{ensure_positive, Error, Result};
use crate::problem::FiniteSumProblem;
use crate::state::{merit_and_gradient, GammaMetric, PrimalDualState};

#[derive(Debug, Clone, PartialEq)]
pub struct SafeguardConfig {
    pub c: f64,
    pub d: f64,
    pub delta: f64,
    /// Basic steps after each rejected candidate.
    pub k0: usize,
    pub k_max: usize,
    /// Stop once the merit drops to this value.
    pub tol: f64,
    pub accelerator: AcceleratorConfig,
}

impl SafeguardConfig {
    /// `C = D = 1e6`, `delta = 1e-6`, `K0 = n`, no accelerator.
    pub fn defaults(n: usize, k_max: usize) -> Self {
        Self {
            c: 1e6,
            d: 1e6,
            delta: 1e-6,
            k0: n,
            k_max,
            tol: 1e-12,
            accelerator: AcceleratorConfig::None,
        }
    }

    pub fn with_accelerator(mut self, accelerator: AcceleratorConfig) -> Self {
        self.accelerator = accelerator;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive(self.c, "C")?;
        ensure_positive(self.d, "D")?;
        ensure_positive(self.delta, "delta")?;
        if self.k0 == 0 {
            return Err(Error::InvalidParameter {
                name: "k0",
                reason: "must be at least 1".into(),
            });
        }
        if self.k_max == 0 {
            return Err(Error::InvalidParameter {
                name: "k_max",
                reason: "must be at least 1".into(),
            });
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must be >= 0, got {}", self.tol),
            });
        }
        Ok(())
    }

    /// `C V0 (1 + k_aa)^-(1 + delta)`
    pub fn merit_bound(&self, v0: f64, k_aa: usize) -> f64 {
        self.c * v0 * (1.0 + k_aa as f64).powf(-(1.0 + self.delta))
    }
}

/// Accept iff `V(z+) <= C V0 (1 + k_aa)^-(1+delta)` and `||z+ - z_k|| <= D V(z_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeguardDecision {
    pub accept: bool,
    pub values: SafeguardValues,
}

impl SafeguardDecision {
    pub fn evaluate(
        merit_plus: f64,
        distance: f64,
        merit_k: f64,
        v0: f64,
        k_aa: usize,
        cfg: &SafeguardConfig,
    ) -> Self {
        let values = SafeguardValues {
            merit: merit_plus,
            merit_bound: cfg.merit_bound(v0, k_aa),
            distance,
            distance_bound: cfg.d * merit_k,
        };
        Self {
            accept: values.satisfied(),
            values,
        }
    }
}

/// Computes both merits and the distance, then applies [`SafeguardDecision::evaluate`].
pub fn safeguard_check<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    metric: &GammaMetric,
    z_plus: &PrimalDualState,
    z_k: &PrimalDualState,
    v0: f64,
    k_aa: usize,
    cfg: &SafeguardConfig,
) -> Result<SafeguardDecision> {
    let (merit_plus, _) = merit_and_gradient(problem, metric, z_plus)?;
    let (merit_k, _) = merit_and_gradient(problem, metric, z_k)?;
    let distance = metric.distance(z_plus, z_k)?;
    Ok(SafeguardDecision::evaluate(
        merit_plus, distance, merit_k, v0, k_aa, cfg,
    ))
}

/// Run-level settings that do not change the iteration itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Defaults to the origin.
    pub x0: Option<Array1<f64>>,
    pub cost: CostModel,
    pub f_star: Option<f64>,
    /// Evaluate objective and merit every this many basic steps.
    pub record_stride: usize,
    pub keep_candidates: bool,
    pub keep_iterates: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            x0: None,
            cost: CostModel::default(),
            f_star: None,
            record_stride: 1,
            keep_candidates: false,
            keep_iterates: false,
        }
    }
}

struct Recorder<'a, P: ?Sized> {
    problem: &'a P,
    metric: GammaMetric,
    trace: Vec<TraceRecord>,
    passes: f64,
    flops: f64,
}

impl<P: FiniteSumProblem + ?Sized> Recorder<'_, P> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        k: usize,
        k_aa: usize,
        event: EventKind,
        objective: f64,
        merit: f64,
        event_passes: f64,
        event_flops: f64,
        safeguard: Option<SafeguardValues>,
    ) {
        self.passes += event_passes;
        self.flops += event_flops;
        self.trace.push(TraceRecord {
            k,
            k_aa,
            event,
            objective,
            merit,
            passes: self.passes,
            flops: self.flops,
            event_flops,
            event_passes,
            safeguard,
        });
    }

    fn evaluate(&self, z: &PrimalDualState) -> Result<(f64, f64, Array1<f64>)> {
        let (merit, grad) = merit_and_gradient(self.problem, &self.metric, z)?;
        Ok((self.problem.objective(&z.x)?, merit, grad))
    }
}

fn initial_point<P: FiniteSumProblem + ?Sized>(problem: &P, opts: &RunOptions) -> Array1<f64> {
    opts.x0
        .clone()
        .unwrap_or_else(|| Array1::zeros(problem.dim()))
}

/// Runs the hybrid scheme with the accelerator named in `cfg`.
pub fn run_hybrid<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
    cfg: &SafeguardConfig,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    let mut accel = cfg.accelerator.build()?;
    run_hybrid_with::<P, Accelerator>(
        problem,
        step,
        sampler,
        policy,
        cfg,
        accel.as_mut(),
        seed,
        opts,
    )
}

/// Runs the hybrid scheme with a caller-supplied candidate generator.
/// `cfg.accelerator` is ignored.
#[allow(clippy::too_many_arguments)]
pub fn run_hybrid_with<P, A>(
    problem: &P,
    step: f64,
    sampler: &SamplerConfig,
    policy: &DualUpdatePolicy,
    cfg: &SafeguardConfig,
    mut accel: Option<&mut A>,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunTrace>
where
    P: FiniteSumProblem + ?Sized,
    A: CandidateGenerator + ?Sized,
{
    cfg.validate()?;
    ensure_positive(step, "step")?;
    let bound = max_step_size(problem.lipschitz(), sampler)?;
    if step >= bound {
        return Err(Error::InvalidParameter {
            name: "step",
            reason: format!("must be below {bound}, got {step}"),
        });
    }
    if let Some(a) = accel.as_deref() {
        if a.requires_smooth_regularizer() && !problem.prox_term().is_smooth() {
            return Err(Error::NonSmooth {
                what: "regularizer (required by the accelerator)",
            });
        }
    }
    if opts.record_stride == 0 {
        return Err(Error::InvalidParameter {
            name: "record_stride",
            reason: "must be at least 1".into(),
        });
    }
    let (n, d) = (problem.n_components(), problem.dim());
    let cost = &opts.cost;
    let metric = GammaMetric::new(step, &policy.effective_rho(sampler), problem.lipschitz())?;
    let mut rec = Recorder {
        problem,
        metric: metric.clone(),
        trace: Vec::new(),
        passes: 0.0,
        flops: 0.0,
    };

    let z0 = PrimalDualState::lifted(problem, initial_point(problem, opts))?;
    let (obj0, v0, grad0) = rec.evaluate(&z0)?;
    rec.push(
        0,
        0,
        EventKind::Start,
        obj0,
        v0,
        1.0,
        cost.gradient_descent(n, d),
        None,
    );
    info!("start: objective {obj0:e}, merit {v0:e}");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut method = BasicMethod::new(problem, step, sampler.clone(), *policy, z0)?;
    let mut cached: Option<(f64, Array1<f64>)> = Some((v0, grad0));
    let mut candidates = Vec::new();
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push((0, method.state().clone()));
    }
    let (mut k, mut k_aa) = (0usize, 0usize);
    let mut stop = StopReason::MaxIterations;
    let mut last_merit = v0;

    'outer: loop {
        if k >= cfg.k_max {
            break;
        }
        if let Some(a) = accel.as_deref_mut() {
            let (v_k, grad_k) = match cached.take() {
                Some(c) => c,
                None => merit_and_gradient(problem, &metric, method.state())?,
            };
            if v_k <= cfg.tol {
                stop = StopReason::Tolerance;
                break;
            }
            let candidate = propose_candidate(a, problem, &method.state().x, &grad_k);
            let event_flops = cost.candidate(a.cost(), n, d);
            let evaluated = match &candidate {
                Ok(zp) => {
                    let (v_plus, grad_plus) = merit_and_gradient(problem, &metric, zp)?;
                    let dist = metric.distance(zp, method.state())?;
                    Some((
                        SafeguardDecision::evaluate(v_plus, dist, v_k, v0, k_aa, cfg),
                        grad_plus,
                    ))
                }
                Err(e) => {
                    debug!("k {k}: no candidate ({e})");
                    None
                }
            };
            let accepted = matches!(&evaluated, Some((dec, _)) if dec.accept);
            if opts.keep_candidates {
                candidates.push(CandidateLog {
                    k,
                    k_aa,
                    current: method.state().clone(),
                    candidate: candidate.as_ref().ok().cloned(),
                    accepted,
                });
            }
            match (candidate, evaluated) {
                (Ok(zp), Some((dec, grad_plus))) if dec.accept => {
                    k += 1;
                    k_aa += 1;
                    let objective = problem.objective(&zp.x)?;
                    rec.push(
                        k,
                        k_aa,
                        EventKind::Accept,
                        objective,
                        dec.values.merit,
                        1.0,
                        event_flops,
                        Some(dec.values),
                    );
                    last_merit = dec.values.merit;
                    cached = Some((dec.values.merit, grad_plus));
                    method.set_state(zp)?;
                    if opts.keep_iterates {
                        iterates.push((k, method.state().clone()));
                    }
                    continue 'outer;
                }
                (_, evaluated) => {
                    a.reject();
                    let values = evaluated
                        .map(|(dec, _)| dec.values)
                        .unwrap_or(SafeguardValues {
                            merit: f64::NAN,
                            merit_bound: cfg.merit_bound(v0, k_aa),
                            distance: f64::NAN,
                            distance_bound: cfg.d * v_k,
                        });
                    let objective = rec.trace.last().map_or(f64::NAN, |r| r.objective);
                    rec.push(
                        k,
                        k_aa,
                        EventKind::Reject,
                        objective,
                        v_k,
                        1.0,
                        event_flops,
                        Some(values),
                    );
                }
            }
        }

        let burst = if accel.is_some() {
            cfg.k0
        } else {
            cfg.k_max - k
        };
        for _ in 0..burst.min(cfg.k_max - k) {
            let (_, evals) = method.step(&mut rng);
            k += 1;
            cached = None;
            if opts.keep_iterates {
                iterates.push((k, method.state().clone()));
            }
            let event_passes = evals as f64 / n as f64;
            let event_flops = cost.basic_step(n, d);
            if k % opts.record_stride == 0 || k == cfg.k_max {
                let (objective, merit, grad) = rec.evaluate(method.state())?;
                rec.push(
                    k,
                    k_aa,
                    EventKind::Basic,
                    objective,
                    merit,
                    event_passes,
                    event_flops,
                    None,
                );
                last_merit = merit;
                cached = Some((merit, grad));
                if merit <= cfg.tol {
                    stop = StopReason::Tolerance;
                    break 'outer;
                }
            } else {
                rec.push(
                    k,
                    k_aa,
                    EventKind::Basic,
                    f64::NAN,
                    f64::NAN,
                    event_passes,
                    event_flops,
                    None,
                );
            }
        }
        if accel.is_none() && k >= cfg.k_max {
            break;
        }
    }
    info!("stop at k {k} ({stop:?}): {k_aa} accepted, merit {last_merit:e}");
    Ok(RunTrace {
        records: rec.trace,
        v0,
        f_star: opts.f_star,
        stop,
        final_state: method.into_state(),
        candidates,
        iterates,
    })
}

/// Proximal gradient descent `x+ = prox(x - step grad F(x))`, recorded with
/// the same trace layout. Duals are kept at `grad f_i(x)`, so the merit is
/// the norm of the primal residual.
pub fn run_proximal_gradient<P: FiniteSumProblem + ?Sized>(
    problem: &P,
    step: f64,
    k_max: usize,
    tol: f64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    ensure_positive(step, "step")?;
    if k_max == 0 {
        return Err(Error::InvalidParameter {
            name: "k_max",
            reason: "must be at least 1".into(),
        });
    }
    let (n, d) = (problem.n_components(), problem.dim());
    let cost = &opts.cost;
    let metric = GammaMetric::new(step, &vec![1.0; n], problem.lipschitz())?;
    let mut rec = Recorder {
        problem,
        metric,
        trace: Vec::new(),
        passes: 0.0,
        flops: 0.0,
    };
    let mut z = PrimalDualState::lifted(problem, initial_point(problem, opts))?;
    let (obj0, v0, mut grad) = rec.evaluate(&z)?;
    rec.push(
        0,
        0,
        EventKind::Start,
        obj0,
        v0,
        1.0,
        cost.gradient_descent(n, d),
        None,
    );
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push((0, z.clone()));
    }
    let mut stop = StopReason::MaxIterations;
    if v0 <= tol {
        stop = StopReason::Tolerance;
    } else {
        for k in 1..=k_max {
            let mut x = &z.x - &(&grad * step);
            problem.prox_term().prox_in_place(step, &mut x);
            z = PrimalDualState::lifted(problem, x)?;
            let (objective, merit, g) = rec.evaluate(&z)?;
            grad = g;
            rec.push(
                k,
                0,
                EventKind::Basic,
                objective,
                merit,
                1.0,
                cost.gradient_descent(n, d),
                None,
            );
            if opts.keep_iterates {
                iterates.push((k, z.clone()));
            }
            if merit <= tol {
                stop = StopReason::Tolerance;
                break;
            }
        }
    }
    Ok(RunTrace {
        records: rec.trace,
        v0,
        f_star: opts.f_star,
        stop,
        final_state: z,
        candidates: Vec::new(),
        iterates,
    })
}
