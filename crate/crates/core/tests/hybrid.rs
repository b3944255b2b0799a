use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vrhybrid::accel::AcceleratorConfig;
use vrhybrid::driver::{run_hybrid, EventKind, RunOptions, SafeguardConfig, StopReason};
use vrhybrid::engine::{max_step_size, DualUpdatePolicy, SamplerConfig};
use vrhybrid::problem::{
    FiniteSumProblem, Formulation, LogisticRegression, ProxTerm, QuadraticProblem,
};
use vrhybrid::state::{merit, GammaMetric, PrimalDualState};
use vrhybrid::Error;

fn logistic(seed: u64, n: usize, d: usize) -> LogisticRegression {
    LogisticRegression::synthetic(
        &mut ChaCha8Rng::seed_from_u64(seed),
        n,
        d,
        0.01,
        Formulation::ProxSplit,
    )
    .unwrap()
}

struct Setup {
    sampler: SamplerConfig,
    policy: DualUpdatePolicy,
    step: f64,
}

fn setup<P: FiniteSumProblem>(p: &P) -> Setup {
    let n = p.n_components();
    let sampler = SamplerConfig::uniform(n).unwrap();
    let step = 0.9 * max_step_size(p.lipschitz(), &sampler).unwrap();
    Setup {
        sampler,
        policy: DualUpdatePolicy::loopless_svrg(1.0 / n as f64).unwrap(),
        step,
    }
}

#[test]
fn logged_decisions_match_offline_safeguard() {
    let p = logistic(0, 50, 10);
    let s = setup(&p);
    for (c, d) in [(1e6, 1e6), (1.0, 1e6), (1e6, 0.5)] {
        let mut cfg =
            SafeguardConfig::defaults(50, 3000).with_accelerator(AcceleratorConfig::lbfgs(5));
        cfg.c = c;
        cfg.d = d;
        let opts = RunOptions {
            keep_candidates: true,
            ..Default::default()
        };
        let trace = run_hybrid(&p, s.step, &s.sampler, &s.policy, &cfg, 0, &opts).unwrap();
        let metric =
            GammaMetric::new(s.step, &s.policy.effective_rho(&s.sampler), p.lipschitz()).unwrap();
        assert!(!trace.candidates.is_empty());
        for log in &trace.candidates {
            let accept = log.candidate.as_ref().is_some_and(|zp| {
                let bound = c * trace.v0 * (1.0 + log.k_aa as f64).powf(-(1.0 + cfg.delta));
                merit(&p, &metric, zp).unwrap() <= bound
                    && metric.distance(zp, &log.current).unwrap()
                        <= d * merit(&p, &metric, &log.current).unwrap()
            });
            assert_eq!(accept, log.accepted, "C {c}, D {d}, k {}", log.k);
        }
    }
}

#[test]
fn rejection_runs_exactly_k0_basic_steps() {
    let p = logistic(1, 40, 6);
    let s = setup(&p);
    let mut cfg =
        SafeguardConfig::defaults(40, 200).with_accelerator(AcceleratorConfig::anderson(3));
    cfg.c = 1e-300;
    cfg.k0 = 25;
    let trace = run_hybrid(
        &p,
        s.step,
        &s.sampler,
        &s.policy,
        &cfg,
        3,
        &RunOptions::default(),
    )
    .unwrap();
    let events: Vec<EventKind> = trace.records.iter().map(|r| r.event).collect();
    assert_eq!(events[0], EventKind::Start);
    for block in events[1..].chunks(26) {
        assert_eq!(block[0], EventKind::Reject);
        assert!(block[1..].iter().all(|e| *e == EventKind::Basic));
    }
    assert_eq!(trace.count(EventKind::Reject), 8);
    assert_eq!(trace.last().k, 200);
}

#[test]
fn cumulative_columns_are_running_sums() {
    let p = logistic(2, 30, 5);
    let s = setup(&p);
    let cfg = SafeguardConfig::defaults(30, 500).with_accelerator(AcceleratorConfig::lbfgs(3));
    let trace = run_hybrid(
        &p,
        s.step,
        &s.sampler,
        &s.policy,
        &cfg,
        5,
        &RunOptions::default(),
    )
    .unwrap();
    let (mut flops, mut passes) = (0.0, 0.0);
    for r in &trace.records {
        flops += r.event_flops;
        passes += r.event_passes;
        assert_eq!(r.flops, flops);
        assert_eq!(r.passes, passes);
    }
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("k,k_aa,event,objective,subopt,merit,passes,flops")
    );
    for (line, r) in lines.zip(&trace.records) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 8);
        assert_eq!(fields[7].parse::<f64>().unwrap(), r.flops);
    }
}

#[test]
fn anderson_hybrid_solves_an_l1_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = QuadraticProblem::random(&mut rng, 8, 5, ProxTerm::l1(0.3).unwrap()).unwrap();
    let x_star = p.minimizer().unwrap();
    let s = setup(&p);
    let mut cfg =
        SafeguardConfig::defaults(8, 20_000).with_accelerator(AcceleratorConfig::anderson(5));
    cfg.tol = 1e-10;
    let trace = run_hybrid(
        &p,
        s.step,
        &s.sampler,
        &s.policy,
        &cfg,
        0,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(trace.stop, StopReason::Tolerance);
    let err = (&trace.final_state.x - &x_star)
        .mapv(f64::abs)
        .fold(0.0f64, |a, v| a.max(*v));
    assert!(err < 1e-8, "error {err}");
}

#[test]
fn lbfgs_refuses_a_nonsmooth_regularizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = QuadraticProblem::random(&mut rng, 4, 3, ProxTerm::l1(0.1).unwrap()).unwrap();
    let s = setup(&p);
    let cfg = SafeguardConfig::defaults(4, 10).with_accelerator(AcceleratorConfig::lbfgs(3));
    let err = run_hybrid(
        &p,
        s.step,
        &s.sampler,
        &s.policy,
        &cfg,
        0,
        &RunOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::NonSmooth { .. }));
}

#[test]
fn saga_and_lipschitz_sampling_converge() {
    let p = logistic(3, 40, 6);
    let sampler = SamplerConfig::lipschitz(p.lipschitz()).unwrap();
    let step = 0.9 * max_step_size(p.lipschitz(), &sampler).unwrap();
    let mut cfg = SafeguardConfig::defaults(40, 40 * 400);
    cfg.tol = 1e-6;
    let trace = run_hybrid(
        &p,
        step,
        &sampler,
        &DualUpdatePolicy::Saga,
        &cfg,
        1,
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(trace.stop, StopReason::Tolerance);
    assert!(trace.last().merit < trace.v0 * 1e-3);
}

#[test]
fn warm_start_at_the_solution_stops_immediately() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = QuadraticProblem::random(&mut rng, 5, 3, ProxTerm::Zero).unwrap();
    let s = setup(&p);
    let x_star = p.minimizer().unwrap();
    let metric =
        GammaMetric::new(s.step, &s.policy.effective_rho(&s.sampler), p.lipschitz()).unwrap();
    let v = merit(
        &p,
        &metric,
        &PrimalDualState::lifted(&p, x_star.clone()).unwrap(),
    )
    .unwrap();
    let mut cfg = SafeguardConfig::defaults(5, 100).with_accelerator(AcceleratorConfig::lbfgs(3));
    cfg.tol = v.max(1e-14);
    let opts = RunOptions {
        x0: Some(x_star),
        ..Default::default()
    };
    let trace = run_hybrid(&p, s.step, &s.sampler, &s.policy, &cfg, 0, &opts).unwrap();
    assert_eq!(trace.stop, StopReason::Tolerance);
    assert_eq!(trace.records.len(), 1);
    assert_eq!(trace.last().k, 0);
}
