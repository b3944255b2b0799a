use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{Error, Result};

/// Curvature pairs `s = x_{k+1} - x_k`, `u = grad_{k+1} - grad_k` with
/// `rho = 1 / (u^T s)`, most recent last.
#[derive(Debug, Clone)]
pub struct LbfgsMemory {
    capacity: usize,
    s: VecDeque<Array1<f64>>,
    u: VecDeque<Array1<f64>>,
    rho: VecDeque<f64>,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter {
                name: "memory",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self {
            capacity,
            s: VecDeque::new(),
            u: VecDeque::new(),
            rho: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.u.clear();
        self.rho.clear();
    }

    /// Stores the pair unless `u^T s <= 1e-12 ||u|| ||s||`; returns whether it was kept.
    pub fn push(&mut self, s: Array1<f64>, u: Array1<f64>) -> bool {
        let us = u.dot(&s);
        let scale = u.dot(&u).sqrt() * s.dot(&s).sqrt();
        if !(us > 1e-12 * scale) || !us.is_finite() {
            return false;
        }
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.u.pop_front();
            self.rho.pop_front();
        }
        self.s.push_back(s);
        self.u.push_back(u);
        self.rho.push_back(1.0 / us);
        true
    }

    /// `H grad` by the two-loop recursion, with `H_0 = (s^T u / u^T u) I`
    /// from the newest pair, or the identity when empty.
    pub fn direction(&self, grad: &Array1<f64>) -> Array1<f64> {
        let k = self.s.len();
        let mut q = grad.clone();
        let mut a = vec![0.0; k];
        for i in (0..k).rev() {
            a[i] = self.rho[i] * self.s[i].dot(&q);
            q.scaled_add(-a[i], &self.u[i]);
        }
        let gamma = match (self.s.back(), self.u.back()) {
            (Some(s), Some(u)) => s.dot(u) / u.dot(u),
            _ => 1.0,
        };
        let mut r = q * gamma;
        for i in 0..k {
            let b = self.rho[i] * self.u[i].dot(&r);
            r.scaled_add(a[i] - b, &self.s[i]);
        }
        r
    }
}

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoConfig {
    pub c: f64,
    pub beta: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        Self {
            c: 1e-4,
            beta: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub step: f64,
    pub point: Array1<f64>,
    pub value: f64,
    pub backtracks: usize,
}

/// First `t` in `1, beta, beta^2, ...` with
/// `f(x - t p) <= f(x) - c t grad^T p`.
pub fn line_search<F>(
    mut objective: F,
    x: &Array1<f64>,
    p: &Array1<f64>,
    grad: &Array1<f64>,
    fx: f64,
    cfg: &ArmijoConfig,
) -> Result<LineSearchResult>
where
    F: FnMut(&Array1<f64>) -> Result<f64>,
{
    let slope = grad.dot(p);
    if !(slope > 0.0) {
        return Err(Error::NotDescentDirection { slope });
    }
    let mut t = 1.0;
    for backtracks in 0..=cfg.max_backtracks {
        let point = x - &(p * t);
        let value = objective(&point)?;
        if value <= fx - cfg.c * t * slope {
            return Ok(LineSearchResult {
                step: t,
                point,
                value,
                backtracks,
            });
        }
        t *= cfg.beta;
    }
    Err(Error::LineSearchExhausted {
        backtracks: cfg.max_backtracks,
    })
}

const STALL_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    /// Stop once `||grad|| <= grad_tol * max(1, ||grad_0||)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo: ArmijoConfig,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 20,
            grad_tol: 1e-12,
            max_iter: 10_000,
            armijo: ArmijoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOutcome {
    pub x: Array1<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Deterministic lBFGS on a smooth objective. A failed line search first
/// drops the memory and retries along the gradient; a second failure stops
/// the run with `converged = false`, as do `STALL_LIMIT` consecutive steps
/// whose decrease is lost in rounding.
pub fn minimize<F>(
    mut value_and_grad: F,
    x0: Array1<f64>,
    opts: &LbfgsOptions,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    let mut memory = LbfgsMemory::new(opts.memory)?;
    let mut x = x0;
    let (mut fx, mut g) = value_and_grad(&x)?;
    let g0 = g.dot(&g).sqrt();
    let target = opts.grad_tol * g0.max(1.0);
    let mut iterations = 0;
    let mut stalled = 0;
    loop {
        let gn = g.dot(&g).sqrt();
        if gn <= target {
            return Ok(LbfgsOutcome {
                x,
                value: fx,
                grad_norm: gn,
                initial_grad_norm: g0,
                iterations,
                converged: true,
            });
        }
        if iterations >= opts.max_iter || stalled >= STALL_LIMIT {
            return Ok(LbfgsOutcome {
                x,
                value: fx,
                grad_norm: gn,
                initial_grad_norm: g0,
                iterations,
                converged: false,
            });
        }
        let mut p = memory.direction(&g);
        if !(g.dot(&p) > 0.0) {
            memory.clear();
            p = g.clone();
        }
        let objective = |y: &Array1<f64>| value_and_grad(y).map(|(v, _)| v);
        let step = match line_search(objective, &x, &p, &g, fx, &opts.armijo) {
            Ok(s) => s,
            Err(_) if !memory.is_empty() => {
                memory.clear();
                continue;
            }
            Err(_) => {
                return Ok(LbfgsOutcome {
                    x,
                    value: fx,
                    grad_norm: gn,
                    initial_grad_norm: g0,
                    iterations,
                    converged: false,
                });
            }
        };
        let (f_new, g_new) = value_and_grad(&step.point)?;
        if fx - f_new <= 4.0 * f64::EPSILON * fx.abs().max(1.0) {
            stalled += 1;
        } else {
            stalled = 0;
        }
        memory.push(&step.point - &x, &g_new - &g);
        x = step.point;
        fx = f_new;
        g = g_new;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn to_na(v: &Array1<f64>) -> DVector<f64> {
        DVector::from_iterator(v.len(), v.iter().cloned())
    }

    /// Dense recursive BFGS inverse update applied pair by pair.
    fn dense_bfgs(pairs: &[(Array1<f64>, Array1<f64>)], d: usize) -> DMatrix<f64> {
        let eye = DMatrix::<f64>::identity(d, d);
        let mut h = match pairs.last() {
            Some((s, u)) => &eye * (s.dot(u) / u.dot(u)),
            None => eye.clone(),
        };
        for (s, u) in pairs {
            let (s, u) = (to_na(s), to_na(u));
            let rho = 1.0 / s.dot(&u);
            let left = &eye - (&s * u.transpose()) * rho;
            let right = &eye - (&u * s.transpose()) * rho;
            h = left * h * right + (&s * s.transpose()) * rho;
        }
        h
    }

    #[test]
    fn empty_memory_returns_gradient() {
        let m = LbfgsMemory::new(3).unwrap();
        let g = array![1.0, -2.0];
        assert_eq!(m.direction(&g), g);
    }

    #[test]
    fn two_loop_matches_dense_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 6;
        for len in 0..=5 {
            let mut mem = LbfgsMemory::new(5).unwrap();
            let mut pairs = Vec::new();
            while pairs.len() < len {
                let s = Array1::from_iter((0..d).map(|_| rng.random_range(-1.0..1.0)));
                let u = &s * 2.0 + Array1::from_iter((0..d).map(|_| rng.random_range(-0.3..0.3)));
                if mem.push(s.clone(), u.clone()) {
                    pairs.push((s, u));
                }
            }
            let g = Array1::from_iter((0..d).map(|_| rng.random_range(-1.0..1.0)));
            let p = mem.direction(&g);
            let oracle = dense_bfgs(&pairs, d) * to_na(&g);
            let err = (to_na(&p) - &oracle).norm() / oracle.norm();
            assert!(err < 1e-12, "len {len}: {err}");
        }
    }

    #[test]
    fn skips_pairs_without_curvature() {
        let mut m = LbfgsMemory::new(2).unwrap();
        assert!(!m.push(array![1.0, 0.0], array![-1.0, 0.0]));
        assert!(!m.push(array![1.0, 0.0], array![0.0, 1.0]));
        assert!(m.push(array![1.0, 0.0], array![1.0, 0.0]));
        assert!(m.push(array![0.0, 1.0], array![0.0, 1.0]));
        assert!(m.push(array![1.0, 1.0], array![1.0, 1.0]));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn recovers_inverse_hessian_from_conjugate_steps() {
        let q = array![[3.0, 0.5, 0.0], [0.5, 2.0, 0.1], [0.0, 0.1, 1.0]];
        // Q-conjugate directions by Gram-Schmidt in the Q inner product
        let mut dirs: Vec<Array1<f64>> = Vec::new();
        for e in [
            array![1.0, 0.0, 0.0],
            array![0.0, 1.0, 0.0],
            array![0.0, 0.0, 1.0],
        ] {
            let mut v = e;
            for w in &dirs {
                let c = v.dot(&q.dot(w)) / w.dot(&q.dot(w));
                v = &v - &(w * c);
            }
            dirs.push(v);
        }
        let mut m = LbfgsMemory::new(3).unwrap();
        for s in dirs {
            let u = q.dot(&s);
            assert!(m.push(s, u));
        }
        let g = array![0.3, -1.0, 2.0];
        let p = m.direction(&g);
        let qn = DMatrix::from_row_slice(3, 3, q.as_slice().unwrap());
        let expect = qn.lu().solve(&to_na(&g)).unwrap();
        assert!((to_na(&p) - expect).norm() < 1e-6);
    }

    #[test]
    fn full_step_accepted_on_unit_quadratic() {
        let x = array![1.0];
        let r = line_search(
            |y| Ok(0.5 * y[0] * y[0]),
            &x,
            &array![1.0],
            &array![1.0],
            0.5,
            &ArmijoConfig::default(),
        )
        .unwrap();
        assert_eq!(r.step, 1.0);
        assert_eq!(r.backtracks, 0);
    }

    #[test]
    fn backtracks_on_steep_function() {
        let cfg = ArmijoConfig::default();
        let f = |y: &Array1<f64>| Ok(50.0 * y[0] * y[0]);
        let x = array![1.0];
        let g = array![100.0];
        let r = line_search(f, &x, &g, &g, 50.0, &cfg).unwrap();
        assert!(r.step < 1.0 && r.step > 0.0);
        assert!(r.value <= 50.0 - cfg.c * r.step * g.dot(&g));
    }

    #[test]
    fn rejects_ascent_direction() {
        let err = line_search(
            |_| Ok(0.0),
            &array![1.0],
            &array![-1.0],
            &array![1.0],
            0.0,
            &ArmijoConfig::default(),
        );
        assert!(matches!(err, Err(Error::NotDescentDirection { .. })));
    }

    #[test]
    fn minimizes_ill_conditioned_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 10;
        let basis = DMatrix::<f64>::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0))
            .qr()
            .q();
        let eig = DVector::from_fn(d, |i, _| 1.0 + 99.0 * i as f64 / (d - 1) as f64);
        let q = &basis * DMatrix::from_diagonal(&eig) * basis.transpose();
        let x_star = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        // centered form keeps objective differences resolvable near the minimum
        let vg = |x: &Array1<f64>| {
            let e = to_na(x) - &x_star;
            let g = &q * &e;
            Ok((0.5 * e.dot(&g), Array1::from_iter(g.iter().cloned())))
        };
        let opts = LbfgsOptions {
            memory: d,
            grad_tol: 1e-8,
            max_iter: 50,
            ..Default::default()
        };
        let out = minimize(vg, Array1::zeros(d), &opts).unwrap();
        assert!(
            out.converged,
            "{} iterations, |g| = {}",
            out.iterations, out.grad_norm
        );
        assert!(out.grad_norm <= 1e-8 * out.initial_grad_norm.max(1.0));
    }
}
