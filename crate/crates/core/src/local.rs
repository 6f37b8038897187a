//! Bound-constrained nonlinear least squares: projected Gauss-Newton, a box trust
//! region, and a seeded multistart driver.
//!
//! Both solvers minimize `f(x) = ||r(x)||^2` over `l <= x <= u` and only accept
//! steps that lower `f`, so the recorded objective history is non-increasing.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::structural::ModelUpdateProblem;

/// Residual map with an analytic Jacobian and box bounds.
pub trait LeastSquares {
    fn n_vars(&self) -> usize;
    fn residual(&self, x: &[f64]) -> DVector<f64>;
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
    fn lower(&self) -> Vec<f64>;
    fn upper(&self) -> Vec<f64>;

    fn objective(&self, x: &[f64]) -> f64 {
        self.residual(x).norm_squared()
    }
}

impl LeastSquares for ModelUpdateProblem {
    fn n_vars(&self) -> usize {
        ModelUpdateProblem::n_vars(self)
    }
    fn residual(&self, x: &[f64]) -> DVector<f64> {
        ModelUpdateProblem::residual(self, x)
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        ModelUpdateProblem::jacobian(self, x)
    }
    fn lower(&self) -> Vec<f64> {
        ModelUpdateProblem::lower(self)
    }
    fn upper(&self) -> Vec<f64> {
        ModelUpdateProblem::upper(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    pub step_tol: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for LocalOptions {
    fn default() -> Self {
        LocalOptions {
            step_tol: 1e-10,
            grad_tol: 1e-8,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    /// Projected gradient below `grad_tol`.
    Gradient,
    /// Accepted step shorter than `step_tol`.
    Step,
    MaxIterations,
    /// No decrease could be found along the search direction or inside the radius.
    Stalled,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Termination::Gradient => "gradient tolerance",
            Termination::Step => "step tolerance",
            Termination::MaxIterations => "iteration limit",
            Termination::Stalled => "no further decrease",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub x_final: Vec<f64>,
    pub objective_final: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Gauss-Newton fell back to a damped (Levenberg) system at least once.
    pub damped_fallback: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

impl LocalResult {
    /// Human-readable reason, including the damping flag.
    pub fn reason(&self) -> String {
        if self.damped_fallback {
            format!("{} (damped fallback used)", self.termination)
        } else {
            self.termination.to_string()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    GaussNewton,
    TrustRegion,
}

impl Method {
    pub fn run<P: LeastSquares + ?Sized>(self, problem: &P, x0: &[f64], opts: &LocalOptions) -> LocalResult {
        match self {
            Method::GaussNewton => gauss_newton(problem, x0, opts),
            Method::TrustRegion => trust_region(problem, x0, opts),
        }
    }
}

/// Clamps `x` into `[lower, upper]`.
pub fn project(x: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&l, &u))| v.clamp(l, u))
        .collect()
}

/// `||x - P(x - g)||` with `g` the gradient of `||r||^2`.
pub fn projected_gradient_norm(x: &[f64], grad: &DVector<f64>, lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let moved = (v - grad[i]).clamp(lower[i], upper[i]);
            (v - moved).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Variables pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], grad: &DVector<f64>, lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let eps = 1e-12 * (1.0 + v.abs());
            (v <= lower[i] + eps && grad[i] > 0.0) || (v >= upper[i] - eps && grad[i] < 0.0)
        })
        .collect()
}

fn free_indices(active: &[bool]) -> Vec<usize> {
    (0..active.len()).filter(|&i| !active[i]).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct State {
    x: Vec<f64>,
    r: DVector<f64>,
    f: f64,
}

impl State {
    fn at<P: LeastSquares + ?Sized>(problem: &P, x: Vec<f64>) -> Self {
        let r = problem.residual(&x);
        let f = r.norm_squared();
        State { x, r, f }
    }
}

fn finish(state: State, iterations: usize, termination: Termination, damped: bool, history: Vec<f64>) -> LocalResult {
    LocalResult {
        x_final: state.x,
        objective_final: state.f,
        iterations,
        converged: matches!(termination, Termination::Gradient | Termination::Step),
        termination,
        damped_fallback: damped,
        history,
    }
}

/// Projected Gauss-Newton with an active set and Armijo backtracking along the
/// projected path. Singular normal equations switch to a Levenberg-damped system.
pub fn gauss_newton<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], opts: &LocalOptions) -> LocalResult {
    let lower = problem.lower();
    let upper = problem.upper();
    let mut state = State::at(problem, project(x0, &lower, &upper));
    let mut history = vec![state.f];
    let mut damped = false;

    for iter in 0..opts.max_iters {
        let jac = problem.jacobian(&state.x);
        let jtr = jac.transpose() * &state.r;
        let grad = &jtr * 2.0;
        if projected_gradient_norm(&state.x, &grad, &lower, &upper) <= opts.grad_tol {
            return finish(state, iter, Termination::Gradient, damped, history);
        }
        let free = free_indices(&active_set(&state.x, &grad, &lower, &upper));
        let jf = jac.select_columns(&free);
        let mut normal = jf.transpose() * &jf;
        let rhs = -jf.transpose() * &state.r;
        let scale = normal.diagonal().amax().max(1e-300);
        let d_free = match normal.clone().cholesky() {
            Some(ch) if ch.l().diagonal().min() > 1e-7 * scale.sqrt() => ch.solve(&rhs),
            _ => {
                damped = true;
                for i in 0..normal.nrows() {
                    normal[(i, i)] += 1e-6 * scale;
                }
                match normal.cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => return finish(state, iter, Termination::Stalled, damped, history),
                }
            }
        };
        let mut dir = vec![0.0; state.x.len()];
        for (k, &i) in free.iter().enumerate() {
            dir[i] = d_free[k];
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = state.x.iter().zip(&dir).map(|(v, d)| v + alpha * d).collect();
            let trial = project(&trial, &lower, &upper);
            let moved: f64 = trial.iter().zip(&state.x).enumerate().map(|(i, (t, v))| grad[i] * (t - v)).sum();
            let next = State::at(problem, trial);
            if next.f < state.f && next.f <= state.f + 1e-4 * moved {
                accepted = Some(next);
                break;
            }
            alpha *= 0.5;
        }
        let Some(next) = accepted else {
            return finish(state, iter, Termination::Stalled, damped, history);
        };
        let step = distance(&next.x, &state.x);
        state = next;
        history.push(state.f);
        if step <= opts.step_tol * (1.0 + norm(&state.x)) {
            return finish(state, iter + 1, Termination::Step, damped, history);
        }
    }
    finish(state, opts.max_iters, Termination::MaxIterations, damped, history)
}

/// Minimizer of `||r + J_F d||^2` subject to `||d|| <= radius`: `d = -(B + lambda I)^-1 b`
/// with `lambda >= 0` found by bisection on the secular equation.
fn trust_step(b_mat: &DMatrix<f64>, b: &DVector<f64>, radius: f64) -> DVector<f64> {
    let eig = b_mat.clone().symmetric_eigen();
    let coeffs = eig.eigenvectors.transpose() * b;
    let step_for = |lambda: f64| -> DVector<f64> {
        let scaled = DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().zip(eig.eigenvalues.iter()).map(|(c, s)| {
                let denom = (s.max(0.0) + lambda).max(1e-300);
                -c / denom
            }),
        );
        &eig.eigenvectors * scaled
    };
    let smin = eig.eigenvalues.min();
    if smin > 1e-12 * eig.eigenvalues.amax().max(1e-300) {
        let d = step_for(0.0);
        if d.norm() <= radius {
            return d;
        }
    }
    let mut lo = 0.0;
    let mut hi = b.norm() / radius + eig.eigenvalues.amax().abs();
    while step_for(hi).norm() > radius {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if step_for(mid).norm() > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    step_for(hi)
}

/// Trust region on the Gauss-Newton model with bound handling by projection and an
/// active set. The radius grows on good agreement and shrinks on poor agreement.
pub fn trust_region<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], opts: &LocalOptions) -> LocalResult {
    let lower = problem.lower();
    let upper = problem.upper();
    let mut state = State::at(problem, project(x0, &lower, &upper));
    let mut history = vec![state.f];
    let mut radius = 1.0f64.max(0.1 * norm(&state.x));
    let mut accepted_steps = 0;

    for _ in 0..opts.max_iters {
        let jac = problem.jacobian(&state.x);
        let jtr = jac.transpose() * &state.r;
        let grad = &jtr * 2.0;
        if projected_gradient_norm(&state.x, &grad, &lower, &upper) <= opts.grad_tol {
            return finish(state, accepted_steps, Termination::Gradient, false, history);
        }
        let free = free_indices(&active_set(&state.x, &grad, &lower, &upper));
        let jf = jac.select_columns(&free);
        let d_free = trust_step(&(jf.transpose() * &jf), &(jf.transpose() * &state.r), radius);
        let mut trial = state.x.clone();
        for (k, &i) in free.iter().enumerate() {
            trial[i] += d_free[k];
        }
        let trial = project(&trial, &lower, &upper);
        let step: Vec<f64> = trial.iter().zip(&state.x).map(|(t, v)| t - v).collect();
        let step_norm = norm(&step);
        let predicted = state.f - (&state.r + &jac * DVector::from_column_slice(&step)).norm_squared();
        let next = State::at(problem, trial);
        let actual = state.f - next.f;
        let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };

        if rho < 0.25 {
            radius = 0.25 * step_norm.max(1e-3 * radius);
        } else if rho > 0.75 && step_norm >= 0.99 * radius {
            radius *= 2.0;
        }
        if rho > 1e-4 && next.f < state.f {
            state = next;
            history.push(state.f);
            accepted_steps += 1;
            if step_norm <= opts.step_tol * (1.0 + norm(&state.x)) {
                return finish(state, accepted_steps, Termination::Step, false, history);
            }
        } else if radius <= opts.step_tol * (1.0 + norm(&state.x)) {
            return finish(state, accepted_steps, Termination::Stalled, false, history);
        }
    }
    finish(state, accepted_steps, Termination::MaxIterations, false, history)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// Runs starts on the rayon pool when the `parallel` feature is enabled,
    /// sequentially otherwise. Results are identical either way.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub start: Vec<f64>,
    pub result: LocalResult,
}

/// Equal-width bins over `[min, max]` of the final objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Histogram {
                edges: vec![0.0, 0.0],
                counts: vec![0],
            };
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    pub seed: u64,
    pub method: Method,
    pub starts: Vec<StartRecord>,
    pub histogram: Histogram,
    /// Index into `starts` of the lowest objective (first on ties).
    pub best: usize,
}

impl MultistartReport {
    pub fn best_result(&self) -> &LocalResult {
        &self.starts[self.best].result
    }

    /// Number of starts whose final objective is within `tol` of `target`.
    pub fn count_near(&self, target: f64, tol: f64) -> usize {
        self.starts
            .iter()
            .filter(|s| (s.result.objective_final - target).abs() <= tol)
            .count()
    }
}

/// Start `index` of a run seeded with `seed`: uniform in the box from its own
/// ChaCha20 stream, so it does not depend on how starts are scheduled.
pub fn start_point(seed: u64, index: usize, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
        .collect()
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn multistart<P: LeastSquares + Sync + ?Sized>(
    problem: &P,
    n_starts: usize,
    seed: u64,
    method: Method,
    opts: &LocalOptions,
    execution: Execution,
) -> MultistartReport {
    let n_starts = n_starts.max(1);
    let lower = problem.lower();
    let upper = problem.upper();
    let run = |index: usize| {
        let start = start_point(seed, index, &lower, &upper);
        let result = method.run(problem, &start, opts);
        StartRecord { index, start, result }
    };
    let starts: Vec<StartRecord> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n_starts).into_par_iter().map(run).collect()
        }
        _ => (0..n_starts).map(run).collect(),
    };
    let finals: Vec<f64> = starts.iter().map(|s| s.result.objective_final).collect();
    let best = finals
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < finals[b] { i } else { b });
    MultistartReport {
        seed,
        method,
        histogram: Histogram::new(&finals, HISTOGRAM_BINS),
        starts,
        best,
    }
}
