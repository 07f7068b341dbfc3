//! Thin wrappers over `argmin` for the two optimizers the crate needs:
//! a derivative-free simplex for the handful of copula shape parameters and
//! BFGS with finite-difference gradients for the GARCH likelihood.

use argmin::core::{CostFunction, Error, Executor, Gradient, State, TerminationReason};
use argmin::solver::brent::BrentRoot;
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::neldermead::NelderMead;
use argmin::solver::quasinewton::BFGS;
use std::cell::Cell;

/// Cost assigned to points where the objective is not finite. Large but
/// finite so the simplex standard deviation stays well defined.
const PENALTY: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_iters: u64,
    /// Stop when the standard deviation of the simplex costs drops below this.
    pub f_tol: f64,
    pub restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_iters: 400, f_tol: 1e-7, restarts: 1 }
    }
}

struct Objective<'a, F> {
    f: &'a F,
    evals: Cell<usize>,
}

impl<F: Fn(&[f64]) -> f64> Objective<'_, F> {
    fn eval(&self, x: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        let v = (self.f)(x);
        if v.is_finite() { v } else { PENALTY }
    }
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Vec<f64>) -> Result<f64, Error> {
        Ok(self.eval(p))
    }
}

impl<F: Fn(&[f64]) -> f64> Gradient for Objective<'_, F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;
    fn gradient(&self, p: &Vec<f64>) -> Result<Vec<f64>, Error> {
        Ok(central_gradient(|x| self.eval(x), p))
    }
}

/// Central finite-difference gradient.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Finite-difference Hessian, symmetric by construction.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let mut xp = x.to_vec();
    let f0 = f(x);
    let mut hess = vec![vec![0.0; n]; n];
    for i in 0..n {
        xp[i] = x[i] + h[i];
        let fp = f(&xp);
        xp[i] = x[i] - h[i];
        let fm = f(&xp);
        xp[i] = x[i];
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let mut g = |si: f64, sj: f64| {
                xp[i] = x[i] + si * h[i];
                xp[j] = x[j] + sj * h[j];
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (g(1.0, 1.0) - g(1.0, -1.0) - g(-1.0, 1.0) + g(-1.0, -1.0)) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// Minimize `f` with Nelder-Mead starting from `x0` with initial simplex
/// edges `step`. Non-finite values are treated as a flat penalty, which is
/// how box constraints are expressed by callers. The search is restarted
/// from the best point `opts.restarts` times to escape collapsed simplices.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: &[f64], opts: SimplexOptions) -> Minimum {
    let obj = Objective { f: &f, evals: Cell::new(0) };
    let mut best = x0.to_vec();
    let mut best_f = obj.eval(&best);
    let mut converged = false;
    for _ in 0..=opts.restarts {
        let mut simplex = vec![best.clone()];
        for (i, s) in step.iter().enumerate() {
            let mut v = best.clone();
            v[i] += s;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(opts.f_tol).expect("valid tolerance");
        let run = Executor::new(Objective { f: &f, evals: Cell::new(0) }, solver)
            .configure(|s| s.max_iters(opts.max_iters))
            .run();
        let Ok(res) = run else { break };
        let state = res.state();
        obj.evals.set(obj.evals.get() + state.get_func_counts().get("cost_count").copied().unwrap_or(0) as usize);
        converged = matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged));
        if let Some(p) = state.get_best_param() {
            if state.get_best_cost() <= best_f {
                best_f = state.get_best_cost();
                best = p.clone();
            }
        }
    }
    Minimum { x: best, f: best_f, evals: obj.evals.get(), converged: converged && best_f < PENALTY }
}

/// Minimize a smooth `f` with BFGS and a More-Thuente line search.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], max_iters: u64, grad_tol: f64) -> Minimum {
    let n = x0.len();
    let obj = Objective { f: &f, evals: Cell::new(0) };
    let mut eye = vec![vec![0.0; n]; n];
    for (i, row) in eye.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let solver = BFGS::new(MoreThuenteLineSearch::new())
        .with_tolerance_grad(grad_tol)
        .expect("valid tolerance")
        .with_tolerance_cost(1e-12)
        .expect("valid tolerance");
    let run = Executor::new(obj, solver)
        .configure(|s| s.param(x0.to_vec()).inv_hessian(eye).max_iters(max_iters))
        .run();
    match run {
        Ok(res) => {
            let state = res.state();
            let x = state.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
            let fx = state.get_best_cost();
            let converged = matches!(state.get_termination_reason(), Some(TerminationReason::SolverConverged));
            let evals = state.get_func_counts().values().sum::<u64>() as usize;
            Minimum { x, f: fx, evals, converged }
        }
        Err(_) => Minimum { x: x0.to_vec(), f: f(x0), evals: 0, converged: false },
    }
}

struct Scalar<F>(F);

impl<F: Fn(f64) -> f64> CostFunction for Scalar<F> {
    type Param = f64;
    type Output = f64;
    fn cost(&self, x: &f64) -> Result<f64, Error> {
        Ok((self.0)(*x))
    }
}

/// Root of `f` in `[lo, hi]` by Brent's method; `None` if the bracket does
/// not change sign or the solver fails.
pub fn brent_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo.is_finite() && fhi.is_finite()) || flo * fhi > 0.0 {
        return None;
    }
    let res = Executor::new(Scalar(f), BrentRoot::new(lo, hi, tol))
        .configure(|s| s.param(0.5 * (lo + hi)).max_iters(200))
        .run()
        .ok()?;
    res.state().get_best_param().copied()
}
