//! Thin wrappers over derivative-free minimizers.

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use argmin::solver::brent::BrentOpt;
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: u64,
    pub converged: bool,
}

struct Cost<'a>(&'a (dyn Fn(&[f64]) -> f64 + Sync));

impl CostFunction for Cost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

struct ScalarCost<'a>(&'a (dyn Fn(f64) -> f64 + Sync));

impl CostFunction for ScalarCost<'_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, p: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(*p))
    }
}

fn numerical(e: argmin::core::Error) -> Error {
    Error::Numerical(e.to_string())
}

/// Nelder-Mead from an axis-aligned simplex of size `step` around `x0`.
/// Stops when the standard deviation of simplex values drops below `tol`.
pub fn nelder_mead(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], step: f64, tol: f64, max_iters: u64) -> Result<Minimum> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(tol).map_err(numerical)?;
    let res = Executor::new(Cost(f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(numerical)?;
    let state = res.state();
    let iterations = state.get_iter();
    let x = state.get_best_param().cloned().unwrap_or_else(|| x0.to_vec());
    Ok(Minimum { value: f(&x), x, iterations, converged: iterations < max_iters })
}

/// Nelder-Mead restarted from its own optimum until the value stops
/// improving by more than `tol`, then polished by coordinate descent.
pub fn nelder_mead_refined(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], step: f64, tol: f64, max_iters: u64) -> Result<Minimum> {
    let mut best = nelder_mead(f, x0, step, tol, max_iters)?;
    let mut iterations = best.iterations;
    let mut s = step;
    for _ in 0..8 {
        s *= 0.3;
        let next = nelder_mead(f, &best.x, s.max(1e-6), tol, max_iters)?;
        iterations += next.iterations;
        let improved = best.value - next.value;
        if next.value < best.value {
            best = next;
        }
        if improved <= tol {
            break;
        }
    }
    let polished = coordinate_descent(f, &best.x, s.max(1e-4), tol, 200);
    iterations += polished.iterations;
    if polished.value < best.value {
        best.x = polished.x;
        best.value = polished.value;
    }
    best.iterations = iterations;
    Ok(best)
}

/// Cyclic coordinate search with step halving.
pub fn coordinate_descent(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], step: f64, tol: f64, max_sweeps: u64) -> Minimum {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut h = step;
    let mut sweeps = 0;
    while sweeps < max_sweeps && h > 1e-12 {
        sweeps += 1;
        let start = fx;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += dir * h;
                let fy = f(&y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    break;
                }
            }
        }
        if start - fx <= tol {
            h *= 0.5;
        }
    }
    Minimum { x, value: fx, iterations: sweeps, converged: h <= 1e-12 || sweeps < max_sweeps }
}

struct FdCost<'a> {
    f: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    h: f64,
}

impl CostFunction for FdCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.f)(p))
    }
}

impl Gradient for FdCost<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(central_gradient(self.f, p, self.h))
    }
}

/// Central finite-difference gradient.
pub fn central_gradient(f: &(dyn Fn(&[f64]) -> f64 + Sync), x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut y = x.to_vec();
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            (up - f(&y)) / (2.0 * h)
        })
        .collect()
}

/// L-BFGS (memory 10, Moré-Thuente line search) on central
/// finite-difference gradients with step `h`.
pub fn lbfgs_fd(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], h: f64, tol: f64, max_iters: u64) -> Result<Minimum> {
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
        .with_tolerance_cost(tol)
        .map_err(numerical)?
        .with_tolerance_grad(tol)
        .map_err(numerical)?;
    let res = Executor::new(FdCost { f, h }, solver)
        .configure(|s| s.param(x0.to_vec()).max_iters(max_iters))
        .run();
    // a failed line search still leaves a usable best point
    let (x, iterations) = match res {
        Ok(r) => (r.state().get_best_param().cloned().unwrap_or_else(|| x0.to_vec()), r.state().get_iter()),
        Err(_) => (x0.to_vec(), 0),
    };
    let value = f(&x);
    let start = f(x0);
    if value <= start {
        Ok(Minimum { x, value, iterations, converged: iterations < max_iters })
    } else {
        Ok(Minimum { x: x0.to_vec(), value: start, iterations, converged: false })
    }
}

/// Brent's method on `[lo, hi]`.
pub fn brent(f: &(dyn Fn(f64) -> f64 + Sync), lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    let solver = BrentOpt::new(lo, hi).set_tolerance(tol, 1e-14);
    let res = Executor::new(ScalarCost(f), solver)
        .configure(|s| s.max_iters(500))
        .run()
        .map_err(numerical)?;
    let x = *res.state().get_best_param().unwrap_or(&lo);
    Ok((x, f(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + (x[0] * x[1] - x[2]).powi(2);
        let m = lbfgs_fd(&f, &[0.0, 0.0, 0.0], 1e-6, 1e-14, 500).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5 && (m.x[2] + 2.0).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead_refined(&f, &[-1.2, 1.0], 0.5, 1e-14, 5000).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m);
    }

    #[test]
    fn brent_parabola() {
        let (x, v) = brent(&|t| (t - 0.3).powi(2) + 2.0, -1.0, 1.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-7 && (v - 2.0).abs() < 1e-12);
    }
}
