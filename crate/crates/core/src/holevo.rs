//! Holevo Cramér-Rao bound by constrained minimization over Hermitian
//! operators `X_i`, plus the closed-form minimizer of the QFI bound.
//!
//! Feasible operators satisfy `Tr(X_i ∂_jρ) = δ_ij` (local unbiasedness).
//! All inner products are `⟨A, B⟩ = Re Tr(AB)` on Hermitian matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{compatibility_check, qfi_cr_bound, FisherMatrix, SldSet};
use crate::operator::{anticommutator, commutator, pauli_x, pauli_y, pauli_z, trace_norm_real, trace_product, CMatrix, DensityMatrix, HermitianOperator, C64, I};
use crate::tolerance::Tolerances;

/// Output of [`holevo_bound`].
#[derive(Debug, Clone)]
pub struct HolevoSolution {
    pub x_ops: Vec<HermitianOperator>,
    /// `V_ij = Tr(X_i X_j ρ)`.
    pub v_matrix: DMatrix<C64>,
    pub value: f64,
    pub constraint_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True objective at the warm start `X = F_Q⁻¹ L`.
    pub warm_start_value: f64,
    /// Best true objective after each accepted step; nonincreasing.
    pub history: Vec<f64>,
}

/// Solver limits. Defaults suit dimensions up to a few dozen.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop a smoothing stage once the relative objective change stays
    /// below this for `patience` iterations.
    pub rel_change: f64,
    pub patience: usize,
    pub final_smoothing: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 50_000, rel_change: 1e-9, patience: 20, final_smoothing: 1e-10 }
    }
}

/// `X_i = Σ_j (F_Q⁻¹)_ij L_j`.
pub fn qfi_optimal_x(fq: &FisherMatrix, slds: &SldSet) -> Result<Vec<HermitianOperator>> {
    if fq.dim() != slds.len() {
        return Err(Error::Dimension { expected: slds.len(), got: fq.dim() });
    }
    let inv = fq.inverse()?;
    Ok(combine(&inv, &slds.slds.iter().map(|l| l.matrix().clone()).collect::<Vec<_>>())
        .into_iter()
        .map(|m| HermitianOperator::from_hermitian_part(&m))
        .collect())
}

fn combine(coeffs: &DMatrix<f64>, ops: &[CMatrix]) -> Vec<CMatrix> {
    let n = ops[0].nrows();
    (0..coeffs.nrows())
        .map(|i| {
            let mut acc = CMatrix::zeros(n, n);
            for (j, op) in ops.iter().enumerate() {
                acc += op.scale(coeffs[(i, j)]);
            }
            acc
        })
        .collect()
}

fn dot(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| trace_product(x, y).re).sum()
}

fn axpy(y: &mut [CMatrix], alpha: f64, x: &[CMatrix]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi.scale(alpha);
    }
}

fn scaled(x: &[CMatrix], alpha: f64) -> Vec<CMatrix> {
    x.iter().map(|m| m.scale(alpha)).collect()
}

/// The affine constraint set and the cost.
struct Problem {
    rho: CMatrix,
    derivs: Vec<CMatrix>,
    gram_inv: DMatrix<f64>,
    cost: DMatrix<f64>,
}

impl Problem {
    fn new(rho: &DensityMatrix, slds: &SldSet, cost: &DMatrix<f64>) -> Result<Self> {
        let p = slds.len();
        if cost.shape() != (p, p) {
            return Err(Error::Dimension { expected: p, got: cost.nrows() });
        }
        let derivs = slds.implied_derivatives(rho.matrix());
        let gram = DMatrix::from_fn(p, p, |a, b| trace_product(&derivs[a], &derivs[b]).re);
        let scale = gram.amax();
        let eig = SymmetricEigen::new(gram.clone()).eigenvalues;
        if scale <= 0.0 || eig.min() <= 1e-13 * scale {
            return Err(Error::Validation("derivatives are linearly dependent; constraints infeasible".into()));
        }
        let gram_inv = gram.try_inverse().ok_or_else(|| Error::Numerical("singular constraint Gram matrix".into()))?;
        Ok(Problem { rho: rho.matrix().clone(), derivs, gram_inv, cost: cost.clone() })
    }

    fn p(&self) -> usize {
        self.derivs.len()
    }

    /// Orthogonal projection onto `{Y : Tr(Y_k ∂_jρ) = 0}`.
    fn project(&self, y: &mut [CMatrix]) {
        for yk in y.iter_mut() {
            let rhs = nalgebra::DVector::from_fn(self.p(), |b, _| trace_product(yk, &self.derivs[b]).re);
            let c = &self.gram_inv * rhs;
            for (a, d) in self.derivs.iter().enumerate() {
                *yk -= d.scale(c[a]);
            }
        }
    }

    /// Minimum-norm feasible point.
    fn min_norm_point(&self) -> Vec<CMatrix> {
        combine(&self.gram_inv, &self.derivs)
    }

    fn constraint_residual(&self, x: &[CMatrix]) -> f64 {
        let mut r: f64 = 0.0;
        for (i, xi) in x.iter().enumerate() {
            for (j, d) in self.derivs.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                r = r.max((trace_product(xi, d).re - target).abs());
            }
        }
        r
    }

    fn v_matrix(&self, x: &[CMatrix]) -> DMatrix<C64> {
        let xr: Vec<CMatrix> = x.iter().map(|xi| xi * &self.rho).collect();
        DMatrix::from_fn(self.p(), self.p(), |i, j| trace_product(&x[i], &xr[j]))
    }

    fn re_term(&self, v: &DMatrix<C64>) -> f64 {
        self.cost.component_mul(&v.map(|z| z.re)).sum()
    }

    fn im_matrix(&self, v: &DMatrix<C64>) -> DMatrix<f64> {
        let im = v.map(|z| z.im);
        &self.cost * (&im - im.transpose()) * 0.5
    }

    fn objective(&self, x: &[CMatrix]) -> f64 {
        let v = self.v_matrix(x);
        self.re_term(&v) + trace_norm_real(&self.im_matrix(&v))
    }

    /// `Tr(G ReV)` and its gradient `Σ_j G_kj {X_j, ρ}`.
    fn quadratic(&self, x: &[CMatrix]) -> (f64, Vec<CMatrix>) {
        let v = self.v_matrix(x);
        let anti: Vec<CMatrix> = x.iter().map(|xj| anticommutator(xj, &self.rho)).collect();
        (self.re_term(&v), combine(&self.cost, &anti))
    }

    /// Smoothed objective `Tr(G ReV) + Tr √(AᵀA + ε²)` with `A = G·ImV`,
    /// and its gradient.
    fn smoothed(&self, x: &[CMatrix], eps: f64) -> (f64, Vec<CMatrix>) {
        let (re, mut grad) = self.quadratic(x);
        let v = self.v_matrix(x);
        let a = self.im_matrix(&v);
        let p = self.p();
        let ata = a.transpose() * &a + DMatrix::identity(p, p) * (eps * eps);
        let eig = SymmetricEigen::new(ata);
        let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let value = re + sqrt_vals.sum();
        let s_inv = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals.map(|s| 1.0 / s)) * eig.eigenvectors.transpose();
        let cmat = &self.cost * (&a * s_inv);
        let comms: Vec<CMatrix> = x.iter().map(|xj| commutator(&self.rho, xj)).collect();
        let half_i = I * 0.5;
        for (k, gk) in grad.iter_mut().enumerate() {
            for (j, cj) in comms.iter().enumerate() {
                let w = cmat[(k, j)] - cmat[(j, k)];
                if w != 0.0 {
                    *gk += cj * (half_i * w);
                }
            }
            *gk = crate::operator::hermitian_part(gk);
        }
        (value, grad)
    }
}

/// Minimizes `Tr(G ReV)` alone by projected conjugate gradients from the
/// minimum-norm feasible point. Its value must reproduce `Tr(G F_Q⁻¹)`.
pub fn qfi_bound_via_minimization(rho: &DensityMatrix, slds: &SldSet, cost: &DMatrix<f64>) -> Result<(f64, bool)> {
    let prob = Problem::new(rho, slds, cost)?;
    let mut x = prob.min_norm_point();
    let (_, g0) = prob.quadratic(&x);
    let mut r = scaled(&g0, -1.0);
    prob.project(&mut r);
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-26 * dot(&g0, &g0).max(1e-300);
    let n = rho.dim();
    let max_iter = 4 * n * n * prob.p() + 50;
    let mut converged = rr <= tol;
    for _ in 0..max_iter {
        if converged {
            break;
        }
        // A(d) = ∇ quadratic at d, since the form is homogeneous
        let (_, ad) = prob.quadratic(&d);
        let mut ad = ad;
        prob.project(&mut ad);
        let dad = dot(&d, &ad);
        if dad <= 0.0 {
            break;
        }
        let alpha = rr / dad;
        axpy(&mut x, alpha, &d);
        axpy(&mut r, -alpha, &ad);
        prob.project(&mut r);
        let rr_new = dot(&r, &r);
        if rr_new <= tol {
            converged = true;
            break;
        }
        let beta = rr_new / rr;
        d = r.iter().zip(&d).map(|(ri, di)| ri + di.scale(beta)).collect();
        rr = rr_new;
    }
    let (value, _) = prob.quadratic(&x);
    Ok((value, converged))
}

fn validate_cost(cost: &DMatrix<f64>) -> Result<()> {
    if (cost - cost.transpose()).amax() > 1e-12 * cost.amax().max(1.0) {
        return Err(Error::Validation("cost matrix not symmetric".into()));
    }
    let min = SymmetricEigen::new(cost.clone()).eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::Validation(format!("cost matrix not positive definite (min eigenvalue {min:.3e})")));
    }
    Ok(())
}

pub fn holevo_bound(rho: &DensityMatrix, slds: &SldSet, fq: &FisherMatrix, cost: &DMatrix<f64>) -> Result<HolevoSolution> {
    holevo_bound_with(rho, slds, fq, cost, &SolverOptions::default())
}

/// Minimizes `Tr(G ReV) + ‖G·ImV‖₁` from the warm start `F_Q⁻¹ L`.
///
/// The trace norm is smoothed to `Tr √(AᵀA + ε²)` and `ε` is lowered in
/// stages; each stage runs projected L-BFGS with Armijo backtracking. The
/// best true objective seen is returned, so the value never exceeds the
/// warm start.
pub fn holevo_bound_with(
    rho: &DensityMatrix,
    slds: &SldSet,
    fq: &FisherMatrix,
    cost: &DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<HolevoSolution> {
    validate_cost(cost)?;
    let prob = Problem::new(rho, slds, cost)?;
    let mut x: Vec<CMatrix> = qfi_optimal_x(fq, slds)?.into_iter().map(|h| h.into_matrix()).collect();
    let warm = prob.objective(&x);
    let mut best = (warm, x.clone());
    let mut history = vec![warm];
    let mut iterations = 0;
    let mut converged = true;

    // p = 1: ImV is identically zero, the warm start is optimal.
    if prob.p() > 1 && trace_norm_real(&prob.im_matrix(&prob.v_matrix(&x))) > 0.0 {
        let mut eps = 1e-2 * warm.abs().max(1e-12);
        let floor = opts.final_smoothing * warm.abs().max(1e-12);
        loop {
            let (stage_iters, stage_ok) = lbfgs_stage(&prob, &mut x, eps, opts, opts.max_iterations - iterations, &mut |xx| {
                let f = prob.objective(xx);
                if f < best.0 {
                    best = (f, xx.to_vec());
                }
                history.push(best.0);
            });
            iterations += stage_iters;
            if eps <= floor {
                converged = stage_ok;
                break;
            }
            if iterations >= opts.max_iterations {
                converged = false;
                break;
            }
            eps = (eps * 0.1).max(floor);
        }
    }

    let x = best.1;
    let v = prob.v_matrix(&x);
    Ok(HolevoSolution {
        constraint_residual: prob.constraint_residual(&x),
        x_ops: x.iter().map(HermitianOperator::from_hermitian_part).collect(),
        v_matrix: v,
        value: best.0,
        iterations,
        converged,
        warm_start_value: warm,
        history,
    })
}

/// One smoothing stage. Returns iterations used and whether the stopping
/// rule fired before the budget ran out.
fn lbfgs_stage(
    prob: &Problem,
    x: &mut Vec<CMatrix>,
    eps: f64,
    opts: &SolverOptions,
    budget: usize,
    on_accept: &mut dyn FnMut(&[CMatrix]),
) -> (usize, bool) {
    const MEMORY: usize = 10;
    let (mut f, mut g) = prob.smoothed(x, eps);
    prob.project(&mut g);
    let mut s_hist: Vec<Vec<CMatrix>> = Vec::new();
    let mut y_hist: Vec<Vec<CMatrix>> = Vec::new();
    let mut quiet = 0;
    for it in 0..budget {
        let gg = dot(&g, &g);
        if gg.sqrt() <= 1e-14 * f.abs().max(1.0) {
            return (it, true);
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let a = dot(s, &q) / dot(y, s);
            axpy(&mut q, -a, y);
            alphas.push(a);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            q = scaled(&q, dot(s, y) / dot(y, y));
        }
        for ((s, y), a) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = dot(y, &q) / dot(y, s);
            axpy(&mut q, a - b, s);
        }
        let mut dir = scaled(&q, -1.0);
        prob.project(&mut dir);
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir = scaled(&g, -1.0);
            slope = -gg;
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = if s_hist.is_empty() { (1.0 / gg.sqrt()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = x.clone();
            axpy(&mut trial, step, &dir);
            let (ft, gt) = prob.smoothed(&trial, eps);
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, mut gt)) = accepted else {
            return (it, true);
        };
        prob.project(&mut gt);
        let s: Vec<CMatrix> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<CMatrix> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let change = (f - ft).abs() / f.abs().max(1e-300);
        *x = trial;
        f = ft;
        g = gt;
        on_accept(x);
        if change < opts.rel_change {
            quiet += 1;
            if quiet >= opts.patience {
                return (it + 1, true);
            }
        } else {
            quiet = 0;
        }
    }
    (budget, false)
}

/// Holevo and QFI bounds side by side with the weak-commutation violation.
#[derive(Debug, Clone, Serialize)]
pub struct EqualityReport {
    pub qfi_bound: f64,
    pub holevo: f64,
    pub gap: f64,
    /// Largest `|Tr(ρ[L_i, L_j])|`.
    pub violation: f64,
    pub bounds_equal: bool,
    pub commutation_holds: bool,
    /// `bounds_equal == commutation_holds`.
    pub biconditional_holds: bool,
    pub solver_converged: bool,
}

/// Checks that the two bounds coincide exactly when the weak commutation
/// condition holds, with `bound_equality` and `compatibility` from `tol`.
pub fn equality_iff_commutation_test(
    rho: &DensityMatrix,
    slds: &SldSet,
    fq: &FisherMatrix,
    cost: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<EqualityReport> {
    let qfi_bound = qfi_cr_bound(fq, cost)?;
    let sol = holevo_bound(rho, slds, fq, cost)?;
    let compat = compatibility_check(rho, slds, fq, tol.compatibility)?;
    let gap = sol.value - qfi_bound;
    let violation = compat.max_weak_violation();
    let bounds_equal = gap < tol.bound_equality;
    let commutation_holds = violation < tol.compatibility;
    Ok(EqualityReport {
        qfi_bound,
        holevo: sol.value,
        gap,
        violation,
        bounds_equal,
        commutation_holds,
        biconditional_holds: bounds_equal == commutation_holds,
        solver_converged: sol.converged,
    })
}

/// Independent oracle for qubits with two parameters. The constraints fix
/// four of the eight real coordinates of `(X_1, X_2)`; a shrinking random
/// search covers the remaining four.
pub fn brute_force_holevo(rho: &DensityMatrix, slds: &SldSet, g: &DMatrix<f64>, seed: u64) -> Result<f64> {
    if rho.dim() != 2 || slds.len() != 2 || g.nrows() != 2 || g.ncols() != 2 {
        return Err(Error::Validation("brute-force oracle handles a qubit with two parameters only".into()));
    }
    let basis = [CMatrix::identity(2, 2), pauli_x(), pauli_y(), pauli_z()];
    let derivs = slds.implied_derivatives(rho.matrix());
    // real 2×4 constraint matrix a·coords = e_i for each X_i
    let a = DMatrix::from_fn(2, 4, |j, b| trace_product(&basis[b], &derivs[j]).re);
    let ata = SymmetricEigen::new(a.transpose() * &a);
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&i, &j| ata.eigenvalues[i].total_cmp(&ata.eigenvalues[j]));
    let null: Vec<nalgebra::DVector<f64>> = order[..2].iter().map(|&k| ata.eigenvectors.column(k).into_owned()).collect();
    let pinv = a.pseudo_inverse(1e-14).map_err(|e| Error::Numerical(e.into()))?;
    let base: Vec<nalgebra::DVector<f64>> = (0..2).map(|i| &pinv * nalgebra::DVector::from_fn(2, |j, _| if i == j { 1.0 } else { 0.0 })).collect();
    let build = |t: &[f64; 4]| -> Vec<CMatrix> {
        (0..2)
            .map(|i| {
                let coords = &base[i] + &null[0] * t[2 * i] + &null[1] * t[2 * i + 1];
                (0..4).fold(CMatrix::zeros(2, 2), |acc, b| acc + basis[b].scale(coords[b]))
            })
            .collect()
    };
    let objective = |x: &[CMatrix]| {
        let v = DMatrix::from_fn(2, 2, |i, j| trace_product(&(&x[i] * &x[j]), rho.matrix()));
        let re = g.component_mul(&v.map(|z| z.re)).sum();
        re + trace_norm_real(&(g * v.map(|z| z.im)))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best_t = [0.0; 4];
    let mut best = objective(&build(&best_t));
    let mut radius = 4.0;
    while radius > 1e-7 {
        for _ in 0..1500 {
            let mut t = best_t;
            for v in t.iter_mut() {
                *v += rng.gen_range(-radius..radius);
            }
            let f = objective(&build(&t));
            if f < best {
                best = f;
                best_t = t;
            }
        }
        radius *= 0.85;
    }
    Ok(best)
}
