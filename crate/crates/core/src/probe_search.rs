//! Joint phase and dephasing estimation: probe optimization and the
//! cost of estimating both parameters with one probe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dephasing::{block_qfi, SymmetricChannel, SymmetricProbe};
use crate::error::{Error, Result};
use crate::optimize::{brent, lbfgs_fd, nelder_mead_refined};
use crate::squeezing::{one_axis_squeezed, two_axis_squeezed};
use crate::tolerance::Tolerances;

/// `(1 − η²)/(η²N)`, the asymptotic phase variance.
pub fn phase_reference(eta: f64, n: usize) -> f64 {
    (1.0 - eta * eta) / (eta * eta * n as f64)
}

/// `(1 − η²)/N`, the product-state dephasing variance.
pub fn dephasing_reference(eta: f64, n: usize) -> f64 {
    (1.0 - eta * eta) / n as f64
}

/// `½[var_φ / ((1−η²)/(η²N)) + var_η / ((1−η²)/N)]`.
pub fn xi_metric(var_phi: f64, var_eta: f64, eta: f64, n: usize) -> Result<f64> {
    if !(var_phi > 0.0 && var_eta > 0.0) {
        return Err(Error::Domain(format!("variances must be positive, got ({var_phi}, {var_eta})")));
    }
    if !(eta > 0.0 && eta < 1.0) || n == 0 {
        return Err(Error::Domain(format!("need 0 < η < 1 and N ≥ 1, got η = {eta}, N = {n}")));
    }
    Ok(0.5 * (var_phi / phase_reference(eta, n) + var_eta / dephasing_reference(eta, n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchFamily {
    /// Real nonnegative amplitudes with `α_k = α_{N−k}`.
    FullSymmetric,
    TwoAxis,
    OneAxis,
}

/// Figures of merit of one probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeFigures {
    pub var_phi: f64,
    pub var_eta: f64,
    /// `var_φ` over its reference.
    pub norm_phi: f64,
    pub norm_eta: f64,
    pub xi: f64,
    pub qfi_offdiag: f64,
    pub compatibility_residual: f64,
}

impl ProbeFigures {
    pub fn objective(&self, w: f64) -> f64 {
        w * self.norm_phi + (1.0 - w) * self.norm_eta
    }
}

/// Variances are the diagonal of `F_Q⁻¹`; a singular `F_Q` gives
/// infinite variances. Real probes take the real-arithmetic path, whose
/// off-diagonal QFI vanishes by construction.
pub fn evaluate_probe(channel: &SymmetricChannel, probe: &SymmetricProbe, eta: f64, tol: &Tolerances) -> Result<ProbeFigures> {
    let n = channel.qubits();
    let real = probe.amplitudes().iter().all(|a| a.im == 0.0);
    let (fisher, compatibility_residual) = if real {
        let amps: Vec<f64> = probe.amplitudes().iter().map(|a| a.re).collect();
        let d = channel.real_qfi(&amps, eta, tol)?;
        ([[d[0], 0.0], [0.0, d[1]]], 0.0)
    } else {
        let q = block_qfi(&channel.apply(probe, eta, 0.0)?, tol)?;
        ([[q.fisher[0][0], q.fisher[0][1]], [q.fisher[1][0], q.fisher[1][1]]], q.compatibility_residual)
    };
    let f = &fisher;
    let det = f[0][0] * f[1][1] - f[0][1] * f[0][1];
    let scale = f[0][0].abs().max(f[1][1].abs());
    let (var_phi, var_eta) = if det > tol.singular * scale * scale && det > 0.0 {
        (f[1][1] / det, f[0][0] / det)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let norm_phi = var_phi / phase_reference(eta, n);
    let norm_eta = var_eta / dephasing_reference(eta, n);
    Ok(ProbeFigures {
        var_phi,
        var_eta,
        norm_phi,
        norm_eta,
        xi: 0.5 * (norm_phi + norm_eta),
        qfi_offdiag: f[0][1].abs(),
        compatibility_residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Simplex value spread that ends one Nelder-Mead run.
    pub tolerance: f64,
    pub max_iterations: u64,
    /// Grid points for the squeezing-angle scans.
    pub theta_grid: usize,
    pub theta_max: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { restarts: 20, seed: 0, tolerance: 1e-10, max_iterations: 20_000, theta_grid: 400, theta_max: std::f64::consts::FRAC_PI_2 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchDiagnostics {
    pub restarts: usize,
    pub converged_restarts: usize,
    pub best_restart: usize,
    pub iterations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub n: usize,
    pub eta: f64,
    pub weight: f64,
    pub family: SearchFamily,
    /// Real and imaginary parts of the optimal amplitudes.
    pub amplitudes: Vec<(f64, f64)>,
    /// Squeezing angle for the squeezed families.
    pub theta: Option<f64>,
    pub figures: ProbeFigures,
    pub objective: f64,
    pub converged: bool,
    pub diagnostics: SearchDiagnostics,
}

fn check_search(n: usize, eta: f64, w: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation("need at least one qubit".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("η must lie in (0, 1), got {eta}")));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("weight must lie in [0, 1], got {w}")));
    }
    Ok(())
}

/// Probe of a squeezed family at angle `theta`.
pub fn squeezed_probe(family: SearchFamily, n: usize, theta: f64) -> Result<SymmetricProbe> {
    match family {
        SearchFamily::TwoAxis => two_axis_squeezed(n, theta),
        SearchFamily::OneAxis => one_axis_squeezed(n, theta),
        SearchFamily::FullSymmetric => Err(Error::Validation("the full symmetric family has no squeezing angle".into())),
    }
}

fn squeezed_objective(channel: &SymmetricChannel, family: SearchFamily, eta: f64, w: f64, theta: f64, tol: &Tolerances) -> f64 {
    squeezed_probe(family, channel.qubits(), theta)
        .and_then(|p| evaluate_probe(channel, &p, eta, tol))
        .map_or(f64::INFINITY, |f| f.objective(w))
}

/// Which minimum of the squeezing-angle objective to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThetaRule {
    /// Smallest grid value, refined.
    Global,
    /// First local minimum above `θ = 0`, refined.
    FirstLocal,
}

/// Scans `θ ∈ (0, theta_max]` and refines the chosen bracket with Brent.
pub fn squeezing_angle(n: usize, eta: f64, w: f64, family: SearchFamily, rule: ThetaRule, opts: &SearchOptions) -> Result<(f64, f64)> {
    check_search(n, eta, w)?;
    let channel = SymmetricChannel::new(n)?;
    let tol = Tolerances::default();
    let step = opts.theta_max / opts.theta_grid as f64;
    let thetas: Vec<f64> = (0..=opts.theta_grid).map(|i| i as f64 * step).collect();
    let values: Vec<f64> = thetas.par_iter().map(|&t| squeezed_objective(&channel, family, eta, w, t, &tol)).collect();
    let interior = 1..opts.theta_grid;
    let pick = match rule {
        ThetaRule::Global => interior.min_by(|&a, &b| values[a].total_cmp(&values[b])),
        ThetaRule::FirstLocal => {
            let mut range = interior;
            range.find(|&i| values[i] < values[i - 1] && values[i] <= values[i + 1])
        }
    };
    let i = pick.ok_or_else(|| Error::Numerical("no interior minimum of the squeezing objective".into()))?;
    let f = |t: f64| squeezed_objective(&channel, family, eta, w, t, &tol);
    let (theta, value) = brent(&f, thetas[i - 1], thetas[i + 1], 1e-10)?;
    if value <= values[i] {
        Ok((theta, value))
    } else {
        Ok((thetas[i], values[i]))
    }
}

fn full_symmetric_objective(channel: &SymmetricChannel, eta: f64, w: f64, tol: &Tolerances, x: &[f64]) -> f64 {
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    SymmetricProbe::from_half(&abs, channel.qubits())
        .and_then(|p| evaluate_probe(channel, &p, eta, tol))
        .map_or(f64::INFINITY, |f| f.objective(w))
}

fn amplitudes_of(p: &SymmetricProbe) -> Vec<(f64, f64)> {
    p.amplitudes().iter().map(|a| (a.re, a.im)).collect()
}

/// Minimizes `w·var_φ/ref_φ + (1 − w)·var_η/ref_η` over a probe family.
pub fn joint_probe_search(n: usize, eta: f64, w: f64, family: SearchFamily, opts: &SearchOptions) -> Result<SearchResult> {
    check_search(n, eta, w)?;
    let channel = SymmetricChannel::new(n)?;
    let tol = Tolerances::default();
    match family {
        SearchFamily::FullSymmetric => {
            let half = n / 2 + 1;
            let objective = |x: &[f64]| full_symmetric_objective(&channel, eta, w, &tol, x);
            let runs: Vec<Result<crate::optimize::Minimum>> = (0..opts.restarts.max(1))
                .into_par_iter()
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
                    let x0: Vec<f64> = (0..half).map(|_| rng.gen_range(0.05..1.0)).collect();
                    nelder_mead_refined(&objective, &x0, 0.2, opts.tolerance, opts.max_iterations)
                })
                .collect();
            let mut best: Option<(usize, crate::optimize::Minimum)> = None;
            let mut converged_restarts = 0;
            let mut iterations = 0;
            for (r, run) in runs.into_iter().enumerate() {
                let run = run?;
                converged_restarts += run.converged as usize;
                iterations += run.iterations;
                if best.as_ref().is_none_or(|(_, b)| run.value < b.value) {
                    best = Some((r, run));
                }
            }
            let (best_restart, best) = best.expect("at least one restart");
            let abs: Vec<f64> = best.x.iter().map(|v| v.abs()).collect();
            let probe = SymmetricProbe::from_half(&abs, n)?;
            let figures = evaluate_probe(&channel, &probe, eta, &tol)?;
            Ok(SearchResult {
                n,
                eta,
                weight: w,
                family,
                amplitudes: amplitudes_of(&probe),
                theta: None,
                objective: figures.objective(w),
                figures,
                converged: best.converged,
                diagnostics: SearchDiagnostics { restarts: opts.restarts.max(1), converged_restarts, best_restart, iterations },
            })
        }
        SearchFamily::TwoAxis | SearchFamily::OneAxis => {
            if n < 2 {
                return Err(Error::Validation("squeezed families need at least 2 qubits".into()));
            }
            let (theta, _) = squeezing_angle(n, eta, w, family, ThetaRule::Global, opts)?;
            let probe = squeezed_probe(family, n, theta)?;
            let figures = evaluate_probe(&channel, &probe, eta, &tol)?;
            Ok(SearchResult {
                n,
                eta,
                weight: w,
                family,
                amplitudes: amplitudes_of(&probe),
                theta: Some(theta),
                objective: figures.objective(w),
                figures,
                converged: true,
                diagnostics: SearchDiagnostics { restarts: 1, converged_restarts: 1, best_restart: 0, iterations: opts.theta_grid as u64 },
            })
        }
    }
}

/// One point of the joint-versus-separate comparison.
#[derive(Debug, Clone, Serialize)]
pub struct DiscrepancyRow {
    pub n: usize,
    pub eta: f64,
    pub w: f64,
    pub var_phi: f64,
    pub var_eta: f64,
    pub xi_joint: f64,
    /// `½(min var_φ/ref_φ + min var_η/ref_η)`, each minimized with its own
    /// probe.
    pub xi_separate: f64,
    /// `xi_joint / xi_separate`.
    pub ratio: f64,
    pub converged: bool,
}

impl DiscrepancyRow {
    pub fn discrepancy(&self) -> f64 {
        self.ratio - 1.0
    }
}

/// Joint search at `w = ½` against the two single-parameter searches.
pub fn discrepancy(n: usize, eta: f64, family: SearchFamily, opts: &SearchOptions) -> Result<DiscrepancyRow> {
    let phase = joint_probe_search(n, eta, 1.0, family, opts)?;
    let loss = joint_probe_search(n, eta, 0.0, family, opts)?;
    let joint = joint_probe_search(n, eta, 0.5, family, opts)?;
    let xi_separate = 0.5 * (phase.figures.norm_phi + loss.figures.norm_eta);
    Ok(DiscrepancyRow {
        n,
        eta,
        w: 0.5,
        var_phi: joint.figures.var_phi,
        var_eta: joint.figures.var_eta,
        xi_joint: joint.figures.xi,
        xi_separate,
        ratio: joint.figures.xi / xi_separate,
        converged: phase.converged && loss.converged && joint.converged,
    })
}

/// Half profile `α_0, …, α_{⌊N/2⌋}` resampled linearly in `k/N` for a
/// new qubit count.
pub fn resample_profile(half: &[f64], n: usize, n_new: usize) -> Vec<f64> {
    (0..=n_new / 2)
        .map(|k| {
            let t = k as f64 * n as f64 / n_new as f64;
            let i = (t.floor() as usize).min(half.len() - 1);
            let j = (i + 1).min(half.len() - 1);
            let frac = t - i as f64;
            half[i] * (1.0 - frac) + half[j] * frac
        })
        .collect()
}

/// Full symmetric search at `w` polished by L-BFGS from a given half
/// profile instead of random restarts.
pub fn polish_full_symmetric(n: usize, eta: f64, w: f64, start: &[f64], opts: &SearchOptions) -> Result<SearchResult> {
    check_search(n, eta, w)?;
    if start.len() != n / 2 + 1 {
        return Err(Error::Dimension { expected: n / 2 + 1, got: start.len() });
    }
    let channel = SymmetricChannel::new(n)?;
    let tol = Tolerances::default();
    let objective = |x: &[f64]| full_symmetric_objective(&channel, eta, w, &tol, x);
    let norm = start.iter().map(|v| v * v).sum::<f64>().sqrt();
    let x0: Vec<f64> = start.iter().map(|v| v.abs() / norm).collect();
    let mut best = lbfgs_fd(&objective, &x0, 1e-7, opts.tolerance, opts.max_iterations)?;
    let mut iterations = best.iterations;
    // restart from the optimum until the curvature model stops helping
    for _ in 0..5 {
        let next = lbfgs_fd(&objective, &best.x, 1e-7, opts.tolerance, opts.max_iterations)?;
        iterations += next.iterations;
        let gain = best.value - next.value;
        if next.value < best.value {
            best = next;
        }
        if gain <= opts.tolerance {
            break;
        }
    }
    let abs: Vec<f64> = best.x.iter().map(|v| v.abs()).collect();
    let probe = SymmetricProbe::from_half(&abs, n)?;
    let figures = evaluate_probe(&channel, &probe, eta, &tol)?;
    Ok(SearchResult {
        n,
        eta,
        weight: w,
        family: SearchFamily::FullSymmetric,
        amplitudes: amplitudes_of(&probe),
        theta: None,
        objective: figures.objective(w),
        figures,
        converged: best.converged,
        diagnostics: SearchDiagnostics { restarts: 1, converged_restarts: best.converged as usize, best_restart: 0, iterations },
    })
}

fn half_profile(r: &SearchResult) -> Vec<f64> {
    r.amplitudes[..=r.n / 2].iter().map(|a| a.0).collect()
}

/// Discrepancy rows along increasing `ns`: the first point runs the
/// restarted search, every later one starts from the previous optimum
/// resampled to the new size and polished by L-BFGS.
pub fn continuation_discrepancy(ns: &[usize], eta: f64, opts: &SearchOptions) -> Result<Vec<DiscrepancyRow>> {
    let mut rows = Vec::with_capacity(ns.len());
    let mut prev: Option<(usize, [Vec<f64>; 3])> = None;
    for &n in ns {
        let weights = [1.0, 0.0, 0.5];
        let results: Vec<SearchResult> = match &prev {
            None => weights.iter().map(|&w| joint_probe_search(n, eta, w, SearchFamily::FullSymmetric, opts)).collect::<Result<_>>()?,
            Some((m, profiles)) => weights
                .iter()
                .zip(profiles)
                .map(|(&w, p)| polish_full_symmetric(n, eta, w, &resample_profile(p, *m, n), opts))
                .collect::<Result<_>>()?,
        };
        let xi_separate = 0.5 * (results[0].figures.norm_phi + results[1].figures.norm_eta);
        let joint = &results[2].figures;
        rows.push(DiscrepancyRow {
            n,
            eta,
            w: 0.5,
            var_phi: joint.var_phi,
            var_eta: joint.var_eta,
            xi_joint: joint.xi,
            xi_separate,
            ratio: joint.xi / xi_separate,
            converged: results.iter().all(|r| r.converged),
        });
        prev = Some((n, [half_profile(&results[0]), half_profile(&results[1]), half_profile(&results[2])]));
    }
    Ok(rows)
}

/// Pareto data: the joint search over a grid of weights.
pub fn pareto_front(n: usize, eta: f64, weights: &[f64], family: SearchFamily, opts: &SearchOptions) -> Result<Vec<SearchResult>> {
    weights.iter().map(|&w| joint_probe_search(n, eta, w, family, opts)).collect()
}

/// Log-log slope of the first-local-minimum squeezing angle against `N`.
pub fn theta_scaling(ns: &[usize], eta: f64, w: f64, opts: &SearchOptions) -> Result<(Vec<f64>, f64)> {
    let thetas: Vec<f64> = ns
        .iter()
        .map(|&n| squeezing_angle(n, eta, w, SearchFamily::TwoAxis, ThetaRule::FirstLocal, opts).map(|t| t.0))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok((thetas.clone(), crate::unitary::log_log_slope(&xs, &thetas)))
}
