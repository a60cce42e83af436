//! Invariant suite run by `metrocomp selftest`.
//!
//! Every check draws from its own seeded generator and compares a library
//! result against an identity or an independently computed oracle.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dephasing::{brute_force_dephasing, dephase_symmetric, extract_block, parity_blocks, DephasingModel, SymmetricProbe};
use crate::error::Result;
use crate::estimation::{
    compatibility_check, model_qfi, povm_fisher, povm_fisher_limit, qfi_cr_bound, qfi_matrix, sld_residual, FisherKind, FisherMatrix, SldSet,
};
use crate::holevo::{brute_force_holevo, holevo_bound, qfi_bound_via_minimization};
use crate::lossy::{binomial_loss_fisher, dilation_oracle, embed_in_fock_space, loss_block_povm, loss_fisher, lossy_output, lossy_qfi, FockProbe, LossyModel};
use crate::model::{derivative_discrepancy, random_hermitian, ClassicalMixingModel, FnModel, ParametricModel, PureUnitaryModel, RandomFullRankModel};
use crate::operator::{apply_channel, eigh, eigh_unchecked, expm_i, kron, max_abs, DensityMatrix, HermitianOperator, KrausChannel, Povm};
use crate::probe_search::{dephasing_reference, evaluate_probe, phase_reference, xi_metric};
use crate::tolerance::Tolerances;
use crate::unitary::{pure_state_qfi, rotated_extremal_expansion, spin1_measurement, unitary_output, SpinRotationModel};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst value seen against its threshold, or the error message.
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// `Ok((worst, threshold))`; the check passes when `worst < threshold`.
type Check = fn(&mut ChaCha8Rng, &Tolerances) -> Result<(f64, f64)>;

const CHECKS: &[(&str, Check)] = &[
    ("sld residuals", sld_residuals),
    ("measurement never beats the QFI", fisher_ordering),
    ("QFI additive on product states", additivity),
    ("analytic derivatives match finite differences", derivatives),
    ("pure-state QFI matches the SLD route", pure_state_route),
    ("explicit eigenbasis sum matches Tr(rho L L)", explicit_sum),
    ("QFI bound variational identity", variational_identity),
    ("Holevo bound above the QFI bound", holevo_ordering),
    ("Holevo solver matches brute force on qubits", holevo_oracle),
    ("classical mixing models close the Holevo gap", weak_commutation_closes_gap),
    ("dephasing channel preserves trace and positivity", channel_validity),
    ("eigendecomposition is deterministic", eigh_determinism),
    ("rotated extremal expansion matches rotation", rotated_expansion),
    ("spin-1 measurement attains the QFI", spin1_povm),
    ("lossy block state matches the dilation", lossy_dilation),
    ("lossy loss Fisher information by three routes", lossy_routes),
    ("symmetric dephasing blocks match brute force", dephasing_brute_force),
    ("dephasing compatibility on parity-symmetric probes", dephasing_compatibility),
    ("xi normalization", xi_normalization),
];

/// Runs every check with generators derived from `seed`.
pub fn run_selftest(seed: u64) -> SelftestReport {
    let tol = Tolerances::default();
    let checks = CHECKS
        .iter()
        .enumerate()
        .map(|(i, (name, check))| {
            let start = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (passed, detail) = match check(&mut rng, &tol) {
                Ok((worst, threshold)) => (worst < threshold, format!("worst {worst:.3e} (threshold {threshold:.1e})")),
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult { name, passed, detail, seconds: start.elapsed().as_secs_f64() }
        })
        .collect();
    SelftestReport { checks }
}

fn random_point(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    (0..p).map(|_| rng.gen_range(-0.2..0.2)).collect()
}

fn random_model(rng: &mut ChaCha8Rng) -> (RandomFullRankModel, Vec<f64>) {
    let dim = rng.gen_range(2..=4);
    let p = rng.gen_range(1..=3);
    let m = RandomFullRankModel::sample(rng, dim, p);
    let phi = random_point(rng, p);
    (m, phi)
}

fn random_cost(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(p, p) * 0.2
}

fn sld_residuals(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (m, phi) = random_model(rng);
        let rho = m.eval(&phi)?;
        let d = m.derivs(&phi)?;
        let s = SldSet::compute(&rho, &d, tol)?;
        for (l, di) in s.slds.iter().zip(&d) {
            worst = worst.max(sld_residual(rho.matrix(), di.matrix(), l.matrix()));
        }
    }
    Ok((worst, tol.sld_residual))
}

fn fisher_ordering(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (m, phi) = random_model(rng);
        let fq = model_qfi(&m, &phi, tol)?;
        let povm = Povm::from_basis(&expm_i(&random_hermitian(rng, m.dim()), 1.0))?;
        let f = povm_fisher(&m, &phi, &povm, tol)?;
        let gap = FisherMatrix::new(fq.entries() - f.entries(), FisherKind::Quantum)?;
        worst = worst.max(-gap.eigenvalues()[0]);
    }
    Ok((worst, 1e-8))
}

fn additivity(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = RandomFullRankModel::sample(rng, 2, 2);
        let phi = random_point(rng, 2);
        let doubled = FnModel::new(
            2,
            |x: &[f64]| {
                let r = m.eval(x)?;
                DensityMatrix::new(kron(r.matrix(), r.matrix()))
            },
            |x: &[f64]| {
                let r = m.eval(x)?;
                let d = m.derivs(x)?;
                Ok(d.iter().map(|di| HermitianOperator::from_hermitian_part(&(kron(di.matrix(), r.matrix()) + kron(r.matrix(), di.matrix())))).collect())
            },
        );
        let f1 = model_qfi(&m, &phi, tol)?;
        let f2 = model_qfi(&doubled, &phi, tol)?;
        worst = worst.max((f2.entries() - f1.entries() * 2.0).amax() / f1.entries().amax());
    }
    Ok((worst, 1e-8))
}

fn derivatives(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let h = tol.fd_step;
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let (m, phi) = random_model(rng);
        worst = worst.max(derivative_discrepancy(&m, &phi, h)?);
        let c = ClassicalMixingModel::sample(rng, 3);
        worst = worst.max(derivative_discrepancy(&c, &random_point(rng, 2), h)?);
        let n = rng.gen_range(1..=5);
        let l = LossyModel { probe: FockProbe::random(rng, n) };
        worst = worst.max(derivative_discrepancy(&l, &[rng.gen_range(-1.0..1.0), rng.gen_range(0.3..0.9)], h)?);
        let qubits = rng.gen_range(1..=6);
        let d = DephasingModel { probe: SymmetricProbe::random(rng, qubits) };
        worst = worst.max(derivative_discrepancy(&d, &[rng.gen_range(-1.0..1.0), rng.gen_range(0.3..0.9)], h)?);
        let s = SpinRotationModel::with_angle(2, rng.gen_range(0.1..3.0))?;
        let probe = s.candidate_probe(rng.gen_range(0.0..6.0));
        let hset = s.hamiltonians()?;
        let u = PureUnitaryModel { generators: hset.generators().iter().map(|g| g.matrix().clone()).collect(), probe };
        worst = worst.max(derivative_discrepancy(&u, &random_point(rng, 2), h)?);
    }
    Ok((worst, tol.fd_agreement))
}

fn pure_state_route(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let s = SpinRotationModel::with_angle(rng.gen_range(1..=4), rng.gen_range(0.1..3.0))?;
        let hset = s.hamiltonians()?;
        let probe = s.candidate_probe(rng.gen_range(0.0..6.0));
        let phi = random_point(rng, 2);
        let (psi, dpsis) = unitary_output(&hset, &phi, &probe)?;
        let direct = pure_state_qfi(&psi, &dpsis)?;
        let m = PureUnitaryModel { generators: hset.generators().iter().map(|g| g.matrix().clone()).collect(), probe };
        let via_sld = model_qfi(&m, &phi, tol)?;
        worst = worst.max((via_sld.entries() - direct.entries()).amax() / direct.entries().amax().max(1.0));
    }
    Ok((worst, 1e-8))
}

fn explicit_sum(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let (m, phi) = random_model(rng);
        let (rho, slds) = SldSet::from_model(&m, &phi, tol)?;
        let fq = qfi_matrix(&rho, &slds)?;
        let r = compatibility_check(&rho, &slds, &fq, tol.compatibility)?;
        worst = worst.max(r.explicit_sum_residual);
    }
    Ok((worst, 1e-8))
}

fn variational_identity(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (m, phi) = random_model(rng);
        let (rho, slds) = SldSet::from_model(&m, &phi, tol)?;
        let fq = qfi_matrix(&rho, &slds)?;
        let g = random_cost(rng, slds.len());
        let exact = qfi_cr_bound(&fq, &g)?;
        let (v, _) = qfi_bound_via_minimization(&rho, &slds, &g)?;
        worst = worst.max((v - exact).abs() / exact);
    }
    Ok((worst, 1e-6))
}

fn holevo_ordering(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (m, phi) = random_model(rng);
        let (rho, slds) = SldSet::from_model(&m, &phi, tol)?;
        let fq = qfi_matrix(&rho, &slds)?;
        let g = random_cost(rng, slds.len());
        let h = holevo_bound(&rho, &slds, &fq, &g)?;
        let q = qfi_cr_bound(&fq, &g)?;
        worst = worst.max(q - h.value).max(h.value - h.warm_start_value);
    }
    Ok((worst, tol.bound_equality))
}

fn holevo_oracle(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let m = RandomFullRankModel::sample(rng, 2, 2);
        let (rho, slds) = SldSet::from_model(&m, &[0.0, 0.0], tol)?;
        let fq = qfi_matrix(&rho, &slds)?;
        let g = random_cost(rng, 2);
        let sol = holevo_bound(&rho, &slds, &fq, &g)?;
        let oracle = brute_force_holevo(&rho, &slds, &g, k)?;
        worst = worst.max((sol.value - oracle).abs() / oracle);
    }
    Ok((worst, 1e-5))
}

fn weak_commutation_closes_gap(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let m = ClassicalMixingModel::sample(rng, 3);
        let (rho, slds) = SldSet::from_model(&m, &random_point(rng, 2), tol)?;
        let fq = qfi_matrix(&rho, &slds)?;
        let g = DMatrix::identity(2, 2);
        let gap = holevo_bound(&rho, &slds, &fq, &g)?.value - qfi_cr_bound(&fq, &g)?;
        worst = worst.max(gap.abs());
    }
    Ok((worst, tol.bound_equality))
}

fn channel_validity(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let m = RandomFullRankModel::sample(rng, 2, 1);
        let rho = m.eval(&[0.0])?;
        let ch = KrausChannel::dephasing(rng.gen_range(0.0..1.0))?;
        let out = apply_channel(&ch, &rho)?;
        let e = eigh_unchecked(out.matrix());
        worst = worst.max((e.values.sum() - 1.0).abs()).max(-e.values.min());
    }
    Ok((worst, tol.trace))
}

fn eigh_determinism(rng: &mut ChaCha8Rng, _tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let h = HermitianOperator::from_hermitian_part(&random_hermitian(rng, 5));
        let (a, b) = (eigh(&h), eigh(&h));
        let same = a.values == b.values && a.vectors == b.vectors;
        worst = worst.max(if same { 0.0 } else { 1.0 });
    }
    Ok((worst, 0.5))
}

fn rotated_expansion(rng: &mut ChaCha8Rng, _tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let two_j = rng.gen_range(1..=5);
        let model = SpinRotationModel::with_angle(two_j, rng.gen_range(0.0..std::f64::consts::PI))?;
        let (plus, minus) = rotated_extremal_expansion(&model);
        let s = model.spin();
        let up = s.eigenstate(model.n2, two_j as i64);
        let down = s.eigenstate(model.n2, -(two_j as i64));
        for a in 0..=two_j {
            let k = two_j - a;
            worst = worst.max((plus[a].abs() - up[k].norm()).abs()).max((minus[a].abs() - down[k].norm()).abs());
        }
    }
    Ok((worst, 1e-10))
}

fn spin1_povm(_rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let povm = spin1_measurement()?;
    let model = SpinRotationModel::with_angle(2, std::f64::consts::FRAC_PI_2)?;
    let hset = model.hamiltonians()?;
    let m = PureUnitaryModel { generators: hset.generators().iter().map(|g| g.matrix().clone()).collect(), probe: model.candidate_probe(0.0) };
    let f = povm_fisher_limit(&m, &[0.0, 0.0], &povm, 1e-2, tol)?;
    let fq = model_qfi(&m, &[0.0, 0.0], tol)?;
    Ok(((f.entries() - fq.entries()).amax(), 1e-8))
}

fn lossy_dilation(rng: &mut ChaCha8Rng, _tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        let p = FockProbe::random(rng, n);
        let (phi, eta) = (rng.gen_range(-1.0..1.0), rng.gen_range(0.1..0.95));
        let s = lossy_output(&p, phi, eta)?;
        worst = worst.max(max_abs(&(embed_in_fock_space(&s) - dilation_oracle(&p, phi, eta)?)));
    }
    Ok((worst, 1e-10))
}

fn lossy_routes(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        let eta = rng.gen_range(0.2..0.9);
        let formula = n as f64 / (eta * (1.0 - eta));
        let probe = FockProbe::random(rng, n);
        let q = lossy_qfi(&probe, 0.1, eta, tol)?;
        let counting = binomial_loss_fisher(n, eta)?.get(0, 0);
        let m = LossyModel { probe };
        let measured = povm_fisher(&m, &[0.1, eta], &loss_block_povm(n)?, tol)?.get(1, 1);
        for v in [q.f_eta_eta, counting, measured, loss_fisher(n, eta)?] {
            worst = worst.max((v - formula).abs() / formula);
        }
        worst = worst.max(q.sld_commutator).max(q.f_phi_eta.abs());
    }
    Ok((worst, 1e-8))
}

fn dephasing_brute_force(rng: &mut ChaCha8Rng, _tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for n in 1..=7 {
        let p = SymmetricProbe::random(rng, n);
        let (eta, phi) = (rng.gen_range(0.0..1.0), rng.gen_range(-3.0..3.0));
        let s = dephase_symmetric(&p, eta, phi)?;
        let full = brute_force_dephasing(&p, eta, phi)?;
        for b in &s.blocks {
            worst = worst.max(max_abs(&(extract_block(&full, n, b.two_j) - &b.density)));
        }
        worst = worst.max((s.total_trace() - 1.0).abs());
    }
    Ok((worst, 1e-9))
}

fn dephasing_compatibility(rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let n = 2 * rng.gen_range(1..=4);
        let p = SymmetricProbe::random_parity_symmetric(rng, n);
        let (eta, phi) = (rng.gen_range(0.2..0.95), rng.gen_range(-1.0..1.0));
        let q = crate::dephasing::dephasing_qfi(&p, eta, phi, tol)?;
        worst = worst.max(q.compatibility_residual).max(q.fisher[0][1].abs());
        for b in parity_blocks(&p, &dephase_symmetric(&p, eta, phi)?)? {
            worst = worst.max(b.cross_parity);
        }
    }
    Ok((worst, 1e-10))
}

fn xi_normalization(_rng: &mut ChaCha8Rng, tol: &Tolerances) -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for (n, eta) in [(1, 0.5), (4, 0.9), (10, 0.7)] {
        worst = worst.max((xi_metric(phase_reference(eta, n), dephasing_reference(eta, n), eta, n)? - 1.0).abs());
        let ch = crate::dephasing::SymmetricChannel::new(n)?;
        // the product state attains the dephasing reference exactly
        let f = evaluate_probe(&ch, &SymmetricProbe::product_plus(n), eta, tol)?;
        worst = worst.max((f.norm_eta - 1.0).abs());
    }
    Ok((worst, 1e-8))
}
