//! Symmetric logarithmic derivatives, classical and quantum Fisher
//! information, the QFI Cramér-Rao bound and the layered compatibility
//! report.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ParametricModel;
use crate::operator::{
    anticommutator, c, commutator, eigh, eigh_unchecked, max_abs, trace_product, CMatrix, DensityMatrix,
    HermitianOperator, Povm, I,
};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FisherKind {
    Classical,
    Quantum,
}

/// Real symmetric positive semidefinite `p × p` Fisher matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    entries: DMatrix<f64>,
    kind: FisherKind,
}

impl FisherMatrix {
    /// Symmetrizes its input; rejects matrices that are not symmetric or
    /// have eigenvalues below `-psd`.
    pub fn new(entries: DMatrix<f64>, kind: FisherKind) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Dimension { expected: entries.nrows(), got: entries.ncols() });
        }
        let scale = entries.amax().max(1.0);
        let asym = (&entries - entries.transpose()).amax();
        if asym > 1e-10 * scale {
            return Err(Error::Validation(format!("Fisher matrix not symmetric ({asym:.3e})")));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        if sym.nrows() > 0 {
            let min = SymmetricEigen::new(sym.clone()).eigenvalues.min();
            if min < -1e-10 * scale {
                return Err(Error::Validation(format!("Fisher matrix has eigenvalue {min:.3e}")));
            }
        }
        Ok(FisherMatrix { entries: sym, kind })
    }

    pub fn diagonal(values: &[f64], kind: FisherKind) -> Result<Self> {
        FisherMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values)), kind)
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kind(&self) -> FisherKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Inverse, refusing matrices whose smallest eigenvalue is below
    /// `rel_cutoff` times the largest.
    pub fn inverse_with(&self, rel_cutoff: f64) -> Result<DMatrix<f64>> {
        let eig = self.eigenvalues();
        let max = eig.last().copied().unwrap_or(0.0);
        let min = eig.first().copied().unwrap_or(0.0);
        if max <= 0.0 || min <= rel_cutoff * max {
            let ratio = if max > 0.0 { min / max } else { 0.0 };
            return Err(Error::Unidentifiable { ratio });
        }
        self.entries
            .clone()
            .try_inverse()
            .ok_or(Error::Unidentifiable { ratio: min / max })
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.inverse_with(Tolerances::default().singular)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.entries.row(i).iter().copied().collect()).collect()
    }
}

/// `F_ij = Σ_x ∂_i p(x) ∂_j p(x) / p(x)`.
///
/// `dprobs[i][x]` is `∂_i p(x)`. Outcomes with `p(x) <= floor` are skipped.
pub fn classical_fisher(probs: &[f64], dprobs: &[Vec<f64>], tol: &Tolerances) -> Result<FisherMatrix> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > tol.probability {
        return Err(Error::Validation(format!("probabilities sum to {total}")));
    }
    if let Some(p) = probs.iter().find(|&&p| p < -tol.probability) {
        return Err(Error::Validation(format!("negative probability {p}")));
    }
    for (i, row) in dprobs.iter().enumerate() {
        if row.len() != probs.len() {
            return Err(Error::Dimension { expected: probs.len(), got: row.len() });
        }
        let s: f64 = row.iter().sum();
        if s.abs() > tol.probability {
            return Err(Error::Validation(format!("derivative row {i} sums to {s}")));
        }
    }
    let p = dprobs.len();
    let mut f = DMatrix::zeros(p, p);
    for (x, &px) in probs.iter().enumerate() {
        if px <= tol.floor {
            continue;
        }
        for i in 0..p {
            for j in i..p {
                let v = dprobs[i][x] * dprobs[j][x] / px;
                f[(i, j)] += v;
                if i != j {
                    f[(j, i)] += v;
                }
            }
        }
    }
    FisherMatrix::new(f, FisherKind::Classical)
}

/// Outcome probabilities `Tr(ρ Π_x)` and their derivatives.
pub fn povm_statistics(rho: &CMatrix, drhos: &[HermitianOperator], povm: &Povm) -> (Vec<f64>, Vec<Vec<f64>>) {
    let probs = povm.elements().iter().map(|e| trace_product(rho, e.matrix()).re).collect();
    let dprobs = drhos
        .iter()
        .map(|d| povm.elements().iter().map(|e| trace_product(d.matrix(), e.matrix()).re).collect())
        .collect();
    (probs, dprobs)
}

/// Classical Fisher information of a fixed measurement on a model.
pub fn povm_fisher(model: &dyn ParametricModel, phi: &[f64], povm: &Povm, tol: &Tolerances) -> Result<FisherMatrix> {
    let rho = model.eval(phi)?;
    if rho.dim() != povm.dim() {
        return Err(Error::Dimension { expected: rho.dim(), got: povm.dim() });
    }
    let drhos = model.derivs(phi)?;
    let (probs, dprobs) = povm_statistics(rho.matrix(), &drhos, povm);
    classical_fisher(&probs, &dprobs, tol)
}

/// Classical Fisher information approached from a nearby point.
///
/// At points where an outcome has zero probability the classical FI is
/// discontinuous: the exact value drops the outcome while the limit keeps
/// its contribution. This evaluates the FI at `φ + h·u` and `φ + (h/2)·u`
/// along the diagonal direction `u` and removes the `O(h²)` term by
/// Richardson extrapolation.
pub fn povm_fisher_limit(model: &dyn ParametricModel, phi: &[f64], povm: &Povm, h: f64, tol: &Tolerances) -> Result<FisherMatrix> {
    let p = phi.len() as f64;
    let at = |t: f64| -> Result<FisherMatrix> {
        let x: Vec<f64> = phi.iter().map(|v| v + t / p.sqrt()).collect();
        povm_fisher(model, &x, povm, tol)
    };
    let coarse = at(h)?;
    let fine = at(h / 2.0)?;
    let extrapolated = (fine.entries() * 4.0 - coarse.entries()) / 3.0;
    FisherMatrix::new(extrapolated, FisherKind::Classical)
}

/// Solves `½(Lρ + ρL) = ∂ρ` in the eigenbasis of `ρ`:
/// `L = 2 Σ ⟨m|∂ρ|n⟩ / (p_m + p_n) |m⟩⟨n|` over pairs with
/// `p_m + p_n > floor · p_max`. The kernel-kernel block is set to zero.
pub fn sld(rho: &DensityMatrix, drho: &HermitianOperator, tol: &Tolerances) -> Result<HermitianOperator> {
    if rho.dim() != drho.dim() {
        return Err(Error::Dimension { expected: rho.dim(), got: drho.dim() });
    }
    Ok(sld_raw(rho.matrix(), std::slice::from_ref(drho), tol)?.0.remove(0))
}

/// SLDs for several derivatives at once, sharing one eigendecomposition.
/// `rho` may be any positive semidefinite matrix (normalization is not
/// used). Returns the SLDs and the dimension of the support.
pub(crate) fn sld_raw(
    rho: &CMatrix,
    drhos: &[HermitianOperator],
    tol: &Tolerances,
) -> Result<(Vec<HermitianOperator>, usize)> {
    let e = eigh_unchecked(rho);
    let n = rho.nrows();
    let pmax = e.values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol.floor * pmax.max(f64::MIN_POSITIVE);
    let support = e.values.iter().filter(|&&p| p > cutoff).count();
    let u = &e.vectors;
    let mut out = Vec::with_capacity(drhos.len());
    for d in drhos {
        let db = u.adjoint() * d.matrix() * u;
        let mut lb = CMatrix::zeros(n, n);
        let mut leak: f64 = 0.0;
        for m in 0..n {
            for k in 0..n {
                let s = e.values[m].max(0.0) + e.values[k].max(0.0);
                if s > cutoff {
                    lb[(m, k)] = db[(m, k)] * (2.0 / s);
                } else {
                    leak = leak.max(db[(m, k)].norm());
                }
            }
        }
        if leak > tol.support_leak {
            return Err(Error::UnsaturableDirection { leak });
        }
        out.push(HermitianOperator::from_hermitian_part(&(u * lb * u.adjoint())));
    }
    Ok((out, support))
}

/// `max |½(Lρ + ρL) − ∂ρ|`.
pub fn sld_residual(rho: &CMatrix, drho: &CMatrix, l: &CMatrix) -> f64 {
    max_abs(&(anticommutator(l, rho).scale(0.5) - drho))
}

/// The SLDs of all parameters at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct SldSet {
    pub slds: Vec<HermitianOperator>,
    /// Dimension of the support of `ρ` used to build them.
    pub rank_support_dim: usize,
}

impl SldSet {
    pub fn compute(rho: &DensityMatrix, drhos: &[HermitianOperator], tol: &Tolerances) -> Result<Self> {
        for d in drhos {
            if d.dim() != rho.dim() {
                return Err(Error::Dimension { expected: rho.dim(), got: d.dim() });
            }
        }
        let (slds, rank_support_dim) = sld_raw(rho.matrix(), drhos, tol)?;
        Ok(SldSet { slds, rank_support_dim })
    }

    pub fn from_model(model: &dyn ParametricModel, phi: &[f64], tol: &Tolerances) -> Result<(DensityMatrix, Self)> {
        let rho = model.eval(phi)?;
        let drhos = model.derivs(phi)?;
        let set = SldSet::compute(&rho, &drhos, tol)?;
        Ok((rho, set))
    }

    pub fn len(&self) -> usize {
        self.slds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slds.is_empty()
    }

    /// `½{L_i, ρ}`: the derivatives the SLDs actually reproduce.
    pub fn implied_derivatives(&self, rho: &CMatrix) -> Vec<CMatrix> {
        self.slds.iter().map(|l| anticommutator(l.matrix(), rho).scale(0.5)).collect()
    }
}

/// Matrix of `Tr(ρ L_i L_j)` (complex).
pub fn sld_gram(rho: &CMatrix, slds: &SldSet) -> DMatrix<num_complex::Complex64> {
    let p = slds.len();
    let rl: Vec<CMatrix> = slds.slds.iter().map(|l| rho * l.matrix()).collect();
    DMatrix::from_fn(p, p, |i, j| trace_product(&rl[i], slds.slds[j].matrix()))
}

/// `(F_Q)_ij = Re Tr(ρ L_i L_j)`.
pub fn qfi_matrix(rho: &DensityMatrix, slds: &SldSet) -> Result<FisherMatrix> {
    qfi_matrix_raw(rho.matrix(), slds)
}

pub(crate) fn qfi_matrix_raw(rho: &CMatrix, slds: &SldSet) -> Result<FisherMatrix> {
    let g = sld_gram(rho, slds);
    FisherMatrix::new(g.map(|z| z.re), FisherKind::Quantum)
}

/// QFI matrix of a model at one point.
pub fn model_qfi(model: &dyn ParametricModel, phi: &[f64], tol: &Tolerances) -> Result<FisherMatrix> {
    let (rho, slds) = SldSet::from_model(model, phi, tol)?;
    qfi_matrix(&rho, &slds)
}

fn check_cost(cost: &DMatrix<f64>, p: usize) -> Result<()> {
    if cost.shape() != (p, p) {
        return Err(Error::Dimension { expected: p, got: cost.nrows() });
    }
    if (cost - cost.transpose()).amax() > 1e-12 * cost.amax().max(1.0) {
        return Err(Error::Validation("cost matrix not symmetric".into()));
    }
    Ok(())
}

/// `Tr(G F_Q⁻¹)`.
pub fn qfi_cr_bound(fq: &FisherMatrix, cost: &DMatrix<f64>) -> Result<f64> {
    check_cost(cost, fq.dim())?;
    let inv = fq.inverse()?;
    Ok((cost * inv).trace())
}

/// Each quantity behind the three layers of compatibility, kept apart.
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    /// `Tr(ρ[L_i, L_j]) / i`, antisymmetric.
    pub weak_commutation: Vec<Vec<f64>>,
    /// `Re Tr(ρ L_i L_j)` off the diagonal; zero on it.
    pub qfi_offdiag: Vec<Vec<f64>>,
    /// Spectral norm of `[L_i, L_j]`.
    pub strong_commutators: Vec<Vec<f64>>,
    /// Largest gap between the explicit eigenbasis sum and `Tr(ρ L_i L_j)`.
    pub explicit_sum_residual: f64,
    /// Weak commutation: collective measurements saturate the QFI bound.
    pub weak_commutation_holds: bool,
    /// Diagonal QFI: estimates are statistically independent.
    pub qfi_diagonal: bool,
    /// SLDs commute as operators: a single-copy measurement suffices.
    pub strong_commutation_holds: bool,
    pub tolerance: f64,
}

impl CompatibilityReport {
    pub fn max_weak_violation(&self) -> f64 {
        max_entry(&self.weak_commutation)
    }

    pub fn max_offdiag(&self) -> f64 {
        max_entry(&self.qfi_offdiag)
    }

    pub fn max_strong_commutator(&self) -> f64 {
        max_entry(&self.strong_commutators)
    }
}

fn max_entry(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Spectral norm of an anti-Hermitian or Hermitian commutator.
fn commutator_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    let k = commutator(a, b) * I;
    let e = eigh_unchecked(&k);
    e.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Evaluates the weak-commutation, diagonal-QFI and strong-commutation
/// conditions. The QFI matrix is only used for its dimension check; every
/// entry is recomputed from the SLDs and cross-checked against the explicit
/// eigenbasis sum `4 Σ p_m/(p_m+p_n)² ⟨m|∂_iρ|n⟩⟨n|∂_jρ|m⟩`.
pub fn compatibility_check(rho: &DensityMatrix, slds: &SldSet, fq: &FisherMatrix, tol: f64) -> Result<CompatibilityReport> {
    let p = slds.len();
    if fq.dim() != p {
        return Err(Error::Dimension { expected: p, got: fq.dim() });
    }
    let r = rho.matrix();
    let gram = sld_gram(r, slds);
    let drhos = slds.implied_derivatives(r);
    let explicit = explicit_compatibility_sum(rho, &drhos, Tolerances::default().floor);

    let mut weak = vec![vec![0.0; p]; p];
    let mut off = vec![vec![0.0; p]; p];
    let mut strong = vec![vec![0.0; p]; p];
    let mut residual: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            weak[i][j] = 2.0 * gram[(i, j)].im;
            residual = residual.max((explicit[(i, j)] - gram[(i, j)]).norm());
            if i != j {
                off[i][j] = gram[(i, j)].re;
                if j > i {
                    strong[i][j] = commutator_norm(slds.slds[i].matrix(), slds.slds[j].matrix());
                    strong[j][i] = strong[i][j];
                }
            }
        }
    }
    let weak_ok = max_entry(&weak) < tol;
    let diag_ok = max_entry(&off) < tol;
    let strong_ok = max_entry(&strong) < tol;
    Ok(CompatibilityReport {
        weak_commutation: weak,
        qfi_offdiag: off,
        strong_commutators: strong,
        explicit_sum_residual: residual,
        weak_commutation_holds: weak_ok,
        qfi_diagonal: diag_ok,
        strong_commutation_holds: strong_ok,
        tolerance: tol,
    })
}

/// `4 Σ_{m,n} p_m/(p_m+p_n)² ⟨m|∂_iρ|n⟩⟨n|∂_jρ|m⟩` from the spectral
/// decomposition of `ρ`; equals `Tr(ρ L_i L_j)`.
pub fn explicit_compatibility_sum(rho: &DensityMatrix, drhos: &[CMatrix], floor: f64) -> DMatrix<num_complex::Complex64> {
    let e = eigh(&rho.as_operator());
    let u = &e.vectors;
    let n = rho.dim();
    let pmax = e.values.max();
    let rot: Vec<CMatrix> = drhos.iter().map(|d| u.adjoint() * d * u).collect();
    let p = drhos.len();
    DMatrix::from_fn(p, p, |i, j| {
        let mut acc = c(0.0, 0.0);
        for m in 0..n {
            for k in 0..n {
                let pm = e.values[m].max(0.0);
                let s = pm + e.values[k].max(0.0);
                if s > floor * pmax {
                    acc += rot[i][(m, k)] * rot[j][(k, m)] * (4.0 * pm / (s * s));
                }
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_hermitian, PureUnitaryModel, RandomFullRankModel};
    use crate::operator::{expm_i, hermitian_part, kron, outer, pauli_x, pauli_y, pauli_z, CVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn plus() -> CVector {
        CVector::from_vec(vec![c(1., 0.), c(1., 0.)]).scale(1.0 / 2f64.sqrt())
    }

    #[test]
    fn binomial_single_trial() {
        let eta: f64 = 0.3;
        // P(0) = η, P(1) = 1 − η
        let f = classical_fisher(&[eta, 1.0 - eta], &[vec![1.0, -1.0]], &tol()).unwrap();
        assert!((f.get(0, 0) - 1.0 / (eta * (1.0 - eta))).abs() < 1e-12);
    }

    #[test]
    fn constant_distribution_has_no_information() {
        let f = classical_fisher(&[0.2, 0.8], &[vec![0.0, 0.0], vec![0.0, 0.0]], &tol()).unwrap();
        assert_eq!(f.entries().amax(), 0.0);
    }

    #[test]
    fn two_outcome_cosine() {
        let phi: f64 = 0.7;
        let p = [(phi / 2.0).cos().powi(2), (phi / 2.0).sin().powi(2)];
        let d = -(phi).sin() / 2.0;
        let f = classical_fisher(&p, &[vec![d, -d]], &tol()).unwrap();
        assert!((f.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_probability_rejected() {
        assert!(classical_fisher(&[1.5, -0.5], &[vec![0.0, 0.0]], &tol()).is_err());
    }

    fn phase_model() -> PureUnitaryModel {
        PureUnitaryModel { generators: vec![pauli_z().scale(0.5)], probe: plus() }
    }

    #[test]
    fn pure_phase_qfi_is_one() {
        let fq = model_qfi(&phase_model(), &[0.0], &tol()).unwrap();
        assert!((fq.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sld_eigenbasis_measurement_attains_qfi() {
        let m = phase_model();
        let (rho, slds) = SldSet::from_model(&m, &[0.4], &tol()).unwrap();
        let fq = qfi_matrix(&rho, &slds).unwrap();
        let e = eigh(&slds.slds[0]);
        let povm = Povm::from_basis(&e.vectors).unwrap();
        let f = povm_fisher(&m, &[0.4], &povm, &tol()).unwrap();
        assert!((f.get(0, 0) - fq.get(0, 0)).abs() < 1e-8);
    }

    #[test]
    fn trivial_povm_has_no_information() {
        let povm = Povm::new(vec![HermitianOperator::identity(2)]).unwrap();
        let f = povm_fisher(&phase_model(), &[0.2], &povm, &tol()).unwrap();
        assert!(f.get(0, 0).abs() < 1e-14);
    }

    #[test]
    fn pure_state_sld_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = {
            let v = CVector::from_fn(3, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            v.normalize()
        };
        let dpsi = {
            let h = random_hermitian(&mut rng, 3);
            (&h * &psi) * I
        };
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let drho = HermitianOperator::from_hermitian_part(&(outer(&dpsi, &psi) + outer(&psi, &dpsi)));
        let l = sld(&rho, &drho, &tol()).unwrap();
        let expected = (outer(&dpsi, &psi) + outer(&psi, &dpsi)).scale(2.0);
        // SLDs are unique only on the support; compare where ρ acts.
        assert!(sld_residual(rho.matrix(), drho.matrix(), l.matrix()) < 1e-10);
        assert!(sld_residual(rho.matrix(), drho.matrix(), &expected) < 1e-10);
        let q1 = trace_product(&(rho.matrix() * l.matrix()), l.matrix()).re;
        let q2 = trace_product(&(rho.matrix() * &expected), &expected).re;
        assert!((q1 - q2).abs() < 1e-10);
    }

    #[test]
    fn full_rank_diagonal_qubit() {
        let (p, cc) = (0.3, 0.25);
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(p, 0.), c(1. - p, 0.)]))).unwrap();
        let d = HermitianOperator::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(cc, 0.), c(-cc, 0.)]))).unwrap();
        let l = sld(&rho, &d, &tol()).unwrap();
        assert!((l.matrix()[(0, 0)].re - cc / p).abs() < 1e-12);
        assert!((l.matrix()[(1, 1)].re + cc / (1.0 - p)).abs() < 1e-12);
        assert!(l.matrix()[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn zero_derivative_zero_sld() {
        let rho = DensityMatrix::maximally_mixed(3);
        let l = sld(&rho, &HermitianOperator::zeros(3), &tol()).unwrap();
        assert_eq!(max_abs(l.matrix()), 0.0);
    }

    #[test]
    fn derivative_outside_support_is_rejected() {
        let rho = DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(1., 0.), c(0., 0.)]))).unwrap();
        let d = HermitianOperator::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(-0.1, 0.), c(0.1, 0.)]))).unwrap();
        assert!(matches!(sld(&rho, &d, &tol()), Err(Error::UnsaturableDirection { .. })));
    }

    /// Dephased equatorial qubit `η|φ⟩⟨φ| + (1−η)/2`, parameters (φ, η).
    fn dephased_qubit(phi: f64, eta: f64) -> (DensityMatrix, Vec<HermitianOperator>) {
        let ket = CVector::from_vec(vec![c(1., 0.), (I * phi).exp()]).scale(1.0 / 2f64.sqrt());
        let pure = outer(&ket, &ket);
        let half = CMatrix::identity(2, 2).scale(0.5);
        let rho = pure.scale(eta) + half.scale(1.0 - eta);
        let dket = CVector::from_vec(vec![c(0., 0.), I * (I * phi).exp()]).scale(1.0 / 2f64.sqrt());
        let dphi = (outer(&dket, &ket) + outer(&ket, &dket)).scale(eta);
        let deta = pure - half;
        (
            DensityMatrix::new(rho).unwrap(),
            vec![HermitianOperator::from_hermitian_part(&dphi), HermitianOperator::from_hermitian_part(&deta)],
        )
    }

    #[test]
    fn dephased_qubit_qfi() {
        for &eta in &[0.3, 0.6, 0.9] {
            let (rho, d) = dephased_qubit(0.37, eta);
            let slds = SldSet::compute(&rho, &d, &tol()).unwrap();
            let fq = qfi_matrix(&rho, &slds).unwrap();
            assert!((fq.get(0, 0) - eta * eta).abs() < 1e-10);
            assert!((fq.get(1, 1) - 1.0 / (1.0 - eta * eta)).abs() < 1e-10);
            assert!(fq.get(0, 1).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicated_parameter_is_degenerate() {
        let m = PureUnitaryModel { generators: vec![pauli_z().scale(0.5), pauli_z().scale(0.5)], probe: plus() };
        let fq = model_qfi(&m, &[0.0, 0.0], &tol()).unwrap();
        assert!(fq.eigenvalues()[0].abs() < 1e-12);
        assert!(matches!(qfi_cr_bound(&fq, &DMatrix::identity(2, 2)), Err(Error::Unidentifiable { .. })));
    }

    #[test]
    fn cr_bound_values() {
        let fq = FisherMatrix::diagonal(&[4.0, 4.0], FisherKind::Quantum).unwrap();
        assert!((qfi_cr_bound(&fq, &DMatrix::identity(2, 2)).unwrap() - 0.5).abs() < 1e-15);
        let f = FisherMatrix::new(DMatrix::from_row_slice(3, 3, &[3., 1., 0., 1., 2., 0.5, 0., 0.5, 1.]), FisherKind::Quantum).unwrap();
        let g = f.entries().clone();
        assert!((qfi_cr_bound(&f, &g).unwrap() - 3.0).abs() < 1e-12);
        let inv = f.inverse().unwrap();
        assert!(inv[(0, 0)] > 1.0 / f.get(0, 0));
    }

    #[test]
    fn single_parameter_trivially_compatible() {
        let (rho, slds) = SldSet::from_model(&phase_model(), &[0.1], &tol()).unwrap();
        let fq = qfi_matrix(&rho, &slds).unwrap();
        let r = compatibility_check(&rho, &slds, &fq, 1e-8).unwrap();
        assert!(r.weak_commutation_holds && r.qfi_diagonal && r.strong_commutation_holds);
    }

    #[test]
    fn spin_half_two_axis_weak_commutation_tracks_polarization() {
        // for pure probes Tr(ρ[L_x, L_y])/i = 4⟨[J_x, J_y]⟩/i = 2 cos θ
        for a in 0..=12 {
            for b in 0..12 {
                let th = std::f64::consts::PI * a as f64 / 12.0;
                let ph = 2.0 * std::f64::consts::PI * b as f64 / 12.0;
                let probe = CVector::from_vec(vec![c((th / 2.0).cos(), 0.), (I * ph).exp() * (th / 2.0).sin()]);
                let m = PureUnitaryModel { generators: vec![pauli_x().scale(0.5), pauli_y().scale(0.5)], probe };
                let (rho, slds) = SldSet::from_model(&m, &[0.0, 0.0], &tol()).unwrap();
                let fq = qfi_matrix(&rho, &slds).unwrap();
                let r = compatibility_check(&rho, &slds, &fq, 1e-8).unwrap();
                assert!((r.weak_commutation[0][1] - 2.0 * th.cos()).abs() < 1e-10);
                assert_eq!(r.weak_commutation_holds, th.cos().abs() < 1e-8);
            }
        }
    }

    #[test]
    fn qfi_additive_on_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = RandomFullRankModel::sample(&mut rng, 2, 2);
        let phi = [0.1, -0.2];
        let rho = m.eval(&phi).unwrap();
        let d = m.derivs(&phi).unwrap();
        let r2 = DensityMatrix::new(kron(rho.matrix(), rho.matrix())).unwrap();
        let d2: Vec<HermitianOperator> = d
            .iter()
            .map(|di| HermitianOperator::from_hermitian_part(&(kron(di.matrix(), rho.matrix()) + kron(rho.matrix(), di.matrix()))))
            .collect();
        let f1 = model_qfi(&m, &phi, &tol()).unwrap();
        let s2 = SldSet::compute(&r2, &d2, &tol()).unwrap();
        let f2 = qfi_matrix(&r2, &s2).unwrap();
        assert!((f2.entries() - f1.entries() * 2.0).amax() < 1e-8);
    }

    fn random_model_strategy() -> impl Strategy<Value = (u64, usize, usize)> {
        (any::<u64>(), 2usize..=6, 1usize..=3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sld_residual_small((seed, dim, p) in random_model_strategy()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = RandomFullRankModel::sample(&mut rng, dim, p);
            let phi: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let rho = m.eval(&phi).unwrap();
            let d = m.derivs(&phi).unwrap();
            let s = SldSet::compute(&rho, &d, &tol()).unwrap();
            for (l, di) in s.slds.iter().zip(&d) {
                prop_assert!(sld_residual(rho.matrix(), di.matrix(), l.matrix()) < 1e-8);
            }
        }

        #[test]
        fn measurement_never_beats_qfi((seed, dim, p) in random_model_strategy()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = RandomFullRankModel::sample(&mut rng, dim, p);
            let phi: Vec<f64> = (0..p).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let fq = model_qfi(&m, &phi, &tol()).unwrap();
            let basis = expm_i(&random_hermitian(&mut rng, dim), 1.0);
            let povm = Povm::from_basis(&basis).unwrap();
            let f = povm_fisher(&m, &phi, &povm, &tol()).unwrap();
            let gap = FisherMatrix { entries: fq.entries() - f.entries(), kind: FisherKind::Quantum };
            prop_assert!(gap.eigenvalues()[0] > -1e-8);
        }

        #[test]
        fn explicit_sum_matches_trace((seed, dim, p) in random_model_strategy()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = RandomFullRankModel::sample(&mut rng, dim, p);
            let (rho, slds) = SldSet::from_model(&m, &vec![0.05; p], &tol()).unwrap();
            let fq = qfi_matrix(&rho, &slds).unwrap();
            let r = compatibility_check(&rho, &slds, &fq, 1e-8).unwrap();
            prop_assert!(r.explicit_sum_residual < 1e-8);
            for i in 0..p {
                for j in 0..p {
                    prop_assert!((r.weak_commutation[i][j] + r.weak_commutation[j][i]).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn inverse_diagonal_dominates_reciprocal(seed in any::<u64>(), p in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
            let f = &a * a.transpose() + DMatrix::identity(p, p) * 0.1;
            let fm = FisherMatrix::new(f.clone(), FisherKind::Classical).unwrap();
            let inv = fm.inverse().unwrap();
            for i in 0..p {
                prop_assert!(inv[(i, i)] >= 1.0 / f[(i, i)] - 1e-10);
            }
            // zero out row/column 0 off-diagonals: equality for that index
            let mut g = f.clone();
            for j in 1..p { g[(0, j)] = 0.0; g[(j, 0)] = 0.0; }
            let gi = FisherMatrix::new(g.clone(), FisherKind::Classical).unwrap().inverse().unwrap();
            prop_assert!((gi[(0, 0)] - 1.0 / g[(0, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn sld_gauge_on_rank_deficient_state() {
        // pure-state SLD via the general formula vs the closed pure-state form
        let psi = plus();
        let h = pauli_y().scale(0.5);
        let dpsi = (&h * &psi) * I;
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let d = HermitianOperator::from_hermitian_part(&(outer(&dpsi, &psi) + outer(&psi, &dpsi)));
        let l = sld(&rho, &d, &tol()).unwrap();
        let closed = hermitian_part(&(outer(&dpsi, &psi) + outer(&psi, &dpsi)).scale(2.0));
        assert!(max_abs(&(l.matrix() - closed)) < 1e-10);
    }
}
