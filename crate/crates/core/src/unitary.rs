//! Multiparameter unitary estimation `|ψ_φ⟩ = e^{i Σ φ_k H_k} |ψ⟩`:
//! compatibility of generators, optimal probes, the extremal-eigenvector
//! criterion, spin rotations and collective qubit rotations.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{FisherKind, FisherMatrix};
use crate::model::PureUnitaryModel;
use crate::operator::{c, eigh, expm_i, outer, CMatrix, CVector, HermitianOperator, Povm, C64, I};
use crate::spin::{binomial, cross, dot3, normalize3, SpinOperators};

/// Generators shifted so that `λ⁻ = −λ⁺`, and the estimation point.
#[derive(Debug, Clone)]
pub struct HamiltonianSet {
    generators: Vec<HermitianOperator>,
    pub phi_point: Vec<f64>,
}

impl HamiltonianSet {
    pub fn new(generators: Vec<HermitianOperator>, phi_point: Vec<f64>) -> Result<Self> {
        let Some(first) = generators.first() else {
            return Err(Error::Validation("empty generator set".into()));
        };
        let n = first.dim();
        if let Some(g) = generators.iter().find(|g| g.dim() != n) {
            return Err(Error::Dimension { expected: n, got: g.dim() });
        }
        if phi_point.len() != generators.len() {
            return Err(Error::Dimension { expected: generators.len(), got: phi_point.len() });
        }
        let shifted = generators
            .into_iter()
            .map(|h| {
                let e = eigh(&h);
                let mid = (e.values[0] + e.values[n - 1]) / 2.0;
                HermitianOperator::from_hermitian_part(&(h.matrix() - CMatrix::identity(n, n).scale(mid)))
            })
            .collect();
        Ok(HamiltonianSet { generators: shifted, phi_point })
    }

    pub fn at_origin(generators: Vec<HermitianOperator>) -> Result<Self> {
        let p = generators.len();
        HamiltonianSet::new(generators, vec![0.0; p])
    }

    pub fn generators(&self) -> &[HermitianOperator] {
        &self.generators
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    fn model(&self, probe: &CVector) -> PureUnitaryModel {
        PureUnitaryModel { generators: self.generators.iter().map(|h| h.matrix().clone()).collect(), probe: probe.clone() }
    }
}

/// Output state `e^{i Σ φ_k H_k}|ψ⟩` and its exact partial derivatives.
pub fn unitary_output(hset: &HamiltonianSet, phi: &[f64], probe: &CVector) -> Result<(CVector, Vec<CVector>)> {
    if probe.len() != hset.dim() {
        return Err(Error::Dimension { expected: hset.dim(), got: probe.len() });
    }
    if phi.len() != hset.len() {
        return Err(Error::Dimension { expected: hset.len(), got: phi.len() });
    }
    Ok(hset.model(probe).state_derivatives(phi))
}

/// `L = 2(|∂ψ⟩⟨ψ| + |ψ⟩⟨∂ψ|)`.
pub fn pure_sld(psi: &CVector, dpsi: &CVector) -> HermitianOperator {
    HermitianOperator::from_hermitian_part(&(outer(dpsi, psi) + outer(psi, dpsi)).scale(2.0))
}

/// QFI matrix `4 Re(⟨∂_iψ|∂_jψ⟩ − ⟨∂_iψ|ψ⟩⟨ψ|∂_jψ⟩)` of a pure family.
pub fn pure_state_qfi(psi: &CVector, dpsis: &[CVector]) -> Result<FisherMatrix> {
    let p = dpsis.len();
    let overlaps: Vec<C64> = dpsis.iter().map(|d| psi.dotc(d)).collect();
    let f = DMatrix::from_fn(p, p, |i, j| 4.0 * (dpsis[i].dotc(&dpsis[j]) - overlaps[i].conj() * overlaps[j]).re);
    FisherMatrix::new(f, FisherKind::Quantum)
}

/// `M_ij = ⟨ψ|(⟨H_i⟩ − H_i)(⟨H_j⟩ − H_j)|ψ⟩`.
pub fn hamiltonian_compat_matrix(psi: &CVector, hset: &HamiltonianSet) -> Result<DMatrix<C64>> {
    if psi.len() != hset.dim() {
        return Err(Error::Dimension { expected: hset.dim(), got: psi.len() });
    }
    let n = psi.len();
    let centered: Vec<CVector> = hset
        .generators
        .iter()
        .map(|h| {
            let mean = h.expectation(psi);
            (CMatrix::identity(n, n).scale(mean) - h.matrix()) * psi
        })
        .collect();
    let p = hset.len();
    Ok(DMatrix::from_fn(p, p, |i, j| centered[i].dotc(&centered[j])))
}

#[derive(Debug, Clone)]
pub struct OptimalProbe {
    pub state: CVector,
    /// The extremal eigenspace of `h` was degenerate; the probe is one
    /// canonical choice among many.
    pub degenerate: bool,
}

/// `(|−⟩ + |+⟩)/√2` from the extremal eigenvectors of `h`.
pub fn optimal_probe(h: &HermitianOperator) -> OptimalProbe {
    let e = eigh(h);
    let n = h.dim();
    let spread = (e.values[n - 1] - e.values[0]).abs().max(1.0);
    let degenerate = n > 2 && ((e.values[1] - e.values[0]).abs() < 1e-10 * spread || (e.values[n - 1] - e.values[n - 2]).abs() < 1e-10 * spread);
    let state = (e.vector(0) + e.vector(n - 1)).scale(1.0 / 2f64.sqrt());
    OptimalProbe { state, degenerate }
}

#[derive(Debug, Clone)]
pub struct EigstructureReport {
    pub xi_vectors: Vec<CVector>,
    /// `max |⟨ξ_i|ξ_j⟩ − δ_ij|`.
    pub orthonormality_residual: f64,
    /// `max |⟨ψ|ξ_i⟩|`.
    pub overlap_with_psi: f64,
    /// `max ‖√2|−⟩_i − (|ψ⟩ − |ξ_i⟩)‖`.
    pub minus_residual: f64,
    pub satisfied: bool,
}

impl EigstructureReport {
    pub fn residual(&self) -> f64 {
        self.orthonormality_residual.max(self.overlap_with_psi).max(self.minus_residual)
    }
}

fn aligned_to(v: CVector, psi: &CVector) -> CVector {
    let o = v.dotc(psi);
    if o.norm() > 1e-14 {
        v * (o / o.norm())
    } else {
        v
    }
}

/// Checks whether the extremal eigenvectors of every generator take the
/// form `|±⟩_i = (|ψ⟩ ± |ξ_i⟩)/√2` with orthonormal `ξ_i ⊥ ψ`. Eigenvector
/// phases are chosen to maximize agreement with `ψ`.
pub fn eigstructure_check(psi: &CVector, hset: &HamiltonianSet, tol: f64) -> Result<EigstructureReport> {
    if psi.len() != hset.dim() {
        return Err(Error::Dimension { expected: hset.dim(), got: psi.len() });
    }
    let n = psi.len();
    let s2 = 2f64.sqrt();
    let mut xis = Vec::with_capacity(hset.len());
    let mut minus_residual: f64 = 0.0;
    for h in &hset.generators {
        let e = eigh(h);
        let plus = aligned_to(e.vector(n - 1), psi);
        let minus = aligned_to(e.vector(0), psi);
        let xi = plus.scale(s2) - psi;
        minus_residual = minus_residual.max((minus.scale(s2) - (psi - &xi)).norm());
        xis.push(xi);
    }
    let mut ortho: f64 = 0.0;
    for (i, a) in xis.iter().enumerate() {
        for (j, b) in xis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            ortho = ortho.max((a.dotc(b) - c(target, 0.0)).norm());
        }
    }
    let overlap = xis.iter().fold(0.0f64, |acc, x| acc.max(psi.dotc(x).norm()));
    let satisfied = ortho < tol && overlap < tol && minus_residual < tol;
    Ok(EigstructureReport { xi_vectors: xis, orthonormality_residual: ortho, overlap_with_psi: overlap, minus_residual, satisfied })
}

/// Spin `j` rotated about two unit axes.
#[derive(Debug, Clone)]
pub struct SpinRotationModel {
    pub two_j: usize,
    pub n1: [f64; 3],
    pub n2: [f64; 3],
}

impl SpinRotationModel {
    pub fn new(two_j: usize, n1: [f64; 3], n2: [f64; 3]) -> Result<Self> {
        if two_j == 0 {
            return Err(Error::Validation("spin must be positive".into()));
        }
        for n in [n1, n2] {
            if (dot3(n, n) - 1.0).abs() > 1e-12 {
                return Err(Error::Validation(format!("axis {n:?} is not a unit vector")));
            }
        }
        Ok(SpinRotationModel { two_j, n1, n2 })
    }

    /// `n1 = ẑ`, `n2 = (sin α, 0, cos α)`.
    pub fn with_angle(two_j: usize, alpha: f64) -> Result<Self> {
        SpinRotationModel::new(two_j, [0.0, 0.0, 1.0], [alpha.sin(), 0.0, alpha.cos()])
    }

    pub fn alpha(&self) -> f64 {
        dot3(self.n1, self.n2).clamp(-1.0, 1.0).acos()
    }

    pub fn dim(&self) -> usize {
        self.two_j + 1
    }

    pub fn spin(&self) -> SpinOperators {
        SpinOperators::new(self.two_j)
    }

    pub fn hamiltonians(&self) -> Result<HamiltonianSet> {
        let s = self.spin();
        HamiltonianSet::at_origin(vec![
            HermitianOperator::from_hermitian_part(&s.along(self.n1)),
            HermitianOperator::from_hermitian_part(&s.along(self.n2)),
        ])
    }

    /// `(|−j⟩_{n1} + e^{iχ}|+j⟩_{n1})/√2`.
    pub fn candidate_probe(&self, chi: f64) -> CVector {
        let s = self.spin();
        let two_j = self.two_j as i64;
        (s.eigenstate(self.n1, -two_j) + s.eigenstate(self.n1, two_j) * (I * chi).exp()).scale(1.0 / 2f64.sqrt())
    }

    /// Smallest eigenstructure residual over `grid` relative phases of the
    /// candidate probe. Returns `(residual, best phase)`.
    pub fn best_eigstructure_residual(&self, grid: usize) -> Result<(f64, f64)> {
        let hset = self.hamiltonians()?;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..grid {
            let chi = 2.0 * std::f64::consts::PI * k as f64 / grid as f64;
            let r = eigstructure_check(&self.candidate_probe(chi), &hset, 0.0)?.residual();
            if r < best.0 {
                best = (r, chi);
            }
        }
        Ok(best)
    }
}

/// Magnitudes of the coefficients of `|+j⟩_{n2}` and `|−j⟩_{n2}` in the
/// `|m⟩_{n1}` basis, indexed by `m = −j, …, j`:
/// `|⟨m|+j⟩| = C(2j, j+m)^{1/2} cos^{j+m}(α/2) sin^{j−m}(α/2)` and the
/// mirror image for `−j`. Signs `(−1)^{j−m}` are attached to the `−j`
/// vector.
pub fn rotated_extremal_expansion(model: &SpinRotationModel) -> (Vec<f64>, Vec<f64>) {
    let half = model.alpha() / 2.0;
    let (cs, sn) = (half.cos(), half.sin());
    let n = model.two_j;
    let mut plus = Vec::with_capacity(n + 1);
    let mut minus = Vec::with_capacity(n + 1);
    for a in 0..=n {
        // a = j + m
        let b = binomial(n, a).sqrt();
        plus.push(b * cs.powi(a as i32) * sn.powi((n - a) as i32));
        let sign = if (n - a).is_multiple_of(2) { 1.0 } else { -1.0 };
        minus.push(sign * b * sn.powi(a as i32) * cs.powi((n - a) as i32));
    }
    (plus, minus)
}

/// Projective measurement `Π₁, Π₂, Π₃` for spin 1 with `n1 = ẑ`.
pub fn spin1_measurement() -> Result<Povm> {
    let s = SpinOperators::new(2);
    let up = s.basis_state(0);
    let down = s.basis_state(2);
    let even = (&up + &down).scale(0.5f64.sqrt());
    let odd = (&up - &down).scale(0.5f64.sqrt());
    let p1 = outer(&even, &even);
    let p2 = outer(&odd, &odd);
    let p3 = CMatrix::identity(3, 3) - &p1 - &p2;
    Povm::new(vec![
        HermitianOperator::from_hermitian_part(&p1),
        HermitianOperator::from_hermitian_part(&p2),
        HermitianOperator::from_hermitian_part(&p3),
    ])
}

/// Effective Hermitian generator of parameter `i` when the unitaries act
/// in sequence, `U = Π_k e^{i H_k φ_k}` (k = 0 leftmost):
/// `∂_i U = i A H_i A† U` with `A = Π_{k<i} e^{i H_k φ_k}`.
pub fn sequential_generator(hset: &HamiltonianSet, phi: &[f64], i: usize) -> Result<HermitianOperator> {
    if i >= hset.len() {
        return Err(Error::Validation(format!("parameter index {i} out of range")));
    }
    if phi.len() != hset.len() {
        return Err(Error::Dimension { expected: hset.len(), got: phi.len() });
    }
    let n = hset.dim();
    let a = (0..i).fold(CMatrix::identity(n, n), |acc, k| acc * expm_i(hset.generators[k].matrix(), phi[k]));
    Ok(HermitianOperator::from_hermitian_part(&(&a * hset.generators[i].matrix() * a.adjoint())))
}

/// The sequential product `Π_k e^{i H_k φ_k}`.
pub fn sequential_unitary(hset: &HamiltonianSet, phi: &[f64]) -> CMatrix {
    let n = hset.dim();
    hset.generators.iter().zip(phi).fold(CMatrix::identity(n, n), |acc, (h, &x)| acc * expm_i(h.matrix(), x))
}

#[derive(Debug, Clone)]
pub enum ProbeFamily {
    /// `(|+j⟩_{n1} + |−j⟩_{n1})/√2`.
    Ghz,
    /// `|j, 0⟩` along `n1 × n2`.
    Dicke,
    /// Any state of the symmetric subspace, in the `|j, m⟩_z` basis.
    Custom(CVector),
}

/// QFI matrix for `N` qubits rotated by `e^{i(φ₁ n1 + φ₂ n2)·σ/2}` on each
/// qubit, evaluated in the spin-`N/2` representation.
pub fn collective_rotation_fi(n_qubits: usize, family: &ProbeFamily, n1: [f64; 3], n2: [f64; 3]) -> Result<FisherMatrix> {
    if n_qubits == 0 {
        return Err(Error::Validation("need at least one qubit".into()));
    }
    let model = SpinRotationModel::new(n_qubits, n1, n2)?;
    let s = model.spin();
    let two_j = n_qubits as i64;
    let probe = match family {
        ProbeFamily::Ghz => {
            // The relative phase only matters for N = 2, where |±j⟩ are
            // coupled by (n2·S)²; pick it so the coupling term vanishes.
            let up = s.eigenstate(n1, two_j);
            let down = s.eigenstate(n1, -two_j);
            let h2 = s.along(n2);
            let t = up.dotc(&(&h2 * (&h2 * &down)));
            let phase = if t.norm() > 1e-12 { I * t.conj() / t.norm() } else { c(1.0, 0.0) };
            (up + down * phase).scale(1.0 / 2f64.sqrt())
        }
        ProbeFamily::Dicke => {
            if n_qubits % 2 == 1 {
                return Err(Error::Validation("Dicke probe needs an even qubit count".into()));
            }
            s.eigenstate(normalize3(cross(n1, n2)), 0)
        }
        ProbeFamily::Custom(v) => {
            if v.len() != s.dim() {
                return Err(Error::Dimension { expected: s.dim(), got: v.len() });
            }
            v.normalize()
        }
    };
    let hset = model.hamiltonians()?;
    let (psi, dpsis) = unitary_output(&hset, &[0.0, 0.0], &probe)?;
    pure_state_qfi(&psi, &dpsis)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Summary of one spin-rotation configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SpinRotationSummary {
    pub two_j: usize,
    pub alpha: f64,
    pub eigstructure_residual: f64,
    pub best_phase: f64,
    pub eigstructure_satisfied: bool,
    pub qfi: Vec<Vec<f64>>,
    pub var_phi1: f64,
    pub var_phi2: f64,
    pub weak_commutation_violation: f64,
}

/// Evaluates the candidate probe with the best relative phase.
pub fn analyze_spin_rotation(two_j: usize, alpha: f64, phase_grid: usize, tol: f64) -> Result<SpinRotationSummary> {
    let model = SpinRotationModel::with_angle(two_j, alpha)?;
    let (residual, chi) = model.best_eigstructure_residual(phase_grid)?;
    let hset = model.hamiltonians()?;
    let (psi, dpsis) = unitary_output(&hset, &[0.0, 0.0], &model.candidate_probe(chi))?;
    let fq = pure_state_qfi(&psi, &dpsis)?;
    let m = hamiltonian_compat_matrix(&psi, &hset)?;
    let (var1, var2) = match fq.inverse() {
        Ok(inv) => (inv[(0, 0)], inv[(1, 1)]),
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    Ok(SpinRotationSummary {
        two_j,
        alpha,
        eigstructure_residual: residual,
        best_phase: chi,
        eigstructure_satisfied: residual < tol,
        qfi: fq.to_rows(),
        var_phi1: var1,
        var_phi2: var2,
        // Tr(ρ[L_1, L_2])/i = 8 Im M_12 for pure unitary families
        weak_commutation_violation: 8.0 * m[(0, 1)].im.abs(),
    })
}

/// `‖a − b‖` after removing the global phase between them.
pub fn distance_up_to_phase(a: &CVector, b: &CVector) -> f64 {
    let o = b.dotc(a);
    let phase = if o.norm() > 0.0 { o / o.norm() } else { c(1.0, 0.0) };
    (a - b * phase).norm()
}
