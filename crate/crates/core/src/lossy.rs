//! Two-mode interferometer with equal photon loss `1 − η` in both arms and
//! a relative phase `φ`, probed by states of fixed photon number `N`.
//!
//! The output is block diagonal in the total number of lost photons `l`.
//! Block `l` lives on the two-mode Fock states with `N − l` photons,
//! indexed by the upper-arm count `0, …, N − l`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{compatibility_check, qfi_matrix, FisherKind, FisherMatrix, SldSet};
use crate::model::ParametricModel;
use crate::operator::{c, outer, CMatrix, CVector, DensityMatrix, HermitianOperator, Povm, C64, I};
use crate::optimize::nelder_mead_refined;
use crate::spin::binomial;
use crate::tolerance::Tolerances;

/// `Σ_k α_k |k, N − k⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockProbe {
    n: usize,
    alpha: Vec<C64>,
}

impl FockProbe {
    pub fn new(alpha: Vec<C64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Validation("probe needs at least one amplitude".into()));
        }
        let norm: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("probe norm² is {norm}")));
        }
        Ok(FockProbe { n: alpha.len() - 1, alpha })
    }

    /// Normalizes real amplitudes.
    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Validation("zero probe".into()));
        }
        FockProbe::new(amplitudes.iter().map(|a| c(a / norm, 0.0)).collect())
    }

    /// `(|N, 0⟩ + |0, N⟩)/√2`.
    pub fn noon(n: usize) -> Self {
        let mut a = vec![0.0; n + 1];
        a[0] = 1.0;
        a[n] = 1.0;
        FockProbe::from_real(&a).expect("nonzero")
    }

    pub fn random(rng: &mut impl Rng, n: usize) -> Self {
        let a: Vec<C64> = (0..=n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        FockProbe::new(a.into_iter().map(|x| x / norm).collect()).expect("normalized")
    }

    pub fn photons(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.alpha
    }
}

/// `B^k_{l₁l₂} = C(k, l₁) C(N−k, l₂) η^{N−l₁−l₂} (1−η)^{l₁+l₂}`.
pub fn loss_weight(n: usize, k: usize, l1: usize, l2: usize, eta: f64) -> f64 {
    if l1 > k || l2 > n - k {
        return 0.0;
    }
    let l = l1 + l2;
    binomial(k, l1) * binomial(n - k, l2) * eta.powi((n - l) as i32) * (1.0 - eta).powi(l as i32)
}

/// `c_{N,l} = (N − l)/η − l/(1 − η)`.
pub fn loss_score(n: usize, l: usize, eta: f64) -> f64 {
    (n - l) as f64 / eta - l as f64 / (1.0 - eta)
}

/// One sector of fixed total loss `l`.
#[derive(Debug, Clone)]
pub struct LossBlock {
    pub l: usize,
    /// `(l₁, |ψ_{l₁, l−l₁}⟩)`; not orthogonal in general.
    pub vectors: Vec<(usize, CVector)>,
    /// `∂_φ` of each vector, in the same order.
    pub phase_derivatives: Vec<CVector>,
    pub density: CMatrix,
}

impl LossBlock {
    pub fn dim(&self) -> usize {
        self.density.nrows()
    }

    pub fn trace(&self) -> f64 {
        crate::operator::trace(&self.density).re
    }
}

#[derive(Debug, Clone)]
pub struct LossBlockState {
    pub n: usize,
    pub eta: f64,
    pub phi: f64,
    pub blocks: Vec<LossBlock>,
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("transmissivity must lie in (0, 1), got {eta}")));
    }
    Ok(())
}

/// Output of the lossy interferometer as a direct sum over loss sectors.
pub fn lossy_output(probe: &FockProbe, phi: f64, eta: f64) -> Result<LossBlockState> {
    check_eta(eta)?;
    let n = probe.n;
    let blocks = (0..=n)
        .map(|l| {
            let dim = n - l + 1;
            let mut vectors = Vec::new();
            let mut derivs = Vec::new();
            let mut density = CMatrix::zeros(dim, dim);
            for l1 in 0..=l {
                let l2 = l - l1;
                let mut v = CVector::zeros(dim);
                let mut dv = CVector::zeros(dim);
                for k in l1..=n.saturating_sub(l2) {
                    if k + l2 > n {
                        continue;
                    }
                    let amp = probe.alpha[k] * (I * (k as f64 * phi)).exp() * loss_weight(n, k, l1, l2, eta).sqrt();
                    v[k - l1] = amp;
                    dv[k - l1] = amp * I * k as f64;
                }
                density += outer(&v, &v);
                vectors.push((l1, v));
                derivs.push(dv);
            }
            LossBlock { l, vectors, phase_derivatives: derivs, density }
        })
        .collect();
    Ok(LossBlockState { n, eta, phi, blocks })
}

impl LossBlockState {
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(LossBlock::dim).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.dim();
                o
            })
            .collect()
    }

    fn assemble(&self, per_block: impl Fn(&LossBlock) -> CMatrix) -> CMatrix {
        let d = self.total_dim();
        let mut m = CMatrix::zeros(d, d);
        for (b, o) in self.blocks.iter().zip(self.offsets()) {
            m.view_mut((o, o), (b.dim(), b.dim())).copy_from(&per_block(b));
        }
        m
    }

    pub fn to_dense(&self) -> CMatrix {
        self.assemble(|b| b.density.clone())
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.to_dense())
    }

    pub fn phase_derivative(&self) -> CMatrix {
        self.assemble(|b| {
            b.vectors
                .iter()
                .zip(&b.phase_derivatives)
                .fold(CMatrix::zeros(b.dim(), b.dim()), |acc, ((_, v), dv)| acc + outer(dv, v) + outer(v, dv))
        })
    }

    pub fn loss_derivative(&self) -> CMatrix {
        let scores = loss_derivative_structure(self);
        self.assemble(|b| b.density.scale(scores[b.l]))
    }

    /// Probability of losing `l` photons in total.
    pub fn sector_probabilities(&self) -> Vec<f64> {
        self.blocks.iter().map(LossBlock::trace).collect()
    }
}

/// `c_{N,l}` for every sector: `∂_η` multiplies block `l` by it.
pub fn loss_derivative_structure(state: &LossBlockState) -> Vec<f64> {
    (0..=state.n).map(|l| loss_score(state.n, l, state.eta)).collect()
}

/// `N / (η(1 − η))`.
pub fn loss_fisher(n: usize, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok(n as f64 / (eta * (1.0 - eta)))
}

/// Projectors onto the constant-loss sectors, in the direct-sum basis.
pub fn loss_block_povm(n: usize) -> Result<Povm> {
    let dims: Vec<usize> = (0..=n).map(|l| n - l + 1).collect();
    let total: usize = dims.iter().sum();
    let mut offset = 0;
    let elements = dims
        .iter()
        .map(|&d| {
            let mut m = CMatrix::zeros(total, total);
            for i in offset..offset + d {
                m[(i, i)] = c(1.0, 0.0);
            }
            offset += d;
            HermitianOperator::from_hermitian_part(&m)
        })
        .collect();
    Povm::new(elements)
}

/// `(φ, η)` family of the lossy interferometer for a fixed probe.
#[derive(Debug, Clone)]
pub struct LossyModel {
    pub probe: FockProbe,
}

impl ParametricModel for LossyModel {
    fn param_count(&self) -> usize {
        2
    }

    fn eval(&self, phi: &[f64]) -> Result<DensityMatrix> {
        lossy_output(&self.probe, phi[0], phi[1])?.density()
    }

    fn derivs(&self, phi: &[f64]) -> Result<Vec<HermitianOperator>> {
        let s = lossy_output(&self.probe, phi[0], phi[1])?;
        Ok(vec![
            HermitianOperator::from_hermitian_part(&s.phase_derivative()),
            HermitianOperator::from_hermitian_part(&s.loss_derivative()),
        ])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LossyQfi {
    pub f_phi_phi: f64,
    pub f_eta_eta: f64,
    pub f_phi_eta: f64,
    /// `‖[L_φ, L_η]‖` with `L_η = ⊕_l c_{N,l} 1_l`, the block-scalar choice
    /// of loss SLD. The minimal-support SLDs differ from it only on the
    /// kernel of `ρ`.
    pub sld_commutator: f64,
    /// `‖∂_η ρ − ½{L_η, ρ}‖` for the block-scalar choice.
    pub block_sld_residual: f64,
    /// `|Tr(ρ[L_φ, L_η])|`.
    pub weak_commutation: f64,
}

/// Full two-parameter QFI of the lossy output with its commutation data.
pub fn lossy_qfi(probe: &FockProbe, phi: f64, eta: f64, tol: &Tolerances) -> Result<LossyQfi> {
    let model = LossyModel { probe: probe.clone() };
    let (rho, slds) = SldSet::from_model(&model, &[phi, eta], tol)?;
    let fq = qfi_matrix(&rho, &slds)?;
    let report = compatibility_check(&rho, &slds, &fq, tol.compatibility)?;
    let state = lossy_output(probe, phi, eta)?;
    let scores = loss_derivative_structure(&state);
    let block_sld = state.assemble(|b| CMatrix::identity(b.dim(), b.dim()).scale(scores[b.l]));
    let block_sld_residual = crate::estimation::sld_residual(&state.to_dense(), &state.loss_derivative(), &block_sld);
    Ok(LossyQfi {
        f_phi_phi: fq.get(0, 0),
        f_eta_eta: fq.get(1, 1),
        f_phi_eta: fq.get(0, 1),
        sld_commutator: crate::operator::max_abs(&crate::operator::commutator(slds.slds[0].matrix(), &block_sld)),
        block_sld_residual,
        weak_commutation: report.max_weak_violation(),
    })
}

/// Phase QFI of the lossy output, summed block by block.
pub fn lossy_phase_qfi(probe: &FockProbe, eta: f64) -> Result<f64> {
    let state = lossy_output(probe, 0.0, eta)?;
    let tol = Tolerances::default();
    let mut total = 0.0;
    for b in &state.blocks {
        if b.trace() <= 0.0 {
            continue;
        }
        let d = b.vectors.iter().zip(&b.phase_derivatives).fold(CMatrix::zeros(b.dim(), b.dim()), |acc, ((_, v), dv)| acc + outer(dv, v) + outer(v, dv));
        let dh = HermitianOperator::from_hermitian_part(&d);
        let (ls, _) = crate::estimation::sld_raw(&b.density, std::slice::from_ref(&dh), &tol)?;
        total += crate::operator::trace_product(&(&b.density * ls[0].matrix()), ls[0].matrix()).re;
    }
    Ok(total)
}

/// `ηN / (1 − η)`: the phase QFI no probe exceeds.
pub fn lossy_phase_bound(n: usize, eta: f64) -> f64 {
    eta * n as f64 / (1.0 - eta)
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseProbeOptimum {
    pub amplitudes: Vec<f64>,
    pub qfi: f64,
    pub bound: f64,
    pub ratio: f64,
    pub converged: bool,
}

/// Maximizes the phase QFI over real amplitudes from `restarts` seeded
/// random starts plus the NOON state.
pub fn optimize_phase_probe(n: usize, eta: f64, restarts: usize, seed: u64) -> Result<PhaseProbeOptimum> {
    use rand::SeedableRng;
    use rayon::prelude::*;
    check_eta(eta)?;
    let objective = |x: &[f64]| -> f64 {
        match FockProbe::from_real(x) {
            Ok(p) => -lossy_phase_qfi(&p, eta).unwrap_or(0.0),
            Err(_) => 0.0,
        }
    };
    let mut starts: Vec<Vec<f64>> = (0..restarts)
        .map(|r| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            (0..=n).map(|_| rng.gen_range(0.0..1.0)).collect()
        })
        .collect();
    starts.push(FockProbe::noon(n).amplitudes().iter().map(|a| a.re).collect());
    let results: Vec<Result<crate::optimize::Minimum>> = starts.par_iter().map(|x0| nelder_mead_refined(&objective, x0, 0.2, 1e-12, 20_000)).collect();
    let mut best: Option<crate::optimize::Minimum> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.value < b.value) {
            best = Some(r);
        }
    }
    let best = best.expect("at least one start");
    let norm = best.x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let bound = lossy_phase_bound(n, eta);
    Ok(PhaseProbeOptimum {
        amplitudes: best.x.iter().map(|a| a / norm).collect(),
        qfi: -best.value,
        bound,
        ratio: -best.value / bound,
        converged: best.converged,
    })
}

/// Independent reference: the lossy output built by an explicit
/// beam-splitter unitary on each arm followed by a partial trace over the
/// two loss modes. Returns the density matrix on the `(upper, lower)`
/// Fock space truncated at `N` photons per mode, row index
/// `upper·(N+1) + lower`.
pub fn dilation_oracle(probe: &FockProbe, phi: f64, eta: f64) -> Result<CMatrix> {
    check_eta(eta)?;
    let n = probe.n;
    let d = n + 1;
    // annihilation operator on one truncated mode
    let a = CMatrix::from_fn(d, d, |r, s| if s == r + 1 { c((s as f64).sqrt(), 0.0) } else { c(0.0, 0.0) });
    let id = CMatrix::identity(d, d);
    let sys = crate::operator::kron(&a, &id);
    let env = crate::operator::kron(&id, &a);
    // U = exp(θ(a†c − a c†)) = exp(i·H·θ) with H = −i(a†c − a c†)
    let h = (sys.adjoint() * &env - &sys * env.adjoint()) * c(0.0, -1.0);
    let theta = (1.0 - eta).sqrt().asin();
    let u = crate::operator::expm_i(&crate::operator::hermitian_part(&h), theta);
    // modes ordered (upper, lower, loss_upper, loss_lower)
    let dim = d * d * d * d;
    let idx = |x: usize, y: usize, cu: usize, cl: usize| ((x * d + y) * d + cu) * d + cl;
    let mut psi = CVector::zeros(dim);
    for (k, amp) in probe.alpha.iter().enumerate() {
        psi[idx(k, n - k, 0, 0)] = *amp * (I * (k as f64 * phi)).exp();
    }
    // apply U on (upper, loss_upper) and on (lower, loss_lower)
    let mut out = CVector::zeros(dim);
    for x in 0..d {
        for y in 0..d {
            let amp_in = psi[idx(x, y, 0, 0)];
            if amp_in.norm() == 0.0 {
                continue;
            }
            for x2 in 0..d {
                for cu in 0..d {
                    let ux = u[(x2 * d + cu, x * d)];
                    if ux.norm() == 0.0 {
                        continue;
                    }
                    for y2 in 0..d {
                        for cl in 0..d {
                            let uy = u[(y2 * d + cl, y * d)];
                            out[idx(x2, y2, cu, cl)] += amp_in * ux * uy;
                        }
                    }
                }
            }
        }
    }
    let sys_dim = d * d;
    let mut rho = CMatrix::zeros(sys_dim, sys_dim);
    for r in 0..sys_dim {
        for s in 0..sys_dim {
            let mut acc = c(0.0, 0.0);
            for e in 0..d * d {
                acc += out[r * d * d + e] * out[s * d * d + e].conj();
            }
            rho[(r, s)] = acc;
        }
    }
    Ok(rho)
}

/// Embeds a block state into the `(upper, lower)` Fock space used by
/// [`dilation_oracle`].
pub fn embed_in_fock_space(state: &LossBlockState) -> CMatrix {
    let d = state.n + 1;
    let mut rho = CMatrix::zeros(d * d, d * d);
    for b in &state.blocks {
        let photons = state.n - b.l;
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let r = i * d + (photons - i);
                let s = j * d + (photons - j);
                rho[(r, s)] = b.density[(i, j)];
            }
        }
    }
    rho
}

/// Classical Fisher information of the binomial loss count.
pub fn binomial_loss_fisher(n: usize, eta: f64) -> Result<FisherMatrix> {
    check_eta(eta)?;
    let probs: Vec<f64> = (0..=n).map(|l| binomial(n, l) * eta.powi((n - l) as i32) * (1.0 - eta).powi(l as i32)).collect();
    let dprobs: Vec<f64> = (0..=n).map(|l| probs[l] * loss_score(n, l, eta)).collect();
    crate::estimation::classical_fisher(&probs, &[dprobs], &Tolerances::default())
}

/// Wraps a scalar into a 1×1 quantum Fisher matrix.
pub fn scalar_fisher(v: f64) -> Result<FisherMatrix> {
    FisherMatrix::new(DMatrix::from_element(1, 1, v), FisherKind::Quantum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::povm_fisher;
    use crate::model::derivative_discrepancy;
    use crate::operator::max_abs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn domain_checks() {
        let p = FockProbe::noon(2);
        assert!(matches!(lossy_output(&p, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(lossy_output(&p, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(FockProbe::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn single_photon_sectors() {
        let p = FockProbe::from_real(&[1.0, 1.0]).unwrap();
        let s = lossy_output(&p, 0.4, 0.7).unwrap();
        let t = s.sector_probabilities();
        assert!((t[0] - 0.7).abs() < 1e-12 && (t[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn near_lossless_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = FockProbe::random(&mut rng, 4);
        let s = lossy_output(&p, 0.3, 1.0 - 1e-12).unwrap();
        assert!((s.blocks[0].trace() - 1.0).abs() < 1e-10);
        assert!((s.density().unwrap().purity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_dilation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=5 {
            let p = FockProbe::random(&mut rng, n);
            let s = lossy_output(&p, 0.37, 0.65).unwrap();
            let oracle = dilation_oracle(&p, 0.37, 0.65).unwrap();
            assert!(max_abs(&(embed_in_fock_space(&s) - oracle)) < 1e-10, "N = {n}");
        }
    }

    #[test]
    fn score_structure() {
        assert!((loss_score(5, 0, 0.8) - 5.0 / 0.8).abs() < 1e-15);
        let n = 6;
        let eta: f64 = 0.35;
        let mean: f64 = (0..=n).map(|l| binomial(n, l) * eta.powi((n - l) as i32) * (1.0 - eta).powi(l as i32) * loss_score(n, l, eta)).sum();
        assert!(mean.abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            let m = LossyModel { probe: FockProbe::random(&mut rng, n) };
            assert!(derivative_discrepancy(&m, &[0.2, 0.6], 1e-5).unwrap() < 1e-6);
        }
    }

    #[test]
    fn loss_fisher_routes_agree() {
        assert!((loss_fisher(1, 0.5).unwrap() - 4.0).abs() < 1e-12);
        assert!((loss_fisher(4, 0.9).unwrap() - 4.0 / 0.09).abs() < 1e-9);
        assert!((binomial_loss_fisher(4, 0.9).unwrap().get(0, 0) - 4.0 / 0.09).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let p = FockProbe::random(&mut rng, 4);
            let q = lossy_qfi(&p, 0.1, 0.9, &tol()).unwrap();
            assert!((q.f_eta_eta - 4.0 / 0.09).abs() < 1e-8);
            assert!(q.f_phi_eta.abs() < 1e-10 && q.sld_commutator < 1e-10, "{q:?}");
            assert!(q.block_sld_residual < 1e-10);
        }
    }

    #[test]
    fn block_povm() {
        let povm = loss_block_povm(2).unwrap();
        assert_eq!(povm.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = LossyModel { probe: FockProbe::random(&mut rng, 3) };
        let f = povm_fisher(&m, &[0.0, 0.4], &loss_block_povm(3).unwrap(), &tol()).unwrap();
        assert!((f.get(1, 1) - loss_fisher(3, 0.4).unwrap()).abs() < 1e-8);
        assert!(f.get(0, 0).abs() < 1e-12);
    }

    #[test]
    fn noon_phase_qfi() {
        for n in 1..=6 {
            let eta: f64 = 0.8;
            let q = lossy_phase_qfi(&FockProbe::noon(n), eta).unwrap();
            assert!((q - (n * n) as f64 * eta.powi(n as i32)).abs() < 1e-10);
            let full = lossy_qfi(&FockProbe::noon(n), 0.0, eta, &tol()).unwrap();
            assert!((full.f_phi_phi - q).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_qfi_below_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let n = rng.gen_range(1..=8);
            let eta = rng.gen_range(0.05..0.95);
            let p = FockProbe::random(&mut rng, n);
            assert!(lossy_phase_qfi(&p, eta).unwrap() <= lossy_phase_bound(n, eta) + 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn loss_information_is_probe_independent(seed in any::<u64>(), n in 1usize..=5, eta in 0.05f64..0.95, phi in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let q = lossy_qfi(&FockProbe::random(&mut rng, n), phi, eta, &tol()).unwrap();
                let expected = n as f64 / (eta * (1.0 - eta));
                prop_assert!((q.f_eta_eta - expected).abs() < 1e-8 * expected);
                prop_assert!(q.f_phi_eta.abs() < 1e-10 && q.sld_commutator < 1e-10);
            }

            #[test]
            fn block_state_is_a_state(seed in any::<u64>(), n in 1usize..=6, eta in 0.0f64..=1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = lossy_output(&FockProbe::random(&mut rng, n), 0.3, eta).unwrap();
                let total: f64 = s.sector_probabilities().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
