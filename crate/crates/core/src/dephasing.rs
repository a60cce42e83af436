//! `N` qubits carrying a common phase `φ` (generator `J_z`) and each
//! dephased independently with coherence factor `η`.
//!
//! A permutation-symmetric probe stays permutation invariant, so the
//! output decomposes as `⊕_j ρ_j ⊗ 1_{d_j}` over total spin `j` with
//! multiplicity `d_j`. Each `ρ_j` is read off on one fixed multiplicity
//! representative: the symmetric state of the first `2j` qubits followed
//! by `(N − 2j)/2` singlet pairs. Only qubit flips that leave every pair
//! with exactly one `σ_z` survive the projection back onto the symmetric
//! probe, which turns the channel action into Krawtchouk sums.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{sld_raw, FisherKind, FisherMatrix};
use crate::model::ParametricModel;
use crate::operator::{c, max_abs, trace, trace_product, CMatrix, CVector, DensityMatrix, HermitianOperator, C64, I};
use crate::spin::binomial;
use crate::tolerance::Tolerances;

/// Largest `N` for which the integer Krawtchouk sums stay exact.
pub const MAX_QUBITS: usize = 120;

/// `Σ_k α_k |N/2, N/2 − k⟩`: amplitude `k` sits on the Dicke state with
/// `k` qubits in `|1⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricProbe {
    n: usize,
    alpha: Vec<C64>,
    parity_symmetric: bool,
}

impl SymmetricProbe {
    pub fn new(alpha: Vec<C64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Validation("probe needs at least one amplitude".into()));
        }
        let n = alpha.len() - 1;
        if n > MAX_QUBITS {
            return Err(Error::Validation(format!("at most {MAX_QUBITS} qubits supported, got {n}")));
        }
        let norm: f64 = alpha.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!("probe norm² is {norm}")));
        }
        let parity_symmetric = (0..=n).all(|k| (alpha[k] - alpha[n - k]).norm() <= 1e-12);
        Ok(SymmetricProbe { n, alpha, parity_symmetric })
    }

    /// Normalizes before validating.
    pub fn normalized(alpha: Vec<C64>) -> Result<Self> {
        let norm = alpha.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Validation("probe has no weight".into()));
        }
        SymmetricProbe::new(alpha.into_iter().map(|a| a / norm).collect())
    }

    pub fn from_real(amplitudes: &[f64]) -> Result<Self> {
        SymmetricProbe::normalized(amplitudes.iter().map(|&a| c(a, 0.0)).collect())
    }

    /// Parity-symmetric probe from its first `⌊N/2⌋ + 1` amplitudes.
    pub fn from_half(half: &[f64], n: usize) -> Result<Self> {
        if half.len() != n / 2 + 1 {
            return Err(Error::Dimension { expected: n / 2 + 1, got: half.len() });
        }
        let full: Vec<f64> = (0..=n).map(|k| half[k.min(n - k)]).collect();
        SymmetricProbe::from_real(&full)
    }

    /// `|+⟩^⊗N`.
    pub fn product_plus(n: usize) -> Self {
        let a: Vec<f64> = (0..=n).map(|k| binomial(n, k).sqrt()).collect();
        SymmetricProbe::from_real(&a).expect("nonzero")
    }

    /// `(|0…0⟩ + |1…1⟩)/√2`.
    pub fn ghz(n: usize) -> Self {
        let mut a = vec![0.0; n + 1];
        a[0] = 1.0;
        a[n] = 1.0;
        SymmetricProbe::from_real(&a).expect("nonzero")
    }

    pub fn random(rng: &mut impl Rng, n: usize) -> Self {
        let a = (0..=n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        SymmetricProbe::normalized(a).expect("nonzero")
    }

    /// Random real parity-symmetric probe.
    pub fn random_parity_symmetric(rng: &mut impl Rng, n: usize) -> Self {
        let half: Vec<f64> = (0..=n / 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SymmetricProbe::from_half(&half, n).expect("nonzero")
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.alpha
    }

    pub fn is_parity_symmetric(&self) -> bool {
        self.parity_symmetric
    }

    pub fn to_vector(&self) -> CVector {
        CVector::from_column_slice(&self.alpha)
    }
}

/// `ρ_j` for one total spin, with its `φ` and `η` derivatives.
#[derive(Debug, Clone)]
pub struct SymmetricBlock {
    pub two_j: usize,
    pub multiplicity: f64,
    /// Basis `|j, m⟩`, `m = j, …, −j`.
    pub density: CMatrix,
    pub d_phi: CMatrix,
    pub d_eta: CMatrix,
}

impl SymmetricBlock {
    pub fn dim(&self) -> usize {
        self.two_j + 1
    }

    /// `d_j Tr ρ_j`.
    pub fn weight(&self) -> f64 {
        self.multiplicity * trace(&self.density).re
    }
}

#[derive(Debug, Clone)]
pub struct SymmetricBlockState {
    pub n: usize,
    pub eta: f64,
    pub phi: f64,
    /// Ordered by decreasing `j`.
    pub blocks: Vec<SymmetricBlock>,
}

/// Number of copies of spin `j` among `N` qubits.
pub fn spin_multiplicity(n: usize, two_j: usize) -> f64 {
    let k = (n - two_j) / 2;
    if k == 0 {
        1.0
    } else {
        binomial(n, k) - binomial(n, k - 1)
    }
}

fn binomial_exact(n: usize, k: usize) -> i128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}

/// `K_e(s; n) = Σ_i (−1)^i C(s, i) C(n − s, e − i)`, summed in integers.
pub fn krawtchouk(n: usize, e: usize, s: usize) -> f64 {
    let mut acc: i128 = 0;
    for i in 0..=e.min(s) {
        let term = binomial_exact(s, i) * binomial_exact(n - s, e - i);
        if i % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc as f64
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Domain(format!("coherence factor must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

fn pow_derivative(base: f64, dbase: f64, exp: usize) -> f64 {
    if exp == 0 {
        0.0
    } else {
        exp as f64 * base.powi(exp as i32 - 1) * dbase
    }
}

/// Probe-independent tables for one qubit count: for every block the
/// matrix `Q[e, s] = 2^{pairs/2} K_e(s; 2j) / √(C(2j, e) C(N, e + pairs))`
/// and the counts `C(2j, s)`.
#[derive(Debug, Clone)]
pub struct SymmetricChannel {
    n: usize,
    tables: Vec<(usize, DMatrix<f64>, Vec<f64>)>,
}

impl SymmetricChannel {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Validation(format!("qubit count must lie in 1..={MAX_QUBITS}, got {n}")));
        }
        let mut tables = Vec::new();
        let mut two_j = n;
        loop {
            let pairs = (n - two_j) / 2;
            let q = DMatrix::from_fn(two_j + 1, two_j + 1, |e, s| {
                2f64.powf(pairs as f64 / 2.0) * krawtchouk(two_j, e, s) / (binomial(two_j, e) * binomial(n, e + pairs)).sqrt()
            });
            let counts = (0..=two_j).map(|s| binomial(two_j, s)).collect();
            tables.push((two_j, q, counts));
            if two_j < 2 {
                break;
            }
            two_j -= 2;
        }
        Ok(SymmetricChannel { n, tables })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    /// Output of phase encoding plus local dephasing.
    pub fn apply(&self, probe: &SymmetricProbe, eta: f64, phi: f64) -> Result<SymmetricBlockState> {
        check_eta(eta)?;
        let n = self.n;
        if probe.n != n {
            return Err(Error::Dimension { expected: n + 1, got: probe.n + 1 });
        }
        let a = (1.0 - eta * eta) / 2.0;
        let b = (1.0 + eta) / 2.0;
        let cc = (1.0 - eta) / 2.0;
        let blocks = self
            .tables
            .iter()
            .map(|(two_j, q, counts)| {
                let two_j = *two_j;
                let pairs = (n - two_j) / 2;
                let dim = two_j + 1;
                let j = two_j as f64 / 2.0;
                // columns v_s = diag(α e^{−iφm}) Q[:, s]
                let v = CMatrix::from_fn(dim, dim, |e, s| probe.alpha[e + pairs] * (-I * (phi * (j - e as f64))).exp() * q[(e, s)]);
                let pa = a.powi(pairs as i32);
                let (w, dw): (Vec<f64>, Vec<f64>) = (0..dim)
                    .map(|s| {
                        let (pb, pc) = (b.powi((two_j - s) as i32), cc.powi(s as i32));
                        let w = counts[s] * pa * pb * pc;
                        let dw = counts[s]
                            * (pow_derivative(a, -eta, pairs) * pb * pc
                                + pa * pow_derivative(b, 0.5, two_j - s) * pc
                                + pa * pb * pow_derivative(cc, -0.5, s));
                        (w, dw)
                    })
                    .unzip();
                let weighted = |w: &[f64]| {
                    let mut vw = v.clone();
                    for (s, ws) in w.iter().enumerate() {
                        vw.column_mut(s).scale_mut(*ws);
                    }
                    &vw * v.adjoint()
                };
                let density = weighted(&w);
                let d_eta = weighted(&dw);
                let d_phi = CMatrix::from_fn(dim, dim, |r, s| -I * ((s as f64 - r as f64) * density[(r, s)]));
                SymmetricBlock { two_j, multiplicity: spin_multiplicity(n, two_j), density, d_phi, d_eta }
            })
            .collect();
        Ok(SymmetricBlockState { n, eta, phi, blocks })
    }
}

impl SymmetricChannel {
    /// QFI matrix at `φ = 0` for real amplitudes, using one real
    /// eigendecomposition per block. `∂_φρ_j = −i[J_z, ρ_j]` is imaginary
    /// while `ρ_j` and `∂_ηρ_j` are real, so the off-diagonal entry
    /// vanishes identically and is not computed.
    pub fn real_qfi(&self, amplitudes: &[f64], eta: f64, tol: &Tolerances) -> Result<[f64; 2]> {
        check_eta(eta)?;
        let n = self.n;
        if amplitudes.len() != n + 1 {
            return Err(Error::Dimension { expected: n + 1, got: amplitudes.len() });
        }
        let a = (1.0 - eta * eta) / 2.0;
        let b = (1.0 + eta) / 2.0;
        let cc = (1.0 - eta) / 2.0;
        let mut f = [0.0; 2];
        for (two_j, q, counts) in &self.tables {
            let two_j = *two_j;
            let pairs = (n - two_j) / 2;
            let dim = two_j + 1;
            let v = DMatrix::from_fn(dim, dim, |e, s| amplitudes[e + pairs] * q[(e, s)]);
            let pa = a.powi(pairs as i32);
            let mut vw = v.clone();
            let mut vdw = v.clone();
            for s in 0..dim {
                let (pb, pc) = (b.powi((two_j - s) as i32), cc.powi(s as i32));
                vw.column_mut(s).scale_mut(counts[s] * pa * pb * pc);
                vdw.column_mut(s).scale_mut(
                    counts[s]
                        * (pow_derivative(a, -eta, pairs) * pb * pc + pa * pow_derivative(b, 0.5, two_j - s) * pc + pa * pb * pow_derivative(cc, -0.5, s)),
                );
            }
            let rho = &vw * v.transpose();
            let d_eta = &vdw * v.transpose();
            let e = nalgebra::SymmetricEigen::new(rho);
            let p = &e.eigenvalues;
            let u = &e.eigenvectors;
            let pmax = p.iter().cloned().fold(0.0, f64::max);
            if pmax <= 0.0 {
                continue;
            }
            let cutoff = tol.floor * pmax;
            let j = two_j as f64 / 2.0;
            let jz = DMatrix::from_fn(dim, dim, |r, s| if r == s { j - r as f64 } else { 0.0 });
            let z = u.transpose() * jz * u;
            let de = u.transpose() * d_eta * u;
            let mult = spin_multiplicity(n, two_j);
            let mut leak: f64 = 0.0;
            for m in 0..dim {
                for k in 0..dim {
                    let (pm, pk) = (p[m].max(0.0), p[k].max(0.0));
                    let sum = pm + pk;
                    let dphi = (pk - pm) * z[(m, k)];
                    if sum > cutoff {
                        f[0] += mult * 2.0 * dphi * dphi / sum;
                        f[1] += mult * 2.0 * de[(m, k)] * de[(m, k)] / sum;
                    } else {
                        leak = leak.max(de[(m, k)].abs()).max(dphi.abs());
                    }
                }
            }
            if leak > tol.support_leak {
                return Err(Error::UnsaturableDirection { leak });
            }
        }
        Ok(f)
    }
}

/// Output of phase encoding plus local dephasing on a symmetric probe.
pub fn dephase_symmetric(probe: &SymmetricProbe, eta: f64, phi: f64) -> Result<SymmetricBlockState> {
    SymmetricChannel::new(probe.n)?.apply(probe, eta, phi)
}

impl SymmetricBlockState {
    pub fn total_trace(&self) -> f64 {
        self.blocks.iter().map(SymmetricBlock::weight).sum()
    }

    fn compress(&self, pick: impl Fn(&SymmetricBlock) -> &CMatrix) -> CMatrix {
        let d: usize = self.blocks.iter().map(SymmetricBlock::dim).sum();
        let mut m = CMatrix::zeros(d, d);
        let mut o = 0;
        for b in &self.blocks {
            m.view_mut((o, o), (b.dim(), b.dim())).copy_from(&pick(b).scale(b.multiplicity));
            o += b.dim();
        }
        m
    }

    /// `⊕_j d_j ρ_j`: drops the multiplicity spaces, keeps every
    /// eigenvalue weight, and has the same Fisher information.
    pub fn compressed(&self) -> CMatrix {
        self.compress(|b| &b.density)
    }

    pub fn compressed_derivatives(&self) -> [CMatrix; 2] {
        [self.compress(|b| &b.d_phi), self.compress(|b| &b.d_eta)]
    }

    pub fn block(&self, two_j: usize) -> Option<&SymmetricBlock> {
        self.blocks.iter().find(|b| b.two_j == two_j)
    }
}

/// `(φ, η)` family on the compressed block state of a fixed probe.
#[derive(Debug, Clone)]
pub struct DephasingModel {
    pub probe: SymmetricProbe,
}

impl ParametricModel for DephasingModel {
    fn param_count(&self) -> usize {
        2
    }

    fn eval(&self, p: &[f64]) -> Result<DensityMatrix> {
        DensityMatrix::new(dephase_symmetric(&self.probe, p[1], p[0])?.compressed())
    }

    fn derivs(&self, p: &[f64]) -> Result<Vec<HermitianOperator>> {
        let s = dephase_symmetric(&self.probe, p[1], p[0])?;
        Ok(s.compressed_derivatives().iter().map(HermitianOperator::from_hermitian_part).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DephasingQfi {
    pub fisher: Vec<Vec<f64>>,
    /// `|Tr(ρ L_φ L_η)|`, real and imaginary parts together.
    pub compatibility_residual: f64,
}

impl DephasingQfi {
    pub fn f_phi(&self) -> f64 {
        self.fisher[0][0]
    }

    pub fn f_eta(&self) -> f64 {
        self.fisher[1][1]
    }

    pub fn matrix(&self) -> Result<FisherMatrix> {
        FisherMatrix::new(DMatrix::from_fn(2, 2, |i, j| self.fisher[i][j]), FisherKind::Quantum)
    }
}

/// QFI matrix summed block by block, `Σ_j d_j Tr(ρ_j L_a L_b)`.
pub fn block_qfi(state: &SymmetricBlockState, tol: &Tolerances) -> Result<DephasingQfi> {
    let mut gram = [[C64::new(0.0, 0.0); 2]; 2];
    for b in &state.blocks {
        if b.weight() <= 0.0 {
            continue;
        }
        let derivs = [HermitianOperator::from_hermitian_part(&b.d_phi), HermitianOperator::from_hermitian_part(&b.d_eta)];
        let (l, _) = sld_raw(&b.density, &derivs, tol)?;
        for i in 0..2 {
            let rl = &b.density * l[i].matrix();
            for j in 0..2 {
                gram[i][j] += trace_product(&rl, l[j].matrix()) * b.multiplicity;
            }
        }
    }
    Ok(DephasingQfi {
        fisher: (0..2).map(|i| (0..2).map(|j| gram[i][j].re).collect()).collect(),
        compatibility_residual: gram[0][1].norm(),
    })
}

pub fn dephasing_qfi(probe: &SymmetricProbe, eta: f64, phi: f64, tol: &Tolerances) -> Result<DephasingQfi> {
    block_qfi(&dephase_symmetric(probe, eta, phi)?, tol)
}

/// One total-spin block split by the eigenvalue of `σ_x^⊗N`.
#[derive(Debug, Clone)]
pub struct ParityBlock {
    pub two_j: usize,
    /// `+1` eigenspace of `σ_x^⊗N`.
    pub even: CMatrix,
    pub odd: CMatrix,
    /// Largest matrix element between the two sectors.
    pub cross_parity: f64,
}

/// Orthonormal basis of the `±1` sectors of `σ_x^⊗N` inside the spin-`j`
/// block. On the multiplicity representative `σ_x^⊗N` acts as
/// `(−1)^pairs |j, m⟩ ↦ |j, −m⟩`. Columns are basis vectors.
pub fn parity_basis(n: usize, two_j: usize) -> (CMatrix, CMatrix) {
    let dim = two_j + 1;
    // flip eigenvalue times (−1)^pairs
    let sign = if ((n - two_j) / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for e in 0..dim {
        let f = two_j - e;
        if e < f {
            let mut sym = CVector::zeros(dim);
            sym[e] = c(r, 0.0);
            sym[f] = c(r, 0.0);
            let mut anti = sym.clone();
            anti[f] = c(-r, 0.0);
            plus.push(sym);
            minus.push(anti);
        } else if e == f {
            let v = CVector::from_fn(dim, |k, _| if k == e { c(1.0, 0.0) } else { c(0.0, 0.0) });
            plus.push(v);
        }
    }
    let (even, odd) = if sign > 0.0 { (plus, minus) } else { (minus, plus) };
    let stack = |v: Vec<CVector>| if v.is_empty() { CMatrix::zeros(dim, 0) } else { CMatrix::from_columns(&v) };
    (stack(even), stack(odd))
}

/// Splits every block into parity sectors. The encoded phase is undone
/// first, since `J_z` anticommutes with the flip.
pub fn parity_blocks(probe: &SymmetricProbe, state: &SymmetricBlockState) -> Result<Vec<ParityBlock>> {
    if !probe.parity_symmetric {
        return Err(Error::Validation("probe is not invariant under flipping all qubits".into()));
    }
    Ok(state
        .blocks
        .iter()
        .map(|b| {
            let j = b.two_j as f64 / 2.0;
            let rho = CMatrix::from_fn(b.dim(), b.dim(), |r, s| {
                b.density[(r, s)] * (I * (state.phi * ((j - r as f64) - (j - s as f64)))).exp()
            });
            let (pe, po) = parity_basis(state.n, b.two_j);
            let cross = if pe.ncols() == 0 || po.ncols() == 0 { 0.0 } else { max_abs(&(pe.adjoint() * &rho * &po)) };
            ParityBlock { two_j: b.two_j, even: pe.adjoint() * &rho * &pe, odd: po.adjoint() * &rho * &po, cross_parity: cross }
        })
        .collect())
}

/// Full `2^N` density matrix: embed the probe, rotate by `e^{−iφJ_z}`
/// and damp every coherence by `η` per differing qubit. Qubit 0 is the
/// most significant bit; `|0⟩` has `m = +½`.
pub fn brute_force_dephasing(probe: &SymmetricProbe, eta: f64, phi: f64) -> Result<CMatrix> {
    check_eta(eta)?;
    let n = probe.n;
    if n > 12 {
        return Err(Error::Validation(format!("brute force limited to 12 qubits, got {n}")));
    }
    let d = 1usize << n;
    let psi = CVector::from_fn(d, |x, _| {
        let k = x.count_ones() as usize;
        let m = n as f64 / 2.0 - k as f64;
        probe.alpha[k] / binomial(n, k).sqrt() * (-I * (phi * m)).exp()
    });
    Ok(CMatrix::from_fn(d, d, |x, y| psi[x] * psi[y].conj() * eta.powi((x ^ y).count_ones() as i32)))
}

/// `|j, m⟩` on the first `2j` qubits followed by singlet pairs, as a
/// `2^N` vector.
pub fn multiplicity_representative(n: usize, two_j: usize, e: usize) -> CVector {
    let pairs = (n - two_j) / 2;
    let mut v = CVector::zeros(1 << n);
    let head_norm = binomial(two_j, e).sqrt();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for head in 0usize..(1 << two_j) {
        if head.count_ones() as usize != e {
            continue;
        }
        for choice in 0usize..(1 << pairs) {
            // pair p in |01⟩ (bit clear) or |10⟩ (bit set, sign −)
            let mut x = head;
            let mut amp = 1.0 / head_norm;
            for p in 0..pairs {
                let bits = if choice >> p & 1 == 0 { 0b01 } else { 0b10 };
                x = (x << 2) | bits;
                amp *= if bits == 0b01 { r } else { -r };
            }
            v[x] = c(amp, 0.0);
        }
    }
    v
}

/// Reads `ρ_j` off a full `2^N` matrix on the multiplicity representative.
pub fn extract_block(full: &CMatrix, n: usize, two_j: usize) -> CMatrix {
    let basis: Vec<CVector> = (0..=two_j).map(|e| multiplicity_representative(n, two_j, e)).collect();
    let b = CMatrix::from_columns(&basis);
    b.adjoint() * full * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derivative_discrepancy;
    use crate::operator::{eigh_unchecked, outer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn multiplicities_count_dimension() {
        for n in 1..=12 {
            let total: f64 = (0..=n).rev().step_by(2).map(|tj| spin_multiplicity(n, tj) * (tj + 1) as f64).sum();
            assert_eq!(total, 2f64.powi(n as i32));
        }
    }

    #[test]
    fn krawtchouk_values() {
        assert_eq!(krawtchouk(1, 1, 1), -1.0);
        assert_eq!(krawtchouk(4, 2, 1), 0.0);
        assert_eq!(krawtchouk(4, 0, 3), 1.0);
        // orthogonality Σ_s C(n,s) K_e(s) K_f(s) = 2^n C(n,e) δ_ef
        let n = 6;
        for e in 0..=n {
            for f in 0..=n {
                let sum: f64 = (0..=n).map(|s| binomial(n, s) * krawtchouk(n, e, s) * krawtchouk(n, f, s)).sum();
                let expect = if e == f { 64.0 * binomial(n, e) } else { 0.0 };
                assert_eq!(sum, expect);
            }
        }
    }

    #[test]
    fn single_qubit_plus() {
        let eta = 0.7;
        let phi = 0.4;
        let s = dephase_symmetric(&SymmetricProbe::product_plus(1), eta, phi).unwrap();
        let r = &s.blocks[0].density;
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((r[(0, 1)] - c(0.5 * eta * phi.cos(), -0.5 * eta * phi.sin())).norm() < 1e-15);
    }

    #[test]
    fn identity_channel_keeps_symmetric_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = SymmetricProbe::random(&mut rng, 5);
        let s = dephase_symmetric(&p, 1.0, 0.0).unwrap();
        assert!((s.blocks[0].weight() - 1.0).abs() < 1e-12);
        assert!(max_abs(&(&s.blocks[0].density - outer(&p.to_vector(), &p.to_vector()))) < 1e-12);
        assert!(s.blocks[1..].iter().all(|b| max_abs(&b.density) == 0.0));
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=10 {
            let p = SymmetricProbe::random(&mut rng, n);
            let (eta, phi) = (rng.gen_range(0.0..1.0), rng.gen_range(-3.0..3.0));
            let s = dephase_symmetric(&p, eta, phi).unwrap();
            assert!((s.total_trace() - 1.0).abs() < 1e-10);
            let full = brute_force_dephasing(&p, eta, phi).unwrap();
            for b in &s.blocks {
                assert!(max_abs(&(extract_block(&full, n, b.two_j) - &b.density)) < 1e-9, "N = {n}, 2j = {}", b.two_j);
            }
        }
    }

    #[test]
    fn spectrum_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3, 4, 6] {
            let p = SymmetricProbe::random(&mut rng, n);
            let s = dephase_symmetric(&p, 0.6, 0.3).unwrap();
            let mut blocks: Vec<f64> = Vec::new();
            for b in &s.blocks {
                let e = eigh_unchecked(&b.density);
                for _ in 0..b.multiplicity as usize {
                    blocks.extend(e.values.iter());
                }
            }
            let mut full: Vec<f64> = eigh_unchecked(&brute_force_dephasing(&p, 0.6, 0.3).unwrap()).values.iter().cloned().collect();
            blocks.sort_by(f64::total_cmp);
            full.sort_by(f64::total_cmp);
            assert_eq!(blocks.len(), full.len());
            assert!(blocks.iter().zip(&full).all(|(a, b)| (a - b).abs() < 1e-10));
        }
    }

    #[test]
    fn blocks_are_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = SymmetricProbe::random(&mut rng, 40);
        let s = dephase_symmetric(&p, 0.9, 0.2).unwrap();
        assert!((s.total_trace() - 1.0).abs() < 1e-10);
        for b in &s.blocks {
            let min = eigh_unchecked(&b.density).values.min();
            assert!(min > -1e-12 * b.density.norm().max(1e-300), "2j = {}: {min}", b.two_j);
        }
    }

    #[test]
    fn exact_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=6 {
            let m = DephasingModel { probe: SymmetricProbe::random(&mut rng, n) };
            assert!(derivative_discrepancy(&m, &[0.3, 0.55], 1e-5).unwrap() < 1e-6);
        }
    }

    #[test]
    fn single_qubit_qfi() {
        for eta in [0.3, 0.6, 0.9] {
            for phi in [0.0, 1.1] {
                let q = dephasing_qfi(&SymmetricProbe::product_plus(1), eta, phi, &tol()).unwrap();
                assert!((q.f_phi() - eta * eta).abs() < 1e-8);
                assert!((q.f_eta() - 1.0 / (1.0 - eta * eta)).abs() < 1e-8);
                assert!(q.fisher[0][1].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn block_qfi_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = SymmetricProbe::random(&mut rng, 4);
        let q = dephasing_qfi(&p, 0.8, 0.2, &tol()).unwrap();
        let dense = crate::estimation::model_qfi(&DephasingModel { probe: p }, &[0.2, 0.8], &tol()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((q.fisher[i][j] - dense.get(i, j)).abs() < 1e-8 * (1.0 + dense.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn real_path_matches_general() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [1, 2, 5, 8, 13] {
            let ch = SymmetricChannel::new(n).unwrap();
            let amps: Vec<f64> = (0..=n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let p = SymmetricProbe::from_real(&amps).unwrap();
            let eta = rng.gen_range(0.2..0.95);
            let general = block_qfi(&ch.apply(&p, eta, 0.0).unwrap(), &tol()).unwrap();
            let real: Vec<f64> = p.amplitudes().iter().map(|a| a.re).collect();
            let fast = ch.real_qfi(&real, eta, &tol()).unwrap();
            for i in 0..2 {
                assert!((fast[i] - general.fisher[i][i]).abs() < 1e-9 * general.fisher[i][i].max(1.0), "N = {n}");
            }
        }
    }

    #[test]
    fn parity_sectors() {
        let (e, o) = parity_basis(2, 2);
        assert_eq!((e.ncols(), o.ncols()), (2, 1));
        let (e, o) = parity_basis(2, 0);
        assert_eq!((e.ncols(), o.ncols()), (0, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(parity_blocks(&SymmetricProbe::random(&mut rng, 3), &dephase_symmetric(&SymmetricProbe::random(&mut rng, 3), 0.5, 0.0).unwrap()).is_err());
        for n in 1..=8 {
            let p = SymmetricProbe::random_parity_symmetric(&mut rng, n);
            let s = dephase_symmetric(&p, rng.gen_range(0.1..0.99), rng.gen_range(-3.0..3.0)).unwrap();
            for b in parity_blocks(&p, &s).unwrap() {
                assert!(b.cross_parity < 1e-10);
            }
            let q = block_qfi(&s, &tol()).unwrap();
            assert!(q.compatibility_residual < 1e-10, "N = {n}: {}", q.compatibility_residual);
        }
    }

    #[test]
    fn parity_operator_oracle() {
        // σ_x^⊗N on the representative vectors agrees with the sector split
        for (n, two_j) in [(2, 2), (3, 1), (4, 2), (4, 0), (5, 3)] {
            let d = 1usize << n;
            let flip = CMatrix::from_fn(d, d, |x, y| if x == (d - 1) ^ y { c(1.0, 0.0) } else { c(0.0, 0.0) });
            let basis = CMatrix::from_columns(&(0..=two_j).map(|e| multiplicity_representative(n, two_j, e)).collect::<Vec<_>>());
            let local = basis.adjoint() * flip * &basis;
            let (pe, po) = parity_basis(n, two_j);
            assert!(max_abs(&(&local * &pe - &pe)) < 1e-12);
            assert!(max_abs(&(&local * &po + &po)) < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn blocks_are_unit_trace(seed in any::<u64>(), n in 1usize..=10, eta in 0.0f64..=1.0, phi in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = dephase_symmetric(&SymmetricProbe::random(&mut rng, n), eta, phi).unwrap();
                prop_assert!((s.total_trace() - 1.0).abs() < 1e-10);
                for b in &s.blocks {
                    prop_assert!(eigh_unchecked(&b.density).values.min() > -1e-10);
                }
            }

            #[test]
            fn parity_symmetric_probes_are_compatible(seed in any::<u64>(), n in 1usize..=8, eta in 0.1f64..0.95, phi in -3.0f64..3.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let q = dephasing_qfi(&SymmetricProbe::random_parity_symmetric(&mut rng, n), eta, phi, &tol()).unwrap();
                prop_assert!(q.compatibility_residual < 1e-10);
            }
        }
    }
}
