//! Dense complex-matrix substrate: Hermitian operators, density matrices,
//! POVMs, Kraus channels and the Hermitian eigensolver everything else
//! builds on.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// `(M + M†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn real_matrix(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
    u * v.adjoint()
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension { expected: m.nrows(), got: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(Error::Validation("empty matrix".into()));
    }
    Ok(())
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite matrix entry".into()))
    }
}

/// A Hermitian matrix. Construction validates Hermiticity (relative to the
/// largest entry) and then stores the exactly Hermitian part.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, Tolerances::default().hermitian)
    }

    pub fn with_tolerance(m: CMatrix, tol: f64) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        let defect = hermiticity_defect(&m);
        if defect > tol * max_abs(&m).max(1.0) {
            return Err(Error::Validation(format!("operator is not Hermitian (defect {defect:.3e})")));
        }
        Ok(HermitianOperator(hermitian_part(&m)))
    }

    /// Symmetrizes without validation. For matrices Hermitian by construction.
    pub fn from_hermitian_part(m: &CMatrix) -> Self {
        HermitianOperator(hermitian_part(m))
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        HermitianOperator(self.0.scale(s))
    }

    /// Expectation value on a (not necessarily normalized) vector.
    pub fn expectation(&self, psi: &CVector) -> f64 {
        psi.dotc(&(&self.0 * psi)).re
    }
}

/// Positive semidefinite, unit-trace Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerances(m, &Tolerances::default())
    }

    pub fn with_tolerances(m: CMatrix, tol: &Tolerances) -> Result<Self> {
        let h = HermitianOperator::with_tolerance(m, tol.hermitian.max(tol.trace))?;
        let tr = trace(h.matrix());
        if (tr.re - 1.0).abs() > tol.trace {
            return Err(Error::Validation(format!("trace {} differs from 1", tr.re)));
        }
        let min_eig = eigh(&h).values[0];
        if min_eig < -tol.psd {
            return Err(Error::Validation(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(DensityMatrix(h.into_matrix()))
    }

    /// `|ψ⟩⟨ψ|` for a vector normalized to 1 within tolerance.
    pub fn from_pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if (n - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!("state norm {n} differs from 1")));
        }
        Ok(DensityMatrix(hermitian_part(&outer(psi, psi))))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityMatrix(CMatrix::identity(dim, dim).scale(1.0 / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator(self.0.clone())
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.0, &self.0).re
    }
}

/// A measurement: positive operators summing to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianOperator>) -> Result<Self> {
        Self::with_tolerances(elements, &Tolerances::default())
    }

    pub fn with_tolerances(elements: Vec<HermitianOperator>, tol: &Tolerances) -> Result<Self> {
        let dim = elements
            .first()
            .ok_or_else(|| Error::Validation("POVM has no elements".into()))?
            .dim();
        let mut total = CMatrix::zeros(dim, dim);
        for e in &elements {
            if e.dim() != dim {
                return Err(Error::Dimension { expected: dim, got: e.dim() });
            }
            let min_eig = eigh(e).values[0];
            if min_eig < -tol.psd {
                return Err(Error::Validation(format!("POVM element has eigenvalue {min_eig:.3e}")));
            }
            total += e.matrix();
        }
        let defect = max_abs(&(total - CMatrix::identity(dim, dim)));
        if defect > tol.trace {
            return Err(Error::Validation(format!("POVM elements do not sum to identity ({defect:.3e})")));
        }
        Ok(Povm { elements })
    }

    /// Rank-one projectors onto the columns of a unitary.
    pub fn from_basis(u: &CMatrix) -> Result<Self> {
        let elements = (0..u.ncols())
            .map(|k| {
                let v = u.column(k).into_owned();
                HermitianOperator::from_hermitian_part(&outer(&v, &v))
            })
            .collect();
        Povm::new(elements)
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// A completely positive trace-preserving map in Kraus form.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    kraus_ops: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(kraus_ops: Vec<CMatrix>) -> Result<Self> {
        let first = kraus_ops
            .first()
            .ok_or_else(|| Error::Validation("channel has no Kraus operators".into()))?;
        let (dout, din) = first.shape();
        let mut total = CMatrix::zeros(din, din);
        for k in &kraus_ops {
            if k.shape() != (dout, din) {
                return Err(Error::Dimension { expected: din, got: k.ncols() });
            }
            total += k.adjoint() * k;
        }
        let defect = max_abs(&(total - CMatrix::identity(din, din)));
        if defect > Tolerances::default().trace {
            return Err(Error::Validation(format!("Kraus operators are not trace preserving ({defect:.3e})")));
        }
        Ok(KrausChannel { kraus_ops })
    }

    pub fn identity(dim: usize) -> Self {
        KrausChannel { kraus_ops: vec![CMatrix::identity(dim, dim)] }
    }

    /// Single-qubit dephasing: `K0 = √((1+η)/2)·1`, `K1 = √((1−η)/2)·σ_z`.
    pub fn dephasing(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain(format!("dephasing eta = {eta} not in [0, 1]")));
        }
        let k0 = CMatrix::identity(2, 2).scale(((1.0 + eta) / 2.0).sqrt());
        let k1 = pauli_z().scale(((1.0 - eta) / 2.0).sqrt());
        KrausChannel::new(vec![k0, k1])
    }

    pub fn input_dim(&self) -> usize {
        self.kraus_ops[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.kraus_ops[0].nrows()
    }

    pub fn kraus_ops(&self) -> &[CMatrix] {
        &self.kraus_ops
    }

    /// `Σ K ρ K†` on a raw matrix.
    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.output_dim(), self.output_dim());
        for k in &self.kraus_ops {
            out += k * rho * k.adjoint();
        }
        out
    }
}

pub fn apply_channel(channel: &KrausChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if channel.input_dim() != rho.dim() {
        return Err(Error::Dimension { expected: channel.input_dim(), got: rho.dim() });
    }
    Ok(DensityMatrix(hermitian_part(&channel.apply_matrix(rho.matrix()))))
}

/// Eigendecomposition of a Hermitian operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigh {
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal columns; each has its largest-magnitude component real
    /// and positive.
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn reconstruct(&self) -> CMatrix {
        let d = real_matrix(&DMatrix::from_diagonal(&self.values));
        &self.vectors * d * self.vectors.adjoint()
    }

    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }
}

pub fn eigh(op: &HermitianOperator) -> Eigh {
    eigh_unchecked(op.matrix())
}

/// Validating entry point for raw matrices.
pub fn eigh_matrix(m: &CMatrix) -> Result<Eigh> {
    let h = HermitianOperator::new(m.clone())?;
    Ok(eigh(&h))
}

pub(crate) fn eigh_unchecked(m: &CMatrix) -> Eigh {
    let n = m.nrows();
    let se = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| se.eigenvalues[k]));
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let v = se.eigenvectors.column(k);
        let mut pivot = 0;
        let mut best = -1.0;
        for (i, z) in v.iter().enumerate() {
            // ties resolved towards the lowest index
            if z.norm() > best + 1e-12 {
                best = z.norm();
                pivot = i;
            }
        }
        let phase = if best > 0.0 { v[pivot].conj() / best } else { C64::new(1.0, 0.0) };
        vectors.set_column(col, &(v * phase));
    }
    Eigh { values, vectors }
}

/// `exp(i t H)` via the eigendecomposition of `H`.
pub fn expm_i(h: &CMatrix, t: f64) -> CMatrix {
    let e = eigh_unchecked(h);
    let phases = DVector::from_iterator(e.values.len(), e.values.iter().map(|&l| (I * (t * l)).exp()));
    &e.vectors * CMatrix::from_diagonal(&phases) * e.vectors.adjoint()
}

/// Function of a Hermitian matrix applied to its spectrum.
pub fn hermitian_function(h: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let e = eigh_unchecked(h);
    let d = DVector::from_iterator(e.values.len(), e.values.iter().map(|&l| C64::new(f(l), 0.0)));
    &e.vectors * CMatrix::from_diagonal(&d) * e.vectors.adjoint()
}

/// Sum of singular values of a real matrix, from the eigenvalues of
/// `AᵀA`.
pub fn trace_norm_real(a: &DMatrix<f64>) -> f64 {
    let ata = a.transpose() * a;
    SymmetricEigen::new(ata).eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum()
}

/// Tensor product of a list of operators.
pub fn kron_all(ops: &[CMatrix]) -> CMatrix {
    ops.iter()
        .skip(1)
        .fold(ops[0].clone(), |acc, m| kron(&acc, m))
}
