//! Parametric families of states and the finite-difference oracle used to
//! check their analytic derivatives.

use rand::Rng;

use crate::error::{Error, Result};
use crate::operator::{
    c, commutator, expm_i, hermitian_part, max_abs, trace, CMatrix, DensityMatrix, HermitianOperator, C64, I,
};

/// A map `φ ↦ ρ_φ` together with its partial derivatives.
pub trait ParametricModel: Sync {
    fn param_count(&self) -> usize;

    fn eval(&self, phi: &[f64]) -> Result<DensityMatrix>;

    /// `∂_i ρ_φ` for `i = 0..p`. Hermitian and traceless.
    fn derivs(&self, phi: &[f64]) -> Result<Vec<HermitianOperator>>;
}

/// Central differences `(ρ(φ + h e_i) − ρ(φ − h e_i)) / 2h`, symmetrized to
/// exact Hermiticity.
pub fn finite_diff_derivs<F>(eval: F, phi: &[f64], step: f64) -> Result<Vec<HermitianOperator>>
where
    F: Fn(&[f64]) -> Result<CMatrix>,
{
    if step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Validation(format!("finite-difference step {step} must be positive")));
    }
    let mut out = Vec::with_capacity(phi.len());
    let mut point = phi.to_vec();
    for i in 0..phi.len() {
        point[i] = phi[i] + step;
        let plus = eval(&point)?;
        point[i] = phi[i] - step;
        let minus = eval(&point)?;
        point[i] = phi[i];
        let d = (plus - minus).scale(0.5 / step);
        if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical(format!("non-finite finite difference in direction {i}")));
        }
        out.push(HermitianOperator::from_hermitian_part(&d));
    }
    Ok(out)
}

/// Largest max-abs gap between a model's analytic derivatives and central
/// differences of its `eval`.
pub fn derivative_discrepancy(model: &dyn ParametricModel, phi: &[f64], step: f64) -> Result<f64> {
    let analytic = model.derivs(phi)?;
    let numeric = finite_diff_derivs(|x| model.eval(x).map(DensityMatrix::into_matrix), phi, step)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| max_abs(&(a.matrix() - n.matrix())))
        .fold(0.0, f64::max))
}

/// Model from a pair of closures. Handy for one-off families.
pub struct FnModel<E, D> {
    params: usize,
    eval: E,
    derivs: D,
}

impl<E, D> FnModel<E, D>
where
    E: Fn(&[f64]) -> Result<DensityMatrix> + Sync,
    D: Fn(&[f64]) -> Result<Vec<HermitianOperator>> + Sync,
{
    pub fn new(params: usize, eval: E, derivs: D) -> Self {
        FnModel { params, eval, derivs }
    }
}

impl<E, D> ParametricModel for FnModel<E, D>
where
    E: Fn(&[f64]) -> Result<DensityMatrix> + Sync,
    D: Fn(&[f64]) -> Result<Vec<HermitianOperator>> + Sync,
{
    fn param_count(&self) -> usize {
        self.params
    }

    fn eval(&self, phi: &[f64]) -> Result<DensityMatrix> {
        (self.eval)(phi)
    }

    fn derivs(&self, phi: &[f64]) -> Result<Vec<HermitianOperator>> {
        (self.derivs)(phi)
    }
}

fn random_complex_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

/// Random Hermitian matrix with entries uniform in the unit box.
pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    hermitian_part(&random_complex_matrix(rng, n, 1.0))
}

/// `ρ(φ) = A A† / Tr(A A†)` with `A = A₀ + Σ φ_i A_i`. Generic and full rank
/// near `φ = 0` when `A₀` is well conditioned.
#[derive(Debug, Clone)]
pub struct RandomFullRankModel {
    base: CMatrix,
    directions: Vec<CMatrix>,
}

impl RandomFullRankModel {
    pub fn sample(rng: &mut impl Rng, dim: usize, params: usize) -> Self {
        let base = CMatrix::identity(dim, dim) + random_complex_matrix(rng, dim, 0.4);
        let directions = (0..params).map(|_| random_complex_matrix(rng, dim, 0.5)).collect();
        RandomFullRankModel { base, directions }
    }

    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    fn amplitude(&self, phi: &[f64]) -> CMatrix {
        let mut a = self.base.clone();
        for (d, &x) in self.directions.iter().zip(phi) {
            a += d.scale(x);
        }
        a
    }
}

impl ParametricModel for RandomFullRankModel {
    fn param_count(&self) -> usize {
        self.directions.len()
    }

    fn eval(&self, phi: &[f64]) -> Result<DensityMatrix> {
        let a = self.amplitude(phi);
        let m = &a * a.adjoint();
        let t = trace(&m).re;
        DensityMatrix::new(hermitian_part(&m.unscale(t)))
    }

    fn derivs(&self, phi: &[f64]) -> Result<Vec<HermitianOperator>> {
        let a = self.amplitude(phi);
        let m = &a * a.adjoint();
        let t = trace(&m).re;
        let rho = m.unscale(t);
        Ok(self
            .directions
            .iter()
            .map(|d| {
                let dm = d * a.adjoint() + &a * d.adjoint();
                let dt = trace(&dm).re;
                HermitianOperator::from_hermitian_part(&((dm - rho.scale(dt)).unscale(t)))
            })
            .collect())
    }
}

/// `ρ(φ, η) = e^{iφH} W diag(p(η)) W† e^{−iφH}` with `p(η)` a softmax of
/// affine functions of `η`: the second parameter only moves eigenvalues,
/// the first only rotates eigenvectors. Parameter order `(φ, η)`.
#[derive(Debug, Clone)]
pub struct ClassicalMixingModel {
    generator: CMatrix,
    basis: CMatrix,
    offsets: Vec<f64>,
    slopes: Vec<f64>,
}

impl ClassicalMixingModel {
    pub fn sample(rng: &mut impl Rng, dim: usize) -> Self {
        let generator = random_hermitian(rng, dim);
        let basis = expm_i(&random_hermitian(rng, dim), 1.0);
        let offsets = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let slopes = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        ClassicalMixingModel { generator, basis, offsets, slopes }
    }

    fn weights(&self, eta: f64) -> (Vec<f64>, Vec<f64>) {
        let logits: Vec<f64> = self.offsets.iter().zip(&self.slopes).map(|(a, b)| a + b * eta).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|x| x / z).collect();
        let mean_slope: f64 = p.iter().zip(&self.slopes).map(|(p, b)| p * b).sum();
        let dp = p.iter().zip(&self.slopes).map(|(p, b)| p * (b - mean_slope)).collect();
        (p, dp)
    }

    fn rotated(&self, phi: f64, diag: &[f64]) -> CMatrix {
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(diag.len(), diag.iter().map(|&x| c(x, 0.))));
        let u = expm_i(&self.generator, phi) * &self.basis;
        &u * d * u.adjoint()
    }
}

impl ParametricModel for ClassicalMixingModel {
    fn param_count(&self) -> usize {
        2
    }

    fn eval(&self, phi: &[f64]) -> Result<DensityMatrix> {
        let (p, _) = self.weights(phi[1]);
        DensityMatrix::new(hermitian_part(&self.rotated(phi[0], &p)))
    }

    fn derivs(&self, phi: &[f64]) -> Result<Vec<HermitianOperator>> {
        let (p, dp) = self.weights(phi[1]);
        let rho = self.rotated(phi[0], &p);
        let dphi = commutator(&self.generator, &rho) * I;
        let deta = self.rotated(phi[0], &dp);
        Ok(vec![HermitianOperator::from_hermitian_part(&dphi), HermitianOperator::from_hermitian_part(&deta)])
    }
}

/// Pure states `e^{i Σ φ_k H_k} |ψ⟩` of a fixed probe under a joint
/// exponential of Hermitian generators.
#[derive(Debug, Clone)]
pub struct PureUnitaryModel {
    pub generators: Vec<CMatrix>,
    pub probe: crate::operator::CVector,
}

impl PureUnitaryModel {
    fn total(&self, phi: &[f64]) -> CMatrix {
        let n = self.probe.len();
        self.generators.iter().zip(phi).fold(CMatrix::zeros(n, n), |acc, (h, &x)| acc + h.scale(x))
    }

    fn state_at(&self, phi: &[f64]) -> crate::operator::CVector {
        expm_i(&self.total(phi), 1.0) * &self.probe
    }

    /// The output state and its exact partial derivatives.
    pub fn state_derivatives(&self, phi: &[f64]) -> (crate::operator::CVector, Vec<crate::operator::CVector>) {
        // d/dφ_k e^{iA} = ∫₀¹ e^{isA} (i H_k) e^{i(1−s)A} ds, evaluated in
        // the eigenbasis of A with divided differences.
        let a = self.total(phi);
        let e = crate::operator::eigh_unchecked(&a);
        let n = a.nrows();
        let phases: Vec<C64> = e.values.iter().map(|&l| (I * l).exp()).collect();
        let u = &e.vectors * CMatrix::from_diagonal(&nalgebra::DVector::from_vec(phases.clone())) * e.vectors.adjoint();
        let psi = &u * &self.probe;
        let probe_b = e.vectors.adjoint() * &self.probe;
        let dpsis = self
            .generators
            .iter()
            .map(|h| {
                let hb = e.vectors.adjoint() * h * &e.vectors;
                let k = CMatrix::from_fn(n, n, |r, s| {
                    let (lr, ls) = (e.values[r], e.values[s]);
                    let f = if (lr - ls).abs() < 1e-12 { I * phases[r] } else { (phases[r] - phases[s]) / c(lr - ls, 0.0) };
                    hb[(r, s)] * f
                });
                &e.vectors * (k * &probe_b)
            })
            .collect();
        (psi, dpsis)
    }
}

impl ParametricModel for PureUnitaryModel {
    fn param_count(&self) -> usize {
        self.generators.len()
    }

    fn eval(&self, phi: &[f64]) -> Result<DensityMatrix> {
        DensityMatrix::from_pure(&self.state_at(phi))
    }

    fn derivs(&self, phi: &[f64]) -> Result<Vec<HermitianOperator>> {
        let (psi, dpsis) = self.state_derivatives(phi);
        Ok(dpsis
            .iter()
            .map(|dpsi| HermitianOperator::from_hermitian_part(&(dpsi * psi.adjoint() + &psi * dpsi.adjoint())))
            .collect())
    }
}
