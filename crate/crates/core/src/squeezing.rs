//! Spin-squeezed probes for the dephasing model.
//!
//! Both families start from the coherent state `|+⟩^⊗N`, polarized along
//! `x` so that a phase about `z` moves it. The squeezing acts in the
//! transverse `y`–`z` plane.

use crate::dephasing::SymmetricProbe;
use crate::error::{Error, Result};
use crate::operator::{expm_i, CMatrix, CVector};
use crate::spin::SpinOperators;

fn coherent_x(s: &SpinOperators) -> CVector {
    let p = SymmetricProbe::product_plus(s.two_j);
    p.to_vector()
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Validation(format!("squeezing needs at least 2 qubits, got {n}")));
    }
    if n > crate::dephasing::MAX_QUBITS {
        return Err(Error::Validation(format!("at most {} qubits supported, got {n}", crate::dephasing::MAX_QUBITS)));
    }
    Ok(())
}

/// `e^{θ(J₊² − J₋²)}|+⟩^⊗N` with `J_± = J_y ± iJ_z`, the ladder
/// operators about the polarization axis `x`. Since
/// `J₊² − J₋² = 2i(J_yJ_z + J_zJ_y)` the evolution is unitary.
pub fn two_axis_squeezed(n: usize, theta: f64) -> Result<SymmetricProbe> {
    check_n(n)?;
    let s = SpinOperators::new(n);
    let g = two_axis_generator(&s);
    SymmetricProbe::normalized((expm_i(&g, theta) * coherent_x(&s)).iter().cloned().collect())
}

/// `2(J_yJ_z + J_zJ_y)`.
pub fn two_axis_generator(s: &SpinOperators) -> CMatrix {
    (&s.y * &s.z + &s.z * &s.y).scale(2.0)
}

/// Corrective rotation `¼ arctan[4 sinθ cos^{N−2}θ / (1 − cos^{N−2}2θ)]`,
/// continued by its limit `0` at `θ = 0`.
pub fn one_axis_rotation(n: usize, theta: f64) -> f64 {
    let p = n as i32 - 2;
    let num = 4.0 * theta.sin() * theta.cos().powi(p);
    let den = 1.0 - (2.0 * theta).cos().powi(p);
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        0.25 * num.atan2(den)
    }
}

/// `e^{−iψJ_x} e^{−iθJ_z²}|+⟩^⊗N` with `ψ` from [`one_axis_rotation`].
pub fn one_axis_squeezed(n: usize, theta: f64) -> Result<SymmetricProbe> {
    check_n(n)?;
    let s = SpinOperators::new(n);
    let twist = expm_i(&(&s.z * &s.z), -theta);
    let turn = expm_i(&s.x, -one_axis_rotation(n, theta));
    SymmetricProbe::normalized((turn * twist * coherent_x(&s)).iter().cloned().collect())
}

/// `⟨ψ|J_x|ψ⟩`, the mean spin length along the polarization axis.
pub fn mean_spin_x(probe: &SymmetricProbe) -> f64 {
    let s = SpinOperators::new(probe.qubits());
    let v = probe.to_vector();
    (v.adjoint() * &s.x * &v)[(0, 0)].re
}

/// Spin variance along `n` for a symmetric probe.
pub fn spin_variance(probe: &SymmetricProbe, n: [f64; 3]) -> f64 {
    let s = SpinOperators::new(probe.qubits());
    let v = probe.to_vector();
    let a = s.along(n);
    let m = (v.adjoint() * &a * &v)[(0, 0)].re;
    (v.adjoint() * &a * &a * &v)[(0, 0)].re - m * m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_squeezing_is_coherent() {
        for n in 2..=8 {
            let plus = SymmetricProbe::product_plus(n);
            for p in [two_axis_squeezed(n, 0.0).unwrap(), one_axis_squeezed(n, 0.0).unwrap()] {
                let overlap = (p.to_vector().adjoint() * plus.to_vector())[(0, 0)].norm();
                assert!((overlap - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalized_and_parity_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let n = rng.gen_range(2..=12);
            let theta = rng.gen_range(-1.0..1.0);
            let t = two_axis_squeezed(n, theta).unwrap();
            let o = one_axis_squeezed(n, theta).unwrap();
            assert!((t.to_vector().norm() - 1.0).abs() < 1e-12 && (o.to_vector().norm() - 1.0).abs() < 1e-12);
            if n % 2 == 0 {
                assert!(t.is_parity_symmetric(), "N = {n}");
            }
        }
    }

    #[test]
    fn two_axis_small_angle_series() {
        // ⟨J_x⟩(θ) = j − ½θ²⟨[G,[G,J_x]]⟩ + O(θ⁴)
        let n = 6;
        let j = 3.0;
        let h = 1e-3;
        let f = |t: f64| mean_spin_x(&two_axis_squeezed(n, t).unwrap());
        assert!((f(0.0) - j).abs() < 1e-12);
        let curvature = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        assert!(curvature < 0.0);
        // ⟨J_x⟩(θ) − j scales as θ²
        let r = (f(2e-3) - j) / (f(1e-3) - j);
        assert!((r - 4.0).abs() < 1e-2, "{r}");
        let s = SpinOperators::new(n);
        let g = two_axis_generator(&s);
        // J₊² − J₋² built from the ladder operators themselves
        let (jp, jm) = (&s.y + &s.z * crate::operator::I, &s.y - &s.z * crate::operator::I);
        let literal = &jp * &jp - &jm * &jm;
        assert!(crate::operator::max_abs(&(literal - &g * crate::operator::I)) < 1e-12);
        let v = SymmetricProbe::product_plus(n).to_vector();
        let comm = |a: &CMatrix, b: &CMatrix| a * b - b * a;
        let dd = comm(&g, &comm(&g, &s.x));
        let coeff = -0.5 * (v.adjoint() * dd * &v)[(0, 0)].re;
        assert!((curvature / 2.0 - coeff).abs() < 1e-4 * coeff.abs().max(1.0), "{curvature} vs {coeff}");
    }

    #[test]
    fn rotation_angle_limits() {
        assert_eq!(one_axis_rotation(6, 0.0), 0.0);
        assert!(one_axis_rotation(6, 1e-4) > 0.0);
        // N = 2: denominator vanishes identically
        assert!((one_axis_rotation(2, 0.3) - std::f64::consts::FRAC_PI_8).abs() < 1e-15);
    }

    #[test]
    fn two_axis_reduces_a_transverse_variance() {
        let p = two_axis_squeezed(10, 0.05).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let vars: Vec<f64> = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, r, r], [0.0, -r, r]].iter().map(|&n| spin_variance(&p, n)).collect();
        let coherent = 10.0 / 4.0;
        assert!(vars.iter().cloned().fold(f64::INFINITY, f64::min) < coherent - 0.1);
        assert!(vars.iter().cloned().fold(0.0, f64::max) > coherent + 0.1);
    }
}
