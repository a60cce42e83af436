//! Angular-momentum operators in the `|j, m⟩` basis, ordered
//! `m = j, j−1, …, −j` (index 0 is the highest weight).

use crate::operator::{c, eigh_unchecked, CMatrix, CVector};

/// `C(n, k)` as a float; exact for the sizes used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `S_x, S_y, S_z, S_±` for spin `j = two_j / 2`.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub two_j: usize,
    pub x: CMatrix,
    pub y: CMatrix,
    pub z: CMatrix,
    pub plus: CMatrix,
    pub minus: CMatrix,
}

impl SpinOperators {
    pub fn new(two_j: usize) -> Self {
        let d = two_j + 1;
        let j = two_j as f64 / 2.0;
        let m = |k: usize| j - k as f64;
        let mut plus = CMatrix::zeros(d, d);
        for k in 1..d {
            // S₊|j, m⟩ = √(j(j+1) − m(m+1)) |j, m+1⟩
            let mk = m(k);
            plus[(k - 1, k)] = c((j * (j + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
        }
        let minus = plus.adjoint();
        let x = (&plus + &minus).scale(0.5);
        let y = (&plus - &minus) * c(0.0, -0.5);
        let z = CMatrix::from_diagonal(&CVector::from_fn(d, |k, _| c(m(k), 0.0)));
        SpinOperators { two_j, x, y, z, plus, minus }
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_j + 1
    }

    /// Magnetic number at basis index `k`.
    pub fn m(&self, k: usize) -> f64 {
        self.j() - k as f64
    }

    /// `n · S`.
    pub fn along(&self, n: [f64; 3]) -> CMatrix {
        self.x.scale(n[0]) + self.y.scale(n[1]) + self.z.scale(n[2])
    }

    /// Eigenvector of `n · S` with eigenvalue `m`, phase fixed by the
    /// eigensolver convention.
    pub fn eigenstate(&self, n: [f64; 3], two_m: i64) -> CVector {
        let e = eigh_unchecked(&self.along(n));
        // eigenvalues ascending: −j … j
        let idx = (two_m + self.two_j as i64) / 2;
        e.vector(idx as usize)
    }

    /// `|j, m⟩` along `z`.
    pub fn basis_state(&self, k: usize) -> CVector {
        let mut v = CVector::zeros(self.dim());
        v[k] = c(1.0, 0.0);
        v
    }
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn normalize3(a: [f64; 3]) -> [f64; 3] {
    let n = dot3(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}
