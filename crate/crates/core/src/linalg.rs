//! Small dense complex linear algebra used by the beamformer updates.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub type C64 = num_complex::Complex64;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// `a^H b`.
#[inline]
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

#[inline]
pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Adds `weight * v v^H` to `m`.
pub fn add_outer(m: &mut CMatrix, v: &CVector, weight: f64) {
    let n = v.len();
    for j in 0..n {
        let vj = v[j].conj() * weight;
        for i in 0..n {
            m[(i, j)] += v[i] * vj;
        }
    }
}

/// Solves `A X = B` for Hermitian positive-definite `A` via Cholesky.
/// Returns `None` if `A` is not numerically positive definite.
pub fn hpd_solve(a: &CMatrix, rhs: &[CVector]) -> Option<Vec<CVector>> {
    let chol = Cholesky::new(a.clone())?;
    Some(rhs.iter().map(|b| chol.solve(b)).collect())
}

/// Eigen-decomposition of a Hermitian matrix, `A = V diag(lambda) V^H`.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(a: &CMatrix) -> Self {
        let eig = SymmetricEigen::new(a.clone());
        HermitianEigen {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    /// Coordinates of `b` in the eigenbasis, `V^H b`.
    pub fn project(&self, b: &CVector) -> CVector {
        self.vectors.ad_mul(b)
    }

    /// `(A + shift I)^+ b` restricted to eigenvalues above `floor`.
    pub fn shifted_solve(&self, b: &CVector, shift: f64, floor: f64) -> CVector {
        let y = self.project(b);
        let scaled = CVector::from_iterator(
            y.len(),
            y.iter().zip(&self.values).map(|(yi, &l)| {
                let d = l + shift;
                if d > floor {
                    *yi / d
                } else {
                    C64::new(0.0, 0.0)
                }
            }),
        );
        &self.vectors * scaled
    }
}
