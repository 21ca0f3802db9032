//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Relative eigenvalue floor below which a PSD matrix counts as singular.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// Raised when a symmetric matrix has an eigenvalue below `EIGEN_FLOOR · λ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singular {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `M^power` for symmetric positive definite `M`.
pub fn spd_power(m: &DMatrix<f64>, power: f64) -> Result<DMatrix<f64>, Singular> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min < EIGEN_FLOOR * max {
        return Err(Singular { min_eigenvalue: min, max_eigenvalue: max });
    }
    let scaled = eig.eigenvalues.map(|l| l.powf(power));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&scaled) * v.transpose())
}

/// Operator norm of a symmetric matrix (largest |eigenvalue|).
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    eig.eigenvalues.iter().fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// Operator norm (largest singular value) of a general square matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Well-conditioned random element of GL_n: `U diag(e^{s_k}) V` with
/// `s_k` uniform in `[-spread, spread]`.
pub fn random_gl<R: Rng + ?Sized>(n: usize, spread: f64, rng: &mut R) -> DMatrix<f64> {
    let u = random_orthogonal(n, rng);
    let v = random_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.random_range(-spread..=spread).exp()
    }));
    u * d * v
}

/// `|det m|^{-1/n} · m`, so that the result has determinant ±1.
pub fn normalize_det(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let det = m.clone().lu().determinant();
    m * det.abs().powf(-1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn inverse_square_root_roundtrip() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let r = spd_power(&a, -0.5).unwrap();
        let back = &r * &a * &r;
        assert!((back - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_power(&a, -0.5).is_err());
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let q = random_orthogonal(6, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(6, 6)).norm() < 1e-12);
        let g = normalize_det(&random_gl(6, 1.0, &mut rng));
        assert!((g.lu().determinant().abs() - 1.0).abs() < 1e-12);
    }
}
