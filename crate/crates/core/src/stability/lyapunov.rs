//! Quadratic Lyapunov functions for the linear fast subsystem.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::linalg::{max_real_eigenvalue, symmetric_eigen_sorted};

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovCertificate {
    pub p: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// `max |P A + A^T P + R|`.
    pub residual: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Largest real part in the spectrum of `A`.
    pub max_real_eig: f64,
}

impl LyapunovCertificate {
    /// `W(z) = z^T P z`.
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(&self.p * z))
    }

    /// Time derivative of `W` along `z' = A z`, which equals `-z^T R z`.
    pub fn derivative(&self, z: &DVector<f64>) -> f64 {
        -z.dot(&(&self.r * z))
    }
}

/// Solves `P A + A^T P = -R` through the Kronecker-vectorized system.
pub fn solve_lyapunov(a: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<LyapunovCertificate> {
    let n = a.nrows();
    if a.ncols() != n || r.shape() != (n, n) {
        return Err(Error::Parameter("Lyapunov equation needs square matrices of equal size".into()));
    }
    if n == 0 {
        return Ok(LyapunovCertificate {
            p: DMatrix::zeros(0, 0),
            r: r.clone(),
            residual: 0.0,
            lambda_min: f64::INFINITY,
            lambda_max: 0.0,
            max_real_eig: f64::NEG_INFINITY,
        });
    }
    let max_real_eig = max_real_eigenvalue(a);
    if max_real_eig >= 0.0 {
        return Err(Error::NotUnichain(format!(
            "fast-coordinate matrix is not Hurwitz (max real eigenvalue {max_real_eig:.3e})"
        )));
    }
    // vec(P A) = (A^T kron I) vec P, vec(A^T P) = (I kron A^T) vec P
    let at = a.transpose();
    let id = DMatrix::<f64>::identity(n, n);
    let k = at.kronecker(&id) + id.kronecker(&at);
    let rhs = DVector::from_iterator(n * n, r.iter().map(|v| -v));
    let vec_p = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov system".into()))?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;
    let residual = (&p * a + &at * &p + r).amax();
    let (eig, _) = symmetric_eigen_sorted(&p);
    Ok(LyapunovCertificate {
        lambda_min: eig[0],
        lambda_max: eig[n - 1],
        p,
        r: r.clone(),
        residual,
        max_real_eig,
    })
}

/// Lyapunov certificate for the boundary-layer matrix of a decomposition;
/// `R` defaults to the identity.
pub fn solve_boundary_layer_lyapunov(decomp: &Decomposition, r: Option<&DMatrix<f64>>) -> Result<LyapunovCertificate> {
    let n = decomp.z_len;
    let id = DMatrix::identity(n, n);
    solve_lyapunov(&decomp.q_bar_z, r.unwrap_or(&id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_case_has_closed_form() {
        let a = DMatrix::from_element(1, 1, -4.0);
        let cert = solve_lyapunov(&a, &DMatrix::identity(1, 1)).unwrap();
        assert!((cert.p[(0, 0)] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn random_hurwitz_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let shift = max_real_eigenvalue(&m) + 0.5;
            let a = m - DMatrix::identity(6, 6) * shift;
            let cert = solve_lyapunov(&a, &DMatrix::identity(6, 6)).unwrap();
            assert!(cert.residual <= 1e-10);
            assert!(cert.lambda_min > 0.0);
        }
    }

    #[test]
    fn unstable_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, -1.0]);
        assert!(matches!(
            solve_lyapunov(&a, &DMatrix::identity(2, 2)),
            Err(Error::NotUnichain(_))
        ));
    }
}
