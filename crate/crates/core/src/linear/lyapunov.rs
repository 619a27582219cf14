use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::{is_hurwitz_with, LinearCoreConfig};
use crate::numeric::{
    require_spd, require_square, require_symmetric, spectral_abscissa, symmetrize, Mat,
};

/// Kronecker systems with a 1-norm condition number above this are flagged.
const ILL_CONDITIONED: f64 = 1e12;

/// Solution of `AᵀP + PA = -Q`.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSolution {
    #[serde(with = "crate::matrix_json")]
    pub p: Mat,
    /// `‖AᵀP + PA + Q‖_F`.
    pub residual_norm: f64,
    /// 1-norm condition number of the vectorized operator.
    pub condition_estimate: f64,
    pub ill_conditioned: bool,
}

/// Solves `A_clᵀ P + P A_cl = -Q` for Hurwitz `A_cl` and symmetric positive
/// definite `Q`.
pub fn solve_lyapunov(a_cl: &Mat, q: &Mat) -> Result<LyapunovSolution> {
    solve_lyapunov_with(a_cl, q, &LinearCoreConfig::default())
}

pub fn solve_lyapunov_with(
    a_cl: &Mat,
    q: &Mat,
    cfg: &LinearCoreConfig,
) -> Result<LyapunovSolution> {
    let n = require_square(a_cl, "A_cl")?;
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::dim(format!("Q must be {n}x{n}")));
    }
    require_spd(q, "Q")?;
    if !is_hurwitz_with(a_cl, cfg.hurwitz_margin)? {
        return Err(Error::NotHurwitz {
            what: "Lyapunov equation has no positive definite solution".into(),
            abscissa: spectral_abscissa(a_cl),
        });
    }
    let sol = lyapunov_kron(a_cl, q)?;
    require_spd(&sol.p, "Lyapunov solution P")?;
    Ok(sol)
}

/// Vectorized dense solve of `AᵀP + PA = -Q` with no definiteness checks.
///
/// Column-major `vec`: `vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P)`.
pub(crate) fn lyapunov_kron(a: &Mat, q: &Mat) -> Result<LyapunovSolution> {
    let n = require_square(a, "A")?;
    require_symmetric(q, "Q")?;
    let nn = n * n;
    let mut op = Mat::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            // (I ⊗ Aᵀ): P[k, j] with coefficient A[k, i]
            for k in 0..n {
                op[(row, k + n * j)] += a[(k, i)];
            }
            // (Aᵀ ⊗ I): P[i, l] with coefficient A[l, j]
            for l in 0..n {
                op[(row, i + n * l)] += a[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(nn, q.iter().map(|v| -v));
    let op_norm1 = column_sum_norm(&op);
    let lu = op.lu();
    let inverse = lu.try_inverse().ok_or_else(|| {
        Error::Singular("Lyapunov operator (A has eigenvalues summing to zero)".into())
    })?;
    let condition_estimate = op_norm1 * column_sum_norm(&inverse);
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov operator".into()))?;
    let p = symmetrize(&Mat::from_column_slice(n, n, x.as_slice()));
    let residual_norm = (a.transpose() * &p + &p * a + q).norm();
    Ok(LyapunovSolution {
        p,
        residual_norm,
        condition_estimate,
        ill_conditioned: condition_estimate > ILL_CONDITIONED,
    })
}

fn column_sum_norm(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, d: &[f64]) -> Mat {
        Mat::from_row_slice(r, c, d)
    }

    #[test]
    fn scalar_and_diagonal() {
        let s = solve_lyapunov(&m(1, 1, &[-1.0]), &m(1, 1, &[2.0])).unwrap();
        assert!((s.p[(0, 0)] - 1.0).abs() < 1e-15);
        let s = solve_lyapunov(&(-Mat::identity(2, 2)), &Mat::identity(2, 2)).unwrap();
        assert!((s.p - Mat::identity(2, 2) * 0.5).norm() < 1e-15);
    }

    /// Independent route: write the 3 unknowns of symmetric P explicitly and
    /// solve by Cramer's rule.
    #[test]
    fn companion_matrix_against_hand_elimination() {
        let a = m(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let s = solve_lyapunov(&a, &Mat::identity(2, 2)).unwrap();
        // Unknowns (p11, p12, p22); equations from AᵀP + PA = -I:
        //  (1,1): -4 p12            = -1
        //  (1,2): p11 - 3 p12 - 2 p22 = 0
        //  (2,2): 2 p12 - 6 p22      = -1
        let p12 = 0.25;
        let p22 = (1.0 + 2.0 * p12) / 6.0;
        let p11 = 3.0 * p12 + 2.0 * p22;
        let expect = m(2, 2, &[p11, p12, p12, p22]);
        assert!((&s.p - expect).norm() < 1e-12);
        assert!(s.residual_norm <= 1e-10);
        assert!(!s.ill_conditioned);
    }

    #[test]
    fn rejects_unstable() {
        let err = solve_lyapunov(&m(1, 1, &[0.5]), &m(1, 1, &[1.0])).unwrap_err();
        assert!(matches!(err, Error::NotHurwitz { .. }));
    }

    #[test]
    fn rejects_indefinite_q() {
        assert!(solve_lyapunov(&m(1, 1, &[-1.0]), &m(1, 1, &[-1.0])).is_err());
    }
}
