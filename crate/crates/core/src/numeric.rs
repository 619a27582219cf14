//! Small dense-matrix and finite-difference helpers shared by every module.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &Mat) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn require_square(m: &Mat, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

/// Symmetry check with tolerance relative to the matrix scale.
pub fn require_symmetric(m: &Mat, what: &str) -> Result<()> {
    require_square(m, what)?;
    let asym = asymmetry(m);
    if asym > 1e-10 * (1.0 + m.amax()) {
        return Err(Error::NotSymmetric {
            what: what.to_string(),
            asymmetry: asym,
        });
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    symmetrize(m).symmetric_eigenvalues().max()
}

pub fn require_spd(m: &Mat, what: &str) -> Result<()> {
    require_symmetric(m, what)?;
    let min_eig = min_sym_eigenvalue(m);
    if !(min_eig > 0.0) {
        return Err(Error::NotPositiveDefinite {
            what: what.to_string(),
            min_eig,
        });
    }
    Ok(())
}

pub fn require_psd(m: &Mat, what: &str) -> Result<()> {
    require_symmetric(m, what)?;
    let min_eig = min_sym_eigenvalue(m);
    if min_eig < -1e-12 * (1.0 + m.amax()) {
        return Err(Error::NotPositiveDefinite {
            what: what.to_string(),
            min_eig,
        });
    }
    Ok(())
}

/// Largest real part over the eigenvalues of a square real matrix.
///
/// The shifted QR in nalgebra's Schur decomposition can cycle, so the
/// iteration is capped and retried on orthogonally similar matrices. NaN
/// (never `< 0`) if every attempt cycles.
pub fn spectral_abscissa(a: &Mat) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let abscissa = |m: Mat| {
        Schur::try_new(m, f64::EPSILON, 100 * n.max(10)).map(|s| {
            s.complex_eigenvalues()
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max)
        })
    };
    if let Some(x) = abscissa(a.clone()).or_else(|| abscissa(a.transpose())) {
        return x;
    }
    for k in 1..=4 {
        // Householder reflector off a fixed direction
        let v = Vector::from_fn(n, |i, _| ((i + 1) as f64 * k as f64 * 0.7).sin() + 1.5);
        let h = Mat::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
        if let Some(x) = abscissa(&h * a * &h) {
            return x;
        }
    }
    f64::NAN
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn psd_sqrt(m: &Mat) -> Mat {
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &Mat, what: &str) -> Result<Mat> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: what.to_string(),
            min_eig: min_sym_eigenvalue(m),
        })
}

pub fn unit(n: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = 1.0;
    e
}

/// Central-difference gradient of a scalar field.
pub fn fd_gradient(f: &dyn Fn(&Vector) -> f64, x: &Vector) -> Vector {
    let n = x.len();
    let mut g = Vector::zeros(n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        let xi = x[i];
        xp[i] = xi + h;
        let fp = f(&xp);
        xp[i] = xi - h;
        let fm = f(&xp);
        xp[i] = xi;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian of a vector field (rows = outputs).
pub fn fd_jacobian(f: &dyn Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Mat {
    let n = x.len();
    let m = f(x).len();
    let mut jac = Mat::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let step = h * (1.0 + x[j].abs());
        let xj = x[j];
        xp[j] = xj + step;
        let fp = f(&xp);
        xp[j] = xj - step;
        let fm = f(&xp);
        xp[j] = xj;
        jac.set_column(j, &((fp - fm) / (2.0 * step)));
    }
    jac
}

/// Second-order central-difference Hessian of a scalar field at `x`.
pub fn fd_hessian(f: &dyn Fn(&Vector) -> f64, x: &Vector, h: f64) -> Mat {
    let n = x.len();
    let mut hess = Mat::zeros(n, n);
    let f0 = f(x);
    for i in 0..n {
        let ei = unit(n, i) * h;
        hess[(i, i)] = (f(&(x + &ei)) - 2.0 * f0 + f(&(x - &ei))) / (h * h);
        for j in (i + 1)..n {
            let ej = unit(n, j) * h;
            let v = (f(&(x + &ei + &ej)) - f(&(x + &ei - &ej)) - f(&(x - &ei + &ej))
                + f(&(x - &ei - &ej)))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Relative Frobenius mismatch `‖a - b‖ / max(‖b‖, floor)`.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Row-major copy of a matrix.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::dim("ragged matrix rows"));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abscissa_of_cyclic_permutations() {
        // standard stall cases for shifted QR
        for n in 2..=6 {
            let p = Mat::from_fn(n, n, |i, j| if (i + 1) % n == j { 1.0 } else { 0.0 });
            assert!((spectral_abscissa(&p) - 1.0).abs() < 1e-12, "n = {n}");
            assert!((spectral_abscissa(&(p - Mat::identity(n, n) * 2.0)) + 1.0).abs() < 1e-12);
        }
    }
}
