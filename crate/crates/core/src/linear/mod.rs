//! Linear-algebraic foundation: stability tests, Lyapunov and Riccati
//! solvers, LQ gains and the three-inequality uniting check.

mod care;
mod lmi;
mod lyapunov;

pub use care::{care_residual, lqr_gain, solve_care, solve_care_with, RiccatiCertificate};
pub use lmi::{check_lmi_triple, search_lmi_triple, LmiReport, LmiSearchHit};
pub(crate) use lyapunov::lyapunov_kron;
pub use lyapunov::{solve_lyapunov, solve_lyapunov_with, LyapunovSolution};

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{psd_sqrt, require_psd, require_spd, require_square, spectral_abscissa, Mat};

/// Tolerances for the linear solvers (`"linear_core"` block of a run config).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearCoreConfig {
    /// Riccati residual target, relative to `1 + ‖Q‖_F`.
    pub care_tol: f64,
    /// No certificate is issued above this relative residual.
    pub care_bound: f64,
    pub max_newton_iter: usize,
    /// Eigenvalues must satisfy `Re λ < -hurwitz_margin`.
    pub hurwitz_margin: f64,
}

impl Default for LinearCoreConfig {
    fn default() -> Self {
        Self {
            care_tol: 1e-10,
            care_bound: 1e-8,
            max_newton_iter: 60,
            hurwitz_margin: 1e-9,
        }
    }
}

/// First-order approximation `(A, B)` of a control system.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Mat,
    b: Mat,
}

impl LinearSystem {
    /// Builds the pair and rejects it unless it is stabilizable.
    pub fn new(a: Mat, b: Mat) -> Result<Self> {
        let sys = Self::unchecked(a, b)?;
        if let Some((re, im)) = uncontrollable_unstable_mode(&sys.a, &sys.b) {
            return Err(Error::NotStabilizable { re, im });
        }
        Ok(sys)
    }

    /// Dimension checks only. Used for linearizations of arbitrary plants,
    /// which need not be stabilizable.
    pub fn unchecked(a: Mat, b: Mat) -> Result<Self> {
        let n = require_square(&a, "A")?;
        if b.nrows() != n || b.ncols() == 0 || n == 0 {
            return Err(Error::dim(format!(
                "A is {n}x{n} but B is {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn is_stabilizable(&self) -> bool {
        uncontrollable_unstable_mode(&self.a, &self.b).is_none()
    }

    /// `A + B K`.
    pub fn closed_loop(&self, k: &Mat) -> Result<Mat> {
        if k.nrows() != self.p() || k.ncols() != self.n() {
            return Err(Error::dim(format!(
                "gain must be {}x{}, got {}x{}",
                self.p(),
                self.n(),
                k.nrows(),
                k.ncols()
            )));
        }
        Ok(&self.a + &self.b * k)
    }
}

/// Weights `(Q, R)` of a quadratic cost.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticWeights {
    pub q: Mat,
    pub r: Mat,
}

impl QuadraticWeights {
    /// `Q` symmetric PSD, `R` symmetric PD.
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        require_psd(&q, "Q")?;
        require_spd(&r, "R")?;
        Ok(Self { q, r })
    }

    /// Stricter variant for inverse-optimal reconstruction, where `Q` must be PD.
    pub fn definite(q: Mat, r: Mat) -> Result<Self> {
        require_spd(&q, "Q")?;
        Self::new(q, r)
    }

    pub fn identity(n: usize, p: usize) -> Self {
        Self {
            q: Mat::identity(n, n),
            r: Mat::identity(p, p),
        }
    }
}

/// `true` iff every eigenvalue of `a` has real part below `-margin`.
pub fn is_hurwitz_with(a: &Mat, margin: f64) -> Result<bool> {
    require_square(a, "A")?;
    Ok(spectral_abscissa(a) < -margin)
}

pub fn is_hurwitz(a: &Mat) -> Result<bool> {
    is_hurwitz_with(a, LinearCoreConfig::default().hurwitz_margin)
}

/// Numerical rank of a complex matrix from its singular values.
fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let scale = sv.iter().copied().fold(0.0_f64, f64::max);
    let thresh = 1e-10 * scale.max(1e-300);
    sv.iter().filter(|&&s| s > thresh).count()
}

/// Hautus test on `[A - λI, B]` at every eigenvalue with `Re λ ≥ 0`.
/// Returns the first mode failing the rank condition.
pub(crate) fn uncontrollable_unstable_mode(a: &Mat, b: &Mat) -> Option<(f64, f64)> {
    let n = a.nrows();
    let p = b.ncols();
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < 0.0 {
            continue;
        }
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n + p);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(a[(i, j)], 0.0);
            }
            m[(i, i)] -= *lambda;
            for j in 0..p {
                m[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        if complex_rank(&m) < n {
            return Some((lambda.re, lambda.im));
        }
    }
    None
}

/// Dual Hautus test for `(Q^{1/2}, A)`: returns an undetectable mode if any.
pub fn undetectable_mode(a: &Mat, q: &Mat) -> Option<(f64, f64)> {
    let c = psd_sqrt(q);
    uncontrollable_unstable_mode(&a.transpose(), &c.transpose())
}
