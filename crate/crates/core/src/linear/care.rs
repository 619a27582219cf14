//! Continuous algebraic Riccati equation by Kleinman–Newton iteration.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::{
    is_hurwitz_with, lyapunov_kron, uncontrollable_unstable_mode, undetectable_mode,
    LinearCoreConfig, LinearSystem, QuadraticWeights,
};
use crate::numeric::{require_spd, spd_inverse, spectral_abscissa, symmetrize, Mat};

/// Stabilizing solution `P` of `PA + AᵀP − PBR⁻¹BᵀP + Q = 0` with its
/// residual and closed-loop stability margin.
#[derive(Debug, Clone, Serialize)]
pub struct RiccatiCertificate {
    #[serde(with = "crate::matrix_json")]
    pub p: Mat,
    pub residual_norm: f64,
    pub closed_loop_spectral_abscissa: f64,
    pub newton_iterations: usize,
}

/// `PA + AᵀP − PBR⁻¹BᵀP + Q`.
pub fn care_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<Mat> {
    let r_inv = spd_inverse(r, "R")?;
    Ok(p * a + a.transpose() * p - p * b * r_inv * b.transpose() * p + q)
}

pub fn solve_care(sys: &LinearSystem, w: &QuadraticWeights) -> Result<RiccatiCertificate> {
    solve_care_with(sys, w, &LinearCoreConfig::default())
}

pub fn solve_care_with(
    sys: &LinearSystem,
    w: &QuadraticWeights,
    cfg: &LinearCoreConfig,
) -> Result<RiccatiCertificate> {
    let (n, p) = (sys.n(), sys.p());
    if w.q.nrows() != n || w.q.ncols() != n || w.r.nrows() != p || w.r.ncols() != p {
        return Err(Error::dim(format!(
            "weights must be Q {n}x{n} and R {p}x{p}"
        )));
    }
    if let Some((re, im)) = uncontrollable_unstable_mode(sys.a(), sys.b()) {
        return Err(Error::NotStabilizable { re, im });
    }
    if let Some((re, im)) = undetectable_mode(sys.a(), &w.q) {
        return Err(Error::NotDetectable { re, im });
    }
    let r_inv = spd_inverse(&w.r, "R")?;
    let newton = Newton {
        b: sys.b(),
        q: &w.q,
        r: &w.r,
        r_inv: &r_inv,
        cfg,
    };

    let k0 = initial_gain(sys, &newton)?;
    let (pm, iterations) = newton.run(sys.a(), k0)?;

    let residual_norm = care_residual(sys.a(), sys.b(), &w.q, &w.r, &pm)?.norm();
    // ill-conditioned pairs (huge P) can stall above the bound at the
    // rounding floor of the residual itself
    if residual_norm > cfg.care_bound * (1.0 + w.q.norm()) {
        return Err(Error::NoConvergence {
            what: "Riccati solution within the certificate bound".into(),
            iterations,
            residual: residual_norm,
        });
    }
    let k = -&r_inv * sys.b().transpose() * &pm;
    let abscissa = spectral_abscissa(&(sys.a() + sys.b() * &k));
    require_spd(&pm, "Riccati solution P")?;
    if abscissa >= -cfg.hurwitz_margin {
        return Err(Error::NotHurwitz {
            what: "Riccati closed loop A - BR⁻¹BᵀP".into(),
            abscissa,
        });
    }
    Ok(RiccatiCertificate {
        p: pm,
        residual_norm,
        closed_loop_spectral_abscissa: abscissa,
        newton_iterations: iterations,
    })
}

/// `K = −R⁻¹BᵀP`.
pub fn lqr_gain(cert: &RiccatiCertificate, sys: &LinearSystem, r: &Mat) -> Result<Mat> {
    if cert.p.nrows() != sys.n() || r.nrows() != sys.p() || r.ncols() != sys.p() {
        return Err(Error::dim("certificate, system and R disagree"));
    }
    let r_inv = spd_inverse(r, "R")?;
    Ok(-r_inv * sys.b().transpose() * &cert.p)
}

struct Newton<'a> {
    b: &'a Mat,
    q: &'a Mat,
    r: &'a Mat,
    r_inv: &'a Mat,
    cfg: &'a LinearCoreConfig,
}

impl Newton<'_> {
    fn residual_matrix(&self, a: &Mat, p: &Mat) -> Mat {
        symmetrize(
            &(p * a + a.transpose() * p - p * self.b * self.r_inv * self.b.transpose() * p
                + self.q),
        )
    }

    /// Size of the rounding error in `Res(P)`: perturbing `P` by one ulp per
    /// entry moves the residual by about `ε‖P‖(‖A‖ + ‖GP‖)`.
    fn floor(&self, a: &Mat, g: &Mat, p: &Mat) -> f64 {
        let n = a.nrows() as f64;
        n * f64::EPSILON * (p.norm() * (2.0 * a.norm() + (g * p).norm()) + self.q.norm())
    }

    /// Newton iteration from a stabilizing `k`. The first iterate solves
    /// `(A+BK)ᵀP + P(A+BK) = −(Q + KᵀRK)`; later ones solve for the
    /// correction, `(A−GP)ᵀΔ + Δ(A−GP) = −Res(P)`, so the error of an
    /// ill-conditioned solve scales with the residual rather than with `P`.
    fn run(&self, a: &Mat, k: Mat) -> Result<(Mat, usize)> {
        let scale = 1.0 + self.q.norm();
        let target = self.cfg.care_tol * scale;
        let g = self.b * self.r_inv * self.b.transpose();
        let a_cl = a + self.b * &k;
        let mut p = lyapunov_kron(&a_cl, &symmetrize(&(self.q + k.transpose() * self.r * &k)))?.p;
        let mut best = (p.clone(), f64::INFINITY);
        let mut last = f64::INFINITY;
        let mut converged_at = None;
        // steps left once the residual is pure rounding noise; the best
        // iterate among them is kept
        let mut noise_steps: Option<usize> = None;
        for it in 1..=self.cfg.max_newton_iter {
            let res_m = self.residual_matrix(a, &p);
            let res = res_m.norm();
            if !res.is_finite() {
                break;
            }
            if res < best.1 {
                best = (p.clone(), res);
            }
            match (converged_at, noise_steps) {
                // one step past the target lands at the roundoff floor
                (Some(_), _) | (_, Some(0)) => return Ok((best.0, it)),
                (None, Some(left)) => noise_steps = Some(left - 1),
                _ if res <= target => converged_at = Some(it),
                _ if res > 0.5 * last && res <= 100.0 * target => return Ok((best.0, it)),
                _ if res > 0.5 * last && res <= 10.0 * self.floor(a, &g, &p) => {
                    noise_steps = Some(8)
                }
                _ => {}
            }
            last = res;
            let delta = lyapunov_kron(&(a - &g * &p), &res_m)?.p;
            p = symmetrize(&(p + delta));
        }
        if converged_at.is_some() || noise_steps.is_some() {
            return Ok((best.0, self.cfg.max_newton_iter));
        }
        Err(Error::NoConvergence {
            what: "Kleinman–Newton Riccati iteration".into(),
            iterations: self.cfg.max_newton_iter,
            residual: best.1.min(self.residual_matrix(a, &p).norm()),
        })
    }
}

/// A gain `K₀` with `A + BK₀` Hurwitz.
///
/// First choice is the gain of the sign-function solution, which is close
/// to optimal so Newton only polishes it. Otherwise zero when `A` is already Hurwitz; otherwise Bass's shifted-Gramian gain,
/// and if that fails (uncontrollable stable modes make the Gramian
/// singular) a shift continuation: solve the Riccati equation for
/// `A − tI` starting at a shift where `K = 0` stabilizes, then walk `t`
/// down to zero reusing each stabilizing solution as the next initial gain.
fn initial_gain(sys: &LinearSystem, newton: &Newton<'_>) -> Result<Mat> {
    let (a, b) = (sys.a(), sys.b());
    let n = sys.n();
    let margin = newton.cfg.hurwitz_margin;
    if let Some(k) = sign_function_gain(a, b, newton.q, newton.r_inv) {
        if is_hurwitz_with(&(a + b * &k), margin)? {
            return Ok(k);
        }
    }
    if is_hurwitz_with(a, margin)? {
        return Ok(Mat::zeros(sys.p(), n));
    }
    let eigs = a.complex_eigenvalues();
    let max_abs_re = eigs.iter().map(|l| l.re.abs()).fold(0.0, f64::max);

    // Bass: with F = −(A + βI) Hurwitz, F Z + Z Fᵀ = −2BBᵀ gives Z ≻ 0 for
    // controllable pairs and A − BBᵀZ⁻¹ is Hurwitz.
    let beta = 1.0 + max_abs_re;
    let f = -(a + Mat::identity(n, n) * beta);
    if let Ok(sol) = lyapunov_kron(&f.transpose(), &symmetrize(&(b * b.transpose() * 2.0))) {
        if let Some(chol) = sol.p.clone().cholesky() {
            let k = -b.transpose() * chol.inverse();
            if k.iter().all(|v| v.is_finite()) && is_hurwitz_with(&(a + b * &k), margin)? {
                return Ok(k);
            }
        }
    }

    let mut shift = spectral_abscissa(a) + 1.0;
    let mut k = Mat::zeros(sys.p(), n);
    for _ in 0..500 {
        let shifted = a - Mat::identity(n, n) * shift;
        let (p, _) = newton.run(&shifted, k)?;
        k = -newton.r_inv * b.transpose() * &p;
        if shift == 0.0 {
            return Ok(k);
        }
        let room = -spectral_abscissa(&(&shifted + b * &k));
        shift = (shift - 0.9 * room).max(0.0);
    }
    Err(Error::NoConvergence {
        what: "stabilizing initial gain by shift continuation".into(),
        iterations: 500,
        residual: shift,
    })
}

/// Gain of the Riccati solution read off the matrix sign of the Hamiltonian
/// `[A, −BR⁻¹Bᵀ; −Q, −Aᵀ]` (determinant-scaled Newton iteration). Only a
/// starting point: the caller checks that it stabilizes.
fn sign_function_gain(a: &Mat, b: &Mat, q: &Mat, r_inv: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let g = b * r_inv * b.transpose();
    let mut z = Mat::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&-g);
    z.view_mut((n, 0), (n, n)).copy_from(&-q);
    z.view_mut((n, n), (n, n)).copy_from(&-a.transpose());
    for _ in 0..100 {
        let lu = z.clone().lu();
        let log_det: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        let inv = lu.try_inverse()?;
        let c = (log_det / (2 * n) as f64).exp();
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let next = (&z / c + inv * c) * 0.5;
        let step = (&next - &z).norm();
        z = next;
        if step <= 1e-12 * z.norm() {
            break;
        }
    }
    let eye = Mat::identity(n, n);
    let mut lhs = Mat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n))
        .copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(z.view((n, n), (n, n)) + &eye));
    let mut rhs = Mat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&-(z.view((0, 0), (n, n)) + &eye));
    rhs.view_mut((n, 0), (n, n))
        .copy_from(&-z.view((n, 0), (n, n)));
    let x = symmetrize(&lhs.svd(true, true).solve(&rhs, 1e-14).ok()?);
    let k = -r_inv * b.transpose() * x;
    k.iter().all(|v| v.is_finite()).then_some(k)
}
