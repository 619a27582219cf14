//! Feasibility check for the three coupled Lyapunov inequalities that allow
//! uniting a local gain `K_o` with a global CLF whose quadratic part is
//! `P_inf`, through an intermediate gain `K_u` and matrix `P`:
//!
//! ```text
//! (A + B K_o)ᵀ P     + P     (A + B K_o) < 0
//! (A + B K_u)ᵀ P     + P     (A + B K_u) < 0
//! (A + B K_u)ᵀ P_inf + P_inf (A + B K_u) < 0
//! ```
//!
//! The problem is bilinear in `(P, K_u)`; only checking is exact here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear::{lyapunov_kron, LinearSystem};
use crate::numeric::{max_sym_eigenvalue, min_sym_eigenvalue, require_symmetric, Mat};

#[derive(Debug, Clone, Serialize)]
pub struct LmiReport {
    /// Largest eigenvalue of each of the three symmetric matrices, in order.
    pub max_eigenvalues: [f64; 3],
    pub min_eigenvalue_p: f64,
    pub min_eigenvalue_p_inf: f64,
    pub feasible: bool,
}

fn lyap_form(a_cl: &Mat, p: &Mat) -> Mat {
    a_cl.transpose() * p + p * a_cl
}

pub fn check_lmi_triple(
    sys: &LinearSystem,
    k_o: &Mat,
    k_u: &Mat,
    p: &Mat,
    p_inf: &Mat,
) -> Result<LmiReport> {
    let n = sys.n();
    for (m, what) in [(p, "P"), (p_inf, "P_inf")] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::dim(format!("{what} must be {n}x{n}")));
        }
        require_symmetric(m, what)?;
    }
    let a_o = sys.closed_loop(k_o)?;
    let a_u = sys.closed_loop(k_u)?;
    let max_eigenvalues = [
        max_sym_eigenvalue(&lyap_form(&a_o, p)),
        max_sym_eigenvalue(&lyap_form(&a_u, p)),
        max_sym_eigenvalue(&lyap_form(&a_u, p_inf)),
    ];
    let min_eigenvalue_p = min_sym_eigenvalue(p);
    let min_eigenvalue_p_inf = min_sym_eigenvalue(p_inf);
    let feasible = max_eigenvalues.iter().all(|&l| l < 0.0) && min_eigenvalue_p > 0.0;
    Ok(LmiReport {
        max_eigenvalues,
        min_eigenvalue_p,
        min_eigenvalue_p_inf,
        feasible,
    })
}

#[derive(Debug, Clone)]
pub struct LmiSearchHit {
    pub k_u: Mat,
    pub p: Mat,
    pub report: LmiReport,
}

/// Heuristic search for `(K_u, P)`. Not a solver: a `None` result says
/// nothing about infeasibility.
///
/// Candidate gains are `K_o`, `−γ BᵀP_inf` for a few `γ`, and random
/// perturbations of both. For each gain the candidate `P` are the Lyapunov
/// solutions of the two closed loops (with identity right-hand side) and
/// convex combinations of them after trace normalization.
pub fn search_lmi_triple(
    sys: &LinearSystem,
    k_o: &Mat,
    p_inf: &Mat,
    trials: usize,
    seed: u64,
) -> Result<Option<LmiSearchHit>> {
    let n = sys.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gains = vec![k_o.clone()];
    for gamma in [0.5, 1.0, 2.0, 5.0, 10.0] {
        gains.push(-sys.b().transpose() * p_inf * gamma);
    }
    let base = gains.clone();
    for t in 0..trials {
        let center = &base[t % base.len()];
        let scale = 0.1 * (1.0 + center.norm());
        let noise = Mat::from_fn(center.nrows(), center.ncols(), |_, _| {
            rng.random_range(-1.0..1.0) * scale
        });
        gains.push(center + noise);
    }

    let eye = Mat::identity(n, n);
    let a_o = sys.closed_loop(k_o)?;
    let p_o = lyapunov_kron(&a_o, &eye).ok().map(|s| s.p);
    for k_u in gains {
        let a_u = sys.closed_loop(&k_u)?;
        let p_u = lyapunov_kron(&a_u, &eye).ok().map(|s| s.p);
        let mut candidates = Vec::new();
        match (&p_o, &p_u) {
            (Some(po), Some(pu)) => {
                let po = po / po.trace().abs().max(1e-300);
                let pu = pu / pu.trace().abs().max(1e-300);
                for i in 0..=10 {
                    let lam = i as f64 / 10.0;
                    candidates.push(&po * lam + &pu * (1.0 - lam));
                }
            }
            (Some(po), None) => candidates.push(po.clone()),
            (None, Some(pu)) => candidates.push(pu.clone()),
            (None, None) => {}
        }
        for p in candidates {
            let report = check_lmi_triple(sys, k_o, &k_u, &p, p_inf)?;
            if report.feasible {
                return Ok(Some(LmiSearchHit { k_u, p, report }));
            }
        }
    }
    Ok(None)
}
