//! Inverse optimality: given `V` whose Hessian at 0 solves the Riccati
//! equation for `(Q, R)`, build `(q, r)` such that `V` solves the HJB
//! equation `q + L_aV − ¼ L_bV r⁻¹ L_bVᵀ = 0`, with `H(q)(0) = 2Q` and
//! `r(0) = R`.
//!
//! `r(x) = R / μ(V(x))` where `μ` is a level scaling equal to 1 near the
//! origin and at least `ℓ_k` on the annulus `C_k = {k r0 ≤ V ≤ (k+1) r0}`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clf::{
    decrease_margin, lie_derivatives, scan_levels, BoxRegion, Clf, ControlAffineSystem, LevelScan,
    MatrixFn, SampleOptions, ScalarFn,
};
use crate::error::{Error, Result};
use crate::linear::{care_residual, is_hurwitz, solve_lyapunov};
use crate::numeric::{fd_hessian, min_sym_eigenvalue, rel_diff, require_spd, to_vec, Mat, Vector};
use crate::sim::{rk4_step, step_schedule, Trajectory};
use crate::synthesis::{local_gain, FeedbackLaw, LawKind};

/// `L_bV R⁻¹ L_bVᵀ` through a Cholesky solve.
fn weighted_norm(lb: &Vector, r: &Mat) -> Result<f64> {
    let chol = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            what: "input weight r(x)".into(),
            min_eig: min_sym_eigenvalue(r),
        })?;
    Ok(lb.dot(&chol.solve(lb)))
}

/// Checks that `P = ½H(V)(0)` solves `PA + AᵀP − PBR⁻¹BᵀP + Q = 0` for the
/// linearization of `sys`, to `1e−6·(1 + ‖Q‖_F)`. Returns the residual norm.
pub fn riccati_precheck(v: &Clf, sys: &ControlAffineSystem, q: &Mat, r: &Mat) -> Result<f64> {
    let (n, p) = (sys.n(), sys.p());
    if v.n() != n || q.nrows() != n || q.ncols() != n || r.nrows() != p || r.ncols() != p {
        return Err(Error::dim("V, system, Q and R disagree on dimensions"));
    }
    require_spd(q, "Q")?;
    require_spd(r, "R")?;
    let lin = sys.linearization();
    let res = care_residual(lin.a(), lin.b(), q, r, &v.local_p())?.norm();
    if res > 1e-6 * (1.0 + q.norm()) {
        return Err(Error::Certificate {
            what: format!(
                "½H(V)(0) does not solve the Riccati equation for (Q, R): residual {res:.3e}"
            ),
            states: vec![],
        });
    }
    Ok(res)
}

/// Largest grid level on which `L_aV − ¼ L_bV R⁻¹ L_bVᵀ < −δ(x)` at every
/// sample: the region where the unscaled cost is already positive.
pub fn find_r0_inverse(
    v: &Clf,
    sys: &ControlAffineSystem,
    r: &Mat,
    grid: &[f64],
    region: &BoxRegion,
    opts: &SampleOptions,
) -> Result<LevelScan> {
    require_spd(r, "R")?;
    if r.nrows() != sys.p() || v.n() != sys.n() {
        return Err(Error::dim("V, system and R disagree on dimensions"));
    }
    scan_levels(v, region, grid, opts, "inverse-optimal premise", |x| {
        let (la, lb) = lie_derivatives(v, sys, x);
        match weighted_norm(&lb, r) {
            Ok(w) => la - 0.25 * w < -decrease_margin(v.value(x), la),
            Err(_) => false,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LevelOptions {
    pub safety_factor: f64,
    /// Doublings of `ℓ_k` allowed when the fresh-sample check fails.
    pub max_retries: u32,
    pub k_max: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for LevelOptions {
    fn default() -> Self {
        Self {
            safety_factor: 1.5,
            max_retries: 6,
            k_max: 8,
            n_samples: 4000,
            seed: 0,
        }
    }
}

/// The constants `ℓ_1 … ℓ_K` with their sampling evidence.
#[derive(Debug, Clone, Serialize)]
pub struct LevelLadder {
    pub r0: f64,
    pub ladder: Vec<f64>,
    /// Largest sampled `4 L_aV / (L_bV R⁻¹ L_bVᵀ)` per annulus.
    pub max_ratios: Vec<f64>,
    pub doublings: Vec<u32>,
    pub samples: Vec<usize>,
    /// Upper end of the last annulus that was sampled, or the contained level
    /// when the box holds no annulus (the ladder is then `[1]`).
    pub certified_level: f64,
    /// True when the box cut the ladder short of `k_max` annuli.
    pub truncated: bool,
}

/// Sampled `ℓ_k` for `k = 1 … k_max`.
///
/// `ℓ_k = 1` when every sampled ratio `4 L_aV / (L_bV R⁻¹ L_bVᵀ)` on `C_k` is
/// below 1, otherwise `safety_factor` times the largest ratio. Each `ℓ_k` is
/// then re-checked on a fresh sample set and doubled until it passes, at most
/// `max_retries` times. Annuli must lie in the largest sublevel set contained
/// in the box; the last one may be partial.
pub fn estimate_level_constants(
    v: &Clf,
    sys: &ControlAffineSystem,
    r: &Mat,
    r0: f64,
    region: &BoxRegion,
    opts: &LevelOptions,
) -> Result<LevelLadder> {
    if !(r0 > 0.0) {
        return Err(Error::invalid("r0 must be positive"));
    }
    if opts.k_max == 0 || !(opts.safety_factor >= 1.0) {
        return Err(Error::invalid(
            "k_max must be positive and safety_factor at least 1",
        ));
    }
    require_spd(r, "R")?;
    if v.n() != sys.n() || region.dim() != sys.n() || r.nrows() != sys.p() {
        return Err(Error::dim("V, system, box and R disagree on dimensions"));
    }
    let contained = v.max_contained_level(region, opts.n_samples, opts.seed);
    let evaluate = |seed: u64| -> Result<Vec<(f64, f64, f64, Vector)>> {
        region
            .sample(opts.n_samples, seed)
            .into_par_iter()
            .map(|x| {
                let (la, lb) = lie_derivatives(v, sys, &x);
                let w = weighted_norm(&lb, r)?;
                Ok((v.value(&x), la, w, x))
            })
            .collect()
    };
    let base = evaluate(opts.seed)?;

    let mut out = LevelLadder {
        r0,
        ladder: Vec::new(),
        max_ratios: Vec::new(),
        doublings: Vec::new(),
        samples: Vec::new(),
        certified_level: r0,
        truncated: false,
    };
    for k in 1..=opts.k_max {
        let lo = k as f64 * r0;
        if lo >= contained {
            out.truncated = true;
            break;
        }
        let hi = ((k + 1) as f64 * r0).min(contained);
        out.truncated = hi < (k + 1) as f64 * r0;
        let inside = |s: f64| lo <= s && s <= hi;

        let mut max_ratio = f64::NEG_INFINITY;
        let mut count = 0;
        for (s, la, w, x) in base.iter().filter(|e| inside(e.0)) {
            count += 1;
            if *w <= 1e-14 * (1.0 + la.abs()) {
                if !(*la < 0.0) {
                    return Err(Error::Certificate {
                        what: format!(
                            "Artstein condition fails on the annulus C_{k} (V = {s:.3e})"
                        ),
                        states: vec![to_vec(x)],
                    });
                }
                continue;
            }
            max_ratio = max_ratio.max(4.0 * la / w);
        }
        let mut ell = if max_ratio < 1.0 {
            1.0
        } else {
            opts.safety_factor * max_ratio
        };

        let fresh = evaluate(opts.seed.wrapping_add(7919 * k as u64))?;
        let mut doublings = 0;
        loop {
            let bad: Vec<Vec<f64>> = fresh
                .iter()
                .filter(|e| inside(e.0))
                .filter(|(s, la, w, _)| !(la - 0.25 * ell * w < -decrease_margin(*s, *la)))
                .take(20)
                .map(|e| to_vec(&e.3))
                .collect();
            if bad.is_empty() {
                break;
            }
            if doublings == opts.max_retries {
                return Err(Error::Certificate {
                    what: format!(
                        "no level constant found on C_{k} after {doublings} doublings (ℓ = {ell:.3e}): \
                         the Artstein condition fails numerically there"
                    ),
                    states: bad,
                });
            }
            ell *= 2.0;
            doublings += 1;
        }
        out.ladder.push(ell);
        out.max_ratios.push(max_ratio);
        out.doublings.push(doublings);
        out.samples.push(count);
        out.certified_level = hi;
    }
    if out.ladder.is_empty() {
        // the contained sublevel set lies inside {V ≤ r0}: μ ≡ 1 is valid there
        out.ladder.push(1.0);
        out.max_ratios.push(f64::NAN);
        out.doublings.push(0);
        out.samples.push(0);
        out.certified_level = contained.max(r0);
    }
    Ok(out)
}

/// Continuous nondecreasing piecewise-linear `μ` with `μ = 1` on `[0, r0/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScaling {
    pub r0: f64,
    pub ladder: Vec<f64>,
    /// `(s, μ(s))` breakpoints; `μ` is constant after the last one.
    pub knots: Vec<(f64, f64)>,
}

impl LevelScaling {
    pub fn mu(&self, s: f64) -> f64 {
        let k = &self.knots;
        if s <= k[0].0 {
            return k[0].1;
        }
        let i = k.partition_point(|kn| kn.0 < s);
        if i >= k.len() {
            return k[k.len() - 1].1;
        }
        let (s0, m0) = k[i - 1];
        let (s1, m1) = k[i];
        m0 + (m1 - m0) * (s - s0) / (s1 - s0)
    }

    /// Level up to which the ladder was certified; `μ` is frozen beyond it.
    pub fn covered_level(&self) -> f64 {
        (self.ladder.len() + 1) as f64 * self.r0
    }
}

/// Knots `(0, 1)`, `(r0/2, 1)`, `(k r0, M_k)` for `k = 1 … K+1`, with
/// `M_k = max(1, ℓ_1, …, ℓ_min(k,K))`. Linear between knots, so
/// `μ ≥ M_k ≥ ℓ_k` on `[k r0, (k+1) r0]`.
pub fn build_mu(r0: f64, ladder: &[f64]) -> Result<LevelScaling> {
    if ladder.is_empty() {
        return Err(Error::invalid("ladder must not be empty"));
    }
    if !(r0 > 0.0) || ladder.iter().any(|l| !(*l >= 1.0 && l.is_finite())) {
        return Err(Error::invalid(
            "r0 must be positive and every ladder entry at least 1",
        ));
    }
    let mut knots = vec![(0.0, 1.0), (0.5 * r0, 1.0)];
    let mut running = 1.0_f64;
    for k in 1..=ladder.len() + 1 {
        running = running.max(ladder[(k - 1).min(ladder.len() - 1)]);
        knots.push((k as f64 * r0, running));
    }
    Ok(LevelScaling {
        r0,
        ladder: ladder.to_vec(),
        knots,
    })
}

/// The cost pair `(q, r)` together with the value function `V` it was built for.
#[derive(Clone)]
pub struct InverseOptimalCost {
    q: ScalarFn,
    r: MatrixFn,
    v: Clf,
    pub base_q: Mat,
    pub base_r: Mat,
    pub scaling: Option<LevelScaling>,
}

impl fmt::Debug for InverseOptimalCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InverseOptimalCost")
            .field("base_q", &self.base_q)
            .field("base_r", &self.base_r)
            .field("scaling", &self.scaling)
            .finish()
    }
}

impl InverseOptimalCost {
    /// Assembles a cost from arbitrary callables, checking `q(0) = 0` and
    /// `r(0) = R` exactly.
    pub fn from_parts(
        v: Clf,
        q: ScalarFn,
        r: MatrixFn,
        base_q: Mat,
        base_r: Mat,
        scaling: Option<LevelScaling>,
    ) -> Result<Self> {
        let zero = Vector::zeros(v.n());
        if q(&zero) != 0.0 {
            return Err(Error::invalid("q(0) must be 0"));
        }
        if r(&zero) != base_r {
            return Err(Error::invalid("r(0) must equal R"));
        }
        if base_q.nrows() != v.n() {
            return Err(Error::dim("Q and V disagree on dimensions"));
        }
        Ok(Self {
            q,
            r,
            v,
            base_q,
            base_r,
            scaling,
        })
    }

    pub fn q(&self, x: &Vector) -> f64 {
        (self.q)(x)
    }

    pub fn r(&self, x: &Vector) -> Mat {
        (self.r)(x)
    }

    pub fn value_function(&self) -> &Clf {
        &self.v
    }

    /// Second differences of `q` at the origin.
    pub fn fd_hessian_q(&self) -> Mat {
        fd_hessian(&*self.q, &Vector::zeros(self.v.n()), 1e-4)
    }
}

/// `r(x) = R/μ(V(x))`, `q(x) = −L_aV + ¼ L_bV r(x)⁻¹ L_bVᵀ`.
pub fn build_inverse_cost(
    v: &Clf,
    sys: &ControlAffineSystem,
    r: &Mat,
    q: &Mat,
    scaling: &LevelScaling,
) -> Result<InverseOptimalCost> {
    riccati_precheck(v, sys, q, r)?;
    let r_inv = r.clone().cholesky().expect("checked SPD").inverse();
    let (vq, sq, sc) = (v.clone(), sys.clone(), scaling.clone());
    let q_fn: ScalarFn = Arc::new(move |x: &Vector| {
        let (la, lb) = lie_derivatives(&vq, &sq, x);
        let mu = sc.mu(vq.value(x));
        -la + 0.25 * mu * lb.dot(&(&r_inv * &lb))
    });
    let (vr, rr, sr) = (v.clone(), r.clone(), scaling.clone());
    let r_fn: MatrixFn = Arc::new(move |x: &Vector| {
        let mu = sr.mu(vr.value(x));
        if mu == 1.0 {
            rr.clone()
        } else {
            &rr / mu
        }
    });
    InverseOptimalCost::from_parts(
        v.clone(),
        q_fn,
        r_fn,
        q.clone(),
        r.clone(),
        Some(scaling.clone()),
    )
}

/// `q(x) + L_aV(x) − ¼ L_bV(x) r(x)⁻¹ L_bV(x)ᵀ`.
pub fn hjb_residual(
    v: &Clf,
    cost: &InverseOptimalCost,
    sys: &ControlAffineSystem,
    x: &Vector,
) -> Result<f64> {
    let (la, lb) = lie_derivatives(v, sys, x);
    Ok(cost.q(x) + la - 0.25 * weighted_norm(&lb, &cost.r(x))?)
}

/// `u = −½ r(x)⁻¹ L_bV(x)ᵀ`.
pub fn optimal_feedback(
    v: &Clf,
    cost: &InverseOptimalCost,
    sys: &ControlAffineSystem,
) -> Result<FeedbackLaw> {
    if v.n() != sys.n() || cost.base_r.nrows() != sys.p() {
        return Err(Error::dim("V, cost and system disagree on dimensions"));
    }
    let (vc, cc, sc) = (v.clone(), cost.clone(), sys.clone());
    FeedbackLaw::from_fn(
        LawKind::OptimalFeedback,
        sys.n(),
        sys.p(),
        move |x: &Vector| {
            let (_, lb) = lie_derivatives(&vc, &sc, x);
            match cc.r(x).cholesky() {
                Some(ch) => ch.solve(&lb) * -0.5,
                None => Vector::from_element(lb.len(), f64::NAN),
            }
        },
    )
}

/// Cost of one closed-loop run.
#[derive(Debug, Clone, Serialize)]
pub struct CostEstimate {
    /// `integral + tail`.
    pub total: f64,
    pub integral: f64,
    pub tail: f64,
    /// The tail is exact (`V(x_T)`) for the optimal feedback; otherwise it is
    /// a local LQ estimate.
    pub tail_exact: bool,
    pub t_final: f64,
    pub steps: usize,
    pub reached_terminal: bool,
}

/// Relative terminal level: integration stops once `V ≤ TERMINAL·V(x0)`.
pub const TERMINAL: f64 = 1e-8;

/// `J = ∫ q(x) + uᵀ r(x) u dt` along the closed loop from `x0`, integrated
/// with RK4 on the state augmented by the running cost, plus a tail term.
///
/// `law` is treated as the optimal feedback for `cost` when its kind is
/// `OptimalFeedback`; the tail is then exactly `V(x_T)`.
pub fn evaluate_cost(
    sys: &ControlAffineSystem,
    cost: &InverseOptimalCost,
    law: &FeedbackLaw,
    x0: &Vector,
    horizon: f64,
    dt: f64,
) -> Result<CostEstimate> {
    cost_run(sys, cost, law, x0, horizon, dt, TERMINAL, false).map(|(c, _)| c)
}

/// [`evaluate_cost`] with the relative terminal level `terminal`, also
/// returning the trajectory annotated with `V`, `q` and the cost integrand.
pub fn evaluate_cost_traced(
    sys: &ControlAffineSystem,
    cost: &InverseOptimalCost,
    law: &FeedbackLaw,
    x0: &Vector,
    horizon: f64,
    dt: f64,
    terminal: f64,
) -> Result<(CostEstimate, Trajectory)> {
    if !(terminal > 0.0 && terminal < 1.0) {
        return Err(Error::invalid("terminal level must lie in (0, 1)"));
    }
    cost_run(sys, cost, law, x0, horizon, dt, terminal, true)
}

#[allow(clippy::too_many_arguments)]
fn cost_run(
    sys: &ControlAffineSystem,
    cost: &InverseOptimalCost,
    law: &FeedbackLaw,
    x0: &Vector,
    horizon: f64,
    dt: f64,
    terminal: f64,
    record: bool,
) -> Result<(CostEstimate, Trajectory)> {
    let n = sys.n();
    if x0.len() != n || law.n() != n || law.p() != sys.p() || cost.v.n() != n {
        return Err(Error::dim(
            "initial state, law, cost and system disagree on dimensions",
        ));
    }
    let v = &cost.v;
    let v0 = v.value(x0);
    let integrand = |x: &Vector, u: &Vector| cost.q(x) + u.dot(&(cost.r(x) * u));
    let aug = |z: &Vector| {
        let x = z.rows(0, n).into_owned();
        let u = law.eval(&x);
        let mut dz = Vector::zeros(n + 1);
        dz.rows_mut(0, n).copy_from(&sys.field(&x, &u));
        dz[n] = integrand(&x, &u);
        dz
    };

    let mut traj = Trajectory::default();
    let mut notes: [Vec<f64>; 3] = Default::default();
    let mut push = |traj: &mut Trajectory, t: f64, x: &Vector| {
        if record {
            let u = law.eval(x);
            notes[0].push(v.value(x));
            notes[1].push(cost.q(x));
            notes[2].push(integrand(x, &u));
            traj.push(t, x.clone(), u);
        }
    };

    let mut z = Vector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(x0);
    push(&mut traj, 0.0, x0);
    let mut t_final = 0.0;
    let mut steps = 0;
    let mut reached = v0 == 0.0;
    if !reached {
        for (t, h) in step_schedule(dt, horizon)? {
            let next = rk4_step(&aug, &z, h);
            if !next.iter().all(|c| c.is_finite()) {
                return Err(Error::Divergence {
                    t: t + h,
                    state: to_vec(&z.rows(0, n).into_owned()),
                });
            }
            z = next;
            steps += 1;
            t_final = t + h;
            let x = z.rows(0, n).into_owned();
            push(&mut traj, t_final, &x);
            if v.value(&x) <= terminal * v0 {
                reached = true;
                break;
            }
        }
    }
    let x_t = z.rows(0, n).into_owned();
    let v_t = v.value(&x_t);
    if !reached {
        let limit = cost.scaling.as_ref().map_or(0.0, |s| 0.5 * s.r0);
        if !(v_t <= limit) {
            return Err(Error::Horizon {
                horizon,
                level: v_t,
                state: to_vec(&x_t),
            });
        }
    }
    let tail_exact = law.kind() == LawKind::OptimalFeedback;
    let tail = if v_t == 0.0 {
        0.0
    } else if tail_exact {
        v_t
    } else {
        lq_tail(sys, cost, law, &x_t)?
    };
    if record {
        let [vs, qs, ints] = notes;
        traj.annotate("V", vs)?;
        traj.annotate("q", qs)?;
        traj.annotate("integrand", ints)?;
    }
    Ok((
        CostEstimate {
            total: z[n] + tail,
            integral: z[n],
            tail,
            tail_exact,
            t_final,
            steps,
            reached_terminal: reached,
        },
        traj,
    ))
}

/// `x_Tᵀ S x_T` with `S` the cost-to-go of the linearized closed loop under
/// the local quadratic cost `(Q, R)`.
fn lq_tail(
    sys: &ControlAffineSystem,
    cost: &InverseOptimalCost,
    law: &FeedbackLaw,
    x: &Vector,
) -> Result<f64> {
    let k = local_gain(law, 1e-6)?;
    let a_cl = sys.linearization().closed_loop(&k)?;
    if !is_hurwitz(&a_cl)? {
        return Err(Error::NotHurwitz {
            what: "linearized closed loop used for the cost tail".into(),
            abscissa: crate::numeric::spectral_abscissa(&a_cl),
        });
    }
    let w = &cost.base_q + k.transpose() * &cost.base_r * &k;
    let s = solve_lyapunov(&a_cl, &crate::numeric::symmetrize(&w))?.p;
    Ok((x.transpose() * s * x)[(0, 0)])
}

/// Evaluates [`evaluate_cost`] for many initial states in parallel; results
/// keep the order of `x0s`.
pub fn evaluate_costs(
    sys: &ControlAffineSystem,
    cost: &InverseOptimalCost,
    law: &FeedbackLaw,
    x0s: &[Vector],
    horizon: f64,
    dt: f64,
) -> Vec<Result<CostEstimate>> {
    x0s.par_iter()
        .map(|x0| evaluate_cost(sys, cost, law, x0, horizon, dt))
        .collect()
}

/// Sampled check of the cost invariants on `{0 < V ≤ max_level}`.
#[derive(Debug, Clone, Serialize)]
pub struct CostCheck {
    pub checked: usize,
    pub max_hjb_residual: f64,
    pub min_q: f64,
    pub nonpositive_q: usize,
    pub min_r_eigenvalue: f64,
    pub hessian_q_rel_error: f64,
    pub r0_exact: bool,
}

impl CostCheck {
    pub fn passed(&self, hjb_tol: f64) -> bool {
        self.max_hjb_residual <= hjb_tol
            && self.nonpositive_q == 0
            && self.min_r_eigenvalue > 0.0
            && self.hessian_q_rel_error <= 1e-3
            && self.r0_exact
    }
}

pub fn check_cost(
    cost: &InverseOptimalCost,
    sys: &ControlAffineSystem,
    region: &BoxRegion,
    opts: &SampleOptions,
    max_level: f64,
) -> Result<CostCheck> {
    let v = &cost.v;
    let samples = region.sample_multiscale(opts.n_samples, opts.seed);
    let rows: Vec<(f64, f64, f64)> = samples
        .par_iter()
        .filter(|x| {
            let s = v.value(x);
            s > 0.0 && s <= max_level
        })
        .map(|x| {
            let res = hjb_residual(v, cost, sys, x)?;
            Ok((res.abs(), cost.q(x), min_sym_eigenvalue(&cost.r(x))))
        })
        .collect::<Result<_>>()?;
    let zero = Vector::zeros(v.n());
    Ok(CostCheck {
        checked: rows.len(),
        max_hjb_residual: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        min_q: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        nonpositive_q: rows.iter().filter(|r| !(r.1 > 0.0)).count(),
        min_r_eigenvalue: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
        hessian_q_rel_error: rel_diff(&cost.fd_hessian_q(), &(&cost.base_q * 2.0)),
        r0_exact: cost.r(&zero) == cost.base_r,
    })
}

/// Settings of [`design_inverse_optimal`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InverseDesignOptions {
    pub region: BoxRegion,
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub levels: LevelOptions,
}

/// Every piece of one inverse-optimal construction.
#[derive(Debug, Clone)]
pub struct InverseDesign {
    pub riccati_residual: f64,
    pub scan: LevelScan,
    pub ladder: LevelLadder,
    pub scaling: LevelScaling,
    pub cost: InverseOptimalCost,
    pub law: FeedbackLaw,
}

/// Riccati pre-check, premise level `r0`, ladder, `μ`, `(q, r)` and the
/// optimal feedback.
pub fn design_inverse_optimal(
    v: &Clf,
    sys: &ControlAffineSystem,
    q: &Mat,
    r: &Mat,
    opts: &InverseDesignOptions,
) -> Result<InverseDesign> {
    let riccati_residual = riccati_precheck(v, sys, q, r)?;
    let samples = SampleOptions {
        n_samples: opts.levels.n_samples,
        seed: opts.levels.seed,
    };
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => crate::synthesis::default_grid(v.max_contained_level(
            &opts.region,
            samples.n_samples,
            samples.seed,
        )),
    };
    let scan = find_r0_inverse(v, sys, r, &grid, &opts.region, &samples)?;
    let ladder = estimate_level_constants(v, sys, r, scan.r0, &opts.region, &opts.levels)?;
    let scaling = build_mu(scan.r0, &ladder.ladder)?;
    let cost = build_inverse_cost(v, sys, r, q, &scaling)?;
    let law = optimal_feedback(v, &cost, sys)?;
    Ok(InverseDesign {
        riccati_residual,
        scan,
        ladder,
        scaling,
        cost,
        law,
    })
}
