//! Low-thrust orbital transfer model in equinoctial-style coordinates and
//! its locally optimal controller.
//!
//! State `χ = (χ1, …, χ6)`: true longitude, eccentricity vector `(χ2, χ3)`,
//! orbit parameter `χ4`, momentum vector `(χ5, χ6)`. Inputs `(u_r, u_θ, u_h)`.
//! Target `s* = (0, 0, 0, p0, 0, 0)`. All Lyapunov and cost objects act on
//! the shifted state `z = χ − s*`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clf::{
    check_artstein_sampled, lie_derivatives, ArtsteinOptions, ArtsteinReport, BoxRegion, Clf,
    ControlAffineSystem, MatrixFn, ScalarFn,
};
use crate::error::{Error, Result};
use crate::inverse_opt::{
    design_inverse_optimal, optimal_feedback, InverseDesign, InverseDesignOptions,
    InverseOptimalCost, LevelOptions,
};
use crate::linear::{care_residual, solve_care, LinearSystem, QuadraticWeights};
use crate::numeric::{min_sym_eigenvalue, require_spd, to_vec, Mat, Vector};
use crate::sim::{rk4_step, step_schedule, Trajectory};
use crate::structured::{additive_forward_clf, StrictFeedbackBlocks, StrictFeedbackSystem};
use crate::synthesis::FeedbackLaw;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ParamsSpec {
    p0: f64,
    mu_grav: f64,
}

/// `p0` and the gravitational parameter, with the derived constants
/// `ν = √(p0/μ)`, `η = 1/(p0 ν)`, `ν̄ = ν √p0`, `η̄ = η/√p0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsSpec", into = "ParamsSpec")]
pub struct OrbitalParams {
    pub p0: f64,
    pub mu_grav: f64,
    pub nu: f64,
    pub eta: f64,
    pub nu_bar: f64,
    pub eta_bar: f64,
}

impl OrbitalParams {
    pub fn new(p0: f64, mu_grav: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite() && mu_grav > 0.0 && mu_grav.is_finite()) {
            return Err(Error::invalid("p0 and mu_grav must be positive and finite"));
        }
        let nu = (p0 / mu_grav).sqrt();
        let eta = 1.0 / (p0 * nu);
        Ok(Self {
            p0,
            mu_grav,
            nu,
            eta,
            nu_bar: nu * p0.sqrt(),
            eta_bar: eta / p0.sqrt(),
        })
    }

    pub fn equilibrium(&self) -> Vector {
        Vector::from_vec(vec![0.0, 0.0, 0.0, self.p0, 0.0, 0.0])
    }
}

impl Default for OrbitalParams {
    fn default() -> Self {
        Self::new(1.0, 1.0).expect("unit parameters are valid")
    }
}

impl TryFrom<ParamsSpec> for OrbitalParams {
    type Error = Error;
    fn try_from(s: ParamsSpec) -> Result<Self> {
        Self::new(s.p0, s.mu_grav)
    }
}

impl From<OrbitalParams> for ParamsSpec {
    fn from(p: OrbitalParams) -> Self {
        ParamsSpec {
            p0: p.p0,
            mu_grav: p.mu_grav,
        }
    }
}

/// Absolute state with `1 + χ2 > 0` and `χ4 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct OrbitalState([f64; 6]);

impl OrbitalState {
    pub fn new(chi: [f64; 6]) -> Result<Self> {
        check_domain(&chi).map_err(|what| Error::Domain { t: 0.0, what })?;
        Ok(Self(chi))
    }

    pub fn as_array(&self) -> [f64; 6] {
        self.0
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_row_slice(&self.0)
    }
}

impl TryFrom<[f64; 6]> for OrbitalState {
    type Error = Error;
    fn try_from(chi: [f64; 6]) -> Result<Self> {
        Self::new(chi)
    }
}

impl From<OrbitalState> for [f64; 6] {
    fn from(s: OrbitalState) -> Self {
        s.0
    }
}

fn check_domain(chi: &[f64]) -> std::result::Result<(), String> {
    if !chi.iter().all(|c| c.is_finite()) {
        return Err("state is not finite".into());
    }
    if !(1.0 + chi[1] > 0.0) {
        return Err(format!("1 + chi2 = {} is not positive", 1.0 + chi[1]));
    }
    if !(chi[3] > 0.0) {
        return Err(format!("chi4 = {} is not positive", chi[3]));
    }
    Ok(())
}

/// Drift `a(χ)`, unchecked.
fn drift(pr: &OrbitalParams, c: &[f64]) -> Vector {
    let s2 = (1.0 + c[1]).powi(2);
    let rot = pr.eta_bar * c[3].sqrt() * s2;
    Vector::from_vec(vec![
        rot - pr.eta,
        -pr.eta * s2 * c[2],
        pr.eta * s2 * ((c[3] / pr.p0) * (1.0 + c[1]) - 1.0),
        0.0,
        rot * c[5],
        -rot * c[4],
    ])
}

/// Input matrix `[b_r b_θ b_h]`, unchecked.
fn input(pr: &OrbitalParams, c: &[f64]) -> Mat {
    let w = 1.0 + c[1];
    let sq = c[3].sqrt();
    let k = pr.nu / pr.p0.powf(1.5);
    let mut b = Mat::zeros(6, 3);
    b[(2, 0)] = pr.nu;
    b[(3, 1)] = 2.0 * k * c[3].powf(2.5) / w;
    b[(0, 2)] = -k * c[5] * c[3].powf(1.5) / w;
    b[(4, 2)] = pr.nu_bar * (1.0 + c[4] * c[4] - c[5] * c[5]) / (2.0 * sq * w);
    b[(5, 2)] = pr.nu_bar * c[4] * c[5] / (sq * w);
    b
}

/// `χ̇ = a(χ) + b_r u_r + b_θ u_θ + b_h u_h` at an absolute state.
pub fn orbital_vector_field(
    params: &OrbitalParams,
    s: &OrbitalState,
    u: &Vector,
) -> Result<Vector> {
    if u.len() != 3 {
        return Err(Error::dim("orbital input has three components"));
    }
    Ok(drift(params, &s.0) + input(params, &s.0) * u)
}

/// Jacobians at `(s*, 0)` and their blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalLinearization {
    pub a: Mat,
    pub b: Mat,
    /// `(χ1, χ2, χ3)` block.
    pub a0: Mat,
    /// `(χ5, χ6)` rotation block.
    pub a1: Mat,
    /// Coupling of `χ4` into `(χ1, χ2, χ3)`.
    pub a2: Mat,
    pub b0: Mat,
    pub b2: Mat,
}

pub fn orbital_linearization(params: &OrbitalParams) -> OrbitalLinearization {
    let (eta, nu, p0) = (params.eta, params.nu, params.p0);
    let mut a = Mat::zeros(6, 6);
    a[(0, 1)] = 2.0 * eta;
    a[(0, 3)] = eta / (2.0 * p0);
    a[(1, 2)] = -eta;
    a[(2, 1)] = eta;
    a[(2, 3)] = eta / p0;
    a[(4, 5)] = eta;
    a[(5, 4)] = -eta;
    let mut b = Mat::zeros(6, 3);
    b[(2, 0)] = nu;
    b[(3, 1)] = 2.0 * nu * p0;
    b[(4, 2)] = nu / 2.0;
    OrbitalLinearization {
        a0: a.view((0, 0), (3, 3)).into_owned(),
        a1: a.view((4, 4), (2, 2)).into_owned(),
        a2: a.view((0, 3), (3, 1)).into_owned(),
        b0: b.view((0, 0), (3, 1)).into_owned(),
        b2: b.view((4, 2), (2, 1)).into_owned(),
        a,
        b,
    }
}

fn shifted(params: &OrbitalParams, z: &Vector) -> Vec<f64> {
    let mut c = to_vec(z);
    c[3] += params.p0;
    c
}

/// The full model in shifted coordinates `z = χ − s*`.
pub fn orbital_system(params: &OrbitalParams) -> Result<ControlAffineSystem> {
    let (pa, pb) = (*params, *params);
    let lin = orbital_linearization(params);
    ControlAffineSystem::new(
        6,
        3,
        move |z: &Vector| drift(&pa, &shifted(&pa, z)),
        move |z: &Vector| input(&pb, &shifted(&pb, z)),
    )?
    .with_linearization(lin.a, lin.b)
}

/// `(χ1, …, χ4)` with inputs `(u_r, u_θ)`; rows 1–4 do not depend on `χ5, χ6`.
pub fn orbital_system4(params: &OrbitalParams) -> Result<ControlAffineSystem> {
    let pr = *params;
    let full = move |z: &Vector| {
        let mut c = to_vec(z);
        c.extend([0.0, 0.0]);
        c[3] += pr.p0;
        c
    };
    let lin = orbital_linearization(params);
    ControlAffineSystem::new(
        4,
        2,
        move |z: &Vector| drift(&pr, &full(z)).rows(0, 4).into_owned(),
        move |z: &Vector| input(&pr, &full(z)).view((0, 0), (4, 2)).into_owned(),
    )?
    .with_linearization(
        lin.a.view((0, 0), (4, 4)).into_owned(),
        lin.b.view((0, 0), (4, 2)).into_owned(),
    )
}

/// `(χ1, χ2, χ3)` with `χ4 = p0`, `χ5 = χ6 = 0`, input `u_r`:
/// `χ̇1 = η((1+χ2)² − 1)`, `χ̇2 = −η(1+χ2)²χ3`, `χ̇3 = η(1+χ2)²χ2 + ν u_r`.
pub fn reduced_orbital_system(params: &OrbitalParams) -> Result<ControlAffineSystem> {
    let (eta, nu) = (params.eta, params.nu);
    let lin = orbital_linearization(params);
    ControlAffineSystem::new(
        3,
        1,
        move |z: &Vector| {
            let s2 = (1.0 + z[1]).powi(2);
            Vector::from_vec(vec![eta * (s2 - 1.0), -eta * s2 * z[2], eta * s2 * z[1]])
        },
        move |_| Mat::from_column_slice(3, 1, &[0.0, 0.0, nu]),
    )?
    .with_linearization(lin.a0, lin.b0)
}

/// `(χ2, χ3)` in strict-feedback form: `y = χ2`, `x = χ3`,
/// `h1 = 0`, `h2 = −η(1+y)²`, `f = η(1+y)²y`, `g = ν`.
pub fn orbital_strict_feedback(params: &OrbitalParams) -> Result<StrictFeedbackSystem> {
    let (eta, nu) = (params.eta, params.nu);
    StrictFeedbackSystem::new(
        1,
        Arc::new(|y: &Vector| Vector::zeros(y.len())),
        Arc::new(move |y: &Vector| Vector::from_element(1, -eta * (1.0 + y[0]).powi(2))),
        Arc::new(move |c: &Vector| eta * (1.0 + c[0]).powi(2) * c[0]),
        Arc::new(move |_| nu),
    )?
    .with_blocks(StrictFeedbackBlocks {
        h1: Mat::zeros(1, 1),
        h2: Mat::from_element(1, 1, -eta),
        f1: Mat::from_element(1, 1, eta),
        f2: 0.0,
        g: nu,
    })
}

/// Weights of the locally optimal design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitalCostConfig {
    #[serde(with = "crate::matrix_json")]
    pub q0: Mat,
    pub r_r: f64,
    pub r_theta: f64,
    pub r_h: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// Solution of the 3-state Riccati equation; computed when absent.
    #[serde(
        with = "crate::matrix_json::opt",
        skip_serializing_if = "Option::is_none"
    )]
    pub p0_matrix: Option<Mat>,
}

impl Default for OrbitalCostConfig {
    fn default() -> Self {
        Self {
            q0: Mat::identity(3, 3),
            r_r: 1.0,
            r_theta: 1.0,
            r_h: 1.0,
            rho1: 2.0,
            rho2: 1.0,
            p0_matrix: None,
        }
    }
}

/// Weights with every derived matrix.
#[derive(Debug, Clone)]
pub struct ResolvedCost {
    pub cfg: OrbitalCostConfig,
    pub p0: Mat,
    pub riccati_residual: f64,
    /// `[[Q0, −P0A2], [−A2ᵀP0, 4ρ1²/(η² R_θ)]]`.
    pub q_tilde: Mat,
    pub r_tilde: Mat,
    /// `diag(P0, ρ1)`.
    pub p_tilde: Mat,
    /// `diag(Q̃, ρ2² B2 R_h⁻¹ B2ᵀ)`, only semidefinite.
    pub q: Mat,
    pub r: Mat,
}

impl OrbitalCostConfig {
    pub fn resolve(&self, params: &OrbitalParams) -> Result<ResolvedCost> {
        require_spd(&self.q0, "Q0")?;
        if self.q0.shape() != (3, 3) {
            return Err(Error::dim("Q0 must be 3x3"));
        }
        for (v, what) in [
            (self.r_r, "R_r"),
            (self.r_theta, "R_theta"),
            (self.r_h, "R_h"),
            (self.rho1, "rho1"),
            (self.rho2, "rho2"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{what} must be positive")));
            }
        }
        let lin = orbital_linearization(params);
        let rr = Mat::from_element(1, 1, self.r_r);
        let p0 = match &self.p0_matrix {
            Some(p) => {
                require_spd(p, "P0")?;
                p.clone()
            }
            None => {
                let sys = LinearSystem::new(lin.a0.clone(), lin.b0.clone())?;
                solve_care(&sys, &QuadraticWeights::new(self.q0.clone(), rr.clone())?)?.p
            }
        };
        let riccati_residual = care_residual(&lin.a0, &lin.b0, &self.q0, &rr, &p0)?.norm();
        if riccati_residual > 1e-8 {
            return Err(Error::Certificate {
                what: format!("P0 residual {riccati_residual:.3e} exceeds 1e-8"),
                states: vec![],
            });
        }
        let eta = params.eta;
        let c = -(&p0 * &lin.a2);
        let mut q_tilde = Mat::zeros(4, 4);
        q_tilde.view_mut((0, 0), (3, 3)).copy_from(&self.q0);
        q_tilde.view_mut((0, 3), (3, 1)).copy_from(&c);
        q_tilde.view_mut((3, 0), (1, 3)).copy_from(&c.transpose());
        q_tilde[(3, 3)] = 4.0 * self.rho1 * self.rho1 / (eta * eta * self.r_theta);
        if !(min_sym_eigenvalue(&q_tilde) > 0.0) {
            return Err(Error::NotPositiveDefinite {
                what: "Q̃ (increase rho1)".into(),
                min_eig: min_sym_eigenvalue(&q_tilde),
            });
        }
        let mut p_tilde = Mat::zeros(4, 4);
        p_tilde.view_mut((0, 0), (3, 3)).copy_from(&p0);
        p_tilde[(3, 3)] = self.rho1;
        let mut q = Mat::zeros(6, 6);
        q.view_mut((0, 0), (4, 4)).copy_from(&q_tilde);
        let qh = &lin.b2 * lin.b2.transpose() * (self.rho2 * self.rho2 / self.r_h);
        q.view_mut((4, 4), (2, 2)).copy_from(&qh);
        Ok(ResolvedCost {
            cfg: self.clone(),
            p0,
            riccati_residual,
            q_tilde,
            r_tilde: Mat::from_diagonal(&Vector::from_vec(vec![self.r_r, self.r_theta])),
            p_tilde,
            q,
            r: Mat::from_diagonal(&Vector::from_vec(vec![self.r_r, self.r_theta, self.r_h])),
        })
    }
}

/// Sampling settings of [`build_orbital_controller`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitalDesignOptions {
    /// Half-widths of the working box in shifted coordinates `z1 … z4`. The
    /// quadratic `V0` fails the Artstein check once `|z1|, |z2|, |z3|` reach
    /// about 0.2 (unit parameters).
    pub half_widths: [f64; 4],
    pub artstein: ArtsteinOptions,
    pub levels: LevelOptions,
    pub grid: Option<Vec<f64>>,
}

impl Default for OrbitalDesignOptions {
    fn default() -> Self {
        Self {
            half_widths: [0.15, 0.15, 0.15, 0.3],
            artstein: ArtsteinOptions::default(),
            levels: LevelOptions::default(),
            grid: None,
        }
    }
}

/// Every layer of the orbital construction.
#[derive(Clone)]
pub struct OrbitalController {
    pub params: OrbitalParams,
    pub weights: ResolvedCost,
    /// CLF of the reduced `(χ1, χ2, χ3)` subsystem.
    pub v0: Clf,
    pub artstein_v0: ArtsteinReport,
    /// `Ṽ = V0 + ρ1 z4²` on `(χ1, …, χ4)`.
    pub v_tilde: Clf,
    pub system4: ControlAffineSystem,
    pub design4: InverseDesign,
    /// `V = Ṽ + ρ2 (z5² + z6²)`.
    pub v: Clf,
    pub system: ControlAffineSystem,
    pub cost: InverseOptimalCost,
    pub law: FeedbackLaw,
}

/// Builds `V0` (quadratic `zᵀP0z` unless supplied), checks it on the reduced
/// subsystem, composes `Ṽ`, reconstructs `(q̃, r̃)` on the 4-state subsystem,
/// then extends to six states with `q = q̃ + ¼(L_{b_h}V)²/R_h`,
/// `r = diag(r̃, R_h)` and the feedback `u = −½ r⁻¹ L_bVᵀ`.
pub fn build_orbital_controller(
    params: &OrbitalParams,
    cfg: &OrbitalCostConfig,
    v0: Option<Clf>,
    opts: &OrbitalDesignOptions,
) -> Result<OrbitalController> {
    let weights = cfg.resolve(params)?;
    let v0 = match v0 {
        Some(v) => {
            if v.n() != 3 {
                return Err(Error::dim("V0 acts on (chi1, chi2, chi3)"));
            }
            v
        }
        None => crate::clf::local_quadratic_clf(&weights.p0)?,
    };
    let hw = opts.half_widths;
    if hw[1] >= 1.0 || hw[3] >= params.p0 {
        return Err(Error::invalid(
            "working box leaves the model domain (need |z2| < 1, |z4| < p0)",
        ));
    }
    let region3 = BoxRegion::from_half_widths(&hw[..3])?;
    let region4 = BoxRegion::from_half_widths(&hw)?;
    let reduced = reduced_orbital_system(params)?;
    let artstein_v0 = check_artstein_sampled(&v0, &reduced, &region3, &opts.artstein)?;
    if !artstein_v0.passed() {
        return Err(Error::Certificate {
            what: format!(
                "V0 fails the Artstein condition on the reduced subsystem at {} samples",
                artstein_v0.violation_count
            ),
            states: artstein_v0.violations,
        });
    }
    let v_tilde = additive_forward_clf(&v0, cfg.rho1, 3)?;
    let system4 = orbital_system4(params)?;
    let design4 = design_inverse_optimal(
        &v_tilde,
        &system4,
        &weights.q_tilde,
        &weights.r_tilde,
        &InverseDesignOptions {
            region: region4,
            grid: opts.grid.clone(),
            levels: opts.levels,
        },
    )?;

    let v = additive_forward_clf(&additive_forward_clf(&v_tilde, cfg.rho2, 4)?, cfg.rho2, 5)?;
    let system = orbital_system(params)?;
    let head = |z: &Vector| z.rows(0, 4).into_owned();
    let (cost4, v_q, sys_q, r_h) = (design4.cost.clone(), v.clone(), system.clone(), cfg.r_h);
    let q: ScalarFn = Arc::new(move |z: &Vector| {
        let (_, lb) = lie_derivatives(&v_q, &sys_q, z);
        cost4.q(&head(z)) + 0.25 * lb[2] * lb[2] / r_h
    });
    let cost4 = design4.cost.clone();
    let r: MatrixFn = Arc::new(move |z: &Vector| {
        let mut m = Mat::zeros(3, 3);
        m.view_mut((0, 0), (2, 2)).copy_from(&cost4.r(&head(z)));
        m[(2, 2)] = r_h;
        m
    });
    let cost = InverseOptimalCost::from_parts(
        v.clone(),
        q,
        r,
        weights.q.clone(),
        weights.r.clone(),
        Some(design4.scaling.clone()),
    )?;
    let law = optimal_feedback(&v, &cost, &system)?;
    Ok(OrbitalController {
        params: *params,
        weights,
        v0,
        artstein_v0,
        v_tilde,
        system4,
        design4,
        v,
        system,
        cost,
        law,
    })
}

/// Closed-loop run with `V`/`V̇` diagnostics.
#[derive(Debug, Clone)]
pub struct OrbitalRun {
    /// Absolute states `χ`, annotated with `V` and `Vdot` when a `V` is given.
    pub trajectory: Trajectory,
    pub max_vdot: f64,
    /// Steps where `V` grew by more than `1e−9·V(s0)`.
    pub v_increases: usize,
    /// `‖χ(T) − s*‖`.
    pub terminal_error: f64,
}

/// Integrates the closed loop from the absolute state `s0` with RK4 and
/// step `dt`. Leaving the model domain is reported with its time stamp.
pub fn simulate_orbital(
    params: &OrbitalParams,
    law: &FeedbackLaw,
    v: Option<&Clf>,
    s0: &OrbitalState,
    dt: f64,
    horizon: f64,
) -> Result<OrbitalRun> {
    if law.n() != 6 || law.p() != 3 || v.is_some_and(|v| v.n() != 6) {
        return Err(Error::dim("orbital law maps 6 states to 3 inputs"));
    }
    let system = orbital_system(params)?;
    let star = params.equilibrium();
    let closed = |z: &Vector| system.field(z, &law.eval(z));
    let mut z = s0.to_vector() - &star;
    let mut traj = Trajectory::default();
    let (mut vs, mut vdots) = (Vec::new(), Vec::new());
    let mut record = |traj: &mut Trajectory, t: f64, z: &Vector| {
        let u = law.eval(z);
        if let Some(v) = v {
            let (la, lb) = lie_derivatives(v, &system, z);
            vs.push(v.value(z));
            vdots.push(la + lb.dot(&u));
        }
        traj.push(t, z + &star, u);
    };
    record(&mut traj, 0.0, &z);
    for (t, h) in step_schedule(dt, horizon)? {
        let next = rk4_step(&closed, &z, h);
        if let Err(what) = check_domain(&shifted(params, &next)) {
            return Err(Error::Domain { t: t + h, what });
        }
        z = next;
        record(&mut traj, t + h, &z);
    }
    let (mut max_vdot, mut v_increases) = (f64::NEG_INFINITY, 0);
    if v.is_some() {
        max_vdot = vdots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * vs[0];
        v_increases = vs.windows(2).filter(|w| w[1] - w[0] > tol).count();
        traj.annotate("V", vs)?;
        traj.annotate("Vdot", vdots)?;
    }
    Ok(OrbitalRun {
        max_vdot,
        v_increases,
        terminal_error: z.norm(),
        trajectory: traj,
    })
}

/// `s* + (0.1, 0.05, −0.05, 0.1 p0, 0.05, −0.05)`.
pub fn perturbed_start(params: &OrbitalParams) -> OrbitalState {
    OrbitalState([0.1, 0.05, -0.05, 1.1 * params.p0, 0.05, -0.05])
}

/// Value function, cost and law used by the HJB checks on the 4-state
/// subsystem.
pub fn hjb_subsystem(
    ctrl: &OrbitalController,
) -> (&Clf, &ControlAffineSystem, &InverseOptimalCost) {
    (&ctrl.v_tilde, &ctrl.system4, &ctrl.design4.cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse_opt::hjb_residual;
    use crate::numeric::fd_jacobian;

    fn unit() -> OrbitalParams {
        OrbitalParams::default()
    }

    fn odd() -> OrbitalParams {
        OrbitalParams::new(2.5, 0.7).unwrap()
    }

    #[test]
    fn derived_constants() {
        let p = odd();
        let nu = (2.5f64 / 0.7).sqrt();
        assert_eq!(p.nu, nu);
        assert_eq!(p.eta, 1.0 / (2.5 * nu));
        assert_eq!(p.nu_bar, nu * 2.5f64.sqrt());
        assert_eq!(p.eta_bar, p.eta / 2.5f64.sqrt());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"p0":2.5,"mu_grav":0.7}"#);
        assert_eq!(serde_json::from_str::<OrbitalParams>(&json).unwrap(), p);
        assert!(OrbitalParams::new(-1.0, 1.0).is_err());
    }

    #[test]
    fn equilibrium_is_rest_point() {
        for p in [unit(), odd()] {
            let s = OrbitalState::new([0.0, 0.0, 0.0, p.p0, 0.0, 0.0]).unwrap();
            let f = orbital_vector_field(&p, &s, &Vector::zeros(3)).unwrap();
            assert!(f.amax() <= 1e-14, "{f}");
        }
    }

    #[test]
    fn domain_guard() {
        assert!(matches!(
            OrbitalState::new([0.0, -1.0, 0.0, 1.0, 0.0, 0.0]),
            Err(Error::Domain { .. })
        ));
        assert!(OrbitalState::new([0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn reduces_to_partial_system() {
        let p = odd();
        let red = reduced_orbital_system(&p).unwrap();
        for z in BoxRegion::symmetric(3, 0.5).sample(40, 1) {
            let s = OrbitalState::new([z[0], z[1], z[2], p.p0, 0.0, 0.0]).unwrap();
            let ur = 0.3 * z[0] - z[2];
            let full = orbital_vector_field(&p, &s, &Vector::from_vec(vec![ur, 0.0, 0.0])).unwrap();
            let part = red.field(&z, &Vector::from_element(1, ur));
            assert!((full.rows(0, 3) - &part).amax() <= 1e-14 * (1.0 + part.amax()));
            assert_eq!(full.rows(3, 3).amax(), 0.0);
        }
    }

    #[test]
    fn theta_channel_is_affine() {
        let p = odd();
        let s = OrbitalState::new([0.3, 0.2, -0.1, 2.0, 0.1, 0.4]).unwrap();
        let d = orbital_vector_field(&p, &s, &Vector::from_vec(vec![0.0, 1.0, 0.0])).unwrap()
            - orbital_vector_field(&p, &s, &Vector::zeros(3)).unwrap();
        let expect = 2.0 * (p.nu / p.p0.powf(1.5)) * 2f64.powi(5).sqrt() / 1.2;
        assert!((d[3] - expect).abs() < 1e-14 * expect);
        assert_eq!(
            d.iter()
                .enumerate()
                .filter(|(i, v)| *i != 3 && **v != 0.0)
                .count(),
            0
        );
    }

    #[test]
    fn linearization_entries_and_blocks() {
        for p in [unit(), odd()] {
            let lin = orbital_linearization(&p);
            assert_eq!(lin.a[(4, 5)], p.eta);
            assert_eq!(lin.a[(5, 4)], -p.eta);
            assert_eq!(lin.b[(2, 0)], p.nu);
            assert_eq!(lin.b[(3, 1)], 2.0 * p.nu * p.p0);
            assert_eq!(lin.b[(4, 2)], p.nu / 2.0);
            assert_eq!(lin.a[(2, 3)], p.eta / p.p0);
            // 2/η = 2νp0 is the θ gain of the 4-state block
            assert!((lin.b[(3, 1)] - 2.0 / p.eta).abs() < 1e-14 * lin.b[(3, 1)]);
            let star = p.equilibrium();
            let fd = fd_jacobian(&|c: &Vector| drift(&p, c.as_slice()), &star, 1e-6);
            assert!((&fd - &lin.a).amax() < 1e-5, "{fd}");
            assert!((input(&p, star.as_slice()) - &lin.b).amax() <= 1e-15 * lin.b.amax());
            assert_eq!(lin.a.view((3, 0), (1, 6)).amax(), 0.0);
            assert_eq!(lin.a.view((0, 4), (4, 2)).amax(), 0.0);
        }
    }

    #[test]
    fn unforced_momentum_is_conserved() {
        let p = unit();
        let s0 = perturbed_start(&p);
        let run = simulate_orbital(&p, &FeedbackLaw::zero(6, 3), None, &s0, 0.01, 10.0).unwrap();
        let r0 = 0.05f64.powi(2) * 2.0;
        let drift = run
            .trajectory
            .states
            .iter()
            .map(|c| (c[4] * c[4] + c[5] * c[5] - r0).abs())
            .fold(0.0, f64::max);
        assert!(drift < 1e-8, "{drift}");
    }

    #[test]
    fn cost_weights() {
        let p = unit();
        let w = OrbitalCostConfig::default().resolve(&p).unwrap();
        assert!(w.riccati_residual < 1e-10);
        let lin = orbital_linearization(&p);
        // 4-state Riccati identity with P̃ = diag(P0, ρ1)
        let a4 = lin.a.view((0, 0), (4, 4)).into_owned();
        let b4 = lin.b.view((0, 0), (4, 2)).into_owned();
        let res = care_residual(&a4, &b4, &w.q_tilde, &w.r_tilde, &w.p_tilde).unwrap();
        assert!(res.amax() < 1e-10, "{res}");
        // 6-state identity with P = diag(P̃, ρ2 I)
        let mut p6 = Mat::zeros(6, 6);
        p6.view_mut((0, 0), (4, 4)).copy_from(&w.p_tilde);
        p6[(4, 4)] = 1.0;
        p6[(5, 5)] = 1.0;
        let res = care_residual(&lin.a, &lin.b, &w.q, &w.r, &p6).unwrap();
        assert!(res.amax() < 1e-10, "{res}");
        let small = OrbitalCostConfig {
            rho1: 0.1,
            ..Default::default()
        };
        assert!(small.resolve(&p).is_err());
    }

    #[test]
    fn controller_layers() {
        let p = unit();
        let ctrl = build_orbital_controller(
            &p,
            &OrbitalCostConfig::default(),
            None,
            &OrbitalDesignOptions::default(),
        )
        .unwrap();
        let w = &ctrl.weights;
        let mut h = Mat::zeros(6, 6);
        h.view_mut((0, 0), (4, 4)).copy_from(&(&w.p_tilde * 2.0));
        h[(4, 4)] = 2.0;
        h[(5, 5)] = 2.0;
        assert_eq!(ctrl.v.hessian_origin(), &h);
        assert_eq!(ctrl.v_tilde.hessian_origin(), &(&w.p_tilde * 2.0));
        let zero = Vector::zeros(6);
        assert_eq!(ctrl.cost.r(&zero), w.r);
        assert_eq!(ctrl.cost.q(&zero), 0.0);
        let (v4, s4, c4) = hjb_subsystem(&ctrl);
        for z in BoxRegion::from_half_widths(&[0.2; 4])
            .unwrap()
            .sample(200, 5)
        {
            assert!(hjb_residual(v4, c4, s4, &z).unwrap().abs() <= 1e-10);
        }
        for z in BoxRegion::from_half_widths(&[0.2; 6])
            .unwrap()
            .sample(200, 6)
        {
            let r = hjb_residual(&ctrl.v, &ctrl.cost, &ctrl.system, &z).unwrap();
            assert!(r.abs() <= 1e-10, "{r}");
            let (la, lb) = lie_derivatives(&ctrl.v, &ctrl.system, &z);
            assert!(la + lb.dot(&ctrl.law.eval(&z)) <= 1e-12);
        }
    }

    #[test]
    fn closed_loop_convergence() {
        let p = unit();
        let ctrl = build_orbital_controller(
            &p,
            &OrbitalCostConfig::default(),
            None,
            &OrbitalDesignOptions::default(),
        )
        .unwrap();
        let stay = simulate_orbital(
            &p,
            &ctrl.law,
            Some(&ctrl.v),
            &OrbitalState::new([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap(),
            0.05,
            2.0,
        )
        .unwrap();
        assert_eq!(stay.terminal_error, 0.0);
        let run = simulate_orbital(
            &p,
            &ctrl.law,
            Some(&ctrl.v),
            &perturbed_start(&p),
            0.01,
            60.0,
        )
        .unwrap();
        assert_eq!(run.v_increases, 0);
        assert!(run.terminal_error <= 1e-3, "{}", run.terminal_error);
    }
}
