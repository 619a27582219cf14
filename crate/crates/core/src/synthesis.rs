//! Feedback laws: linear gains, Sontag's universal formula, the blend that
//! is exactly `K_o x` near the origin, and their sampled verification.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clf::{
    blend_profile, check_artstein_sampled, decrease_margin, find_r0, lie_derivatives,
    ArtsteinOptions, ArtsteinReport, BlendProfile, BoxRegion, Clf, ControlAffineSystem, LevelScan,
    SampleOptions, VectorFn,
};
use crate::error::{Error, Result};
use crate::numeric::{to_vec, Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    LinearGain,
    Sontag,
    Blended,
    OptimalFeedback,
}

/// A state feedback `u = α(x)` with `α(0) = 0`.
#[derive(Clone)]
pub struct FeedbackLaw {
    kind: LawKind,
    n: usize,
    p: usize,
    map: VectorFn,
    /// Prescribed local gain, for linear and blended laws.
    pub gain: Option<Mat>,
    pub blend: Option<BlendProfile>,
}

impl fmt::Debug for FeedbackLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackLaw")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("p", &self.p)
            .field("gain", &self.gain)
            .field("blend", &self.blend)
            .finish()
    }
}

impl FeedbackLaw {
    /// Wraps a map after checking its output size and `α(0) = 0`.
    pub fn from_fn(
        kind: LawKind,
        n: usize,
        p: usize,
        map: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Result<Self> {
        let map: VectorFn = Arc::new(map);
        let u0 = map(&Vector::zeros(n));
        if u0.len() != p {
            return Err(Error::dim(format!(
                "law returns {} inputs, expected {p}",
                u0.len()
            )));
        }
        if u0.norm() > 1e-12 {
            return Err(Error::invalid(format!(
                "law does not vanish at the origin: |α(0)| = {:.3e}",
                u0.norm()
            )));
        }
        Ok(Self {
            kind,
            n,
            p,
            map,
            gain: None,
            blend: None,
        })
    }

    /// `u = K x`.
    pub fn linear(k: &Mat) -> Self {
        let kk = k.clone();
        Self {
            kind: LawKind::LinearGain,
            n: k.ncols(),
            p: k.nrows(),
            map: Arc::new(move |x: &Vector| &kk * x),
            gain: Some(k.clone()),
            blend: None,
        }
    }

    pub fn zero(n: usize, p: usize) -> Self {
        Self::linear(&Mat::zeros(p, n))
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn eval(&self, x: &Vector) -> Vector {
        (self.map)(x)
    }

    pub fn map_fn(&self) -> &VectorFn {
        &self.map
    }
}

/// Sontag's formula for given Lie derivatives, `u = −κ·L_bVᵀ` with
/// `κ = (a + √(a² + β²))/β`, `β = ‖L_bV‖²`, written in a cancellation-free
/// form when `a < 0`.
pub fn sontag_value(la: f64, lb: &Vector) -> Vector {
    let beta = lb.norm_squared();
    if beta == 0.0 {
        return Vector::zeros(lb.len());
    }
    let root = la.hypot(beta);
    let kappa = if la <= 0.0 {
        beta / (root - la)
    } else {
        (la + root) / beta
    };
    -lb * kappa
}

/// Sontag's universal formula for `V`, built only after the sampled Artstein
/// check passes on `region`. On `‖L_bV‖ ≤ zero_tol_coef·(1+‖∇V‖)` the law is 0.
pub fn sontag_controller(
    v: &Clf,
    sys: &ControlAffineSystem,
    region: &BoxRegion,
    opts: &ArtsteinOptions,
) -> Result<FeedbackLaw> {
    let report = check_artstein_sampled(v, sys, region, opts)?;
    artstein_gate(&report)?;
    Ok(sontag_unchecked(v, sys, opts.zero_tol_coef))
}

fn artstein_gate(report: &ArtsteinReport) -> Result<()> {
    if report.passed() {
        return Ok(());
    }
    Err(Error::Certificate {
        what: format!(
            "Artstein condition fails at {} of {} sampled states",
            report.violation_count, report.checked
        ),
        states: report.violations.clone(),
    })
}

/// Sontag's formula without the Artstein precheck.
pub fn sontag_unchecked(v: &Clf, sys: &ControlAffineSystem, zero_tol_coef: f64) -> FeedbackLaw {
    let (vc, sc) = (v.clone(), sys.clone());
    let map = move |x: &Vector| {
        let g = vc.gradient(x);
        let lb = sc.input(x).transpose() * &g;
        if lb.norm() <= zero_tol_coef * (1.0 + g.norm()) {
            return Vector::zeros(lb.len());
        }
        sontag_value(g.dot(&sc.drift(x)), &lb)
    };
    FeedbackLaw {
        kind: LawKind::Sontag,
        n: sys.n(),
        p: sys.p(),
        map: Arc::new(map),
        gain: None,
        blend: None,
    }
}

/// `α(x) = ρ(V(x))·α_∞(x) + (1 − ρ(V(x)))·K_o x`, evaluated as exactly
/// `K_o x` below `r0/2` and exactly `α_∞(x)` above `r0`.
pub fn blended_controller(
    alpha_inf: &FeedbackLaw,
    k_o: &Mat,
    v: &Clf,
    rho: &BlendProfile,
) -> Result<FeedbackLaw> {
    let (n, p) = (alpha_inf.n, alpha_inf.p);
    if k_o.nrows() != p || k_o.ncols() != n || v.n() != n {
        return Err(Error::dim(format!(
            "blend needs K_o {p}x{n} and V on R^{n}, got {}x{} and R^{}",
            k_o.nrows(),
            k_o.ncols(),
            v.n()
        )));
    }
    let (ai, k, vc, r) = (alpha_inf.map.clone(), k_o.clone(), v.clone(), *rho);
    let map = move |x: &Vector| {
        let s = vc.value(x);
        if s <= 0.5 * r.r0() {
            &k * x
        } else if s >= r.r0() {
            ai(x)
        } else {
            let w = r.eval(s);
            ai(x) * w + &k * x * (1.0 - w)
        }
    };
    Ok(FeedbackLaw {
        kind: LawKind::Blended,
        n,
        p,
        map: Arc::new(map),
        gain: Some(k_o.clone()),
        blend: Some(*rho),
    })
}

/// Central-difference Jacobian of the law at the origin.
pub fn local_gain(law: &FeedbackLaw, h: f64) -> Result<Mat> {
    if !(h > 0.0) {
        return Err(Error::invalid("probe step must be positive"));
    }
    let mut jac = Mat::zeros(law.p, law.n);
    for j in 0..law.n {
        let mut e = Vector::zeros(law.n);
        e[j] = h;
        let up = law.eval(&e);
        let um = law.eval(&-e);
        if !up.iter().chain(um.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "law is not finite at probe ±{h}·e{j}"
            )));
        }
        jac.set_column(j, &((up - um) / (2.0 * h)));
    }
    Ok(jac)
}

/// One Richardson step on [`local_gain`]: `(4 J(h/2) − J(h)) / 3`.
pub fn local_gain_richardson(law: &FeedbackLaw, h: f64) -> Result<Mat> {
    let coarse = local_gain(law, h)?;
    let fine = local_gain(law, 0.5 * h)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecreaseReport {
    pub checked: usize,
    pub violation_count: usize,
    pub violations: Vec<Vec<f64>>,
    /// Largest `V̇ / V` over the samples.
    pub worst_rate: f64,
}

impl DecreaseReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Samples where `L_aV + L_bV·α(x) ≥ −δ(x)`, excluding the origin and,
/// when `max_level` is given, states with `V(x) > max_level`.
pub fn verify_decrease(
    v: &Clf,
    sys: &ControlAffineSystem,
    law: &FeedbackLaw,
    region: &BoxRegion,
    opts: &SampleOptions,
    max_level: Option<f64>,
) -> Result<DecreaseReport> {
    if v.n() != sys.n() || law.n != sys.n() || law.p != sys.p() || region.dim() != sys.n() {
        return Err(Error::dim("V, system, law and box disagree on dimensions"));
    }
    let samples = region.sample_multiscale(opts.n_samples, opts.seed);
    let cap = max_level.unwrap_or(f64::INFINITY);
    let results: Vec<(f64, bool, &Vector)> = samples
        .par_iter()
        .filter_map(|x| {
            let val = v.value(x);
            if !(val > 0.0) || val > cap {
                return None;
            }
            let (la, lb) = lie_derivatives(v, sys, x);
            let vdot = la + lb.dot(&law.eval(x));
            Some((vdot / val, vdot < -decrease_margin(val, la), x))
        })
        .collect();
    let mut report = DecreaseReport {
        checked: results.len(),
        violation_count: 0,
        violations: Vec::new(),
        worst_rate: f64::NEG_INFINITY,
    };
    for (rate, ok, x) in results {
        // NaN rates count as violations and poison the maximum on purpose
        report.worst_rate = if rate.is_nan() {
            f64::NAN
        } else {
            report.worst_rate.max(rate)
        };
        if !ok {
            report.violation_count += 1;
            if report.violations.len() < 20 {
                report.violations.push(to_vec(x));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeamReport {
    /// Largest difference quotient over random nearby pairs in the box.
    pub lipschitz_estimate: f64,
    /// Largest difference quotient across `V = r0/2` and `V = r0`.
    pub seam_quotient: f64,
    pub seam_points: usize,
    pub continuous: bool,
}

/// Spot check that the blend is continuous across its two seams: difference
/// quotients straddling the seams must stay below twice the sampled global
/// Lipschitz estimate. A jump would blow the seam quotient up like 1/step.
pub fn seam_diagnostics(
    law: &FeedbackLaw,
    v: &Clf,
    rho: &BlendProfile,
    region: &BoxRegion,
    opts: &SampleOptions,
) -> Result<SeamReport> {
    if law.n != v.n() || region.dim() != v.n() {
        return Err(Error::dim("law, V and box disagree on dimensions"));
    }
    let samples = region.sample_multiscale(opts.n_samples, opts.seed);
    let width = region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max);
    let eps = 1e-3 * width;
    let dirs = region.sample(samples.len(), opts.seed ^ 0xd1);
    let lipschitz_estimate = samples
        .par_iter()
        .zip(dirs.par_iter())
        .map(|(x, d)| {
            let dn = d.norm();
            if dn == 0.0 {
                return 0.0;
            }
            let y = x + d * (eps / dn);
            (law.eval(&y) - law.eval(x)).norm() / eps
        })
        .reduce(|| 0.0, f64::max);

    let mut seam_quotient = 0.0_f64;
    let mut seam_points = 0;
    for level in [0.5 * rho.r0(), rho.r0()] {
        for x in samples.iter().take(400) {
            let Some(y) = ray_to_level(v, x, level) else {
                continue;
            };
            if !region.contains(&y) {
                continue;
            }
            let step = 1e-7 * (1.0 + y.norm());
            let dir = y.normalize();
            let q = (law.eval(&(&y + &dir * step)) - law.eval(&(&y - &dir * step))).norm()
                / (2.0 * step);
            seam_quotient = seam_quotient.max(q);
            seam_points += 1;
        }
    }
    Ok(SeamReport {
        lipschitz_estimate,
        seam_quotient,
        seam_points,
        continuous: seam_quotient <= 2.0 * lipschitz_estimate + 1e-9,
    })
}

/// Point `t·x` with `V(t·x) = level`, bracketing outward from the origin.
fn ray_to_level(v: &Clf, x: &Vector, level: f64) -> Option<Vector> {
    if x.norm() == 0.0 {
        return None;
    }
    let mut hi = 1.0;
    let mut guard = 0;
    while v.value(&(x * hi)) < level {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if v.value(&(x * mid)) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(x * (0.5 * (lo + hi)))
}

/// Settings of the end-to-end pipeline [`synthesize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub region: BoxRegion,
    /// Level grid for the r0 search; default is geometric up to the largest
    /// sublevel set contained in the box.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub artstein: ArtsteinOptions,
    #[serde(default)]
    pub samples: SampleOptions,
}

impl SynthesisOptions {
    pub fn new(region: BoxRegion) -> Self {
        Self {
            region,
            grid: None,
            artstein: ArtsteinOptions::default(),
            samples: SampleOptions::default(),
        }
    }
}

/// 96 geometric levels from `top·1e−6` to `top`.
pub fn default_grid(top: f64) -> Vec<f64> {
    let count = 96;
    (0..count)
        .map(|k| top * 10f64.powf(-6.0 * (count - 1 - k) as f64 / (count - 1) as f64))
        .collect()
}

/// Everything produced and checked by one synthesis.
#[derive(Clone)]
pub struct Synthesis {
    pub clf: Clf,
    pub k_o: Mat,
    pub artstein: ArtsteinReport,
    pub scan: LevelScan,
    pub blend: BlendProfile,
    pub alpha_inf: FeedbackLaw,
    pub law: FeedbackLaw,
    pub local_gain: Mat,
    pub gain_error: f64,
    pub decrease: DecreaseReport,
    pub seams: SeamReport,
}

/// Serializable summary of a [`Synthesis`].
#[derive(Debug, Clone, Serialize)]
pub struct SynthesisRecord {
    pub r0: f64,
    #[serde(with = "crate::matrix_json")]
    pub k_o: Mat,
    #[serde(with = "crate::matrix_json")]
    pub local_gain: Mat,
    pub gain_error: f64,
    pub artstein: ArtsteinReport,
    pub levels: LevelScan,
    pub decrease: DecreaseReport,
    pub seams: SeamReport,
}

impl Synthesis {
    pub fn record(&self) -> SynthesisRecord {
        SynthesisRecord {
            r0: self.blend.r0(),
            k_o: self.k_o.clone(),
            local_gain: self.local_gain.clone(),
            gain_error: self.gain_error,
            artstein: self.artstein.clone(),
            levels: self.scan.clone(),
            decrease: self.decrease.clone(),
            seams: self.seams.clone(),
        }
    }
}

/// Artstein check, r0 search, Sontag law on `V`, blend with `K_o`, then the
/// local-gain, decrease and seam checks. Fails if any check fails.
pub fn synthesize(
    sys: &ControlAffineSystem,
    v: &Clf,
    k_o: &Mat,
    opts: &SynthesisOptions,
) -> Result<Synthesis> {
    let artstein = check_artstein_sampled(v, sys, &opts.region, &opts.artstein)?;
    artstein_gate(&artstein)?;
    let alpha_inf = sontag_unchecked(v, sys, opts.artstein.zero_tol_coef);
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => default_grid(v.max_contained_level(
            &opts.region,
            opts.samples.n_samples,
            opts.samples.seed,
        )),
    };
    let scan = find_r0(v, sys, k_o, &grid, &opts.region, &opts.samples)?;
    let blend = blend_profile(scan.r0)?;
    let law = blended_controller(&alpha_inf, k_o, v, &blend)?;

    let local = local_gain(&law, 1e-6)?;
    let gain_error = (&local - k_o).amax();
    if gain_error > 1e-9 {
        return Err(Error::Certificate {
            what: format!("local gain differs from K_o by {gain_error:.3e}"),
            states: vec![],
        });
    }
    let decrease = verify_decrease(
        v,
        sys,
        &law,
        &opts.region,
        &opts.samples,
        Some(scan.contained_level),
    )?;
    if !decrease.passed() {
        return Err(Error::Certificate {
            what: format!(
                "blended law fails to decrease V at {} of {} samples",
                decrease.violation_count, decrease.checked
            ),
            states: decrease.violations,
        });
    }
    let seams = seam_diagnostics(&law, v, &blend, &opts.region, &opts.samples)?;
    Ok(Synthesis {
        clf: v.clone(),
        k_o: k_o.clone(),
        artstein,
        scan,
        blend,
        alpha_inf,
        law,
        local_gain: local,
        gain_error,
        decrease,
        seams,
    })
}
