//! Sampled certificates: the Artstein condition, the local-decrease level
//! search and the blend profile.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lie_derivatives, BoxRegion, Clf, ControlAffineSystem};
use crate::error::{Error, Result};
use crate::linear::is_hurwitz;
use crate::numeric::{fd_jacobian, to_vec, Mat, Vector};

/// How many offending states an error or report keeps.
const KEEP_STATES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtsteinOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// `L_bV(x)` counts as zero when `‖L_bV(x)‖ ≤ zero_tol_coef·(1 + ‖∇V(x)‖)`.
    pub zero_tol_coef: f64,
    /// Also pull every sample onto `{L_bV = 0}` by Gauss–Newton and test there.
    pub project: bool,
}

impl Default for ArtsteinOptions {
    fn default() -> Self {
        Self {
            n_samples: 4000,
            seed: 0,
            zero_tol_coef: 1e-7,
            project: true,
        }
    }
}

/// Outcome of the sampled Artstein check. A clean report is evidence, not a proof.
#[derive(Debug, Clone, Serialize)]
pub struct ArtsteinReport {
    /// Number of nonzero states tested (raw samples plus projected points).
    pub checked: usize,
    /// Raw samples that already had `L_bV ≈ 0`.
    pub near_kernel: usize,
    /// Points obtained by projecting samples onto `{L_bV = 0}` inside the box.
    pub projected: usize,
    pub violations: Vec<Vec<f64>>,
    pub violation_count: usize,
}

impl ArtsteinReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

enum Probe {
    Skip,
    Fine,
    Kernel { ok: bool },
}

fn probe(v: &Clf, sys: &ControlAffineSystem, x: &Vector, coef: f64) -> Probe {
    if x.norm() == 0.0 {
        return Probe::Skip;
    }
    let g = v.gradient(x);
    let lb = sys.input(x).transpose() * &g;
    if lb.norm() > coef * (1.0 + g.norm()) {
        return Probe::Fine;
    }
    let la = g.dot(&sys.drift(x));
    Probe::Kernel { ok: la < 0.0 }
}

/// Gauss–Newton on `L_bV(x) = 0`, minimum-norm steps.
fn project_to_kernel(v: &Clf, sys: &ControlAffineSystem, x0: &Vector, coef: f64) -> Option<Vector> {
    let phi = |x: &Vector| lie_derivatives(v, sys, x).1;
    let mut x = x0.clone();
    for _ in 0..12 {
        let g = v.gradient(&x);
        let f = phi(&x);
        if f.norm() <= coef * (1.0 + g.norm()) {
            return Some(x);
        }
        let jac = fd_jacobian(&phi, &x, 1e-6);
        let eps = 1e-12 * (1.0 + jac.amax());
        let pinv = jac.pseudo_inverse(eps).ok()?;
        let step = pinv * f;
        if !step.iter().all(|s| s.is_finite()) {
            return None;
        }
        x -= step;
    }
    None
}

/// Tests `L_bV(x) = 0 ⇒ L_aV(x) < 0` on low-discrepancy samples of the box.
pub fn check_artstein_sampled(
    v: &Clf,
    sys: &ControlAffineSystem,
    region: &BoxRegion,
    opts: &ArtsteinOptions,
) -> Result<ArtsteinReport> {
    if v.n() != sys.n() || region.dim() != sys.n() {
        return Err(Error::dim(
            "V, system and box must share the state dimension",
        ));
    }
    if opts.n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let samples = region.sample_multiscale(opts.n_samples, opts.seed);
    let width = region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max);
    let coef = opts.zero_tol_coef;

    // (tested, near_kernel, projected, violation)
    let results: Vec<(usize, bool, bool, Option<Vector>)> = samples
        .par_iter()
        .flat_map_iter(|x| {
            let mut out = Vec::with_capacity(2);
            match probe(v, sys, x, coef) {
                Probe::Skip => {}
                Probe::Kernel { ok } => out.push((1, true, false, (!ok).then(|| x.clone()))),
                Probe::Fine => {
                    out.push((1, false, false, None));
                    if opts.project {
                        if let Some(y) = project_to_kernel(v, sys, x, coef) {
                            if region.contains(&y) && y.norm() > 1e-4 * width {
                                if let Probe::Kernel { ok } = probe(v, sys, &y, coef) {
                                    out.push((1, false, true, (!ok).then_some(y)));
                                }
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut report = ArtsteinReport {
        checked: 0,
        near_kernel: 0,
        projected: 0,
        violations: Vec::new(),
        violation_count: 0,
    };
    for (tested, near, projected, bad) in results {
        report.checked += tested;
        report.near_kernel += near as usize;
        report.projected += projected as usize;
        if let Some(x) = bad {
            report.violation_count += 1;
            if report.violations.len() < KEEP_STATES {
                report.violations.push(to_vec(&x));
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelVerdict {
    Pass,
    Fail,
    /// No sample fell in the sublevel set; never counts as a pass.
    Empty,
    /// The sublevel set is not contained in the sampled box.
    OutsideBox,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelStatus {
    pub level: f64,
    pub samples: usize,
    pub verdict: LevelVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelScan {
    pub r0: f64,
    pub contained_level: f64,
    pub levels: Vec<LevelStatus>,
    /// Lowest-V failing samples, if any level failed.
    pub failures: Vec<Vec<f64>>,
}

/// Margin for strict decrease tests, `1e−9·(V(x) + |L_aV(x)|)`. It scales with
/// `V` so that states close to the origin, where `V̇ = O(|x|²)`, are judged
/// on the same relative footing as distant ones.
pub fn decrease_margin(v: f64, la: f64) -> f64 {
    1e-9 * (v + la.abs())
}

/// Largest grid level `r` such that `ok(x)` holds at every sample with
/// `0 < V(x) ≤ r`. Levels are scanned in increasing order over one sample
/// set, so a passing level implies every lower nonempty level passes.
pub fn scan_levels(
    v: &Clf,
    region: &BoxRegion,
    grid: &[f64],
    opts: &SampleOptions,
    what: &str,
    ok: impl Fn(&Vector) -> bool + Sync,
) -> Result<LevelScan> {
    if grid.is_empty() || grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::invalid(
            "level grid must be nonempty, finite and positive",
        ));
    }
    if region.dim() != v.n() {
        return Err(Error::dim("box and V have different dimensions"));
    }
    let mut levels: Vec<f64> = grid.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let contained_level = v.max_contained_level(region, opts.n_samples, opts.seed);
    let samples = region.sample_multiscale(opts.n_samples, opts.seed);
    let mut evaluated: Vec<(f64, bool, &Vector)> = samples
        .par_iter()
        .filter_map(|x| {
            let val = v.value(x);
            (val > 0.0).then(|| (val, ok(x), x))
        })
        .collect();
    evaluated.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first_fail = evaluated
        .iter()
        .find(|e| !e.1)
        .map_or(f64::INFINITY, |e| e.0);
    let failures: Vec<Vec<f64>> = evaluated
        .iter()
        .filter(|e| !e.1)
        .take(KEEP_STATES)
        .map(|e| to_vec(e.2))
        .collect();

    let mut statuses = Vec::with_capacity(levels.len());
    let mut r0 = None;
    for level in levels {
        let count = evaluated.partition_point(|e| e.0 <= level);
        let verdict = if level > contained_level {
            LevelVerdict::OutsideBox
        } else if count == 0 {
            LevelVerdict::Empty
        } else if level < first_fail {
            r0 = Some(level);
            LevelVerdict::Pass
        } else {
            LevelVerdict::Fail
        };
        statuses.push(LevelStatus {
            level,
            samples: count,
            verdict,
        });
    }
    match r0 {
        Some(r0) => Ok(LevelScan {
            r0,
            contained_level,
            levels: statuses,
            failures,
        }),
        None => Err(Error::Certificate {
            what: format!(
                "{what}: no grid level passes (smallest level {:.3e}, box holds levels up to {contained_level:.3e}); \
                 refine the grid toward zero, or V is not locally compatible with the prescribed gain",
                statuses[0].level
            ),
            states: failures,
        }),
    }
}

/// Largest grid level on which `L_aV + L_bV·K_o x < −δ(x)` at every sample.
pub fn find_r0(
    v: &Clf,
    sys: &ControlAffineSystem,
    k_o: &Mat,
    grid: &[f64],
    region: &BoxRegion,
    opts: &SampleOptions,
) -> Result<LevelScan> {
    let lin = sys.linearization();
    let a_cl = lin.closed_loop(k_o)?;
    if !is_hurwitz(&a_cl)? {
        return Err(Error::NotHurwitz {
            what: "A + B K_o".into(),
            abscissa: crate::numeric::spectral_abscissa(&a_cl),
        });
    }
    if v.n() != sys.n() {
        return Err(Error::dim("V and system have different dimensions"));
    }
    scan_levels(v, region, grid, opts, "local decrease under K_o", |x| {
        let (la, lb) = lie_derivatives(v, sys, x);
        la + lb.dot(&(k_o * x)) < -decrease_margin(v.value(x), la)
    })
}

/// `ρ(s) = 0` for `s ≤ r0/2`, `1` for `s ≥ r0`, cubic smoothstep between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendProfile {
    r0: f64,
}

impl BlendProfile {
    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn eval(&self, s: f64) -> f64 {
        let half = 0.5 * self.r0;
        if s <= half {
            0.0
        } else if s >= self.r0 {
            1.0
        } else {
            let t = (s - half) / half;
            t * t * (3.0 - 2.0 * t)
        }
    }

    /// Lipschitz constant of the profile, `3 / r0`.
    pub fn lipschitz(&self) -> f64 {
        3.0 / self.r0
    }
}

pub fn blend_profile(r0: f64) -> Result<BlendProfile> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::invalid(format!(
            "blend level r0 must be positive, got {r0}"
        )));
    }
    Ok(BlendProfile { r0 })
}
