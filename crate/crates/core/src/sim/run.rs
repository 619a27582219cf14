//! JSON-configured reproducible runs: build a controller, run the requested
//! checks, simulate from the listed initial states and emit a report plus
//! one CSV per trajectory.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{integrate, numbered, Trajectory};
use crate::clf::{BoxRegion, PolySystemSpec, SampleOptions};
use crate::error::{Error, Result};
use crate::inverse_opt::{check_cost, evaluate_cost_traced, CostEstimate, LevelOptions};
use crate::numeric::{to_vec, Mat, Vector};
use crate::orbital::{
    build_orbital_controller, orbital_vector_field, perturbed_start, simulate_orbital,
    OrbitalCostConfig, OrbitalDesignOptions, OrbitalParams, OrbitalState,
};
use crate::registry::{demo, Demo, DEMOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    /// One of [`DEMOS`].
    Demo(String),
    Polynomial(PolynomialSystem),
    Orbital(OrbitalSection),
}

/// A polynomial plant seeded by the LQ design for `(q, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSystem {
    pub spec: PolySystemSpec,
    #[serde(with = "crate::matrix_json")]
    pub q: Mat,
    #[serde(with = "crate::matrix_json")]
    pub r: Mat,
    pub half_widths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitalSection {
    pub params: OrbitalParams,
    pub cost: OrbitalCostConfig,
    pub half_widths: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Blended,
    InverseOptimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "rk4")]
    pub method: String,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Relative terminal level: runs stop once `V ≤ terminal_level·V(x0)`.
    #[serde(default = "terminal_default")]
    pub terminal_level: f64,
}

fn rk4() -> String {
    "rk4".into()
}

fn terminal_default() -> f64 {
    crate::inverse_opt::TERMINAL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub seed: u64,
    pub n_samples: usize,
    /// Overrides the working box of a named demo.
    pub half_widths: Option<Vec<f64>>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 4000,
            half_widths: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub gain: f64,
    pub hjb: f64,
    /// Relative tolerance of `|J − V(x0)|`.
    pub value: f64,
    /// Per-step increase of `V` allowed, relative to `V(x0)`.
    pub monotone: f64,
    pub terminal_error: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gain: 1e-9,
            hjb: 1e-10,
            value: 1e-3,
            monotone: 1e-9,
            terminal_error: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for `report.json` and `trace_<k>.csv`; nothing is written
    /// when absent.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    #[serde(default)]
    pub controller: ControllerKind,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Initial states; absolute `χ` for the orbital model, which defaults to
    /// the perturbed start when the list is empty.
    #[serde(default)]
    pub initial_states: Vec<Vec<f64>>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Everything that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        let it = &self.integrator;
        if it.method != "rk4" {
            return Err(Error::Config(format!(
                "unknown integrator {:?}; only \"rk4\"",
                it.method
            )));
        }
        if !(it.dt > 0.0 && it.dt.is_finite()) || !(it.horizon > it.dt && it.horizon.is_finite()) {
            return Err(Error::Config("need dt > 0 and T > dt".into()));
        }
        if !(it.terminal_level > 0.0 && it.terminal_level < 1.0) {
            return Err(Error::Config("terminal_level must lie in (0, 1)".into()));
        }
        let t = &self.tolerances;
        if [t.gain, t.hjb, t.value, t.monotone, t.terminal_error]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::Config("all tolerances must be positive".into()));
        }
        if self.sampling.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        let n = match &self.system {
            SystemSpec::Demo(name) => {
                if !DEMOS.contains(&name.as_str()) {
                    return Err(Error::Config(format!(
                        "unknown system {name:?}; known: {}",
                        DEMOS.join(", ")
                    )));
                }
                None
            }
            SystemSpec::Polynomial(p) => {
                p.spec.validate()?;
                if p.half_widths.len() != p.spec.n {
                    return Err(Error::Config(
                        "half_widths must have one entry per state".into(),
                    ));
                }
                Some(p.spec.n)
            }
            SystemSpec::Orbital(_) => {
                if self.controller != ControllerKind::InverseOptimal {
                    return Err(Error::Config(
                        "the orbital system runs with controller \"inverse_optimal\"".into(),
                    ));
                }
                Some(6)
            }
        };
        if let Some(n) = n {
            if self.initial_states.iter().any(|x| x.len() != n) {
                return Err(Error::Config(format!(
                    "initial states must have {n} entries"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.output = OutputConfig::default();
        let canonical = serde_json::to_string(&cfg).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub index: usize,
    pub x0: Vec<f64>,
    pub steps: usize,
    pub t_final: f64,
    pub final_state: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub csv: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config_hash: String,
    pub seed: u64,
    pub system: String,
    pub controller: ControllerKind,
    pub passed: bool,
    pub failures: Vec<String>,
    pub checks: Vec<Check>,
    pub certificates: serde_json::Value,
    pub trajectories: Vec<TrajectorySummary>,
}

/// Report plus CSV traces, named as in the report.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub traces: Vec<(String, String)>,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report_json())?;
        for (name, csv) in &self.traces {
            std::fs::write(dir.join(name), csv)?;
        }
        Ok(())
    }
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_with_seed(config, None)
}

/// [`run`] with the sampling seed replaced by `seed` (the CLI passes
/// `CLFSYNTH_SEED`). Writes the outputs when `output.dir` is set.
pub fn run_with_seed(config: &RunConfig, seed: Option<u64>) -> Result<RunOutput> {
    let mut cfg = config.clone();
    if let Some(s) = seed {
        cfg.sampling.seed = s;
    }
    cfg.validate()?;
    let out = match &cfg.system {
        SystemSpec::Orbital(section) => run_orbital(&cfg, section)?,
        other => {
            let mut d = match other {
                SystemSpec::Demo(name) => demo(name)?,
                SystemSpec::Polynomial(p) => Demo::from_polynomial(
                    "polynomial",
                    &p.spec,
                    p.q.clone(),
                    p.r.clone(),
                    BoxRegion::from_half_widths(&p.half_widths)?,
                )?,
                SystemSpec::Orbital(_) => unreachable!(),
            };
            if let Some(h) = &cfg.sampling.half_widths {
                if h.len() != d.system.n() {
                    return Err(Error::Config(
                        "half_widths must have one entry per state".into(),
                    ));
                }
                d.region = BoxRegion::from_half_widths(h)?;
            }
            match cfg.controller {
                ControllerKind::Blended => run_blended(&cfg, &d)?,
                ControllerKind::InverseOptimal => run_inverse(&cfg, &d)?,
            }
        }
    };
    if let Some(dir) = &cfg.output.dir {
        out.write(dir)?;
    }
    Ok(out)
}

fn finish(
    cfg: &RunConfig,
    system: String,
    checks: Vec<Check>,
    certificates: serde_json::Value,
    trajectories: Vec<TrajectorySummary>,
    traces: Vec<(String, String)>,
) -> RunOutput {
    let failures: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    RunOutput {
        report: RunReport {
            config_hash: cfg.hash(),
            seed: cfg.sampling.seed,
            system,
            controller: cfg.controller,
            passed: failures.is_empty(),
            failures,
            checks,
            certificates,
            trajectories,
        },
        traces,
    }
}

fn trace_name(k: usize) -> String {
    format!("trace_{k}.csv")
}

/// Largest per-step increase of an annotated `V`, relative to its start.
fn worst_increase(traj: &Trajectory) -> f64 {
    let v = &traj.annotations["V"];
    let scale = v[0].max(f64::MIN_POSITIVE);
    v.windows(2)
        .map(|w| (w[1] - w[0]) / scale)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn run_blended(cfg: &RunConfig, d: &Demo) -> Result<RunOutput> {
    let opts = d.synthesis_options(cfg.sampling.n_samples, cfg.sampling.seed);
    let syn = d.synthesize(&opts)?;
    let mut checks = vec![
        Check::at_most("artstein", syn.artstein.violation_count as f64, 0.0),
        Check::at_most("local_gain", syn.gain_error, cfg.tolerances.gain),
        Check::at_most("decrease", syn.decrease.violation_count as f64, 0.0),
        Check {
            name: "seams".into(),
            passed: syn.seams.continuous,
            value: syn.seams.seam_quotient,
            tolerance: 2.0 * syn.seams.lipschitz_estimate,
        },
    ];
    let it = &cfg.integrator;
    let runs: Vec<Result<Trajectory>> = cfg
        .initial_states
        .par_iter()
        .map(|x0| {
            let x0 = Vector::from_row_slice(x0);
            let v0 = syn.clf.value(&x0);
            let stop = |x: &Vector| syn.clf.value(x) <= it.terminal_level * v0;
            let mut traj = integrate(&d.system, &syn.law, &x0, it.dt, it.horizon, Some(&stop))?;
            let vs = traj.states.iter().map(|x| syn.clf.value(x)).collect();
            traj.annotate("V", vs)?;
            Ok(traj)
        })
        .collect();
    let (n, p) = (d.system.n(), d.system.p());
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for (k, traj) in runs.into_iter().enumerate() {
        let traj = traj?;
        checks.push(Check::at_most(
            format!("monotone[{k}]"),
            worst_increase(&traj),
            cfg.tolerances.monotone,
        ));
        summaries.push(TrajectorySummary {
            index: k,
            x0: cfg.initial_states[k].clone(),
            steps: traj.len() - 1,
            t_final: *traj.times.last().expect("nonempty"),
            final_state: to_vec(traj.final_state()),
            cost: None,
            value: None,
            csv: trace_name(k),
        });
        traces.push((
            trace_name(k),
            traj.to_csv(&numbered("x", n), &numbered("u", p))?,
        ));
    }
    let certs = serde_json::to_value(syn.record())?;
    Ok(finish(
        cfg,
        d.name.clone(),
        checks,
        certs,
        summaries,
        traces,
    ))
}

fn run_inverse(cfg: &RunConfig, d: &Demo) -> Result<RunOutput> {
    let levels = LevelOptions {
        n_samples: cfg.sampling.n_samples,
        seed: cfg.sampling.seed,
        ..Default::default()
    };
    let inv = d.inverse_design(&levels)?;
    let samples = SampleOptions {
        n_samples: cfg.sampling.n_samples,
        seed: cfg.sampling.seed,
    };
    let cc = check_cost(
        &inv.cost,
        &d.system,
        &d.region,
        &samples,
        inv.ladder.certified_level,
    )?;
    let mut checks = vec![
        Check::at_most("riccati", inv.riccati_residual, 1e-6 * (1.0 + d.q.norm())),
        Check::at_most("hjb", cc.max_hjb_residual, cfg.tolerances.hjb),
        Check::at_most("q_nonpositive", cc.nonpositive_q as f64, 0.0),
        Check::at_most("hessian_q", cc.hessian_q_rel_error, 1e-3),
        Check {
            name: "r_origin".into(),
            passed: cc.r0_exact,
            value: if cc.r0_exact { 0.0 } else { 1.0 },
            tolerance: 0.0,
        },
    ];
    let it = &cfg.integrator;
    let runs: Vec<Result<(CostEstimate, Trajectory)>> = cfg
        .initial_states
        .par_iter()
        .map(|x0| {
            evaluate_cost_traced(
                &d.system,
                &inv.cost,
                &inv.law,
                &Vector::from_row_slice(x0),
                it.horizon,
                it.dt,
                it.terminal_level,
            )
        })
        .collect();
    let (n, p) = (d.system.n(), d.system.p());
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    for (k, run) in runs.into_iter().enumerate() {
        let (est, traj) = run?;
        let v0 = d.clf.value(&Vector::from_row_slice(&cfg.initial_states[k]));
        let rel = if v0 == 0.0 {
            est.total.abs()
        } else {
            (est.total - v0).abs() / v0
        };
        checks.push(Check::at_most(
            format!("value[{k}]"),
            rel,
            cfg.tolerances.value,
        ));
        summaries.push(TrajectorySummary {
            index: k,
            x0: cfg.initial_states[k].clone(),
            steps: est.steps,
            t_final: est.t_final,
            final_state: to_vec(traj.final_state()),
            cost: Some(est),
            value: Some(v0),
            csv: trace_name(k),
        });
        traces.push((
            trace_name(k),
            traj.to_csv(&numbered("x", n), &numbered("u", p))?,
        ));
    }
    let certs = serde_json::json!({
        "r0": inv.scan.r0,
        "levels": inv.scan,
        "ladder": inv.ladder,
        "mu": inv.scaling,
        "cost_check": cc,
    });
    Ok(finish(
        cfg,
        d.name.clone(),
        checks,
        certs,
        summaries,
        traces,
    ))
}

fn run_orbital(cfg: &RunConfig, section: &OrbitalSection) -> Result<RunOutput> {
    let params = section.params;
    let mut opts = OrbitalDesignOptions::default();
    if let Some(h) = section.half_widths {
        opts.half_widths = h;
    }
    opts.artstein.n_samples = cfg.sampling.n_samples;
    opts.artstein.seed = cfg.sampling.seed;
    opts.levels.n_samples = cfg.sampling.n_samples;
    opts.levels.seed = cfg.sampling.seed;
    let ctrl = build_orbital_controller(&params, &section.cost, None, &opts)?;
    let star = OrbitalState::new(
        params
            .equilibrium()
            .as_slice()
            .try_into()
            .expect("six entries"),
    )?;
    let eq = orbital_vector_field(&params, &star, &Vector::zeros(3))?.amax();
    let samples = SampleOptions {
        n_samples: cfg.sampling.n_samples,
        seed: cfg.sampling.seed,
    };
    let region4 = BoxRegion::from_half_widths(&opts.half_widths)?;
    let cc = check_cost(
        &ctrl.design4.cost,
        &ctrl.system4,
        &region4,
        &samples,
        f64::INFINITY,
    )?;
    let mut checks = vec![
        Check::at_most("equilibrium", eq, 1e-14),
        Check::at_most("hjb4", cc.max_hjb_residual, cfg.tolerances.hjb),
        Check::at_most("artstein_v0", ctrl.artstein_v0.violation_count as f64, 0.0),
    ];
    let starts: Vec<OrbitalState> = if cfg.initial_states.is_empty() {
        vec![perturbed_start(&params)]
    } else {
        cfg.initial_states
            .iter()
            .map(|x| OrbitalState::new(x.as_slice().try_into().expect("validated length")))
            .collect::<Result<_>>()?
    };
    let it = &cfg.integrator;
    let runs: Vec<_> = starts
        .par_iter()
        .map(|s0| simulate_orbital(&params, &ctrl.law, Some(&ctrl.v), s0, it.dt, it.horizon))
        .collect();
    let mut summaries = Vec::new();
    let mut traces = Vec::new();
    let state_names = numbered("chi", 6);
    let input_names: Vec<String> = ["u_r", "u_theta", "u_h"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for (k, run) in runs.into_iter().enumerate() {
        let run = run?;
        checks.push(Check::at_most(
            format!("monotone[{k}]"),
            worst_increase(&run.trajectory),
            cfg.tolerances.monotone,
        ));
        checks.push(Check::at_most(
            format!("terminal[{k}]"),
            run.terminal_error,
            cfg.tolerances.terminal_error,
        ));
        let traj = &run.trajectory;
        summaries.push(TrajectorySummary {
            index: k,
            x0: starts[k].as_array().to_vec(),
            steps: traj.len() - 1,
            t_final: *traj.times.last().expect("nonempty"),
            final_state: to_vec(traj.final_state()),
            cost: None,
            value: None,
            csv: trace_name(k),
        });
        traces.push((trace_name(k), traj.to_csv(&state_names, &input_names)?));
    }
    let certs = serde_json::json!({
        "p0": crate::numeric::to_rows(&ctrl.weights.p0),
        "riccati_residual": ctrl.weights.riccati_residual,
        "artstein_v0": ctrl.artstein_v0,
        "r0": ctrl.design4.scan.r0,
        "ladder": ctrl.design4.ladder,
        "cost_check_4state": cc,
    });
    Ok(finish(
        cfg,
        "orbital".into(),
        checks,
        certs,
        summaries,
        traces,
    ))
}
