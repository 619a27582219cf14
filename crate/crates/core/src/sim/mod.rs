//! Fixed-step RK4 closed-loop integration, trajectories and run configs.

mod run;

pub use run::{
    run, run_with_seed, Check, ControllerKind, IntegratorConfig, OrbitalSection, OutputConfig,
    PolynomialSystem, RunConfig, RunOutput, RunReport, SamplingConfig, SystemSpec, Tolerances,
    TrajectorySummary,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::clf::ControlAffineSystem;
use crate::error::{Error, Result};
use crate::numeric::{to_vec, Vector};
use crate::synthesis::FeedbackLaw;

/// Sampled closed-loop solution: `states[k]` at `times[k]` with the input
/// `inputs[k]` applied there.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    /// Optional per-step scalars (V, V̇, cost integrand, …), same length as `times`.
    pub annotations: BTreeMap<String, Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &Vector {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    pub fn push(&mut self, t: f64, x: Vector, u: Vector) {
        self.times.push(t);
        self.states.push(x);
        self.inputs.push(u);
    }

    pub fn annotate(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::dim(format!(
                "annotation {name} has {} entries for {} steps",
                values.len(),
                self.len()
            )));
        }
        self.annotations.insert(name.to_string(), values);
        Ok(())
    }

    /// Equal lengths, strictly increasing times, finite entries.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.states.len() != n
            || self.inputs.len() != n
            || self.annotations.values().any(|a| a.len() != n)
        {
            return Err(Error::dim("trajectory columns have different lengths"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "trajectory times are not strictly increasing",
            ));
        }
        let finite = self.times.iter().all(|v| v.is_finite())
            && self
                .states
                .iter()
                .chain(&self.inputs)
                .all(|x| x.iter().all(|v| v.is_finite()))
            && self.annotations.values().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("trajectory holds non-finite entries"));
        }
        Ok(())
    }

    /// CSV with columns `t, <state names>, <input names>, <annotations>`.
    /// Numbers use Rust's shortest round-trip formatting.
    pub fn to_csv(&self, state_names: &[String], input_names: &[String]) -> Result<String> {
        let n = self.states.first().map_or(0, |x| x.len());
        let p = self.inputs.first().map_or(0, |u| u.len());
        if state_names.len() != n || input_names.len() != p {
            return Err(Error::dim("column names do not match the trajectory"));
        }
        let mut out = String::new();
        let mut header = vec!["t".to_string()];
        header.extend(state_names.iter().cloned());
        header.extend(input_names.iter().cloned());
        header.extend(self.annotations.keys().cloned());
        out.push_str(&header.join(","));
        out.push('\n');
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            row.extend(self.states[k].iter());
            row.extend(self.inputs[k].iter());
            row.extend(self.annotations.values().map(|a| a[k]));
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Default column names `x1..xn`.
pub fn numbered(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|i| format!("{prefix}{i}")).collect()
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(f: &dyn Fn(&Vector) -> Vector, x: &Vector, dt: f64) -> Vector {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Step sizes covering `[0, horizon]`: `dt` repeated, with a shorter last
/// step when `horizon` is not a multiple of `dt`. Times are `k·dt`, never
/// accumulated.
pub fn step_schedule(dt: f64, horizon: f64) -> Result<Vec<(f64, f64)>> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid("dt and horizon must be positive and finite"));
    }
    let full = (horizon / dt * (1.0 + 1e-12)).floor() as usize;
    let mut steps: Vec<(f64, f64)> = (0..full).map(|k| (k as f64 * dt, dt)).collect();
    let covered = full as f64 * dt;
    if horizon - covered > 1e-9 * dt {
        steps.push((covered, horizon - covered));
    }
    Ok(steps)
}

/// Integrates `ẋ = a(x) + b(x)·α(x)` from `x0` with fixed-step RK4 until
/// `horizon`, or until `stop(x)` holds after a step.
pub fn integrate(
    sys: &ControlAffineSystem,
    law: &FeedbackLaw,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    stop: Option<&dyn Fn(&Vector) -> bool>,
) -> Result<Trajectory> {
    if x0.len() != sys.n() || law.n() != sys.n() || law.p() != sys.p() {
        return Err(Error::dim(
            "initial state, law and system disagree on dimensions",
        ));
    }
    let closed = |x: &Vector| sys.field(x, &law.eval(x));
    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    traj.push(0.0, x.clone(), law.eval(&x));
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("initial state is not finite"));
    }
    for (t, h) in step_schedule(dt, horizon)? {
        let next = rk4_step(&closed, &x, h);
        let u = law.eval(&next);
        if !next.iter().chain(u.iter()).all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                t: t + h,
                state: to_vec(&x),
            });
        }
        x = next;
        traj.push(t + h, x.clone(), u);
        if stop.is_some_and(|s| s(&x)) {
            break;
        }
    }
    Ok(traj)
}
