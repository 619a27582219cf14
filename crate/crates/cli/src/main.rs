use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use clfsynth::clf::{BoxRegion, SampleOptions};
use clfsynth::inverse_opt::{check_cost, evaluate_cost_traced, LevelOptions, TERMINAL};
use clfsynth::linear::{lqr_gain, solve_care, LinearSystem, QuadraticWeights};
use clfsynth::numeric::{Mat, Vector};
use clfsynth::orbital::{
    build_orbital_controller, perturbed_start, simulate_orbital, OrbitalCostConfig,
    OrbitalDesignOptions, OrbitalParams, OrbitalState,
};
use clfsynth::registry::{demo, Demo};
use clfsynth::sim::{numbered, run_with_seed, RunConfig, SystemSpec};
use clfsynth::structured::backstepping_synthesize;
use clfsynth::{Error, ErrorClass, Result};

const SEED_VAR: &str = "CLFSYNTH_SEED";

#[derive(Parser)]
#[command(
    name = "clfsynth",
    version,
    about = "CLF-based feedback synthesis and inverse-optimal cost reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the CARE for {a, b, q, r} and print P, K and the residual.
    Care { problem: PathBuf },
    /// Blended synthesis for a problem file; prints the synthesis record.
    Synth { problem: PathBuf },
    /// Inverse-optimal cost reconstruction.
    Invopt {
        #[command(subcommand)]
        action: Invopt,
    },
    /// Backstepping pipeline for a strict-feedback problem.
    Backstep { problem: PathBuf },
    /// Closed-loop simulation of the orbital model.
    Orbital {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        cost: Option<PathBuf>,
        /// Comma-separated absolute state χ1..χ6; defaults to the perturbed start.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long = "T", default_value_t = 60.0)]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproducible run from a JSON config. CLFSYNTH_SEED overrides the seed.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Invopt {
    /// Build (q, r) and print r0, the level ladder and μ.
    Build { problem: PathBuf },
    /// Sampled HJB residual, q > 0, r(0) = R and Hessian checks.
    VerifyHjb {
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Cost J(x0) of the optimal feedback against V(x0).
    Cost {
        problem: PathBuf,
        /// Comma-separated initial state; repeat for a batch.
        #[arg(long, allow_hyphen_values = true, action = clap::ArgAction::Append)]
        x0: Vec<String>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long = "T", default_value_t = 60.0)]
        horizon: f64,
        /// Directory for `trace_<k>.csv` (t, x…, u…, V, integrand, q).
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

/// Problem file shared by `synth`, `invopt` and `backstep`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Problem {
    system: SystemSpec,
    /// Replaces the LQ gain of the problem.
    #[serde(default, with = "clfsynth::matrix_json::opt")]
    k_o: Option<Mat>,
    #[serde(default)]
    half_widths: Option<Vec<f64>>,
    #[serde(default)]
    grid: Option<Vec<f64>>,
    #[serde(default = "default_samples")]
    n_samples: usize,
    #[serde(default)]
    seed: u64,
}

fn default_samples() -> usize {
    4000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CareProblem {
    #[serde(with = "clfsynth::matrix_json")]
    a: Mat,
    #[serde(with = "clfsynth::matrix_json")]
    b: Mat,
    #[serde(with = "clfsynth::matrix_json")]
    q: Mat,
    #[serde(with = "clfsynth::matrix_json")]
    r: Mat,
}

/// Printed JSON plus whether every requested check passed.
struct Outcome {
    body: Value,
    passed: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out.body).expect("json");
            // a closed pipe (`| head`) is not an error of the run
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            if out.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Certificate => 3,
                ErrorClass::Divergence => 4,
            })
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(t: &T) -> Result<Value> {
    Ok(serde_json::to_value(t)?)
}

fn load_problem(path: &Path) -> Result<(Problem, Demo)> {
    let prob: Problem = read_json(path)?;
    let mut d = match &prob.system {
        SystemSpec::Demo(name) => demo(name)?,
        SystemSpec::Polynomial(p) => {
            p.spec.validate()?;
            Demo::from_polynomial(
                "polynomial",
                &p.spec,
                p.q.clone(),
                p.r.clone(),
                BoxRegion::from_half_widths(&p.half_widths)?,
            )?
        }
        SystemSpec::Orbital(_) => {
            return Err(Error::Config(
                "use the `orbital` subcommand for the orbital model".into(),
            ));
        }
    };
    if let Some(h) = &prob.half_widths {
        if h.len() != d.system.n() {
            return Err(Error::Config(
                "half_widths must have one entry per state".into(),
            ));
        }
        d.region = BoxRegion::from_half_widths(h)?;
    }
    if let Some(k) = &prob.k_o {
        if k.shape() != d.k_o.shape() {
            return Err(Error::Config(format!(
                "k_o must be {}x{}",
                d.k_o.nrows(),
                d.k_o.ncols()
            )));
        }
        d.k_o = k.clone();
    }
    if prob.n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    Ok((prob, d))
}

fn parse_state(s: &str, n: usize) -> Result<Vector> {
    let vals = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad x0 entry {t:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != n {
        return Err(Error::Config(format!(
            "x0 needs {n} entries, got {}",
            vals.len()
        )));
    }
    Ok(Vector::from_vec(vals))
}

fn execute(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Care { problem } => {
            let p: CareProblem = read_json(&problem)?;
            let sys = LinearSystem::new(p.a, p.b)?;
            let cert = solve_care(&sys, &QuadraticWeights::new(p.q, p.r.clone())?)?;
            let k = lqr_gain(&cert, &sys, &p.r)?;
            let mut body = to_value(&cert)?;
            body["k"] = to_value(&clfsynth::matrix_json::JsonMatrix::from(&k))?;
            Ok(Outcome { body, passed: true })
        }
        Command::Synth { problem } => {
            let (prob, d) = load_problem(&problem)?;
            let mut opts = d.synthesis_options(prob.n_samples, prob.seed);
            opts.grid = prob.grid;
            let syn = d.synthesize(&opts)?;
            let passed = syn.artstein.violation_count == 0
                && syn.gain_error <= 1e-9
                && syn.decrease.passed()
                && syn.seams.continuous;
            Ok(Outcome {
                body: to_value(&syn.record())?,
                passed,
            })
        }
        Command::Backstep { problem } => {
            let (prob, d) = load_problem(&problem)?;
            let Some(sf) = &d.strict_feedback else {
                return Err(Error::Config(format!(
                    "{} is not in strict-feedback form",
                    d.name
                )));
            };
            let mut opts = d.synthesis_options(prob.n_samples, prob.seed);
            opts.grid = prob.grid;
            let design = backstepping_synthesize(sf, &d.k_o, Some(&d.p), None, &opts)?;
            let syn = &design.synthesis;
            let fd = design.clf.fd_hessian_origin();
            let two_p = design.partition.reassemble() * 2.0;
            let hess_err = (&fd - &two_p).amax() / two_p.amax();
            let tpb = design.partition.tpb(sf.blocks().g).abs();
            let passed = syn.artstein.violation_count == 0
                && syn.gain_error <= 1e-9
                && syn.decrease.passed()
                && hess_err <= 1e-3
                && tpb <= 1e-12;
            Ok(Outcome {
                body: json!({
                    "partition": design.partition,
                    "hessian_rel_error": hess_err,
                    "tpb": tpb,
                    "synthesis": syn.record(),
                }),
                passed,
            })
        }
        Command::Invopt { action } => invopt(action),
        Command::Orbital {
            params,
            cost,
            x0,
            dt,
            horizon,
            out,
        } => {
            let params: OrbitalParams = match params {
                Some(p) => read_json(&p)?,
                None => OrbitalParams::default(),
            };
            let cfg: OrbitalCostConfig = match cost {
                Some(c) => read_json(&c)?,
                None => OrbitalCostConfig::default(),
            };
            if dt.is_nan() || dt <= 0.0 || horizon.is_nan() || horizon <= dt {
                return Err(Error::Config("need dt > 0 and T > dt".into()));
            }
            let s0 = match x0 {
                Some(v) => {
                    let arr: [f64; 6] = v.try_into().map_err(|v: Vec<f64>| {
                        Error::Config(format!("x0 needs 6 entries, got {}", v.len()))
                    })?;
                    OrbitalState::new(arr)?
                }
                None => perturbed_start(&params),
            };
            let ctrl =
                build_orbital_controller(&params, &cfg, None, &OrbitalDesignOptions::default())?;
            let run = simulate_orbital(&params, &ctrl.law, Some(&ctrl.v), &s0, dt, horizon)?;
            if let Some(path) = out {
                let inputs: Vec<String> = ["u_r", "u_theta", "u_h"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                std::fs::write(path, run.trajectory.to_csv(&numbered("chi", 6), &inputs)?)?;
            }
            Ok(Outcome {
                body: json!({
                    "x0": s0.as_array(),
                    "steps": run.trajectory.len() - 1,
                    "final_state": run.trajectory.final_state().as_slice(),
                    "terminal_error": run.terminal_error,
                    "max_vdot": run.max_vdot,
                    "v_increases": run.v_increases,
                    "riccati_residual": ctrl.weights.riccati_residual,
                    "r0": ctrl.design4.scan.r0,
                }),
                passed: run.v_increases == 0 && run.terminal_error <= 1e-3,
            })
        }
        Command::Run { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(dir) = out {
                cfg.output.dir = Some(dir);
            }
            let seed = match std::env::var(SEED_VAR) {
                Ok(s) => Some(
                    s.trim()
                        .parse::<u64>()
                        .map_err(|e| Error::Config(format!("{SEED_VAR}={s:?}: {e}")))?,
                ),
                Err(_) => None,
            };
            let output = run_with_seed(&cfg, seed)?;
            Ok(Outcome {
                passed: output.report.passed,
                body: to_value(&output.report)?,
            })
        }
    }
}

fn invopt(action: Invopt) -> Result<Outcome> {
    let problem = match &action {
        Invopt::Build { problem }
        | Invopt::VerifyHjb { problem, .. }
        | Invopt::Cost { problem, .. } => problem,
    };
    let (prob, d) = load_problem(problem)?;
    let levels = LevelOptions {
        n_samples: prob.n_samples,
        seed: prob.seed,
        ..Default::default()
    };
    let inv = clfsynth::inverse_opt::design_inverse_optimal(
        &d.clf,
        &d.system,
        &d.q,
        &d.r,
        &clfsynth::inverse_opt::InverseDesignOptions {
            region: d.region.clone(),
            grid: prob.grid.clone(),
            levels,
        },
    )?;
    match action {
        Invopt::Build { .. } => Ok(Outcome {
            body: json!({
                "riccati_residual": inv.riccati_residual,
                "r0": inv.scan.r0,
                "levels": inv.scan,
                "ladder": inv.ladder,
                "mu": inv.scaling,
            }),
            passed: true,
        }),
        Invopt::VerifyHjb { tol, .. } => {
            let samples = SampleOptions {
                n_samples: prob.n_samples,
                seed: prob.seed,
            };
            let cc = check_cost(
                &inv.cost,
                &d.system,
                &d.region,
                &samples,
                inv.ladder.certified_level,
            )?;
            Ok(Outcome {
                passed: cc.passed(tol),
                body: json!({ "tolerance": tol, "check": cc }),
            })
        }
        Invopt::Cost {
            x0,
            dt,
            horizon,
            traces,
            ..
        } => {
            if x0.is_empty() {
                return Err(Error::Config("give at least one --x0".into()));
            }
            let n = d.system.n();
            let starts = x0
                .iter()
                .map(|s| parse_state(s, n))
                .collect::<Result<Vec<_>>>()?;
            if let Some(dir) = &traces {
                std::fs::create_dir_all(dir)?;
            }
            let mut rows = Vec::new();
            for (k, x) in starts.iter().enumerate() {
                let (est, traj) =
                    evaluate_cost_traced(&d.system, &inv.cost, &inv.law, x, horizon, dt, TERMINAL)?;
                if let Some(dir) = &traces {
                    let csv = traj.to_csv(&numbered("x", n), &numbered("u", d.system.p()))?;
                    std::fs::write(dir.join(format!("trace_{k}.csv")), csv)?;
                }
                let v0 = d.clf.value(x);
                rows.push(json!({
                    "x0": x.as_slice(),
                    "value": v0,
                    "cost": est,
                    "rel_error": if v0 > 0.0 { (est.total - v0).abs() / v0 } else { est.total.abs() },
                }));
            }
            Ok(Outcome {
                body: Value::Array(rows),
                passed: true,
            })
        }
    }
}
