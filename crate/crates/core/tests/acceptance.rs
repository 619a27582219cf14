//! Acceptance suite: one PASS/FAIL line per criterion, each with its time
//! budget. Runs without the libtest harness so the lines print in order.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use clfsynth::clf::{lie_derivatives, BoxRegion, Clf, ControlAffineSystem};
use clfsynth::inverse_opt::{
    design_inverse_optimal, evaluate_cost, InverseDesign, InverseDesignOptions, InverseOptimalCost,
    LevelOptions,
};
use clfsynth::linear::{
    lqr_gain, solve_care, solve_care_with, LinearCoreConfig, LinearSystem, QuadraticWeights,
};
use clfsynth::numeric::{Mat, Vector};
use clfsynth::orbital::{
    build_orbital_controller, orbital_vector_field, perturbed_start, simulate_orbital,
    OrbitalCostConfig, OrbitalDesignOptions, OrbitalParams, OrbitalState,
};
use clfsynth::registry::{demo, Demo, DEMOS};
use clfsynth::sim::{integrate, run, RunConfig};
use clfsynth::structured::{backstepping_partition, backstepping_synthesize, StrictFeedbackSystem};
use clfsynth::synthesis::{FeedbackLaw, LawKind, Synthesis};
use clfsynth::Error;

/// Demos with a blended synthesis under test.
const BLENDED: [&str; 3] = ["scalar_cubic", "strict_feedback_demo", "reduced_orbital"];

type Verdict = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Central-difference Hessian at the origin.
fn fd_hessian(f: &dyn Fn(&Vector) -> f64, n: usize, h: f64) -> Mat {
    let e = |i: usize| {
        let mut v = Vector::zeros(n);
        v[i] = h;
        v
    };
    Mat::from_fn(n, n, |i, j| {
        let (ei, ej) = (e(i), e(j));
        (f(&(&ei + &ej)) - f(&(&ei - &ej)) - f(&(&ej - &ei)) + f(&(-&ei - &ej))) / (4.0 * h * h)
    })
}

fn rel_err(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax() / b.amax()
}

fn inverse_design(d: &Demo) -> std::result::Result<InverseDesign, String> {
    d.inverse_design(&LevelOptions::default()).map_err(e2s)
}

fn synth(d: &Demo, n_samples: usize) -> std::result::Result<Synthesis, String> {
    d.synthesize(&d.synthesis_options(n_samples, 0))
        .map_err(e2s)
}

/// `q + L_aV − ¼ L_bV r⁻¹ L_bVᵀ`, evaluated from its definition.
fn hjb(cost: &InverseOptimalCost, sys: &ControlAffineSystem, x: &Vector) -> f64 {
    let (la, lb) = lie_derivatives(cost.value_function(), sys, x);
    let r_inv = cost.r(x).try_inverse().expect("r invertible");
    cost.q(x) + la - 0.25 * (lb.transpose() * r_inv * &lb)[(0, 0)]
}

/// States with `0 < V ≤ level` from the box, at least `count` of them.
fn level_samples(v: &Clf, region: &BoxRegion, level: f64, count: usize) -> Vec<Vector> {
    let mut pool = 2 * count;
    loop {
        let xs: Vec<Vector> = region
            .sample_multiscale(pool, 11)
            .into_iter()
            .filter(|x| {
                let s = v.value(x);
                s > 0.0 && s <= level
            })
            .take(count)
            .collect();
        if xs.len() == count || pool > 64 * count {
            return xs;
        }
        pool *= 2;
    }
}

fn value_starts(d: &Demo, level: f64, count: usize) -> Vec<Vector> {
    d.region
        .scaled(0.9)
        .sample(40 * count, 3)
        .into_iter()
        .filter(|x| {
            let s = d.clf.value(x);
            s > 1e-3 * level && s <= level
        })
        .take(count)
        .collect()
}

/// Every draw counts; nothing is re-seeded or filtered beyond
/// stabilizability. A residual above the bound is reported with `‖P‖` and
/// the spread of residuals under one-ulp perturbations of `P`, which shows
/// whether the bound is resolvable in double precision for that draw.
fn c1_care() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut over = Vec::new();
    while count < 100 {
        let n = rng.random_range(1..=10);
        let p = rng.random_range(1..=3usize.min(n));
        let mut u = |r, c| Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let a = u(n, n);
        let b = u(n, p);
        let m = u(n, n);
        let nn = u(p, p);
        let q = m.transpose() * &m + Mat::identity(n, n) * 0.1;
        let r = nn.transpose() * &nn + Mat::identity(p, p) * 0.5;
        let sys = LinearSystem::new(a.clone(), b.clone()).map_err(e2s)?;
        if !sys.is_stabilizable() {
            continue;
        }
        count += 1;
        let w = QuadraticWeights::new(q.clone(), r.clone()).map_err(e2s)?;
        // refused certificates are re-solved without the bound, for the report
        let cert = match solve_care(&sys, &w) {
            Ok(c) => c,
            Err(Error::NoConvergence { .. }) => solve_care_with(
                &sys,
                &w,
                &LinearCoreConfig {
                    care_bound: f64::INFINITY,
                    ..Default::default()
                },
            )
            .map_err(|e| format!("instance {count} (n={n}, p={p}): {e}"))?,
            Err(e) => return Err(format!("instance {count} (n={n}, p={p}): {e}")),
        };
        let pm = &cert.p;
        let r_inv = r.clone().try_inverse().ok_or("R singular")?;
        let scaled = |pm: &Mat| {
            (pm * &a + a.transpose() * pm - pm * &b * &r_inv * b.transpose() * pm + &q).norm()
                / (1.0 + q.norm())
        };
        let res = scaled(pm);
        worst = worst.max(res);
        if res > 1e-8 {
            let mut ulp = ChaCha8Rng::seed_from_u64(count);
            let mut spread: Vec<f64> = (0..200)
                .map(|_| {
                    let d = Mat::from_fn(n, n, |i, j| {
                        pm[(i, j)] * f64::EPSILON * ulp.random_range(-1.0..1.0)
                    });
                    scaled(&(pm + (&d + d.transpose()) * 0.5))
                })
                .collect();
            spread.sort_by(f64::total_cmp);
            over.push(format!(
                "#{count} (n={n}, p={p}, ‖P‖={:.1e}) residual {res:.2e}, one-ulp perturbations of P give {:.1e}..{:.1e}",
                pm.norm(),
                spread[0],
                spread[199]
            ));
        }
        ensure(
            (pm - pm.transpose()).amax() <= 1e-12 * pm.amax() && pm.clone().cholesky().is_some(),
            || format!("instance {count}: P not SPD"),
        )?;
        let k = lqr_gain(&cert, &sys, &r).map_err(e2s)?;
        let abscissa = (&a + &b * k)
            .complex_eigenvalues()
            .iter()
            .map(|z: &Complex<f64>| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(abscissa < 0.0, || {
            format!("instance {count}: closed loop abscissa {abscissa:.2e}")
        })?;
    }
    ensure(over.is_empty(), || {
        format!(
            "{} of 100 above 1e-8·(1+‖Q‖): {}",
            over.len(),
            over.join("; ")
        )
    })?;
    Ok(format!("100 instances, worst scaled residual {worst:.2e}"))
}

fn c2_local_gain() -> Verdict {
    let mut parts = Vec::new();
    for name in BLENDED {
        let d = demo(name).map_err(e2s)?;
        let syn = synth(&d, 4000)?;
        let (n, h) = (d.system.n(), 1e-6);
        let mut fd = Mat::zeros(d.system.p(), n);
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = h;
            fd.set_column(j, &((syn.law.eval(&e) - syn.law.eval(&-&e)) / (2.0 * h)));
        }
        let err = (&fd - &d.k_o).amax();
        ensure(err <= 1e-9, || format!("{name}: |K_fd − K_o| = {err:.2e}"))?;
        parts.push(format!("{name} {err:.1e}"));
    }
    Ok(parts.join(", "))
}

fn c3_decrease() -> Verdict {
    let mut parts = Vec::new();
    for name in DEMOS {
        let d = demo(name).map_err(e2s)?;
        let syn = synth(&d, 4000)?;
        let xs: Vec<Vector> = d
            .region
            .sample_multiscale(10_000, 5)
            .into_iter()
            .filter(|x| x.norm() > 0.0)
            .collect();
        ensure(xs.len() >= 10_000, || {
            format!("{name}: only {} nonzero samples", xs.len())
        })?;
        let bad = xs
            .par_iter()
            .filter(|x| {
                let xdot = d.system.drift(x) + d.system.input(x) * syn.law.eval(x);
                syn.clf.gradient(x).dot(&xdot) >= 0.0
            })
            .count();
        ensure(bad == 0, || format!("{name}: {bad} states with V̇ ≥ 0"))?;
        let starts = d.region.sample(100, 7);
        let worst = starts
            .par_iter()
            .map(|x0| {
                let v0 = syn.clf.value(x0);
                let stop = |x: &Vector| syn.clf.value(x) <= 1e-8 * v0;
                let traj =
                    integrate(&d.system, &syn.law, x0, 0.01, 40.0, Some(&stop)).map_err(e2s)?;
                let vs: Vec<f64> = traj.states.iter().map(|x| syn.clf.value(x)).collect();
                Ok(vs
                    .windows(2)
                    .map(|w| (w[1] - w[0]) / w[0])
                    .fold(f64::NEG_INFINITY, f64::max))
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        ensure(worst <= 1e-9, || {
            format!("{name}: V grew by {worst:.2e}·V in one step")
        })?;
        parts.push(format!("{name} ok"));
    }
    Ok(format!(
        "10⁴ states and 100 trajectories each: {}",
        parts.join(", ")
    ))
}

fn c4_reconstruction() -> Verdict {
    let mut parts = Vec::new();
    for name in DEMOS {
        let d = demo(name).map_err(e2s)?;
        let inv = inverse_design(&d)?;
        let xs = level_samples(&d.clf, &d.region, inv.ladder.certified_level, 10_000);
        ensure(xs.len() == 10_000, || {
            format!("{name}: only {} samples in the certified set", xs.len())
        })?;
        let rows: Vec<(f64, f64)> = xs
            .par_iter()
            .map(|x| (hjb(&inv.cost, &d.system, x).abs(), inv.cost.q(x)))
            .collect();
        let max_res = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let min_q = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        ensure(max_res <= 1e-10, || {
            format!("{name}: HJB residual {max_res:.2e}")
        })?;
        ensure(min_q > 0.0, || format!("{name}: min q {min_q:.2e}"))?;
        let n = d.system.n();
        let hq = fd_hessian(&|x: &Vector| inv.cost.q(x), n, 1e-4);
        let he = rel_err(&hq, &(&d.q * 2.0));
        ensure(he <= 1e-3, || format!("{name}: H(q)(0) vs 2Q {he:.2e}"))?;
        ensure(inv.cost.r(&Vector::zeros(n)) == d.r, || {
            format!("{name}: r(0) ≠ R")
        })?;
        parts.push(format!("{name} hjb {max_res:.1e} H(q) {he:.1e}"));
    }
    Ok(parts.join(", "))
}

fn c5_value() -> Verdict {
    let mut parts = Vec::new();
    for name in DEMOS {
        let d = demo(name).map_err(e2s)?;
        let inv = inverse_design(&d)?;
        let starts = value_starts(&d, inv.ladder.certified_level, 20);
        ensure(starts.len() == 20, || {
            format!("{name}: only {} initial states", starts.len())
        })?;
        let worst = starts
            .par_iter()
            .map(|x0| {
                let est =
                    evaluate_cost(&d.system, &inv.cost, &inv.law, x0, 200.0, 0.01).map_err(e2s)?;
                let v = d.clf.value(x0);
                Ok((est.total - v).abs() / v)
            })
            .collect::<std::result::Result<Vec<f64>, String>>()?
            .into_iter()
            .fold(0.0, f64::max);
        ensure(worst <= 1e-3, || format!("{name}: |J − V|/V = {worst:.2e}"))?;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let d = demo("scalar_lq").map_err(e2s)?;
    let inv = inverse_design(&d)?;
    let root = 1.0 + 2f64.sqrt();
    for x0 in [0.5, 1.0, -1.5, 2.5] {
        let est = evaluate_cost(
            &d.system,
            &inv.cost,
            &inv.law,
            &Vector::from_element(1, x0),
            100.0,
            0.01,
        )
        .map_err(e2s)?;
        let exact = root * x0 * x0;
        let rel = (est.total - exact).abs() / exact;
        ensure(rel <= 1e-3, || {
            format!("scalar LQ x0 = {x0}: J = {} vs {exact}", est.total)
        })?;
    }
    parts.push("scalar LQ J = (1+√2)x0² ok".into());
    Ok(parts.join(", "))
}

fn c6_perturbation() -> Verdict {
    let mut parts = Vec::new();
    for name in DEMOS {
        let d = demo(name).map_err(e2s)?;
        let inv = inverse_design(&d)?;
        let starts = value_starts(&d, inv.ladder.certified_level, 10);
        ensure(starts.len() == 10, || {
            format!("{name}: only {} initial states", starts.len())
        })?;
        let (n, p) = (d.system.n(), d.system.p());
        let mut min_gain = f64::INFINITY;
        for x0 in &starts {
            let j_opt = evaluate_cost(&d.system, &inv.cost, &inv.law, x0, 200.0, 0.01)
                .map_err(e2s)?
                .total;
            for scale in [0.95, 1.05] {
                let base = inv.law.clone();
                let law = FeedbackLaw::from_fn(LawKind::Blended, n, p, move |x: &Vector| {
                    base.eval(x) * scale
                })
                .map_err(e2s)?;
                let j = evaluate_cost(&d.system, &inv.cost, &law, x0, 200.0, 0.01)
                    .map_err(e2s)?
                    .total;
                ensure(j > j_opt, || {
                    format!("{name}: scale {scale} gives J = {j} ≤ J* = {j_opt} at {x0}")
                })?;
                min_gain = min_gain.min((j - j_opt) / j_opt);
            }
        }
        parts.push(format!("{name} min rel increase {min_gain:.1e}"));
    }
    Ok(parts.join(", "))
}

fn c7_composite() -> Verdict {
    let mut parts = Vec::new();
    for name in ["strict_feedback_demo", "reduced_orbital"] {
        let d = demo(name).map_err(e2s)?;
        let sf = d.strict_feedback.as_ref().ok_or("not strict feedback")?;
        let b = sf.blocks();
        let part = backstepping_partition(&d.p, &b.h1, &b.h2).map_err(e2s)?;
        let p = part.reassemble();
        let hv = fd_hessian(d.clf.value_fn().as_ref(), d.system.n(), 1e-4);
        let he = rel_err(&hv, &(&p * 2.0));
        ensure(he <= 1e-3, || format!("{name}: H(V)(0) vs 2P {he:.2e}"))?;
        let tpb = (part.t.transpose() * &p * d.system.linearization().b()).amax();
        ensure(tpb <= 1e-12, || format!("{name}: TᵀPB = {tpb:.2e}"))?;
        parts.push(format!("{name} H {he:.1e} TᵀPB {tpb:.1e}"));
    }

    // ẏ = y + x, ẋ = −x + 2u
    let sf = StrictFeedbackSystem::new(
        1,
        Arc::new(|y: &Vector| y.clone()),
        Arc::new(|y: &Vector| Vector::from_element(y.len(), 1.0)),
        Arc::new(|c: &Vector| -c[1]),
        Arc::new(|_: &Vector| 2.0),
    )
    .map_err(e2s)?;
    let sys = sf.to_control_affine().map_err(e2s)?;
    let lin = sys.linearization();
    let (q, r) = (Mat::identity(2, 2), Mat::identity(1, 1));
    let cert = solve_care(
        lin,
        &QuadraticWeights::new(q.clone(), r.clone()).map_err(e2s)?,
    )
    .map_err(e2s)?;
    let k = lqr_gain(&cert, lin, &r).map_err(e2s)?;
    let region = BoxRegion::symmetric(2, 1.0);
    let mut opts = clfsynth::synthesis::SynthesisOptions::new(region.clone());
    opts.artstein.n_samples = 4000;
    let design = backstepping_synthesize(&sf, &k, Some(&cert.p), None, &opts).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for x in region.sample(500, 2) {
        let quad = (x.transpose() * &cert.p * &x)[(0, 0)];
        worst = worst.max((design.clf.value(&x) - quad).abs() / quad);
    }
    worst = worst.max(rel_err(design.clf.hessian_origin(), &(&cert.p * 2.0)));
    let core = design.synthesis.scan.r0 / 2.0;
    for x in region
        .sample(500, 4)
        .into_iter()
        .filter(|x| design.clf.value(x) < core)
    {
        let kx = &k * &x;
        worst = worst.max((design.synthesis.law.eval(&x) - &kx).amax() / (1e-300 + kx.amax()));
    }
    let inv = design_inverse_optimal(
        &design.clf,
        &sys,
        &q,
        &r,
        &InverseDesignOptions {
            region: region.clone(),
            grid: None,
            levels: LevelOptions::default(),
        },
    )
    .map_err(e2s)?;
    for x in level_samples(&design.clf, &region, inv.ladder.certified_level, 500) {
        let xqx = (x.transpose() * &q * &x)[(0, 0)];
        worst = worst.max((inv.cost.q(&x) - xqx).abs() / xqx);
        let kx = &k * &x;
        worst = worst.max((inv.law.eval(&x) - &kx).amax() / kx.amax());
    }
    ensure(worst <= 1e-8, || {
        format!("linear plant deviates from LQ by {worst:.2e}")
    })?;
    parts.push(format!("linear plant matches LQ to {worst:.1e}"));
    Ok(parts.join(", "))
}

fn c8_orbital() -> Verdict {
    let params = OrbitalParams::default();
    let (eta, nu, p0) = (params.eta, params.nu, params.p0);
    let star = OrbitalState::new([0.0, 0.0, 0.0, p0, 0.0, 0.0]).map_err(e2s)?;
    let eq = orbital_vector_field(&params, &star, &Vector::zeros(3))
        .map_err(e2s)?
        .amax();
    ensure(eq <= 1e-14, || format!("equilibrium residual {eq:.2e}"))?;

    // restriction to χ4 = p0, χ5 = χ6 = 0, input u_r only
    let mut rest: f64 = 0.0;
    for z in BoxRegion::symmetric(3, 0.5).sample(200, 9) {
        let ur = 0.7 * z[1] - 0.2 * z[0];
        let s = OrbitalState::new([z[0], z[1], z[2], p0, 0.0, 0.0]).map_err(e2s)?;
        let f = orbital_vector_field(&params, &s, &Vector::from_vec(vec![ur, 0.0, 0.0]))
            .map_err(e2s)?;
        let w = (1.0 + z[1]).powi(2);
        let expect = [
            eta * (w - 1.0),
            -eta * w * z[2],
            eta * w * z[1] + nu * ur,
            0.0,
            0.0,
            0.0,
        ];
        for (i, e) in expect.iter().enumerate() {
            rest = rest.max((f[i] - e).abs());
        }
    }
    ensure(rest <= 1e-14, || format!("restriction mismatch {rest:.2e}"))?;

    let free = simulate_orbital(
        &params,
        &FeedbackLaw::zero(6, 3),
        None,
        &perturbed_start(&params),
        0.01,
        10.0,
    )
    .map_err(e2s)?;
    let s0 = &free.trajectory.states[0];
    let r2 = s0[4] * s0[4] + s0[5] * s0[5];
    let drift = free
        .trajectory
        .states
        .iter()
        .map(|c| (c[4] * c[4] + c[5] * c[5] - r2).abs())
        .fold(0.0, f64::max);
    ensure(drift <= 1e-8, || {
        format!("χ5² + χ6² drifted by {drift:.2e}")
    })?;

    let opts = OrbitalDesignOptions::default();
    let ctrl = build_orbital_controller(&params, &OrbitalCostConfig::default(), None, &opts)
        .map_err(e2s)?;
    let run = simulate_orbital(
        &params,
        &ctrl.law,
        Some(&ctrl.v),
        &perturbed_start(&params),
        0.01,
        60.0,
    )
    .map_err(e2s)?;
    let vs = &run.trajectory.annotations["V"];
    let grow = vs
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(grow <= 1e-9, || {
        format!("V grew by {grow:.2e}·V in one step")
    })?;
    ensure(run.terminal_error <= 1e-3, || {
        format!("terminal error {:.2e}", run.terminal_error)
    })?;

    let region4 = BoxRegion::from_half_widths(&opts.half_widths).map_err(e2s)?;
    let cost4 = &ctrl.design4.cost;
    let xs = level_samples(
        cost4.value_function(),
        &region4,
        ctrl.design4.ladder.certified_level,
        10_000,
    );
    ensure(!xs.is_empty(), || "no 4-state samples".into())?;
    let res = xs
        .par_iter()
        .map(|x| hjb(cost4, &ctrl.system4, x).abs())
        .reduce(|| 0.0, f64::max);
    ensure(res <= 1e-10, || format!("4-state HJB residual {res:.2e}"))?;
    Ok(format!(
        "equilibrium {eq:.0e}, restriction {rest:.0e}, drift {drift:.1e}, terminal {:.1e}, HJB₄ {res:.1e} on {} samples",
        run.terminal_error,
        xs.len()
    ))
}

fn c9_determinism() -> Verdict {
    let configs = [
        r#"{"system": {"demo": "strict_feedback_demo"}, "controller": "blended",
            "integrator": {"dt": 0.01, "T": 20}, "sampling": {"seed": 4, "n_samples": 3000},
            "initial_states": [[0.3, -0.2], [-0.4, 0.1], [0.1, 0.45]]}"#,
        r#"{"system": {"demo": "scalar_cubic"}, "controller": "inverse_optimal",
            "integrator": {"dt": 0.01, "T": 40}, "sampling": {"seed": 2, "n_samples": 3000},
            "initial_states": [[0.5], [-1.1], [1.6]]}"#,
        r#"{"system": {"orbital": {}}, "controller": "inverse_optimal",
            "integrator": {"dt": 0.01, "T": 60}}"#,
    ];
    let digest = |cfg: &RunConfig| -> std::result::Result<String, String> {
        let out = run(cfg).map_err(e2s)?;
        let mut h = Sha256::new();
        h.update(out.report_json());
        for (name, csv) in &out.traces {
            h.update(name);
            h.update(csv);
        }
        Ok(hex::encode(h.finalize()))
    };
    for text in configs {
        let cfg = RunConfig::from_json(text).map_err(e2s)?;
        let (a, b) = (digest(&cfg)?, digest(&cfg)?);
        ensure(a == b, || format!("{}: {a} vs {b}", cfg.hash()))?;
    }
    Ok("3 configs, identical output hashes".into())
}

type Criterion = (&'static str, f64, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("CARE correctness", 10.0, c1_care),
        ("prescribed local behavior", 5.0, c2_local_gain),
        ("decrease of the blended feedback", 60.0, c3_decrease),
        ("inverse-optimal reconstruction", 30.0, c4_reconstruction),
        ("value-function identity", 60.0, c5_value),
        ("optimality spot check", 60.0, c6_perturbation),
        ("composite backstepping CLF", 5.0, c7_composite),
        ("orbital case", 120.0, c8_orbital),
        ("determinism", 10.0, c9_determinism),
    ];
    let mut failed = 0;
    for (k, (name, budget, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        let verdict = verdict.and_then(|msg| {
            if secs <= *budget {
                Ok(msg)
            } else {
                Err(format!("{msg}; over the time budget"))
            }
        });
        let (tag, msg) = match verdict {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!(
            "{tag} {}. {name}: {msg} [{secs:.2} s, budget {budget} s]",
            k + 1
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
