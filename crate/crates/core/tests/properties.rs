use proptest::collection::vec;
use proptest::prelude::*;

use clfsynth::clf::{blend_profile, local_quadratic_clf, LevelVerdict};
use clfsynth::inverse_opt::{build_mu, evaluate_cost, LevelOptions};
use clfsynth::linear::{
    check_lmi_triple, lqr_gain, solve_care, solve_lyapunov, LinearSystem, QuadraticWeights,
};
use clfsynth::matrix_json::JsonMatrix;
use clfsynth::numeric::{spectral_abscissa, Mat, Vector};
use clfsynth::registry::{demo, DEMOS};
use clfsynth::sim::{numbered, Trajectory};
use clfsynth::structured::BacksteppingPartition;
use clfsynth::synthesis::{sontag_value, FeedbackLaw, LawKind};
use clfsynth::Error;

fn mat(r: usize, c: usize, d: &[f64]) -> Mat {
    Mat::from_row_slice(r, c, d)
}

fn spd(m: &Mat, shift: f64) -> Mat {
    m.transpose() * m + Mat::identity(m.ncols(), m.ncols()) * shift
}

/// `(A, B, Q, R)` with `n ≤ 8`, `p ≤ min(3, n)`, SPD weights.
fn lq_problem() -> impl Strategy<Value = (Mat, Mat, Mat, Mat)> {
    (1usize..=8, 1usize..=3).prop_flat_map(|(n, p)| {
        let p = p.min(n);
        (
            vec(-1.0..1.0, n * n),
            vec(-1.0..1.0, n * p),
            vec(-1.0..1.0, n * n),
            vec(-1.0..1.0, p * p),
        )
            .prop_map(move |(a, b, m, r)| {
                (
                    mat(n, n, &a),
                    mat(n, p, &b),
                    spd(&mat(n, n, &m), 0.1),
                    spd(&mat(p, p, &r), 0.5),
                )
            })
    })
}

fn spd_matrix(n_lo: usize, n_hi: usize) -> impl Strategy<Value = Mat> {
    (n_lo..=n_hi)
        .prop_flat_map(|n| vec(-1.0..1.0, n * n).prop_map(move |d| spd(&mat(n, n, &d), 0.2)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn care_certificate_matches_recomputation((a, b, q, r) in lq_problem()) {
        let sys = LinearSystem::new(a.clone(), b.clone()).unwrap();
        prop_assume!(sys.is_stabilizable());
        let cert = match solve_care(&sys, &QuadraticWeights::new(q.clone(), r.clone()).unwrap()) {
            Ok(c) => c,
            // refusing is allowed; issuing a bad certificate is not
            Err(e) => {
                prop_assert!(matches!(e, Error::NoConvergence { .. }), "{e}");
                return Ok(());
            }
        };
        let p = &cert.p;
        let r_inv = r.clone().try_inverse().unwrap();
        let res = (p * &a + a.transpose() * p - p * &b * &r_inv * b.transpose() * p + &q).norm();
        // two evaluations of Res(P) agree only up to its rounding floor
        let g = &b * &r_inv * b.transpose();
        let floor = a.nrows() as f64 * f64::EPSILON * (p.norm() * (2.0 * a.norm() + (&g * p).norm()) + q.norm());
        prop_assert!(cert.residual_norm <= 1e-8 * (1.0 + q.norm()));
        prop_assert!(res <= 1e-8 * (1.0 + q.norm()) + 10.0 * floor);
        prop_assert!((res - cert.residual_norm).abs() <= 1e-12 * (1.0 + q.norm()) + 10.0 * floor);
        let k = lqr_gain(&cert, &sys, &r).unwrap();
        let abscissa = spectral_abscissa(&(&a + &b * &k));
        prop_assert!(abscissa < 0.0);
        prop_assert!((abscissa - cert.closed_loop_spectral_abscissa).abs() <= 1e-8 * (1.0 + abscissa.abs()));
    }

    #[test]
    fn lyapunov_round_trip(n in 1usize..=10, d in vec(-1.0..1.0, 100), margin in 0.1f64..2.0) {
        let m = Mat::from_row_slice(n, n, &d[..n * n]);
        let a = &m - Mat::identity(n, n) * (spectral_abscissa(&m) + margin);
        let q = Mat::identity(n, n);
        let sol = solve_lyapunov(&a, &q).unwrap();
        prop_assert!(sol.p.clone().cholesky().is_some());
        let res = (a.transpose() * &sol.p + &sol.p * &a + &q).norm();
        prop_assert!(res <= 1e-9 * (1.0 + a.norm() * sol.p.norm()), "{res}");
    }

    #[test]
    fn lmi_verdict_is_scale_invariant(
        (a, b, q, r) in lq_problem(),
        ku in vec(-2.0..2.0, 24),
        pi in vec(-1.0..1.0, 64),
        c in 1e-3f64..1e3,
    ) {
        let sys = LinearSystem::new(a.clone(), b.clone()).unwrap();
        prop_assume!(sys.is_stabilizable());
        let Ok(cert) = solve_care(&sys, &QuadraticWeights::new(q, r.clone()).unwrap()) else {
            return Ok(());
        };
        let (n, p) = (a.nrows(), b.ncols());
        let k_o = lqr_gain(&cert, &sys, &r).unwrap();
        let k_u = Mat::from_row_slice(p, n, &ku[..p * n]);
        let p_inf = spd(&Mat::from_row_slice(n, n, &pi[..n * n]), 0.1);
        let base = check_lmi_triple(&sys, &k_o, &k_u, &cert.p, &p_inf).unwrap();
        let scaled = check_lmi_triple(&sys, &k_o, &k_u, &(&cert.p * c), &(&p_inf * c)).unwrap();
        prop_assert_eq!(base.feasible, scaled.feasible);
    }

    #[test]
    fn quadratic_clf_gradient_matches_differences(p in spd_matrix(1, 5), x in vec(-2.0..2.0, 5)) {
        let n = p.nrows();
        let x = Vector::from_row_slice(&x[..n]);
        prop_assume!(x.norm() > 0.1);
        let v = local_quadratic_clf(&p).unwrap();
        let h = 1e-5 * (1.0 + x.amax());
        let fd = Vector::from_fn(n, |i, _| {
            let mut e = Vector::zeros(n);
            e[i] = h;
            (v.value(&(&x + &e)) - v.value(&(&x - &e))) / (2.0 * h)
        });
        let g = v.gradient(&x);
        prop_assert!((&fd - &g).norm() <= 1e-5 * g.norm().max(1e-12), "{fd} vs {g}");
    }

    #[test]
    fn blend_profile_is_monotone_and_clamped(r0 in 1e-3f64..1e3) {
        let rho = blend_profile(r0).unwrap();
        let mut last = 0.0;
        for i in 0..=1000 {
            let s = 1.5 * r0 * i as f64 / 1000.0;
            let w = rho.eval(s);
            prop_assert!((0.0..=1.0).contains(&w));
            prop_assert!(w >= last);
            last = w;
        }
        prop_assert_eq!(rho.eval(0.5 * r0), 0.0);
        prop_assert_eq!(rho.eval(r0), 1.0);
    }

    #[test]
    fn sontag_closed_form(la in -10.0f64..10.0, lb in vec(-3.0f64..3.0, 1..4)) {
        let lb = Vector::from_vec(lb);
        prop_assume!(lb.norm() > 1e-6);
        let u = sontag_value(la, &lb);
        let vdot = la + lb.dot(&u);
        let exact = -(la * la + lb.norm_squared().powi(2)).sqrt();
        prop_assert!(exact < 0.0);
        prop_assert!((vdot - exact).abs() <= 1e-12 * (1.0 + exact.abs()), "{vdot} vs {exact}");
    }

    #[test]
    fn mu_is_monotone_and_dominates_ladder(r0 in 1e-2f64..10.0, ladder in vec(1.0f64..20.0, 1..8)) {
        let scaling = build_mu(r0, &ladder).unwrap();
        let k = ladder.len();
        let mut last = 1.0;
        for i in 0..=4000 {
            let s = (k as f64 + 3.0) * r0 * i as f64 / 4000.0;
            let mu = scaling.mu(s);
            prop_assert!(mu >= last - 1e-12 * last);
            prop_assert!(mu >= 1.0);
            if s <= 0.5 * r0 {
                prop_assert_eq!(mu, 1.0);
            }
            // annulus j covers [j r0, (j+1) r0]
            let j = (s / r0).floor() as usize;
            if (1..=k).contains(&j) {
                prop_assert!(mu >= ladder[j - 1] * (1.0 - 1e-12), "s = {s}: μ = {mu} < ℓ = {}", ladder[j - 1]);
            }
            last = mu;
        }
    }

    #[test]
    fn partition_round_trip(p in spd_matrix(2, 6), g in -3.0f64..3.0) {
        let part = BacksteppingPartition::new(&p).unwrap();
        prop_assert_eq!(part.reassemble(), p.clone());
        prop_assert!(part.tpb(g) <= 1e-12 * (1.0 + p.amax() * g.abs()));
    }

    #[test]
    fn csv_and_json_round_trip_exactly(vals in vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 3..30)) {
        let mut traj = Trajectory::default();
        for (k, w) in vals.chunks(3).enumerate() {
            let x = Vector::from_vec(vec![w[0], *w.get(1).unwrap_or(&0.0)]);
            traj.push(k as f64 * 0.1, x, Vector::from_element(1, *w.get(2).unwrap_or(&0.0)));
        }
        let csv = traj.to_csv(&numbered("x", 2), &numbered("u", 1)).unwrap();
        for (line, k) in csv.lines().skip(1).zip(0..) {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            prop_assert_eq!(cols[1].to_bits(), traj.states[k][0].to_bits());
            prop_assert_eq!(cols[2].to_bits(), traj.states[k][1].to_bits());
            prop_assert_eq!(cols[3].to_bits(), traj.inputs[k][0].to_bits());
        }
        let m = Mat::from_row_slice(1, vals.len(), &vals);
        let text = serde_json::to_string(&JsonMatrix::from(&m)).unwrap();
        let back = serde_json::from_str::<JsonMatrix>(&text).unwrap().to_matrix().unwrap();
        prop_assert!(back.iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn clf_hessians_match_differences() {
    for name in DEMOS {
        let d = demo(name).unwrap();
        let fd = d.clf.fd_hessian_origin();
        let h = d.clf.hessian_origin();
        assert!((&fd - h).amax() <= 1e-3 * h.amax(), "{name}: {fd} vs {h}");
        for x in d.region.sample(100, 8) {
            let hstep = 1e-5 * (1.0 + x.amax());
            let n = x.len();
            let fd = Vector::from_fn(n, |i, _| {
                let mut e = Vector::zeros(n);
                e[i] = hstep;
                (d.clf.value(&(&x + &e)) - d.clf.value(&(&x - &e))) / (2.0 * hstep)
            });
            let g = d.clf.gradient(&x);
            assert!(
                (&fd - &g).norm() <= 1e-5 * g.norm(),
                "{name} at {x}: {fd} vs {g}"
            );
        }
    }
}

#[test]
fn level_scans_are_downward_closed() {
    for name in DEMOS {
        let d = demo(name).unwrap();
        let syn = d.synthesize(&d.synthesis_options(3000, 1)).unwrap();
        let levels = &syn.scan.levels;
        for (i, l) in levels.iter().enumerate() {
            if l.verdict == LevelVerdict::Pass {
                assert!(
                    levels[..i]
                        .iter()
                        .all(|m| matches!(m.verdict, LevelVerdict::Pass | LevelVerdict::Empty)),
                    "{name}: failure below passing level {}",
                    l.level
                );
            }
        }
        assert!(levels
            .iter()
            .any(|l| l.level == syn.scan.r0 && l.verdict == LevelVerdict::Pass));
    }
}

#[test]
fn every_law_kind_fixes_the_origin() {
    let d = demo("strict_feedback_demo").unwrap();
    let syn = d.synthesize(&d.synthesis_options(2000, 0)).unwrap();
    let inv = d.inverse_design(&LevelOptions::default()).unwrap();
    let zero = Vector::zeros(2);
    for law in [
        FeedbackLaw::linear(&d.k_o),
        syn.alpha_inf.clone(),
        syn.law.clone(),
        inv.law.clone(),
    ] {
        assert_eq!(law.eval(&zero).amax(), 0.0, "{:?}", law.kind());
    }
    assert_eq!(syn.alpha_inf.kind(), LawKind::Sontag);
    assert_eq!(syn.law.kind(), LawKind::Blended);
    assert_eq!(inv.law.kind(), LawKind::OptimalFeedback);
}

/// `u* + εx` with `ε = ±0.05` on the scalar plants costs more than `u*`.
#[test]
fn additive_perturbation_costs_more() {
    for name in ["scalar_lq", "scalar_cubic"] {
        let d = demo(name).unwrap();
        let inv = d.inverse_design(&LevelOptions::default()).unwrap();
        let level = inv.ladder.certified_level;
        for x0 in d
            .region
            .scaled(0.9)
            .sample(60, 2)
            .into_iter()
            .filter(|x| d.clf.value(x) <= level)
            .take(8)
        {
            let j = evaluate_cost(&d.system, &inv.cost, &inv.law, &x0, 100.0, 0.01)
                .unwrap()
                .total;
            for eps in [-0.05, 0.05] {
                let base = inv.law.clone();
                let law = FeedbackLaw::from_fn(LawKind::Blended, 1, 1, move |x: &Vector| {
                    base.eval(x) + x * eps
                })
                .unwrap();
                let jp = evaluate_cost(&d.system, &inv.cost, &law, &x0, 100.0, 0.01)
                    .unwrap()
                    .total;
                assert!(jp > j, "{name} x0 = {x0} ε = {eps}: {jp} ≤ {j}");
            }
        }
    }
}
