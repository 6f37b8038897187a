mod common;

use common::*;
use modal_sos::local::*;
use modal_sos::relaxation::{solve_relaxation, SosOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn jacobian_matches_central_differences() {
    let (six, _) = partial_six_variable_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [fourth_story_problem(false), six] {
        let (l, u) = (p.lower(), p.upper());
        for _ in 0..20 {
            let x = interior_point(&mut rng, &l, &u, 0.01);
            let analytic = p.jacobian(&x);
            let numeric = central_differences(&p, &x, 1e-6);
            let rel = (&analytic - &numeric).amax() / analytic.amax().max(1.0);
            assert!(rel <= 1e-6, "relative discrepancy {rel:e}");
        }
    }
}

#[test]
fn jacobian_blocks_are_constant_in_their_own_variables() {
    let (p, _) = partial_six_variable_problem();
    let nt = p.n_theta();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (l, u) = (p.lower(), p.upper());
    for _ in 0..10 {
        let a = interior_point(&mut rng, &l, &u, 0.0);
        let mut b = interior_point(&mut rng, &l, &u, 0.0);
        // same psi, different theta
        b[nt..].copy_from_slice(&a[nt..]);
        let (ja, jb) = (p.jacobian(&a), p.jacobian(&b));
        assert!((ja.columns(0, nt) - jb.columns(0, nt)).amax() < 1e-12);
        // same theta, different psi
        let mut c = interior_point(&mut rng, &l, &u, 0.0);
        c[..nt].copy_from_slice(&a[..nt]);
        let jc = p.jacobian(&c);
        let np = p.n_vars() - nt;
        assert!((ja.columns(nt, np) - jc.columns(nt, np)).amax() < 1e-12);
    }
}

#[test]
fn least_squares_objective_equals_polynomial() {
    let (six, _) = partial_six_variable_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for p in [fourth_story_problem(true), six] {
        let poly = p.objective_polynomial();
        for _ in 0..50 {
            let x = interior_point(&mut rng, &p.lower(), &p.upper(), 0.0);
            let f = LeastSquares::objective(&p, &x);
            let g = poly.evaluate(&x).unwrap();
            assert!((f - g).abs() <= 1e-9 * (1.0 + f.abs()), "{f} vs {g}");
        }
    }
}

#[test]
fn origin_start_reaches_global_minimum() {
    for rounded in [false, true] {
        let p = fourth_story_problem(rounded);
        for method in [Method::GaussNewton, Method::TrustRegion] {
            let r = method.run(&p, &[0.0, 0.0], &LocalOptions::default());
            assert!(r.converged, "{method:?}: {}", r.reason());
            assert!(r.objective_final <= 5e-3);
            assert!((r.x_final[0] + 0.1).abs() < 2e-2 && (r.x_final[1] - 1.154).abs() < 1e-2);
        }
    }
}

#[test]
fn start_near_saddle_stops_on_stiffness_lower_bound() {
    for rounded in [false, true] {
        let p = fourth_story_problem(rounded);
        for method in [Method::GaussNewton, Method::TrustRegion] {
            let r = method.run(&p, &[-0.95, 1.0], &LocalOptions::default());
            assert!((r.x_final[0] + 1.0).abs() <= 1e-3, "{method:?}: {:?}", r.x_final);
            assert!(r.objective_final > 1.0);
        }
    }
}

#[test]
fn solvers_agree_on_complete_measurement() {
    let p = complete_measurement_problem();
    let opts = LocalOptions::default();
    let gn = gauss_newton(&p, &vec![0.0; p.n_vars()], &opts);
    let tr = trust_region(&p, &vec![0.0; p.n_vars()], &opts);
    assert!(gn.converged && tr.converged);
    for (a, b) in gn.x_final.iter().zip(&tr.x_final) {
        assert!((a - b).abs() <= 1e-6);
    }
    let k: Vec<f64> = gn.x_final.iter().map(|t| 10.0 * (1.0 + t)).collect();
    for (got, want) in k.iter().zip(PLANTED_STIFFNESS) {
        assert!((got - want).abs() <= 1e-6);
    }
}

#[test]
fn multistart_is_reproducible_and_schedule_independent() {
    let (p, _) = partial_six_variable_problem();
    let opts = LocalOptions::default();
    for method in [Method::GaussNewton, Method::TrustRegion] {
        let seq = multistart(&p, 40, 99, method, &opts, Execution::Sequential);
        let par = multistart(&p, 40, 99, method, &opts, Execution::Parallel);
        let again = multistart(&p, 40, 99, method, &opts, Execution::Parallel);
        assert_eq!(seq, par);
        assert_eq!(par, again);
    }
}

#[test]
fn different_seeds_share_the_best_objective() {
    let (p, _) = partial_six_variable_problem();
    let opts = LocalOptions::default();
    let a = multistart(&p, 60, 1, Method::GaussNewton, &opts, Execution::Parallel);
    let b = multistart(&p, 60, 2, Method::GaussNewton, &opts, Execution::Parallel);
    assert_ne!(a.starts[0].start, b.starts[0].start);
    assert!((a.best_result().objective_final - b.best_result().objective_final).abs() <= 1e-4);
}

#[test]
fn every_run_descends_and_stays_in_box() {
    let (p, _) = partial_six_variable_problem();
    let (l, u) = (p.lower(), p.upper());
    for method in [Method::GaussNewton, Method::TrustRegion] {
        let rep = multistart(&p, 50, 4, method, &LocalOptions::default(), Execution::Parallel);
        for s in &rep.starts {
            let r = &s.result;
            assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
            assert!(r.x_final.iter().zip(l.iter().zip(&u)).all(|(v, (a, b))| v >= a && v <= b));
            assert!((r.objective_final - LeastSquares::objective(&p, &r.x_final)).abs() <= 1e-12 * (1.0 + r.objective_final));
        }
        let best = rep.best_result().objective_final;
        assert!(rep.starts.iter().all(|s| s.result.objective_final >= best));
    }
}

#[test]
fn interior_convergence_has_vanishing_projected_gradient() {
    let (p, _) = partial_six_variable_problem();
    let (l, u) = (p.lower(), p.upper());
    let rep = multistart(&p, 50, 8, Method::TrustRegion, &LocalOptions::default(), Execution::Parallel);
    let mut checked = 0;
    for s in &rep.starts {
        let r = &s.result;
        let interior = r.x_final.iter().zip(l.iter().zip(&u)).all(|(v, (a, b))| v - a > 1e-6 && b - v > 1e-6);
        if r.converged && interior {
            let g = p.jacobian(&r.x_final).transpose() * p.residual(&r.x_final) * 2.0;
            assert!(projected_gradient_norm(&r.x_final, &g, &l, &u) <= 1e-6);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn local_results_never_beat_the_certificate() {
    for rounded in [false, true] {
        let p = fourth_story_problem(rounded);
        let sos = solve_relaxation(&p.to_poly_problem().unwrap(), &SosOptions::default()).unwrap();
        let gamma = sos.gamma_star();
        for method in [Method::GaussNewton, Method::TrustRegion] {
            let rep = multistart(&p, 100, 3, method, &LocalOptions::default(), Execution::Parallel);
            for s in &rep.starts {
                assert!(s.result.objective_final >= gamma - 1e-6);
            }
        }
    }
}
