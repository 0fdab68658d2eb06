mod common;

use std::sync::atomic::AtomicBool;

use akcy_core::algebra::{build_triple, project_invariant, wedge_22};
use akcy_core::calculus::{codifferential, exterior_d, laplacian};
use akcy_core::lejmi::DjOperator;
use akcy_core::manufactured::sine_x0;
use akcy_core::solver::{
    continuation_solve, linearize_apply, ma_residual, newton_solve, normalize_rhs, tame_to_almost_kahler,
    Solver, SolverConfig,
};
use akcy_core::{AcStructure, CompatibleTriple, Error, ScalarField, Sign, TwoForm};
use common::{cube, perturbed, smooth_field};

fn aligned_error(a: &ScalarField, b: &ScalarField) -> f64 {
    let d = a.sub(b);
    d.shift(-d.mean()).max_abs()
}

#[test]
fn normalize_rhs_examples() {
    let t = CompatibleTriple::standard(&cube(8));
    let zero = ScalarField::constant(t.grid(), 0.0);
    assert!(normalize_rhs(&zero, &t).unwrap().max_abs() < 1e-15);
    let c = ScalarField::constant(t.grid(), 1.7);
    assert!(normalize_rhs(&c, &t).unwrap().max_abs() < 1e-14);
    let m = sine_x0(t.grid(), 0.5).unwrap();
    let n = normalize_rhs(&m.f, &t).unwrap();
    assert!(n.max_diff(&m.f) <= 1e-12);
    // the compatibility integral by direct quadrature
    let f = smooth_field(t.grid(), 1, 2, 2.0);
    let n = normalize_rhs(&f, &t).unwrap();
    let s: f64 = n.values().iter().map(|v| v.exp()).sum::<f64>() / t.grid().len() as f64;
    assert!((s - 1.0).abs() <= 1e-12);
}

#[test]
fn residual_examples() {
    let t = CompatibleTriple::standard(&cube(8));
    let zero = ScalarField::constant(t.grid(), 0.0);
    assert_eq!(ma_residual(&zero, &zero, &t).unwrap().max_abs(), 0.0);
    let m = sine_x0(t.grid(), 0.5).unwrap();
    assert!(ma_residual(&m.phi, &m.f, &t).unwrap().max_abs() <= 1e-10);
}

#[test]
fn residual_has_zero_mean() {
    let t = perturbed(8);
    let f = normalize_rhs(&smooth_field(t.grid(), 2, 2, 0.5), &t).unwrap();
    for seed in 0..3 {
        let phi = smooth_field(t.grid(), 10 + seed, 2, 0.3);
        let r = ma_residual(&phi, &f, &t).unwrap();
        let mean: f64 = (0..t.grid().len()).map(|i| r.values()[i] * t.sqrt_det(i)).sum::<f64>()
            / t.sqrt_dets().iter().sum::<f64>();
        assert!(mean.abs() <= 1e-11, "{mean:e}");
    }
}

#[test]
fn linearization_at_zero_is_minus_laplacian() {
    let t = CompatibleTriple::standard(&cube(8));
    let zero = ScalarField::constant(t.grid(), 0.0);
    let c = ScalarField::sample(t.grid(), |x| x[0].cos());
    let l = linearize_apply(&zero, &c, &t).unwrap();
    assert!(l.max_diff(&c.scale(-1.0)) < 1e-13);
    let psi = smooth_field(t.grid(), 4, 3, 1.0);
    let lap = laplacian(&psi, &t).unwrap();
    assert!(linearize_apply(&zero, &psi, &t).unwrap().max_diff(&lap.scale(-1.0)) < 1e-12);
    let k = linearize_apply(&psi, &ScalarField::constant(t.grid(), 2.0), &t).unwrap();
    assert_eq!(k.max_abs(), 0.0);
}

#[test]
fn central_differences_match_the_linearization() {
    let t = perturbed(8);
    let f = normalize_rhs(&smooth_field(t.grid(), 3, 2, 0.5), &t).unwrap();
    let phi = smooth_field(t.grid(), 5, 2, 0.2);
    let psi = smooth_field(t.grid(), 6, 2, 1.0);
    let lin = linearize_apply(&phi, &psi, &t).unwrap();
    let base = ma_residual(&phi, &f, &t).unwrap();
    for h in [1e-2, 1e-3] {
        let plus = ma_residual(&phi.axpy(h, &psi), &f, &t).unwrap();
        let minus = ma_residual(&phi.axpy(-h, &psi), &f, &t).unwrap();
        let fd = plus.sub(&minus).scale(0.5 / h);
        // the residual is quadratic in phi, so the central difference is exact
        // up to the Lejmi solve tolerance divided by h
        assert!(fd.max_diff(&lin) <= 1e-11 / h * lin.max_abs(), "h = {h}: {:e}", fd.max_diff(&lin));
        if h == 1e-2 {
            // second difference is 2 D(psi)^D(psi) / omega^2
            let d = DjOperator::new(&t).unwrap().dj_plus(&psi).unwrap();
            let dd = wedge_22(&d, &d).unwrap();
            let o2 = wedge_22(t.omega(), t.omega()).unwrap();
            let expect: Vec<f64> = dd.density().iter().zip(o2.density()).map(|(a, b)| 2.0 * h * h * a / b).collect();
            let second = plus.add(&minus).sub(&base.scale(2.0));
            let err = second.values().iter().zip(&expect).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err <= 1e-9, "{err:e}");
        }
    }
}

#[test]
fn newton_trivial_and_manufactured() {
    let t = CompatibleTriple::standard(&cube(8));
    let cfg = SolverConfig::default();
    let zero = ScalarField::constant(t.grid(), 0.0);
    let (phi, rep) = newton_solve(&zero, &zero, &t, &cfg).unwrap();
    assert_eq!(rep.iterations, 0);
    assert_eq!(phi.max_abs(), 0.0);

    let m = sine_x0(t.grid(), 0.5).unwrap();
    let (phi, rep) = newton_solve(&m.f, &zero, &t, &cfg).unwrap();
    assert!(rep.residual_linf <= cfg.newton_tol);
    assert!(aligned_error(&phi, &m.phi) <= 1e-8);
}

fn positivity_lost(eps: f64, margin: f64) -> bool {
    let t = CompatibleTriple::standard(&cube(4));
    let cfg = SolverConfig { positivity_margin: margin, newton_max: 200, ..SolverConfig::default() };
    let m = sine_x0(t.grid(), eps).unwrap();
    let zero = ScalarField::constant(t.grid(), 0.0);
    match newton_solve(&m.f, &zero, &t, &cfg) {
        Ok((phi, _)) => {
            assert!(phi.check_finite().is_ok());
            false
        }
        Err(Error::PositivityLost { min_a1 }) => {
            assert!(min_a1.is_finite());
            true
        }
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn aggressive_amplitude_loses_positivity() {
    // min a1 of the exact solution is 1 - eps on a grid containing x0 = pi/2
    let margin = 0.1;
    assert!(!positivity_lost(0.5, margin));
    assert!(positivity_lost(0.95, margin));
    let (mut lo, mut hi) = (0.5, 0.95);
    for _ in 0..12 {
        let mid = 0.5 * (lo + hi);
        if positivity_lost(mid, margin) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    assert!((hi - (1.0 - margin)).abs() < 1e-3, "threshold {hi}");
}

#[test]
fn continuation_trivial_case() {
    let t = CompatibleTriple::standard(&cube(8));
    let zero = ScalarField::constant(t.grid(), 0.0);
    let (state, report) = continuation_solve(&zero, &t, &SolverConfig::default()).unwrap();
    assert!(report.success);
    assert_eq!(report.failures, 0);
    assert_eq!(state.t, 1.0);
    assert!(state.phi.max_abs() <= 1e-10);
}

#[test]
fn continuation_manufactured_case() {
    let t = CompatibleTriple::standard(&cube(8));
    let m = sine_x0(t.grid(), 0.5).unwrap();
    let (state, report) = continuation_solve(&m.f, &t, &SolverConfig::default()).unwrap();
    assert!(report.success);
    assert!(aligned_error(&state.phi, &m.phi) <= 1e-8);
    assert!(report.steps.windows(2).all(|w| w[1].t > w[0].t));
    assert_eq!(report.steps.last().unwrap().t, 1.0);
    assert!(report.steps.iter().all(|s| s.min_a1 > 0.0));
    let last = report.steps.last().unwrap();
    assert!((last.max_trace - 5.0).abs() < 1e-8, "{}", last.max_trace);
}

// With h_J^- = 0 the kernel of W_J holds two functions besides the
// constants, so the linearization is singular. The solve has to stop with a
// numerical error instead of spinning.
#[test]
fn non_integrable_solve_terminates() {
    let t = CompatibleTriple::perturbed(&cube(6), 7, 0.1).unwrap();
    let f = normalize_rhs(&smooth_field(t.grid(), 9, 1, 0.5), &t).unwrap();
    let cfg = SolverConfig { krylov_max_apply: 40, newton_max: 3, ..SolverConfig::default() };
    let zero = ScalarField::constant(t.grid(), 0.0);
    match newton_solve(&f, &zero, &t, &cfg) {
        Ok((phi, rep)) => {
            assert!(rep.residual_linf <= cfg.newton_tol);
            assert!(phi.check_finite().is_ok());
        }
        Err(e) => assert!(
            matches!(e, Error::KrylovStall { .. } | Error::NewtonDiverged { .. } | Error::PositivityLost { .. }),
            "{e:?}"
        ),
    }
}

#[test]
fn near_degenerate_case_is_handled() {
    let t = CompatibleTriple::standard(&cube(8));
    let m = sine_x0(t.grid(), 0.98).unwrap();
    match continuation_solve(&m.f, &t, &SolverConfig::default()) {
        Ok((state, report)) => {
            let min_a1 = report.steps.last().unwrap().min_a1;
            assert!((min_a1 - 0.02).abs() <= 0.2 * 0.02, "{min_a1}");
            assert!(state.phi.check_finite().is_ok());
        }
        Err(fail) => {
            assert!(matches!(fail.error, Error::StepUnderflow { .. }), "{:?}", fail.error);
            assert!(fail.last.unwrap().phi.check_finite().is_ok());
        }
    }
}

#[test]
fn stop_flag_cancels() {
    let t = CompatibleTriple::standard(&cube(4));
    let m = sine_x0(t.grid(), 0.5).unwrap();
    let stop = AtomicBool::new(true);
    let solver = Solver::new(&t, SolverConfig::default()).unwrap().with_stop(&stop);
    let err = solver.continuation_solve(&m.f, None).unwrap_err();
    assert_eq!(err.error, Error::Cancelled);
}

#[test]
fn invalid_configs_are_rejected() {
    let t = CompatibleTriple::standard(&cube(4));
    let bad = [
        SolverConfig { newton_tol: 0.0, ..SolverConfig::default() },
        SolverConfig { t_step_min: 0.5, t_step_init: 0.25, ..SolverConfig::default() },
        SolverConfig { t_step_init: 1.5, ..SolverConfig::default() },
        SolverConfig { positivity_margin: -1.0, ..SolverConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(Solver::new(&t, cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn tame_compatible_form_is_unchanged() {
    let t = perturbed(8);
    let (w, rep) = tame_to_almost_kahler(t.omega(), t.j()).unwrap();
    assert!(w.max_diff(t.omega()) <= 1e-12);
    assert!(rep.min_a1 > 0.0);
}

#[test]
fn tame_round_trip_on_perturbed_structure() {
    let t = perturbed(8);
    let op = DjOperator::new(&t).unwrap();
    let psi0 = akcy_core::lejmi::AntiInvariantField {
        frame: op.frame().clone(),
        c1: smooth_field(t.grid(), 21, 2, 0.1),
        c2: smooth_field(t.grid(), 22, 2, 0.1),
    };
    let alpha0 = codifferential(&psi0.reconstruct(), &t).unwrap();
    let big = t.omega().add(&exterior_d(&alpha0).unwrap());
    assert!(project_invariant(&big, t.j(), Sign::Minus).unwrap().max_abs() > 1e-3);
    let (w, rep) = tame_to_almost_kahler(&big, t.j()).unwrap();
    assert!(w.max_diff(t.omega()) <= 1e-8, "{:e} after {} iterations", w.max_diff(t.omega()), rep.iterations);
}

#[test]
fn tame_rejects_harmonic_contamination_and_bad_input() {
    let t = CompatibleTriple::standard(&cube(8));
    let beta = TwoForm::constant(t.grid(), [0.0, 0.05, 0.0, 0.0, -0.05, 0.0]);
    let big = t.omega().add(&beta);
    assert!(matches!(tame_to_almost_kahler(&big, t.j()), Err(Error::ObstructionNonzero { .. })));

    let not_closed = t.omega().mul_scalar(&ScalarField::sample(t.grid(), |x| 1.0 + 0.1 * x[2].sin()));
    assert!(matches!(tame_to_almost_kahler(&not_closed, t.j()), Err(Error::NotClosed { .. })));

    let flipped = TwoForm::constant(t.grid(), [-1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    assert!(matches!(tame_to_almost_kahler(&flipped, t.j()), Err(Error::NotTaming { .. })));
    let _ = build_triple(t.omega().clone(), AcStructure::standard(t.grid())).unwrap();
}
