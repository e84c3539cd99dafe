use spdir::constraints::{build_constraints, DEFAULT_FEAS_TOL};
use spdir::lambda_select::{lambda_max, select_lambda, select_on_path, sweep, AutoSelectOptions, SweepOptions};
use spdir::rc_model::tustin_plant_params;
use spdir::regression::{build_regression, selector_matrix};
use spdir::report::run_scenario;
use spdir::scenario::{generate, ScenarioConfig, ScenarioKind};
use spdir::solver::{solve, SolverOptions, SpdirProblem, Status};

fn short_problem(kind: ScenarioKind, horizon: usize) -> SpdirProblem {
    let mut cfg = ScenarioConfig::new(kind);
    cfg.horizon = horizon;
    cfg.warmup = 200;
    let d = generate(&cfg).unwrap();
    let prob = build_regression(&d.training).unwrap();
    let s = selector_matrix(d.training.len()).unwrap();
    SpdirProblem::from_regression(&prob, &s, &build_constraints()).unwrap()
}

#[test]
fn single_point_grid_matches_direct_solve() {
    let p = short_problem(ScenarioKind::OlPw, 300);
    let opts = SweepOptions::default();
    let path = sweep(&p, &[1e-3], &opts).unwrap();
    let direct = solve(&p, 1e-3, &opts.solver, None).unwrap();
    assert_eq!(path.len(), 1);
    assert_eq!(path.results[0].theta(), direct.theta());
    assert_eq!(path.solution_norms[0], direct.solution_norm);
}

#[test]
fn lambda_max_zeroes_the_disturbance() {
    let p = short_problem(ScenarioKind::ClNpw, 300);
    let opts = SolverOptions::default();
    let lm = lambda_max(&p, &opts).unwrap();
    for scale in [1.0, 1.5, 10.0] {
        let r = solve(&p, lm * scale, &opts, None).unwrap();
        assert_eq!(r.status, Status::Converged);
        assert_eq!(r.solution_norm, 0.0, "λ = {} λ_max", scale);
    }
    let below = solve(&p, lm * 0.5, &opts, None).unwrap();
    assert!(below.solution_norm > 0.0);
}

#[test]
fn lambda_zero_fits_exactly() {
    let p = short_problem(ScenarioKind::OlNpw, 200);
    let r = solve(&p, 0.0, &SolverOptions::default(), None).unwrap();
    assert_eq!(r.status, Status::Converged);
    let scale = p.y.norm();
    assert!(r.residual_norm <= 1e-9 * scale, "{}", r.residual_norm);
}

#[test]
fn default_path_is_monotone_and_deterministic() {
    let p = short_problem(ScenarioKind::ClPw, 400);
    let opts = AutoSelectOptions {
        n_points: 12,
        ..Default::default()
    };
    let grid = spdir::lambda_select::default_grid(&p, &opts).unwrap();
    let a = sweep(&p, &grid, &opts.sweep).unwrap();
    let b = sweep(&p, &grid, &opts.sweep).unwrap();
    assert_eq!(a, b);
    assert!(a.degraded().is_empty(), "{:?}", a.degraded());
    let s = &opts.sweep.solver;
    assert!(a.monotonicity_violations(s.eps_abs, s.eps_rel, 10.0).is_empty());

    // Cold, parallel solves land on the same curves.
    let cold = sweep(
        &p,
        &grid,
        &SweepOptions {
            warm_start: false,
            ..opts.sweep.clone()
        },
    )
    .unwrap();
    for i in 0..grid.len() {
        let (x, y) = (a.residual_norms[i], cold.residual_norms[i]);
        assert!((x - y).abs() <= 1e-6 * x.max(1e-3), "point {i}: {x} vs {y}");
    }

    let auto = select_on_path(a.clone(), &opts.schedule).unwrap();
    let again = select_lambda(&a, auto.tau_sol, auto.tau_res).unwrap();
    assert_eq!(again, auto.selection);
}

#[test]
fn open_loop_week_identifies_denominator() {
    let cfg = ScenarioConfig::new(ScenarioKind::OlPw);
    let run = run_scenario(&cfg, &AutoSelectOptions::default(), DEFAULT_FEAS_TOL).unwrap();
    let r = &run.report;
    assert!(r.converged_and_feasible());
    let truth = tustin_plant_params(&cfg.rc_params(), cfg.t_s).unwrap();
    for i in 0..2 {
        let err = (truth.theta[i] - r.theta_p[i]) / truth.theta[i];
        assert!(err.abs() < 0.01, "theta_{}: {err}", i + 1);
    }
    assert!(r.training.rms_free_run < 0.05);
    assert!(r.monotonicity_violations.is_empty());
}
