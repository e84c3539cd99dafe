//! Metrics of an identified model against a dataset, end-to-end scenario
//! runs and the summary table over scenarios.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    default_omega_grid, max_relative_fr_error, param_error_table, prop1_check, rms_error, sign_check, sparsity_report,
    ParamErrorRow, SignCheck, SparsityReport,
};
use crate::constraints::{build_constraints, check_feasible, is_physically_meaningful, FeasibilityReport};
use crate::datagen::TimeSeriesDataset;
use crate::error::Result;
use crate::lambda_select::{auto_select, AutoSelectOptions, AutoSelection};
use crate::rc_model::{tustin_disturbance_coeffs, tustin_plant_params, transform_disturbance, Channel, PlantParams, RcParams};
use crate::regression::{build_regression, predict, selector_matrix, PredictionMode, ThetaFull};
use crate::scenario::{generate, ScenarioConfig, ScenarioData, ScenarioKind};
use crate::solver::{SpdirProblem, Status};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFrError {
    pub channel: Channel,
    pub max_relative_error: f64,
    /// rad/h
    pub omega: f64,
}

/// Metrics that need the true plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMetrics {
    pub rc: RcParams,
    pub theta_true: PlantParams,
    pub param_errors: Vec<ParamErrorRow>,
    pub fr_errors: Vec<ChannelFrError>,
    /// Sparsity of the true transformed disturbance; needs `qint_kW`.
    pub disturbance: Option<SparsityReport>,
    /// RMS of `w_bar_hat - w_bar`; needs `qint_kW`.
    pub w_bar_rms_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub rms_free_run: f64,
    pub rms_one_step: f64,
    /// Statistics of the estimated `w_bar`, thresholded at the truth's
    /// `eps_bar` when known and at zero otherwise.
    pub w_bar: SparsityReport,
    pub feasibility: FeasibilityReport,
    pub signs: SignCheck,
    pub physically_meaningful: bool,
    pub truth: Option<TruthMetrics>,
}

impl Metrics {
    pub fn fr_error(&self, channel: Channel) -> Option<ChannelFrError> {
        self.truth.as_ref()?.fr_errors.iter().find(|e| e.channel == channel).copied()
    }
}

/// Evaluates `theta` on `d`. With `truth`, adds parameter, frequency-response
/// and disturbance comparisons; an inadmissible sampling period for the true
/// plant drops them with a warning.
pub fn evaluate(theta: &ThetaFull, d: &TimeSeriesDataset, truth: Option<&RcParams>, feas_tol: f64) -> Result<Metrics> {
    let y_free = predict(&theta.theta_p, &theta.w_bar, d, PredictionMode::FreeRun)?;
    let y_step = predict(&theta.theta_p, &theta.w_bar, d, PredictionMode::OneStep)?;
    let truth = match truth {
        Some(rc) => match truth_metrics(theta, d, rc) {
            Ok(t) => Some(t),
            Err(e) => {
                log::warn!("truth-referenced metrics omitted: {e}");
                None
            }
        },
        None => None,
    };
    let eps = truth
        .as_ref()
        .and_then(|t| t.disturbance.as_ref())
        .map_or(0.0, |s| s.epsilon);
    let th = &theta.theta_p.theta;
    Ok(Metrics {
        samples: d.len(),
        rms_free_run: rms_error(&d.t_z, &y_free)?,
        rms_one_step: rms_error(&d.t_z, &y_step)?,
        w_bar: sparsity_report(&theta.w_bar, eps)?,
        feasibility: check_feasible(&build_constraints(), th, feas_tol)?,
        signs: sign_check(&theta.theta_p, feas_tol),
        physically_meaningful: is_physically_meaningful(th),
        truth,
    })
}

fn truth_metrics(theta: &ThetaFull, d: &TimeSeriesDataset, rc: &RcParams) -> Result<TruthMetrics> {
    let theta_true = tustin_plant_params(rc, d.t_s)?;
    let omegas = default_omega_grid(d.t_s);
    let fr_errors = Channel::ALL
        .into_iter()
        .map(|channel| {
            let (max_relative_error, omega) =
                max_relative_fr_error(&theta_true, &theta.theta_p, channel, &omegas, d.t_s)?;
            Ok(ChannelFrError {
                channel,
                max_relative_error,
                omega,
            })
        })
        .collect::<Result<_>>()?;
    let (disturbance, w_bar_rms_error) = match &d.q_int {
        Some(w) => {
            let w_bar = transform_disturbance(w, &tustin_disturbance_coeffs(rc, d.t_s)?)?;
            (Some(prop1_check(w, rc, d.t_s)?), Some(rms_error(&w_bar, &theta.w_bar)?))
        }
        None => (None, None),
    };
    Ok(TruthMetrics {
        rc: *rc,
        theta_true,
        param_errors: param_error_table(&theta_true, &theta.theta_p),
        fr_errors,
        disturbance,
        w_bar_rms_error,
    })
}

/// Outcome of one scenario: the automatically selected fit and its metrics
/// on both weeks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    pub lambda_star: f64,
    pub tau_sol: f64,
    pub tau_res: f64,
    /// Zero-based threshold round that accepted `lambda_star`.
    pub round: usize,
    pub path_points: usize,
    /// Grid indices whose solve stopped early.
    pub degraded: Vec<usize>,
    pub monotonicity_violations: Vec<(usize, String)>,
    pub status: Status,
    pub iterations: usize,
    pub residual_norm: f64,
    pub solution_norm: f64,
    pub theta_p: Vec<f64>,
    pub training: Metrics,
    pub validation: Metrics,
}

impl ScenarioReport {
    pub fn converged_and_feasible(&self) -> bool {
        self.status == Status::Converged && self.training.feasibility.is_feasible()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub data: ScenarioData,
    pub selection: AutoSelection,
    pub report: ScenarioReport,
}

/// Monotonicity slack of the path check, in units of the solver tolerance.
pub const MONOTONICITY_FACTOR: f64 = 10.0;

/// Simulates `cfg`, identifies on the training week with automatic λ and
/// evaluates on both weeks against the configured plant.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &AutoSelectOptions, feas_tol: f64) -> Result<ScenarioRun> {
    let data = generate(cfg)?;
    let prob = build_regression(&data.training)?;
    let s = selector_matrix(data.training.len())?;
    let p = SpdirProblem::from_regression(&prob, &s, &build_constraints())?;
    let selection = auto_select(&p, opts)?;
    let r = selection.result();
    let theta = r.theta_full()?;
    let rc = cfg.rc_params();
    let solver = &opts.sweep.solver;
    let report = ScenarioReport {
        scenario: cfg.scenario,
        lambda_star: selection.lambda_star,
        tau_sol: selection.tau_sol,
        tau_res: selection.tau_res,
        round: selection.round,
        path_points: selection.path.len(),
        degraded: selection.path.degraded(),
        monotonicity_violations: selection
            .path
            .monotonicity_violations(solver.eps_abs, solver.eps_rel, MONOTONICITY_FACTOR),
        status: r.status,
        iterations: r.iterations,
        residual_norm: r.residual_norm,
        solution_norm: r.solution_norm,
        theta_p: r.theta_p.clone(),
        training: evaluate(&theta, &data.training, Some(&rc), feas_tol)?,
        validation: evaluate(&theta, &data.validation, Some(&rc), feas_tol)?,
    };
    Ok(ScenarioRun {
        data,
        selection,
        report,
    })
}

/// Markdown table in the layout of the usual parameter-error table: true
/// coefficients and `(theta - theta_hat) / theta` in percent per scenario,
/// followed by frequency-response, RMS and λ rows.
pub fn summary_table(reports: &[ScenarioReport]) -> String {
    let mut s = String::new();
    let truth = reports
        .iter()
        .find_map(|r| r.training.truth.as_ref())
        .map(|t| t.theta_true);
    let _ = write!(s, "| θ | true |");
    for r in reports {
        let _ = write!(s, " {} (%) |", r.scenario);
    }
    s.push_str(" input |\n|---|---|");
    for _ in reports {
        s.push_str("---|");
    }
    s.push_str("---|\n");
    for i in 0..crate::rc_model::N_PLANT {
        let t = truth.map_or(String::from("-"), |t| format!("{:.3e}", t.theta[i]));
        let _ = write!(s, "| θ{} | {t} |", i + 1);
        for r in reports {
            let cell = r
                .training
                .truth
                .as_ref()
                .and_then(|t| t.param_errors[i].percent_error)
                .map_or(String::from("-"), |e| format!("{e:.3}"));
            let _ = write!(s, " {cell} |");
        }
        let input = match i {
            3 => "q_hvac",
            6 => "T_oa",
            9 => "eta_sol",
            _ => "",
        };
        let _ = writeln!(s, " {input} |");
    }
    let mut row = |label: &str, f: &dyn Fn(&ScenarioReport) -> String| {
        let _ = write!(s, "| {label} | |");
        for r in reports {
            let _ = write!(s, " {} |", f(r));
        }
        s.push_str(" |\n");
    };
    for ch in Channel::ALL {
        row(&format!("max FR error ({})", ch.name()), &|r| {
            r.training
                .fr_error(ch)
                .map_or(String::from("-"), |e| format!("{:.3} @ {:.3} rad/h", e.max_relative_error, e.omega))
        });
    }
    row("RMS validation (°C)", &|r| format!("{:.3}", r.validation.rms_free_run));
    row("RMS training (°C)", &|r| format!("{:.3}", r.training.rms_free_run));
    row("λ*", &|r| format!("{:.3e}", r.lambda_star));
    row("status", &|r| {
        let feas = if r.training.feasibility.is_feasible() { "feasible" } else { "infeasible" };
        format!("{:?}, {feas}", r.status)
    });
    s
}
