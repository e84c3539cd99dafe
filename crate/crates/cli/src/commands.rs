use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use spdir::analysis::{default_omega_grid, write_bode_csv_file};
use spdir::constraints::{build_constraints, check_feasible, FeasibilityReport, DEFAULT_FEAS_TOL};
use spdir::datagen::{load_csv, write_csv};
use spdir::io::{write_atomic, write_json};
use spdir::lambda_select::{auto_select, default_grid, select_on_path, sweep as run_sweep, AutoSelectOptions, Selection};
use spdir::rc_model::tustin_plant_params;
use spdir::regression::{build_regression, selector_matrix, ThetaFull};
use spdir::report::{evaluate, run_scenario, summary_table, ScenarioReport};
use spdir::scenario::{generate, ScenarioConfig, ScenarioKind};
use spdir::solver::{solve, SolverOptions, SolverResult, SpdirProblem};

use crate::{GridArgs, IdentifyArgs, ReproduceArgs, ScenarioOverrides, SimulateArgs, SolverArgs, SweepArgs, ValidateArgs};

pub enum Outcome {
    Ok,
    /// Outputs were written but a stage did not converge or is infeasible.
    Degraded(String),
}

/// What `identify` writes to `result.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Identification {
    /// Hours.
    pub t_s: f64,
    pub dataset: PathBuf,
    /// Present with `--auto`.
    pub selection: Option<AutoInfo>,
    pub feasibility: FeasibilityReport,
    pub result: SolverResult,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AutoInfo {
    pub tau_sol: f64,
    pub tau_res: f64,
    pub round: usize,
    pub selection: Selection,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("cannot parse {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn scenario_config(o: &ScenarioOverrides) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = match &o.config {
        Some(p) => read_json(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = &o.scenario {
        cfg.scenario = s.parse::<ScenarioKind>()?;
    }
    if let Some(h) = o.horizon {
        cfg.horizon = h;
    }
    if let Some(w) = o.warmup {
        cfg.warmup = w;
    }
    if let Some(t) = o.ts {
        cfg.t_s = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn solver_options(a: &SolverArgs) -> Result<SolverOptions> {
    let mut opts: SolverOptions = match &a.solver {
        Some(p) => read_json(p)?,
        None => SolverOptions::default(),
    };
    if let Some(m) = a.max_iter {
        opts.max_iter = m;
    }
    opts.validate()?;
    Ok(opts)
}

fn auto_options(solver: SolverOptions, g: &GridArgs) -> AutoSelectOptions {
    let mut opts = AutoSelectOptions {
        grid: g.lambdas.clone(),
        ..Default::default()
    };
    if let Some(n) = g.n_points {
        opts.n_points = n;
    }
    if let Some(lo) = g.grid_lo {
        opts.grid_lo = lo;
    }
    if let Some(hi) = g.grid_hi {
        opts.grid_hi = hi;
    }
    opts.sweep.solver = solver;
    opts.sweep.warm_start = !g.cold;
    opts
}

fn problem(dataset: &Path, t_s: f64) -> Result<SpdirProblem> {
    let d = load_csv(dataset, t_s).with_context(|| format!("cannot load {}", dataset.display()))?;
    let prob = build_regression(&d)?;
    let s = selector_matrix(d.len())?;
    Ok(SpdirProblem::from_regression(&prob, &s, &build_constraints())?)
}

/// `k,w_bar` with `k` the 1-based sample index (from 3).
fn write_w_bar(path: &Path, w_bar: &[f64]) -> Result<()> {
    let mut s = String::from("k,w_bar\n");
    for (i, v) in w_bar.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 3));
    }
    write_atomic(path, s.as_bytes())?;
    Ok(())
}

fn status_message(r: &SolverResult, f: &FeasibilityReport) -> Option<String> {
    if !r.is_converged() {
        return Some(format!(
            "solver stopped with status {:?} after {} iterations (kkt ratio {:.3e})",
            r.status,
            r.iterations,
            r.tolerances.ratio(&r.kkt)
        ));
    }
    if !f.is_feasible() {
        return Some(format!("estimate violates {} constraint rows", f.violations.len()));
    }
    None
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let cfg = scenario_config(&a.scenario)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let data = generate(&cfg)?;
    create_dir(&out)?;
    write_csv(&data.training, out.join("training.csv"))?;
    write_csv(&data.validation, out.join("validation.csv"))?;
    write_json(&out.join("config.json"), &cfg)?;
    log::info!("{}: wrote {} samples per week to {}", cfg.scenario, cfg.horizon, out.display());
    Ok(Outcome::Ok)
}

pub fn identify(a: &IdentifyArgs) -> Result<Outcome> {
    let p = problem(&a.dataset, a.ts)?;
    let solver = solver_options(&a.solver)?;
    create_dir(&a.out)?;
    let (result, selection) = match a.lambda {
        Some(lam) => (solve(&p, lam, &solver, None)?, None),
        None => {
            let sel = auto_select(&p, &auto_options(solver, &a.grid))?;
            sel.path.write_csv_file(&a.out.join("lambda_path.csv"))?;
            let info = AutoInfo {
                tau_sol: sel.tau_sol,
                tau_res: sel.tau_res,
                round: sel.round,
                selection: sel.selection.clone(),
            };
            log::info!("selected λ* = {:e} in round {}", sel.lambda_star, sel.round);
            (sel.result().clone(), Some(info))
        }
    };
    let feasibility = check_feasible(&build_constraints(), &result.theta_p, DEFAULT_FEAS_TOL)?;
    write_w_bar(&a.out.join("w_bar.csv"), &result.w_bar)?;
    let msg = status_message(&result, &feasibility);
    println!(
        "λ = {:e}: residual {:.6e}, ||w̄||₁ {:.6e}, {:?}",
        result.lambda, result.residual_norm, result.solution_norm, result.status
    );
    let id = Identification {
        t_s: a.ts,
        dataset: a.dataset.clone(),
        selection,
        feasibility,
        result,
    };
    write_json(&a.out.join("result.json"), &id)?;
    Ok(msg.map_or(Outcome::Ok, Outcome::Degraded))
}

pub fn sweep(a: &SweepArgs) -> Result<Outcome> {
    let p = problem(&a.dataset, a.ts)?;
    let opts = auto_options(solver_options(&a.solver)?, &a.grid);
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => default_grid(&p, &opts)?,
    };
    let path = run_sweep(&p, &grid, &opts.sweep)?;
    create_dir(&a.out)?;
    path.write_csv_file(&a.out.join("lambda_path.csv"))?;
    let degraded = path.degraded();
    let selection = match select_on_path(path, &opts.schedule) {
        Ok(s) => serde_json::json!({
            "accepted": true,
            "lambda_star": s.lambda_star,
            "tau_sol": s.tau_sol,
            "tau_res": s.tau_res,
            "round": s.round,
            "selection": s.selection,
        }),
        Err(spdir::Error::Selection { rounds, reason, .. }) => serde_json::json!({
            "accepted": false,
            "rounds": rounds,
            "reason": reason,
        }),
        Err(e) => return Err(e.into()),
    };
    write_json(&a.out.join("selection.json"), &selection)?;
    println!("{} grid points, accepted: {}", grid.len(), selection["accepted"]);
    if degraded.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Degraded(format!("grid points {degraded:?} did not converge")))
    }
}

pub fn validate(a: &ValidateArgs) -> Result<Outcome> {
    let id: Identification = read_json(&a.result)?;
    let d = load_csv(&a.dataset, id.t_s).with_context(|| format!("cannot load {}", a.dataset.display()))?;
    let truth = match &a.config {
        Some(p) => Some(read_json::<ScenarioConfig>(p)?.rc_params()),
        None => None,
    };
    let theta: ThetaFull = id.result.theta_full()?;
    let metrics = evaluate(&theta, &d, truth.as_ref(), a.feas_tol)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&a.out, &metrics)?;
    if let Some(bode) = &a.bode {
        let Some(rc) = truth else {
            bail!("--bode needs the true plant from --config");
        };
        let theta_true = tustin_plant_params(&rc, id.t_s)?;
        write_bode_csv_file(&theta_true, &theta.theta_p, &default_omega_grid(id.t_s), id.t_s, bode)?;
    }
    println!("free-run RMS {:.4} °C, one-step RMS {:.4} °C", metrics.rms_free_run, metrics.rms_one_step);
    Ok(status_message(&id.result, &metrics.feasibility).map_or(Outcome::Ok, Outcome::Degraded))
}

pub fn reproduce(a: &ReproduceArgs) -> Result<Outcome> {
    let base: ScenarioConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ScenarioConfig::default(),
    };
    let kinds: Vec<ScenarioKind> = match &a.scenarios {
        Some(list) => list.iter().map(|s| s.parse()).collect::<spdir::Result<_>>()?,
        None => ScenarioKind::ALL.to_vec(),
    };
    let mut opts = AutoSelectOptions::default();
    opts.sweep.solver = solver_options(&a.solver)?;
    create_dir(&a.out)?;

    let reports: Vec<ScenarioReport> = kinds
        .par_iter()
        .map(|&kind| -> Result<ScenarioReport> {
            let mut cfg = base.clone();
            cfg.scenario = kind;
            if let Some(h) = a.horizon {
                cfg.horizon = h;
            }
            let run = run_scenario(&cfg, &opts, DEFAULT_FEAS_TOL).with_context(|| format!("scenario {kind}"))?;
            let dir = a.out.join(kind.name());
            create_dir(&dir)?;
            write_csv(&run.data.training, dir.join("training.csv"))?;
            write_csv(&run.data.validation, dir.join("validation.csv"))?;
            write_json(&dir.join("config.json"), &cfg)?;
            run.selection.path.write_csv_file(&dir.join("lambda_path.csv"))?;
            let r = run.selection.result();
            write_w_bar(&dir.join("w_bar.csv"), &r.w_bar)?;
            let theta_true = tustin_plant_params(&cfg.rc_params(), cfg.t_s)?;
            let theta_hat = r.theta_full()?.theta_p;
            write_bode_csv_file(&theta_true, &theta_hat, &default_omega_grid(cfg.t_s), cfg.t_s, &dir.join("bode.csv"))?;
            write_json(&dir.join("report.json"), &run.report)?;
            log::info!("{kind}: λ* = {:e}", run.report.lambda_star);
            Ok(run.report)
        })
        .collect::<Result<_>>()?;

    let table = summary_table(&reports);
    write_atomic(&a.out.join("summary.md"), table.as_bytes())?;
    write_json(&a.out.join("summary.json"), &reports)?;
    print!("{table}");
    let bad: Vec<&str> = reports
        .iter()
        .filter(|r| !r.converged_and_feasible())
        .map(|r| r.scenario.name())
        .collect();
    if bad.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::Degraded(format!("not converged or infeasible: {}", bad.join(", "))))
    }
}
