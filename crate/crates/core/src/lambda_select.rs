//! Regularization path over a λ grid and the dual-threshold choice of λ.
//!
//! Along an increasing grid the solution norm `||S theta||₁` falls and the
//! residual norm `||y - Phi theta||₂` rises. `λ₁` is where the solution norm
//! has settled below `tau_sol`, `λ₂` is where the residual norm leaves
//! `tau_res`; the pair is accepted when `λ₂ > λ₁` and `λ₁` is returned.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::solver::{solve, SolverOptions, SolverResult, SpdirProblem, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lambdas: Vec<f64>,
    pub solution_norms: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub results: Vec<SolverResult>,
}

#[derive(Debug, Clone, Serialize)]
struct PathRow {
    lambda: f64,
    solution_norm: f64,
    residual_norm: f64,
    status: Status,
}

impl LambdaPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn statuses(&self) -> impl Iterator<Item = Status> + '_ {
        self.results.iter().map(|r| r.status)
    }

    /// Grid points whose solve did not converge.
    pub fn degraded(&self) -> Vec<usize> {
        self.statuses()
            .enumerate()
            .filter(|(_, s)| *s != Status::Converged)
            .map(|(i, _)| i)
            .collect()
    }

    /// Adjacent pairs where a curve moves the wrong way by more than
    /// `factor` times the solver tolerance, as `(index, description)`.
    pub fn monotonicity_violations(&self, eps_abs: f64, eps_rel: f64, factor: f64) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for i in 1..self.len() {
            let (s0, s1) = (self.solution_norms[i - 1], self.solution_norms[i]);
            let n_pen = self.results[i].w_bar.len().max(1) as f64;
            let tol = factor * (eps_abs * n_pen + eps_rel * s0.max(s1));
            if s1 > s0 + tol {
                out.push((i, format!("solution norm rises {s0:e} -> {s1:e} (tol {tol:e})")));
            }
            let (r0, r1) = (self.residual_norms[i - 1], self.residual_norms[i]);
            let tol = factor * (eps_abs + eps_rel * r0.max(r1));
            if r1 < r0 - tol {
                out.push((i, format!("residual norm falls {r0:e} -> {r1:e} (tol {tol:e})")));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (i, r) in self.results.iter().enumerate() {
            wr.serialize(PathRow {
                lambda: self.lambdas[i],
                solution_norm: self.solution_norms[i],
                residual_norm: self.residual_norms[i],
                status: r.status,
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(domain("grid", "must not be empty"));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(domain("grid", "every λ must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("grid", "must be strictly increasing"));
    }
    Ok(())
}

/// `n` log-spaced points from `lo * scale` to `hi * scale`.
pub fn log_grid(lo: f64, hi: f64, n: usize, scale: f64) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && scale > 0.0 && scale.is_finite()) || n == 0 {
        return Err(domain("grid", format!("bad log grid [{lo}, {hi}] x {scale} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![lo * scale]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n)
        .map(|i| scale * 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect())
}

/// Smallest λ at which the penalized block vanishes: `2 ||Phi_W^T r₀||∞`,
/// where `r₀` is the constrained least-squares residual with `w = 0`.
///
/// `r₀` is obtained by solving at a λ large enough to zero the block; the
/// trial value is doubled until it does.
pub fn lambda_max(p: &SpdirProblem, opts: &SolverOptions) -> Result<f64> {
    let mut lam = 2.0 * p.y.norm().max(1e-12) * (1.0 + 1e-6);
    for _ in 0..60 {
        let r = solve(p, lam, opts, None)?;
        if r.status == Status::InfeasibleDetected {
            return Err(Error::Precondition("constraints are infeasible".into()));
        }
        let w_inf = r.w_bar.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = r.theta_p.iter().chain(&r.w_bar).fold(1.0_f64, |m, v| m.max(v.abs()));
        if w_inf <= 1e-9 * scale {
            let mut theta = r.theta_p.clone();
            theta.resize(p.n_vars(), 0.0);
            let g = p.apply_t(&p.residual(&theta));
            let est = 2.0 * g.rows(p.n_free, p.n_pen()).amax();
            return Ok(if est > 0.0 { est } else { 1.0 });
        }
        lam *= 2.0;
    }
    Err(Error::Precondition("could not find a λ that zeroes the penalized block".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    /// Start each solve from the previous grid point. Without it the grid
    /// points are solved in parallel.
    pub warm_start: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            warm_start: true,
        }
    }
}

/// Solves `p` at every grid point. Points that stop at the iteration limit are
/// kept and show up in [`LambdaPath::degraded`].
pub fn sweep(p: &SpdirProblem, grid: &[f64], opts: &SweepOptions) -> Result<LambdaPath> {
    check_grid(grid)?;
    opts.solver.validate()?;
    let results: Vec<SolverResult> = if opts.warm_start {
        let mut out: Vec<SolverResult> = Vec::with_capacity(grid.len());
        for &lam in grid {
            let warm = out.last().and_then(|r| r.warm_start.as_ref());
            let r = solve(p, lam, &opts.solver, warm)?;
            if r.status != Status::Converged {
                log::warn!("λ = {lam:e}: {:?} after {} iterations", r.status, r.iterations);
            }
            out.push(r);
        }
        out
    } else {
        grid.par_iter()
            .map(|&lam| solve(p, lam, &opts.solver, None))
            .collect::<Result<_>>()?
    };
    if results.iter().any(|r| r.status == Status::InfeasibleDetected) {
        return Err(Error::Precondition("constraints are infeasible".into()));
    }
    Ok(LambdaPath {
        lambdas: grid.to_vec(),
        solution_norms: results.iter().map(|r| r.solution_norm).collect(),
        residual_norms: results.iter().map(|r| r.residual_norm).collect(),
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda_star: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub index1: Option<usize>,
    pub index2: Option<usize>,
    pub accepted: bool,
    pub diagnostic: Option<String>,
}

/// Applies the two thresholds to the curves. Pure: reads the arrays only.
///
/// A grid point only qualifies through points that exist: `λ₁` needs the
/// largest grid λ itself below `tau_sol`, `λ₂` needs the smallest grid λ
/// below `tau_res`.
pub fn select_lambda(path: &LambdaPath, tau_sol: f64, tau_res: f64) -> Result<Selection> {
    if path.is_empty() {
        return Err(domain("path", "must not be empty"));
    }
    if !(tau_sol > 0.0 && tau_res > 0.0) {
        return Err(domain("tau", "thresholds must be positive"));
    }
    let n = path.len();
    let sol = &path.solution_norms;
    let res = &path.residual_norms;

    // Suffix of points below tau_sol; λ₁ is the point just before it.
    let mut index1 = None;
    if sol[n - 1] < tau_sol {
        let mut i = n - 1;
        while i > 0 && sol[i] < tau_sol {
            i -= 1;
        }
        index1 = Some(i);
    }
    // Prefix of points below tau_res; λ₂ is the point just after it.
    let mut index2 = None;
    if res[0] < tau_res {
        let mut i = 0;
        while i + 1 < n && res[i] < tau_res {
            i += 1;
        }
        index2 = Some(i);
    }

    let accepted = matches!((index1, index2), (Some(a), Some(b)) if b > a);
    let diagnostic = match (index1, index2) {
        (None, _) => Some(format!("no λ₁: solution norm at the largest λ is not below {tau_sol:e}")),
        (_, None) => Some(format!("no λ₂: residual norm at the smallest λ is not below {tau_res:e}")),
        (Some(a), Some(b)) if b <= a => Some(format!("λ₂ (index {b}) does not exceed λ₁ (index {a})")),
        _ => None,
    };
    let at = |i: Option<usize>| i.map(|i| path.lambdas[i]);
    Ok(Selection {
        lambda_star: if accepted { at(index1) } else { None },
        lambda1: at(index1),
        lambda2: at(index2),
        index1,
        index2,
        accepted,
        diagnostic,
    })
}

/// Threshold pairs tried by [`auto_select`]: start from fractions of the
/// curve extremes and relax both by `relax` each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSchedule {
    /// `tau_sol = sol_fraction * max solution norm` in the first round.
    pub sol_fraction: f64,
    /// `tau_res = res_multiple * min residual norm` in the first round.
    pub res_multiple: f64,
    pub relax: f64,
    pub max_rounds: usize,
}

impl Default for ThresholdSchedule {
    fn default() -> Self {
        Self {
            sol_fraction: 0.1,
            res_multiple: 2.0,
            relax: 1.5,
            max_rounds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoSelectOptions {
    /// Explicit grid; otherwise `n_points` log-spaced over
    /// `[grid_lo, grid_hi] * lambda_max`.
    pub grid: Option<Vec<f64>>,
    pub n_points: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub schedule: ThresholdSchedule,
    pub sweep: SweepOptions,
}

impl Default for AutoSelectOptions {
    fn default() -> Self {
        Self {
            grid: None,
            n_points: 30,
            grid_lo: 1e-6,
            grid_hi: 1e2,
            schedule: ThresholdSchedule::default(),
            sweep: SweepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoSelection {
    pub lambda_star: f64,
    pub tau_sol: f64,
    pub tau_res: f64,
    /// Zero-based round in which the pair was accepted.
    pub round: usize,
    pub selection: Selection,
    pub path: LambdaPath,
}

impl AutoSelection {
    /// Solver result at `lambda_star`.
    pub fn result(&self) -> &SolverResult {
        let i = self.selection.index1.expect("accepted selections have λ₁");
        &self.path.results[i]
    }
}

/// Default grid for `p`.
pub fn default_grid(p: &SpdirProblem, opts: &AutoSelectOptions) -> Result<Vec<f64>> {
    let scale = lambda_max(p, &opts.sweep.solver)?;
    log_grid(opts.grid_lo, opts.grid_hi, opts.n_points, scale)
}

/// Sweeps once, then walks the threshold schedule until a pair is accepted.
///
/// Once `tau_res` reaches the largest residual norm, `λ₂` is the last grid
/// point whatever the curve does, and the schedule ends there.
pub fn auto_select(p: &SpdirProblem, opts: &AutoSelectOptions) -> Result<AutoSelection> {
    let grid = match &opts.grid {
        Some(g) => g.clone(),
        None => default_grid(p, opts)?,
    };
    let path = sweep(p, &grid, &opts.sweep)?;
    select_on_path(path, &opts.schedule)
}

/// The threshold schedule of [`auto_select`] on an existing path.
pub fn select_on_path(path: LambdaPath, schedule: &ThresholdSchedule) -> Result<AutoSelection> {
    if path.is_empty() {
        return Err(domain("path", "must not be empty"));
    }
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    let sol_max = fold(&path.solution_norms, f64::max, f64::NEG_INFINITY);
    let res_min = fold(&path.residual_norms, f64::min, f64::INFINITY);
    let res_max = fold(&path.residual_norms, f64::max, f64::NEG_INFINITY);
    let mut tau_sol = schedule.sol_fraction * sol_max;
    let mut tau_res = schedule.res_multiple * res_min;
    let mut last = String::from("empty schedule");
    for round in 0..schedule.max_rounds {
        if !(tau_sol > 0.0 && tau_res > 0.0) {
            last = format!("degenerate thresholds tau_sol = {tau_sol:e}, tau_res = {tau_res:e}");
            break;
        }
        if tau_res >= res_max {
            last = format!("residual threshold {tau_res:e} no longer separates the residual curve (round {round})");
            break;
        }
        let sel = select_lambda(&path, tau_sol, tau_res)?;
        if let (true, Some(lambda_star)) = (sel.accepted, sel.lambda_star) {
            return Ok(AutoSelection {
                lambda_star,
                tau_sol,
                tau_res,
                round,
                selection: sel,
                path,
            });
        }
        last = sel.diagnostic.unwrap_or_default();
        tau_sol *= schedule.relax;
        tau_res *= schedule.relax;
    }
    Err(Error::Selection {
        rounds: schedule.max_rounds,
        reason: last,
        path: Box::new(path),
    })
}
