use nalgebra::{DMatrix, DVector};

use super::kkt::{kkt_residual, KktResidual, Tolerances};
use super::linsys::LinSys;
use super::polish::{polish, Guess};
use super::problem::{l1, Design, Scaled, SpdirProblem};
use super::{Formulation, SolverOptions, SolverResult, Status, WarmStart};
use crate::error::{domain, Result};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_STEP: f64 = 5.0;
const POLISH_ROUNDS: usize = 60;
const POLISH_TRIGGER: f64 = 1e4;
/// First iteration at which refinement is attempted regardless of progress;
/// the interval doubles after each attempt.
const POLISH_FORCED: usize = 200;

struct Qp<'a> {
    s: &'a Scaled,
    form: Formulation,
    nf: usize,
    np: usize,
    nc: usize,
    q: DVector<f64>,
    weights: DVector<f64>,
}

impl Qp<'_> {
    fn nx(&self) -> usize {
        self.nf + self.nw()
    }

    fn nw(&self) -> usize {
        match self.form {
            Formulation::Split => 2 * self.np,
            Formulation::Direct => self.np,
        }
    }

    /// `w` encoded by the trailing block of a variable or constraint vector.
    fn w_of(&self, tail: &DVector<f64>) -> DVector<f64> {
        match self.form {
            Formulation::Split => tail.rows(0, self.np) - tail.rows(self.np, self.np),
            Formulation::Direct => tail.clone(),
        }
    }

    fn c_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nc + self.nw());
        out.rows_mut(0, self.nc).copy_from(&(&self.s.a * x.rows(0, self.nf)));
        out.rows_mut(self.nc, self.nw()).copy_from(&x.rows(self.nf, self.nw()));
        out
    }

    fn ct_mul(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nx());
        out.rows_mut(0, self.nf).copy_from(&self.s.a.tr_mul(&u.rows(0, self.nc)));
        out.rows_mut(self.nf, self.nw()).copy_from(&u.rows(self.nc, self.nw()));
        out
    }

    /// `Phi_tilde^T r` in the QP variable layout.
    fn phi_t(&self, r: &DVector<f64>) -> DVector<f64> {
        let (tf, tw) = self.s.phi_t(r);
        let mut out = DVector::zeros(self.nx());
        out.rows_mut(0, self.nf).copy_from(&tf);
        out.rows_mut(self.nf, self.np).copy_from(&tw);
        if self.form == Formulation::Split {
            out.rows_mut(self.nf + self.np, self.np).copy_from(&(-tw));
        }
        out
    }

    fn p_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let tail = x.rows(self.nf, self.nw()).into_owned();
        let fit = self.s.phi(&x.rows(0, self.nf).into_owned(), &self.w_of(&tail));
        self.phi_t(&fit) * 2.0
    }

    fn project(&self, v: &DVector<f64>, rho: f64) -> DVector<f64> {
        let mut z = v.clone();
        for i in 0..self.nc {
            z[i] = z[i].min(self.s.b[i]);
        }
        for k in 0..self.nw() {
            let i = self.nc + k;
            z[i] = match self.form {
                Formulation::Split => z[i].max(0.0),
                Formulation::Direct => {
                    let t = self.weights[k] / rho;
                    z[i].signum() * (z[i].abs() - t).max(0.0)
                }
            };
        }
        z
    }

    /// Unscaled candidate: free part from `x`, penalized part from `z`, so
    /// that zeros produced by the projection are exact.
    fn candidate(&self, x: &DVector<f64>, z: &DVector<f64>) -> Vec<f64> {
        let w = self.w_of(&z.rows(self.nc, self.nw()).into_owned());
        self.s.unscale(&x.rows(0, self.nf).into_owned(), &w)
    }
}

struct Best {
    theta: Vec<f64>,
    kkt: KktResidual,
    tol: Tolerances,
    ratio: f64,
    polished: bool,
}

pub(crate) fn run(p: &SpdirProblem, lambda: f64, opts: &SolverOptions, warm: Option<&WarmStart>) -> Result<SolverResult> {
    opts.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(domain("lambda", format!("must be a finite non-negative number, got {lambda}")));
    }
    let s = Scaled::new(p, opts.scaling);
    let form = opts.formulation;
    let (nf, np, nc) = (s.n_free, s.n_pen, s.n_cons());
    let weights = s.pen_weights(lambda);
    let (ty_f, ty_w) = s.phi_t(&s.y);
    let nw = match form {
        Formulation::Split => 2 * np,
        Formulation::Direct => np,
    };
    let mut q = DVector::zeros(nf + nw);
    q.rows_mut(0, nf).copy_from(&(ty_f * -2.0));
    match form {
        Formulation::Split => {
            q.rows_mut(nf, np).copy_from(&(&ty_w * -2.0 + &weights));
            q.rows_mut(nf + np, np).copy_from(&(&ty_w * 2.0 + &weights));
        }
        Formulation::Direct => q.rows_mut(nf, np).copy_from(&(ty_w * -2.0)),
    }
    let qp = Qp {
        s: &s,
        form,
        nf,
        np,
        nc,
        q,
        weights,
    };
    let (nx, nz) = (qp.nx(), nc + nw);

    let gram = match &s.design {
        Design::IdentityBlock(psi) => Some(psi.tr_mul(psi)),
        Design::Dense(_) => None,
    };
    let ata: DMatrix<f64> = s.a.tr_mul(&s.a);

    let (mut x, mut z, mut y, mut rho) = match warm {
        Some(ws) if ws.formulation == form && ws.x.len() == nx && ws.z.len() == nz => {
            (ws.x.clone(), ws.z.clone(), ws.y.clone(), ws.rho)
        }
        Some(_) => {
            log::debug!("warm start ignored: shape or formulation mismatch");
            (DVector::zeros(nx), DVector::zeros(nz), DVector::zeros(nz), opts.rho)
        }
        None => (DVector::zeros(nx), DVector::zeros(nz), DVector::zeros(nz), opts.rho),
    };
    let sigma = opts.sigma;
    let alpha = opts.over_relaxation;
    let mut lin = LinSys::new(&s, form, gram.as_ref(), &ata, sigma, rho)?;

    let mut best: Option<Best> = None;
    let mut merit = Vec::new();
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let mut polish_ratio = f64::INFINITY;
    let mut forced_at = POLISH_FORCED;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        let rhs = &x * sigma - &qp.q + qp.ct_mul(&(&z * rho - &y));
        let xt = lin.solve(&s, form, &rhs);
        let zt = qp.c_mul(&xt);
        let x_new = &xt * alpha + &x * (1.0 - alpha);
        let v = &zt * alpha + &z * (1.0 - alpha);
        let z_new = qp.project(&(&v + &y / rho), rho);
        let y_new = &y + (&v - &z_new) * rho;

        if opts.record_merit {
            let dx = (&x_new - &x).norm_squared();
            let ds = ((&z_new - &y_new / rho) - (&z - &y / rho)).norm_squared();
            merit.push((sigma * dx + rho * ds).sqrt());
        }
        let dy = &y_new - &y;
        x = x_new;
        z = z_new;
        y = y_new;

        if iter % opts.check_every != 0 && iter != opts.max_iter {
            continue;
        }

        let theta = qp.candidate(&x, &z);
        let kkt = kkt_residual(p, lambda, &theta)?;
        let tol = Tolerances::new(p, lambda, &theta, opts.eps_abs, opts.eps_rel);
        let ratio = tol.ratio(&kkt);
        consider(&mut best, theta, kkt, tol, false);
        if best.as_ref().is_some_and(|b| b.ratio <= 1.0) {
            status = Status::Converged;
            break;
        }

        // Refinement is tried once the iterate is roughly right, again after
        // each tenfold improvement, at doubling intervals, and at the end.
        let improved = ratio <= POLISH_TRIGGER && ratio <= polish_ratio / 10.0;
        let forced = iter >= forced_at;
        if opts.polish && (improved || forced || iter == opts.max_iter) {
            polish_ratio = polish_ratio.min(ratio);
            if forced {
                forced_at *= 2;
            }
            let guess = Guess {
                x_f: x.rows(0, nf).into_owned(),
                w: qp.w_of(&z.rows(nc, nw).into_owned()),
                active: (0..nc).map(|i| s.b[i] - z[i] < y[i]).collect(),
            };
            if let Some((xf, w)) = polish(&s, lambda, &guess, POLISH_ROUNDS) {
                let theta = s.unscale(&xf, &w);
                let kkt = kkt_residual(p, lambda, &theta)?;
                let tol = Tolerances::new(p, lambda, &theta, opts.eps_abs, opts.eps_rel);
                consider(&mut best, theta, kkt, tol, true);
                if best.as_ref().is_some_and(|b| b.ratio <= 1.0) {
                    status = Status::Converged;
                    break;
                }
            }
        }

        if nc > 0 && primal_infeasible(&qp, &dy, opts.eps_infeas) {
            status = Status::InfeasibleDetected;
            break;
        }

        if opts.adaptive_rho {
            let cx = qp.c_mul(&x);
            let px = qp.p_mul(&x);
            let cty = qp.ct_mul(&y);
            let r_prim = (&cx - &z).amax();
            let r_dual = (&px + &qp.q + &cty).amax();
            let prim_scale = cx.amax().max(z.amax()).max(1e-30);
            let dual_scale = px.amax().max(cty.amax()).max(qp.q.amax()).max(1e-30);
            if r_dual > 0.0 && r_prim > 0.0 {
                let proposal = (rho * ((r_prim / prim_scale) / (r_dual / dual_scale)).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if proposal > rho * RHO_STEP || proposal < rho / RHO_STEP {
                    rho = proposal;
                    lin = LinSys::new(&s, form, gram.as_ref(), &ata, sigma, rho)?;
                }
            }
        }
    }

    let best = match best {
        Some(b) => b,
        None => {
            let theta = qp.candidate(&x, &z);
            let kkt = kkt_residual(p, lambda, &theta)?;
            let tol = Tolerances::new(p, lambda, &theta, opts.eps_abs, opts.eps_rel);
            let ratio = tol.ratio(&kkt);
            Best {
                theta,
                kkt,
                tol,
                ratio,
                polished: false,
            }
        }
    };
    let theta = best.theta;
    let residual = p.residual(&theta);
    let w_bar = theta[nf..].to_vec();
    Ok(SolverResult {
        lambda,
        theta_p: theta[..nf].to_vec(),
        objective: p.objective(&theta, lambda),
        residual_norm: residual.norm(),
        solution_norm: l1(&w_bar),
        w_bar,
        iterations,
        status,
        kkt: best.kkt,
        tolerances: best.tol,
        polished: best.polished,
        rho,
        merit,
        warm_start: Some(WarmStart {
            formulation: form,
            x,
            z,
            y,
            rho,
        }),
    })
}

fn consider(best: &mut Option<Best>, theta: Vec<f64>, kkt: KktResidual, tol: Tolerances, polished: bool) {
    let ratio = tol.ratio(&kkt);
    if best.as_ref().is_none_or(|b| ratio < b.ratio) {
        *best = Some(Best {
            theta,
            kkt,
            tol,
            ratio,
            polished,
        });
    }
}

/// Farkas certificate from the last dual step restricted to the `A` rows,
/// which carry no lower bounds.
fn primal_infeasible(qp: &Qp, dy: &DVector<f64>, eps: f64) -> bool {
    let norm = dy.amax();
    if norm <= 1e-30 {
        return false;
    }
    let dy_a = dy.rows(0, qp.nc);
    if dy_a.min() < -eps * norm {
        return false;
    }
    let ct = qp.ct_mul(dy);
    if ct.amax() > eps * norm {
        return false;
    }
    let support: f64 = (0..qp.nc).map(|i| qp.s.b[i] * dy[i].max(0.0)).sum();
    let tail_ok = match qp.form {
        Formulation::Split => (0..qp.nw()).all(|k| dy[qp.nc + k] <= eps * norm),
        Formulation::Direct => true,
    };
    tail_ok && support < -eps * norm
}
