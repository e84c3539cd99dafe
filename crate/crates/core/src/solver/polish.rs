//! Active-set refinement of an approximate solution.
//!
//! The iterate fixes a guess of the active constraints and of the sign
//! pattern of `w`; the resulting equality-constrained quadratic is solved
//! exactly and the guess is corrected until it is self-consistent.

use nalgebra::{DMatrix, DVector};

use super::kkt::lstsq;
use super::problem::{Design, Scaled};

pub(crate) struct Guess {
    pub x_f: DVector<f64>,
    pub w: DVector<f64>,
    pub active: Vec<bool>,
}

pub(crate) fn polish(s: &Scaled, lambda: f64, guess: &Guess, max_rounds: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    match &s.design {
        Design::IdentityBlock(psi) => huber(s, psi, lambda, guess, max_rounds),
        Design::Dense(phi) => dense(s, phi, lambda, guess, max_rounds),
    }
}

/// `min ||yv - M x||² + c^T x  s.t.  Aeq x = beq`; returns `x` and the
/// multipliers of the equalities.
fn eq_qp(m: &DMatrix<f64>, yv: &DVector<f64>, c: &DVector<f64>, aeq: &DMatrix<f64>, beq: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = m.ncols();
    let (x0, null) = if aeq.nrows() == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let mut padded = DMatrix::zeros(n.max(aeq.nrows()), n);
        padded.rows_mut(0, aeq.nrows()).copy_from(aeq);
        let svd = padded.svd(true, true);
        let v_t = svd.v_t.as_ref().expect("requested V");
        let u = svd.u.as_ref().expect("requested U");
        let smax = svd.singular_values.amax();
        let tol = smax * 1e-12 * n as f64;
        let mut x0 = DVector::zeros(n);
        let mut null_cols = vec![];
        for (i, &sv) in svd.singular_values.iter().enumerate() {
            if sv > tol {
                let coef = u.column(i).rows(0, aeq.nrows()).dot(beq) / sv;
                x0 += v_t.row(i).transpose() * coef;
            } else {
                null_cols.push(v_t.row(i).transpose());
            }
        }
        let null = if null_cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&null_cols)
        };
        (x0, null)
    };

    let mut x = x0.clone();
    if null.ncols() > 0 {
        let b = m * &null;
        let r0 = yv - m * &x0;
        let nc = null.tr_mul(c);
        if b.nrows() == 0 {
            // No quadratic term: nothing pins the free directions.
        } else {
            let dim = b.nrows().max(b.ncols()) as f64;
            let svd = b.svd(true, true);
            let u = svd.u.as_ref().expect("requested U");
            let v_t = svd.v_t.as_ref().expect("requested V");
            let smax = svd.singular_values.amax();
            let tol = smax * 1e-13 * dim;
            let mut z = DVector::zeros(null.ncols());
            for (i, &sv) in svd.singular_values.iter().enumerate() {
                if sv > tol {
                    let vi = v_t.row(i).transpose();
                    let coef = u.column(i).dot(&r0) / sv - vi.dot(&nc) / (2.0 * sv * sv);
                    z += vi * coef;
                }
            }
            x += null * z;
        }
    }
    let g = m.tr_mul(&(m * &x - yv)) * 2.0 + c;
    let mu = if aeq.nrows() == 0 {
        DVector::zeros(0)
    } else {
        lstsq(&aeq.transpose(), &(-g))
    };
    (x, mu)
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)])
}

fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&i| v[i]))
}

/// Adds the most violated inactive row or drops the most negative
/// multiplier; returns whether the active set changed.
fn update_active(s: &Scaled, x_f: &DVector<f64>, act: &[usize], mu: &DVector<f64>, active: &mut [bool]) -> bool {
    let slack = &s.b - &s.a * x_f;
    let scale = 1.0 + s.b.amax();
    let worst = (0..s.n_cons())
        .filter(|&i| !active[i] && slack[i] < -1e-13 * scale)
        .min_by(|&i, &j| slack[i].total_cmp(&slack[j]));
    if let Some(i) = worst {
        active[i] = true;
        return true;
    }
    let neg = (0..act.len())
        .filter(|&k| mu[k] < -1e-12 * (1.0 + mu.amax()))
        .min_by(|&i, &j| mu[i].total_cmp(&mu[j]));
    if let Some(k) = neg {
        active[act[k]] = false;
        return true;
    }
    false
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Orthonormal basis of the null space of `a` (`n` columns).
fn null_space(a: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let mut padded = DMatrix::zeros(n.max(a.nrows()), n);
    padded.rows_mut(0, a.nrows()).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let tol = svd.singular_values.amax() * 1e-12 * n as f64;
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= tol)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Closest point to `x0` satisfying `A x <= b`, found by promoting violated
/// rows to equalities; `None` if that does not reach feasibility.
fn feasible_start(s: &Scaled, x0: &DVector<f64>, active: &mut [bool]) -> Option<DVector<f64>> {
    let n = x0.len();
    let tol = 1e-12 * (1.0 + s.b.amax());
    let mut x = x0.clone();
    let mut w: Vec<bool> = vec![false; s.n_cons()];
    for _ in 0..=s.n_cons() {
        let slack = &s.b - &s.a * &x;
        let mut added = false;
        for i in 0..s.n_cons() {
            if slack[i] < -tol && !w[i] {
                w[i] = true;
                added = true;
            }
        }
        if !added {
            for i in 0..s.n_cons() {
                active[i] = w[i] || (active[i] && slack[i] <= tol);
            }
            return Some(x);
        }
        let rows: Vec<usize> = (0..s.n_cons()).filter(|&i| w[i]).collect();
        x = eq_qp(&DMatrix::identity(n, n), x0, &DVector::zeros(n), &select_rows(&s.a, &rows), &select_entries(&s.b, &rows)).0;
    }
    None
}

/// Derivative of the Huber loss `min_w (r - w)² + lambda |w|`.
fn huber_slope(r: f64, lambda: f64) -> f64 {
    (2.0 * r).clamp(-lambda, lambda)
}

/// Identity-block design: eliminating `w` leaves the Huber regression
/// `min sum_i huber(y_i - psi_i x)  s.t.  A x <= b`, a convex piecewise
/// quadratic in the free coefficients. It is solved by a feasible
/// active-set method whose steps minimize the local quadratic model and
/// are followed by an exact line search.
fn huber(s: &Scaled, psi: &DMatrix<f64>, lambda: f64, guess: &Guess, max_rounds: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = s.n_free;
    let half = lambda / 2.0;
    let mut active = guess.active.clone();
    let mut x = feasible_start(s, &guess.x_f, &mut active)?;
    let max_steps = max_rounds * (n + s.n_cons() + 1);

    for _ in 0..max_steps {
        let r = &s.y - psi * &x;
        let slope = r.map(|v| huber_slope(v, lambda));
        let g = -psi.tr_mul(&slope);
        let psi_abs = psi.abs();
        let g_scale = psi_abs.tr_mul(&slope.abs()).amax().max(f64::MIN_POSITIVE);
        // Rounding in `y - Psi x` bounds how small the gradient can get.
        let floor = psi_abs.tr_mul(&(s.y.abs() + &psi_abs * x.abs())).amax() * 1e-13;

        let rows: Vec<usize> = (0..s.n_cons()).filter(|&i| active[i]).collect();
        let a_w = select_rows(&s.a, &rows);
        let z = null_space(&a_w, n);
        let gz = z.tr_mul(&g);

        if gz.amax() <= 1e-11 * g_scale + floor {
            let mu = lstsq(&a_w.transpose(), &(-&g));
            let worst = (0..rows.len()).min_by(|&i, &j| mu[i].total_cmp(&mu[j]));
            match worst {
                Some(k) if mu[k] < -1e-10 * g_scale => {
                    active[rows[k]] = false;
                    continue;
                }
                _ => {
                    let w = r.map(|v| soft(v, half));
                    return Some((x, w));
                }
            }
        }

        let mut hess = DMatrix::zeros(n, n);
        for (i, &ri) in r.iter().enumerate() {
            if ri.abs() <= half {
                let row = psi.row(i);
                hess += row.transpose() * row * 2.0;
            }
        }
        let mut hz = z.tr_mul(&(&hess * &z));
        let ridge = 1e-12 * (1.0 + hz.diagonal().amax());
        for i in 0..hz.nrows() {
            hz[(i, i)] += ridge;
        }
        let dz = hz.cholesky()?.solve(&(-&gz));
        let d = &z * dz;
        let gd = psi * &d;
        let ad = &s.a * &d;

        let slack = &s.b - &s.a * &x;
        let mut t_max = f64::INFINITY;
        let mut blocking = None;
        for i in (0..s.n_cons()).filter(|&i| !active[i]) {
            if ad[i] > 0.0 {
                let t = slack[i].max(0.0) / ad[i];
                if t < t_max {
                    t_max = t;
                    blocking = Some(i);
                }
            }
        }

        let dphi = |t: f64| -> f64 { -(0..r.len()).map(|i| gd[i] * huber_slope(r[i] - t * gd[i], lambda)).sum::<f64>() };
        let t = if dphi(t_max.min(f64::MAX)) <= 0.0 {
            if let Some(i) = blocking {
                active[i] = true;
            }
            t_max
        } else {
            let mut hi = 1.0_f64.min(t_max);
            let mut guard = 0;
            while dphi(hi) < 0.0 {
                hi = (hi * 2.0).min(t_max);
                guard += 1;
                if guard > 2000 {
                    return None;
                }
            }
            let mut lo = 0.0;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if dphi(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (dl, dh) = (dphi(lo), dphi(hi));
            if dh > dl {
                lo + (hi - lo) * (-dl / (dh - dl))
            } else {
                hi
            }
        };
        if !t.is_finite() {
            return None;
        }
        log::trace!(
            "huber step: {} quadratic rows, {} active, |Z'g| {:.3e} (scale {:.3e}), t {t:.3e}, |d| {:.3e}",
            r.iter().filter(|v| v.abs() <= half).count(),
            rows.len(),
            gz.amax(),
            g_scale,
            d.amax()
        );
        x += d * t;
    }
    log::debug!("huber polish did not settle in {max_steps} steps");
    None
}

fn dense(s: &Scaled, phi: &DMatrix<f64>, lambda: f64, guess: &Guess, max_rounds: usize) -> Option<(DVector<f64>, DVector<f64>)> {
    let (nf, np) = (s.n_free, s.n_pen);
    let weights = s.pen_weights(lambda);
    let mut sign: Vec<i8> = guess.w.iter().map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 }).collect();
    let mut active = guess.active.clone();
    for _ in 0..max_rounds {
        let cols: Vec<usize> = (0..nf).chain((0..np).filter(|&i| sign[i] != 0).map(|i| nf + i)).collect();
        let m = DMatrix::from_fn(phi.nrows(), cols.len(), |r, c| phi[(r, cols[c])]);
        let mut c = DVector::zeros(cols.len());
        for (k, &j) in cols.iter().enumerate().skip(nf) {
            c[k] = weights[j - nf] * sign[j - nf] as f64;
        }
        let act: Vec<usize> = (0..s.n_cons()).filter(|&i| active[i]).collect();
        let mut aeq = DMatrix::zeros(act.len(), cols.len());
        aeq.columns_mut(0, nf).copy_from(&select_rows(&s.a, &act));
        let (u, mu) = eq_qp(&m, &s.y, &c, &aeq, &select_entries(&s.b, &act));

        let x_f = u.rows(0, nf).into_owned();
        let mut w = DVector::zeros(np);
        for (k, &j) in cols.iter().enumerate().skip(nf) {
            w[j - nf] = u[k];
        }
        let mut changed = false;
        for i in 0..np {
            if sign[i] != 0 && w[i] * sign[i] as f64 <= 0.0 {
                sign[i] = 0;
                w[i] = 0.0;
                changed = true;
            }
        }
        let g = phi.tr_mul(&(s.phi(&x_f, &w) - &s.y)) * 2.0;
        for i in 0..np {
            if sign[i] == 0 && g[nf + i].abs() > weights[i] * (1.0 + 1e-10) + 1e-14 {
                sign[i] = if g[nf + i] > 0.0 { -1 } else { 1 };
                changed = true;
            }
        }
        changed |= update_active(s, &x_f, &act, &mu, &mut active);
        if !changed {
            return Some((x_f, w));
        }
    }
    None
}
