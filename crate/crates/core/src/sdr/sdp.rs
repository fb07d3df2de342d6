//! Small dense SDP solver with nonnegative scalar variables.
//!
//! Solves
//!
//! ```text
//! min  <C, X> + c^T x
//! s.t. <A_i, X> + a_i^T x = b_i,   X Hermitian psd,   x >= 0
//! ```
//!
//! by an infeasible primal-dual path-following method (HKM direction,
//! Mehrotra predictor-corrector). `<A, X> = Re tr(A X)`. Unit-diagonal rows
//! are stored implicitly so that the Schur complement stays cheap.

use nalgebra::{Cholesky, DMatrix};

use crate::{Error, Result, C64};

/// Matrix part of one equality constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintMatrix {
    /// `e_i e_i^T`, i.e. the constraint reads on `X[i, i]`.
    Diag(usize),
    /// Any Hermitian matrix.
    Dense(DMatrix<C64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpRow {
    pub matrix: ConstraintMatrix,
    /// Coefficients of the scalar variables.
    pub linear: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub dim: usize,
    pub cost: DMatrix<C64>,
    pub linear_cost: Vec<f64>,
    pub rows: Vec<SdpRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    /// Iteration budget exhausted with residuals within `100 * tol`.
    Inaccurate,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<C64>,
    pub linear: Vec<f64>,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub status: SdpStatus,
    /// Scaled primal residual, dual residual and relative gap at exit.
    pub residuals: [f64; 3],
}

const STEP_FRACTION: f64 = 0.95;

struct Scaled {
    n: usize,
    nl: usize,
    cost: DMatrix<C64>,
    lcost: Vec<f64>,
    mats: Vec<ConstraintMatrix>,
    lin: Vec<Vec<f64>>,
    b: Vec<f64>,
    cost_scale: f64,
    row_scale: Vec<f64>,
}

fn herm_inner(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    // Re tr(A B) = sum_ij Re(A_ij B_ji)
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = a[(i, j)];
            let y = b[(j, i)];
            s += x.re * y.re - x.im * y.im;
        }
    }
    s
}

fn row_inner(m: &ConstraintMatrix, b: &DMatrix<C64>) -> f64 {
    match m {
        ConstraintMatrix::Diag(i) => b[(*i, *i)].re,
        ConstraintMatrix::Dense(a) => herm_inner(a, b),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hermitize(m: &mut DMatrix<C64>) {
    let h = (&*m + m.adjoint()) * C64::new(0.5, 0.0);
    *m = h;
}

fn add_scaled(target: &mut DMatrix<C64>, m: &ConstraintMatrix, s: f64) {
    match m {
        ConstraintMatrix::Diag(i) => target[(*i, *i)] += C64::new(s, 0.0),
        ConstraintMatrix::Dense(a) => *target += a * C64::new(s, 0.0),
    }
}

fn scale_problem(p: &SdpProblem) -> Result<Scaled> {
    let n = p.dim;
    let nl = p.linear_cost.len();
    if n == 0 || p.cost.nrows() != n || p.cost.ncols() != n {
        return Err(Error::Domain("SDP cost matrix has the wrong shape".into()));
    }
    let mut mats = Vec::with_capacity(p.rows.len());
    let mut lin = Vec::with_capacity(p.rows.len());
    let mut b = Vec::with_capacity(p.rows.len());
    let mut row_scale = Vec::with_capacity(p.rows.len());
    for row in &p.rows {
        if row.linear.len() != nl {
            return Err(Error::Domain(
                "SDP row has the wrong number of scalar coefficients".into(),
            ));
        }
        let mnorm2 = match &row.matrix {
            ConstraintMatrix::Diag(i) if *i < n => 1.0,
            ConstraintMatrix::Dense(a) if a.nrows() == n && a.ncols() == n => a.norm_squared(),
            _ => return Err(Error::Domain("SDP constraint matrix has the wrong shape".into())),
        };
        let norm = (mnorm2 + dot(&row.linear, &row.linear)).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Domain("SDP constraint row is identically zero".into()));
        }
        let s = 1.0 / norm;
        mats.push(match &row.matrix {
            ConstraintMatrix::Diag(i) if s == 1.0 => ConstraintMatrix::Diag(*i),
            ConstraintMatrix::Diag(i) => {
                let mut a = DMatrix::zeros(n, n);
                a[(*i, *i)] = C64::new(s, 0.0);
                ConstraintMatrix::Dense(a)
            }
            ConstraintMatrix::Dense(a) => {
                let mut a = a * C64::new(s, 0.0);
                hermitize(&mut a);
                ConstraintMatrix::Dense(a)
            }
        });
        lin.push(row.linear.iter().map(|x| x * s).collect());
        b.push(row.rhs * s);
        row_scale.push(s);
    }
    let cnorm = (p.cost.norm_squared() + dot(&p.linear_cost, &p.linear_cost)).sqrt();
    let cost_scale = if cnorm > 0.0 { cnorm } else { 1.0 };
    let mut cost = &p.cost * C64::new(1.0 / cost_scale, 0.0);
    hermitize(&mut cost);
    Ok(Scaled {
        n,
        nl,
        cost,
        lcost: p.linear_cost.iter().map(|x| x / cost_scale).collect(),
        mats,
        lin,
        b,
        cost_scale,
        row_scale,
    })
}

/// Cholesky test with real pivots. nalgebra's complex Cholesky takes complex
/// square roots and so never rejects an indefinite matrix.
fn is_pd(m: &DMatrix<C64>) -> bool {
    let n = m.nrows();
    let mut l = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

/// Largest `alpha <= cap` keeping `m + alpha * dm` positive definite.
fn max_step_psd(m: &DMatrix<C64>, dm: &DMatrix<C64>, cap: f64) -> f64 {
    if is_pd(&(m + dm * C64::new(cap, 0.0))) {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if is_pd(&(m + dm * C64::new(mid, 0.0))) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn max_step_lin(x: &[f64], dx: &[f64], cap: f64) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(cap, f64::min)
}

struct Direction {
    dx: DMatrix<C64>,
    dxl: Vec<f64>,
    dy: Vec<f64>,
    dz: DMatrix<C64>,
    dzl: Vec<f64>,
}

pub fn solve(problem: &SdpProblem, tol: f64, max_iters: usize) -> Result<SdpSolution> {
    let s = scale_problem(problem)?;
    let n = s.n;
    let nl = s.nl;
    let m = s.mats.len();

    let mut x = DMatrix::<C64>::identity(n, n);
    let mut xl = vec![1.0; nl];
    let mut y = vec![0.0; m];
    let mut z = DMatrix::<C64>::identity(n, n);
    let mut zl = vec![1.0; nl];

    let bnorm = dot(&s.b, &s.b).sqrt();
    let cnorm = (s.cost.norm_squared() + dot(&s.lcost, &s.lcost)).sqrt();
    let nu = (n + nl) as f64;

    for it in 0..=max_iters {
        // residuals
        let rp: Vec<f64> = (0..m)
            .map(|i| s.b[i] - row_inner(&s.mats[i], &x) - dot(&s.lin[i], &xl))
            .collect();
        let mut rd = &s.cost - &z;
        let mut rdl: Vec<f64> = (0..nl).map(|j| s.lcost[j] - zl[j]).collect();
        for i in 0..m {
            add_scaled(&mut rd, &s.mats[i], -y[i]);
            for j in 0..nl {
                rdl[j] -= y[i] * s.lin[i][j];
            }
        }
        hermitize(&mut rd);
        let mu = (herm_inner(&x, &z) + dot(&xl, &zl)) / nu;
        let pobj = herm_inner(&s.cost, &x) + dot(&s.lcost, &xl);
        let dobj = dot(&s.b, &y);
        let residuals = [
            dot(&rp, &rp).sqrt() / (1.0 + bnorm),
            (rd.norm_squared() + dot(&rdl, &rdl)).sqrt() / (1.0 + cnorm),
            (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        ];
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("SDP residuals".into()));
        }
        let done = residuals.iter().all(|r| *r <= tol);
        if done || it == max_iters {
            let status = if done {
                SdpStatus::Optimal
            } else if residuals.iter().all(|r| *r <= 100.0 * tol) {
                SdpStatus::Inaccurate
            } else {
                return Err(Error::Solver(format!(
                    "SDP did not converge in {max_iters} iterations (residuals {residuals:?})"
                )));
            };
            return Ok(SdpSolution {
                x,
                linear: xl,
                y: y.iter().zip(&s.row_scale).map(|(v, r)| v * r * s.cost_scale).collect(),
                primal_objective: pobj * s.cost_scale,
                dual_objective: dobj * s.cost_scale,
                iterations: it,
                status,
                residuals,
            });
        }

        if !is_pd(&z) {
            return Err(Error::Solver("dual iterate lost positive definiteness".into()));
        }
        let zinv = Cholesky::new(z.clone())
            .ok_or_else(|| Error::Solver("dual iterate lost positive definiteness".into()))?
            .inverse();
        // G_j = X A_j Z^-1 for dense rows
        let g: Vec<Option<DMatrix<C64>>> = s
            .mats
            .iter()
            .map(|a| match a {
                ConstraintMatrix::Dense(a) => Some(&x * a * &zinv),
                ConstraintMatrix::Diag(_) => None,
            })
            .collect();
        let ratio: Vec<f64> = (0..nl).map(|j| xl[j] / zl[j]).collect();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                let sdp_part = match (&s.mats[i], &s.mats[j], &g[j]) {
                    (ConstraintMatrix::Diag(a), ConstraintMatrix::Diag(b), _) => (x[(*a, *b)] * zinv[(*b, *a)]).re,
                    (ConstraintMatrix::Diag(a), _, Some(gj)) => gj[(*a, *a)].re,
                    (ConstraintMatrix::Dense(_), ConstraintMatrix::Diag(b), _) => {
                        // Re (Z^-1 A_i X)[b, b] = Re (X A_i Z^-1)[b, b]
                        g[i].as_ref().map_or(0.0, |gi| gi[(*b, *b)].re)
                    }
                    (ConstraintMatrix::Dense(ai), _, Some(gj)) => herm_inner(ai, gj),
                    _ => unreachable!(),
                };
                let lin_part: f64 = (0..nl).map(|k| s.lin[i][k] * s.lin[j][k] * ratio[k]).sum();
                schur[(i, j)] = sdp_part + lin_part;
            }
        }
        let schur = (&schur + schur.transpose()) * 0.5;
        let chol = match Cholesky::new(schur.clone()) {
            Some(c) => c,
            None => {
                let shift = 1e-12 * schur.diagonal().max().max(1e-300);
                Cholesky::new(schur + DMatrix::<f64>::identity(m, m) * shift)
                    .ok_or_else(|| Error::Solver("Schur complement is singular".into()))?
            }
        };
        let x_rd_zinv = &x * &rd * &zinv;

        let solve_dir = |sigma_mu: f64, corr: Option<(&DMatrix<C64>, &[f64])>| -> Direction {
            // H = sigma mu Z^-1 - X - corr Z^-1
            let mut h = &zinv * C64::new(sigma_mu, 0.0) - &x;
            let mut hl: Vec<f64> = (0..nl).map(|j| sigma_mu / zl[j] - xl[j]).collect();
            if let Some((cm, cl)) = corr {
                h -= cm * &zinv;
                for j in 0..nl {
                    hl[j] -= cl[j] / zl[j];
                }
            }
            let t = &h - &x_rd_zinv;
            let tl: Vec<f64> = (0..nl).map(|j| hl[j] - ratio[j] * rdl[j]).collect();
            let rhs: Vec<f64> = (0..m)
                .map(|i| rp[i] - row_inner(&s.mats[i], &t) - dot(&s.lin[i], &tl))
                .collect();
            let dy = chol.solve(&nalgebra::DVector::from_vec(rhs));
            let dy: Vec<f64> = dy.iter().copied().collect();
            let mut dz = rd.clone();
            let mut dzl = rdl.clone();
            for i in 0..m {
                add_scaled(&mut dz, &s.mats[i], -dy[i]);
                for j in 0..nl {
                    dzl[j] -= dy[i] * s.lin[i][j];
                }
            }
            hermitize(&mut dz);
            let mut dx = &h - &x * &dz * &zinv;
            hermitize(&mut dx);
            let dxl = (0..nl).map(|j| hl[j] - ratio[j] * dzl[j]).collect();
            Direction { dx, dxl, dy, dz, dzl }
        };

        // predictor
        let aff = solve_dir(0.0, None);
        let ap = max_step_psd(&x, &aff.dx, 1.0).min(max_step_lin(&xl, &aff.dxl, 1.0));
        let ad = max_step_psd(&z, &aff.dz, 1.0).min(max_step_lin(&zl, &aff.dzl, 1.0));
        let x_aff = &x + &aff.dx * C64::new(ap, 0.0);
        let z_aff = &z + &aff.dz * C64::new(ad, 0.0);
        let lin_aff: f64 = (0..nl)
            .map(|j| (xl[j] + ap * aff.dxl[j]) * (zl[j] + ad * aff.dzl[j]))
            .sum();
        let mu_aff = (herm_inner(&x_aff, &z_aff) + lin_aff) / nu;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let corr = &aff.dx * &aff.dz;
        let corr_l: Vec<f64> = (0..nl).map(|j| aff.dxl[j] * aff.dzl[j]).collect();
        let d = solve_dir(sigma * mu, Some((&corr, &corr_l)));
        let cap = 1.0 / STEP_FRACTION;
        let ap = (STEP_FRACTION * max_step_psd(&x, &d.dx, cap).min(max_step_lin(&xl, &d.dxl, cap))).min(1.0);
        let ad = (STEP_FRACTION * max_step_psd(&z, &d.dz, cap).min(max_step_lin(&zl, &d.dzl, cap))).min(1.0);

        x += &d.dx * C64::new(ap, 0.0);
        hermitize(&mut x);
        z += &d.dz * C64::new(ad, 0.0);
        hermitize(&mut z);
        for j in 0..nl {
            xl[j] += ap * d.dxl[j];
            zl[j] += ad * d.dzl[j];
        }
        for i in 0..m {
            y[i] += ad * d.dy[i];
        }
    }
    unreachable!("loop returns on its last iteration")
}
