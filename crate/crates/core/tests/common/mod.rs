//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the crate's solvers: each routine is a plain,
//! slow, generic method used to cross-check a specialized one.

#![allow(dead_code)]

use rand::Rng;

/// Dense two-phase simplex (Bland's rule) for
/// `min c^T x  s.t.  A x >= b, x >= 0` with `b >= 0`.
///
/// Returns `None` if the problem is infeasible or unbounded.
pub fn simplex_min_ge(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let m = a.len();
    let n = c.len();
    // columns: x (n), surplus (m), artificial (m), rhs
    let cols = n + 2 * m + 1;
    let rhs = cols - 1;
    let mut t = vec![vec![0.0; cols]; m];
    for i in 0..m {
        assert!(b[i] >= 0.0, "right-hand side must be nonnegative");
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = -1.0;
        t[i][n + m + i] = 1.0;
        t[i][rhs] = b[i];
    }
    let mut basis: Vec<usize> = (n + m..n + 2 * m).collect();

    // phase 1: minimize the sum of artificials
    let mut cost1 = vec![0.0; cols - 1];
    for j in n + m..n + 2 * m {
        cost1[j] = 1.0;
    }
    run_simplex(&mut t, &mut basis, &cost1, cols - 1)?;
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= n + m)
        .map(|(i, _)| t[i][rhs])
        .sum();
    let scale = b.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    if infeas > 1e-9 * scale {
        return None;
    }
    // drive remaining (zero-level) artificials out of the basis
    for i in 0..m {
        if basis[i] >= n + m {
            if let Some(j) = (0..n + m).find(|&j| t[i][j].abs() > 1e-12) {
                pivot(&mut t, i, j);
                basis[i] = j;
            }
        }
    }

    // phase 2: original costs, artificials barred
    let mut cost2 = vec![0.0; cols - 1];
    cost2[..n].copy_from_slice(c);
    run_simplex(&mut t, &mut basis, &cost2, n + m)?;
    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][rhs];
        }
    }
    Some(x)
}

fn pivot(t: &mut [Vec<f64>], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
    }
}

/// Simplex iterations on tableau `t`; only columns `< allowed` may enter.
fn run_simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Option<()> {
    let rhs = t[0].len() - 1;
    for _ in 0..10_000 {
        // reduced costs
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let z: f64 = basis.iter().enumerate().map(|(i, &bj)| cost[bj] * t[i][j]).sum();
            cost[j] - z < -1e-12
        });
        let Some(col) = entering else {
            return Some(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][col] > 1e-12 {
                let ratio = t[i][rhs] / t[i][col];
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (row, _) = leave?;
        pivot(t, row, col);
        basis[row] = col;
    }
    None
}

/// Golden-section search for the maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol * (lo.abs() + hi.abs()).max(f64::MIN_POSITIVE) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi]
        .into_iter()
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap()
}

/// Polytope `{x : g_i . x >= h_i}` in a few dimensions.
pub struct Polytope {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl Polytope {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.normals
            .iter()
            .zip(&self.offsets)
            .all(|(g, h)| dot(g, x) >= h - tol)
    }

    /// Euclidean projection by enumerating active sets of size up to the
    /// dimension. Exact (up to rounding) for small problems.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        if self.contains(y, 0.0) {
            return y.to_vec();
        }
        let d = y.len();
        let m = self.normals.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut subset = Vec::new();
        self.enumerate(0, d.min(m), &mut subset, y, &mut best);
        best.map(|(_, x)| x).expect("polytope is empty")
    }

    fn enumerate(
        &self,
        start: usize,
        max: usize,
        subset: &mut Vec<usize>,
        y: &[f64],
        best: &mut Option<(f64, Vec<f64>)>,
    ) {
        if !subset.is_empty() {
            if let Some(x) = self.project_affine(subset, y) {
                if self.contains(&x, 1e-12) {
                    let dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    if best.as_ref().is_none_or(|(bd, _)| dist < *bd) {
                        *best = Some((dist, x));
                    }
                }
            }
        }
        if subset.len() == max {
            return;
        }
        for i in start..self.normals.len() {
            subset.push(i);
            self.enumerate(i + 1, max, subset, y, best);
            subset.pop();
        }
    }

    /// Projection onto `{x : g_i . x = h_i, i in set}`.
    fn project_affine(&self, set: &[usize], y: &[f64]) -> Option<Vec<f64>> {
        let s = set.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(s, s);
        let mut r = nalgebra::DVector::<f64>::zeros(s);
        for (a, &i) in set.iter().enumerate() {
            for (b, &j) in set.iter().enumerate() {
                gram[(a, b)] = dot(&self.normals[i], &self.normals[j]);
            }
            r[a] = self.offsets[i] - dot(&self.normals[i], y);
        }
        let lambda = gram.lu().solve(&r)?;
        if lambda.iter().any(|l| !l.is_finite()) {
            return None;
        }
        let mut x = y.to_vec();
        for (a, &i) in set.iter().enumerate() {
            for (xk, gk) in x.iter_mut().zip(&self.normals[i]) {
                *xk += lambda[a] * gk;
            }
        }
        Some(x)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected gradient ascent with Armijo backtracking along the projection
/// arc. Stops when the projected step no longer moves the iterate.
pub fn projected_gradient_max<F, G>(f: F, grad: G, set: &Polytope, x0: &[f64], max_iters: usize) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = set.project(x0);
    let mut fx = f(&x);
    let mut step = 1.0;
    for _ in 0..max_iters {
        let g = grad(&x);
        let mut moved = false;
        let mut t = step * 4.0;
        for _ in 0..80 {
            let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + t * b).collect();
            let xn = set.project(&y);
            let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let fxn = f(&xn);
            if fxn >= fx + 1e-4 * dot(&g, &dx) && fxn >= fx {
                let size = dot(&dx, &dx).sqrt();
                x = xn;
                let improved = fxn - fx;
                fx = fxn;
                step = t;
                moved = size > 1e-15 * (1.0 + dot(&x, &x).sqrt()) && improved > 0.0;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}
