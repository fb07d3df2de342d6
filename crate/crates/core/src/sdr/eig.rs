//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and unitary eigenvectors (columns) of a
/// Hermitian matrix. Only the upper triangle's Hermitian part is trusted:
/// the input is symmetrized first.
pub fn hermitian_eigen(a: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Domain("eigendecomposition needs a square matrix".into()));
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    let mut m = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut v = DMatrix::<C64>::identity(n, n);
    let scale = m.norm();
    if n > 1 && scale > 0.0 {
        let target = f64::EPSILON * scale;
        let mut converged = false;
        for _ in 0..MAX_SWEEPS {
            if off_diagonal_norm(&m) <= target {
                converged = true;
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    rotate(&mut m, &mut v, p, q);
                }
            }
        }
        if !converged && off_diagonal_norm(&m) > 1e3 * target {
            return Err(Error::Solver("Jacobi sweeps did not converge".into()));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok((values, vectors))
}

fn off_diagonal_norm(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut s = 0.0;
    for c in 0..n {
        for r in 0..n {
            if r != c {
                s += m[(r, c)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Zeroes `m[p, q]` with `U = diag(1, e^{-i phi}) * R(c, s)` on rows/columns p, q.
fn rotate(m: &mut DMatrix<C64>, v: &mut DMatrix<C64>, p: usize, q: usize) {
    let apq = m[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    if r <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[(p, q)] = C64::new(0.0, 0.0);
        m[(q, p)] = C64::new(0.0, 0.0);
        return;
    }
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.nrows();
    let e = phase.conj();

    // columns: A <- A U
    for i in 0..n {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = x * c - y * e * s;
        m[(i, q)] = x * s + y * e * c;
    }
    // rows: A <- U^H A
    for j in 0..n {
        let x = m[(p, j)];
        let y = m[(q, j)];
        m[(p, j)] = x * c - y * phase * s;
        m[(q, j)] = x * s + y * phase * c;
    }
    m[(p, p)] = C64::new(app - t * r, 0.0);
    m[(q, q)] = C64::new(aqq + t * r, 0.0);
    m[(p, q)] = C64::new(0.0, 0.0);
    m[(q, p)] = C64::new(0.0, 0.0);

    for i in 0..n {
        let x = v[(i, p)];
        let y = v[(i, q)];
        v[(i, p)] = x * c - y * e * s;
        v[(i, q)] = x * s + y * e * c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<C64> {
        let g = DMatrix::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&g + g.adjoint()) * C64::new(0.5, 0.0)
    }

    fn reconstruction_error(a: &DMatrix<C64>, vals: &[f64], q: &DMatrix<C64>) -> f64 {
        let d = DMatrix::from_fn(vals.len(), vals.len(), |i, j| {
            if i == j {
                C64::new(vals[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        (a - q * d * q.adjoint()).norm()
    }

    #[test]
    fn reconstructs_random_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 7, 17, 33, 65] {
            let a = random_hermitian(&mut rng, n);
            let (vals, q) = hermitian_eigen(&a).unwrap();
            assert!(reconstruction_error(&a, &vals, &q) <= 1e-10 * a.norm(), "n = {n}");
            let eye = DMatrix::<C64>::identity(n, n);
            assert!((q.adjoint() * &q - eye).norm() < 1e-12 * n as f64);
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, -1.0),
                C64::new(2.0, 0.0),
            ],
        );
        let (vals, _) = hermitian_eigen(&a).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-15 && (vals[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rank_one_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<C64> = (0..9)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let col = DMatrix::from_column_slice(9, 1, &x);
        let a = &col * col.adjoint();
        let (vals, q) = hermitian_eigen(&a).unwrap();
        let nrm2: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        assert!((vals[8] - nrm2).abs() < 1e-12 * nrm2);
        assert!(vals[..8].iter().all(|v| v.abs() < 1e-12 * nrm2));
        // dominant eigenvector is parallel to x
        let overlap: C64 = (0..9).map(|i| q[(i, 8)].conj() * x[i]).sum();
        assert!((overlap.norm() - nrm2.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_and_diagonal_inputs() {
        let z = DMatrix::<C64>::zeros(4, 4);
        let (vals, q) = hermitian_eigen(&z).unwrap();
        assert!(vals.iter().all(|v| *v == 0.0));
        assert_eq!(q, DMatrix::identity(4, 4));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::new(3.0, 0.0),
            C64::new(-1.0, 0.0),
            C64::new(2.0, 0.0),
        ]));
        let (vals, _) = hermitian_eigen(&d).unwrap();
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
    }
}
