//! Semidefinite relaxation baseline for the phase sub-problems.
//!
//! With `w_bar = [w; 1]` the effective gain of user `k` is the quadratic form
//! `w_bar^H B_k w_bar + |v_k|^2` where
//!
//! ```text
//! B_k = [ z z^H   z v_k ]      z = conj(h_k ⊙ g)
//!       [ z^H v_k*   0  ]
//! ```
//!
//! Lifting `X = w_bar w_bar^H` and dropping the rank constraint gives an SDP
//! in `X` with unit diagonal. The dominant eigenvector of its solution,
//! phase-fixed so that the last entry is real and positive, is projected back
//! onto unit modulus.

pub mod eig;
pub mod sdp;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ccm::PhasePoint;
use crate::scenario::ChannelRealization;
use crate::{sinr_target, Error, Result, C64};

pub use eig::hermitian_eigen;
pub use sdp::{ConstraintMatrix, SdpProblem, SdpRow, SdpSolution, SdpStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpParams {
    /// Relative primal, dual and gap tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SdpParams {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iters: 100,
        }
    }
}

/// `B_k` together with the constant `|v_k|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedGainMatrix {
    pub b: DMatrix<C64>,
    pub direct_gain: f64,
}

impl LiftedGainMatrix {
    /// `w_bar^H B w_bar + |v|^2` for a unit-modulus `w`.
    pub fn gain(&self, w: &PhasePoint) -> f64 {
        let x = lift(w);
        self.gain_lifted(&x)
    }

    /// `Re tr(B X) + |v|^2`.
    pub fn gain_lifted(&self, x: &DMatrix<C64>) -> f64 {
        (&self.b * x).trace().re + self.direct_gain
    }

    fn scaled(&self, s: f64) -> Self {
        Self {
            b: &self.b * C64::new(s, 0.0),
            direct_gain: self.direct_gain * s,
        }
    }
}

/// `w_bar w_bar^H` with `w_bar = [w; 1]`.
pub fn lift(w: &PhasePoint) -> DMatrix<C64> {
    let l = w.len();
    let wb: Vec<C64> = w.as_slice().iter().copied().chain([C64::new(1.0, 0.0)]).collect();
    DMatrix::from_fn(l + 1, l + 1, |i, j| wb[i] * wb[j].conj())
}

pub fn build_lifted(ch: &ChannelRealization, k: usize) -> LiftedGainMatrix {
    let z: Vec<C64> = ch.cascade(k).iter().map(|d| d.conj()).collect();
    let l = z.len();
    let v = ch.v[k];
    let b = DMatrix::from_fn(l + 1, l + 1, |i, j| match (i < l, j < l) {
        (true, true) => z[i] * z[j].conj(),
        (true, false) => z[i] * v,
        (false, true) => z[j].conj() * v.conj(),
        (false, false) => C64::new(0.0, 0.0),
    });
    LiftedGainMatrix {
        b,
        direct_gain: v.norm_sqr(),
    }
}

pub fn build_all_lifted(ch: &ChannelRealization) -> Vec<LiftedGainMatrix> {
    (0..ch.users()).map(|k| build_lifted(ch, k)).collect()
}

/// Solution of a relaxed phase problem.
#[derive(Debug, Clone)]
pub struct LiftedSolution {
    pub x: DMatrix<C64>,
    /// Objective in the caller's units (see the solver functions).
    pub objective: f64,
    pub status: SdpStatus,
    pub iterations: usize,
}

fn check_inputs(b: &[LiftedGainMatrix], p: &[f64], rate_min: &[f64], sigma2: f64) -> Result<usize> {
    if b.is_empty() || p.len() != b.len() || rate_min.len() != b.len() {
        return Err(Error::Domain(
            "lifted matrices, powers and rates differ in length".into(),
        ));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    let n = b[0].b.nrows();
    if b.iter().any(|m| m.b.nrows() != n || m.b.ncols() != n) {
        return Err(Error::Domain("lifted matrices differ in size".into()));
    }
    Ok(n)
}

/// Rate-constraint rows `<A_k, X> - extra = b_k` in noise-normalized units.
fn constraint_rows(
    b: &[LiftedGainMatrix],
    p: &[f64],
    rate_min: &[f64],
    extra: impl Fn(usize) -> Vec<f64>,
) -> Vec<SdpRow> {
    let kk = b.len();
    let n = b[0].b.nrows();
    let mut rows = Vec::with_capacity(kk + n);
    for k in 0..kk {
        let s = sinr_target(rate_min[k]);
        let mut a = &b[k].b * C64::new(p[k], 0.0);
        let mut rhs = -p[k] * b[k].direct_gain + s;
        for j in k + 1..kk {
            a -= &b[j].b * C64::new(s * p[j], 0.0);
            rhs += s * p[j] * b[j].direct_gain;
        }
        rows.push(SdpRow {
            matrix: ConstraintMatrix::Dense(a),
            linear: extra(k),
            rhs,
        });
    }
    for i in 0..n {
        rows.push(SdpRow {
            matrix: ConstraintMatrix::Diag(i),
            linear: extra(usize::MAX).iter().map(|_| 0.0).collect(),
            rhs: 1.0,
        });
    }
    rows
}

/// Relaxed max-min constraint slack for fixed powers `p` (W, SIC order).
///
/// Maximizes `alpha >= 0` subject to
/// `p_k g_k(X) - (2^{R_k} - 1)(sum_{j>k} p_j g_j(X) + sigma2) >= alpha sigma2`,
/// unit diagonal and `X` psd, where `g_k(X) = Re tr(B_k X) + |v_k|^2`.
/// The reported objective is `alpha` (noise-normalized).
pub fn solve_sdp_powermin(
    b: &[LiftedGainMatrix],
    p: &[f64],
    rate_min: &[f64],
    sigma2: f64,
    params: &SdpParams,
) -> Result<LiftedSolution> {
    let n = check_inputs(b, p, rate_min, sigma2)?;
    let kk = b.len();
    let bn: Vec<_> = b.iter().map(|m| m.scaled(1.0 / sigma2)).collect();
    // scalars: [alpha, t_1 .. t_K]
    let rows = constraint_rows(&bn, p, rate_min, |k| {
        let mut v = vec![0.0; kk + 1];
        if k < kk {
            v[0] = -1.0;
            v[k + 1] = -1.0;
        }
        v
    });
    let mut linear_cost = vec![0.0; kk + 1];
    linear_cost[0] = -1.0;
    let problem = SdpProblem {
        dim: n,
        cost: DMatrix::zeros(n, n),
        linear_cost,
        rows,
    };
    let sol = sdp::solve(&problem, params.tol, params.max_iters)?;
    Ok(LiftedSolution {
        objective: sol.linear[0],
        x: sol.x,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Relaxed weighted received power `sum_k p_k g_k(X)` (W) under the rate
/// constraints, unit diagonal and `X` psd.
pub fn solve_sdp_ee(
    b: &[LiftedGainMatrix],
    p: &[f64],
    rate_min: &[f64],
    sigma2: f64,
    params: &SdpParams,
) -> Result<LiftedSolution> {
    let n = check_inputs(b, p, rate_min, sigma2)?;
    let kk = b.len();
    let bn: Vec<_> = b.iter().map(|m| m.scaled(1.0 / sigma2)).collect();
    let rows = constraint_rows(&bn, p, rate_min, |k| {
        let mut v = vec![0.0; kk];
        if k < kk {
            v[k] = -1.0;
        }
        v
    });
    let mut cost = DMatrix::zeros(n, n);
    for k in 0..kk {
        cost -= &bn[k].b * C64::new(p[k], 0.0);
    }
    let constant: f64 = (0..kk).map(|k| p[k] * bn[k].direct_gain).sum();
    let problem = SdpProblem {
        dim: n,
        cost,
        linear_cost: vec![0.0; kk],
        rows,
    };
    let sol = sdp::solve(&problem, params.tol, params.max_iters)?;
    Ok(LiftedSolution {
        objective: (constant - sol.primal_objective) * sigma2,
        x: sol.x,
        status: sol.status,
        iterations: sol.iterations,
    })
}

/// Unit-modulus phases from the dominant eigenvector of a lifted solution.
///
/// The eigenvector is rotated so that its last entry is real and positive
/// (falling back to the largest-magnitude entry when the last one vanishes),
/// the last entry is dropped and every remaining entry is normalized.
pub fn extract_rank_one(x: &DMatrix<C64>) -> Result<PhasePoint> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Domain("lifted matrix must be at least 2x2".into()));
    }
    let (vals, vecs) = hermitian_eigen(x)?;
    let lambda = vals[n - 1].max(0.0);
    let q: Vec<C64> = (0..n).map(|i| vecs[(i, n - 1)] * lambda.sqrt()).collect();
    let scale = q.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let anchor = if q[n - 1].norm() > 1e-9 * scale {
        q[n - 1]
    } else {
        q.iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(C64::new(1.0, 0.0))
    };
    let rot = if anchor.norm() > 0.0 {
        anchor.conj() / anchor.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let w: Vec<C64> = q[..n - 1].iter().map(|z| z * rot).collect();
    Ok(PhasePoint::normalized(&w))
}

/// One SDR phase update for the power-minimization loop.
pub fn sdr_powermin_step(
    ch: &ChannelRealization,
    p: &[f64],
    rate_min: &[f64],
    sigma2: f64,
    params: &SdpParams,
) -> Result<PhasePoint> {
    let b = build_all_lifted(ch);
    let sol = solve_sdp_powermin(&b, p, rate_min, sigma2, params)?;
    if sol.objective < -params.tol {
        return Err(Error::Infeasible(format!(
            "relaxed slack is negative ({})",
            sol.objective
        )));
    }
    extract_rank_one(&sol.x)
}

/// One SDR phase update for the energy-efficiency loop.
pub fn sdr_ee_step(
    ch: &ChannelRealization,
    p: &[f64],
    rate_min: &[f64],
    sigma2: f64,
    params: &SdpParams,
) -> Result<PhasePoint> {
    let b = build_all_lifted(ch);
    let sol = solve_sdp_ee(&b, p, rate_min, sigma2, params)?;
    extract_rank_one(&sol.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{sample_channels, ScenarioConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_channel(l: usize, seed: u64) -> ChannelRealization {
        let cfg = ScenarioConfig {
            reflectors: l,
            seed,
            ..ScenarioConfig::default()
        };
        sample_channels(&cfg, 0).unwrap()
    }

    #[test]
    fn lifted_gain_matches_effective_gain() {
        let ch = small_channel(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let w = PhasePoint::random(&mut rng, 6);
            for k in 0..ch.users() {
                let lifted = build_lifted(&ch, k);
                let want = ch.effective_gain(&w, k);
                assert!((lifted.gain(&w) - want).abs() <= 1e-10 * want);
            }
        }
    }

    #[test]
    fn zero_direct_link_clears_border() {
        let mut ch = small_channel(4, 1);
        ch.v[0] = C64::new(0.0, 0.0);
        let b = build_lifted(&ch, 0);
        for i in 0..5 {
            assert_eq!(b.b[(i, 4)], C64::new(0.0, 0.0));
            assert_eq!(b.b[(4, i)], C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn rank_one_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = PhasePoint::random(&mut rng, 12);
        let got = extract_rank_one(&lift(&w)).unwrap();
        assert!(got.distance(&w) < 1e-10);
    }

    #[test]
    fn identity_extracts_some_point() {
        let x = DMatrix::<C64>::identity(5, 5);
        let w = extract_rank_one(&x).unwrap();
        assert_eq!(w.len(), 4);
        assert!(w.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn powermin_sdp_is_psd_with_unit_diagonal() {
        let ch = small_channel(4, 2);
        let cfg = ScenarioConfig::default();
        let w = PhasePoint::ones(4);
        let rates = ch.in_sic_order(&cfg.rate_min);
        let p = crate::noma_power::solve_power_lp(&ch.effective_gains(&w), &rates, cfg.noise_power)
            .unwrap()
            .p;
        let sol = solve_sdp_powermin(
            &build_all_lifted(&ch),
            &p,
            &rates,
            cfg.noise_power,
            &SdpParams::default(),
        )
        .unwrap();
        assert!(sol.objective >= 0.0);
        for i in 0..5 {
            assert!((sol.x[(i, i)].re - 1.0).abs() < 1e-6);
        }
        let (vals, _) = hermitian_eigen(&sol.x).unwrap();
        assert!(vals[0] >= -1e-6 * sol.x.norm());
    }
}
