//! Exact penalty with smoothing for the constrained phase sub-problems.
//!
//! For fixed powers `p` the rate constraints read
//!
//! ```text
//! C_k(w) = p_k a_k(w) - (2^{R_k} - 1) (sum_{j>k} p_j a_j(w) + 1) >= 0,
//! a_k(w) = |d_k^T w + v_k|^2,   d_k = h_k ⊙ g,
//! ```
//!
//! with channels divided by the noise amplitude so that the noise term is 1
//! and `C_k`, the smoothing accuracy `u` and the tolerance `tau` are all
//! scale free. Two penalized objectives are provided, both *maximized*:
//!
//! * max-min slack: `smooth_min(C) - rho * sum_k P(-C_k, u)`
//! * weighted power: `sum_k p_k a_k - rho * sum_k P(-C_k, u)`
//!
//! where `P` is the linear-quadratic smoothing of `max{0, x}`.
//! [`exact_penalty_outer`] drives either one with increasing `rho` and
//! decreasing `u`, handing `-Q` to [`ccm::minimize`](crate::ccm::minimize).

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::ccm::{self, CcmSolverParams, PhasePoint};
use crate::scenario::ChannelRealization;
use crate::trace::{PenaltyState, SolverTrace, TraceRecord};
use crate::{sinr_target, Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyParams {
    pub rho0: f64,
    pub theta_rho: f64,
    pub u0: f64,
    pub u_min: f64,
    pub theta_u: f64,
    /// Violation tolerance on `max_k -C_k`.
    pub tau: f64,
    /// Stop once consecutive outer iterates are closer than this.
    pub d_min: f64,
    /// Exponent of the power-mean smooth minimum.
    pub gamma: f64,
    /// Floor used to shift constraints before taking the smooth minimum.
    pub smoothing_shift: f64,
    pub max_outer: usize,
    pub inner: CcmSolverParams,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            theta_rho: 10.0,
            u0: 1e-2,
            u_min: 1e-8,
            theta_u: 0.5,
            tau: 1e-9,
            d_min: 1e-6,
            gamma: 64.0,
            smoothing_shift: 1e-6,
            max_outer: 40,
            inner: CcmSolverParams::default(),
        }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho0 > 0.0
            && self.theta_rho > 1.0
            && self.u0 > 0.0
            && self.u_min > 0.0
            && self.u_min <= self.u0
            && self.theta_u > 0.0
            && self.theta_u < 1.0
            && self.tau >= 0.0
            && self.d_min > 0.0
            && self.gamma > 0.0
            && self.smoothing_shift > 0.0
            && self.max_outer > 0;
        if !ok {
            return Err(Error::Config(format!("invalid penalty parameters: {self:?}")));
        }
        self.inner.validate()
    }
}

/// Noise-normalized data needed to evaluate `C_k(w)` and its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    cascade: Vec<Vec<C64>>,
    direct: Vec<C64>,
    power: Vec<f64>,
    sinr: Vec<f64>,
}

impl ConstraintSet {
    /// `power` and `rate_min` are in SIC order; `power` in watts.
    pub fn new(ch: &ChannelRealization, power: &[f64], rate_min: &[f64], noise_power: f64) -> Result<Self> {
        let k = ch.users();
        if power.len() != k || rate_min.len() != k {
            return Err(Error::Domain("power / rate vectors do not match user count".into()));
        }
        if !(noise_power > 0.0) {
            return Err(Error::Domain("noise power must be positive".into()));
        }
        let scale = 1.0 / noise_power.sqrt();
        let cascade = (0..k)
            .map(|i| ch.cascade(i).into_iter().map(|d| d * scale).collect())
            .collect();
        let direct = ch.v.iter().map(|v| v * scale).collect();
        Self::from_parts(
            cascade,
            direct,
            power.to_vec(),
            rate_min.iter().map(|&r| sinr_target(r)).collect(),
        )
    }

    /// Builds directly from normalized cascades `d_k`, direct links, powers
    /// and SINR targets `2^{R_k} - 1`.
    pub fn from_parts(cascade: Vec<Vec<C64>>, direct: Vec<C64>, power: Vec<f64>, sinr: Vec<f64>) -> Result<Self> {
        let k = cascade.len();
        if k == 0 || direct.len() != k || power.len() != k || sinr.len() != k {
            return Err(Error::Domain("inconsistent constraint data".into()));
        }
        let l = cascade[0].len();
        if l == 0 || cascade.iter().any(|d| d.len() != l) {
            return Err(Error::Domain("cascade vectors must share a nonzero length".into()));
        }
        if power.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain("powers must be finite and >= 0".into()));
        }
        if sinr.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("rate targets must be finite".into()));
        }
        Ok(Self {
            cascade,
            direct,
            power,
            sinr,
        })
    }

    pub fn users(&self) -> usize {
        self.cascade.len()
    }

    pub fn reflectors(&self) -> usize {
        self.cascade[0].len()
    }

    pub fn power(&self) -> &[f64] {
        &self.power
    }

    pub fn sinr_targets(&self) -> &[f64] {
        &self.sinr
    }

    /// `d_k^T w + v_k` (normalized).
    pub fn amplitude(&self, w: &PhasePoint, k: usize) -> C64 {
        self.amplitude_raw(w.as_slice(), k)
    }

    fn amplitude_raw(&self, w: &[C64], k: usize) -> C64 {
        self.cascade[k].iter().zip(w).map(|(d, w)| d * w).sum::<C64>() + self.direct[k]
    }

    /// Normalized gain `a_k / sigma^2`.
    pub fn gain(&self, w: &PhasePoint, k: usize) -> f64 {
        self.amplitude(w, k).norm_sqr()
    }

    pub fn gains(&self, w: &PhasePoint) -> Vec<f64> {
        (0..self.users()).map(|k| self.gain(w, k)).collect()
    }

    /// `sum_k p_k a_k` (normalized received power).
    pub fn weighted_gain(&self, w: &PhasePoint) -> f64 {
        (0..self.users()).map(|k| self.power[k] * self.gain(w, k)).sum()
    }

    pub fn value(&self, w: &PhasePoint, k: usize) -> f64 {
        self.values(w)[k]
    }

    pub fn values(&self, w: &PhasePoint) -> Vec<f64> {
        let gains = self.gains(w);
        constraint_values(&gains, &self.power, &self.sinr)
    }

    /// Wirtinger gradient of `C_k` (convention `d/dRe + j d/dIm`).
    pub fn grad(&self, w: &PhasePoint, k: usize) -> Vec<C64> {
        self.evaluate(w.as_slice()).grads.swap_remove(k)
    }

    /// `max_k -C_k(w)`; nonpositive when every constraint holds.
    pub fn max_violation(&self, w: &PhasePoint) -> f64 {
        self.values(w).into_iter().map(|c| -c).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Values, gains and gradients of every constraint in one pass.
    pub(crate) fn evaluate(&self, w: &[C64]) -> ConstraintEval {
        let k = self.users();
        let l = self.reflectors();
        let amps: Vec<C64> = (0..k).map(|i| self.amplitude_raw(w, i)).collect();
        let gains: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
        let values = constraint_values(&gains, &self.power, &self.sinr);
        // gradient of |d_j^T w + v_j|^2 is 2 conj(d_j) (d_j^T w + v_j)
        let gain_grads: Vec<Vec<C64>> = (0..k)
            .map(|j| self.cascade[j].iter().map(|d| d.conj() * amps[j] * 2.0).collect())
            .collect();
        let mut grads = vec![vec![C64::new(0.0, 0.0); l]; k];
        let mut tail = vec![C64::new(0.0, 0.0); l];
        for i in (0..k).rev() {
            for n in 0..l {
                grads[i][n] = gain_grads[i][n] * self.power[i] - tail[n] * self.sinr[i];
            }
            for n in 0..l {
                tail[n] += gain_grads[i][n] * self.power[i];
            }
        }
        ConstraintEval {
            gains,
            values,
            gain_grads,
            grads,
        }
    }
}

pub(crate) struct ConstraintEval {
    pub gains: Vec<f64>,
    pub values: Vec<f64>,
    pub gain_grads: Vec<Vec<C64>>,
    pub grads: Vec<Vec<C64>>,
}

/// `C_k = p_k a_k - s_k (sum_{j>k} p_j a_j + 1)` from normalized gains.
pub fn constraint_values(gains: &[f64], power: &[f64], sinr: &[f64]) -> Vec<f64> {
    let k = gains.len();
    let mut out = vec![0.0; k];
    let mut interference = 0.0;
    for i in (0..k).rev() {
        out[i] = power[i] * gains[i] - sinr[i] * (interference + 1.0);
        interference += power[i] * gains[i];
    }
    out
}

/// Power-mean smooth minimum `(sum_k C_k^-gamma)^(-1/gamma)` of positive values.
///
/// Evaluated in the log domain; the result never exceeds `min C` and is at
/// least `min C * K^(-1/gamma)`.
pub fn smooth_min(c: &[f64], gamma: f64) -> Result<f64> {
    Ok(smooth_min_with_weights(c, gamma)?.0)
}

/// Smooth minimum and its partial derivatives `(SM / C_k)^(gamma+1)`.
pub fn smooth_min_with_weights(c: &[f64], gamma: f64) -> Result<(f64, Vec<f64>)> {
    if c.is_empty() {
        return Err(Error::Domain("smooth_min of an empty set".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain("smooth_min needs gamma > 0".into()));
    }
    if let Some(x) = c.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!(
            "smooth_min needs positive finite inputs, got {x}"
        )));
    }
    let logs: Vec<f64> = c.iter().map(|x| -gamma * x.ln()).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = top + logs.iter().map(|z| (z - top).exp()).sum::<f64>().ln();
    let log_sm = -lse / gamma;
    let sm = log_sm.exp();
    let weights = c.iter().map(|x| ((gamma + 1.0) * (log_sm - x.ln())).exp()).collect();
    Ok((sm, weights))
}

/// Linear-quadratic smoothing of `max{0, x}` with accuracy `u`.
pub fn smooth_max(x: f64, u: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= u {
        x * x / (2.0 * u)
    } else {
        x - u / 2.0
    }
}

pub fn smooth_max_deriv(x: f64, u: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x <= u {
        x / u
    } else {
        1.0
    }
}

/// Max-min slack objective (maximized) and its Euclidean gradient at any
/// point of `C^L` (not only on the manifold).
///
/// The smooth minimum is taken over `C_k + shift`, minus `shift`; `shift`
/// must keep every shifted constraint positive, otherwise the point is
/// outside the domain and [`Error::Domain`] is returned.
pub fn penalized_objective_powermin(
    cs: &ConstraintSet,
    w: &[C64],
    rho: f64,
    u: f64,
    gamma: f64,
    shift: f64,
) -> Result<(f64, Vec<C64>)> {
    let ev = cs.evaluate(w);
    let shifted: Vec<f64> = ev.values.iter().map(|c| c + shift).collect();
    let (sm, weights) = smooth_min_with_weights(&shifted, gamma)?;
    let mut grad = vec![C64::new(0.0, 0.0); cs.reflectors()];
    let mut penalty = 0.0;
    for (k, g) in ev.grads.iter().enumerate() {
        let coef = weights[k] + rho * smooth_max_deriv(-ev.values[k], u);
        penalty += smooth_max(-ev.values[k], u);
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += gi * coef;
        }
    }
    let q = sm - shift - rho * penalty;
    finite_or_err(q, &grad)?;
    Ok((q, grad))
}

/// Weighted received-power objective (maximized) and its Euclidean gradient.
pub fn penalized_objective_ee(cs: &ConstraintSet, w: &[C64], rho: f64, u: f64) -> Result<(f64, Vec<C64>)> {
    let ev = cs.evaluate(w);
    let mut grad = vec![C64::new(0.0, 0.0); cs.reflectors()];
    let mut value = 0.0;
    for k in 0..cs.users() {
        let p = cs.power[k];
        value += p * ev.gains[k] - rho * smooth_max(-ev.values[k], u);
        let coef = rho * smooth_max_deriv(-ev.values[k], u);
        for n in 0..grad.len() {
            grad[n] += ev.gain_grads[k][n] * p + ev.grads[k][n] * coef;
        }
    }
    finite_or_err(value, &grad)?;
    Ok((value, grad))
}

fn finite_or_err(q: f64, grad: &[C64]) -> Result<()> {
    if !q.is_finite() || grad.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
        return Err(Error::NonFinite("penalized objective".into()));
    }
    Ok(())
}

/// A smooth penalized objective family parameterized by `(rho, u)`.
pub trait PenalizedObjective {
    /// `Q(w; rho, u)` (to be maximized) and its Euclidean gradient.
    /// Points outside the objective's domain yield [`Error::Domain`].
    fn evaluate(&self, w: &PhasePoint, rho: f64, u: f64) -> Result<(f64, Vec<C64>)>;

    /// The unpenalized objective, used to rank feasible iterates.
    fn base_value(&self, w: &PhasePoint) -> f64;

    fn constraints(&self) -> &ConstraintSet;

    /// Called before each outer pass with the warm start `w_l` and
    /// `progress = u_l / u0` (1 on the first pass, shrinking afterwards).
    fn begin_outer(&self, _w: &PhasePoint, _progress: f64) {}
}

/// Max-min constraint slack.
///
/// The power-mean smooth minimum blurs the constraints over a width
/// proportional to `C + shift`. Started on the boundary `C = 0` with a tiny
/// shift it is nearly as kinked as the plain minimum and the inner solver
/// crawls, while a large shift lets the smooth minimum trade a small
/// violation of one constraint for slack in the others. The shift is
/// therefore a continuation parameter: each outer pass sets it to
/// `max(floor - min_k C_k(w_l), scale * u / u0)`, where `scale` is the
/// largest received power `p_k a_k` at the reference point, so it shrinks
/// together with the smoothing accuracy `u`.
#[derive(Debug, Clone)]
pub struct PowerMinObjective<'a> {
    cs: &'a ConstraintSet,
    gamma: f64,
    floor: f64,
    scale: f64,
    shift: Cell<f64>,
}

impl<'a> PowerMinObjective<'a> {
    pub fn new(cs: &'a ConstraintSet, gamma: f64, floor: f64, w_ref: &PhasePoint) -> Self {
        let scale = cs
            .gains(w_ref)
            .iter()
            .zip(cs.power())
            .map(|(a, p)| a * p)
            .fold(0.0, f64::max);
        let obj = Self {
            cs,
            gamma,
            floor,
            scale,
            shift: Cell::new(0.0),
        };
        obj.begin_outer(w_ref, 1.0);
        obj
    }

    /// Fixed shift, never re-centred.
    pub fn with_shift(cs: &'a ConstraintSet, gamma: f64, shift: f64) -> Self {
        Self {
            cs,
            gamma,
            floor: f64::NEG_INFINITY,
            scale: 0.0,
            shift: Cell::new(shift),
        }
    }

    pub fn shift(&self) -> f64 {
        self.shift.get()
    }
}

impl PenalizedObjective for PowerMinObjective<'_> {
    fn evaluate(&self, w: &PhasePoint, rho: f64, u: f64) -> Result<(f64, Vec<C64>)> {
        penalized_objective_powermin(self.cs, w.as_slice(), rho, u, self.gamma, self.shift.get())
    }

    fn base_value(&self, w: &PhasePoint) -> f64 {
        self.cs.values(w).into_iter().fold(f64::INFINITY, f64::min)
    }

    fn constraints(&self) -> &ConstraintSet {
        self.cs
    }

    fn begin_outer(&self, w: &PhasePoint, progress: f64) {
        if self.floor == f64::NEG_INFINITY {
            return;
        }
        let min_c = self.base_value(w);
        self.shift.set((self.floor - min_c).max(self.scale * progress).max(0.0));
    }
}

#[derive(Debug, Clone)]
pub struct EeObjective<'a> {
    cs: &'a ConstraintSet,
}

impl<'a> EeObjective<'a> {
    pub fn new(cs: &'a ConstraintSet) -> Self {
        Self { cs }
    }
}

impl PenalizedObjective for EeObjective<'_> {
    fn evaluate(&self, w: &PhasePoint, rho: f64, u: f64) -> Result<(f64, Vec<C64>)> {
        penalized_objective_ee(self.cs, w.as_slice(), rho, u)
    }

    fn base_value(&self, w: &PhasePoint) -> f64 {
        self.cs.weighted_gain(w)
    }

    fn constraints(&self) -> &ConstraintSet {
        self.cs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyStatus {
    /// Stopping test passed with violation below `tau`.
    Converged,
    /// Outer budget exhausted; the best feasible iterate is returned.
    MaxOuterFeasible,
}

#[derive(Debug, Clone)]
pub struct PenaltyOutcome {
    pub point: PhasePoint,
    pub status: PenaltyStatus,
    pub violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// One record per outer iteration, carrying `rho` and `u`.
    pub trace: SolverTrace,
}

/// Outer loop of the exact penalty method with smoothing.
///
/// Each pass approximately minimizes `-Q(.; rho_l, u_l)` warm-started at
/// `w_l`, then stops if the step was shorter than `d_min` (or `u` already hit
/// its floor) and the worst violation is below `tau`. Otherwise `u` shrinks by
/// `theta_u` and `rho` grows by `theta_rho` on the first pass or while
/// infeasible. A feasible `w0` counts as an iterate when the budget runs out
/// and the best feasible point is returned.
pub fn exact_penalty_outer<O: PenalizedObjective + ?Sized>(
    obj: &O,
    w0: PhasePoint,
    pp: &PenaltyParams,
) -> Result<PenaltyOutcome> {
    pp.validate()?;
    let cs = obj.constraints();
    let mut w = w0;
    let mut rho = pp.rho0;
    let mut u = pp.u0;
    let mut trace = SolverTrace::default();
    let mut inner_total = 0;
    let mut best: Option<(PhasePoint, f64, f64)> = None;
    let v0 = cs.max_violation(&w);
    if v0 < pp.tau {
        best = Some((w.clone(), obj.base_value(&w), v0));
    }

    for l in 0..pp.max_outer {
        obj.begin_outer(&w, u / pp.u0);
        let out = ccm::minimize(
            |x: &PhasePoint| match obj.evaluate(x, rho, u) {
                Ok((q, g)) => Ok((-q, g.into_iter().map(|z| -z).collect())),
                Err(Error::Domain(_)) => Ok((f64::INFINITY, vec![C64::new(0.0, 0.0); x.len()])),
                Err(e) => Err(e),
            },
            w.clone(),
            &pp.inner,
        )?;
        inner_total += out.iterations;
        let w_next = out.point;
        let violation = cs.max_violation(&w_next);
        let dist = w.distance(&w_next);
        trace.push(TraceRecord {
            iteration: l,
            objective: -out.value,
            grad_norm: out.grad_norm,
            violation: Some(violation),
            penalty: Some(PenaltyState { rho, u }),
            step: dist,
        });
        let feasible = violation < pp.tau;
        if feasible {
            let value = obj.base_value(&w_next);
            if best.as_ref().is_none_or(|(_, b, _)| value > *b) {
                best = Some((w_next.clone(), value, violation));
            }
        }
        if (dist < pp.d_min || u <= pp.u_min) && feasible {
            return Ok(PenaltyOutcome {
                point: w_next,
                status: PenaltyStatus::Converged,
                violation,
                outer_iterations: l + 1,
                inner_iterations: inner_total,
                trace,
            });
        }
        u = (pp.theta_u * u).max(pp.u_min);
        if l == 0 || violation >= pp.tau {
            rho *= pp.theta_rho;
        }
        w = w_next;
    }

    match best {
        Some((point, _, violation)) => Ok(PenaltyOutcome {
            point,
            status: PenaltyStatus::MaxOuterFeasible,
            violation,
            outer_iterations: pp.max_outer,
            inner_iterations: inner_total,
            trace,
        }),
        None => Err(Error::Infeasible(format!(
            "no iterate met violation tolerance {} within {} outer iterations",
            pp.tau, pp.max_outer
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_set(rng: &mut ChaCha8Rng, k: usize, l: usize) -> ConstraintSet {
        let mut cv = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let cascade = (0..k).map(|_| (0..l).map(|_| cv()).collect()).collect();
        let direct = (0..k).map(|_| cv()).collect();
        let power = (0..k).map(|_| rng.random_range(0.1..2.0)).collect();
        let sinr = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        ConstraintSet::from_parts(cascade, direct, power, sinr).unwrap()
    }

    #[test]
    fn smooth_min_identities() {
        assert!((smooth_min(&[2.5], 64.0).unwrap() - 2.5).abs() < 1e-15);
        let v = smooth_min(&[3.0; 4], 8.0).unwrap();
        assert!((v - 3.0 * 4f64.powf(-1.0 / 8.0)).abs() < 1e-14);
        assert!(smooth_min(&[1.0, 0.0], 8.0).is_err());
        assert!(smooth_min(&[1.0, -1.0], 8.0).is_err());
        // no overflow for tiny inputs
        let tiny = smooth_min(&[1e-200, 2e-200], 64.0).unwrap();
        assert!(tiny > 0.0 && tiny <= 1e-200);
    }

    #[test]
    fn smooth_min_bounds_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.random_range(1..6);
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(1e-3..10.0)).collect();
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let sm = smooth_min(&v, 64.0).unwrap();
            assert!(sm <= min * (1.0 + 1e-14));
            assert!((min - sm) / min <= (k as f64).powf(1.0 / 64.0) - 1.0 + 1e-14);
        }
    }

    #[test]
    fn smooth_max_branches() {
        let u = 0.2;
        assert_eq!(smooth_max(-1.0, u), 0.0);
        assert!((smooth_max(u / 2.0, u) - u / 8.0).abs() < 1e-16);
        assert!((smooth_max(2.0 * u, u) - 1.5 * u).abs() < 1e-16);
        // continuity and C1 at the knots
        for x in [0.0, u] {
            let e = 1e-9;
            assert!((smooth_max(x - e, u) - smooth_max(x + e, u)).abs() < 1e-8);
            assert!((smooth_max_deriv(x - e, u) - smooth_max_deriv(x + e, u)).abs() < 1e-7);
        }
        for i in -50..50 {
            let x = i as f64 * 0.013;
            assert!((smooth_max(x, u) - x.max(0.0)).abs() <= u / 2.0 + 1e-16);
        }
    }

    #[test]
    fn last_user_sees_no_interference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cs = random_set(&mut rng, 3, 4);
        let w = PhasePoint::random(&mut rng, 4);
        let vals = cs.values(&w);
        let a = cs.gains(&w);
        assert!((vals[2] - (cs.power[2] * a[2] - cs.sinr[2])).abs() < 1e-14);
    }

    #[test]
    fn zero_power_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cs = random_set(&mut rng, 3, 5);
        cs.power = vec![0.0; 3];
        let w = PhasePoint::random(&mut rng, 5);
        for (v, s) in cs.values(&w).iter().zip(&cs.sinr) {
            assert!((v + s).abs() < 1e-15);
        }
        for k in 0..3 {
            assert!(cs.grad(&w, k).iter().all(|g| g.norm() == 0.0));
        }
    }

    #[test]
    fn single_element_gradient_matches_symbolic_form() {
        // K = 1, L = 1, v = 0: C = p |d w|^2 - s, gradient 2 p conj(d) (d w).
        let d = c(0.3, -0.7);
        let p = 1.7;
        let cs = ConstraintSet::from_parts(vec![vec![d]], vec![c(0.0, 0.0)], vec![p], vec![0.4]).unwrap();
        let w = PhasePoint::from_phases(&[0.9]);
        let g = cs.grad(&w, 0)[0];
        let expect = d.conj() * (d * w.as_slice()[0]) * (2.0 * p);
        assert!((g - expect).norm() < 1e-15);
    }

    #[test]
    fn penalty_term_vanishes_with_large_margin() {
        let cs = ConstraintSet::from_parts(
            vec![vec![c(2.0, 0.0)], vec![c(1.5, 0.0)]],
            vec![c(0.0, 0.0); 2],
            vec![5.0, 5.0],
            vec![0.1, 0.1],
        )
        .unwrap();
        let w = PhasePoint::ones(1);
        let vals = cs.values(&w);
        assert!(vals.iter().all(|v| *v > 1.0));
        let (q, _) = penalized_objective_powermin(&cs, w.as_slice(), 100.0, 1e-3, 64.0, 0.0).unwrap();
        assert!((q - smooth_min(&vals, 64.0).unwrap()).abs() < 1e-14);
        let (qe, _) = penalized_objective_ee(&cs, w.as_slice(), 100.0, 1e-3).unwrap();
        assert!((qe - cs.weighted_gain(&w)).abs() < 1e-14);
    }

    #[test]
    fn increasing_rho_lowers_violated_objective() {
        let cs = ConstraintSet::from_parts(
            vec![vec![c(0.1, 0.0)], vec![c(3.0, 0.0)]],
            vec![c(0.0, 0.0); 2],
            vec![1.0, 1.0],
            vec![0.5, 0.1],
        )
        .unwrap();
        let w = PhasePoint::ones(1);
        let vals = cs.values(&w);
        assert!(vals[0] < 0.0 && vals[1] > 0.0);
        let shift = 1.0 - vals[0];
        let mut last = f64::INFINITY;
        for rho in [0.1, 1.0, 10.0, 100.0] {
            let (q, _) = penalized_objective_powermin(&cs, w.as_slice(), rho, 1e-2, 64.0, shift).unwrap();
            assert!(q < last);
            last = q;
            let (qe, _) = penalized_objective_ee(&cs, w.as_slice(), rho, 1e-2).unwrap();
            assert!(qe < cs.weighted_gain(&w));
        }
    }

    #[test]
    fn zero_power_ee_objective_is_penalty_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut cs = random_set(&mut rng, 2, 3);
        cs.power = vec![0.0; 2];
        let w = PhasePoint::random(&mut rng, 3);
        let (q, _) = penalized_objective_ee(&cs, w.as_slice(), 2.0, 0.1).unwrap();
        let pen: f64 = cs.values(&w).iter().map(|c| smooth_max(-c, 0.1)).sum();
        assert!((q + 2.0 * pen).abs() < 1e-14);
    }

    #[test]
    fn outer_loop_returns_feasible_optimum_unchanged() {
        // One user with only a cascaded path: a is maximized by co-phasing.
        let d = vec![c(0.6, 0.8), c(-1.0, 0.0)];
        let cs = ConstraintSet::from_parts(vec![d.clone()], vec![c(0.0, 0.0)], vec![1.0], vec![0.1]).unwrap();
        let aligned = PhasePoint::normalized(&d.iter().map(|x| x.conj()).collect::<Vec<_>>());
        let obj = EeObjective::new(&cs);
        let out = exact_penalty_outer(&obj, aligned.clone(), &PenaltyParams::default()).unwrap();
        assert_eq!(out.status, PenaltyStatus::Converged);
        assert_eq!(out.outer_iterations, 1);
        assert!(out.point.distance(&aligned) < 1e-12);
    }

    #[test]
    fn outer_loop_aligns_single_user_phases() {
        // K = 1, L = 2 with a direct link: the optimum co-phases both paths with v.
        let d = vec![c(0.3, 0.4), c(-0.2, 0.5)];
        let v = c(0.1, -0.2);
        let cs = ConstraintSet::from_parts(vec![d.clone()], vec![v], vec![1.0], vec![0.05]).unwrap();
        let w0 = PhasePoint::from_phases(&[2.0, -1.0]);
        let obj = PowerMinObjective::new(&cs, 64.0, 1e-6, &w0);
        let out = exact_penalty_outer(&obj, w0, &PenaltyParams::default()).unwrap();
        for (di, wi) in d.iter().zip(out.point.as_slice()) {
            let phase_err = ((di * wi) * v.conj()).arg().abs();
            assert!(phase_err < 1e-4, "{phase_err}");
        }
        let rhos: Vec<f64> = out.trace.records.iter().map(|r| r.penalty.unwrap().rho).collect();
        assert!(rhos.windows(2).all(|w| w[1] >= w[0]));
        let us: Vec<f64> = out.trace.records.iter().map(|r| r.penalty.unwrap().u).collect();
        assert!(us.windows(2).all(|w| w[1] <= w[0]));
    }
}
