//! Energy-efficiency maximization for uplink NOMA.
//!
//! With SIC the per-user rates telescope, so the sum rate is
//! `log2(1 + sum_k p_k a_k / sigma2)` and the efficiency is that over
//! `sum_k p_k`. For fixed phases the ratio is handled by Dinkelbach's
//! method; each parametric sub-problem
//! `max log2(1 + sum p a / sigma2) - beta sum p` over the rate constraints
//! and a per-user cap is solved by cyclic coordinate ascent with closed-form
//! coordinate maximizers.

use serde::{Deserialize, Serialize};

use crate::ccm::PhasePoint;
use crate::noma_power::{achieved_rates, maxmin_phase_step, solve_power_lp, AltOptResult, PowerAllocation};
use crate::penalty::{exact_penalty_outer, ConstraintSet, EeObjective};
use crate::scenario::{ChannelRealization, ScenarioConfig};
use crate::sdr;
use crate::{sinr_target, Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// `log2(1 + sum_k p_k a_k / sigma2)` in bits/s/Hz.
pub fn sum_rate(p: &[f64], a: &[f64], sigma2: f64) -> f64 {
    let s: f64 = p.iter().zip(a).map(|(p, a)| p * a).sum();
    (s / sigma2).ln_1p() / LN2
}

/// Sum rate per watt of total transmit power.
pub fn ee_value(p: &[f64], a: &[f64], sigma2: f64) -> Result<f64> {
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("efficiency is undefined at zero total power".into()));
    }
    Ok(sum_rate(p, a, sigma2) / total)
}

/// Box for one coordinate step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBounds {
    pub p_min: f64,
    pub p_max: f64,
}

/// Feasible interval for `p_k` with every other power held at `p`.
///
/// The lower end makes user `k`'s own rate constraint tight; the upper end is
/// the largest value keeping the constraints of earlier-decoded users
/// (`j < k`, which see `p_k` as interference) satisfied, capped by `p_cap`.
pub fn power_bounds(k: usize, p: &[f64], a: &[f64], rate_min: &[f64], sigma2: f64, p_cap: f64) -> PowerBounds {
    let kk = p.len();
    let interference_after = |i: usize| -> f64 { (i + 1..kk).map(|j| p[j] * a[j]).sum() };
    let p_min = sinr_target(rate_min[k]) * (interference_after(k) + sigma2) / a[k];
    let mut p_max = p_cap;
    for j in 0..k {
        let s = sinr_target(rate_min[j]);
        if s <= 0.0 {
            continue;
        }
        let others = interference_after(j) - p[k] * a[k];
        let room = (p[j] * a[j] / s - sigma2 - others) / a[k];
        p_max = p_max.min(room);
    }
    PowerBounds {
        p_min: p_min.max(0.0),
        p_max,
    }
}

/// Closed-form maximizer of the parametric objective along `p_k`, clamped.
pub fn coordinate_update(k: usize, p: &[f64], a: &[f64], beta: f64, sigma2: f64, bounds: &PowerBounds) -> f64 {
    let others: f64 = p
        .iter()
        .zip(a)
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, (p, a))| p * a)
        .sum();
    let unconstrained = 1.0 / (beta * LN2) - (others + sigma2) / a[k];
    unconstrained.min(bounds.p_max).max(bounds.p_min)
}

/// `sum_rate(p) - beta * sum(p)`.
pub fn parametric_value(p: &[f64], a: &[f64], sigma2: f64, beta: f64) -> f64 {
    sum_rate(p, a, sigma2) - beta * p.iter().sum::<f64>()
}

const SWEEP_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 10_000;

/// Parametric sub-problem for ratio `beta` by cyclic coordinate ascent.
///
/// Starts from the minimum-power point (every rate constraint tight) and
/// sweeps users with bounds refreshed from the current iterate, until the
/// change over a sweep is below `1e-10` relative to `||p||`.
pub fn solve_parametric(a: &[f64], rate_min: &[f64], sigma2: f64, beta: f64, p_cap: f64) -> Result<PowerAllocation> {
    let mut p = feasible_start(a, rate_min, sigma2, p_cap)?;
    if !(beta >= 0.0) {
        return Err(Error::Domain("beta must be >= 0".into()));
    }
    let kk = p.len();
    for _ in 0..MAX_SWEEPS {
        let old = p.clone();
        for k in 0..kk {
            let bounds = power_bounds(k, &p, a, rate_min, sigma2, p_cap);
            p[k] = if beta == 0.0 {
                bounds.p_max.max(bounds.p_min)
            } else {
                coordinate_update(k, &p, a, beta, sigma2, &bounds)
            };
        }
        let diff: f64 = p.iter().zip(&old).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let norm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if diff <= SWEEP_TOL * norm.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(PowerAllocation { p })
}

fn feasible_start(a: &[f64], rate_min: &[f64], sigma2: f64, p_cap: f64) -> Result<Vec<f64>> {
    if !(p_cap > 0.0) {
        return Err(Error::Domain("power cap must be positive".into()));
    }
    let p = solve_power_lp(a, rate_min, sigma2)?.p;
    if let Some(x) = p.iter().find(|x| **x > p_cap) {
        return Err(Error::Infeasible(format!(
            "rate targets need {x} W, above the {p_cap} W cap"
        )));
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DinkelbachParams {
    /// Stop once the parametric optimum is at most this (bits/s/Hz).
    pub eps: f64,
    pub max_iters: usize,
}

impl Default for DinkelbachParams {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            max_iters: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachState {
    /// Current ratio; equals the returned efficiency at termination.
    pub beta: f64,
    /// Parametric optimum of the last iteration.
    pub f: f64,
    pub iterations: usize,
    pub eps: f64,
    pub beta_trace: Vec<f64>,
    pub f_trace: Vec<f64>,
}

/// Efficiency-optimal powers for fixed gains `a` (SIC order, linear).
pub fn dinkelbach(
    a: &[f64],
    rate_min: &[f64],
    sigma2: f64,
    p_cap: f64,
    params: &DinkelbachParams,
) -> Result<(PowerAllocation, DinkelbachState)> {
    let mut state = DinkelbachState {
        beta: 0.0,
        f: f64::INFINITY,
        iterations: 0,
        eps: params.eps,
        beta_trace: vec![0.0],
        f_trace: Vec::new(),
    };
    let mut best: Option<PowerAllocation> = None;
    for _ in 0..params.max_iters {
        let cand = solve_parametric(a, rate_min, sigma2, state.beta, p_cap)?;
        let f = parametric_value(&cand.p, a, sigma2, state.beta);
        state.iterations += 1;
        if f < 0.0 && best.is_some() {
            // The sub-problem did not beat the incumbent; keep it and beta.
            state.f = f.max(0.0);
            state.f_trace.push(state.f);
            break;
        }
        let beta = ee_value(&cand.p, a, sigma2)?;
        state.f = f;
        state.f_trace.push(f);
        best = Some(cand);
        if beta >= state.beta {
            state.beta = beta;
            state.beta_trace.push(beta);
        }
        if f <= params.eps {
            break;
        }
    }
    let best = best.ok_or_else(|| Error::Solver("Dinkelbach made no iteration".into()))?;
    Ok((best, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EeBeamformer {
    /// Relaxed weighted received power plus rank-one extraction.
    SdrObj,
    /// Penalized weighted received power on the manifold.
    ManifoldObj,
    /// The power-minimization max-min slack objective on the manifold.
    ManifoldMaxmin,
    /// Keep the starting phases.
    Fixed,
}

impl EeBeamformer {
    pub fn name(self) -> &'static str {
        match self {
            EeBeamformer::SdrObj => "sdr_obj",
            EeBeamformer::ManifoldObj => "manifold_obj",
            EeBeamformer::ManifoldMaxmin => "manifold_maxmin",
            EeBeamformer::Fixed => "fixed",
        }
    }
}

/// Alternates Dinkelbach power steps with a phase update.
///
/// As in [`alt_opt_powermin`](crate::noma_power::alt_opt_powermin), a phase
/// update is only kept if the re-optimized efficiency does not drop.
pub fn alt_opt_ee(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    beamformer: EeBeamformer,
    w0: PhasePoint,
) -> Result<AltOptResult> {
    if w0.len() != ch.reflectors() {
        return Err(Error::Domain("initial phases do not match the reflector count".into()));
    }
    let sigma2 = cfg.noise_power;
    let rates = ch.in_sic_order(&cfg.rate_min);
    let params = &cfg.solver.alt;
    let dk = &cfg.solver.dinkelbach;

    let mut w = w0;
    let mut gains = ch.effective_gains(&w);
    let (mut alloc, _) = dinkelbach(&gains, &rates, sigma2, cfg.p_max, dk)?;
    let mut ee = ee_value(&alloc.p, &gains, sigma2)?;
    let mut sum_power_trace = vec![alloc.sum()];
    let mut ee_trace = vec![ee];
    let mut iterations = 0;
    let mut rejected_steps = 0;

    for _ in 0..params.max_iters {
        let candidate = match beamformer {
            EeBeamformer::Fixed => break,
            EeBeamformer::SdrObj => sdr::sdr_ee_step(ch, &alloc.p, &rates, sigma2, &cfg.solver.sdp),
            EeBeamformer::ManifoldObj => ConstraintSet::new(ch, &alloc.p, &rates, sigma2).and_then(|cs| {
                exact_penalty_outer(&EeObjective::new(&cs), w.clone(), &cfg.solver.penalty).map(|o| o.point)
            }),
            EeBeamformer::ManifoldMaxmin => maxmin_phase_step(ch, cfg, &alloc.p, &rates, &w),
        };
        let next = candidate.and_then(|w_new| {
            let g = ch.effective_gains(&w_new);
            let (a, _) = dinkelbach(&g, &rates, sigma2, cfg.p_max, dk)?;
            let e = ee_value(&a.p, &g, sigma2)?;
            Ok((w_new, g, a, e))
        });
        let (w_new, g_new, a_new, ee_new) = match next {
            Ok(x) if x.3 >= ee => x,
            _ => {
                rejected_steps += 1;
                break;
            }
        };
        let prev = ee;
        w = w_new;
        gains = g_new;
        alloc = a_new;
        ee = ee_new;
        iterations += 1;
        sum_power_trace.push(alloc.sum());
        ee_trace.push(ee);
        if ee - prev <= params.rel_tol * prev {
            break;
        }
    }

    Ok(AltOptResult {
        rates: achieved_rates(&alloc.p, &gains, sigma2),
        p: alloc.p,
        w,
        sum_power_trace,
        ee_trace,
        gains,
        iterations,
        rejected_steps,
        beamformer: beamformer.name(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_rate_basics() {
        assert_eq!(sum_rate(&[0.0, 0.0], &[3.0, 1.0], 1.0), 0.0);
        assert!((sum_rate(&[1.0], &[1.0], 1.0) - 1.0).abs() < 1e-15);
        assert!(ee_value(&[0.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn telescoping_identity() {
        let p = [0.3, 1.2, 0.01];
        let a = [4.0, 2.0, 9.0];
        let per_user: f64 = achieved_rates(&p, &a, 0.5).iter().sum();
        assert!((per_user - sum_rate(&p, &a, 0.5)).abs() < 1e-12);
    }

    #[test]
    fn interior_coordinate_step_is_stationary() {
        let p = [0.2, 0.1];
        let a = [3.0, 1.0];
        let beta = 1.5;
        let b = PowerBounds {
            p_min: 0.0,
            p_max: 10.0,
        };
        let pk = coordinate_update(0, &p, &a, beta, 1.0, &b);
        let s = pk * a[0] + p[1] * a[1];
        let deriv = a[0] / ((1.0 + s) * LN2) - beta;
        assert!(deriv.abs() < 1e-10);
    }

    #[test]
    fn coordinate_step_clamps() {
        let b = PowerBounds { p_min: 0.4, p_max: 0.5 };
        assert_eq!(coordinate_update(0, &[0.45], &[1.0], 1e9, 1.0, &b), 0.4);
        assert_eq!(coordinate_update(0, &[0.45], &[1.0], 1e-9, 1.0, &b), 0.5);
    }

    #[test]
    fn parametric_limits() {
        let a = [5.0, 2.0];
        let r = [0.5, 0.5];
        let lp = solve_power_lp(&a, &r, 1.0).unwrap().p;
        let heavy = solve_parametric(&a, &r, 1.0, 1e12, 10.0).unwrap().p;
        for (x, y) in heavy.iter().zip(&lp) {
            assert!((x - y).abs() < 1e-12);
        }
        let light = solve_parametric(&a, &r, 1.0, 1e-12, 10.0).unwrap().p;
        assert!(light.iter().any(|x| (x - 10.0).abs() < 1e-9));
    }

    #[test]
    fn infeasible_cap_is_reported() {
        let err = solve_parametric(&[1e-3], &[4.0], 1.0, 1.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn dinkelbach_terminates_with_small_gap() {
        let a = [8.0, 3.0, 1.0];
        let r = [0.1, 0.2, 0.1];
        let (p, st) = dinkelbach(&a, &r, 1.0, 5.0, &DinkelbachParams::default()).unwrap();
        assert!(st.f <= st.eps);
        assert!(st.beta_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((ee_value(&p.p, &a, 1.0).unwrap() - st.beta).abs() <= 1e-9 * st.beta);
    }
}
