//! Sum-power minimization for uplink NOMA.
//!
//! For fixed phases the power problem is a linear program whose optimum has
//! every rate constraint active, so it is solved by back-substitution from
//! the last decoded user. [`alt_opt_powermin`] alternates that step with a
//! phase update (SDR or manifold) that widens the constraint margins.

use serde::{Deserialize, Serialize};

use crate::ccm::PhasePoint;
use crate::penalty::{exact_penalty_outer, ConstraintSet, PowerMinObjective};
use crate::scenario::{ChannelRealization, ScenarioConfig};
use crate::sdr;
use crate::{sinr_target, Error, Result};

/// Transmit powers (W) in SIC order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
}

impl PowerAllocation {
    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Minimum-sum-power allocation for gains `a` (SIC order, linear).
pub fn solve_power_lp(a: &[f64], rate_min: &[f64], sigma2: f64) -> Result<PowerAllocation> {
    if a.len() != rate_min.len() {
        return Err(Error::Domain("gain and rate vectors differ in length".into()));
    }
    if let Some(x) = a.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("channel gains must be positive, got {x}")));
    }
    if rate_min.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Domain("rate targets must be >= 0".into()));
    }
    let k = a.len();
    let mut p = vec![0.0; k];
    let mut received = 0.0;
    for i in (0..k).rev() {
        p[i] = sinr_target(rate_min[i]) * (received + sigma2) / a[i];
        received += p[i] * a[i];
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("power allocation".into()));
    }
    Ok(PowerAllocation { p })
}

/// Per-user SIC rates `log2(1 + p_k a_k / (sum_{j>k} p_j a_j + sigma2))`.
pub fn achieved_rates(p: &[f64], a: &[f64], sigma2: f64) -> Vec<f64> {
    let k = p.len();
    let mut out = vec![0.0; k];
    let mut received = 0.0;
    for i in (0..k).rev() {
        out[i] = (p[i] * a[i] / (received + sigma2)).ln_1p() / std::f64::consts::LN_2;
        received += p[i] * a[i];
    }
    out
}

/// Stopping rule of the alternating loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AltParams {
    pub max_iters: usize,
    /// Stop when the relative change of the tracked objective drops below this.
    pub rel_tol: f64,
}

impl Default for AltParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerBeamformer {
    Sdr,
    Manifold,
    /// Keep the starting phases.
    Fixed,
}

impl PowerBeamformer {
    pub fn name(self) -> &'static str {
        match self {
            PowerBeamformer::Sdr => "sdr",
            PowerBeamformer::Manifold => "manifold",
            PowerBeamformer::Fixed => "fixed",
        }
    }
}

/// Outcome of an alternating power / phase optimization.
#[derive(Debug, Clone)]
pub struct AltOptResult {
    /// Final powers (W), SIC order.
    pub p: Vec<f64>,
    pub w: PhasePoint,
    /// Sum power after every accepted power step.
    pub sum_power_trace: Vec<f64>,
    /// Energy efficiency after every accepted power step.
    pub ee_trace: Vec<f64>,
    /// Achieved per-user rates (bits/s/Hz), SIC order.
    pub rates: Vec<f64>,
    /// Effective gains at the final phases, SIC order.
    pub gains: Vec<f64>,
    /// Phase updates that were accepted.
    pub iterations: usize,
    /// Phase updates that failed or did not improve and were discarded.
    pub rejected_steps: usize,
    pub beamformer: &'static str,
}

impl AltOptResult {
    pub fn sum_power(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn ee(&self) -> f64 {
        self.sum_rate() / self.sum_power()
    }
}

/// Phase update for fixed powers `p` that maximizes the smallest rate
/// constraint margin, starting from `w`.
pub(crate) fn maxmin_phase_step(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    p: &[f64],
    rates: &[f64],
    w: &PhasePoint,
) -> Result<PhasePoint> {
    let pp = &cfg.solver.penalty;
    let cs = ConstraintSet::new(ch, p, rates, cfg.noise_power)?;
    let obj = PowerMinObjective::new(&cs, pp.gamma, pp.smoothing_shift, w);
    Ok(exact_penalty_outer(&obj, w.clone(), pp)?.point)
}

/// Alternates the power LP with a phase update until the sum power settles.
///
/// A phase update is kept only if the power LP at the new phases does not
/// increase the sum power; a failed or non-improving update ends the loop
/// with the previous phases. This keeps the recorded sum-power sequence
/// non-increasing regardless of the beamformer.
pub fn alt_opt_powermin(
    ch: &ChannelRealization,
    cfg: &ScenarioConfig,
    beamformer: PowerBeamformer,
    w0: PhasePoint,
) -> Result<AltOptResult> {
    if w0.len() != ch.reflectors() {
        return Err(Error::Domain("initial phases do not match the reflector count".into()));
    }
    let sigma2 = cfg.noise_power;
    let rates = ch.in_sic_order(&cfg.rate_min);
    let params = &cfg.solver.alt;

    let mut w = w0;
    let mut gains = ch.effective_gains(&w);
    let mut alloc = solve_power_lp(&gains, &rates, sigma2)?;
    let mut sum_power_trace = vec![alloc.sum()];
    let mut ee_trace = vec![ee_of(&alloc.p, &gains, sigma2)];
    let mut iterations = 0;
    let mut rejected_steps = 0;

    for _ in 0..params.max_iters {
        let candidate = match beamformer {
            PowerBeamformer::Fixed => break,
            PowerBeamformer::Manifold => maxmin_phase_step(ch, cfg, &alloc.p, &rates, &w),
            PowerBeamformer::Sdr => sdr::sdr_powermin_step(ch, &alloc.p, &rates, sigma2, &cfg.solver.sdp),
        };
        let next = candidate.and_then(|w_new| {
            let g = ch.effective_gains(&w_new);
            let a = solve_power_lp(&g, &rates, sigma2)?;
            Ok((w_new, g, a))
        });
        let (w_new, g_new, a_new) = match next {
            Ok(x) if x.2.sum() <= alloc.sum() => x,
            _ => {
                rejected_steps += 1;
                break;
            }
        };
        let prev = alloc.sum();
        w = w_new;
        gains = g_new;
        alloc = a_new;
        iterations += 1;
        sum_power_trace.push(alloc.sum());
        ee_trace.push(ee_of(&alloc.p, &gains, sigma2));
        if (prev - alloc.sum()) <= params.rel_tol * prev {
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

fn ee_of(p: &[f64], a: &[f64], sigma2: f64) -> f64 {
    let total: f64 = p.iter().sum();
    if total > 0.0 {
        achieved_rates(p, a, sigma2).iter().sum::<f64>() / total
    } else {
        0.0
    }
}
