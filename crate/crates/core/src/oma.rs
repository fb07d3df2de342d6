//! Time-sharing OMA baselines with per-user aligned IRS phases.
//!
//! In its own slot user `k` sees the interference-free aligned gain `c_k`,
//! so meeting rate `R_k` in a fraction `alpha_k` of the frame costs
//! `p_k = sigma2 (2^{R_k/alpha_k} - 1) / c_k`. The average power
//! `sum_k alpha_k p_k` is separable and convex in `alpha`, which makes the
//! simplex-constrained minimization a one-multiplier dual bisection.

use crate::scenario::ChannelRealization;
use crate::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;
/// Smallest time share handed to any user.
pub const ALPHA_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OmaAllocation {
    /// Time fractions, summing to one.
    pub alpha: Vec<f64>,
    /// Transmit powers during each user's slot (W).
    pub p: Vec<f64>,
    /// Aligned gains used.
    pub c: Vec<f64>,
}

impl OmaAllocation {
    /// `sum_k alpha_k p_k` (W).
    pub fn average_power(&self) -> f64 {
        self.alpha.iter().zip(&self.p).map(|(a, p)| a * p).sum()
    }

    /// `alpha_k log2(1 + p_k c_k / sigma2)` per user.
    pub fn rates(&self, sigma2: f64) -> Vec<f64> {
        (0..self.alpha.len())
            .map(|k| self.alpha[k] * (self.p[k] * self.c[k] / sigma2).ln_1p() / LN2)
            .collect()
    }

    pub fn sum_rate(&self, sigma2: f64) -> f64 {
        self.rates(sigma2).iter().sum()
    }

    pub fn ee(&self, sigma2: f64) -> f64 {
        self.sum_rate(sigma2) / self.average_power()
    }
}

/// `(sum_i |g_i||h_ki| + |v_k|)^2`, the gain of user `k` under aligned phases.
pub fn aligned_gain(ch: &ChannelRealization, k: usize) -> f64 {
    let amp: f64 = ch.g.iter().zip(&ch.h[k]).map(|(g, h)| g.norm() * h.norm()).sum::<f64>() + ch.v[k].norm();
    amp * amp
}

pub fn aligned_gains(ch: &ChannelRealization) -> Vec<f64> {
    (0..ch.users()).map(|k| aligned_gain(ch, k)).collect()
}

/// Power (W) that meets `rate` in share `alpha` with normalized gain
/// `cn = c / sigma2`: `(2^{rate/alpha} - 1) / cn`.
fn slot_power(rate: f64, alpha: f64, cn: f64) -> f64 {
    (rate * LN2 / alpha).exp_m1() / cn
}

/// `alpha (2^{R/alpha} - 1) / cn`: average power of one user (W).
fn energy(rate: f64, alpha: f64, cn: f64) -> f64 {
    alpha * slot_power(rate, alpha, cn)
}

/// Derivative of [`energy`] in `alpha`: `(e^x (1 - x) - 1) / cn`, `x = R ln2 / alpha`.
fn energy_deriv(rate: f64, alpha: f64, cn: f64) -> f64 {
    let x = rate * LN2 / alpha;
    let ex = x.exp();
    if !ex.is_finite() {
        return f64::NEG_INFINITY;
    }
    (x.exp_m1() - x * ex) / cn
}

/// Share solving `energy'(alpha) = -mu` on `[lo, hi]` (clamped).
fn share_for_multiplier(rate: f64, cn: f64, mu: f64, lo: f64, hi: f64) -> f64 {
    if energy_deriv(rate, hi, cn) <= -mu {
        return hi;
    }
    if energy_deriv(rate, lo, cn) >= -mu {
        return lo;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if energy_deriv(rate, mid, cn) < -mu {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
    }
    0.5 * (a + b)
}

/// Minimizes `sum_k energy_k(alpha_k)` over `sum alpha = budget`,
/// `alpha_k >= lower_k`; every rate must be positive.
fn simplex_energy_min(rates: &[f64], cn: &[f64], lower: &[f64], budget: f64) -> Result<Vec<f64>> {
    let kk = rates.len();
    let floor_sum: f64 = lower.iter().sum();
    if floor_sum > budget * (1.0 + 1e-12) {
        return Err(Error::Infeasible("time-share lower bounds exceed the frame".into()));
    }
    if kk == 0 {
        return Ok(Vec::new());
    }
    let total = |mu: f64| -> f64 {
        (0..kk)
            .map(|k| share_for_multiplier(rates[k], cn[k], mu, lower[k], budget))
            .sum()
    };
    // sum of shares decreases in mu; bracket sum = budget in log space
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut guard = 0;
    while total(lo) < budget && guard < 1000 {
        lo *= 0.5;
        guard += 1;
    }
    guard = 0;
    while total(hi) > budget && guard < 1000 {
        hi *= 2.0;
        guard += 1;
    }
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..300 {
        let mid = 0.5 * (llo + lhi);
        if total(mid.exp()) > budget {
            llo = mid;
        } else {
            lhi = mid;
        }
        if lhi - llo <= 4.0 * f64::EPSILON * llo.abs().max(lhi.abs()).max(1.0) {
            break;
        }
    }
    let mu = (0.5 * (llo + lhi)).exp();
    let mut alpha: Vec<f64> = (0..kk)
        .map(|k| share_for_multiplier(rates[k], cn[k], mu, lower[k], budget))
        .collect();
    let s: f64 = alpha.iter().sum();
    if s > 0.0 {
        for a in &mut alpha {
            *a *= budget / s;
        }
    }
    Ok(alpha)
}

fn check(c: &[f64], rate_min: &[f64], sigma2: f64) -> Result<()> {
    if c.is_empty() || c.len() != rate_min.len() {
        return Err(Error::Domain(
            "gain and rate vectors must be non-empty and equally long".into(),
        ));
    }
    if c.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::Domain("aligned gains must be positive".into()));
    }
    if rate_min.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::Domain("rate targets must be finite and >= 0".into()));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain("noise power must be positive".into()));
    }
    Ok(())
}

fn allocation(alpha: Vec<f64>, c: &[f64], rate_min: &[f64], sigma2: f64) -> OmaAllocation {
    let p = (0..c.len())
        .map(|k| {
            if rate_min[k] > 0.0 {
                slot_power(rate_min[k], alpha[k], c[k] / sigma2)
            } else {
                0.0
            }
        })
        .collect();
    OmaAllocation {
        alpha,
        p,
        c: c.to_vec(),
    }
}

/// Minimum average power time sharing.
///
/// Users with a zero rate target get the floor share and no power; if every
/// target is zero the frame is split evenly.
pub fn oma_powermin(c: &[f64], rate_min: &[f64], sigma2: f64) -> Result<OmaAllocation> {
    check(c, rate_min, sigma2)?;
    let kk = c.len();
    let active: Vec<usize> = (0..kk).filter(|&k| rate_min[k] > 0.0).collect();
    if active.is_empty() {
        return Ok(allocation(vec![1.0 / kk as f64; kk], c, rate_min, sigma2));
    }
    let idle = (kk - active.len()) as f64 * ALPHA_FLOOR;
    let rates: Vec<f64> = active.iter().map(|&k| rate_min[k]).collect();
    let cn: Vec<f64> = active.iter().map(|&k| c[k] / sigma2).collect();
    let lower = vec![ALPHA_FLOOR; active.len()];
    let shares = simplex_energy_min(&rates, &cn, &lower, 1.0 - idle)?;
    let mut alpha = vec![ALPHA_FLOOR; kk];
    for (i, &k) in active.iter().enumerate() {
        alpha[k] = shares[i];
    }
    Ok(allocation(alpha, c, rate_min, sigma2))
}

/// Equal time shares with rate-tight powers.
pub fn oma_equal_share(c: &[f64], rate_min: &[f64], sigma2: f64) -> Result<OmaAllocation> {
    check(c, rate_min, sigma2)?;
    let kk = c.len();
    Ok(allocation(vec![1.0 / kk as f64; kk], c, rate_min, sigma2))
}

/// Smallest share in which `rate` fits under power cap `p_cap`.
fn min_share(rate: f64, cn: f64, p_cap: f64) -> f64 {
    if rate <= 0.0 {
        return ALPHA_FLOOR;
    }
    (rate / (1.0 + p_cap * cn).log2()).max(ALPHA_FLOOR)
}

/// Efficiency at equal shares where the strongest user may raise its power
/// above the rate-tight value (up to `p_cap`) to maximize efficiency.
pub fn oma_ee_fixed_alpha(c: &[f64], rate_min: &[f64], sigma2: f64, p_cap: f64) -> Result<OmaAllocation> {
    check(c, rate_min, sigma2)?;
    let kk = c.len();
    let alpha = vec![1.0 / kk as f64; kk];
    let mut ee = EeProblem::new(c, rate_min, sigma2, p_cap)?;
    for k in 0..kk {
        if alpha[k] < ee.lower[k] * (1.0 - 1e-12) {
            return Err(Error::Infeasible(
                "equal shares cannot meet the rates under the cap".into(),
            ));
        }
    }
    ee.alpha = alpha;
    ee.optimize_excess_power();
    Ok(ee.allocation())
}

/// Energy-efficiency maximizing time sharing and powers.
///
/// The user with the largest aligned gain may transmit above its rate-tight
/// power; every other user stays rate-tight. The excess power (a concave
/// fractional 1-D problem) and the shares (Dinkelbach over a concave
/// separable parametric problem) are optimized alternately from two starts,
/// equal shares and the power-minimizing shares, keeping the better result.
pub fn oma_ee_max(c: &[f64], rate_min: &[f64], sigma2: f64, p_cap: f64) -> Result<OmaAllocation> {
    check(c, rate_min, sigma2)?;
    let base = EeProblem::new(c, rate_min, sigma2, p_cap)?;
    let kk = c.len();
    let mut starts = Vec::new();
    let equal = vec![1.0 / kk as f64; kk];
    if equal.iter().zip(&base.lower).all(|(a, l)| *a >= *l) {
        starts.push(equal);
    }
    if let Ok(pm) = oma_powermin(c, rate_min, sigma2) {
        if pm.alpha.iter().zip(&base.lower).all(|(a, l)| *a >= *l) {
            starts.push(pm.alpha);
        }
    }
    if starts.is_empty() {
        starts.push(base.feasible_shares()?);
    }
    let mut best: Option<(f64, OmaAllocation)> = None;
    for alpha in starts {
        let mut prob = base.clone();
        prob.alpha = alpha;
        let value = prob.run();
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, prob.allocation()));
        }
    }
    Ok(best.expect("at least one start").1)
}

#[derive(Debug, Clone)]
struct EeProblem {
    rates: Vec<f64>,
    cn: Vec<f64>,
    c: Vec<f64>,
    /// Per-user power cap (W).
    p_cap: f64,
    excess: usize,
    lower: Vec<f64>,
    alpha: Vec<f64>,
    /// Power of the excess user (W).
    p_excess: f64,
}

const EE_REL_TOL: f64 = 1e-8;

impl EeProblem {
    fn new(c: &[f64], rate_min: &[f64], sigma2: f64, p_cap: f64) -> Result<Self> {
        if !(p_cap > 0.0) {
            return Err(Error::Domain("power cap must be positive".into()));
        }
        let kk = c.len();
        let cn: Vec<f64> = c.iter().map(|x| x / sigma2).collect();
        let excess = (0..kk).max_by(|&i, &j| c[i].total_cmp(&c[j])).unwrap_or(0);
        let lower: Vec<f64> = (0..kk).map(|k| min_share(rate_min[k], cn[k], p_cap)).collect();
        if lower.iter().sum::<f64>() > 1.0 {
            return Err(Error::Infeasible(
                "rate targets do not fit in one frame under the power cap".into(),
            ));
        }
        Ok(Self {
            rates: rate_min.to_vec(),
            cn,
            c: c.to_vec(),
            p_cap,
            excess,
            lower,
            alpha: vec![1.0 / kk as f64; kk],
            p_excess: 0.0,
        })
    }

    fn feasible_shares(&self) -> Result<Vec<f64>> {
        let slack = 1.0 - self.lower.iter().sum::<f64>();
        let kk = self.lower.len() as f64;
        Ok(self.lower.iter().map(|l| l + slack / kk).collect())
    }

    /// Rate-tight power of the excess user at share `a` (W).
    fn excess_floor(&self, a: f64) -> f64 {
        let e = self.excess;
        if self.rates[e] > 0.0 {
            slot_power(self.rates[e], a, self.cn[e])
        } else {
            0.0
        }
    }

    /// Numerator and denominator of the efficiency at `(alpha, p_excess)`.
    fn parts(&self, alpha: &[f64], p_excess: f64) -> (f64, f64) {
        let e = self.excess;
        let mut num = alpha[e] * (p_excess * self.cn[e]).ln_1p() / LN2;
        let mut den = alpha[e] * p_excess;
        for k in 0..alpha.len() {
            if k != e && self.rates[k] > 0.0 {
                num += self.rates[k];
                den += energy(self.rates[k], alpha[k], self.cn[k]);
            }
        }
        (num, den)
    }

    fn value(&self) -> f64 {
        let (n, d) = self.parts(&self.alpha, self.p_excess);
        if d > 0.0 {
            n / d
        } else {
            0.0
        }
    }

    fn optimize_excess_power(&mut self) {
        let e = self.excess;
        let lo = self.excess_floor(self.alpha[e]).min(self.p_cap);
        let alpha = self.alpha.clone();
        let f = |p: f64| {
            let (n, d) = self.parts(&alpha, p);
            if d > 0.0 {
                n / d
            } else {
                0.0
            }
        };
        self.p_excess = golden_max(f, lo, self.p_cap);
    }

    /// Dinkelbach over the shares with the excess power fixed.
    fn optimize_shares(&mut self) {
        let e = self.excess;
        let kk = self.alpha.len();
        // the excess user's share must also carry its rate at p_excess
        let rate_e = (self.p_excess * self.cn[e]).ln_1p() / LN2;
        let lower_e = if self.rates[e] > 0.0 {
            (self.rates[e] / rate_e).max(self.lower[e])
        } else {
            self.lower[e]
        };
        let others: Vec<usize> = (0..kk).filter(|&k| k != e).collect();
        let mut beta = self.value();
        for _ in 0..100 {
            let slope = rate_e - beta * self.p_excess;
            // maximize slope a_e - beta sum_{others} energy over the frame
            let inner = |a_e: f64| -> Option<(f64, Vec<f64>)> {
                let budget = 1.0 - a_e;
                let rates: Vec<f64> = others.iter().map(|&k| self.rates[k]).collect();
                let cn: Vec<f64> = others.iter().map(|&k| self.cn[k]).collect();
                let lower: Vec<f64> = others.iter().map(|&k| self.lower[k]).collect();
                let shares = split_budget(&rates, &cn, &lower, budget).ok()?;
                let en: f64 = (0..others.len())
                    .map(|i| {
                        if rates[i] > 0.0 {
                            energy(rates[i], shares[i], cn[i])
                        } else {
                            0.0
                        }
                    })
                    .sum();
                Some((slope * a_e - beta * en, shares))
            };
            let hi = 1.0 - others.iter().map(|&k| self.lower[k]).sum::<f64>();
            if lower_e > hi {
                return;
            }
            // The share problem is concave and separable: at the optimum every
            // other user's marginal energy cost equals slope / beta, unless the
            // excess user's share sits on a bound.
            let a_e = if others.is_empty() {
                1.0
            } else if slope <= 0.0 {
                lower_e
            } else if beta <= 0.0 {
                hi
            } else {
                let taken: f64 = others
                    .iter()
                    .map(|&k| {
                        if self.rates[k] > 0.0 {
                            share_for_multiplier(self.rates[k], self.cn[k], slope / beta, self.lower[k], 1.0)
                        } else {
                            self.lower[k]
                        }
                    })
                    .sum();
                (1.0 - taken).clamp(lower_e, hi)
            };
            let Some((_, shares)) = inner(a_e) else {
                return;
            };
            let mut alpha = vec![0.0; kk];
            alpha[e] = a_e;
            for (i, &k) in others.iter().enumerate() {
                alpha[k] = shares[i];
            }
            let (n, d) = self.parts(&alpha, self.p_excess);
            let f = n - beta * d;
            if f < 0.0 {
                break;
            }
            let next = n / d;
            let improved = next >= self.value();
            if improved {
                self.alpha = alpha;
            }
            if f <= 1e-12 * n.abs().max(1.0) || !improved || next <= beta {
                break;
            }
            beta = next;
        }
    }

    fn run(&mut self) -> f64 {
        self.optimize_excess_power();
        let mut value = self.value();
        for _ in 0..200 {
            self.optimize_shares();
            self.optimize_excess_power();
            let next = self.value();
            let done = (next - value).abs() <= EE_REL_TOL * value.abs();
            value = value.max(next);
            if done {
                break;
            }
        }
        value
    }

    fn allocation(&self) -> OmaAllocation {
        let kk = self.alpha.len();
        let p = (0..kk)
            .map(|k| {
                if k == self.excess {
                    self.p_excess
                } else if self.rates[k] > 0.0 {
                    slot_power(self.rates[k], self.alpha[k], self.cn[k])
                } else {
                    0.0
                }
            })
            .collect();
        OmaAllocation {
            alpha: self.alpha.clone(),
            p,
            c: self.c.clone(),
        }
    }
}

/// Energy-minimizing split of `budget` among users, zero-rate users pinned
/// to their lower bound.
fn split_budget(rates: &[f64], cn: &[f64], lower: &[f64], budget: f64) -> Result<Vec<f64>> {
    let active: Vec<usize> = (0..rates.len()).filter(|&k| rates[k] > 0.0).collect();
    let idle: f64 = (0..rates.len()).filter(|&k| rates[k] <= 0.0).map(|k| lower[k]).sum();
    let mut out = lower.to_vec();
    if active.is_empty() {
        return Ok(out);
    }
    let r: Vec<f64> = active.iter().map(|&k| rates[k]).collect();
    let c: Vec<f64> = active.iter().map(|&k| cn[k]).collect();
    let l: Vec<f64> = active.iter().map(|&k| lower[k]).collect();
    let shares = simplex_energy_min(&r, &c, &l, budget - idle)?;
    for (i, &k) in active.iter().enumerate() {
        out[k] = shares[i];
    }
    Ok(out)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    if !(hi > lo) {
        return lo;
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if b - a <= 1e-14 * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let mid = 0.5 * (a + b);
    // the interval ends can beat the interior when the maximum sits on a bound
    [lo, mid, hi]
        .into_iter()
        .max_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_user_takes_whole_frame() {
        let a = oma_powermin(&[2.0], &[1.0], 0.5).unwrap();
        assert_eq!(a.alpha, vec![1.0]);
        assert!((a.p[0] - 0.5 * 1.0 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_users_split_evenly() {
        let a = oma_powermin(&[3.0, 3.0], &[0.7, 0.7], 1.0).unwrap();
        assert_eq!(a.alpha[0], a.alpha[1]);
        assert!((a.alpha[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_rates_get_even_split_and_no_power() {
        let a = oma_powermin(&[3.0, 1.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(a.alpha, vec![0.5, 0.5]);
        assert_eq!(a.p, vec![0.0, 0.0]);
    }

    #[test]
    fn stationarity_function_is_monotone() {
        let mut last = f64::NEG_INFINITY;
        for i in 1..=1000 {
            let d = energy_deriv(1.3, i as f64 / 1000.0, 2.0);
            assert!(d >= last);
            last = d;
        }
        assert!(last < 0.0);
    }

    #[test]
    fn rates_are_met_with_equality() {
        let c = [4.0, 0.3, 1.1];
        let r = [0.2, 1.0, 0.5];
        for a in [
            oma_powermin(&c, &r, 0.1).unwrap(),
            oma_equal_share(&c, &r, 0.1).unwrap(),
        ] {
            assert!((a.alpha.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (got, want) in a.rates(0.1).iter().zip(r) {
                assert!((got - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0);
        assert!((x - 0.3).abs() < 1e-7);
        assert_eq!(golden_max(|x| x, 0.0, 2.0), 2.0);
    }

    #[test]
    fn ee_beats_equal_share_and_powermin() {
        let c = [5e3, 8e2];
        let r = [0.2, 0.2];
        let s2 = 1e-3;
        let best = oma_ee_max(&c, &r, s2, 1.0).unwrap();
        let eq = oma_ee_fixed_alpha(&c, &r, s2, 1.0).unwrap();
        let pm = oma_powermin(&c, &r, s2).unwrap();
        assert!(best.ee(s2) >= eq.ee(s2) * (1.0 - 1e-12));
        assert!(best.ee(s2) >= pm.ee(s2) * (1.0 - 1e-12));
        for (got, want) in best.rates(s2).iter().zip(r) {
            assert!(*got >= want - 1e-9);
        }
        assert!(best.p.iter().all(|p| *p <= 1.0 + 1e-12));
    }
}
