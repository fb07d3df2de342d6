//! Fast self-check: solver invariants on a few channel draws.
//!
//! Meant as a smoke test for a build or a scenario file; the full oracle
//! comparisons live in the test suite.

use rand::Rng;

use crate::ccm::PhasePoint;
use crate::ee::{dinkelbach, sum_rate};
use crate::noma_power::{achieved_rates, solve_power_lp};
use crate::oma;
use crate::penalty::ConstraintSet;
use crate::scenario::{sample_channels, trial_rng, RngPurpose, ScenarioConfig};
use crate::sdr::{build_lifted, extract_rank_one, lift};
use crate::{Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error (or a failure message).
    pub detail: String,
}

fn worst(name: &'static str, err: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        passed: err <= tol,
        detail: format!("max error {err:.3e} (tol {tol:.0e})"),
    }
}

fn failed(name: &'static str, e: crate::Error) -> CheckResult {
    CheckResult {
        name,
        passed: false,
        detail: e.to_string(),
    }
}

/// Runs every check on `draws` channel realizations of `cfg`.
pub fn run_checks(cfg: &ScenarioConfig, draws: u64) -> Vec<CheckResult> {
    let checks: [(&'static str, fn(&ScenarioConfig, u64) -> Result<CheckResult>); 6] = [
        ("power LP meets every rate target with equality", check_lp),
        ("per-user rates sum to the single-log sum rate", check_telescoping),
        ("constraint gradient matches finite differences", check_gradient),
        ("lifted gain equals direct gain", check_lifting),
        ("Dinkelbach gap below tolerance", check_dinkelbach),
        ("optimized OMA shares beat equal shares", check_oma),
    ];
    checks
        .iter()
        .map(|(name, f)| f(cfg, draws).unwrap_or_else(|e| failed(name, e)))
        .collect()
}

fn check_lp(cfg: &ScenarioConfig, draws: u64) -> Result<CheckResult> {
    let mut err: f64 = 0.0;
    for t in 0..draws {
        let ch = sample_channels(cfg, t)?;
        let a = ch.effective_gains(&ch.aligned_point(0));
        let r = ch.in_sic_order(&cfg.rate_min);
        let p = solve_power_lp(&a, &r, cfg.noise_power)?;
        for (got, want) in achieved_rates(&p.p, &a, cfg.noise_power).iter().zip(&r) {
            err = err.max((got - want).abs());
        }
    }
    Ok(worst("power LP meets every rate target with equality", err, 1e-9))
}

fn check_telescoping(cfg: &ScenarioConfig, draws: u64) -> Result<CheckResult> {
    let mut err: f64 = 0.0;
    for t in 0..draws {
        let ch = sample_channels(cfg, t)?;
        let mut rng = trial_rng(cfg.seed, t, RngPurpose::Diagnostics);
        let w = PhasePoint::random(&mut rng, ch.reflectors());
        let a = ch.effective_gains(&w);
        let p: Vec<f64> = a.iter().map(|_| rng.random_range(0.0..cfg.p_max)).collect();
        let total: f64 = achieved_rates(&p, &a, cfg.noise_power).iter().sum();
        err = err.max((total - sum_rate(&p, &a, cfg.noise_power)).abs());
    }
    Ok(worst("per-user rates sum to the single-log sum rate", err, 1e-10))
}

fn check_gradient(cfg: &ScenarioConfig, draws: u64) -> Result<CheckResult> {
    let mut err: f64 = 0.0;
    let h = 1e-6;
    for t in 0..draws {
        let ch = sample_channels(cfg, t)?;
        let mut rng = trial_rng(cfg.seed, t, RngPurpose::Diagnostics);
        let r = ch.in_sic_order(&cfg.rate_min);
        let p = solve_power_lp(&ch.effective_gains(&ch.aligned_point(0)), &r, cfg.noise_power)?.p;
        let cs = ConstraintSet::new(&ch, &p, &r, cfg.noise_power)?;
        let w = PhasePoint::random(&mut rng, ch.reflectors());
        let dir: Vec<C64> = (0..w.len())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let shifted = |s: f64| -> Vec<f64> {
            let v: Vec<C64> = w.as_slice().iter().zip(&dir).map(|(w, d)| w + d * s).collect();
            cs.evaluate(&v).values
        };
        let (plus, minus) = (shifted(h), shifted(-h));
        for k in 0..cs.users() {
            let g = cs.grad(&w, k);
            let analytic: f64 = g.iter().zip(&dir).map(|(g, d)| (g.conj() * d).re).sum();
            let numeric = (plus[k] - minus[k]) / (2.0 * h);
            err = err.max((analytic - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst("constraint gradient matches finite differences", err, 1e-6))
}

fn check_lifting(cfg: &ScenarioConfig, draws: u64) -> Result<CheckResult> {
    let mut err: f64 = 0.0;
    for t in 0..draws {
        let ch = sample_channels(cfg, t)?;
        let mut rng = trial_rng(cfg.seed, t, RngPurpose::Diagnostics);
        let w = PhasePoint::random(&mut rng, ch.reflectors());
        for k in 0..ch.users() {
            let direct = ch.effective_gain(&w, k);
            let lifted = build_lifted(&ch, k).gain(&w);
            err = err.max((direct - lifted).abs() / direct);
        }
        let back = extract_rank_one(&lift(&w))?;
        err = err.max(back.distance(&w));
    }
    Ok(worst("lifted gain equals direct gain", err, 1e-10))
}

fn check_dinkelbach(cfg: &ScenarioConfig, draws: u64) -> Result<CheckResult> {
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    let mut eps = 0.0;
    for t in 0..draws {
        let ch = sample_channels(cfg, t)?;
        let a = ch.effective_gains(&ch.aligned_point(0));
        let r = ch.in_sic_order(&cfg.rate_min);
        let (_, st) = dinkelbach(&a, &r, cfg.noise_power, cfg.p_max, &cfg.solver.dinkelbach)?;
        worst_gap = worst_gap.max(st.f);
        eps = st.eps;
    }
    Ok(CheckResult {
        name: "Dinkelbach gap below tolerance",
        passed: worst_gap <= eps,
        detail: format!("largest final gap {worst_gap:.3e} (eps {eps:.0e})"),
    })
}

fn check_oma(cfg: &ScenarioConfig, draws: u64) -> Result<CheckResult> {
    let mut worst_ratio: f64 = 0.0;
    for t in 0..draws {
        let ch = sample_channels(cfg, t)?;
        let c = oma::aligned_gains(&ch);
        let r = ch.in_sic_order(&cfg.rate_min);
        let opt = oma::oma_powermin(&c, &r, cfg.noise_power)?.average_power();
        let eq = oma::oma_equal_share(&c, &r, cfg.noise_power)?.average_power();
        worst_ratio = worst_ratio.max(opt / eq);
    }
    Ok(CheckResult {
        name: "optimized OMA shares beat equal shares",
        passed: worst_ratio <= 1.0 + 1e-9,
        detail: format!("largest optimized/equal power ratio {worst_ratio:.6}"),
    })
}
