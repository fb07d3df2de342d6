//! Complex circle manifold: the product of `L` unit circles in `C^L`.
//!
//! Points are unit-modulus vectors, tangent vectors at `w` satisfy
//! `Re(xi_i * conj(w_i)) = 0`, the metric is the real inner product
//! `Re(x^H y)` inherited from the embedding, and the retraction is
//! element-wise normalization.
//!
//! [`minimize`] is a Riemannian line-search solver (steepest descent or
//! Polak-Ribiere conjugate gradient) with Armijo backtracking. Objectives
//! hand back Euclidean gradients in the convention
//! `d/dRe(w_i) + j d/dIm(w_i)`; the solver projects them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{SolverTrace, TraceRecord};
use crate::{Error, Result, C64};

/// Tolerance on `| |w_i| - 1 |` accepted by [`PhasePoint::new`].
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

/// A point on the complex circle manifold (IRS reflection coefficients).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    w: Vec<C64>,
}

impl PhasePoint {
    /// Wraps `w`, checking the unit-modulus invariant.
    pub fn new(w: Vec<C64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Domain("phase point must have at least one entry".into()));
        }
        for (i, wi) in w.iter().enumerate() {
            let m = wi.norm();
            if !m.is_finite() || (m - 1.0).abs() > UNIT_MODULUS_TOL {
                return Err(Error::Domain(format!("|w_{i}| = {m} is not unit modulus")));
            }
        }
        Ok(Self { w })
    }

    /// Projects every entry onto the unit circle. Zero entries map to 1.
    pub fn normalized(v: &[C64]) -> Self {
        let w = v
            .iter()
            .map(|&x| {
                let m = x.norm();
                if m > 0.0 && m.is_finite() {
                    x / m
                } else {
                    C64::new(1.0, 0.0)
                }
            })
            .collect();
        Self { w }
    }

    pub fn from_phases(theta: &[f64]) -> Self {
        Self {
            w: theta.iter().map(|&t| C64::from_polar(1.0, t)).collect(),
        }
    }

    pub fn ones(len: usize) -> Self {
        Self {
            w: vec![C64::new(1.0, 0.0); len],
        }
    }

    /// Uniformly random phases.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        let theta: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        Self::from_phases(&theta)
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.w
    }

    pub fn phases(&self) -> Vec<f64> {
        self.w.iter().map(|x| x.arg()).collect()
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.w
    }

    /// Euclidean distance in the embedding space.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// A tangent vector, expressed in the ambient coordinates of `C^L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    xi: Vec<C64>,
}

impl TangentVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            xi: vec![C64::new(0.0, 0.0); len],
        }
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.xi
    }

    pub fn norm(&self) -> f64 {
        norm(&self.xi)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            xi: self.xi.iter().map(|x| x * t).collect(),
        }
    }

    /// Largest per-element magnitude.
    pub fn max_abs(&self) -> f64 {
        self.xi.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Real inner product `Re(a^H b)`.
pub fn inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthogonal projection of `v` onto the tangent space at `w`:
/// `v - Re(v ⊙ conj(w)) ⊙ w`.
pub fn project_tangent(w: &PhasePoint, v: &[C64]) -> TangentVector {
    debug_assert_eq!(w.len(), v.len());
    let xi = w
        .as_slice()
        .iter()
        .zip(v)
        .map(|(&wi, &vi)| vi - wi * (vi * wi.conj()).re)
        .collect();
    TangentVector { xi }
}

/// Metric-projection retraction `(w_i + xi_i) / |w_i + xi_i|`.
///
/// Fails when some `w_i + xi_i` vanishes; the caller should shrink the step.
pub fn retract(w: &PhasePoint, xi: &TangentVector) -> Result<PhasePoint> {
    let mut out = Vec::with_capacity(w.len());
    for (i, (&wi, &x)) in w.as_slice().iter().zip(&xi.xi).enumerate() {
        let s = wi + x;
        let m = s.norm();
        if !(m > f64::MIN_POSITIVE) || !m.is_finite() {
            return Err(Error::Domain(format!(
                "retraction degenerate at element {i}: step too long"
            )));
        }
        out.push(s / m);
    }
    Ok(PhasePoint { w: out })
}

/// Riemannian gradient: tangent projection of the Euclidean gradient.
pub fn riemannian_grad(w: &PhasePoint, egrad: &[C64]) -> TangentVector {
    project_tangent(w, egrad)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchDirection {
    SteepestDescent,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcmSolverParams {
    /// Stop once the Riemannian gradient norm is at most this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant `c1`.
    pub armijo_c1: f64,
    /// Step shrink factor applied on every rejected trial.
    pub backtrack: f64,
    /// Largest per-element tangent displacement tried on the first iteration.
    pub initial_step: f64,
    pub max_backtracks: usize,
    pub direction: SearchDirection,
}

impl Default for CcmSolverParams {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iters: 500,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
            direction: SearchDirection::ConjugateGradient,
        }
    }
}

impl CcmSolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::Config("grad_tol must be positive".into()));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::Config("armijo_c1 must lie in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::Config("initial_step must be positive".into()));
        }
        Ok(())
    }
}

/// Why [`minimize`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    /// Backtracking could not find a decreasing step.
    LineSearchStalled,
}

#[derive(Debug, Clone)]
pub struct CcmOutcome {
    pub point: PhasePoint,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: SolverTrace,
}

/// Minimizes `f` over the manifold starting from `w0`.
///
/// `f` returns the objective value and its Euclidean gradient. A value of
/// `+inf` marks a point outside the objective's domain: trial steps landing
/// there are rejected. NaN anywhere, or a non-finite value at an accepted
/// point, aborts with [`Error::NonFinite`].
pub fn minimize<F>(mut f: F, w0: PhasePoint, params: &CcmSolverParams) -> Result<CcmOutcome>
where
    F: FnMut(&PhasePoint) -> Result<(f64, Vec<C64>)>,
{
    params.validate()?;
    let mut w = w0;
    let (mut fx, eg) = f(&w)?;
    check_finite(fx, &eg, "initial point")?;
    let mut grad = riemannian_grad(&w, &eg);
    let mut gnorm = grad.norm();
    let mut trace = SolverTrace::default();
    trace.push(TraceRecord {
        iteration: 0,
        objective: fx,
        grad_norm: gnorm,
        violation: None,
        penalty: None,
        step: 0.0,
    });

    let mut dir = grad.scaled(-1.0);
    let mut last_disp = params.initial_step;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for it in 1..=params.max_iters {
        if gnorm <= params.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut slope = inner(grad.as_slice(), dir.as_slice());
        if !(slope < 0.0) {
            dir = grad.scaled(-1.0);
            slope = -gnorm * gnorm;
        }
        let dmax = dir.max_abs();
        let mut t = last_disp.min(params.initial_step) / dmax;
        let mut accepted = None;
        for _ in 0..params.max_backtracks {
            if let Ok(trial) = retract(&w, &dir.scaled(t)) {
                let (ft, gt) = f(&trial)?;
                if ft.is_nan() {
                    return Err(Error::NonFinite("objective is NaN at trial point".into()));
                }
                if ft <= fx + params.armijo_c1 * t * slope {
                    check_finite(ft, &gt, "accepted point")?;
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            t *= params.backtrack;
        }
        let Some((w_new, f_new, eg_new)) = accepted else {
            termination = Termination::LineSearchStalled;
            break;
        };
        iterations = it;
        last_disp = 2.0 * t * dmax;

        let grad_new = riemannian_grad(&w_new, &eg_new);
        dir = match params.direction {
            SearchDirection::SteepestDescent => grad_new.scaled(-1.0),
            SearchDirection::ConjugateGradient => {
                let g_old = project_tangent(&w_new, grad.as_slice());
                let d_old = project_tangent(&w_new, dir.as_slice());
                let num: f64 =
                    inner(grad_new.as_slice(), grad_new.as_slice()) - inner(grad_new.as_slice(), g_old.as_slice());
                let beta = if it % w_new.len().max(1) == 0 {
                    0.0
                } else {
                    (num / (gnorm * gnorm)).max(0.0)
                };
                let xi = grad_new
                    .as_slice()
                    .iter()
                    .zip(d_old.as_slice())
                    .map(|(g, d)| -g + d * beta)
                    .collect();
                TangentVector { xi }
            }
        };
        w = w_new;
        fx = f_new;
        grad = grad_new;
        gnorm = grad.norm();
        trace.push(TraceRecord {
            iteration: it,
            objective: fx,
            grad_norm: gnorm,
            violation: None,
            penalty: None,
            step: t,
        });
    }
    if gnorm <= params.grad_tol {
        termination = Termination::GradientTolerance;
    }

    Ok(CcmOutcome {
        point: w,
        value: fx,
        grad_norm: gnorm,
        iterations,
        termination,
        trace,
    })
}

fn check_finite(value: f64, grad: &[C64], at: &str) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective = {value} at {at}")));
    }
    if grad.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) {
        return Err(Error::NonFinite(format!("gradient not finite at {at}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn projection_of_normal_and_tangent_directions() {
        let w = PhasePoint::ones(1);
        assert_eq!(project_tangent(&w, &[c(1.0, 0.0)]).as_slice(), &[c(0.0, 0.0)]);
        assert_eq!(project_tangent(&w, &[c(0.0, 1.0)]).as_slice(), &[c(0.0, 1.0)]);
    }

    #[test]
    fn projection_is_idempotent_and_tangent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w = PhasePoint::random(&mut rng, 7);
            let v = random_vec(&mut rng, 7);
            let once = project_tangent(&w, &v);
            let twice = project_tangent(&w, once.as_slice());
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                assert!((a - b).norm() <= 1e-12);
            }
            for (xi, wi) in once.as_slice().iter().zip(w.as_slice()) {
                assert!((xi * wi.conj()).re.abs() <= 1e-10);
            }
            assert!(once.norm() <= norm(&v) + 1e-12);
        }
    }

    #[test]
    fn retraction_closed_form() {
        let w = PhasePoint::ones(1);
        let t = 0.7;
        let r = retract(&w, &TangentVector { xi: vec![c(0.0, t)] }).unwrap();
        let expect = c(1.0, t) / (1.0 + t * t).sqrt();
        assert!((r.as_slice()[0] - expect).norm() < 1e-15);
        let same = retract(&w, &TangentVector::zeros(1)).unwrap();
        assert_eq!(same, w);
    }

    #[test]
    fn retraction_rejects_antipodal_step() {
        let w = PhasePoint::ones(2);
        let xi = TangentVector {
            xi: vec![c(-1.0, 0.0), c(0.0, 0.0)],
        };
        assert!(retract(&w, &xi).is_err());
    }

    #[test]
    fn radial_gradient_projects_to_zero() {
        let w = PhasePoint::from_phases(&[0.3, -1.2, 2.0]);
        let eg: Vec<C64> = w.as_slice().iter().map(|x| x * 2.5).collect();
        assert!(riemannian_grad(&w, &eg).norm() < 1e-14);
    }

    #[test]
    fn phase_point_rejects_non_unit_entries() {
        assert!(PhasePoint::new(vec![c(1.0, 1.0)]).is_err());
        assert!(PhasePoint::new(vec![]).is_err());
        assert!(PhasePoint::new(vec![c(0.0, 1.0)]).is_ok());
    }

    #[test]
    fn constant_objective_stops_immediately() {
        let w0 = PhasePoint::from_phases(&[0.1, 0.2]);
        let out = minimize(|_| Ok((3.0, vec![c(0.0, 0.0); 2])), w0.clone(), &Default::default()).unwrap();
        assert_eq!(out.point, w0);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.termination, Termination::GradientTolerance);
    }

    #[test]
    fn distance_to_ones_converges_to_ones() {
        // sum |w_i - 1|^2 = 2L - 2 Re(sum w_i); gradient 2 (w - 1).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w0 = PhasePoint::random(&mut rng, 6);
        for direction in [SearchDirection::SteepestDescent, SearchDirection::ConjugateGradient] {
            let params = CcmSolverParams {
                direction,
                max_iters: 2000,
                ..Default::default()
            };
            let out = minimize(
                |w| {
                    let v = w.as_slice().iter().map(|x| (x - 1.0).norm_sqr()).sum();
                    let g = w.as_slice().iter().map(|x| (x - 1.0) * 2.0).collect();
                    Ok((v, g))
                },
                w0.clone(),
                &params,
            )
            .unwrap();
            for x in out.point.as_slice() {
                assert!((x - 1.0).norm() < 1e-6, "{x}");
            }
        }
    }
}
