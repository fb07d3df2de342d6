//! System parameters, Rician channel generation and SIC user ordering.
//!
//! All powers are stored in watts and all gains as linear power ratios.
//! Users inside a [`ChannelRealization`] are always sorted by their maximum
//! achievable amplitude `sum_i |g_i||h_ki| + |v_k|`, strongest first, and
//! that order is never changed afterwards.

mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ccm::{CcmSolverParams, PhasePoint};
use crate::ee::DinkelbachParams;
use crate::noma_power::AltParams;
use crate::penalty::PenaltyParams;
use crate::sdr::SdpParams;
use crate::{Error, Result, C64};

pub use config::{dbm_to_watts, parse_quantity, QuantityKind};

/// Independent random streams derived from one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngPurpose {
    Channel,
    InitialPhases,
    LosAngles,
    /// Random probes used by self-checks.
    Diagnostics,
}

impl RngPurpose {
    fn salt(self) -> u64 {
        match self {
            RngPurpose::Channel => 0x6368_616e_6e65_6c00,
            RngPurpose::InitialPhases => 0x7068_6173_6573_0000,
            RngPurpose::LosAngles => 0x6c6f_7361_6e67_6c65,
            RngPurpose::Diagnostics => 0x6469_6167_0000_0000,
        }
    }
}

/// Generator for `(seed, trial, purpose)`; independent of execution order.
pub fn trial_rng(seed: u64, trial: u64, purpose: RngPurpose) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ purpose.salt());
    rng.set_stream(trial);
    rng
}

/// Angles (radians) of the uniform-linear-array LoS responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosAngles {
    pub irs_bs: f64,
    pub user_irs: Vec<f64>,
}

impl LosAngles {
    /// Per-link angles drawn uniformly from `[-pi/2, pi/2)` by the seed.
    pub fn from_seed(seed: u64, users: usize) -> Self {
        let mut rng = trial_rng(seed, 0, RngPurpose::LosAngles);
        let half_pi = std::f64::consts::FRAC_PI_2;
        let irs_bs = rng.random_range(-half_pi..half_pi);
        let user_irs = (0..users).map(|_| rng.random_range(-half_pi..half_pi)).collect();
        Self { irs_bs, user_irs }
    }
}

/// How the alternating loops pick their starting phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Random,
    AlignedToFirst,
}

/// Algorithmic knobs shared by every solver stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub penalty: PenaltyParams,
    pub alt: AltParams,
    pub dinkelbach: DinkelbachParams,
    pub sdp: SdpParams,
    pub init: InitKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyParams::default(),
            alt: AltParams::default(),
            dinkelbach: DinkelbachParams::default(),
            sdp: SdpParams::default(),
            init: InitKind::Random,
        }
    }
}

impl SolverConfig {
    pub fn inner(&self) -> &CcmSolverParams {
        &self.penalty.inner
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    /// Number of IRS elements `L`.
    pub reflectors: usize,
    /// IRS to BS distance (m).
    pub dist_irs_bs: f64,
    /// User to IRS distances (m), one per user.
    pub dist_user_irs: Vec<f64>,
    /// User to BS distances (m), one per user.
    pub dist_user_bs: Vec<f64>,
    pub exp_user_bs: f64,
    pub exp_irs_user: f64,
    pub exp_irs_bs: f64,
    /// Linear path loss at the 1 m reference distance.
    pub eta0: f64,
    /// Linear Rician factors; `f64::INFINITY` means pure LoS.
    pub rician_irs_bs: f64,
    pub rician_user_irs: f64,
    /// Receiver noise power (W).
    pub noise_power: f64,
    /// Per-user minimum rates (bits/s/Hz), in configuration order.
    pub rate_min: Vec<f64>,
    /// Per-user transmit power cap (W).
    pub p_max: f64,
    pub seed: u64,
    pub los_angles: Option<LosAngles>,
    pub solver: SolverConfig,
}

impl Default for ScenarioConfig {
    /// Two-user low-rate setup: 75 m IRS-BS link, users 10/20 m from the
    /// IRS and 30/50 m from the BS, exponents 5.5 / 2.2 / 2.2, eta0 = 1e-3,
    /// Rician factors 2.2, noise -114 dBm, 0.2 bits/s/Hz per user.
    fn default() -> Self {
        Self {
            reflectors: 16,
            dist_irs_bs: 75.0,
            dist_user_irs: vec![10.0, 20.0],
            dist_user_bs: vec![30.0, 50.0],
            exp_user_bs: 5.5,
            exp_irs_user: 2.2,
            exp_irs_bs: 2.2,
            eta0: 1e-3,
            rician_irs_bs: 2.2,
            rician_user_irs: 2.2,
            noise_power: dbm_to_watts(-114.0),
            rate_min: vec![0.2, 0.2],
            p_max: 1.0,
            seed: 1,
            los_angles: None,
            solver: SolverConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Three-user variant with the 10/20/40 m and 30/50/200 m distances.
    pub fn three_users() -> Self {
        Self {
            dist_user_irs: vec![10.0, 20.0, 40.0],
            dist_user_bs: vec![30.0, 50.0, 200.0],
            rate_min: vec![0.2; 3],
            ..Self::default()
        }
    }

    pub fn users(&self) -> usize {
        self.dist_user_irs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.users();
        if k == 0 {
            return Err(Error::Config("at least one user is required".into()));
        }
        if self.reflectors == 0 {
            return Err(Error::Config("at least one reflector is required".into()));
        }
        if self.dist_user_bs.len() != k || self.rate_min.len() != k {
            return Err(Error::Config(format!(
                "per-user vectors disagree: {} IRS distances, {} BS distances, {} rates",
                k,
                self.dist_user_bs.len(),
                self.rate_min.len()
            )));
        }
        let distances = std::iter::once(&self.dist_irs_bs)
            .chain(&self.dist_user_irs)
            .chain(&self.dist_user_bs);
        for &d in distances {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("distance {d} must be positive")));
            }
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::Config("eta0 must be positive".into()));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::Config("noise power must be positive".into()));
        }
        if !(self.p_max > 0.0) {
            return Err(Error::Config("p_max must be positive".into()));
        }
        if self.rate_min.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::Config("minimum rates must be finite and >= 0".into()));
        }
        if !(self.rician_irs_bs >= 0.0) || !(self.rician_user_irs >= 0.0) {
            return Err(Error::Config("Rician factors must be >= 0".into()));
        }
        for e in [self.exp_user_bs, self.exp_irs_user, self.exp_irs_bs] {
            if !e.is_finite() {
                return Err(Error::Config("path-loss exponents must be finite".into()));
            }
        }
        if let Some(a) = &self.los_angles {
            if a.user_irs.len() != k {
                return Err(Error::Config("los_angles.user_irs needs one angle per user".into()));
            }
        }
        self.solver.penalty.validate()?;
        Ok(())
    }

    pub fn los(&self) -> LosAngles {
        self.los_angles
            .clone()
            .unwrap_or_else(|| LosAngles::from_seed(self.seed, self.users()))
    }

    /// Loads a TOML scenario file. See [`config`] for the key set.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        config::from_toml_str(text)
    }

    pub fn from_toml_value(value: toml::Value) -> Result<Self> {
        config::from_toml_value(value)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// `eta0 * d^(-alpha)` with the reference distance fixed at 1 m.
pub fn path_loss(d: f64, alpha: f64, eta0: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("path loss needs d > 0, got {d}")));
    }
    if !(eta0 > 0.0) {
        return Err(Error::Domain(format!("path loss needs eta0 > 0, got {eta0}")));
    }
    Ok(eta0 * d.powf(-alpha))
}

/// Channels in draw order, before SIC sorting.
#[derive(Debug, Clone, PartialEq)]
pub struct RawChannels {
    pub g: Vec<C64>,
    pub h: Vec<Vec<C64>>,
    pub v: Vec<C64>,
}

impl RawChannels {
    /// Maximum achievable amplitude `sum_i |g_i||h_ki| + |v_k|` per user.
    pub fn order_keys(&self) -> Vec<f64> {
        self.h
            .iter()
            .zip(&self.v)
            .map(|(hk, vk)| self.g.iter().zip(hk).map(|(g, h)| g.norm() * h.norm()).sum::<f64>() + vk.norm())
            .collect()
    }
}

/// Permutation sorting users by descending order key; ties keep draw order.
pub fn order_users(raw: &RawChannels) -> Vec<usize> {
    let keys = raw.order_keys();
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    // sort_by is stable, so equal keys stay in ascending original index.
    idx.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]));
    idx
}

/// One channel draw with users in SIC order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// IRS to BS.
    pub g: Vec<C64>,
    /// User to IRS, one vector per user.
    pub h: Vec<Vec<C64>>,
    /// Direct user to BS.
    pub v: Vec<C64>,
    pub order_key: Vec<f64>,
    /// Configuration index of each sorted user.
    pub user_index: Vec<usize>,
}

impl ChannelRealization {
    pub fn from_raw(raw: RawChannels) -> Result<Self> {
        let keys = raw.order_keys();
        if keys.iter().any(|k| !k.is_finite()) {
            return Err(Error::NonFinite("channel order key".into()));
        }
        let perm = order_users(&raw);
        Ok(Self {
            g: raw.g,
            h: perm.iter().map(|&i| raw.h[i].clone()).collect(),
            v: perm.iter().map(|&i| raw.v[i]).collect(),
            order_key: perm.iter().map(|&i| keys[i]).collect(),
            user_index: perm,
        })
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn reflectors(&self) -> usize {
        self.g.len()
    }

    /// Reorders a per-user configuration vector into SIC order.
    pub fn in_sic_order<T: Clone>(&self, per_user: &[T]) -> Vec<T> {
        self.user_index.iter().map(|&i| per_user[i].clone()).collect()
    }

    /// Cascaded channel `h_k ⊙ g`, so that `g^T diag(w) h_k = cascade^T w`.
    pub fn cascade(&self, k: usize) -> Vec<C64> {
        self.h[k].iter().zip(&self.g).map(|(h, g)| h * g).collect()
    }

    /// Effective amplitude `g^T diag(w) h_k + v_k`.
    pub fn effective_amplitude(&self, w: &PhasePoint, k: usize) -> C64 {
        self.g
            .iter()
            .zip(&self.h[k])
            .zip(w.as_slice())
            .map(|((g, h), w)| g * w * h)
            .sum::<C64>()
            + self.v[k]
    }

    /// `|g^T diag(w) h_k + v_k|^2`.
    pub fn effective_gain(&self, w: &PhasePoint, k: usize) -> f64 {
        self.effective_amplitude(w, k).norm_sqr()
    }

    pub fn effective_gains(&self, w: &PhasePoint) -> Vec<f64> {
        (0..self.users()).map(|k| self.effective_gain(w, k)).collect()
    }

    /// Phases that co-phase every reflected path of user `k` with `v_k`.
    pub fn aligned_point(&self, k: usize) -> PhasePoint {
        let tv = self.v[k].arg();
        let theta: Vec<f64> = self
            .g
            .iter()
            .zip(&self.h[k])
            .map(|(g, h)| tv - g.arg() - h.arg())
            .collect();
        PhasePoint::from_phases(&theta)
    }

    /// Interference-free aligned gain of user `k` (the squared order key).
    pub fn aligned_gain(&self, k: usize) -> f64 {
        self.order_key[k] * self.order_key[k]
    }

    /// Copy with every effective amplitude divided by `scale` (gains by
    /// `scale^2`); the cascaded factors `g` and `h_k` each take `sqrt(scale)`.
    pub fn scaled(&self, scale: f64) -> Self {
        let inv = 1.0 / scale;
        Self {
            g: self.g.iter().map(|x| x * inv.sqrt()).collect(),
            h: self
                .h
                .iter()
                .map(|hk| hk.iter().map(|x| x * inv.sqrt()).collect())
                .collect(),
            v: self.v.iter().map(|x| x * inv).collect(),
            order_key: self.order_key.iter().map(|x| x * inv).collect(),
            user_index: self.user_index.clone(),
        }
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rician_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, gain: f64, factor: f64, angle: f64) -> Vec<C64> {
    let (los, nlos) = if factor.is_infinite() {
        (gain.sqrt(), 0.0)
    } else {
        ((gain * factor / (factor + 1.0)).sqrt(), (gain / (factor + 1.0)).sqrt())
    };
    let phase_step = std::f64::consts::PI * angle.sin();
    (0..len)
        .map(|i| {
            let steering = C64::from_polar(1.0, phase_step * i as f64);
            let scatter = complex_normal(rng);
            steering * los + scatter * nlos
        })
        .collect()
}

/// Draws `(g, h_k, v_k)` for trial `trial`, users sorted for SIC.
pub fn sample_raw(cfg: &ScenarioConfig, trial: u64) -> Result<RawChannels> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, trial, RngPurpose::Channel);
    let angles = cfg.los();
    let l = cfg.reflectors;
    let pl_ib = path_loss(cfg.dist_irs_bs, cfg.exp_irs_bs, cfg.eta0)?;
    let g = rician_vector(&mut rng, l, pl_ib, cfg.rician_irs_bs, angles.irs_bs);
    let mut h = Vec::with_capacity(cfg.users());
    let mut v = Vec::with_capacity(cfg.users());
    for k in 0..cfg.users() {
        let pl_ui = path_loss(cfg.dist_user_irs[k], cfg.exp_irs_user, cfg.eta0)?;
        h.push(rician_vector(
            &mut rng,
            l,
            pl_ui,
            cfg.rician_user_irs,
            angles.user_irs[k],
        ));
        let pl_ub = path_loss(cfg.dist_user_bs[k], cfg.exp_user_bs, cfg.eta0)?;
        v.push(complex_normal(&mut rng) * pl_ub.sqrt());
    }
    Ok(RawChannels { g, h, v })
}

/// Deterministic channel realization for `(cfg.seed, trial)`.
pub fn sample_channels(cfg: &ScenarioConfig, trial: u64) -> Result<ChannelRealization> {
    ChannelRealization::from_raw(sample_raw(cfg, trial)?)
}

/// Starting phases for the alternating loops of trial `trial`.
pub fn initial_point(cfg: &ScenarioConfig, ch: &ChannelRealization, trial: u64) -> PhasePoint {
    match cfg.solver.init {
        InitKind::Random => {
            let mut rng = trial_rng(cfg.seed, trial, RngPurpose::InitialPhases);
            PhasePoint::random(&mut rng, ch.reflectors())
        }
        InitKind::AlignedToFirst => ch.aligned_point(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn path_loss_reference_values() {
        assert_eq!(path_loss(1.0, 5.5, 1e-3).unwrap(), 1e-3);
        assert!((path_loss(10.0, 2.0, 1e-3).unwrap() - 1e-5).abs() < 1e-20);
        assert!(path_loss(0.0, 2.0, 1e-3).is_err());
        assert!(path_loss(-1.0, 2.0, 1e-3).is_err());
    }

    #[test]
    fn path_loss_is_monotone() {
        let mut last = f64::INFINITY;
        for i in 1..50 {
            let p = path_loss(i as f64 * 3.0, 2.2, 1e-3).unwrap();
            assert!(p < last);
            last = p;
        }
        // Increasing the exponent lowers the gain beyond 1 m.
        assert!(path_loss(5.0, 3.0, 1e-3).unwrap() < path_loss(5.0, 2.0, 1e-3).unwrap());
    }

    #[test]
    fn single_user_order_is_identity() {
        let raw = RawChannels {
            g: vec![c(1.0, 0.0)],
            h: vec![vec![c(0.5, 0.5)]],
            v: vec![c(0.1, 0.0)],
        };
        assert_eq!(order_users(&raw), vec![0]);
    }

    #[test]
    fn direct_link_can_dominate_ordering() {
        // User 0 has the weaker IRS path but a much stronger direct link.
        let raw = RawChannels {
            g: vec![c(1.0, 0.0), c(0.0, 1.0)],
            h: vec![vec![c(0.1, 0.0), c(0.1, 0.0)], vec![c(0.5, 0.0), c(0.0, 0.5)]],
            v: vec![c(3.0, 0.0), c(0.2, 0.0)],
        };
        // keys: 0.2 + 3.0 = 3.2 and 1.0 + 0.2 = 1.2
        let keys = raw.order_keys();
        assert!((keys[0] - 3.2).abs() < 1e-12 && (keys[1] - 1.2).abs() < 1e-12);
        assert_eq!(order_users(&raw), vec![0, 1]);
        let mut swapped = raw.clone();
        swapped.h.swap(0, 1);
        swapped.v.swap(0, 1);
        assert_eq!(order_users(&swapped), vec![1, 0]);
    }

    #[test]
    fn equal_keys_keep_original_order() {
        let raw = RawChannels {
            g: vec![c(1.0, 0.0)],
            h: vec![vec![c(1.0, 0.0)]; 3],
            v: vec![c(0.5, 0.0); 3],
        };
        assert_eq!(order_users(&raw), vec![0, 1, 2]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = sample_channels(&cfg, 7).unwrap();
        let b = sample_channels(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_channels(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn users_are_sorted_descending() {
        let cfg = ScenarioConfig::three_users();
        for t in 0..20 {
            let ch = sample_channels(&cfg, t).unwrap();
            assert!(ch.order_key.windows(2).all(|w| w[0] >= w[1]));
            let mut idx = ch.user_index.clone();
            idx.sort();
            assert_eq!(idx, vec![0, 1, 2]);
        }
    }

    #[test]
    fn pure_los_has_exact_magnitude() {
        let cfg = ScenarioConfig {
            rician_irs_bs: f64::INFINITY,
            ..ScenarioConfig::default()
        };
        let ch = sample_channels(&cfg, 0).unwrap();
        let pl = path_loss(75.0, 2.2, 1e-3).unwrap().sqrt();
        for g in &ch.g {
            assert!((g.norm() - pl).abs() <= 1e-15 * pl.max(1.0));
        }
    }

    #[test]
    fn aligned_phases_reach_order_key() {
        let cfg = ScenarioConfig::three_users();
        let ch = sample_channels(&cfg, 3).unwrap();
        for k in 0..3 {
            let w = ch.aligned_point(k);
            let gain = ch.effective_gain(&w, k);
            let bound = ch.aligned_gain(k);
            assert!((gain - bound).abs() <= 1e-10 * bound);
        }
    }

    #[test]
    fn only_direct_link() {
        let ch = ChannelRealization::from_raw(RawChannels {
            g: vec![c(0.0, 0.0); 4],
            h: vec![vec![c(0.0, 0.0); 4]],
            v: vec![c(0.3, -0.4)],
        })
        .unwrap();
        let w = PhasePoint::from_phases(&[0.1, 0.5, 1.0, 2.0]);
        assert!((ch.effective_gain(&w, 0) - 0.25).abs() < 1e-15);
    }
}
