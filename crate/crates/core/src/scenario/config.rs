//! TOML scenario files.
//!
//! Keys mirror [`ScenarioConfig`] field names. Power-like and ratio-like
//! keys take either a bare number (watts / linear) or a string with an
//! explicit unit suffix:
//!
//! ```toml
//! reflectors = 32
//! dist_irs_bs = 75
//! dist_user_irs = [10, 20]
//! dist_user_bs = [30, 50]
//! eta0 = "-30 dB"
//! rician_irs_bs = 2.2
//! noise_power = "-114 dBm"
//! p_max = "30 dBm"
//! rate_min = [0.2, 0.2]
//!
//! [solver.penalty]
//! rho0 = 1.0
//! ```

use serde::Deserialize;

use super::{LosAngles, ScenarioConfig, SolverConfig};
use crate::{Error, Result};

/// `x` dBm in watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantityKind {
    /// Watts; accepts `W`, `mW`, `dBm`, `dBW`.
    Power,
    /// Linear ratio; accepts `dB`.
    Ratio,
    /// Meters; accepts an optional `m`.
    Distance,
}

/// Parses `"<number> <unit>"` into the base unit of `kind`.
pub fn parse_quantity(text: &str, kind: QuantityKind) -> Result<f64> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    // "1e-3" keeps its exponent; a trailing unit starts at the first other letter.
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot read a number from `{text}`")))?;
    let unit = unit.trim();
    let out = match (kind, unit) {
        (_, "") => value,
        (QuantityKind::Power, "W") => value,
        (QuantityKind::Power, "mW") => value * 1e-3,
        (QuantityKind::Power, "dBm") => dbm_to_watts(value),
        (QuantityKind::Power, "dBW") => 10f64.powf(value / 10.0),
        (QuantityKind::Ratio, "dB") => 10f64.powf(value / 10.0),
        (QuantityKind::Distance, "m") => value,
        _ => {
            return Err(Error::Parse(format!(
                "unit `{unit}` not accepted for a {kind:?} quantity (`{text}`)"
            )))
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Quantity {
    Number(f64),
    Text(String),
}

impl Quantity {
    fn resolve(&self, kind: QuantityKind) -> Result<f64> {
        match self {
            Quantity::Number(x) => Ok(*x),
            Quantity::Text(s) if s.trim().eq_ignore_ascii_case("inf") => Ok(f64::INFINITY),
            Quantity::Text(s) => parse_quantity(s, kind),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    reflectors: Option<usize>,
    dist_irs_bs: Option<Quantity>,
    dist_user_irs: Option<Vec<Quantity>>,
    dist_user_bs: Option<Vec<Quantity>>,
    exp_user_bs: Option<f64>,
    exp_irs_user: Option<f64>,
    exp_irs_bs: Option<f64>,
    eta0: Option<Quantity>,
    rician_irs_bs: Option<Quantity>,
    rician_user_irs: Option<Quantity>,
    noise_power: Option<Quantity>,
    rate_min: Option<Vec<f64>>,
    p_max: Option<Quantity>,
    seed: Option<u64>,
    los_angles: Option<LosAngles>,
    solver: Option<SolverConfig>,
}

fn resolve_all(v: &[Quantity], kind: QuantityKind) -> Result<Vec<f64>> {
    v.iter().map(|q| q.resolve(kind)).collect()
}

/// Missing keys fall back to [`ScenarioConfig::default`].
pub(super) fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    apply(file, ScenarioConfig::default())
}

/// Same as [`from_toml_str`] for an already parsed table.
pub(super) fn from_toml_value(value: toml::Value) -> Result<ScenarioConfig> {
    let file: ScenarioFile = value
        .try_into()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    apply(file, ScenarioConfig::default())
}

fn apply(f: ScenarioFile, mut cfg: ScenarioConfig) -> Result<ScenarioConfig> {
    use QuantityKind::*;
    if let Some(x) = f.reflectors {
        cfg.reflectors = x;
    }
    if let Some(q) = f.dist_irs_bs {
        cfg.dist_irs_bs = q.resolve(Distance)?;
    }
    if let Some(v) = f.dist_user_irs {
        cfg.dist_user_irs = resolve_all(&v, Distance)?;
    }
    if let Some(v) = f.dist_user_bs {
        cfg.dist_user_bs = resolve_all(&v, Distance)?;
    }
    if let Some(x) = f.exp_user_bs {
        cfg.exp_user_bs = x;
    }
    if let Some(x) = f.exp_irs_user {
        cfg.exp_irs_user = x;
    }
    if let Some(x) = f.exp_irs_bs {
        cfg.exp_irs_bs = x;
    }
    if let Some(q) = f.eta0 {
        cfg.eta0 = q.resolve(Ratio)?;
    }
    if let Some(q) = f.rician_irs_bs {
        cfg.rician_irs_bs = q.resolve(Ratio)?;
    }
    if let Some(q) = f.rician_user_irs {
        cfg.rician_user_irs = q.resolve(Ratio)?;
    }
    if let Some(q) = f.noise_power {
        cfg.noise_power = q.resolve(Power)?;
    }
    if let Some(v) = f.rate_min {
        cfg.rate_min = v;
    }
    if let Some(q) = f.p_max {
        cfg.p_max = q.resolve(Power)?;
    }
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
    if f.los_angles.is_some() {
        cfg.los_angles = f.los_angles;
    }
    if let Some(s) = f.solver {
        cfg.solver = s;
    }
    // A user count change without explicit rates keeps the first rate.
    if cfg.rate_min.len() != cfg.users() && !cfg.rate_min.is_empty() {
        let r = cfg.rate_min[0];
        cfg.rate_min = vec![r; cfg.users()];
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_floor_conversion() {
        let w = dbm_to_watts(-114.0);
        assert!((w - 10f64.powf(-14.4)).abs() < 1e-28);
        assert!((w - 3.981_071_705_534_97e-15).abs() < 1e-27);
    }

    #[test]
    fn unit_suffixes() {
        use QuantityKind::*;
        assert_eq!(parse_quantity("2.5", Power).unwrap(), 2.5);
        assert!((parse_quantity("30 dBm", Power).unwrap() - 1.0).abs() < 1e-12);
        assert!((parse_quantity("0 dBW", Power).unwrap() - 1.0).abs() < 1e-12);
        assert!((parse_quantity("5mW", Power).unwrap() - 5e-3).abs() < 1e-18);
        assert!((parse_quantity("-30 dB", Ratio).unwrap() - 1e-3).abs() < 1e-15);
        assert_eq!(parse_quantity("1e-3", Ratio).unwrap(), 1e-3);
        assert_eq!(parse_quantity("75 m", Distance).unwrap(), 75.0);
        assert!(parse_quantity("3 dBm", Ratio).is_err());
        assert!(parse_quantity("abc", Power).is_err());
    }

    #[test]
    fn file_overrides_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            reflectors = 8
            dist_user_irs = [10, 20, 40]
            dist_user_bs = [30, 50, 200]
            rate_min = [2.5, 2.5, 2.5]
            noise_power = "-114 dBm"
            eta0 = "-30 dB"
            p_max = 0.5
            seed = 42

            [solver.penalty]
            rho0 = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.reflectors, 8);
        assert_eq!(cfg.users(), 3);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.p_max, 0.5);
        assert!((cfg.eta0 - 1e-3).abs() < 1e-15);
        assert!((cfg.noise_power - 3.981e-15).abs() < 1e-17);
        assert_eq!(cfg.solver.penalty.rho0, 2.0);
        assert_eq!(cfg.solver.penalty.theta_rho, 10.0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml_str("dist_irs_bs = -3").is_err());
        assert!(ScenarioConfig::from_toml_str("noise_power = \"-114 dB\"").is_err());
    }
}
