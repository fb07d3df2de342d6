//! Monte-Carlo experiments: method dispatch, presets and output.
//!
//! An [`ExperimentSpec`] lists the methods to compare, the reflector counts
//! to sweep and the number of channel draws. [`run_experiment`] produces one
//! row per `(L, trial, method)` and one aggregate row per `(L, method)`;
//! the table is written as CSV with a JSON sidecar holding the resolved spec.

pub mod check;

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ee::{alt_opt_ee, EeBeamformer};
use crate::noma_power::{alt_opt_powermin, PowerBeamformer};
use crate::oma;
use crate::scenario::{initial_point, sample_channels, ScenarioConfig};
use crate::{Error, Result};

/// Largest reflector count accepted by the harness.
pub const MAX_REFLECTORS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Powermin,
    Eemax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Access {
    Noma,
    Oma,
    OmaEqual,
}

/// Phase design for NOMA methods; ignored by the OMA baselines, which
/// always align each user in its own slot.
///
/// For `eemax`, `sdr` and `manifold` use the weighted received power as
/// the phase objective while `manifold_maxmin` reuses the max-min margin
/// objective of the power-minimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beamformer {
    Sdr,
    Manifold,
    ManifoldMaxmin,
    /// Phases aligned to the first decoded user, never updated.
    Aligned,
    /// The trial's random starting phases, never updated.
    Random,
}

fn name_of<T: Serialize>(x: &T) -> String {
    serde_json::to_value(x)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn parse_name<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_owned()))
        .map_err(|_| Error::Parse(format!("unknown {what} `{s}`")))
}

macro_rules! named_enum {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&name_of(self))
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                parse_name(s, $what)
            }
        }
    };
}

named_enum!(Problem, "problem");
named_enum!(Access, "access scheme");
named_enum!(Beamformer, "beamformer");

/// One solver stack, written `problem/access[/beamformer]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Method {
    pub problem: Problem,
    pub access: Access,
    pub beamformer: Beamformer,
}

impl Method {
    pub fn new(problem: Problem, access: Access, beamformer: Beamformer) -> Self {
        Self {
            problem,
            access,
            beamformer,
        }
    }

    fn noma(problem: Problem, beamformer: Beamformer) -> Self {
        Self::new(problem, Access::Noma, beamformer)
    }

    fn oma(problem: Problem, access: Access) -> Self {
        Self::new(problem, access, Beamformer::Aligned)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.access {
            Access::Noma => write!(f, "{}/{}/{}", self.problem, self.access, self.beamformer),
            _ => write!(f, "{}/{}", self.problem, self.access),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            [p, a] => {
                let access: Access = a.parse()?;
                if access == Access::Noma {
                    return Err(Error::Parse(format!("method `{s}` needs a beamformer")));
                }
                Ok(Method::oma(p.parse()?, access))
            }
            [p, a, b] => Ok(Method::new(p.parse()?, a.parse()?, b.parse()?)),
            _ => Err(Error::Parse(format!("method `{s}` is not problem/access[/beamformer]"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub methods: Vec<Method>,
    pub l_sweep: Vec<usize>,
    pub trials: usize,
    pub scenario: ScenarioConfig,
    /// Record wall-clock time per trial (makes output non-reproducible).
    pub timing: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    name: Option<String>,
    preset: Option<String>,
    methods: Option<Vec<Method>>,
    l_sweep: Option<Vec<usize>>,
    trials: Option<usize>,
    timing: Option<bool>,
    scenario: Option<toml::Value>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.l_sweep.is_empty() {
            return Err(Error::Config("L sweep must not be empty".into()));
        }
        if let Some(l) = self.l_sweep.iter().find(|&&l| l == 0 || l > MAX_REFLECTORS) {
            return Err(Error::Config(format!("L = {l} outside 1..={MAX_REFLECTORS}")));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        self.scenario.validate()
    }

    /// Parses a TOML experiment file.
    ///
    /// ```toml
    /// preset = "fig2a"            # optional starting point
    /// methods = ["powermin/noma/manifold", "powermin/oma"]
    /// l_sweep = [8, 16]
    /// trials = 10
    ///
    /// [scenario]                  # same keys as a scenario file
    /// seed = 7
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut spec = match &file.preset {
            Some(p) => preset(p)?,
            None => ExperimentSpec {
                name: "custom".into(),
                methods: vec![Method::noma(Problem::Powermin, Beamformer::Manifold)],
                l_sweep: vec![16],
                trials: 1,
                scenario: ScenarioConfig::default(),
                timing: false,
            },
        };
        if let Some(v) = file.scenario {
            spec.scenario = ScenarioConfig::from_toml_value(v)?;
        }
        if let Some(n) = file.name {
            spec.name = n;
        }
        if let Some(m) = file.methods {
            spec.methods = m;
        }
        if let Some(l) = file.l_sweep {
            spec.l_sweep = l;
        }
        if let Some(t) = file.trials {
            spec.trials = t;
        }
        if let Some(t) = file.timing {
            spec.timing = t;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

pub const PRESETS: [&str; 12] = [
    "fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b", "fig6a", "fig6b", "fig7a", "fig7b",
];

/// One-line description of each preset.
pub fn preset_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2a" => "sum power vs L, 2 users, 0.2 bit/s/Hz",
        "fig2b" => "sum power vs L, 3 users, 0.2 bit/s/Hz",
        "fig3a" => "NOMA energy efficiency vs L, 2 users, 0.2 bit/s/Hz",
        "fig3b" => "NOMA energy efficiency vs L, 3 users, 0.2 bit/s/Hz",
        "fig4a" => "OMA vs NOMA energy efficiency, 2 users, 0.2 bit/s/Hz",
        "fig4b" => "OMA vs NOMA energy efficiency, 3 users, 0.2 bit/s/Hz",
        "fig5a" => "sum rate vs L, 2 users, 0.2 bit/s/Hz",
        "fig5b" => "sum rate vs L, 3 users, 0.2 bit/s/Hz",
        "fig6a" => "sum power vs L, 2 users, 4 bit/s/Hz",
        "fig6b" => "sum power vs L, 3 users, 2.5 bit/s/Hz",
        "fig7a" => "energy efficiency vs L, 2 users, 4 bit/s/Hz",
        "fig7b" => "energy efficiency vs L, 3 users, 2.5 bit/s/Hz",
        _ => return None,
    })
}

/// Built-in experiment at desk scale (see [`PRESETS`]).
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    use Beamformer::*;
    use Problem::*;
    let (fig, variant) = name.split_at(name.len().saturating_sub(1));
    let three = match variant {
        "a" => false,
        "b" => true,
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    let high_rate = matches!(fig, "fig6" | "fig7");
    let mut scenario = if three {
        ScenarioConfig::three_users()
    } else {
        ScenarioConfig::default()
    };
    let rate = match (high_rate, three) {
        (false, _) => 0.2,
        (true, false) => 4.0,
        (true, true) => 2.5,
    };
    scenario.rate_min = vec![rate; scenario.users()];
    let methods = match fig {
        "fig2" | "fig6" => vec![
            Method::noma(Powermin, Manifold),
            Method::noma(Powermin, Sdr),
            Method::oma(Powermin, Access::Oma),
            Method::noma(Eemax, ManifoldMaxmin),
            Method::oma(Eemax, Access::Oma),
        ],
        "fig3" | "fig7" => vec![
            Method::noma(Eemax, Sdr),
            Method::noma(Eemax, Manifold),
            Method::noma(Eemax, ManifoldMaxmin),
            Method::noma(Powermin, Manifold),
        ],
        "fig4" => vec![
            Method::noma(Eemax, ManifoldMaxmin),
            Method::oma(Eemax, Access::Oma),
            Method::oma(Eemax, Access::OmaEqual),
            Method::oma(Powermin, Access::Oma),
        ],
        "fig5" => vec![
            Method::noma(Powermin, Manifold),
            Method::noma(Eemax, ManifoldMaxmin),
            Method::oma(Powermin, Access::Oma),
            Method::oma(Eemax, Access::Oma),
        ],
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    Ok(ExperimentSpec {
        name: name.into(),
        methods,
        l_sweep: vec![8, 16, 24, 32],
        trials: 50,
        scenario,
        timing: false,
    })
}

/// Metrics of one successful method run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    /// Sum (NOMA) or time-averaged (OMA) transmit power, W.
    pub sum_power: f64,
    /// Sum rate per watt.
    pub ee: f64,
    /// bits/s/Hz.
    pub sum_rate: f64,
    /// Alternating-loop iterations (0 for closed-form baselines).
    pub iterations: usize,
}

/// Runs `method` on trial `trial` of `cfg` (reflector count taken from `cfg`).
pub fn run_method(cfg: &ScenarioConfig, trial: u64, method: Method) -> Result<MethodOutcome> {
    let ch = sample_channels(cfg, trial)?;
    let sigma2 = cfg.noise_power;
    let rates = ch.in_sic_order(&cfg.rate_min);
    if method.access != Access::Noma {
        let c = oma::aligned_gains(&ch);
        let alloc = match (method.problem, method.access) {
            (Problem::Powermin, Access::Oma) => oma::oma_powermin(&c, &rates, sigma2)?,
            (Problem::Powermin, _) => oma::oma_equal_share(&c, &rates, sigma2)?,
            (Problem::Eemax, Access::Oma) => oma::oma_ee_max(&c, &rates, sigma2, cfg.p_max)?,
            (Problem::Eemax, _) => oma::oma_ee_fixed_alpha(&c, &rates, sigma2, cfg.p_max)?,
        };
        return Ok(MethodOutcome {
            sum_power: alloc.average_power(),
            ee: alloc.ee(sigma2),
            sum_rate: alloc.sum_rate(sigma2),
            iterations: 0,
        });
    }
    let w0 = match method.beamformer {
        Beamformer::Aligned => ch.aligned_point(0),
        _ => initial_point(cfg, &ch, trial),
    };
    let res = match method.problem {
        Problem::Powermin => {
            let bf = match method.beamformer {
                Beamformer::Sdr => PowerBeamformer::Sdr,
                Beamformer::Manifold | Beamformer::ManifoldMaxmin => PowerBeamformer::Manifold,
                Beamformer::Aligned | Beamformer::Random => PowerBeamformer::Fixed,
            };
            alt_opt_powermin(&ch, cfg, bf, w0)?
        }
        Problem::Eemax => {
            let bf = match method.beamformer {
                Beamformer::Sdr => EeBeamformer::SdrObj,
                Beamformer::Manifold => EeBeamformer::ManifoldObj,
                Beamformer::ManifoldMaxmin => EeBeamformer::ManifoldMaxmin,
                Beamformer::Aligned | Beamformer::Random => EeBeamformer::Fixed,
            };
            alt_opt_ee(&ch, cfg, bf, w0)?
        }
    };
    Ok(MethodOutcome {
        sum_power: res.sum_power(),
        ee: res.ee(),
        sum_rate: res.sum_rate(),
        iterations: res.iterations,
    })
}

/// One CSV line. `kind` is `trial` or `mean`; for `mean` rows `trial`
/// holds the number of successful trials averaged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub kind: &'static str,
    #[serde(rename = "L")]
    pub l: usize,
    pub trial: u64,
    pub method: String,
    pub status: String,
    pub sum_power_w: Option<f64>,
    pub sum_power_se: Option<f64>,
    pub ee: Option<f64>,
    pub ee_se: Option<f64>,
    pub sum_rate: Option<f64>,
    pub sum_rate_se: Option<f64>,
    pub iterations: Option<f64>,
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn status_of(e: &Error) -> String {
    match e {
        Error::Infeasible(_) => "infeasible",
        Error::Solver(_) => "solver_error",
        Error::NonFinite(_) => "non_finite",
        Error::Domain(_) => "domain_error",
        _ => "error",
    }
    .into()
}

/// Mean and standard error of the mean.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every `(L, trial, method)` of `spec`; failures become status rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let mut l_sweep = spec.l_sweep.clone();
    l_sweep.sort_unstable();
    l_sweep.dedup();
    let mut methods = spec.methods.clone();
    methods.sort_by_key(|m| m.to_string());
    methods.dedup();

    let mut trial_rows = Vec::new();
    let mut mean_rows = Vec::new();
    for &l in &l_sweep {
        let cfg = ScenarioConfig {
            reflectors: l,
            ..spec.scenario.clone()
        };
        let mut per_method: Vec<Vec<MethodOutcome>> = vec![Vec::new(); methods.len()];
        for trial in 0..spec.trials as u64 {
            for (mi, &method) in methods.iter().enumerate() {
                let start = Instant::now();
                let out = run_method(&cfg, trial, method);
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                let wall_time_ms = spec.timing.then_some(elapsed);
                let row = match out {
                    Ok(o) => {
                        per_method[mi].push(o);
                        ResultRow {
                            kind: "trial",
                            l,
                            trial,
                            method: method.to_string(),
                            status: "ok".into(),
                            sum_power_w: Some(o.sum_power),
                            sum_power_se: None,
                            ee: Some(o.ee),
                            ee_se: None,
                            sum_rate: Some(o.sum_rate),
                            sum_rate_se: None,
                            iterations: Some(o.iterations as f64),
                            wall_time_ms,
                        }
                    }
                    Err(e) => ResultRow {
                        kind: "trial",
                        l,
                        trial,
                        method: method.to_string(),
                        status: status_of(&e),
                        sum_power_w: None,
                        sum_power_se: None,
                        ee: None,
                        ee_se: None,
                        sum_rate: None,
                        sum_rate_se: None,
                        iterations: None,
                        wall_time_ms,
                    },
                };
                trial_rows.push(row);
            }
        }
        for (mi, method) in methods.iter().enumerate() {
            mean_rows.push(aggregate(l, &method.to_string(), &per_method[mi]));
        }
    }
    let mut rows = trial_rows;
    rows.extend(mean_rows);
    Ok(ResultTable { rows })
}

fn aggregate(l: usize, method: &str, outs: &[MethodOutcome]) -> ResultRow {
    let n = outs.len();
    if n == 0 {
        return ResultRow {
            kind: "mean",
            l,
            trial: 0,
            method: method.into(),
            status: "no_data".into(),
            sum_power_w: None,
            sum_power_se: None,
            ee: None,
            ee_se: None,
            sum_rate: None,
            sum_rate_se: None,
            iterations: None,
            wall_time_ms: None,
        };
    }
    let col = |f: fn(&MethodOutcome) -> f64| mean_se(&outs.iter().map(f).collect::<Vec<_>>());
    let (p, p_se) = col(|o| o.sum_power);
    let (e, e_se) = col(|o| o.ee);
    let (r, r_se) = col(|o| o.sum_rate);
    let (it, _) = col(|o| o.iterations as f64);
    ResultRow {
        kind: "mean",
        l,
        trial: n as u64,
        method: method.into(),
        status: "ok".into(),
        sum_power_w: Some(p),
        sum_power_se: Some(p_se),
        ee: Some(e),
        ee_se: Some(e_se),
        sum_rate: Some(r),
        sum_rate_se: Some(r_se),
        iterations: Some(it),
        wall_time_ms: None,
    }
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Rows of `kind == "mean"` for `(l, method)`.
    pub fn mean(&self, l: usize, method: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.kind == "mean" && r.l == l && r.method == method)
    }
}

/// Writes `<out>` (CSV) and `<out>.json` (resolved spec).
pub fn write_outputs(spec: &ExperimentSpec, table: &ResultTable, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    table.write_csv(std::fs::File::create(out)?)?;
    let sidecar = sidecar_path(out);
    let json = serde_json::to_string_pretty(spec).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(sidecar, json + "\n")?;
    Ok(())
}

pub fn sidecar_path(out: &Path) -> std::path::PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
