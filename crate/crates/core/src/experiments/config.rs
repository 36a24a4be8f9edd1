//! Configuration files and their resolution into sweep points.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{db_to_linear, linear_to_db, AttenuationProfile, NetworkConfig};

/// Trials per point when the config does not say.
pub const DEFAULT_TRIALS: usize = 2000;
/// Smallest accepted trial count per sweep point.
pub const MIN_TRIALS: usize = 100;
/// The desk-scale K grid.
pub const DESK_K_GRID: [usize; 7] = [10, 31, 100, 316, 1000, 3162, 10_000];

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

/// `[network]` section. Field names mirror [`NetworkConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "N_t")]
    pub n_t: usize,
    #[serde(rename = "N_r", default = "one")]
    pub n_r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "rho_dB", default, skip_serializing_if = "Option::is_none")]
    pub rho_db: Option<f64>,
    /// Linear SNR; mutually exclusive with `rho_dB`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkSection {
    fn resolved_rho_db(&self) -> Result<f64> {
        match (self.rho_db, self.rho) {
            (Some(_), Some(_)) => Err(Error::config(
                "network.rho",
                "give either `rho_dB` or `rho`, not both",
            )),
            (Some(db), None) if db.is_finite() => Ok(db),
            (Some(db), None) => Err(Error::config("network.rho_dB", format!("not finite: {db}"))),
            (None, Some(lin)) if lin.is_finite() && lin > 0.0 => Ok(linear_to_db(lin)),
            (None, Some(lin)) => Err(Error::config("network.rho", format!("must be > 0, got {lin}"))),
            (None, None) => Err(Error::config("network.rho_dB", "missing")),
        }
    }
}

/// `[attenuation]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttenuationSpec {
    Homogeneous {
        #[serde(default = "unit")]
        value: f64,
    },
    /// Entries i.i.d. uniform in dB. The draw uses `seed`, or the network
    /// seed when absent.
    LogUniformDb {
        min_db: f64,
        max_db: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A tensor dump with header `n,k,m,r,gamma`; relative paths resolve
    /// against the config file's directory.
    Csv { path: PathBuf },
}

impl Default for AttenuationSpec {
    fn default() -> Self {
        AttenuationSpec::Homogeneous { value: 1.0 }
    }
}

impl AttenuationSpec {
    pub fn materialize(&self, m: usize, q: usize, k: usize, seed: u64) -> Result<AttenuationProfile> {
        match self {
            AttenuationSpec::Homogeneous { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::config(
                        "attenuation.value",
                        format!("must be finite and > 0, got {value}"),
                    ));
                }
                AttenuationProfile::homogeneous(m, q, k, *value)
            }
            AttenuationSpec::LogUniformDb {
                min_db,
                max_db,
                seed: s,
            } => AttenuationProfile::log_uniform_db(m, q, k, *min_db, *max_db, s.unwrap_or(seed)),
            AttenuationSpec::Csv { path } => AttenuationProfile::from_csv(path, m, q, k),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, AttenuationSpec::Homogeneous { .. })
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let AttenuationSpec::Csv { path } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationChoice {
    Empirical,
    /// Exact quantile of the homogeneous SINR CDF.
    ClosedForm,
}

impl CalibrationChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibrationChoice::Empirical => "empirical",
            CalibrationChoice::ClosedForm => "closed_form",
        }
    }
}

/// `[calibration]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default = "CalibrationSpec::default_method")]
    pub method: CalibrationChoice,
    /// Samples per `(n, k, r)`; defaults to `max(100000, 20 K N_r)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl CalibrationSpec {
    fn default_method() -> CalibrationChoice {
        CalibrationChoice::Empirical
    }

    pub fn samples_for(&self, k: usize, n_r: usize) -> usize {
        self.samples.unwrap_or_else(|| (20 * k * n_r).max(100_000))
    }
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            method: CalibrationChoice::Empirical,
            samples: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    K,
    /// Total users `M K`; `K = users / M` per point.
    #[serde(rename = "users")]
    Users,
    /// `(M, Q)` pairs at the base config's total user count.
    #[serde(rename = "clusters")]
    Clusters,
    #[serde(rename = "rho_dB")]
    RhoDb,
    #[serde(rename = "N_t")]
    NT,
    #[serde(rename = "N_r")]
    NR,
}

/// Overrides applied to the base network for one curve of a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesOverride {
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(rename = "N_t", default, skip_serializing_if = "Option::is_none")]
    pub n_t: Option<usize>,
    #[serde(rename = "N_r", default, skip_serializing_if = "Option::is_none")]
    pub n_r: Option<usize>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "rho_dB", default, skip_serializing_if = "Option::is_none")]
    pub rho_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// `[sweep]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    /// `[M, Q]` pairs for `variable = "clusters"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<[usize; 2]>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesOverride>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

/// A whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub network: NetworkSection,
    #[serde(default)]
    pub attenuation: AttenuationSpec,
    #[serde(default)]
    pub calibration: CalibrationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config and resolves relative paths against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.attenuation.resolve_paths(base);
        Ok(cfg)
    }
}

/// Command-line overrides layered over a config file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
}

/// One fully specified network of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSpec {
    pub series: usize,
    pub label: String,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "N_t")]
    pub n_t: usize,
    #[serde(rename = "N_r")]
    pub n_r: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "rho_dB")]
    pub rho_db: f64,
    pub seed: u64,
    pub attenuation: AttenuationSpec,
}

impl PointSpec {
    pub fn network(&self) -> Result<NetworkConfig> {
        let att = self.attenuation.materialize(self.m, self.q, self.k, self.seed)?;
        NetworkConfig::new(
            self.m,
            self.q,
            self.n_t,
            self.n_r,
            self.k,
            db_to_linear(self.rho_db),
            att,
            self.seed,
        )
    }
}

/// Resolved sweep: the points to run, in output order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub trials: usize,
    pub calibration: CalibrationSpec,
    pub points: Vec<PointSpec>,
}

fn as_count(field: &str, v: f64) -> Result<usize> {
    if v.is_finite() && v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::config(field, format!("expected a positive integer, got {v}")))
    }
}

impl SweepSpec {
    pub fn from_config(cfg: &ConfigFile, ov: Overrides) -> Result<Self> {
        let net = &cfg.network;
        let base = PointSpec {
            series: 0,
            label: String::new(),
            m: net.m,
            q: net.q,
            n_t: net.n_t,
            n_r: net.n_r,
            k: net.k,
            rho_db: net.resolved_rho_db()?,
            seed: ov.seed.unwrap_or(net.seed),
            attenuation: cfg.attenuation.clone(),
        };
        let (variable, trials, points) = match &cfg.sweep {
            None => (SweepVariable::K, DEFAULT_TRIALS, vec![base.clone()]),
            Some(sw) => (sw.variable, sw.trials, expand(&base, sw)?),
        };
        let trials = ov.trials.unwrap_or(trials);
        if trials < MIN_TRIALS {
            return Err(Error::config(
                "sweep.trials",
                format!("must be >= {MIN_TRIALS}, got {trials}"),
            ));
        }
        for p in &points {
            p.network()?;
        }
        Ok(Self {
            variable,
            trials,
            calibration: cfg.calibration.clone(),
            points,
        })
    }
}

fn apply_series(base: &PointSpec, s: &SeriesOverride, index: usize) -> PointSpec {
    let mut p = base.clone();
    p.series = index;
    p.m = s.m.unwrap_or(p.m);
    p.q = s.q.unwrap_or(p.q);
    p.n_t = s.n_t.unwrap_or(p.n_t);
    p.n_r = s.n_r.unwrap_or(p.n_r);
    p.k = s.k.unwrap_or(p.k);
    p.rho_db = s.rho_db.unwrap_or(p.rho_db);
    p.label = s.label.clone().unwrap_or_default();
    p
}

fn expand(base: &PointSpec, sw: &SweepSection) -> Result<Vec<PointSpec>> {
    let series: Vec<PointSpec> = if sw.series.is_empty() {
        vec![base.clone()]
    } else {
        sw.series
            .iter()
            .enumerate()
            .map(|(i, s)| apply_series(base, s, i))
            .collect()
    };
    if sw.variable == SweepVariable::Clusters {
        if sw.clusters.is_empty() {
            return Err(Error::config("sweep.clusters", "must be nonempty"));
        }
    } else if sw.values.is_empty() {
        return Err(Error::config("sweep.values", "must be nonempty"));
    }
    let mut out = Vec::new();
    for s in &series {
        match sw.variable {
            SweepVariable::Clusters => {
                let users = s.m * s.k;
                let cells = sw.clusters[0][0] * sw.clusters[0][1];
                for &[m, q] in &sw.clusters {
                    if m == 0 || q == 0 || m * q != cells {
                        return Err(Error::config(
                            "sweep.clusters",
                            format!("pair [{m}, {q}] does not keep M*Q = {cells}"),
                        ));
                    }
                    if users % m != 0 {
                        return Err(Error::config(
                            "sweep.clusters",
                            format!("{users} total users do not split over M = {m}"),
                        ));
                    }
                    out.push(PointSpec {
                        m,
                        q,
                        k: users / m,
                        ..s.clone()
                    });
                }
            }
            var => {
                for &v in &sw.values {
                    let mut p = s.clone();
                    match var {
                        SweepVariable::K => p.k = as_count("sweep.values", v)?,
                        SweepVariable::Users => {
                            let users = as_count("sweep.values", v)?;
                            if users % p.m != 0 {
                                return Err(Error::config(
                                    "sweep.values",
                                    format!("{users} total users do not split over M = {}", p.m),
                                ));
                            }
                            p.k = users / p.m;
                        }
                        SweepVariable::RhoDb => {
                            if !v.is_finite() {
                                return Err(Error::config("sweep.values", "rho_dB must be finite"));
                            }
                            p.rho_db = v;
                        }
                        SweepVariable::NT => p.n_t = as_count("sweep.values", v)?,
                        SweepVariable::NR => p.n_r = as_count("sweep.values", v)?,
                        SweepVariable::Clusters => unreachable!(),
                    }
                    out.push(p);
                }
            }
        }
    }
    Ok(out)
}
