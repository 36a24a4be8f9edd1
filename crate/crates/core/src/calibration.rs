//! Normalization factors: per (user, base-station) quantiles of the SINR
//! distribution, found by bisection on an empirical or closed-form CDF.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{complex_gaussian, domain, sample_beamformers, NetworkConfig};
use crate::sinr::{fill_gains, sinr_from_gains, ClosedFormCdf};

/// Draws per parallel work item during calibration.
const CHUNK_DRAWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Empirical,
    ClosedForm,
    /// Loaded from a CSV cache.
    Cached,
}

/// Right-continuous step CDF over sorted SINR samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    samples: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.partition_point(|s| *s <= x) as f64 / self.samples.len() as f64
    }

    pub fn quantile(&self, target: f64) -> f64 {
        bisect_quantile(|x| self.eval(x), target, 1.0)
    }
}

/// Smallest `x >= 0` with `cdf(x) >= target`, to within `1e-9 * (1 + x)`.
///
/// The upper end of the bracket starts at `initial_hi` and doubles until the
/// CDF reaches the target.
pub fn bisect_quantile(cdf: impl Fn(f64) -> f64, target: f64, initial_hi: f64) -> f64 {
    assert!(
        (0.0..1.0).contains(&target),
        "quantile target must lie in [0, 1), got {target}"
    );
    if cdf(0.0) >= target {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = initial_hi.max(f64::MIN_POSITIVE);
    while cdf(hi) < target {
        lo = hi;
        hi *= 2.0;
        assert!(hi.is_finite(), "CDF never exceeds {target}");
    }
    while hi - lo >= 1e-9 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `beta[n][k][r]` with the quantile level it was calibrated for.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTable {
    m: usize,
    k: usize,
    q: usize,
    beta: Vec<f64>,
    pub quantile_target: f64,
    pub method: CalibrationMethod,
}

/// The normalization factors of one super-cell.
#[derive(Debug, Clone, Copy)]
pub struct CellBeta<'a> {
    pub k: usize,
    pub q: usize,
    data: &'a [f64],
}

impl<'a> CellBeta<'a> {
    pub fn new(k: usize, q: usize, data: &'a [f64]) -> Result<Self> {
        if data.len() != k * q {
            return Err(Error::Dimension(format!(
                "cell beta slice has {} entries, expected {}",
                data.len(),
                k * q
            )));
        }
        Ok(Self { k, q, data })
    }

    #[inline]
    pub fn get(&self, k: usize, r: usize) -> f64 {
        self.data[k * self.q + r]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BetaRow {
    n: usize,
    k: usize,
    r: usize,
    beta: f64,
}

impl BetaTable {
    pub fn from_values(
        m: usize,
        k: usize,
        q: usize,
        beta: Vec<f64>,
        quantile_target: f64,
        method: CalibrationMethod,
    ) -> Result<Self> {
        if beta.len() != m * k * q {
            return Err(Error::Dimension(format!(
                "beta table has {} entries, expected {}",
                beta.len(),
                m * k * q
            )));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::Domain(format!(
                "normalization factors must be finite and > 0, got {b}"
            )));
        }
        Ok(Self {
            m,
            k,
            q,
            beta,
            quantile_target,
            method,
        })
    }

    /// The same factor for every `(n, k, r)`.
    pub fn uniform(cfg: &NetworkConfig, value: f64) -> Result<Self> {
        Self::from_values(
            cfg.m,
            cfg.k,
            cfg.q,
            vec![value; cfg.m * cfg.k * cfg.q],
            cfg.quantile_target(),
            CalibrationMethod::Cached,
        )
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, r: usize) -> f64 {
        self.beta[(n * self.k + k) * self.q + r]
    }

    pub fn set(&mut self, n: usize, k: usize, r: usize, value: f64) {
        self.beta[(n * self.k + k) * self.q + r] = value;
    }

    pub fn cell(&self, n: usize) -> CellBeta<'_> {
        let len = self.k * self.q;
        CellBeta {
            k: self.k,
            q: self.q,
            data: &self.beta[n * len..(n + 1) * len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.beta
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.k, self.q)
    }

    pub fn min(&self) -> f64 {
        self.beta.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.beta.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.beta.iter().sum::<f64>() / self.beta.len() as f64
    }

    /// Some factor is below one, so a user may clear the threshold on more
    /// than one beam and the rate analysis does not apply.
    pub fn outside_regime(&self) -> bool {
        self.min() < 1.0
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        for n in 0..self.m {
            for k in 0..self.k {
                for r in 0..self.q {
                    w.serialize(BetaRow {
                        n,
                        k,
                        r,
                        beta: self.get(n, k, r),
                    })?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }

    /// Loads a cached table; every `(n, k, r)` of `cfg` must be present.
    pub fn read_csv(path: impl AsRef<Path>, cfg: &NetworkConfig) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut beta = vec![f64::NAN; cfg.m * cfg.k * cfg.q];
        for rec in rdr.deserialize() {
            let row: BetaRow = rec?;
            if row.n >= cfg.m || row.k >= cfg.k || row.r >= cfg.q {
                return Err(Error::Dimension(format!(
                    "{}: entry ({},{},{}) outside (M={}, K={}, Q={})",
                    path.display(),
                    row.n,
                    row.k,
                    row.r,
                    cfg.m,
                    cfg.k,
                    cfg.q
                )));
            }
            beta[(row.n * cfg.k + row.k) * cfg.q + row.r] = row.beta;
        }
        if beta.iter().any(|b| b.is_nan()) {
            return Err(Error::Dimension(format!(
                "{}: table does not cover every (n,k,r)",
                path.display()
            )));
        }
        Self::from_values(
            cfg.m,
            cfg.k,
            cfg.q,
            beta,
            cfg.quantile_target(),
            CalibrationMethod::Cached,
        )
    }
}

/// Users sharing one attenuation row (and super-cell) have identical SINR
/// distributions and share one set of calibration draws.
#[derive(Debug, Clone)]
pub struct CalibrationGroup {
    pub n: usize,
    pub members: Vec<usize>,
    /// One empirical CDF per base-station `r` of super-cell `n`, pooled over
    /// beams and receive antennas.
    pub cdfs: Vec<EmpiricalCdf>,
}

fn group_users(cfg: &NetworkConfig) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut index: HashMap<(usize, Vec<u64>), usize> = HashMap::new();
    for n in 0..cfg.m {
        for k in 0..cfg.k {
            let key = (
                n,
                cfg.attenuation
                    .row(n, k)
                    .iter()
                    .map(|g| g.to_bits())
                    .collect::<Vec<_>>(),
            );
            match index.get(&key) {
                Some(&g) => groups[g].1.push(k),
                None => {
                    index.insert(key, groups.len());
                    groups.push((n, vec![k]));
                }
            }
        }
    }
    groups
}

/// Minimum sample count accepted by [`calibrate_beta`].
pub fn required_samples(cfg: &NetworkConfig) -> usize {
    10 * cfg.k * cfg.n_r
}

/// SINR draws for a user of super-cell `n` with attenuation row `gamma_row`.
/// Returns `Q` vectors, one per base-station, each with `draws * N_t * N_r`
/// samples.
fn draw_user_sinrs(
    cfg: &NetworkConfig,
    n: usize,
    gamma_row: &[f64],
    draws: usize,
    stream_base: u64,
) -> Vec<Vec<f64>> {
    let (m, q, n_t, n_r) = (cfg.m, cfg.q, cfg.n_t, cfg.n_r);
    let chunks = draws.div_ceil(CHUNK_DRAWS);
    let policy = cfg.rng();
    let parts: Vec<Vec<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = policy.stream(domain::CALIBRATION, stream_base + c as u64);
            let count = CHUNK_DRAWS.min(draws - c * CHUNK_DRAWS);
            let mut out = vec![Vec::with_capacity(count * n_t * n_r); q];
            let mut gains = vec![0.0; m * q * n_t];
            let mut sinr = vec![0.0; q * n_t];
            let mut rows = vec![Default::default(); m * q * n_r * n_t];
            for _ in 0..count {
                let beams: Vec<_> = (0..m * q)
                    .map(|_| sample_beamformers(n_t, &mut rng))
                    .collect();
                for z in rows.iter_mut() {
                    *z = complex_gaussian(&mut rng);
                }
                for i in 0..n_r {
                    fill_gains(
                        m,
                        q,
                        n_t,
                        |mm, r| {
                            let s = ((mm * q + r) * n_r + i) * n_t;
                            &rows[s..s + n_t]
                        },
                        |mm, r, l| &beams[mm * q + r].as_slice()[l * n_t..(l + 1) * n_t],
                        &mut gains,
                    );
                    sinr_from_gains(&gains, gamma_row, n, q, n_t, cfg.rho, &mut sinr);
                    for r in 0..q {
                        out[r].extend_from_slice(&sinr[r * n_t..(r + 1) * n_t]);
                    }
                }
            }
            out
        })
        .collect();
    let mut merged = vec![Vec::with_capacity(draws * n_t * n_r); q];
    for part in parts {
        for (r, v) in part.into_iter().enumerate() {
            merged[r].extend(v);
        }
    }
    merged
}

/// Draws calibration samples for every distinct user profile.
pub fn collect_calibration_samples(
    cfg: &NetworkConfig,
    samples_per_user: usize,
) -> Result<Vec<CalibrationGroup>> {
    let required = required_samples(cfg);
    if samples_per_user < required {
        let offending = (0..cfg.m)
            .flat_map(|n| (0..cfg.k).flat_map(move |k| (0..cfg.q).map(move |r| (n, k, r))))
            .collect();
        return Err(Error::InsufficientSamples {
            provided: samples_per_user,
            required,
            offending,
        });
    }
    let draws = samples_per_user.div_ceil(cfg.n_t * cfg.n_r);
    let chunks_per_group = draws.div_ceil(CHUNK_DRAWS) as u64;
    Ok(group_users(cfg)
        .into_iter()
        .enumerate()
        .map(|(g, (n, members))| {
            let row = cfg.attenuation.row(n, members[0]);
            let cdfs = draw_user_sinrs(cfg, n, row, draws, g as u64 * chunks_per_group)
                .into_iter()
                .map(EmpiricalCdf::new)
                .collect();
            CalibrationGroup { n, members, cdfs }
        })
        .collect())
}

/// Normalization factors at `target` from previously drawn samples.
pub fn beta_from_samples(
    cfg: &NetworkConfig,
    groups: &[CalibrationGroup],
    target: f64,
) -> Result<BetaTable> {
    let mut beta = vec![f64::NAN; cfg.m * cfg.k * cfg.q];
    for g in groups {
        for (r, cdf) in g.cdfs.iter().enumerate() {
            let b = cdf.quantile(target);
            for &k in &g.members {
                beta[(g.n * cfg.k + k) * cfg.q + r] = b;
            }
        }
    }
    BetaTable::from_values(
        cfg.m,
        cfg.k,
        cfg.q,
        beta,
        target,
        CalibrationMethod::Empirical,
    )
}

/// Per-user empirical calibration at the `1 - 1/(K N_r)` quantile.
///
/// `samples_per_user` counts SINR samples per `(n, k, r)` after pooling over
/// beams and receive antennas, and must be at least `10 K N_r`.
pub fn calibrate_beta(cfg: &NetworkConfig, samples_per_user: usize) -> Result<BetaTable> {
    let groups = collect_calibration_samples(cfg, samples_per_user)?;
    beta_from_samples(cfg, &groups, cfg.quantile_target())
}

/// Quantile of the exact SINR CDF of a homogeneous network.
pub fn analytic_beta_homogeneous(cfg: &NetworkConfig, target: f64) -> Result<f64> {
    if cfg.attenuation.homogeneous_value().is_none() {
        return Err(Error::Unsupported(
            "closed-form calibration needs a homogeneous attenuation profile".into(),
        ));
    }
    if !(0.0..1.0).contains(&target) {
        return Err(Error::Domain(format!(
            "quantile target must lie in [0, 1), got {target}"
        )));
    }
    let f = ClosedFormCdf::lower(cfg, 0);
    Ok(bisect_quantile(
        |x| f.eval(x).expect("x >= 0 inside bisection"),
        target,
        1.0,
    ))
}

/// Closed-form calibration of every `(n, k, r)` for homogeneous networks.
pub fn calibrate_closed_form(cfg: &NetworkConfig) -> Result<BetaTable> {
    let target = cfg.quantile_target();
    let b = analytic_beta_homogeneous(cfg, target)?;
    BetaTable::from_values(
        cfg.m,
        cfg.k,
        cfg.q,
        vec![b; cfg.m * cfg.k * cfg.q],
        target,
        CalibrationMethod::ClosedForm,
    )
}
