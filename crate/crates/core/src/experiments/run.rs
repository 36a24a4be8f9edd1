//! Running sweeps: per-point calibration, trials, aggregation and writers.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{CalibrationChoice, PointSpec, SweepSpec};
use crate::calibration::{
    beta_from_samples, calibrate_closed_form, collect_calibration_samples, BetaTable,
    CalibrationGroup,
};
use crate::error::{Error, Result};
use crate::metrics::{reference_curve, OutcomeAccumulator};
use crate::model::{domain, NetworkConfig};
use crate::orderstats::{binomial_candidate_weights, rate_bounds};
use crate::scheduler::{run_round, ScheduleOutcome};

/// Rank-mixture draws behind each point's numeric rate bound.
pub const ANALYSIS_SAMPLES: usize = 20_000;

/// Trials are generated in blocks of this size so outcome logs stream
/// without holding a whole point in memory.
const TRIAL_BLOCK: usize = 4096;

/// `netbeam-core vX.Y.Z`.
pub fn version_string() -> String {
    format!("netbeam-core v{}", env!("CARGO_PKG_VERSION"))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the serialized value, hex encoded.
pub fn content_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Cache file name for a calibration of `cfg`.
pub fn beta_cache_key(cfg: &NetworkConfig, method: CalibrationChoice, samples: usize) -> String {
    let mut h = Sha256::new();
    h.update(
        format!(
            "{},{},{},{},{},{},{},{},{}",
            cfg.m,
            cfg.q,
            cfg.n_t,
            cfg.n_r,
            cfg.k,
            cfg.rho.to_bits(),
            cfg.seed,
            method.as_str(),
            samples
        )
        .as_bytes(),
    );
    for g in cfg.attenuation.as_slice() {
        h.update(g.to_bits().to_le_bytes());
    }
    format!("beta-{}.csv", &hex(&h.finalize())[..32])
}

/// Computes (or loads from `cache_dir`) the normalization factors of one
/// point.
pub fn calibrate_point(
    cfg: &NetworkConfig,
    spec: &super::config::CalibrationSpec,
    cache_dir: Option<&Path>,
) -> Result<BetaTable> {
    let samples = spec.samples_for(cfg.k, cfg.n_r);
    let cached = cache_dir.map(|d| d.join(beta_cache_key(cfg, spec.method, samples)));
    if let Some(path) = &cached {
        if path.exists() {
            return BetaTable::read_csv(path, cfg);
        }
    }
    let table = match spec.method {
        CalibrationChoice::ClosedForm => calibrate_closed_form(cfg)?,
        CalibrationChoice::Empirical => {
            let groups = collect_calibration_samples(cfg, samples)?;
            beta_from_samples(cfg, &groups, cfg.quantile_target())?
        }
    };
    if let Some(path) = &cached {
        write_cache(path, &table)?;
    }
    Ok(table)
}

fn write_cache(path: &Path, table: &BetaTable) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    table.write_csv(path)
}

/// Aggregated result of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    #[serde(flatten)]
    pub point: PointSpec,
    pub trials: u64,
    pub mean_sum_rate: f64,
    pub sum_rate_se: f64,
    pub mean_cell_rate: f64,
    pub cell_rate_se: f64,
    pub mean_fb_bits: f64,
    pub fb_bits_se: f64,
    pub max_fb_bits: u64,
    /// `Q N_t ceil(log2(Q N_t))`.
    pub fb_limit: f64,
    pub mean_set_size: f64,
    pub set_size_se: f64,
    pub served_beams: u64,
    pub idle_beams: u64,
    pub chisq_stat: f64,
    /// `None` when fewer than five services per user are expected.
    pub chisq_p: Option<f64>,
    pub ref_curve: f64,
    /// Sum over super-cells of the numeric per-cell lower bound.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub cell_lower_bounds: Vec<f64>,
    pub min_beta: f64,
    pub max_beta: f64,
    pub mean_beta: f64,
    /// Some normalization factor is below one, so candidate sets may overlap
    /// and the feedback plateau does not apply.
    pub outside_regime: bool,
    pub selection_counts: Vec<u64>,
}

/// Options shared by every point of a simulation sweep.
#[derive(Default)]
pub struct RunOptions<'a> {
    pub beta_cache: Option<PathBuf>,
    /// JSON-lines sink, one record per round.
    pub outcome_log: Option<&'a mut (dyn Write + Send)>,
    /// Rank-mixture draws for the numeric bounds; 0 selects the default.
    pub analysis_samples: usize,
}

#[derive(Serialize)]
struct LogRecord<'a> {
    point: usize,
    trial: u64,
    sum_rate: f64,
    #[serde(flatten)]
    outcome: &'a ScheduleOutcome,
}

fn run_trials<W: Write + ?Sized>(
    cfg: &NetworkConfig,
    beta: &BetaTable,
    trials: usize,
    point_index: usize,
    mut log: Option<&mut W>,
) -> Result<OutcomeAccumulator> {
    let mut acc = OutcomeAccumulator::new(cfg.m, cfg.k);
    let mut start = 0;
    while start < trials {
        let end = (start + TRIAL_BLOCK).min(trials);
        let block: Vec<ScheduleOutcome> = (start..end)
            .into_par_iter()
            .map(|t| run_round(cfg, beta, t as u64, false).map(|o| o.outcome))
            .collect::<Result<_>>()?;
        for (offset, o) in block.iter().enumerate() {
            acc.push(o);
            if let Some(w) = log.as_deref_mut() {
                let rec = LogRecord {
                    point: point_index,
                    trial: (start + offset) as u64,
                    sum_rate: crate::metrics::sum_rate(o),
                    outcome: o,
                };
                serde_json::to_writer(&mut *w, &rec)?;
                w.write_all(b"\n").map_err(|e| Error::io("outcome log", e))?;
            }
        }
        start = end;
    }
    Ok(acc)
}

/// Calibrates, runs and aggregates one point.
pub fn run_point(
    point: &PointSpec,
    point_index: usize,
    spec: &SweepSpec,
    opts: &mut RunOptions<'_>,
) -> Result<PointResult> {
    let cfg = point.network()?;
    let beta = calibrate_point(&cfg, &spec.calibration, opts.beta_cache.as_deref())?;
    let acc = run_trials(
        &cfg,
        &beta,
        spec.trials,
        point_index,
        opts.outcome_log.as_deref_mut(),
    )?;
    let analysis = if opts.analysis_samples == 0 {
        ANALYSIS_SAMPLES
    } else {
        opts.analysis_samples
    };
    let weights = binomial_candidate_weights(cfg.k * cfg.n_r)?;
    let bounds: Vec<_> = (0..cfg.m)
        .map(|n| {
            let mut rng = cfg.rng().stream(domain::ANALYSIS, n as u64);
            rate_bounds(&cfg, n, &weights, analysis, &mut rng)
        })
        .collect();
    let fairness = acc.fairness();
    Ok(PointResult {
        point: point.clone(),
        trials: acc.trials(),
        mean_sum_rate: acc.sum_rate.mean(),
        sum_rate_se: acc.sum_rate.std_err(),
        mean_cell_rate: acc.cell_rate.mean(),
        cell_rate_se: acc.cell_rate.std_err(),
        mean_fb_bits: acc.feedback.mean(),
        fb_bits_se: acc.feedback.std_err(),
        max_fb_bits: acc.max_feedback_bits,
        fb_limit: (cfg.cell_beams() as u64 * cfg.feedback_bits() as u64) as f64,
        mean_set_size: acc.set_size.mean(),
        set_size_se: acc.set_size.std_err(),
        served_beams: acc.served_beams,
        idle_beams: acc.idle_beams,
        chisq_stat: fairness.statistic,
        chisq_p: fairness.is_reliable().then_some(fairness.p_value),
        ref_curve: reference_curve(cfg.total_beams(), cfg.k, cfg.n_r),
        lower_bound: bounds.iter().map(|b| b.lower).sum(),
        upper_bound: bounds.iter().map(|b| b.upper).sum(),
        cell_lower_bounds: bounds.iter().map(|b| b.lower).collect(),
        min_beta: beta.min(),
        max_beta: beta.max(),
        mean_beta: beta.mean(),
        outside_regime: beta.outside_regime(),
        selection_counts: acc.service_counts,
    })
}

/// Runs every point of `spec` in order.
pub fn run_sweep(spec: &SweepSpec, opts: &mut RunOptions<'_>) -> Result<Vec<PointResult>> {
    spec.points
        .iter()
        .enumerate()
        .map(|(i, p)| run_point(p, i, spec, opts))
        .collect()
}

/// Column names of the simulation CSV.
pub const SIMULATE_HEADER: [&str; 20] = [
    "M",
    "Q",
    "N_t",
    "N_r",
    "K",
    "rho_dB",
    "mean_sum_rate",
    "se",
    "mean_fb_bits",
    "se",
    "chisq_p",
    "ref_curve",
    "lower_bound",
    "mean_cell_rate",
    "cell_se",
    "mean_set_size",
    "trials",
    "min_beta",
    "outside_regime",
    "series",
];

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// One RFC-4180 row per point.
pub fn write_results_csv(path: impl AsRef<Path>, results: &[PointResult]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results(file, results)
}

pub fn write_results<W: Write>(sink: W, results: &[PointResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SIMULATE_HEADER)?;
    for r in results {
        let p = &r.point;
        w.write_record([
            p.m.to_string(),
            p.q.to_string(),
            p.n_t.to_string(),
            p.n_r.to_string(),
            p.k.to_string(),
            num(p.rho_db),
            num(r.mean_sum_rate),
            num(r.sum_rate_se),
            num(r.mean_fb_bits),
            num(r.fb_bits_se),
            r.chisq_p.map(num).unwrap_or_default(),
            num(r.ref_curve),
            num(r.lower_bound),
            num(r.mean_cell_rate),
            num(r.cell_rate_se),
            num(r.mean_set_size),
            r.trials.to_string(),
            num(r.min_beta),
            r.outside_regime.to_string(),
            if p.label.is_empty() {
                p.series.to_string()
            } else {
                p.label.clone()
            },
        ])?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

/// JSON sidecar written next to every CSV.
#[derive(Debug, Serialize)]
pub struct Metadata<'a, T: Serialize> {
    pub version: String,
    pub command: &'a str,
    pub config_hash: String,
    pub spec: &'a SweepSpec,
    pub results: &'a [T],
}

/// `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

pub fn write_metadata<T: Serialize>(
    out: &Path,
    command: &str,
    spec: &SweepSpec,
    results: &[T],
) -> Result<PathBuf> {
    let meta = Metadata {
        version: version_string(),
        command,
        config_hash: content_hash(spec)?,
        spec,
        results,
    };
    let path = sidecar_path(out);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// One row of the calibration sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    #[serde(flatten)]
    pub point: PointSpec,
    pub beta: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub method: String,
}

pub const CALIBRATE_HEADER: [&str; 11] = [
    "K", "beta", "rho_dB", "beta_min", "beta_max", "M", "Q", "N_t", "N_r", "method", "series",
];

/// Key under which homogeneous points can share one set of calibration draws.
#[derive(PartialEq, Eq, Hash)]
struct ShareKey {
    m: usize,
    q: usize,
    n_t: usize,
    n_r: usize,
    rho_bits: u64,
    seed: u64,
    value_bits: u64,
}

fn share_key(cfg: &NetworkConfig) -> Option<ShareKey> {
    cfg.attenuation.homogeneous_value().map(|v| ShareKey {
        m: cfg.m,
        q: cfg.q,
        n_t: cfg.n_t,
        n_r: cfg.n_r,
        rho_bits: cfg.rho.to_bits(),
        seed: cfg.seed,
        value_bits: v.to_bits(),
    })
}

/// Normalization factors across the points of `spec`.
///
/// Empirical calibration of homogeneous points that differ only in `K`
/// reuses one set of draws, sized for the largest `K`, so the reported
/// curve is monotone in `K`.
pub fn run_calibration_sweep(
    spec: &SweepSpec,
    cache_dir: Option<&Path>,
) -> Result<Vec<CalibrationRow>> {
    let nets: Vec<NetworkConfig> = spec
        .points
        .iter()
        .map(PointSpec::network)
        .collect::<Result<_>>()?;
    let mut largest: HashMap<ShareKey, &NetworkConfig> = HashMap::new();
    for cfg in &nets {
        if let Some(key) = share_key(cfg) {
            let e = largest.entry(key).or_insert(cfg);
            if cfg.k > e.k {
                *e = cfg;
            }
        }
    }
    let mut shared: HashMap<ShareKey, Vec<CalibrationGroup>> = HashMap::new();
    let mut rows = Vec::with_capacity(nets.len());
    for (p, cfg) in spec.points.iter().zip(&nets) {
        let key = share_key(cfg);
        let table = match (spec.calibration.method, key) {
            (CalibrationChoice::Empirical, Some(key)) if cache_dir.is_none() => {
                let big = largest[&key];
                let groups = match shared.entry(key) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => {
                        let samples = spec.calibration.samples_for(big.k, big.n_r);
                        e.insert(collect_calibration_samples(big, samples)?)
                    }
                };
                let regrouped: Vec<CalibrationGroup> = groups
                    .iter()
                    .map(|g| CalibrationGroup {
                        n: g.n,
                        members: (0..cfg.k).collect(),
                        cdfs: g.cdfs.clone(),
                    })
                    .collect();
                beta_from_samples(cfg, &regrouped, cfg.quantile_target())?
            }
            _ => calibrate_point(cfg, &spec.calibration, cache_dir)?,
        };
        rows.push(CalibrationRow {
            point: p.clone(),
            beta: table.mean(),
            beta_min: table.min(),
            beta_max: table.max(),
            method: spec.calibration.method.as_str().to_string(),
        });
    }
    Ok(rows)
}

pub fn write_calibration_csv(path: impl AsRef<Path>, rows: &[CalibrationRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_calibration(file, rows)
}

pub fn write_calibration<W: Write>(sink: W, rows: &[CalibrationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CALIBRATE_HEADER)?;
    for r in rows {
        let p = &r.point;
        w.write_record([
            p.k.to_string(),
            num(r.beta),
            num(p.rho_db),
            num(r.beta_min),
            num(r.beta_max),
            p.m.to_string(),
            p.q.to_string(),
            p.n_t.to_string(),
            p.n_r.to_string(),
            r.method.clone(),
            if p.label.is_empty() {
                p.series.to_string()
            } else {
                p.label.clone()
            },
        ])?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}
