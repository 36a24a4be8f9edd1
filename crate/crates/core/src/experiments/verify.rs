//! Property suites run by the `verify` command at fixed desk-scale sizes.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{calibrate_beta, calibrate_closed_form};
use crate::error::Result;
use crate::model::{db_to_linear, domain, sample_beamformers, sample_channels, AttenuationProfile, NetworkConfig, RngPolicy};
use crate::orderstats::{
    exponential_max_mean_bounds, exponential_max_mean_empirical, f_monotone,
    scaling_integral, scaling_integral_quadrature, verify_ordered_bounds_in_table,
    MixtureWeights,
};
use crate::scheduler::run_round;
use crate::sinr::{compute_sinr_table, compute_sinr_table_with_bounds, BoundKind, ClosedFormCdf};
use crate::stats::{ks_distance, MeanAccumulator};

/// Deliberate defects used to confirm that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Test each surrogate bound against the other bound's CDF.
    SwapCdf,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "swap-cdf" => Ok(Fault::SwapCdf),
            other => Err(format!("unknown fault `{other}` (known: swap-cdf)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, statistic: f64, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            comparison: Comparison::AtMost,
            pass: statistic <= threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub version: String,
    pub seed: u64,
    pub fault: Option<Fault>,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub fault: Option<Fault>,
}

/// Two-sided KS critical value at level 0.001.
fn ks_critical(n: usize) -> f64 {
    1.95 / (n as f64).sqrt()
}

fn ten_db() -> f64 {
    db_to_linear(10.0)
}

fn cdf_for(cfg: &NetworkConfig, kind: BoundKind, fault: Option<Fault>) -> ClosedFormCdf {
    let kind = match (kind, fault) {
        (BoundKind::Lower, Some(Fault::SwapCdf)) => BoundKind::Upper,
        (BoundKind::Upper, Some(Fault::SwapCdf)) => BoundKind::Lower,
        (k, None) => k,
    };
    match kind {
        BoundKind::Lower => ClosedFormCdf::lower(cfg, 0),
        BoundKind::Upper => ClosedFormCdf::upper(cfg, 0),
    }
}

fn ks_against(samples: &[f64], cdf: &ClosedFormCdf) -> f64 {
    ks_distance(samples, |x| cdf.eval(x).expect("SINR values are >= 0"))
}

fn sinr_cdf_homogeneous(opts: &VerifyOptions) -> Result<CheckResult> {
    let cfg = NetworkConfig::homogeneous(2, 2, 2, 1, 1, ten_db(), opts.seed)?;
    let n = 20_000;
    let xs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|t| compute_sinr_table(&cfg, &sample_channels(&cfg, t)).get(0, 0, 0, 0, 0))
        .collect();
    let d = ks_against(&xs, &cdf_for(&cfg, BoundKind::Lower, opts.fault));
    Ok(CheckResult::at_most(
        "sinr_cdf_ks_homogeneous",
        d,
        ks_critical(n),
        format!("{n} SINR draws, M=2 Q=2 N_t=2, rho=10 dB"),
    ))
}

fn bound_cdfs_heterogeneous(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let att = AttenuationProfile::log_uniform_db(2, 2, 1, -10.0, 10.0, opts.seed)?;
    let cfg = NetworkConfig::new(2, 2, 2, 1, 1, ten_db(), att, opts.seed)?;
    let n = 20_000;
    let pairs: Vec<(f64, f64)> = (0..n as u64)
        .into_par_iter()
        .map(|t| {
            let tab = compute_sinr_table_with_bounds(&cfg, &sample_channels(&cfg, t));
            (tab.s(0, 0, 0, 0, 0).unwrap(), tab.t(0, 0, 0, 0, 0).unwrap())
        })
        .collect();
    let (s, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let detail = format!("{n} draws, gamma log-uniform in [-10, 10] dB");
    Ok(vec![
        CheckResult::at_most(
            "lower_bound_cdf_ks",
            ks_against(&s, &cdf_for(&cfg, BoundKind::Lower, opts.fault)),
            ks_critical(n),
            detail.clone(),
        ),
        CheckResult::at_most(
            "upper_bound_cdf_ks",
            ks_against(&t, &cdf_for(&cfg, BoundKind::Upper, opts.fault)),
            ks_critical(n),
            detail,
        ),
    ])
}

fn ordered_bounds(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let att = AttenuationProfile::log_uniform_db(2, 2, 50, -10.0, 10.0, opts.seed)?;
    let cfg = NetworkConfig::new(2, 2, 2, 1, 50, ten_db(), att, opts.seed)?;
    let realizations = 500u64;
    let counts: Vec<(usize, usize)> = (0..realizations)
        .into_par_iter()
        .map(|t| {
            let tab = compute_sinr_table_with_bounds(&cfg, &sample_channels(&cfg, t));
            let mut violations = 0;
            for n in 0..cfg.m {
                for r in 0..cfg.q {
                    for l in 0..cfg.n_t {
                        violations += verify_ordered_bounds_in_table(&tab, n, r, l, 0)
                            .expect("bounds computed");
                    }
                }
            }
            let mut multi = 0;
            for n in 0..cfg.m {
                let cell = tab.cell(n);
                for k in 0..cfg.k {
                    if cell.antenna(k, 0).iter().filter(|v| **v > 1.0).count() > 1 {
                        multi += 1;
                    }
                }
            }
            (violations, multi)
        })
        .collect();
    let violations: usize = counts.iter().map(|c| c.0).sum();
    let multi: usize = counts.iter().map(|c| c.1).sum();
    Ok(vec![
        CheckResult::at_most(
            "ordered_bound_violations",
            violations as f64,
            0.0,
            format!("{realizations} realizations, K=50, heterogeneous gamma"),
        ),
        CheckResult::at_most(
            "antennas_with_two_beams_above_one",
            multi as f64,
            0.0,
            format!("{realizations} realizations"),
        ),
    ])
}

fn candidate_sets(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let cfg = NetworkConfig::homogeneous(1, 2, 2, 1, 100, ten_db(), opts.seed)?;
    let beta = calibrate_closed_form(&cfg)?;
    let trials = 4000u64;
    let rounds: Vec<(Vec<usize>, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let out = run_round(&cfg, &beta, t, true)?;
            let sets = out.debug.expect("debug requested").sets;
            let sizes = sets.cells.iter().flat_map(|c| c.sizes()).collect();
            Ok((sizes, sets.is_disjoint()))
        })
        .collect::<Result<_>>()?;
    let acc: MeanAccumulator = rounds
        .iter()
        .flat_map(|(s, _)| s.iter().map(|v| *v as f64))
        .collect();
    let overlapping = rounds.iter().filter(|(_, d)| !d).count();
    Ok(vec![
        CheckResult::at_most(
            "candidate_set_mean",
            (acc.mean() - 1.0).abs(),
            0.05,
            format!("mean |H| = {:.4} over {trials} trials, K=100", acc.mean()),
        ),
        CheckResult::at_most(
            "overlapping_candidate_sets",
            overlapping as f64,
            0.0,
            format!("{trials} trials"),
        ),
    ])
}

fn candidacy_frequency(opts: &VerifyOptions) -> Result<CheckResult> {
    let (k, n_r) = (20, 2);
    let att = AttenuationProfile::log_uniform_db(1, 1, k, -10.0, 10.0, opts.seed)?;
    let cfg = NetworkConfig::new(1, 1, 2, n_r, k, ten_db(), att, opts.seed)?;
    let beta = calibrate_beta(&cfg, 100_000)?;
    let trials = 10_000u64;
    let per_round: Vec<Vec<(usize, usize)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let out = run_round(&cfg, &beta, t, true)?;
            Ok(out
                .debug
                .expect("debug requested")
                .messages
                .iter()
                .map(|m| (m.k, m.i))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0u64; k * n_r];
    for round in &per_round {
        for (kk, i) in round {
            counts[kk * n_r + i] += 1;
        }
    }
    let p = 1.0 / (k * n_r) as f64;
    let opportunities = (trials as usize * cfg.cell_beams()) as f64;
    let worst = counts
        .iter()
        .map(|c| (*c as f64 / opportunities / p - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(CheckResult::at_most(
        "candidacy_frequency",
        worst,
        0.2,
        format!(
            "max relative deviation from 1/(K N_r) over {} antennas, {trials} rounds, min beta {:.3}",
            k * n_r,
            beta.min()
        ),
    ))
}

fn monotonicity(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = RngPolicy::new(opts.seed).stream(domain::VERIFY, 0);
    let mut violations = 0usize;
    for _ in 0..100 {
        let k: u64 = rng.random_range(2..=20);
        let j: u64 = rng.random_range(0..k);
        let mut prev = f64::NEG_INFINITY;
        for p in 0..1000 {
            let v = f_monotone(p as f64 / 999.0, j, k)?;
            if v < prev {
                violations += 1;
            }
            prev = v;
        }
    }
    Ok(CheckResult::at_most(
        "order_stat_monotonicity",
        violations as f64,
        0.0,
        "100 random (K <= 20, j) pairs on 1000-point grids".into(),
    ))
}

/// Distance of the empirical mean from the bracket, in standard errors. The
/// bracket is narrower than the Monte-Carlo error beyond small `K`, so the
/// check asks for consistency rather than strict containment.
fn exponential_bracket(opts: &VerifyOptions) -> Result<CheckResult> {
    let draws = 200_000;
    let mut worst = 0.0f64;
    for (idx, k) in [1usize, 10].into_iter().enumerate() {
        let (lo, hi) = exponential_max_mean_bounds(k)?;
        let mut rng = RngPolicy::new(opts.seed).stream(domain::VERIFY, 1 + idx as u64);
        let acc = exponential_max_mean_empirical(k, draws, &mut rng);
        let gap = (lo - acc.mean()).max(acc.mean() - hi).max(0.0);
        worst = worst.max(gap / acc.std_err());
    }
    Ok(CheckResult::at_most(
        "exponential_max_bracket",
        worst,
        3.0,
        format!("standard errors outside the bracket, K in {{1, 10}}, {draws} draws"),
    ))
}

fn isotropy(opts: &VerifyOptions) -> Result<CheckResult> {
    let n_t = 3;
    let n = 20_000;
    let xs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngPolicy::new(opts.seed).stream(domain::VERIFY, 100 + t);
            let w = sample_beamformers(n_t, &mut rng);
            w[(0, 0)].norm_sqr()
        })
        .collect();
    let d = ks_distance(&xs, |x| 1.0 - (1.0 - x.clamp(0.0, 1.0)).powi(n_t as i32 - 1));
    Ok(CheckResult::at_most(
        "beamformer_isotropy_ks",
        d,
        ks_critical(n),
        format!("|e1 . w|^2 against Beta(1, {}), {n} matrices", n_t - 1),
    ))
}

fn scaling_quadrature(opts: &VerifyOptions) -> Result<CheckResult> {
    let w = MixtureWeights::point_mass(50, 1)?;
    let mut rng = RngPolicy::new(opts.seed).stream(domain::VERIFY, 3);
    let mc = scaling_integral(1.0, &w, 200_000, &mut rng)?;
    let quad = scaling_integral_quadrature(1.0, &w, 20_000)?;
    Ok(CheckResult::at_most(
        "scaling_integral_quadrature",
        (mc.mean - quad).abs() / quad,
        0.01,
        format!("Monte Carlo {:.5} vs quadrature {quad:.5}, K=50", mc.mean),
    ))
}

/// Runs every suite. Checks are independent; a failing one does not stop
/// the others.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = vec![sinr_cdf_homogeneous(opts)?];
    checks.extend(bound_cdfs_heterogeneous(opts)?);
    checks.extend(ordered_bounds(opts)?);
    checks.extend(candidate_sets(opts)?);
    checks.push(candidacy_frequency(opts)?);
    checks.push(monotonicity(opts)?);
    checks.push(exponential_bracket(opts)?);
    checks.push(isotropy(opts)?);
    checks.push(scaling_quadrature(opts)?);
    Ok(VerifyReport {
        version: super::run::version_string(),
        seed: opts.seed,
        fault: opts.fault,
        passed: checks.iter().all(|c| c.pass),
        checks,
    })
}
