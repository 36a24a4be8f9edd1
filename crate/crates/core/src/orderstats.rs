//! Order statistics of unit-exponential samples and the rate bounds built on
//! them.
//!
//! The rate analysis replaces the SINR order statistics by those of a unit
//! exponential parent `G(x) = 1 - exp(-x)`, mixed over ranks with weights
//! `q[j]` derived from the candidate-set size distribution. Everything here
//! is a stateless numeric kernel; random estimators take the stream they use.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::model::NetworkConfig;
use crate::stats::MeanAccumulator;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `ln[C(K, i) u^(K-i) (1-u)^i]`, with `0 * ln 0 = 0`.
fn ln_binomial_term(k: u64, i: u64, ln_u: f64, ln_1mu: f64) -> f64 {
    let a = if k - i == 0 { 0.0 } else { (k - i) as f64 * ln_u };
    let b = if i == 0 { 0.0 } else { i as f64 * ln_1mu };
    ln_binomial(k, i) + a + b
}

fn binomial_terms(u: f64, k: u64, upto: u64) -> impl Iterator<Item = f64> {
    let (ln_u, ln_1mu) = (u.ln(), (-u).ln_1p());
    (0..=upto).map(move |i| ln_binomial_term(k, i, ln_u, ln_1mu).exp())
}

/// `sum_{i <= upto} C(K, i) u^(K-i) (1-u)^i`. Above one half the value is
/// taken as one minus the upper tail, which is small there and accurate to
/// a few ulps, so the result stays monotone in `u` after rounding.
fn binomial_lower_sum(u: f64, k: u64, upto: u64) -> f64 {
    let lower: f64 = binomial_terms(u, k, upto).sum();
    if lower <= 0.5 || upto >= k {
        return lower.min(1.0);
    }
    let (ln_u, ln_1mu) = (u.ln(), (-u).ln_1p());
    let upper: f64 = (upto + 1..=k)
        .map(|i| ln_binomial_term(k, i, ln_u, ln_1mu).exp())
        .sum();
    (1.0 - upper).clamp(0.0, 1.0)
}

fn check_probability(u: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("probability must lie in [0, 1], got {u}")));
    }
    Ok(())
}

/// CDF of the `j`-th largest of `K` i.i.d. draws, given the parent CDF value
/// `u`: `sum_{i < j} C(K, i) u^(K-i) (1-u)^i`.
pub fn order_stat_cdf(u: f64, k: u64, j: u64) -> Result<f64> {
    check_probability(u)?;
    if j == 0 || j > k {
        return Err(Error::Domain(format!("rank {j} outside 1..={k}")));
    }
    Ok(binomial_lower_sum(u, k, j - 1))
}

/// `f(x, j) = sum_{i <= j} C(K, i) x^(K-i) (1-x)^i`, increasing in `x`.
pub fn f_monotone(x: f64, j: u64, k: u64) -> Result<f64> {
    check_probability(x)?;
    if j >= k {
        return Err(Error::Domain(format!("index {j} outside 0..{k}")));
    }
    Ok(binomial_lower_sum(x, k, j))
}

/// Rank weights `q[0..=K]`. `q[0]` is the mass of an empty candidate set,
/// which contributes no rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    q: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.len() < 2 {
            return Err(Error::Domain("need weights for j = 0 and j >= 1".into()));
        }
        if q.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain("weights must be finite and >= 0".into()));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("weights sum to {total}, not 1")));
        }
        if q[1..].iter().all(|w| *w == 0.0) {
            return Err(Error::Domain("no weight on any rank j >= 1".into()));
        }
        Ok(Self { q })
    }

    /// All mass on rank `j` (the `j`-th largest).
    pub fn point_mass(k: usize, j: usize) -> Result<Self> {
        if j == 0 || j > k {
            return Err(Error::Domain(format!("rank {j} outside 1..={k}")));
        }
        let mut q = vec![0.0; k + 1];
        q[j] = 1.0;
        Self::new(q)
    }

    /// Folds a candidate-set size PMF `P(|H| = b)`, `b = 0..=K`, into rank
    /// weights: `q[j] = sum_{b >= j} P(b) / b`, `q[0] = P(0)`.
    pub fn from_set_size_pmf(pmf: &[f64]) -> Result<Self> {
        let k = pmf.len() - 1;
        let mut q = vec![0.0; k + 1];
        q[0] = pmf[0];
        let mut tail = 0.0;
        for b in (1..=k).rev() {
            tail += pmf[b] / b as f64;
            q[b] = tail;
        }
        Self::new(q)
    }

    pub fn k(&self) -> usize {
        self.q.len() - 1
    }

    pub fn get(&self, j: usize) -> f64 {
        self.q[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// `sum_{j >= 1} q[j] = 1 - q[0]`.
    pub fn active_mass(&self) -> f64 {
        self.q[1..].iter().sum()
    }

    /// `sum_j j q[j]`.
    pub fn first_moment(&self) -> f64 {
        self.q.iter().enumerate().map(|(j, w)| j as f64 * w).sum()
    }

    /// Largest rank with nonzero weight.
    pub fn max_rank(&self) -> usize {
        self.q.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// Rank weights for `|H| ~ Binomial(K, 1/K)`.
pub fn binomial_candidate_weights(k: usize) -> Result<MixtureWeights> {
    if k == 0 {
        return Err(Error::Domain("K must be >= 1".into()));
    }
    let p = 1.0 / k as f64;
    let (ln_p, ln_1mp) = (p.ln(), (-p).ln_1p());
    let pmf: Vec<f64> = (0..=k as u64)
        .map(|b| {
            let a = if b == 0 { 0.0 } else { b as f64 * ln_p };
            let c = if b == k as u64 { 0.0 } else { (k as u64 - b) as f64 * ln_1mp };
            (ln_binomial(k as u64, b) + a + c).exp()
        })
        .collect();
    MixtureWeights::from_set_size_pmf(&pmf)
}

/// `sum_{j >= 1} q[j] G_(j)(u) / sum_{j >= 1} q[j]`, the rank mixture used as
/// an integrator over served beams.
pub fn mixture_cdf(weights: &MixtureWeights, u: f64) -> Result<f64> {
    check_probability(u)?;
    let k = weights.k() as u64;
    let top = weights.max_rank() as u64;
    // G_(j) = sum_{i < j} T_i, so the mixture is sum_i T_i * sum_{j > i} q[j].
    let q = weights.as_slice();
    let mut tail: Vec<f64> = vec![0.0; top as usize + 1];
    let mut acc = 0.0;
    for j in (1..=top as usize).rev() {
        acc += q[j];
        tail[j - 1] = acc;
    }
    let total: f64 = binomial_terms(u, k, top.saturating_sub(1))
        .enumerate()
        .map(|(i, t)| t * tail[i])
        .sum();
    Ok((total / weights.active_mass()).clamp(0.0, 1.0))
}

/// Draws the `j`-th largest of `K` unit exponentials without materializing
/// all `K`: the top uniforms satisfy `ln U_(K-s) = sum_{t <= s} ln V_t / (K - t)`.
pub(crate) fn sample_exponential_rank<R: Rng + ?Sized>(k: usize, j: usize, rng: &mut R) -> f64 {
    let mut ln_u = 0.0;
    for s in 0..j {
        let v: f64 = rng.random();
        ln_u += (1.0 - v).ln() / (k - s) as f64;
    }
    // x = -ln(1 - U)
    -(-ln_u.exp_m1()).ln()
}

/// Order-statistic draws `X_(j)` with `j ~ q[j] (j >= 1)`.
pub fn rank_mixture_samples<R: Rng + ?Sized>(
    weights: &MixtureWeights,
    samples: usize,
    rng: &mut R,
) -> Vec<f64> {
    let k = weights.k();
    let top = weights.max_rank();
    let ranks = WeightedIndex::new(&weights.as_slice()[1..=top]).expect("validated weights");
    (0..samples)
        .map(|_| {
            let j = ranks.sample(rng) + 1;
            sample_exponential_rank(k, j, rng)
        })
        .collect()
}

/// Monte-Carlo estimate of `int log2(1 + a x) dG^K(x)` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingEstimate {
    pub mean: f64,
    pub std_err: f64,
}

pub fn scaling_integral<R: Rng + ?Sized>(
    a: f64,
    weights: &MixtureWeights,
    samples: usize,
    rng: &mut R,
) -> Result<ScalingEstimate> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Domain(format!("scale must be finite and > 0, got {a}")));
    }
    let xs = rank_mixture_samples(weights, samples, rng);
    Ok(integrate_samples(a, &xs))
}

fn integrate_samples(a: f64, xs: &[f64]) -> ScalingEstimate {
    let acc: MeanAccumulator = xs.iter().map(|x| (a * x).ln_1p() / std::f64::consts::LN_2).collect();
    ScalingEstimate {
        mean: acc.mean(),
        std_err: acc.std_err(),
    }
}

/// Deterministic counterpart of [`scaling_integral`]: trapezoid rule on
/// `int (1 - G^K(x)) a / ((1 + a x) ln 2) dx` over `[0, ln K + 40]`.
pub fn scaling_integral_quadrature(a: f64, weights: &MixtureWeights, grid_points: usize) -> Result<f64> {
    if grid_points < 2 {
        return Err(Error::Domain("need at least two grid points".into()));
    }
    let upper = (weights.k() as f64).ln() + 40.0;
    let h = upper / (grid_points - 1) as f64;
    let mut sum = 0.0;
    for p in 0..grid_points {
        let x = p as f64 * h;
        let u = -(-x).exp_m1();
        let integrand =
            (1.0 - mixture_cdf(weights, u)?) * a / ((1.0 + a * x) * std::f64::consts::LN_2);
        let w = if p == 0 || p == grid_points - 1 { 0.5 } else { 1.0 };
        sum += w * integrand;
    }
    Ok(sum * h)
}

/// Constants of the rate bounds for super-cell `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConstants {
    /// `Q N_t log2((M Q N_t - 1) rho zeta2 eta1 + 1)`.
    pub a_n: f64,
    pub rho_eta1: f64,
    pub rho_eta2: f64,
}

impl BoundConstants {
    pub fn new(cfg: &NetworkConfig, n: usize) -> Self {
        let e = cfg.attenuation.extremes(n);
        let interferers = (cfg.total_beams() - 1) as f64;
        Self {
            a_n: cfg.cell_beams() as f64 * (interferers * cfg.rho * e.zeta2 * e.eta1 + 1.0).log2(),
            rho_eta1: cfg.rho * e.eta1,
            rho_eta2: cfg.rho * e.eta2,
        }
    }
}

/// Numeric lower and upper bounds on the per-super-cell rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    pub lower: f64,
    pub upper: f64,
    pub constants: BoundConstants,
    /// `sum_{j >= 1} q[j]`; the rank sums run over served beams only.
    pub active_mass: f64,
}

/// `Q N_t sum_{j>=1} q[j] E[log2(1 + rho eta X_(j))]`, minus `A_n` for the
/// lower side. Both sides share the same order-statistic draws.
pub fn rate_bounds<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    n: usize,
    weights: &MixtureWeights,
    samples: usize,
    rng: &mut R,
) -> RateBounds {
    let c = BoundConstants::new(cfg, n);
    let xs = rank_mixture_samples(weights, samples, rng);
    let mass = weights.active_mass();
    let beams = cfg.cell_beams() as f64;
    let lo = integrate_samples(c.rho_eta1, &xs).mean;
    let hi = integrate_samples(c.rho_eta2, &xs).mean;
    RateBounds {
        lower: beams * mass * lo - c.a_n,
        upper: beams * mass * hi,
        constants: c,
        active_mass: mass,
    }
}

/// Bracket on the mean of the maximum of `K` unit exponentials (natural log
/// scale): `ln K + gamma + 1/(2(K+1))` and `ln K + gamma + 1/(2K)`.
pub fn exponential_max_mean_bounds(k: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Domain("K must be >= 1".into()));
    }
    let base = (k as f64).ln() + EULER_GAMMA;
    Ok((base + 0.5 / (k as f64 + 1.0), base + 0.5 / k as f64))
}

/// Empirical mean of the maximum of `K` unit exponentials over `draws`
/// independent draws.
pub fn exponential_max_mean_empirical<R: Rng + ?Sized>(
    k: usize,
    draws: usize,
    rng: &mut R,
) -> MeanAccumulator {
    (0..draws)
        .map(|_| {
            (0..k)
                .map(|_| rng.sample::<f64, _>(Exp1))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Counts index-wise violations of `S_(j) <= SINR_(j) <= T_(j)` after sorting
/// each vector in descending order.
pub fn verify_ordered_bounds(s: &[f64], sinr: &[f64], t: &[f64]) -> usize {
    assert!(s.len() == sinr.len() && sinr.len() == t.len());
    let desc = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let (s, x, t) = (desc(s), desc(sinr), desc(t));
    s.iter()
        .zip(&x)
        .zip(&t)
        .filter(|((s, x), t)| {
            let slack = 1e-12 * x.abs();
            **s > **x + slack || **x > **t + slack
        })
        .count()
}

/// [`verify_ordered_bounds`] on the `K` users of super-cell `n` for beam
/// `(r, l)`, antenna `i`.
pub fn verify_ordered_bounds_in_table(
    table: &crate::sinr::SinrTable,
    n: usize,
    r: usize,
    l: usize,
    i: usize,
) -> Result<usize> {
    let (_, _, k, _, _) = table.dims();
    if table.bounds().is_none() {
        return Err(Error::Unsupported("table was computed without bounds".into()));
    }
    let pick = |f: &dyn Fn(usize) -> f64| (0..k).map(f).collect::<Vec<_>>();
    let s = pick(&|kk| table.s(n, kk, i, r, l).unwrap());
    let x = pick(&|kk| table.get(n, kk, i, r, l));
    let t = pick(&|kk| table.t(n, kk, i, r, l).unwrap());
    Ok(verify_ordered_bounds(&s, &x, &t))
}
