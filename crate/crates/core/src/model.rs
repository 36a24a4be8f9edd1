//! Network model: dimensions, attenuation profile, channel and beamformer
//! sampling, and per-trial random streams.
//!
//! Indexing follows the usual convention of the scheduler: `n` is the user's
//! super-cell, `k` the user within it, `m` the transmitting super-cell and `r`
//! the base-station inside super-cell `m`. All containers are flat vectors
//! with row-major index helpers.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `N_t x N_t` matrix whose columns are the orthonormal beams of one
/// base-station. Column-major, so each beam is a contiguous slice.
pub type BeamMatrix = DMatrix<Complex64>;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// How an [`AttenuationProfile`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    Homogeneous { value: f64 },
    LogUniformDb { min_db: f64, max_db: f64 },
    Custom,
}

/// Extremes of the attenuation seen by the users of one super-cell.
///
/// `zeta` ranges over every (m, k, r), `eta` only over the serving
/// super-cell (m = n), so `zeta1 <= eta1 <= eta2 <= zeta2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub zeta1: f64,
    pub zeta2: f64,
    pub eta1: f64,
    pub eta2: f64,
}

/// Combined power / path-loss coefficients `gamma[n][k][m][r]` between
/// base-station `r` of super-cell `m` and user `k` of super-cell `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationProfile {
    m: usize,
    q: usize,
    k: usize,
    gamma: Vec<f64>,
    kind: ProfileKind,
}

impl AttenuationProfile {
    pub fn homogeneous(m: usize, q: usize, k: usize, value: f64) -> Result<Self> {
        Self::build(
            m,
            q,
            k,
            vec![value; m * k * m * q],
            ProfileKind::Homogeneous { value },
        )
    }

    /// Independent entries, uniform in dB over `[min_db, max_db]`.
    pub fn log_uniform_db(
        m: usize,
        q: usize,
        k: usize,
        min_db: f64,
        max_db: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(min_db.is_finite() && max_db.is_finite()) || min_db > max_db {
            return Err(Error::Attenuation(format!(
                "bad dB range [{min_db}, {max_db}]"
            )));
        }
        let mut rng = RngPolicy::new(seed).stream(domain::PROFILE, 0);
        let gamma = (0..m * k * m * q)
            .map(|_| db_to_linear(rng.random_range(min_db..=max_db)))
            .collect();
        Self::build(m, q, k, gamma, ProfileKind::LogUniformDb { min_db, max_db })
    }

    /// Wraps an explicit tensor laid out as `[n][k][m][r]`.
    pub fn from_tensor(m: usize, q: usize, k: usize, gamma: Vec<f64>) -> Result<Self> {
        Self::build(m, q, k, gamma, ProfileKind::Custom)
    }

    fn build(m: usize, q: usize, k: usize, gamma: Vec<f64>, kind: ProfileKind) -> Result<Self> {
        if gamma.len() != m * k * m * q {
            return Err(Error::Attenuation(format!(
                "expected {} entries for (M={m}, K={k}, Q={q}), got {}",
                m * k * m * q,
                gamma.len()
            )));
        }
        if let Some(pos) = gamma.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Attenuation(format!(
                "entry {pos} is {} (must be finite and > 0)",
                gamma[pos]
            )));
        }
        Ok(Self { m, q, k, gamma, kind })
    }

    /// Reads a CSV dump with header `n,k,m,r,gamma`. Every entry must be
    /// present exactly once.
    pub fn from_csv(path: impl AsRef<Path>, m: usize, q: usize, k: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut gamma = vec![f64::NAN; m * k * m * q];
        for rec in rdr.deserialize() {
            let row: GammaRow = rec?;
            if row.n >= m || row.k >= k || row.m >= m || row.r >= q {
                return Err(Error::Attenuation(format!(
                    "{}: index ({},{},{},{}) out of range",
                    path.display(),
                    row.n,
                    row.k,
                    row.m,
                    row.r
                )));
            }
            gamma[((row.n * k + row.k) * m + row.m) * q + row.r] = row.gamma;
        }
        if gamma.iter().any(|g| g.is_nan()) {
            return Err(Error::Attenuation(format!(
                "{}: tensor is incomplete",
                path.display()
            )));
        }
        Self::build(m, q, k, gamma, ProfileKind::Custom)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for n in 0..self.m {
            for k in 0..self.k {
                for m in 0..self.m {
                    for r in 0..self.q {
                        w.serialize(GammaRow {
                            n,
                            k,
                            m,
                            r,
                            gamma: self.get(n, k, m, r),
                        })?;
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, m: usize, r: usize) -> f64 {
        self.gamma[((n * self.k + k) * self.m + m) * self.q + r]
    }

    /// All coefficients seen by user `(n, k)`, indexed `m * Q + r`.
    #[inline]
    pub fn row(&self, n: usize, k: usize) -> &[f64] {
        let len = self.m * self.q;
        let start = (n * self.k + k) * len;
        &self.gamma[start..start + len]
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.q, self.k)
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    /// The common value when every entry is identical.
    pub fn homogeneous_value(&self) -> Option<f64> {
        let first = self.gamma[0];
        self.gamma.iter().all(|g| *g == first).then_some(first)
    }

    pub fn extremes(&self, n: usize) -> Extremes {
        let mut e = Extremes {
            zeta1: f64::INFINITY,
            zeta2: 0.0,
            eta1: f64::INFINITY,
            eta2: 0.0,
        };
        for k in 0..self.k {
            for m in 0..self.m {
                for r in 0..self.q {
                    let g = self.get(n, k, m, r);
                    e.zeta1 = e.zeta1.min(g);
                    e.zeta2 = e.zeta2.max(g);
                    if m == n {
                        e.eta1 = e.eta1.min(g);
                        e.eta2 = e.eta2.max(g);
                    }
                }
            }
        }
        e
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GammaRow {
    n: usize,
    k: usize,
    m: usize,
    r: usize,
    gamma: f64,
}

/// Stream domains, so that channel draws, user selection and calibration
/// never share random numbers.
pub mod domain {
    pub const CHANNEL: u64 = 1;
    pub const SELECTION: u64 = 2;
    pub const CALIBRATION: u64 = 3;
    pub const PROFILE: u64 = 4;
    pub const ANALYSIS: u64 = 5;
    pub const VERIFY: u64 = 6;
}

/// Derives independent ChaCha streams from a master seed.
///
/// The key is `splitmix64(seed ^ splitmix64(domain))` and the ChaCha stream id
/// is the index, so trial `t` always maps to the same 2^64-block stream no
/// matter which worker runs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub seed: u64,
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, domain: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(domain)));
        rng.set_stream(index);
        rng
    }

    pub fn trial_stream(&self, trial: u64) -> ChaCha8Rng {
        self.stream(domain::CHANNEL, trial)
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Dimensions, power and attenuation of the whole network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of super-cells.
    pub m: usize,
    /// Base-stations per super-cell.
    pub q: usize,
    /// Transmit antennas per base-station.
    pub n_t: usize,
    /// Receive antennas per user.
    pub n_r: usize,
    /// Users per super-cell.
    pub k: usize,
    /// Linear SNR per stream (P / N_t).
    pub rho: f64,
    pub attenuation: AttenuationProfile,
    pub seed: u64,
}

impl NetworkConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        m: usize,
        q: usize,
        n_t: usize,
        n_r: usize,
        k: usize,
        rho: f64,
        attenuation: AttenuationProfile,
        seed: u64,
    ) -> Result<Self> {
        for (name, v) in [("M", m), ("Q", q), ("N_t", n_t), ("N_r", n_r), ("K", k)] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::config("rho", format!("must be finite and > 0, got {rho}")));
        }
        if attenuation.dims() != (m, q, k) {
            let (am, aq, ak) = attenuation.dims();
            return Err(Error::config(
                "attenuation",
                format!("profile is (M={am}, Q={aq}, K={ak}) but network is (M={m}, Q={q}, K={k})"),
            ));
        }
        Ok(Self {
            m,
            q,
            n_t,
            n_r,
            k,
            rho,
            attenuation,
            seed,
        })
    }

    /// All attenuation coefficients equal to one.
    pub fn homogeneous(
        m: usize,
        q: usize,
        n_t: usize,
        n_r: usize,
        k: usize,
        rho: f64,
        seed: u64,
    ) -> Result<Self> {
        let att = AttenuationProfile::homogeneous(m.max(1), q.max(1), k.max(1), 1.0)?;
        Self::new(m, q, n_t, n_r, k, rho, att, seed)
    }

    /// Beams in the whole network, `M * Q * N_t`.
    pub fn total_beams(&self) -> usize {
        self.m * self.q * self.n_t
    }

    /// Beams owned by one super-cell, `Q * N_t`.
    pub fn cell_beams(&self) -> usize {
        self.q * self.n_t
    }

    /// `ceil(log2(Q * N_t))`, the cost of one beam-index report.
    pub fn feedback_bits(&self) -> u32 {
        ceil_log2(self.cell_beams())
    }

    /// Quantile level used for the normalization factors, `1 - 1/(K N_r)`.
    pub fn quantile_target(&self) -> f64 {
        1.0 - 1.0 / (self.k * self.n_r) as f64
    }

    pub fn rng(&self) -> RngPolicy {
        RngPolicy::new(self.seed)
    }
}

pub fn ceil_log2(x: usize) -> u32 {
    if x <= 1 {
        0
    } else {
        usize::BITS - (x - 1).leading_zeros()
    }
}

/// Channel matrices and beamformers for one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    m: usize,
    q: usize,
    k: usize,
    n_t: usize,
    n_r: usize,
    h: Vec<Complex64>,
    beams: Vec<BeamMatrix>,
}

impl ChannelRealization {
    /// Builds a realization from explicit parts. `h` is laid out as
    /// `[n][k][m][r][i][t]` and `beams` as `[m][r]`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        m: usize,
        q: usize,
        k: usize,
        n_t: usize,
        n_r: usize,
        h: Vec<Complex64>,
        beams: Vec<BeamMatrix>,
    ) -> Result<Self> {
        if h.len() != m * k * m * q * n_r * n_t {
            return Err(Error::Dimension(format!(
                "channel tensor has {} entries, expected {}",
                h.len(),
                m * k * m * q * n_r * n_t
            )));
        }
        if beams.len() != m * q || beams.iter().any(|b| b.shape() != (n_t, n_t)) {
            return Err(Error::Dimension(format!(
                "expected {} beam matrices of shape {n_t}x{n_t}",
                m * q
            )));
        }
        Ok(Self {
            m,
            q,
            k,
            n_t,
            n_r,
            h,
            beams,
        })
    }

    /// Row `i` of the channel from base-station `(m, r)` to user `(n, k)`.
    #[inline]
    pub fn channel_row(&self, n: usize, k: usize, m: usize, r: usize, i: usize) -> &[Complex64] {
        let start = ((((n * self.k + k) * self.m + m) * self.q + r) * self.n_r + i) * self.n_t;
        &self.h[start..start + self.n_t]
    }

    /// The full `N_r x N_t` channel matrix from `(m, r)` to `(n, k)`.
    pub fn channel_matrix(&self, n: usize, k: usize, m: usize, r: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n_r, self.n_t, |i, t| self.channel_row(n, k, m, r, i)[t])
    }

    pub fn beams(&self, m: usize, r: usize) -> &BeamMatrix {
        &self.beams[m * self.q + r]
    }

    /// Beam `l` of base-station `(m, r)`.
    #[inline]
    pub fn beam(&self, m: usize, r: usize, l: usize) -> &[Complex64] {
        let b = &self.beams[m * self.q + r];
        &b.as_slice()[l * self.n_t..(l + 1) * self.n_t]
    }

    /// Number of channel matrices, `M * K * M * Q`.
    pub fn matrix_count(&self) -> usize {
        self.m * self.k * self.m * self.q
    }

    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        (self.m, self.q, self.k, self.n_t, self.n_r)
    }

    pub fn raw_channels(&self) -> &[Complex64] {
        &self.h
    }
}

#[inline]
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws an isotropically distributed (Haar) unitary matrix.
///
/// Householder QR of an i.i.d. CN(0,1) matrix, with the phases of `R`'s
/// diagonal moved into `Q` so that the factorization is unique.
pub fn sample_beamformers<R: Rng + ?Sized>(n_t: usize, rng: &mut R) -> BeamMatrix {
    assert!(n_t >= 1, "N_t must be >= 1");
    loop {
        let g = DMatrix::from_fn(n_t, n_t, |_, _| complex_gaussian(rng));
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        let mut degenerate = false;
        for j in 0..n_t {
            let d = r[(j, j)];
            let mag = d.norm();
            if mag < 1e-12 {
                degenerate = true;
                break;
            }
            let phase = d / mag;
            for x in q.column_mut(j).iter_mut() {
                *x *= phase;
            }
        }
        if !degenerate {
            return q;
        }
    }
}

/// Draws every channel matrix and beamformer set for trial `trial`.
pub fn sample_channels(cfg: &NetworkConfig, trial: u64) -> ChannelRealization {
    let mut rng = cfg.rng().trial_stream(trial);
    let beams = (0..cfg.m * cfg.q)
        .map(|_| sample_beamformers(cfg.n_t, &mut rng))
        .collect();
    let len = cfg.m * cfg.k * cfg.m * cfg.q * cfg.n_r * cfg.n_t;
    let h = (0..len).map(|_| complex_gaussian(&mut rng)).collect();
    ChannelRealization {
        m: cfg.m,
        q: cfg.q,
        k: cfg.k,
        n_t: cfg.n_t,
        n_r: cfg.n_r,
        h,
        beams,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_max_offdiag_and_diag_err(b: &BeamMatrix) -> f64 {
        let g = b.adjoint() * b;
        let n = b.ncols();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    #[test]
    fn beamformers_are_orthonormal() {
        let mut rng = RngPolicy::new(7).stream(domain::VERIFY, 0);
        for n_t in 1..=6 {
            for _ in 0..50 {
                let b = sample_beamformers(n_t, &mut rng);
                assert!(gram_max_offdiag_and_diag_err(&b) < 1e-10);
            }
        }
    }

    #[test]
    fn single_antenna_beam_is_unit_modulus() {
        let mut rng = RngPolicy::new(3).stream(domain::VERIFY, 1);
        let b = sample_beamformers(1, &mut rng);
        assert!((b[(0, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channel_bookkeeping() {
        let cfg = NetworkConfig::homogeneous(2, 2, 2, 3, 4, 10.0, 1).unwrap();
        let ch = sample_channels(&cfg, 0);
        assert_eq!(ch.matrix_count(), 32);
        assert_eq!(ch.channel_matrix(1, 3, 0, 1).shape(), (3, 2));
        assert_eq!(ch.raw_channels().len(), 32 * 6);
    }

    #[test]
    fn same_trial_is_bitwise_identical() {
        let cfg = NetworkConfig::homogeneous(2, 2, 3, 2, 5, 10.0, 99).unwrap();
        assert_eq!(sample_channels(&cfg, 17), sample_channels(&cfg, 17));
        assert_ne!(sample_channels(&cfg, 17), sample_channels(&cfg, 18));
    }

    #[test]
    fn unit_variance_channel_entries() {
        let cfg = NetworkConfig::homogeneous(1, 1, 1, 1, 1, 1.0, 5).unwrap();
        let trials = 100_000u64;
        let mean: f64 = (0..trials)
            .map(|t| sample_channels(&cfg, t).raw_channels()[0].norm_sqr())
            .sum::<f64>()
            / trials as f64;
        assert!((mean - 1.0).abs() < 0.02, "E|h|^2 = {mean}");
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::homogeneous(0, 1, 1, 1, 1, 1.0, 0).is_err());
        assert!(NetworkConfig::homogeneous(1, 1, 1, 1, 1, 0.0, 0).is_err());
        let att = AttenuationProfile::homogeneous(2, 1, 3, 1.0).unwrap();
        let err = NetworkConfig::new(2, 1, 1, 1, 4, 1.0, att, 0).unwrap_err();
        assert!(err.to_string().contains("attenuation"));
        assert!(AttenuationProfile::from_tensor(1, 1, 1, vec![-1.0]).is_err());
        assert!(AttenuationProfile::from_tensor(1, 1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn extremes_respect_set_inclusion() {
        let att = AttenuationProfile::log_uniform_db(3, 2, 10, -10.0, 10.0, 4).unwrap();
        for n in 0..3 {
            let e = att.extremes(n);
            assert!(e.zeta1 <= e.eta1 && e.eta1 <= e.eta2 && e.eta2 <= e.zeta2);
        }
        let h = AttenuationProfile::homogeneous(2, 2, 3, 1.0).unwrap();
        let e = h.extremes(1);
        assert_eq!((e.zeta1, e.zeta2, e.eta1, e.eta2), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn attenuation_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let att = AttenuationProfile::log_uniform_db(2, 2, 3, -5.0, 5.0, 11).unwrap();
        att.write_csv(&path).unwrap();
        let back = AttenuationProfile::from_csv(&path, 2, 2, 3).unwrap();
        assert_eq!(back.as_slice(), att.as_slice());
        assert!(AttenuationProfile::from_csv(&path, 2, 2, 4).is_err());
    }

    #[test]
    fn bit_cost() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(6), 3);
        assert_eq!(ceil_log2(8), 3);
        assert_eq!(ceil_log2(9), 4);
    }
}
