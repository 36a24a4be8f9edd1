//! Per-antenna SINR tables, the analytic lower/upper surrogates `S` and `T`,
//! and their closed-form CDFs.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ChannelRealization, Extremes, NetworkConfig};

/// Lower and upper bound tables, same layout as [`SinrTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

/// `sinr[n][k][i][r][l]`: SINR of receive antenna `i` of user `(n, k)` when
/// served along beam `l` of base-station `r` of its own super-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTable {
    m: usize,
    q: usize,
    k: usize,
    n_t: usize,
    n_r: usize,
    sinr: Vec<f64>,
    bounds: Option<BoundTable>,
}

/// Read-only slice of a [`SinrTable`] for a single super-cell.
#[derive(Debug, Clone, Copy)]
pub struct CellSinr<'a> {
    pub k: usize,
    pub n_r: usize,
    pub q: usize,
    pub n_t: usize,
    data: &'a [f64],
}

impl<'a> CellSinr<'a> {
    pub fn new(k: usize, n_r: usize, q: usize, n_t: usize, data: &'a [f64]) -> Result<Self> {
        if data.len() != k * n_r * q * n_t {
            return Err(Error::Dimension(format!(
                "cell slice has {} entries, expected {}",
                data.len(),
                k * n_r * q * n_t
            )));
        }
        Ok(Self {
            k,
            n_r,
            q,
            n_t,
            data,
        })
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, r: usize, l: usize) -> f64 {
        self.data[((k * self.n_r + i) * self.q + r) * self.n_t + l]
    }

    /// The `Q * N_t` SINRs of one antenna, indexed `r * N_t + l`.
    #[inline]
    pub fn antenna(&self, k: usize, i: usize) -> &'a [f64] {
        let len = self.q * self.n_t;
        let start = (k * self.n_r + i) * len;
        &self.data[start..start + len]
    }
}

impl SinrTable {
    /// Wraps precomputed values laid out as `[n][k][i][r][l]`.
    pub fn from_values(
        m: usize,
        q: usize,
        k: usize,
        n_t: usize,
        n_r: usize,
        sinr: Vec<f64>,
    ) -> Result<Self> {
        if sinr.len() != m * k * n_r * q * n_t {
            return Err(Error::Dimension(format!(
                "SINR table has {} entries, expected {}",
                sinr.len(),
                m * k * n_r * q * n_t
            )));
        }
        if sinr.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain("SINR entries must be finite and >= 0".into()));
        }
        Ok(Self {
            m,
            q,
            k,
            n_t,
            n_r,
            sinr,
            bounds: None,
        })
    }

    #[inline]
    fn index(&self, n: usize, k: usize, i: usize, r: usize, l: usize) -> usize {
        (((n * self.k + k) * self.n_r + i) * self.q + r) * self.n_t + l
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, i: usize, r: usize, l: usize) -> f64 {
        self.sinr[self.index(n, k, i, r, l)]
    }

    pub fn cell(&self, n: usize) -> CellSinr<'_> {
        let len = self.k * self.n_r * self.q * self.n_t;
        CellSinr {
            k: self.k,
            n_r: self.n_r,
            q: self.q,
            n_t: self.n_t,
            data: &self.sinr[n * len..(n + 1) * len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.sinr
    }

    pub fn bounds(&self) -> Option<&BoundTable> {
        self.bounds.as_ref()
    }

    pub fn s(&self, n: usize, k: usize, i: usize, r: usize, l: usize) -> Option<f64> {
        let idx = self.index(n, k, i, r, l);
        self.bounds.as_ref().map(|b| b.s[idx])
    }

    pub fn t(&self, n: usize, k: usize, i: usize, r: usize, l: usize) -> Option<f64> {
        let idx = self.index(n, k, i, r, l);
        self.bounds.as_ref().map(|b| b.t[idx])
    }

    pub fn dims(&self) -> (usize, usize, usize, usize, usize) {
        (self.m, self.q, self.k, self.n_t, self.n_r)
    }

    /// One row per `(n, k, i, r, l)`; `s` and `t` columns are present when
    /// bounds were computed.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        if self.bounds.is_some() {
            w.write_record(["n", "k", "i", "r", "l", "sinr", "s", "t"])?;
        } else {
            w.write_record(["n", "k", "i", "r", "l", "sinr"])?;
        }
        for n in 0..self.m {
            for k in 0..self.k {
                for i in 0..self.n_r {
                    for r in 0..self.q {
                        for l in 0..self.n_t {
                            let idx = self.index(n, k, i, r, l);
                            let mut rec = vec![
                                n.to_string(),
                                k.to_string(),
                                i.to_string(),
                                r.to_string(),
                                l.to_string(),
                                format!("{:e}", self.sinr[idx]),
                            ];
                            if let Some(b) = &self.bounds {
                                rec.push(format!("{:e}", b.s[idx]));
                                rec.push(format!("{:e}", b.t[idx]));
                            }
                            w.write_record(&rec)?;
                        }
                    }
                }
            }
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(())
    }
}

/// Raw beam gains `|h_i w|^2` for every beam in the network, indexed
/// `(m * Q + r) * N_t + l`.
pub(crate) fn fill_gains<'a>(
    m: usize,
    q: usize,
    n_t: usize,
    row: impl Fn(usize, usize) -> &'a [Complex64],
    beam: impl Fn(usize, usize, usize) -> &'a [Complex64],
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), m * q * n_t);
    for mm in 0..m {
        for r in 0..q {
            let h = row(mm, r);
            for l in 0..n_t {
                let w = beam(mm, r, l);
                let z: Complex64 = h.iter().zip(w).map(|(a, b)| a * b).sum();
                out[(mm * q + r) * n_t + l] = z.norm_sqr();
            }
        }
    }
}

/// SINRs over the `Q * N_t` beams of super-cell `n`, from raw gains and the
/// user's attenuation row (indexed `m * Q + r`).
///
/// The denominator is the attenuated power of every beam in the network minus
/// the serving beam's own term, plus `1/rho`.
pub(crate) fn sinr_from_gains(
    gains: &[f64],
    gamma_row: &[f64],
    n: usize,
    q: usize,
    n_t: usize,
    rho: f64,
    out: &mut [f64],
) {
    let total: f64 = gains
        .iter()
        .enumerate()
        .map(|(idx, g)| gamma_row[idx / n_t] * g)
        .sum();
    for r in 0..q {
        let gamma = gamma_row[n * q + r];
        for l in 0..n_t {
            let own = gamma * gains[(n * q + r) * n_t + l];
            let interference = (total - own).max(0.0);
            out[r * n_t + l] = own / (interference + 1.0 / rho);
        }
    }
}

/// `S` and `T` surrogates over the beams of super-cell `n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bounds_from_gains(
    gains: &[f64],
    n: usize,
    q: usize,
    n_t: usize,
    rho: f64,
    ext: &Extremes,
    out_s: &mut [f64],
    out_t: &mut [f64],
) {
    let total: f64 = gains.iter().sum();
    let (ratio_s, noise_s) = (ext.zeta2 / ext.eta1, 1.0 / (rho * ext.eta1));
    let (ratio_t, noise_t) = (ext.zeta1 / ext.eta2, 1.0 / (rho * ext.eta2));
    for r in 0..q {
        for l in 0..n_t {
            let own = gains[(n * q + r) * n_t + l];
            let rest = (total - own).max(0.0);
            out_s[r * n_t + l] = own / (ratio_s * rest + noise_s);
            out_t[r * n_t + l] = own / (ratio_t * rest + noise_t);
        }
    }
}

fn check_dims(cfg: &NetworkConfig, ch: &ChannelRealization) {
    assert_eq!(
        ch.dims(),
        (cfg.m, cfg.q, cfg.k, cfg.n_t, cfg.n_r),
        "channel realization does not match the configuration"
    );
}

fn build(cfg: &NetworkConfig, ch: &ChannelRealization, with_bounds: bool) -> SinrTable {
    check_dims(cfg, ch);
    let (m, q, k, n_t, n_r) = (cfg.m, cfg.q, cfg.k, cfg.n_t, cfg.n_r);
    let per_antenna = q * n_t;
    let len = m * k * n_r * per_antenna;
    let mut sinr = vec![0.0; len];
    let mut bounds = with_bounds.then(|| BoundTable {
        s: vec![0.0; len],
        t: vec![0.0; len],
    });
    let mut gains = vec![0.0; m * q * n_t];
    for n in 0..m {
        let ext = cfg.attenuation.extremes(n);
        for kk in 0..k {
            let gamma_row = cfg.attenuation.row(n, kk);
            for i in 0..n_r {
                fill_gains(
                    m,
                    q,
                    n_t,
                    |mm, r| ch.channel_row(n, kk, mm, r, i),
                    |mm, r, l| ch.beam(mm, r, l),
                    &mut gains,
                );
                let start = ((n * k + kk) * n_r + i) * per_antenna;
                let range = start..start + per_antenna;
                sinr_from_gains(&gains, gamma_row, n, q, n_t, cfg.rho, &mut sinr[range.clone()]);
                if let Some(b) = bounds.as_mut() {
                    bounds_from_gains(
                        &gains,
                        n,
                        q,
                        n_t,
                        cfg.rho,
                        &ext,
                        &mut b.s[range.clone()],
                        &mut b.t[range],
                    );
                }
            }
        }
    }
    SinrTable {
        m,
        q,
        k,
        n_t,
        n_r,
        sinr,
        bounds,
    }
}

/// SINR of every (user, antenna, serving beam) triple.
pub fn compute_sinr_table(cfg: &NetworkConfig, ch: &ChannelRealization) -> SinrTable {
    build(cfg, ch, false)
}

/// SINR table together with its `S`/`T` sandwich.
pub fn compute_sinr_table_with_bounds(cfg: &NetworkConfig, ch: &ChannelRealization) -> SinrTable {
    build(cfg, ch, true)
}

/// The `S` and `T` tables alone.
pub fn compute_bounds(cfg: &NetworkConfig, ch: &ChannelRealization) -> BoundTable {
    build(cfg, ch, true)
        .bounds
        .expect("bounds requested")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `F1`, the CDF of the lower surrogate `S`.
    Lower,
    /// `F2`, the CDF of the upper surrogate `T`.
    Upper,
}

/// Closed-form CDF of `S` or `T` for super-cell `n`:
/// `1 - exp(-x / (rho * eta)) / (ratio * x + 1)^(MQN_t - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormCdf {
    pub kind: BoundKind,
    pub n: usize,
    pub rho: f64,
    pub total_beams: usize,
    pub extremes: Extremes,
}

impl ClosedFormCdf {
    pub fn lower(cfg: &NetworkConfig, n: usize) -> Self {
        Self {
            kind: BoundKind::Lower,
            n,
            rho: cfg.rho,
            total_beams: cfg.total_beams(),
            extremes: cfg.attenuation.extremes(n),
        }
    }

    pub fn upper(cfg: &NetworkConfig, n: usize) -> Self {
        Self {
            kind: BoundKind::Upper,
            ..Self::lower(cfg, n)
        }
    }

    /// `(interference ratio, rho * eta)` for this kind.
    pub fn parameters(&self) -> (f64, f64) {
        let e = &self.extremes;
        match self.kind {
            BoundKind::Lower => (e.zeta2 / e.eta1, self.rho * e.eta1),
            BoundKind::Upper => (e.zeta1 / e.eta2, self.rho * e.eta2),
        }
    }

    /// `1 - F(x)`, for `x >= 0`.
    pub fn survival(&self, x: f64) -> f64 {
        let (ratio, snr) = self.parameters();
        let interferers = (self.total_beams - 1) as f64;
        (-x / snr - interferers * (ratio * x).ln_1p()).exp()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x < 0.0 {
            return Err(Error::Domain(format!("CDF argument must be >= 0, got {x}")));
        }
        let (ratio, snr) = self.parameters();
        let interferers = (self.total_beams - 1) as f64;
        Ok(-(-x / snr - interferers * (ratio * x).ln_1p()).exp_m1())
    }
}
