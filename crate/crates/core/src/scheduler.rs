//! One scheduling round: best-beam identification, threshold feedback,
//! candidate sets and uniform random selection.
//!
//! Receive antennas are treated as separate users: every `(user, antenna)`
//! pair reports independently and may be served on its own beam.
//! [`feedback_round_cell`] only ever sees the SINR and normalization slices of
//! its own super-cell.

use rand::Rng;
use serde::Serialize;

use crate::calibration::{BetaTable, CellBeta};
use crate::error::{Error, Result};
use crate::model::{domain, sample_channels, NetworkConfig};
use crate::sinr::{compute_sinr_table, compute_sinr_table_with_bounds, CellSinr, SinrTable};

/// A beam-index report from one receive antenna.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeedbackMessage {
    pub n: usize,
    pub k: usize,
    pub i: usize,
    pub r: usize,
    pub l: usize,
    pub bit_cost: u32,
}

/// The beam with the largest normalized SINR for one antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestBeam {
    pub r: usize,
    pub l: usize,
    pub value: f64,
}

/// Argmax of `sinr / beta(r)` over the beams of the super-cell; ties go to
/// the lexicographically smallest `(r, l)`.
pub fn best_beam_in_cell(cell: CellSinr<'_>, beta: CellBeta<'_>, k: usize, i: usize) -> BestBeam {
    let mut best = BestBeam {
        r: 0,
        l: 0,
        value: f64::NEG_INFINITY,
    };
    let row = cell.antenna(k, i);
    for r in 0..cell.q {
        let b = beta.get(k, r);
        for l in 0..cell.n_t {
            let v = row[r * cell.n_t + l] / b;
            if v > best.value {
                best = BestBeam { r, l, value: v };
            }
        }
    }
    best
}

pub fn best_beam(sinr: &SinrTable, beta: &BetaTable, n: usize, k: usize, i: usize) -> BestBeam {
    best_beam_in_cell(sinr.cell(n), beta.cell(n), k, i)
}

/// A `(user, antenna)` pair.
pub type Candidate = (usize, usize);

/// Candidate sets `H(r, l)` of one super-cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCandidates {
    pub n: usize,
    pub q: usize,
    pub n_t: usize,
    pub bit_cost: u32,
    sets: Vec<Vec<Candidate>>,
}

impl CellCandidates {
    pub fn new(n: usize, q: usize, n_t: usize, bit_cost: u32) -> Self {
        Self {
            n,
            q,
            n_t,
            bit_cost,
            sets: vec![Vec::new(); q * n_t],
        }
    }

    pub fn insert(&mut self, r: usize, l: usize, c: Candidate) {
        self.sets[r * self.n_t + l].push(c);
    }

    pub fn set(&self, r: usize, l: usize) -> &[Candidate] {
        &self.sets[r * self.n_t + l]
    }

    pub fn sizes(&self) -> impl Iterator<Item = usize> + '_ {
        self.sets.iter().map(Vec::len)
    }

    /// Number of reports, which equals the total set membership.
    pub fn messages(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn feedback_bits(&self) -> u64 {
        self.messages() as u64 * self.bit_cost as u64
    }

    pub fn is_disjoint(&self) -> bool {
        let mut all: Vec<Candidate> = self.sets.iter().flatten().copied().collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        all.len() == total
    }
}

/// Candidate sets of every super-cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSets {
    pub cells: Vec<CellCandidates>,
}

impl CandidateSets {
    pub fn is_disjoint(&self) -> bool {
        self.cells.iter().all(CellCandidates::is_disjoint)
    }
}

/// Feedback step for super-cell `n`: every antenna whose best normalized SINR
/// reaches one reports that beam.
pub fn feedback_round_cell(
    n: usize,
    cell: CellSinr<'_>,
    beta: CellBeta<'_>,
    bit_cost: u32,
) -> (Vec<FeedbackMessage>, CellCandidates) {
    let mut messages = Vec::new();
    let mut sets = CellCandidates::new(n, cell.q, cell.n_t, bit_cost);
    for k in 0..cell.k {
        for i in 0..cell.n_r {
            let best = best_beam_in_cell(cell, beta, k, i);
            if best.value >= 1.0 {
                messages.push(FeedbackMessage {
                    n,
                    k,
                    i,
                    r: best.r,
                    l: best.l,
                    bit_cost,
                });
                sets.insert(best.r, best.l, (k, i));
            }
        }
    }
    (messages, sets)
}

/// Feedback step for the whole network, one super-cell at a time.
pub fn feedback_round(
    sinr: &SinrTable,
    beta: &BetaTable,
    cfg: &NetworkConfig,
) -> (Vec<FeedbackMessage>, CandidateSets) {
    let bits = cfg.feedback_bits();
    let mut messages = Vec::new();
    let mut cells = Vec::with_capacity(cfg.m);
    for n in 0..cfg.m {
        let (msgs, sets) = feedback_round_cell(n, sinr.cell(n), beta.cell(n), bits);
        messages.extend(msgs);
        cells.push(sets);
    }
    (messages, CandidateSets { cells })
}

/// What happened on one beam of one super-cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamAssignment {
    pub n: usize,
    pub r: usize,
    pub l: usize,
    /// `(k, i)` of the served antenna, `None` for an idle beam.
    pub served: Option<Candidate>,
    pub candidates: usize,
    pub sinr: f64,
    /// `log2(1 + sinr)`, zero when idle.
    pub rate: f64,
}

/// Result of one scheduling round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleOutcome {
    pub m: usize,
    pub q: usize,
    pub n_t: usize,
    /// Ordered by `(n, r, l)`.
    pub assignments: Vec<BeamAssignment>,
    pub messages: Vec<usize>,
    pub feedback_bits: Vec<u64>,
}

impl ScheduleOutcome {
    pub fn cell(&self, n: usize) -> &[BeamAssignment] {
        let per = self.q * self.n_t;
        &self.assignments[n * per..(n + 1) * per]
    }

    pub fn served(&self) -> impl Iterator<Item = &BeamAssignment> {
        self.assignments.iter().filter(|a| a.served.is_some())
    }
}

/// Picks one member of every nonempty candidate set uniformly at random.
pub fn select_users<R: Rng + ?Sized>(
    sets: &CandidateSets,
    sinr: &SinrTable,
    rng: &mut R,
) -> ScheduleOutcome {
    let (m, q, _, n_t, _) = sinr.dims();
    let mut assignments = Vec::with_capacity(m * q * n_t);
    for cell in &sets.cells {
        for r in 0..cell.q {
            for l in 0..cell.n_t {
                let set = cell.set(r, l);
                let served = match set.len() {
                    0 => None,
                    1 => Some(set[0]),
                    len => Some(set[rng.random_range(0..len)]),
                };
                let (s, rate) = match served {
                    Some((k, i)) => {
                        let s = sinr.get(cell.n, k, i, r, l);
                        (s, (1.0 + s).log2())
                    }
                    None => (0.0, 0.0),
                };
                assignments.push(BeamAssignment {
                    n: cell.n,
                    r,
                    l,
                    served,
                    candidates: set.len(),
                    sinr: s,
                    rate,
                });
            }
        }
    }
    ScheduleOutcome {
        m,
        q,
        n_t,
        assignments,
        messages: sets.cells.iter().map(CellCandidates::messages).collect(),
        feedback_bits: sets.cells.iter().map(CellCandidates::feedback_bits).collect(),
    }
}

/// A round's outcome, plus its intermediate tables when requested.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub outcome: ScheduleOutcome,
    pub debug: Option<RoundDebug>,
}

#[derive(Debug, Clone)]
pub struct RoundDebug {
    pub sinr: SinrTable,
    pub messages: Vec<FeedbackMessage>,
    pub sets: CandidateSets,
}

/// Sample, compute SINRs, collect feedback and select users for trial `trial`.
pub fn run_round(
    cfg: &NetworkConfig,
    beta: &BetaTable,
    trial: u64,
    debug: bool,
) -> Result<RoundOutput> {
    if beta.dims() != (cfg.m, cfg.k, cfg.q) {
        return Err(Error::Dimension(format!(
            "beta table is {:?}, network needs (M, K, Q) = ({}, {}, {})",
            beta.dims(),
            cfg.m,
            cfg.k,
            cfg.q
        )));
    }
    let ch = sample_channels(cfg, trial);
    let sinr = if debug {
        compute_sinr_table_with_bounds(cfg, &ch)
    } else {
        compute_sinr_table(cfg, &ch)
    };
    let (messages, sets) = feedback_round(&sinr, beta, cfg);
    let mut rng = cfg.rng().stream(domain::SELECTION, trial);
    let outcome = select_users(&sets, &sinr, &mut rng);
    let debug = debug.then_some(RoundDebug {
        sinr,
        messages,
        sets,
    });
    Ok(RoundOutput { outcome, debug })
}
