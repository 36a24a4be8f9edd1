//! Aggregation of scheduling outcomes into throughput, feedback and fairness
//! statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scheduler::ScheduleOutcome;
use crate::stats::{chi_square_uniform, ChiSquareTest, MeanAccumulator};

/// Sum of `log2(1 + SINR)` over served beams.
pub fn sum_rate(outcome: &ScheduleOutcome) -> f64 {
    outcome.assignments.iter().map(|a| a.rate).sum()
}

pub fn cell_sum_rate(outcome: &ScheduleOutcome, n: usize) -> f64 {
    outcome.cell(n).iter().map(|a| a.rate).sum()
}

/// Feedback bits per super-cell per round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackStats {
    pub mean_bits: f64,
    pub std_err: f64,
    pub max_bits: u64,
    pub samples: u64,
}

pub fn feedback_stats(outcomes: &[ScheduleOutcome]) -> Result<FeedbackStats> {
    if outcomes.is_empty() {
        return Err(Error::Domain("feedback statistics need at least one outcome".into()));
    }
    let acc = outcomes
        .iter()
        .flat_map(|o| o.feedback_bits.iter().map(|b| *b as f64))
        .collect::<MeanAccumulator>();
    Ok(FeedbackStats {
        mean_bits: acc.mean(),
        std_err: acc.std_err(),
        max_bits: outcomes
            .iter()
            .flat_map(|o| o.feedback_bits.iter().copied())
            .max()
            .unwrap_or(0),
        samples: acc.count(),
    })
}

/// How often each user `(n, k)` (flattened `n * K + k`) was served.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fairness {
    pub counts: Vec<u64>,
    pub frequencies: Vec<f64>,
    pub statistic: f64,
    pub p_value: f64,
    pub expected_per_user: f64,
}

impl Fairness {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let frequencies = counts
            .iter()
            .map(|c| if total == 0 { 0.0 } else { *c as f64 / total as f64 })
            .collect();
        let ChiSquareTest {
            statistic,
            p_value,
            expected,
            ..
        } = chi_square_uniform(&counts);
        Self {
            counts,
            frequencies,
            statistic,
            p_value,
            expected_per_user: expected,
        }
    }

    /// The chi-square approximation needs roughly five expected hits per user.
    pub fn is_reliable(&self) -> bool {
        self.expected_per_user >= 5.0
    }
}

/// Service-frequency histogram over the `users_per_cell` users of every
/// super-cell, with a chi-square test of uniformity.
pub fn fairness_histogram(outcomes: &[ScheduleOutcome], users_per_cell: usize) -> Fairness {
    let cells = outcomes.first().map_or(0, |o| o.m);
    let mut counts = vec![0u64; cells * users_per_cell];
    for o in outcomes {
        for a in o.served() {
            let (k, _) = a.served.expect("filtered");
            counts[a.n * users_per_cell + k] += 1;
        }
    }
    Fairness::from_counts(counts)
}

/// Sequential fold of round outcomes, in trial order.
#[derive(Debug, Clone)]
pub struct OutcomeAccumulator {
    users_per_cell: usize,
    pub sum_rate: MeanAccumulator,
    /// One sample per (trial, super-cell).
    pub cell_rate: MeanAccumulator,
    /// One sample per (trial, super-cell).
    pub feedback: MeanAccumulator,
    /// One sample per (trial, beam).
    pub set_size: MeanAccumulator,
    pub max_feedback_bits: u64,
    pub service_counts: Vec<u64>,
    pub served_beams: u64,
    pub idle_beams: u64,
}

impl OutcomeAccumulator {
    pub fn new(cells: usize, users_per_cell: usize) -> Self {
        Self {
            users_per_cell,
            sum_rate: MeanAccumulator::default(),
            cell_rate: MeanAccumulator::default(),
            feedback: MeanAccumulator::default(),
            set_size: MeanAccumulator::default(),
            max_feedback_bits: 0,
            service_counts: vec![0; cells * users_per_cell],
            served_beams: 0,
            idle_beams: 0,
        }
    }

    pub fn push(&mut self, o: &ScheduleOutcome) {
        self.sum_rate.push(sum_rate(o));
        for n in 0..o.m {
            self.cell_rate.push(cell_sum_rate(o, n));
            self.feedback.push(o.feedback_bits[n] as f64);
            self.max_feedback_bits = self.max_feedback_bits.max(o.feedback_bits[n]);
        }
        for a in &o.assignments {
            self.set_size.push(a.candidates as f64);
            match a.served {
                Some((k, _)) => {
                    self.service_counts[a.n * self.users_per_cell + k] += 1;
                    self.served_beams += 1;
                }
                None => self.idle_beams += 1,
            }
        }
    }

    pub fn trials(&self) -> u64 {
        self.sum_rate.count()
    }

    pub fn fairness(&self) -> Fairness {
        Fairness::from_counts(self.service_counts.clone())
    }
}

/// `M Q N_t log2(log2(K N_r))`, the growth law the sum-rate follows. `NaN`
/// when `K N_r <= 2`.
pub fn reference_curve(total_beams: usize, k: usize, n_r: usize) -> f64 {
    let users = (k * n_r) as f64;
    if users <= 2.0 {
        return f64::NAN;
    }
    total_beams as f64 * users.log2().log2()
}

/// One point of a K sweep, as fed to [`scaling_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub k: usize,
    pub n_r: usize,
    pub total_beams: usize,
    pub mean_sum_rate: f64,
    pub std_err: f64,
    pub lower_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub k: usize,
    pub mean_sum_rate: f64,
    pub std_err: f64,
    /// `c * M Q N_t log2 log2(K N_r)` with `c` fitted at the largest `K`.
    pub reference: f64,
    pub fitted_constant: f64,
    pub lower_bound: f64,
    /// Change in mean sum-rate from the previous point.
    pub increment: f64,
}

/// Compares simulated sum-rates with the double-logarithmic growth law.
pub fn scaling_report(points: &[ScalingPoint]) -> Result<Vec<ScalingRow>> {
    if points.len() < 3 {
        return Err(Error::Domain("scaling report needs at least 3 K points".into()));
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.k);
    let (kmin, kmax) = (pts[0].k as f64, pts[pts.len() - 1].k as f64);
    if kmax / kmin < 100.0 {
        return Err(Error::Domain(format!(
            "K grid [{kmin}, {kmax}] spans less than two decades"
        )));
    }
    let last = pts[pts.len() - 1];
    let c = last.mean_sum_rate / reference_curve(last.total_beams, last.k, last.n_r);
    let mut prev = f64::NAN;
    Ok(pts
        .iter()
        .map(|p| {
            let row = ScalingRow {
                k: p.k,
                mean_sum_rate: p.mean_sum_rate,
                std_err: p.std_err,
                reference: c * reference_curve(p.total_beams, p.k, p.n_r),
                fitted_constant: c,
                lower_bound: p.lower_bound,
                increment: p.mean_sum_rate - prev,
            };
            prev = p.mean_sum_rate;
            row
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::BeamAssignment;

    fn outcome(rates: &[(Option<(usize, usize)>, f64)], bits: Vec<u64>) -> ScheduleOutcome {
        let assignments = rates
            .iter()
            .enumerate()
            .map(|(l, (served, sinr))| BeamAssignment {
                n: 0,
                r: 0,
                l,
                served: *served,
                candidates: usize::from(served.is_some()),
                sinr: *sinr,
                rate: if served.is_some() { (1.0 + sinr).log2() } else { 0.0 },
            })
            .collect();
        ScheduleOutcome {
            m: 1,
            q: 1,
            n_t: rates.len(),
            assignments,
            messages: bits.iter().map(|_| 0).collect(),
            feedback_bits: bits,
        }
    }

    #[test]
    fn sum_rate_cases() {
        assert_eq!(sum_rate(&outcome(&[(None, 0.0), (None, 0.0)], vec![0])), 0.0);
        assert!((sum_rate(&outcome(&[(Some((0, 0)), 1.0)], vec![0])) - 1.0).abs() < 1e-15);
        let o = outcome(&[(Some((0, 0)), 3.0), (Some((1, 0)), 7.0)], vec![2]);
        assert!((sum_rate(&o) - 5.0).abs() < 1e-12);
        assert_eq!(sum_rate(&o), cell_sum_rate(&o, 0));
    }

    #[test]
    fn feedback_mean() {
        let os = vec![
            outcome(&[(None, 0.0)], vec![2]),
            outcome(&[(None, 0.0)], vec![4]),
        ];
        let s = feedback_stats(&os).unwrap();
        assert_eq!(s.mean_bits, 3.0);
        assert_eq!(s.max_bits, 4);
        assert!(feedback_stats(&[]).is_err());
    }

    #[test]
    fn fairness_counts() {
        let os: Vec<_> = (0..100)
            .map(|t| outcome(&[(Some((t % 2, 0)), 1.0)], vec![0]))
            .collect();
        let f = fairness_histogram(&os, 2);
        assert_eq!(f.counts, vec![50, 50]);
        assert!((f.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accumulator_counts_sum_to_served() {
        let mut acc = OutcomeAccumulator::new(1, 3);
        acc.push(&outcome(&[(Some((2, 0)), 1.0), (None, 0.0)], vec![1]));
        acc.push(&outcome(&[(Some((0, 0)), 1.0), (Some((1, 0)), 3.0)], vec![2]));
        assert_eq!(acc.service_counts.iter().sum::<u64>(), acc.served_beams);
        assert_eq!(acc.served_beams, 3);
        assert_eq!(acc.idle_beams, 1);
        assert_eq!(acc.trials(), 2);
    }

    #[test]
    fn scaling_report_requires_range() {
        let p = |k: usize, r: f64| ScalingPoint {
            k,
            n_r: 1,
            total_beams: 4,
            mean_sum_rate: r,
            std_err: 0.1,
            lower_bound: 0.0,
        };
        assert!(scaling_report(&[p(10, 1.0), p(100, 2.0)]).is_err());
        assert!(scaling_report(&[p(10, 1.0), p(20, 2.0), p(50, 3.0)]).is_err());
        let rows = scaling_report(&[p(1000, 3.0), p(10, 1.0), p(100, 2.0)]).unwrap();
        assert_eq!(rows[0].k, 10);
        assert!((rows[2].reference - 3.0).abs() < 1e-12);
        assert!((rows[1].increment - 1.0).abs() < 1e-12);
    }
}
