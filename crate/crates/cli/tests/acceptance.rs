//! Acceptance suite: one test per primary criterion. Each prints a single
//! `criterion N [PASS|FAIL]` line before asserting.

use std::process::Command;

use rand::Rng;
use rayon::prelude::*;

use netbeam::calibration::{calibrate_beta, BetaTable};
use netbeam::experiments::config::{
    CalibrationChoice, CalibrationSpec, PointSpec, SweepSpec, SweepVariable,
};
use netbeam::experiments::{run_calibration_sweep, run_sweep, AttenuationSpec, PointResult, RunOptions};
use netbeam::metrics::OutcomeAccumulator;
use netbeam::model::{db_to_linear, domain, sample_channels, AttenuationProfile, NetworkConfig, RngPolicy};
use netbeam::orderstats::{
    exponential_max_mean_bounds, exponential_max_mean_empirical, f_monotone, scaling_integral,
    scaling_integral_quadrature, verify_ordered_bounds_in_table, MixtureWeights, EULER_GAMMA,
};
use netbeam::scheduler::run_round;
use netbeam::sinr::{compute_sinr_table, compute_sinr_table_with_bounds, ClosedFormCdf};
use netbeam::stats::ks_distance;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn rho10() -> f64 {
    db_to_linear(10.0)
}

fn point(m: usize, q: usize, n_t: usize, n_r: usize, k: usize, seed: u64) -> PointSpec {
    PointSpec {
        series: 0,
        label: String::new(),
        m,
        q,
        n_t,
        n_r,
        k,
        rho_db: 10.0,
        seed,
        attenuation: AttenuationSpec::Homogeneous { value: 1.0 },
    }
}

fn sweep(points: Vec<PointSpec>, trials: usize, method: CalibrationChoice) -> Vec<PointResult> {
    let spec = SweepSpec {
        variable: SweepVariable::K,
        trials,
        calibration: CalibrationSpec {
            method,
            samples: None,
        },
        points,
    };
    run_sweep(&spec, &mut RunOptions::default()).unwrap()
}

#[test]
fn criterion_01_sinr_distribution_matches_closed_form() {
    let cfg = NetworkConfig::homogeneous(2, 2, 2, 1, 1, rho10(), 11).unwrap();
    let n = 100_000u64;
    let start = std::time::Instant::now();
    let xs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|t| compute_sinr_table(&cfg, &sample_channels(&cfg, t)).get(0, 0, 0, 0, 0))
        .collect();
    let f = ClosedFormCdf::lower(&cfg, 0);
    let d = ks_distance(&xs, |x| f.eval(x).unwrap());
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "closed-form SINR CDF",
        d < 0.01 && secs < 60.0,
        &format!("KS = {d:.5} (< 0.01) over {n} draws in {secs:.1} s (< 60 s)"),
    );
}

#[test]
fn criterion_02_ordered_bounds_hold() {
    let att = AttenuationProfile::log_uniform_db(2, 2, 50, -10.0, 10.0, 12).unwrap();
    let cfg = NetworkConfig::new(2, 2, 2, 1, 50, rho10(), att, 12).unwrap();
    let realizations = 10_000u64;
    let violations: usize = (0..realizations)
        .into_par_iter()
        .map(|t| {
            let tab = compute_sinr_table_with_bounds(&cfg, &sample_channels(&cfg, t));
            let mut v = 0;
            for n in 0..cfg.m {
                for r in 0..cfg.q {
                    for l in 0..cfg.n_t {
                        v += verify_ordered_bounds_in_table(&tab, n, r, l, 0).unwrap();
                    }
                }
            }
            v
        })
        .sum();
    report(
        2,
        "ordered bound sandwich",
        violations == 0,
        &format!("{violations} violations over {realizations} realizations, K=50, gamma in [-10, 10] dB"),
    );
}

#[test]
fn criterion_03_candidate_sets() {
    let cfg = NetworkConfig::homogeneous(1, 2, 2, 1, 100, rho10(), 13).unwrap();
    let beta = calibrate_beta(&cfg, 1_000_000).unwrap();
    let trials = 10_000u64;
    let rounds: Vec<(Vec<usize>, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let sets = run_round(&cfg, &beta, t, true).unwrap().debug.unwrap().sets;
            (sets.cells.iter().flat_map(|c| c.sizes()).collect(), sets.is_disjoint())
        })
        .collect();
    let sizes: Vec<f64> = rounds.iter().flat_map(|(s, _)| s.iter().map(|v| *v as f64)).collect();
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let overlapping = rounds.iter().filter(|(_, d)| !d).count();
    report(
        3,
        "candidate-set size and disjointness",
        (mean - 1.0).abs() <= 0.05 && overlapping == 0,
        &format!(
            "E|H| = {mean:.4} (1.00 +- 0.05), {overlapping} trials with overlapping sets, min beta {:.3}",
            beta.min()
        ),
    );
}

#[test]
fn criterion_04_feedback_limit() {
    let grid = [10, 31, 100, 316, 1000, 3162, 10_000];
    let points = grid.iter().map(|&k| point(1, 2, 2, 1, k, 14)).collect();
    let res = sweep(points, 10_000, CalibrationChoice::ClosedForm);
    let limit = res[0].fb_limit;
    let last = res.last().unwrap();
    let in_band = last.mean_fb_bits >= 0.85 * limit
        && last.mean_fb_bits <= limit + 2.0 * last.fb_bits_se;
    let monotone = res.windows(2).all(|w| {
        let se = (w[0].fb_bits_se.powi(2) + w[1].fb_bits_se.powi(2)).sqrt();
        w[1].mean_fb_bits >= w[0].mean_fb_bits - 2.0 * se
    });
    let capped = res.iter().all(|r| r.mean_fb_bits <= limit + 2.0 * r.fb_bits_se);
    let curve: Vec<String> = res
        .iter()
        .map(|r| format!("{}:{:.3}+-{:.3}", r.point.k, r.mean_fb_bits, r.fb_bits_se))
        .collect();
    report(
        4,
        "aggregate feedback plateau",
        in_band && monotone && capped,
        &format!(
            "limit {limit}; K=1e4 mean {:.3} in [{:.1}, {limit} + 2 SE] = {in_band}; monotone = {monotone}; capped = {capped}; [{}]",
            last.mean_fb_bits,
            0.85 * limit,
            curve.join(" ")
        ),
    );
}

#[test]
fn criterion_05_sum_rate_trend_and_bounds() {
    let points = [100, 1000, 10_000]
        .iter()
        .map(|&k| point(2, 2, 2, 1, k, 15))
        .chain(std::iter::once(point(2, 2, 2, 2, 1000, 15)))
        .collect();
    let res = sweep(points, 4000, CalibrationChoice::ClosedForm);
    let r: Vec<f64> = res.iter().map(|p| p.mean_sum_rate).collect();
    let increasing = r[1] > r[0] && r[2] > r[1];
    let diminishing = r[2] - r[1] < r[1] - r[0];
    let above_bound = res[..3].iter().all(|p| {
        p.cell_lower_bounds
            .iter()
            .all(|lb| p.mean_cell_rate >= *lb)
    });
    let se = (res[1].sum_rate_se.powi(2) + res[3].sum_rate_se.powi(2)).sqrt();
    let more_antennas = res[3].mean_sum_rate >= res[1].mean_sum_rate - 2.0 * se;
    report(
        5,
        "sum-rate growth, rate bound, receive antennas",
        increasing && diminishing && above_bound && more_antennas,
        &format!(
            "E[R] = {:.3}, {:.3}, {:.3} at K = 1e2, 1e3, 1e4 (increments {:.3}, {:.3}); \
             E[R_n] vs lower bound: {}; N_r=2 at K=1e3: {:.3} vs {:.3} (2 SE = {:.3})",
            r[0],
            r[1],
            r[2],
            r[1] - r[0],
            r[2] - r[1],
            res[..3]
                .iter()
                .map(|p| format!("{:.3}>={:.3}", p.mean_cell_rate, p.cell_lower_bounds.iter().cloned().fold(f64::MIN, f64::max)))
                .collect::<Vec<_>>()
                .join(", "),
            res[3].mean_sum_rate,
            res[1].mean_sum_rate,
            2.0 * se
        ),
    );
}

fn fairness_counts(cfg: &NetworkConfig, beta: &BetaTable, rounds: u64) -> OutcomeAccumulator {
    let outcomes: Vec<_> = (0..rounds)
        .into_par_iter()
        .map(|t| run_round(cfg, beta, t, false).unwrap().outcome)
        .collect();
    let mut acc = OutcomeAccumulator::new(cfg.m, cfg.k);
    for o in &outcomes {
        acc.push(o);
    }
    acc
}

#[test]
fn criterion_06_fairness() {
    let k = 20;
    let att = AttenuationProfile::log_uniform_db(1, 1, k, -10.0, 10.0, 16).unwrap();
    let cfg = NetworkConfig::new(1, 1, 2, 1, k, rho10(), att, 16).unwrap();
    let beta = calibrate_beta(&cfg, 1_000_000).unwrap();
    let rounds = 50_000;
    let per_user = fairness_counts(&cfg, &beta, rounds).fairness();
    let shared = BetaTable::uniform(&cfg, beta.mean()).unwrap();
    let ablation = fairness_counts(&cfg, &shared, rounds).fairness();
    report(
        6,
        "service fairness",
        per_user.p_value > 1e-3 && ablation.p_value < 1e-6,
        &format!(
            "per-user beta: chi2 = {:.2}, p = {:.4} (> 0.001); shared beta {:.3}: chi2 = {:.1}, p = {:.2e} (< 1e-6)",
            per_user.statistic,
            per_user.p_value,
            beta.mean(),
            ablation.statistic,
            ablation.p_value
        ),
    );
}

#[test]
fn criterion_07_threshold_growth() {
    let grid = [10, 20, 31, 100, 316, 1000, 3162, 10_000];
    let mut points = Vec::new();
    for (s, rho_db) in [0.0, 5.0, 10.0].into_iter().enumerate() {
        for &k in &grid {
            points.push(PointSpec {
                series: s,
                rho_db,
                ..point(3, 2, 2, 1, k, 17)
            });
        }
    }
    let spec = SweepSpec {
        variable: SweepVariable::K,
        trials: 100,
        calibration: CalibrationSpec {
            method: CalibrationChoice::Empirical,
            samples: Some(1_000_000),
        },
        points,
    };
    let rows = run_calibration_sweep(&spec, None).unwrap();
    let mut monotone = true;
    let mut above_one = true;
    let mut curves = Vec::new();
    for chunk in rows.chunks(grid.len()) {
        monotone &= chunk.windows(2).all(|w| w[1].beta > w[0].beta);
        above_one &= chunk.iter().filter(|r| r.point.k >= 20).all(|r| r.beta_min > 1.0);
        curves.push(format!(
            "{} dB: {}",
            chunk[0].point.rho_db,
            chunk
                .iter()
                .map(|r| format!("{}:{:.3}", r.point.k, r.beta))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    // Single beam, no interference: SINR = rho * Exp(1), so beta = rho ln K.
    let control: Vec<(usize, f64, f64)> = [10, 100, 1000]
        .into_iter()
        .map(|k| {
            let cfg = NetworkConfig::homogeneous(1, 1, 1, 1, k, rho10(), 17).unwrap();
            let b = calibrate_beta(&cfg, 1_000_000).unwrap().mean();
            (k, b, rho10() * (k as f64).ln())
        })
        .collect();
    let control_ok = control.iter().all(|(_, b, o)| (b / o - 1.0).abs() < 0.05);
    report(
        7,
        "normalization factor growth",
        monotone && above_one && control_ok,
        &format!(
            "monotone = {monotone}; beta > 1 for all K >= 20 = {above_one}; control rho ln K within 5% = {control_ok} [{}]; {}",
            control
                .iter()
                .map(|(k, b, o)| format!("K={k}: {b:.3} vs {o:.3}"))
                .collect::<Vec<_>>()
                .join(", "),
            curves.join("; ")
        ),
    );
}

#[test]
fn criterion_08_clustering() {
    let clusters = [(6, 1), (3, 2), (2, 3), (1, 6)];
    let users = [60, 600, 6000];
    let mut points = Vec::new();
    for &u in &users {
        for &(m, q) in &clusters {
            points.push(point(m, q, 2, 1, u / m, 18));
        }
    }
    let res = sweep(points, 2000, CalibrationChoice::ClosedForm);
    let mut ok = true;
    let mut lines = Vec::new();
    for (chunk, u) in res.chunks(clusters.len()).zip(users) {
        ok &= chunk.windows(2).all(|w| {
            let se = (w[0].sum_rate_se.powi(2) + w[1].sum_rate_se.powi(2)).sqrt();
            w[1].mean_sum_rate >= w[0].mean_sum_rate - 2.0 * se
        });
        lines.push(format!(
            "MK={u}: {}",
            chunk
                .iter()
                .map(|r| format!("Q={}:{:.3}+-{:.3}", r.point.q, r.mean_sum_rate, r.sum_rate_se))
                .collect::<Vec<_>>()
                .join(" ")
        ));
    }
    report(
        8,
        "clustering trade-off",
        ok,
        &format!("nondecreasing in Q within 2 SE = {ok}; {}", lines.join("; ")),
    );
}

#[test]
fn criterion_09_scaling_integral() {
    let w = MixtureWeights::point_mass(1000, 1).unwrap();
    let draws = 1_000_000;
    let oracle = (1.0 + 1000f64.ln() + EULER_GAMMA).log2();
    let est = |a: f64| {
        let mut rng = RngPolicy::new(19).stream(domain::ANALYSIS, 0);
        scaling_integral(a, &w, draws, &mut rng).unwrap().mean
    };
    let at_one = est(1.0);
    // Doubling adds one bit once a x >> 1; common draws across a.
    let doubling = est(32.0) - est(16.0);
    let doubling_at_one = est(2.0) - at_one;
    let w50 = MixtureWeights::point_mass(50, 1).unwrap();
    let mut rng = RngPolicy::new(19).stream(domain::ANALYSIS, 1);
    let mc50 = scaling_integral(1.0, &w50, draws, &mut rng).unwrap().mean;
    let quad50 = scaling_integral_quadrature(1.0, &w50, 20_000).unwrap();
    let rel = (mc50 - quad50).abs() / quad50;
    report(
        9,
        "scaling integral",
        (at_one - oracle).abs() <= 0.05 && (doubling - 1.0).abs() <= 0.05 && rel < 0.01,
        &format!(
            "a=1, K=1000: {at_one:.4} vs {oracle:.4} (+-0.05); doubling a 16->32 adds {doubling:.4} (1 +- 0.05; 1->2 adds {doubling_at_one:.4}); \
             K=50 Monte Carlo {mc50:.5} vs quadrature {quad50:.5}, rel {rel:.2e} (< 1%)"
        ),
    );
}

#[test]
fn criterion_10_monotone_kernel_and_exponential_bracket() {
    let mut rng = RngPolicy::new(20).stream(domain::VERIFY, 0);
    let mut violations = 0;
    for _ in 0..100 {
        let k: u64 = rng.random_range(2..=20);
        let j: u64 = rng.random_range(0..k);
        let mut prev = f64::NEG_INFINITY;
        for p in 0..1000 {
            let v = f_monotone(p as f64 / 999.0, j, k).unwrap();
            if v < prev {
                violations += 1;
            }
            prev = v;
        }
    }
    let mut contained = true;
    let mut lines = Vec::new();
    for (i, k) in [1usize, 10, 100].into_iter().enumerate() {
        let (lo, hi) = exponential_max_mean_bounds(k).unwrap();
        let mut rng = RngPolicy::new(20).stream(domain::VERIFY, 1 + i as u64);
        let acc = exponential_max_mean_empirical(k, 1_000_000, &mut rng);
        let inside = lo <= acc.mean() && acc.mean() <= hi;
        contained &= inside;
        lines.push(format!(
            "K={k}: {:.5} +- {:.5} in [{lo:.5}, {hi:.5}] = {inside}",
            acc.mean(),
            acc.std_err()
        ));
    }
    report(
        10,
        "monotone kernel and exponential-max bracket",
        violations == 0 && contained,
        &format!("{violations} monotonicity violations; {}", lines.join("; ")),
    );
}

#[test]
fn criterion_11_simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[network]\nM = 2\nQ = 2\nN_t = 2\nK = 10\nrho_dB = 10.0\nseed = 21\n\n\
         [attenuation]\nkind = \"log_uniform_db\"\nmin_db = -10\nmax_db = 10\n\n\
         [calibration]\nmethod = \"empirical\"\nsamples = 20000\n\n\
         [sweep]\nvariable = \"K\"\nvalues = [10, 50, 200]\ntrials = 300\n",
    )
    .unwrap();
    let run = |workers: &str, name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_netbeam"))
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--workers", workers])
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(&out).unwrap(),
            std::fs::read(dir.path().join(format!("{name}.meta.json"))).unwrap(),
        )
    };
    let a = run("1", "a.csv");
    let b = run("1", "b.csv");
    let c = run("4", "c.csv");
    let same = a == b && a == c;
    report(
        11,
        "byte-identical reruns",
        same,
        &format!(
            "CSV and sidecar identical across reruns and --workers 1/4 = {same} ({} bytes)",
            a.0.len()
        ),
    );
}
