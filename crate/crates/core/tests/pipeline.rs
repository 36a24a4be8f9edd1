use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use netbeam::calibration::{analytic_beta_homogeneous, calibrate_beta, calibrate_closed_form, BetaTable};
use netbeam::experiments::{
    run_sweep, write_results_csv, ConfigFile, Overrides, RunOptions, SweepSpec, SIMULATE_HEADER,
};
use netbeam::model::{db_to_linear, sample_beamformers, sample_channels, NetworkConfig};
use netbeam::scheduler::run_round;
use netbeam::sinr::compute_sinr_table;
use netbeam::stats::{correlation, ks_distance};

// |w_00|^2 of a Haar unitary is Beta(1, N_t - 1): CDF 1 - (1 - x)^(N_t - 1).
#[test]
fn beam_entries_follow_the_haar_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n_t in 2..=4usize {
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_beamformers(n_t, &mut rng)[(0, 0)].norm_sqr())
            .collect();
        let d = ks_distance(&xs, |x| 1.0 - (1.0 - x.clamp(0.0, 1.0)).powi(n_t as i32 - 1));
        assert!(d < 1.95 / (xs.len() as f64).sqrt(), "N_t={n_t}: KS {d}");
    }
}

#[test]
fn single_beam_sinr_is_exponential() {
    let rho = db_to_linear(5.0);
    let cfg = NetworkConfig::homogeneous(1, 1, 1, 1, 1, rho, 3).unwrap();
    let xs: Vec<f64> = (0..20_000)
        .map(|t| compute_sinr_table(&cfg, &sample_channels(&cfg, t)).get(0, 0, 0, 0, 0))
        .collect();
    let d = ks_distance(&xs, |x| 1.0 - (-x / rho).exp());
    assert!(d < 1.95 / (xs.len() as f64).sqrt(), "KS {d}");
}

#[test]
fn users_see_independent_channels() {
    let cfg = NetworkConfig::homogeneous(2, 1, 2, 1, 2, 10.0, 5).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for t in 0..20_000 {
        let tab = compute_sinr_table(&cfg, &sample_channels(&cfg, t));
        a.push(tab.get(0, 0, 0, 0, 0));
        b.push(tab.get(1, 1, 0, 0, 1));
    }
    assert!(correlation(&a, &b).abs() < 0.02);
}

#[test]
fn empirical_and_closed_form_calibration_agree() {
    let cfg = NetworkConfig::homogeneous(1, 2, 2, 1, 50, 10.0, 9).unwrap();
    let exact = analytic_beta_homogeneous(&cfg, cfg.quantile_target()).unwrap();
    let table = calibrate_beta(&cfg, 200_000).unwrap();
    assert_relative_eq!(table.mean(), exact, max_relative = 0.03);
    let closed = calibrate_closed_form(&cfg).unwrap();
    assert_relative_eq!(closed.min(), exact, max_relative = 1e-12);
    assert_relative_eq!(closed.max(), exact, max_relative = 1e-12);
}

// With beta >= 1 at most one beam of an antenna can clear the threshold, so
// every candidate set is Binomial(K N_r, 1/(K N_r)).
#[test]
fn candidate_set_sizes_are_binomial() {
    let cfg = NetworkConfig::homogeneous(1, 1, 2, 1, 40, 10.0, 21).unwrap();
    let beta = calibrate_closed_form(&cfg).unwrap();
    assert!(beta.min() >= 1.0, "beta {}", beta.min());
    let users = cfg.k * cfg.n_r;
    let p = 1.0 / users as f64;
    let mut counts = [0u64; 4];
    for t in 0..10_000 {
        let out = run_round(&cfg, &beta, t, false).unwrap().outcome;
        let a = &out.assignments[0];
        counts[a.candidates.min(3)] += 1;
    }
    let total: u64 = counts.iter().sum();
    let pmf = |b: i32| {
        let c: f64 = (0..b).map(|t| (users - t as usize) as f64 / (t + 1) as f64).product();
        c * p.powi(b) * (1.0 - p).powi(users as i32 - b)
    };
    let expected = [pmf(0), pmf(1), pmf(2), 1.0 - pmf(0) - pmf(1) - pmf(2)];
    let stat: f64 = counts
        .iter()
        .zip(expected)
        .map(|(o, e)| {
            let e = e * total as f64;
            (*o as f64 - e).powi(2) / e
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(stat);
    assert!(p_value > 1e-3, "counts {counts:?}, chi2 {stat}, p {p_value}");
}

#[test]
fn beta_table_csv_round_trip() {
    let cfg = NetworkConfig::homogeneous(2, 2, 2, 1, 5, 10.0, 1).unwrap();
    let beta = calibrate_beta(&cfg, 2_000).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("beta.csv");
    beta.write_csv(&path).unwrap();
    let back = BetaTable::read_csv(&path, &cfg).unwrap();
    assert_eq!(back.values(), beta.values());
}

const SWEEP: &str = r#"
[network]
M = 1
Q = 2
N_t = 2
K = 10
rho_dB = 10.0
seed = 4

[calibration]
method = "closed_form"

[sweep]
variable = "K"
values = [10, 40]
trials = 200
series = [{ N_t = 2 }, { N_t = 3 }]
"#;

fn sweep_once(cache: Option<std::path::PathBuf>) -> Vec<netbeam::experiments::PointResult> {
    let spec = SweepSpec::from_config(&ConfigFile::parse(SWEEP).unwrap(), Overrides::default()).unwrap();
    let mut opts = RunOptions {
        beta_cache: cache,
        outcome_log: None,
        analysis_samples: 2_000,
    };
    run_sweep(&spec, &mut opts).unwrap()
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let results = sweep_once(Some(dir.path().join("cache")));
    assert_eq!(results.len(), 4);
    let out = dir.path().join("sim.csv");
    write_results_csv(&out, &results).unwrap();
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, SIMULATE_HEADER);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for (row, res) in rows.iter().zip(&results) {
        assert_eq!(row[4].parse::<usize>().unwrap(), res.point.k);
        let rate: f64 = row[6].parse().unwrap();
        assert_relative_eq!(rate, res.mean_sum_rate, max_relative = 1e-12);
        assert!(res.mean_fb_bits <= res.fb_limit + 4.0 * res.fb_bits_se, "{} vs {}", res.mean_fb_bits, res.fb_limit);
    }
    // the cached second pass sees the same normalization and the same streams
    let again = sweep_once(Some(dir.path().join("cache")));
    assert_eq!(again, results);
}
