use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netbeam::calibration::BetaTable;
use netbeam::model::{sample_beamformers, sample_channels, AttenuationProfile, NetworkConfig};
use netbeam::orderstats::{
    binomial_candidate_weights, f_monotone, mixture_cdf, order_stat_cdf, MixtureWeights,
};
use netbeam::scheduler::run_round;
use netbeam::sinr::compute_sinr_table;

/// Exact binomial coefficient by the multiplicative formula in integers.
fn choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for t in 0..k {
        c = c * (n - t) as u128 / (t + 1) as u128;
    }
    c as f64
}

/// `P(j-th largest of K <= x)`: at least `K - j + 1` of the draws fall below.
fn order_stat_oracle(u: f64, k: u64, j: u64) -> f64 {
    (k - j + 1..=k)
        .map(|below| choose(k, below) * u.powi(below as i32) * (1.0 - u).powi((k - below) as i32))
        .sum()
}

proptest! {
    #[test]
    fn order_stat_cdf_matches_counting(k in 1u64..40, j_frac in 0.0f64..1.0, u in 0.0f64..=1.0) {
        let j = 1 + ((k as f64 * j_frac) as u64).min(k - 1);
        let got = order_stat_cdf(u, k, j).unwrap();
        let want = order_stat_oracle(u, k, j);
        prop_assert!((got - want).abs() < 1e-11, "K={} j={} u={}: {} vs {}", k, j, u, got, want);
    }

    #[test]
    fn lower_ranks_have_larger_cdf(k in 2u64..80, u in 0.0f64..=1.0) {
        let mut prev = 0.0;
        for j in 1..=k {
            let v = order_stat_cdf(u, k, j).unwrap();
            prop_assert!(v >= prev, "K={} j={} u={}", k, j, u);
            prev = v;
        }
    }

    #[test]
    fn f_is_nondecreasing(k in 2u64..200, j_frac in 0.0f64..1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let j = ((k as f64 * j_frac) as u64).min(k - 1);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f_monotone(lo, j, k).unwrap() <= f_monotone(hi, j, k).unwrap());
    }

    #[test]
    fn mixture_cdf_is_a_cdf(k in 1usize..300, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let w = binomial_candidate_weights(k).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (flo, fhi) = (mixture_cdf(&w, lo).unwrap(), mixture_cdf(&w, hi).unwrap());
        prop_assert!((0.0..=1.0).contains(&flo));
        prop_assert!(flo <= fhi + 1e-14);
        prop_assert!(mixture_cdf(&w, 0.0).unwrap() == 0.0);
        prop_assert!((mixture_cdf(&w, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_mixture_is_the_order_statistic(k in 1usize..60, j_frac in 0.0f64..1.0, u in 0.0f64..=1.0) {
        let j = 1 + ((k as f64 * j_frac) as usize).min(k - 1);
        let w = MixtureWeights::point_mass(k, j).unwrap();
        let a = mixture_cdf(&w, u).unwrap();
        let b = order_stat_cdf(u, k as u64, j as u64).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    // sum_j j q[j] = sum_{b >= 1} P(b) (b + 1) / 2 = (E[b] + P(b >= 1)) / 2
    #[test]
    fn binomial_weights_moments(k in 1usize..2000) {
        let w = binomial_candidate_weights(k).unwrap();
        let p_empty = (1.0 - 1.0 / k as f64).powi(k as i32);
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((w.get(0) - p_empty).abs() < 1e-12);
        prop_assert!((w.first_moment() - (2.0 - p_empty) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn beamformers_are_unitary(n_t in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = sample_beamformers(n_t, &mut rng);
        let gram = w.adjoint() * &w;
        let eye = DMatrix::<Complex64>::identity(n_t, n_t);
        prop_assert!((gram - eye).norm() < 1e-10);
    }
}

fn sinr_oracle(cfg: &NetworkConfig, ch: &netbeam::ChannelRealization, n: usize, k: usize, i: usize, r: usize, l: usize) -> f64 {
    let mut own = 0.0;
    let mut other = 0.0;
    for m in 0..cfg.m {
        for rr in 0..cfg.q {
            let g = cfg.attenuation.get(n, k, m, rr);
            // row i of H W: the user antenna's response to every beam of (m, rr)
            let hw = ch.channel_matrix(n, k, m, rr) * ch.beams(m, rr);
            for ll in 0..cfg.n_t {
                let p = g * hw[(i, ll)].norm_sqr();
                if (m, rr, ll) == (n, r, l) {
                    own = p;
                } else {
                    other += p;
                }
            }
        }
    }
    cfg.rho * own / (1.0 + cfg.rho * other)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sinr_matches_matrix_oracle(
        m in 1usize..3, q in 1usize..3, n_t in 1usize..4, n_r in 1usize..3, k in 1usize..4,
        rho_db in -5.0f64..15.0, seed in any::<u64>(), trial in 0u64..1000,
    ) {
        let att = AttenuationProfile::log_uniform_db(m, q, k, -10.0, 10.0, seed).unwrap();
        let cfg = NetworkConfig::new(m, q, n_t, n_r, k, 10f64.powf(rho_db / 10.0), att, seed).unwrap();
        let ch = sample_channels(&cfg, trial);
        let tab = compute_sinr_table(&cfg, &ch);
        for n in 0..m { for kk in 0..k { for i in 0..n_r { for r in 0..q { for l in 0..n_t {
            let got = tab.get(n, kk, i, r, l);
            let want = sinr_oracle(&cfg, &ch, n, kk, i, r, l);
            prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-12), "{} vs {}", got, want);
        }}}}}
    }

    #[test]
    fn round_outcomes_are_consistent(
        m in 1usize..3, q in 1usize..3, n_t in 1usize..4, n_r in 1usize..3, k in 1usize..12,
        beta in 0.05f64..3.0, seed in any::<u64>(), trial in 0u64..1000,
    ) {
        let cfg = NetworkConfig::homogeneous(m, q, n_t, n_r, k, 10.0, seed).unwrap();
        let betas = BetaTable::uniform(&cfg, beta).unwrap();
        let out = run_round(&cfg, &betas, trial, true).unwrap();
        let dbg = out.debug.unwrap();
        let o = out.outcome;
        prop_assert!(dbg.sets.is_disjoint());
        prop_assert_eq!(o.assignments.len(), m * q * n_t);
        for n in 0..m {
            let msgs = dbg.messages.iter().filter(|f| f.n == n).count();
            prop_assert_eq!(o.messages[n], msgs);
            prop_assert_eq!(o.feedback_bits[n], msgs as u64 * cfg.feedback_bits() as u64);
            let sets: usize = dbg.sets.cells[n].sizes().sum();
            prop_assert_eq!(sets, msgs);
        }
        let mut seen = std::collections::HashSet::new();
        for a in &o.assignments {
            match a.served {
                Some((kk, i)) => {
                    prop_assert!(a.candidates >= 1);
                    prop_assert!(seen.insert((a.n, kk, i)), "antenna served twice");
                    prop_assert!(dbg.sets.cells[a.n].set(a.r, a.l).contains(&(kk, i)));
                    prop_assert_eq!(a.sinr, dbg.sinr.get(a.n, kk, i, a.r, a.l));
                    let norm = a.sinr / betas.get(a.n, kk, a.r);
                    prop_assert!(norm >= 1.0);
                    for r in 0..q {
                        for l in 0..n_t {
                            let v = dbg.sinr.get(a.n, kk, i, r, l) / betas.get(a.n, kk, r);
                            prop_assert!(v <= norm, "served beam is not the antenna's best");
                        }
                    }
                    prop_assert!((a.rate - (1.0 + a.sinr).log2()).abs() < 1e-12);
                }
                None => {
                    prop_assert_eq!(a.candidates, 0);
                    prop_assert_eq!(a.rate, 0.0);
                }
            }
        }
    }
}
