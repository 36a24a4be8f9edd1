//! Preset sweeps reproducing the four published figures at desk scale.

use std::path::{Path, PathBuf};

use super::config::{
    AttenuationSpec, CalibrationChoice, CalibrationSpec, ConfigFile, NetworkSection, Overrides,
    SeriesOverride, SweepSection, SweepSpec, SweepVariable, DEFAULT_TRIALS, DESK_K_GRID,
};
use super::run::{
    run_calibration_sweep, run_sweep, write_calibration_csv, write_metadata, write_results_csv,
    RunOptions,
};
use crate::error::{Error, Result};

fn network(m: usize, q: usize, n_t: usize, n_r: usize) -> NetworkSection {
    NetworkSection {
        m,
        q,
        n_t,
        n_r,
        k: 10,
        rho_db: Some(10.0),
        rho: None,
        seed: 1,
    }
}

fn k_grid() -> Vec<f64> {
    DESK_K_GRID.iter().map(|k| *k as f64).collect()
}

fn series(label: &str, f: impl FnOnce(&mut SeriesOverride)) -> SeriesOverride {
    let mut s = SeriesOverride {
        label: Some(label.to_string()),
        ..Default::default()
    };
    f(&mut s);
    s
}

fn config(net: NetworkSection, calibration: CalibrationSpec, sweep: SweepSection) -> ConfigFile {
    ConfigFile {
        network: net,
        attenuation: AttenuationSpec::default(),
        calibration,
        sweep: Some(sweep),
    }
}

fn closed_form() -> CalibrationSpec {
    CalibrationSpec {
        method: CalibrationChoice::ClosedForm,
        samples: None,
    }
}

/// Normalization factor versus `K`, `M=3, Q=2, N_t=2`, at 0, 5 and 10 dB,
/// calibrated by Monte Carlo.
pub fn fig1_config() -> ConfigFile {
    config(
        network(3, 2, 2, 1),
        CalibrationSpec {
            method: CalibrationChoice::Empirical,
            samples: Some(1_000_000),
        },
        SweepSection {
            variable: SweepVariable::K,
            values: k_grid(),
            clusters: vec![],
            trials: DEFAULT_TRIALS,
            series: [0.0, 5.0, 10.0]
                .into_iter()
                .map(|db| series(&format!("rho={db}dB"), |s| s.rho_db = Some(db)))
                .collect(),
        },
    )
}

/// Sum-rate versus `K`, `Q=2`, 10 dB, `N_r=1`, four `(M, N_t)` curves.
pub fn fig2_config() -> ConfigFile {
    config(
        network(1, 2, 2, 1),
        closed_form(),
        SweepSection {
            variable: SweepVariable::K,
            values: k_grid(),
            clusters: vec![],
            trials: DEFAULT_TRIALS,
            series: [(1, 2), (1, 3), (2, 2), (2, 3)]
                .into_iter()
                .map(|(m, n_t)| {
                    series(&format!("M={m},N_t={n_t}"), |s| {
                        s.m = Some(m);
                        s.n_t = Some(n_t);
                    })
                })
                .collect(),
        },
    )
}

/// Aggregate feedback versus `K`, `N_r=1`, 10 dB, five `(Q, N_t)` curves.
pub fn fig3_config() -> ConfigFile {
    config(
        network(2, 1, 2, 1),
        closed_form(),
        SweepSection {
            variable: SweepVariable::K,
            values: k_grid(),
            clusters: vec![],
            trials: DEFAULT_TRIALS,
            series: [(1, 2), (1, 3), (2, 2), (2, 3), (2, 4)]
                .into_iter()
                .map(|(q, n_t)| {
                    series(&format!("Q={q},N_t={n_t}"), |s| {
                        s.q = Some(q);
                        s.n_t = Some(n_t);
                    })
                })
                .collect(),
        },
    )
}

/// Sum-rate versus total users `M K` for the four clusterings of six
/// base-stations, `N_t` in {2, 4}, `N_r=3`, 10 dB.
pub fn fig4_config() -> ConfigFile {
    let mut sw = Vec::new();
    for n_t in [2, 4] {
        for (m, q) in [(6, 1), (3, 2), (2, 3), (1, 6)] {
            sw.push(series(&format!("N_t={n_t},M={m},Q={q}"), |s| {
                s.m = Some(m);
                s.q = Some(q);
                s.n_t = Some(n_t);
            }));
        }
    }
    config(
        network(6, 1, 2, 3),
        closed_form(),
        SweepSection {
            variable: SweepVariable::Users,
            values: vec![60.0, 180.0, 600.0, 1800.0, 6000.0],
            clusters: vec![],
            trials: DEFAULT_TRIALS,
            series: sw,
        },
    )
}

/// Runs all four presets and writes `fig1.csv` .. `fig4.csv` (plus sidecars)
/// into `out_dir`.
pub fn run_figures(
    out_dir: &Path,
    ov: Overrides,
    beta_cache: Option<PathBuf>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let spec = SweepSpec::from_config(&fig1_config(), ov)?;
    let rows = run_calibration_sweep(&spec, beta_cache.as_deref())?;
    let path = out_dir.join("fig1.csv");
    write_calibration_csv(&path, &rows)?;
    write_metadata(&path, "calibrate", &spec, &rows)?;
    written.push(path);

    for (name, cfg) in [
        ("fig2.csv", fig2_config()),
        ("fig3.csv", fig3_config()),
        ("fig4.csv", fig4_config()),
    ] {
        let spec = SweepSpec::from_config(&cfg, ov)?;
        let mut opts = RunOptions {
            beta_cache: beta_cache.clone(),
            ..Default::default()
        };
        let results = run_sweep(&spec, &mut opts)?;
        let path = out_dir.join(name);
        write_results_csv(&path, &results)?;
        write_metadata(&path, "simulate", &spec, &results)?;
        written.push(path);
    }
    Ok(written)
}
