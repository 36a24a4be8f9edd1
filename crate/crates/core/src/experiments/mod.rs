//! Experiment plumbing behind the command-line tool: configuration files,
//! sweeps, output writers, verification suites and the figure presets.

pub mod config;
pub mod figures;
pub mod run;
pub mod verify;

pub use config::{
    AttenuationSpec, CalibrationChoice, CalibrationSpec, ConfigFile, Overrides, PointSpec,
    SweepSpec, SweepVariable,
};
pub use run::{
    run_calibration_sweep, run_point, run_sweep, write_calibration_csv, write_metadata,
    write_results_csv, CalibrationRow, PointResult, RunOptions, CALIBRATE_HEADER,
    SIMULATE_HEADER,
};
pub use verify::{run_verify, CheckResult, Fault, VerifyOptions, VerifyReport};
