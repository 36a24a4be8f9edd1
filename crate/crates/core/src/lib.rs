//! Finite-feedback random-beamforming scheduling for multi-cell MIMO
//! downlink, simulated at SINR level.
//!
//! The crate is split along the life of one scheduling round:
//!
//! - [`model`]: network configuration, channel and beamformer sampling,
//!   per-trial random streams.
//! - [`sinr`]: SINR tables, the `S`/`T` surrogates and their closed-form CDFs.
//! - [`calibration`]: per-user normalization factors by quantile bisection.
//! - [`scheduler`]: best-beam selection, threshold feedback, candidate sets
//!   and random user selection.
//! - [`metrics`]: sum-rate, feedback and fairness aggregation.
//! - [`orderstats`]: order-statistic CDFs, candidate-set mixture weights and
//!   the rate bound integrals.
//! - [`experiments`]: configuration files, sweeps, CSV/JSON output and the
//!   verification suites behind the command-line tool.

pub mod calibration;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod orderstats;
pub mod scheduler;
pub mod sinr;
pub mod stats;

pub use calibration::{
    analytic_beta_homogeneous, calibrate_beta, calibrate_closed_form, BetaTable,
    CalibrationMethod, EmpiricalCdf,
};
pub use error::{Error, Result};
pub use model::{
    sample_beamformers, sample_channels, AttenuationProfile, ChannelRealization, NetworkConfig,
    RngPolicy,
};
pub use scheduler::{feedback_round, run_round, select_users, ScheduleOutcome};
pub use sinr::{compute_bounds, compute_sinr_table, ClosedFormCdf, SinrTable};
