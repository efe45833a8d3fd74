//! Device-free localization of passive targets with two base stations and
//! one intelligent reflecting surface (IRS).
//!
//! The pipeline synthesizes the OFDM channel of every path, recovers the
//! delay taps with a LASSO and a group LASSO, associates the recovered
//! ranges across base stations and solves a small maximum-likelihood
//! trilateration problem per target.

pub mod association;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod scenario;
pub mod sparse_recovery;

pub use association::{solve, Association, AssociationConfig, LocalizationResult, NoiseModel, SearchMode};
pub use channel::{simulate_rx, synth_taps, IrsProfile, ReceivedSignal, TapBundle};
pub use config::{Allocation, SystemConfig, SPEED_OF_LIGHT};
pub use error::{Error, Result};
pub use montecarlo::{error_probability, run_experiment, run_trial, Experiment, TrialConfig, TrialResult};
pub use scenario::{delay_bin, distances, sample_scenario, PathKind, Placement, Point2D, Scenario};
pub use sparse_recovery::{recover_supports, solve_group_lasso, solve_lasso, RangeSets};
