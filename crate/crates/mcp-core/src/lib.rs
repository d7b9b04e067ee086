//! Detector-agnostic calibration toolkit for machine-generated-text
//! detection with a provable false-positive-rate bound.
//!
//! Any detector that emits a scalar score per text can be wrapped: raw
//! scores are mapped through a sigmoid into nonconformity space
//! ([`types::nonconformity`]), length-binned conformal quantiles are
//! estimated from human-written calibration text ([`calibration`]), and new
//! instances are classified by comparing their score against the threshold
//! of their length bin ([`detection`]). Under exchangeability of calibration
//! and test human text, the false positive rate is bounded by the chosen
//! `alpha`.
//!
//! Supporting modules: classical calibration baselines for comparison
//! ([`baselines`]), metrics and sweeps ([`evaluation`]), a synthetic score
//! generator for validating the guarantee at desk scale ([`synthetic`]),
//! token-level edit attacks ([`attack`]), and file formats ([`io`]).

pub mod attack;
pub mod baselines;
pub mod calibration;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod synthetic;
pub mod types;

pub use calibration::{
    calibrate_cp, calibrate_mcp, calibrate_mcp_opts, cp_quantile, CalibrationSet, QuantileTable,
};
pub use detection::{detect, detect_batch, Verdict};
pub use error::{Error, Result};
pub use types::{nonconformity, DetectorProfile, Label, NonconformityScore, Polarity, ScoredInstance};
