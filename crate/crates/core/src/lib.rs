//! Finite-key analysis of the 4-intensity decoy-state MDI-QKD protocol.
//!
//! The crate is `no_std` (with `alloc`) and purely numerical. It covers the
//! source model, the symmetric two-arm channel with an untrusted Bell-state
//! measurement, statistical fluctuation bounds, the linear-programming bound
//! on the single-photon-pair yield, the jointly worst-cased key rate, and a
//! multi-start parameter optimizer. File formats, parallel execution and the
//! command-line front end live in the `mdiqkd` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod estimator;
pub mod fluctuation;
pub mod keyrate;
pub mod lp;
pub mod optimizer;
pub mod oracle;
pub mod source;
pub mod special;

pub use channel::{
    arm_transmittance, gain_x, gain_z, simulate_observed, ChannelParams, DeviceLine, Gain,
    ObservedStats, SimulationMode, SourceStats,
};
pub use estimator::{
    build_constraints, e11_upper_bound, h_interval, s11_lower_bound, DecoyCoefficients, E11Bound,
    HInterval, MeanConstraints, S11Bound,
};
pub use fluctuation::{
    coverage_trial, gamma_for_epsilon, mean_range, CoverageReport, FailureLedger, FluctuationPolicy,
};
pub use keyrate::{
    baseline_rate, binary_entropy, rate_at_h, worst_case_rate, KeyRateResult, RateMethod,
    RateSettings,
};
pub use optimizer::{optimize, OptimizationResult, SearchConfig};
pub use oracle::{bsm_oracle_gain, Basis};
pub use source::{pair_counts, poisson_coefficients, validate_spec, PairSource, SourceSpec};

/// Errors raised anywhere in the analysis pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("invalid source specification: {}", .0.join("; "))]
    InvalidSpec(alloc::vec::Vec<alloc::string::String>),
    #[error("degenerate configuration: pair source {0} receives no pulses")]
    Degenerate(PairSource),
    #[error("configuration error: {0}")]
    Config(alloc::string::String),
    #[error("numeric failure: {0}")]
    Numeric(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
