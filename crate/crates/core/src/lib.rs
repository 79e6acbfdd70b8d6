//! Contact-process simulation of interest-aware forwarding in
//! pocket-switched networks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod interest;
pub mod meeting;
pub mod output;
pub mod routing;
pub mod trace;
pub mod validation;

pub use analysis::{
    boundedness_check, delay_difference_vs_ttl, forwarding_fraction, log_delta_fit, mean_ci,
    meeting_similarity_correlation, CheckReport, CorrelationReport, FitResult, SummaryStats,
};
pub use engine::{
    replay_trace, run_experiment, run_trial, simulate, sub_seed, EngineMode, ExperimentConfig,
    ExperimentOutcome, ExperimentSummary, Message, PopulationMode, Replayer, TrialResult,
};
pub use config::Config;
pub use error::{Error, Result};
pub use interest::{
    angle_between, cosine_similarity, sample_profile, InterestProfile, NodeId, Population, Scenario,
};
pub use meeting::{build_rate_matrix, sample_min_meeting, DeltaSpec, RateMatrix, RateModel};
pub use routing::{Eligibility, ProtocolSpec, ProtocolState};
pub use trace::{
    build_binary_profiles, filter_short_contacts, generate_synthetic_trace, parse_trace, write_trace,
    ContactEvent, ContactTrace, ProfileTable,
};
