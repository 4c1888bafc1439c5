//! Randomized (asynchronous) guesswork subject to a distortion constraint.
//!
//! A guesser draws i.i.d. guesses from a law on the reproduction alphabet
//! until one lands within distortion `Δ` of the secret. This crate computes
//! the moments of the number of guesses, one-shot achievability bounds in
//! terms of the distortion-ball Rényi entropy, mismatched rate-distortion
//! functions, the asymptotic exponents of i.i.d. strategies, exact small-n
//! oracles based on the method of types, and Monte-Carlo validation.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distortion;
pub mod error;
pub mod exponents;
pub mod info;
pub mod moments;
pub mod numeric;
pub mod quantizer;
pub mod rd;
pub mod simulate;
pub mod types;

pub use distortion::{
    block_ball_membership, block_distortion, build_ball_index, BallIndex, DistortionModel,
    FiniteSource,
};
pub use error::{Error, Result};
pub use exponents::{
    concavity_probe, iid_penalty, iid_strategy_exponent, optimal_iid_exponent,
    strategy_exponent_subgradient, synchronous_exponent, uncertainty_exponent, Certificate,
    ExponentDiagnostics, ExponentReport,
};
pub use info::{cond_entropy, divergence, entropy, mutual_info, Channel, Nats};
pub use moments::{
    ball_mass, expected_moments, g_moment_integer, g_moment_series, oneshot_achievability,
    optimal_sync_guesswork, tilted_strategy, v_moment, MomentReport, Strategy, SyncReport,
};
pub use quantizer::{
    distortion_renyi, exhaustive_quantizer_oracle, greedy_quantizer, majorizes, renyi_entropy,
    MajorizationVerdict, Quantizer,
};
pub use rd::{
    mismatched_rd, rate_distortion, verify_min_identity, MinIdentityReport, RDResult,
    SolverControls,
};
pub use simulate::{
    sample_guesswork, simulate_block, simulate_fixed, trial_rng, MomentEstimate, SimConfig,
    SimMode, SimReport,
};
pub use types::{
    conditional_type_census, enumerate_types, exact_ball_probability, exact_block_moment,
    exponent_convergence_check, BallMethod, BlockMoment, CensusCell, ConditionalType,
    ConvergenceRow, ConvergenceTable, TypeClass,
};
