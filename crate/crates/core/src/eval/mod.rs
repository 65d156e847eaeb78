//! Validation metric suite: regression MAE, token recall, CIDEr, the Elo
//! tournament harness, and the randomized scenario generator for the
//! emergent-behavior benchmark.

mod elo;
mod metrics;
mod scenarios;

pub use elo::{
    elo_expected, elo_update, run_tournament, update_match, Competitor, CompetitorRating,
    EloRating, Judge, LexicalJudge, MatchOutcome, TournamentResult, DEFAULT_K, INITIAL_RATING,
};
pub use metrics::{
    cider, cider_with, mae, token_recall, tokenize, CiderInput, CiderWeighting, RecallInput,
    RegressionSample,
};
pub use scenarios::{generate_scenarios, Material, Scenario, NOMINAL_TEMP_TOLERANCE_C};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("empty sample set")]
    EmptyInput,
    #[error("at least one reference is required")]
    NoReferences,
    #[error("reference {0} has zero tokens")]
    EmptyReference(usize),
    #[error("candidate tokenizes to nothing")]
    EmptyCandidate,
    #[error("invalid match score {0}; expected 1, 0.5, or 0")]
    InvalidScore(f64),
    #[error("a tournament needs at least two competitors, got {0}")]
    NotEnoughCompetitors(usize),
    #[error("judge failed: {0}")]
    JudgeFailed(String),
}
