//! Elo ratings and the blind pairwise tournament harness.

use super::metrics::{token_recall, RecallInput};
use super::EvalError;
use crate::perception::stream_seed;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const INITIAL_RATING: f64 = 1200.0;
pub const DEFAULT_K: f64 = 16.0;

/// A competitor's current rating and update factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloRating {
    pub competitor: String,
    pub rating: f64,
    pub k: f64,
}

impl EloRating {
    pub fn new(competitor: impl Into<String>) -> Self {
        Self {
            competitor: competitor.into(),
            rating: INITIAL_RATING,
            k: DEFAULT_K,
        }
    }
}

/// Result of one pairwise match, from A's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchOutcome {
    WinA,
    WinB,
    Draw,
}

impl MatchOutcome {
    pub fn score_a(self) -> f64 {
        match self {
            MatchOutcome::WinA => 1.0,
            MatchOutcome::WinB => 0.0,
            MatchOutcome::Draw => 0.5,
        }
    }
}

/// Expected score of a player rated `r` against `r_opp`:
/// `1 / (1 + 10^((r_opp - r) / 400))`.
pub fn elo_expected(r: f64, r_opp: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_opp - r) / 400.0))
}

/// One-sided update `R' = R + k * (S - E)`. The score must be 1, 0.5, or 0.
pub fn elo_update(rating: f64, score: f64, opp_rating: f64, k: f64) -> Result<f64, EvalError> {
    if score != 1.0 && score != 0.5 && score != 0.0 {
        return Err(EvalError::InvalidScore(score));
    }
    Ok(rating + k * (score - elo_expected(rating, opp_rating)))
}

/// Update both players of a match symmetrically.
pub fn update_match(a: &mut EloRating, b: &mut EloRating, outcome: MatchOutcome) {
    let score_a = outcome.score_a();
    let (ra, rb) = (a.rating, b.rating);
    a.rating = ra + a.k * (score_a - elo_expected(ra, rb));
    b.rating = rb + b.k * ((1.0 - score_a) - elo_expected(rb, ra));
}

// ---------------------------------------------------------------------------
// Tournament

/// Something that can answer benchmark items.
pub trait Competitor: Send + Sync {
    fn name(&self) -> &str;
    fn answer(&self, item: &str) -> String;
}

/// Blind pairwise reviewer: given the question and two anonymized answers,
/// pick a winner or call a draw.
pub trait Judge: Send + Sync {
    fn judge(&self, question: &str, answer_a: &str, answer_b: &str)
        -> Result<MatchOutcome, EvalError>;
}

/// Deterministic judge for hermetic runs: scores each answer by token
/// recall against a reference answer and prefers the higher one.
pub struct LexicalJudge<F>
where
    F: Fn(&str) -> Option<String> + Send + Sync,
{
    reference_for: F,
}

impl<F> LexicalJudge<F>
where
    F: Fn(&str) -> Option<String> + Send + Sync,
{
    pub fn new(reference_for: F) -> Self {
        Self { reference_for }
    }
}

impl<F> Judge for LexicalJudge<F>
where
    F: Fn(&str) -> Option<String> + Send + Sync,
{
    fn judge(
        &self,
        question: &str,
        answer_a: &str,
        answer_b: &str,
    ) -> Result<MatchOutcome, EvalError> {
        let reference = (self.reference_for)(question)
            .ok_or_else(|| EvalError::JudgeFailed(format!("no reference for '{question}'")))?;
        let score = |answer: &str| -> Result<f64, EvalError> {
            let input = RecallInput::from_texts(answer, &[reference.as_str()]);
            token_recall(&input)
        };
        let (sa, sb) = (score(answer_a)?, score(answer_b)?);
        Ok(if sa > sb {
            MatchOutcome::WinA
        } else if sb > sa {
            MatchOutcome::WinB
        } else {
            MatchOutcome::Draw
        })
    }
}

/// Final ratings for one competitor: per-round values plus mean and std
/// across rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorRating {
    pub competitor: String,
    pub rounds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub ratings: Vec<CompetitorRating>,
    pub rounds: usize,
    pub items: usize,
    pub skipped_items: usize,
}

impl TournamentResult {
    /// CSV table: one row per competitor, per-round columns then mean/std.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("competitor");
        for round in 1..=self.rounds {
            out.push_str(&format!(",round_{round}"));
        }
        out.push_str(",mean,std\n");
        for rating in &self.ratings {
            out.push_str(&rating.competitor);
            for value in &rating.rounds {
                out.push_str(&format!(",{value:.2}"));
            }
            out.push_str(&format!(",{:.2},{:.2}\n", rating.mean, rating.std));
        }
        out
    }
}

fn run_round(
    competitors: &[&dyn Competitor],
    items: &[String],
    judge: &dyn Judge,
    seed: u64,
) -> (Vec<f64>, usize) {
    let mut ratings: Vec<EloRating> =
        competitors.iter().map(|c| EloRating::new(c.name())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut skipped = 0;
    for item in items {
        let a = rng.gen_range(0..competitors.len());
        let mut b = rng.gen_range(0..competitors.len() - 1);
        if b >= a {
            b += 1;
        }
        let answer_a = competitors[a].answer(item);
        let answer_b = competitors[b].answer(item);
        match judge.judge(item, &answer_a, &answer_b) {
            Ok(outcome) => {
                let (left, right) = if a < b {
                    let (head, tail) = ratings.split_at_mut(b);
                    (&mut head[a], &mut tail[0])
                } else {
                    let (head, tail) = ratings.split_at_mut(a);
                    (&mut tail[0], &mut head[b])
                };
                // left is competitor a, right is competitor b.
                update_match(left, right, outcome);
            }
            Err(err) => {
                log::warn!("judge failed on item, skipping: {err}");
                skipped += 1;
            }
        }
    }
    (ratings.into_iter().map(|r| r.rating).collect(), skipped)
}

/// Run `rounds` independent tournaments: each round re-initializes ratings
/// at 1200, draws a random pair per item, judges blindly, and updates both
/// sides. The report aggregates mean and std per competitor across rounds.
pub fn run_tournament(
    competitors: &[&dyn Competitor],
    items: &[String],
    judge: &dyn Judge,
    rounds: usize,
    rng_seed: u64,
) -> Result<TournamentResult, EvalError> {
    if competitors.len() < 2 {
        return Err(EvalError::NotEnoughCompetitors(competitors.len()));
    }
    let rounds = rounds.max(1);
    #[cfg(feature = "parallel")]
    let per_round: Vec<(Vec<f64>, usize)> = (0..rounds)
        .into_par_iter()
        .map(|round| run_round(competitors, items, judge, stream_seed(rng_seed, round)))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let per_round: Vec<(Vec<f64>, usize)> = (0..rounds)
        .map(|round| run_round(competitors, items, judge, stream_seed(rng_seed, round)))
        .collect();

    let skipped_items = per_round.iter().map(|(_, s)| s).sum();
    let ratings = competitors
        .iter()
        .enumerate()
        .map(|(idx, competitor)| {
            let values: Vec<f64> = per_round.iter().map(|(r, _)| r[idx]).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / values.len() as f64)
                .sqrt();
            CompetitorRating {
                competitor: competitor.name().to_string(),
                rounds: values,
                mean,
                std,
            }
        })
        .collect();
    Ok(TournamentResult {
        ratings,
        rounds,
        items: items.len(),
        skipped_items,
    })
}
