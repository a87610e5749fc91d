//! Guess sets that favour nodes sitting on the integer steady state.

use thiserror::Error;

use crate::bnb::{GuessSet, Strategy};
use crate::model::ConstraintSet;
use crate::relaxation::{PartialAssignment, StageAssignment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuessError {
    #[error("template needs {needed} stages, horizon is {horizon}")]
    TooLong { needed: usize, horizon: usize },
    #[error("tail start {k_hat} not below horizon {horizon}")]
    TailStart { k_hat: usize, horizon: usize },
    #[error("no base weights")]
    EmptyWeights,
    #[error("template value has {got} channels, expected {expected}")]
    Channels { expected: usize, got: usize },
}

/// `[entry, v̄ …, leave]` with weight `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessTemplate {
    pub entry: Vec<Vec<i64>>,
    pub leave: Vec<Vec<i64>>,
    pub weight: f64,
}

impl GuessTemplate {
    pub fn new(entry: Vec<Vec<i64>>, leave: Vec<Vec<i64>>, weight: f64) -> Self {
        Self { entry, leave, weight }
    }

    fn instantiate(&self, v_bar: &[i64], horizon: usize) -> Result<Vec<Vec<i64>>, GuessError> {
        let needed = self.entry.len() + self.leave.len();
        if needed >= horizon {
            return Err(GuessError::TooLong { needed, horizon });
        }
        if let Some(v) = self.entry.iter().chain(&self.leave).find(|v| v.len() != v_bar.len()) {
            return Err(GuessError::Channels {
                expected: v_bar.len(),
                got: v.len(),
            });
        }
        let plateau = horizon - needed;
        Ok(self
            .entry
            .iter()
            .cloned()
            .chain(std::iter::repeat_n(v_bar.to_vec(), plateau))
            .chain(self.leave.iter().cloned())
            .collect())
    }
}

/// Hand-picked templates for the scalar binary piecewise-affine example:
/// two or three leading ones, then up to four trailing ones.
pub fn table1_templates() -> Vec<GuessTemplate> {
    let ones = |n: usize| vec![vec![1]; n];
    vec![
        GuessTemplate::new(ones(2), ones(0), 1.0),
        GuessTemplate::new(ones(3), ones(0), 2.0),
        GuessTemplate::new(ones(3), ones(1), 3.0),
        GuessTemplate::new(ones(3), ones(2), 4.0),
        GuessTemplate::new(ones(3), ones(3), 3.0),
        GuessTemplate::new(ones(3), ones(4), 2.0),
    ]
}

/// Full guesses from templates. Without templates, the pure plateau with
/// weight one.
pub fn plateau_guesses(v_bar: &[i64], horizon: usize, templates: &[GuessTemplate]) -> Result<GuessSet, GuessError> {
    if templates.is_empty() {
        let pure = GuessTemplate::new(Vec::new(), Vec::new(), 1.0);
        return plateau_guesses(v_bar, horizon, &[pure]);
    }
    let mut gs = GuessSet::empty();
    for t in templates {
        gs.push(PartialAssignment::full(&t.instantiate(v_bar, horizon)?), t.weight);
    }
    Ok(gs)
}

/// One guess per `k̂`: relaxed before `k̂`, `v̄` from `k̂` on.
pub fn tail_guesses(v_bar: &[i64], horizon: usize, k_hats: &[usize]) -> Result<Vec<PartialAssignment>, GuessError> {
    k_hats
        .iter()
        .map(|&k_hat| {
            if k_hat >= horizon {
                return Err(GuessError::TailStart { k_hat, horizon });
            }
            Ok(PartialAssignment {
                entries: (0..horizon)
                    .map(|k| {
                        if k < k_hat {
                            StageAssignment::Relaxed
                        } else {
                            StageAssignment::Fixed(v_bar.to_vec())
                        }
                    })
                    .collect(),
            })
        })
        .collect()
}

/// `4 · max(W)`.
pub fn dominant_weight(base_weights: &[f64]) -> Result<f64, GuessError> {
    base_weights
        .iter()
        .copied()
        .reduce(f64::max)
        .map(|m| 4.0 * m)
        .ok_or(GuessError::EmptyWeights)
}

/// Dominant weight against the base weights of `strategy` on a horizon.
pub fn strategy_dominant_weight(strategy: Strategy, horizon: usize) -> f64 {
    4.0 * strategy.max_base_weight(horizon)
}

/// Single-guess sets for each `k̂`, each at the dominant weight.
pub fn tail_guess_sets(
    v_bar: &[i64],
    horizon: usize,
    k_hats: &[usize],
    strategy: Strategy,
) -> Result<Vec<GuessSet>, GuessError> {
    let w = strategy_dominant_weight(strategy, horizon);
    Ok(tail_guesses(v_bar, horizon, k_hats)?
        .into_iter()
        .map(|g| {
            let mut gs = GuessSet::empty();
            gs.push(g, w);
            gs
        })
        .collect())
}

/// Whether every fixed stage of every guess lies in `V`.
pub fn channel_feasible(gs: &GuessSet, constraints: &ConstraintSet) -> bool {
    gs.guesses
        .iter()
        .flat_map(|g| g.entries.iter())
        .filter_map(StageAssignment::fixed)
        .all(|v| constraints.v_member(v))
}
