//! Desk-scale training lab.
//!
//! Everything here exists to exercise the objective end to end without an
//! LLM in the loop: [`task`] builds synthetic prompts whose response
//! utilities are known exactly, [`policy`] is a tabular softmax policy (one
//! logit per prompt–response pair, so gradients are exact and cheap),
//! [`baselines`] provides competing ranking objectives, and [`trainer`]
//! runs the optimizer loop with the annealed anchor/drift schedules and
//! reports accuracy/ordering/drift metrics against ground truth.

pub mod baselines;
pub mod policy;
pub mod task;
pub mod trainer;

use thiserror::Error;

use crate::graph::GraphError;
use crate::objective::ObjectiveError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least one prompt, got {0}")]
    NoPrompts(usize),
    #[error("need at least 2 responses per prompt, got {0}")]
    TooFewResponses(usize),
    #[error("discretization levels must satisfy 1 <= G <= M, got G={levels}, M={responses}")]
    InvalidLevels { levels: usize, responses: usize },
    #[error("utility noise must be finite and >= 0, got {0}")]
    InvalidNoise(f64),
    #[error("rollouts per prompt must be >= 2, got {0}")]
    TooFewRollouts(usize),
    #[error("temperature must be finite and > 0, got {0}")]
    InvalidTemperature(f64),
    #[error("steps must be >= 1")]
    ZeroSteps,
    #[error("batch size must be >= 1")]
    ZeroBatch,
    #[error("eval cadence must be >= 1")]
    ZeroEvalCadence,
    #[error("peak learning rate must be finite and >= 0, got {0}")]
    InvalidLearningRate(f64),
    #[error("{name} must lie in (0, 1], got {value}")]
    InvalidFraction { name: &'static str, value: f64 },
    #[error(
        "unknown objective {0:?}; expected graphdpo, graphdpo+gt, dpo-pairwise, \
         pro-listmle, or multi-negative"
    )]
    UnknownObjective(String),
    #[error("multi-negative training needs a two-level task, got G={0}")]
    NeedsTwoLevels(usize),
    #[error("multi-negative loss requires exactly 2 preference classes, got {0}")]
    NotTwoClasses(usize),
    #[error("{scores} scores supplied for {labels} labels")]
    ScoreLabelMismatch { scores: usize, labels: usize },
    #[error("sweep grid is empty")]
    EmptySweepGrid,
    #[error("loss became non-finite at step {step} ({loss}); lower the learning rate")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}
