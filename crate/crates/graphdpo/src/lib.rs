//! Preference optimization over layered DAGs of ranked rollouts.
//!
//! Given several scored responses to a prompt, this crate arranges them into
//! a layered preference DAG (ties share a class, edges run from better to
//! strictly worse), evaluates a log-sum-exp objective in which every
//! response competes against the set it dominates, and produces analytic
//! gradients suitable for driving an optimizer. A verified reference answer
//! can be anchored into the graph with an annealed weight, and a token-mean
//! log-ratio term regularizes drift from the reference model.
//!
//! The crate is organized around small, pure modules:
//!
//! - [`graph`]: build/validate/query layered preference DAGs.
//! - [`objective`]: scores, centering, graph/anchor/KL losses, schedules.
//! - [`gradients`]: analytic gradients, finite-difference checking, and
//!   per-node influence diagnostics.
//! - [`oracle`]: deliberately naive reference implementations used only to
//!   cross-check the production paths.
//! - [`synth`]: a desk-scale training lab — synthetic ranked tasks, a
//!   tabular softmax policy, baseline objectives, and an optimizer loop.
//! - [`data`]: JSONL ingestion/validation for rollout logs.
//! - [`bench`]: a micro-timing harness contrasting the quadratic and linear
//!   loss evaluations.

pub mod bench;
pub mod data;
pub mod gradients;
pub mod graph;
pub mod objective;
pub mod oracle;
pub mod synth;

pub use bench::{loss_scaling_bench, BenchRow};
pub use data::{
    emit, ingest, score_record, validate_record, DataError, Ingest, ResponseRecord,
    RolloutRecord, ScoredGt, ScoredPrompt,
};
pub use gradients::{
    finite_diff_check, grad_anchor_loss, grad_graph_loss, grad_total, grad_total_with_weights,
    node_influence, FiniteDiffReport, GradientVector,
};
pub use graph::{
    build_from_edges, build_from_labels, gt_standing, EdgeBuild, EdgeList, GraphError,
    GtStanding, PreferenceGraph, PreferenceLabeling, ValidationReport,
};
pub use objective::{
    anchor_loss, graph_loss_layered, graph_loss_naive, kl_regularizer, lambda_gt, lambda_kl,
    local_losses, log_ratio_score, sequence_logprob, total_loss, total_loss_with_weights,
    GraphLossTerm, LossBreakdown, ObjectiveError, ScheduleParams, ScoreSet, TokenLogProbs,
};
pub use synth::baselines::{
    baseline_dpo_pairwise, baseline_multi_negative, baseline_pro_listmle, BaselineTerms,
};
pub use synth::policy::TabularPolicy;
pub use synth::task::{gen_task, ToyTask};
pub use synth::trainer::{
    evaluate, sample_rollouts, sweep_lambda_gt, train, AdamW, EvalStats, Metrics, ObjectiveKind,
    RolloutSet, SweepRow, TrainConfig, TrainRun,
};
pub use synth::SynthError;
