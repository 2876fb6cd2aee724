//! The training objective: log-ratio scores, per-prompt centering, the
//! graph loss in naive and linear-time forms, ground-truth anchoring, the
//! KL surrogate, and the annealing schedules that weight them.
//!
//! Scores are `beta`-scaled policy/reference log-probability gaps. Each
//! prompt's scores are centered by their own mean before any loss sees
//! them, which makes every term invariant to per-prompt additive shifts.
//! The graph loss charges each response the negative log-probability of
//! being chosen from itself plus everything it dominates (a multinomial
//! logit over centered scores); responses that dominate nothing contribute
//! nothing. Because dominated sets in a layered graph are unions of whole
//! classes, one backward sweep of suffix log-sum-exps evaluates all local
//! terms in `O(K)` — [`graph_loss_layered`] — while [`graph_loss_naive`]
//! enumerates dominated sets directly and exists as the readable form.
//!
//! All log-sum-exps use max-subtraction, and empty sets are represented by
//! a `-inf` sentinel that is never exponentiated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GtStanding, PreferenceGraph};

/// Errors from score construction and loss evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("score list is empty; need at least one response")]
    EmptyScores,
    #[error("score for response {index} is not finite ({value})")]
    NonFiniteScore { index: usize, value: f64 },
    #[error("ground-truth score is not finite ({0})")]
    NonFiniteGtScore(f64),
    #[error("{count} scores supplied for a graph over {nodes} nodes")]
    ScoreCountMismatch { count: usize, nodes: usize },
    #[error("beta must be finite and > 0, got {0}")]
    InvalidBeta(f64),
    #[error("finite-difference step must be finite and > 0, got {0}")]
    InvalidStepSize(f64),
    #[error("token log-probability list is empty")]
    EmptyTokenList,
    #[error("token log-probability at position {index} is {value}; must be finite and <= 0")]
    InvalidTokenLogProb { index: usize, value: f64 },
    #[error("policy covers {policy} responses but the reference covers {reference}")]
    ResponseCountMismatch { policy: usize, reference: usize },
    #[error(
        "response {response}: policy has {policy} tokens but the reference has {reference}"
    )]
    TokenCountMismatch { response: usize, policy: usize, reference: usize },
    #[error("no ground-truth score present in this score set")]
    MissingGroundTruth,
    #[error("ground-truth standing refers to class {class} but the graph has {classes} classes")]
    InvalidStanding { class: usize, classes: usize },
    #[error("schedule requires gt_init >= gt_final >= 0, got init {gt_init}, final {gt_final}")]
    InvalidGtSchedule { gt_init: f64, gt_final: f64 },
    #[error("schedule requires kl_peak >= 0, got {0}")]
    InvalidKlPeak(f64),
    #[error("schedule requires kl_warmup_frac in (0, 1], got {0}")]
    InvalidKlWarmup(f64),
    #[error("schedule requires total_steps >= 1")]
    ZeroTotalSteps,
}

/// Numerically stable `log(exp(a) + exp(b))` with `-inf` as the identity.
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Max-subtracted log-sum-exp; `-inf` for an empty slice.
pub(crate) fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - m).exp()).sum();
    m + sum.ln()
}

/// Per-token log-probabilities of one response under one model.
///
/// Entries are logs of probabilities: finite and `<= 0`. Emptiness and
/// positive entries are rejected at construction, so every value of this
/// type is a valid summand for a sequence log-probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs(Vec<f64>);

impl TokenLogProbs {
    pub fn new(values: Vec<f64>) -> Result<Self, ObjectiveError> {
        if values.is_empty() {
            return Err(ObjectiveError::EmptyTokenList);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value > 0.0 {
                return Err(ObjectiveError::InvalidTokenLogProb { index, value });
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty lists
    }
}

/// Sequence log-probability: the sum of per-token log-probabilities.
pub fn sequence_logprob(tokens: &TokenLogProbs) -> f64 {
    tokens.values().iter().sum()
}

/// The log-ratio score `beta * (policy_lp - ref_lp)`.
pub fn log_ratio_score(policy_lp: f64, ref_lp: f64, beta: f64) -> Result<f64, ObjectiveError> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(ObjectiveError::InvalidBeta(beta));
    }
    Ok(beta * (policy_lp - ref_lp))
}

/// Raw and centered scores for one prompt's responses, plus an optional
/// ground-truth score centered by the same mean.
///
/// The mean is always taken over the sampled responses only — the ground
/// truth does not shift it — so the graph loss is bit-identical whether or
/// not a ground-truth node is present. Centered scores sum to zero (up to
/// rounding) and preserve all pairwise gaps of the raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    raw: Vec<f64>,
    centered: Vec<f64>,
    gt_raw: Option<f64>,
    gt_centered: Option<f64>,
}

impl ScoreSet {
    /// Centers `raw` by its mean; `gt_raw`, when present, is centered by
    /// that same mean.
    pub fn center(raw: Vec<f64>, gt_raw: Option<f64>) -> Result<Self, ObjectiveError> {
        if raw.is_empty() {
            return Err(ObjectiveError::EmptyScores);
        }
        for (index, &value) in raw.iter().enumerate() {
            if !value.is_finite() {
                return Err(ObjectiveError::NonFiniteScore { index, value });
            }
        }
        if let Some(g) = gt_raw {
            if !g.is_finite() {
                return Err(ObjectiveError::NonFiniteGtScore(g));
            }
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let centered = raw.iter().map(|&s| s - mean).collect();
        let gt_centered = gt_raw.map(|g| g - mean);
        Ok(Self { raw, centered, gt_raw, gt_centered })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty score lists
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn centered(&self) -> &[f64] {
        &self.centered
    }

    pub fn gt_raw(&self) -> Option<f64> {
        self.gt_raw
    }

    pub fn gt_centered(&self) -> Option<f64> {
        self.gt_centered
    }
}

/// The graph component of a loss: its value and how many responses had a
/// non-empty dominated set (the mean in the loss runs over exactly those).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphLossTerm {
    pub loss: f64,
    pub contributing_nodes: usize,
}

fn check_scores_match(scores: &ScoreSet, g: &PreferenceGraph) -> Result<(), ObjectiveError> {
    if scores.len() != g.num_nodes() {
        return Err(ObjectiveError::ScoreCountMismatch {
            count: scores.len(),
            nodes: g.num_nodes(),
        });
    }
    Ok(())
}

/// Per-response local losses: `None` for responses that dominate nothing,
/// otherwise `-s~_i + log sum exp over {i} + dominated(i)`.
pub fn local_losses(
    scores: &ScoreSet,
    g: &PreferenceGraph,
) -> Result<Vec<Option<f64>>, ObjectiveError> {
    check_scores_match(scores, g)?;
    let cs = scores.centered();
    let mut out = Vec::with_capacity(cs.len());
    for i in 0..cs.len() {
        let dom = g.dominated_set(i).expect("index in range");
        if dom.is_empty() {
            out.push(None);
            continue;
        }
        let mut vals = Vec::with_capacity(dom.len() + 1);
        vals.push(cs[i]);
        vals.extend(dom.iter().map(|&j| cs[j]));
        out.push(Some(logsumexp(&vals) - cs[i]));
    }
    Ok(out)
}

/// Graph loss by direct enumeration of dominated sets: the mean local loss
/// over responses that dominate at least one other response. A single-class
/// graph has no such responses and yields exactly zero.
pub fn graph_loss_naive(
    scores: &ScoreSet,
    g: &PreferenceGraph,
) -> Result<GraphLossTerm, ObjectiveError> {
    let locals = local_losses(scores, g)?;
    let mut sum = 0.0;
    let mut contributing_nodes = 0;
    for l in locals.into_iter().flatten() {
        sum += l;
        contributing_nodes += 1;
    }
    let loss = if contributing_nodes == 0 { 0.0 } else { sum / contributing_nodes as f64 };
    Ok(GraphLossTerm { loss, contributing_nodes })
}

/// Graph loss via one backward sweep of suffix log-sum-exps.
///
/// For each class `c`, `below[c]` accumulates the log-sum-exp of every
/// score in classes strictly worse than `c` (`-inf` for the bottom class,
/// whose members are skipped). Each local term is then a single
/// two-argument log-sum-exp, for `O(K)` arithmetic overall. Agrees with
/// [`graph_loss_naive`] to within rounding.
pub fn graph_loss_layered(
    scores: &ScoreSet,
    g: &PreferenceGraph,
) -> Result<GraphLossTerm, ObjectiveError> {
    check_scores_match(scores, g)?;
    let cs = scores.centered();
    let classes = g.classes();
    let num_classes = classes.len();

    let class_lse: Vec<f64> = classes
        .iter()
        .map(|class| {
            let vals: Vec<f64> = class.iter().map(|&i| cs[i]).collect();
            logsumexp(&vals)
        })
        .collect();

    let mut below = vec![f64::NEG_INFINITY; num_classes];
    for c in (0..num_classes.saturating_sub(1)).rev() {
        below[c] = log_add_exp(class_lse[c + 1], below[c + 1]);
    }

    let mut sum = 0.0;
    let mut contributing_nodes = 0;
    for (c, class) in classes.iter().enumerate() {
        if below[c] == f64::NEG_INFINITY {
            continue; // bottom class: nothing dominated
        }
        for &i in class {
            sum += log_add_exp(cs[i], below[c]) - cs[i];
            contributing_nodes += 1;
        }
    }
    let loss = if contributing_nodes == 0 { 0.0 } else { sum / contributing_nodes as f64 };
    Ok(GraphLossTerm { loss, contributing_nodes })
}

/// Members of every class the ground truth strictly dominates.
pub(crate) fn gt_dominated_members(
    g: &PreferenceGraph,
    standing: GtStanding,
) -> Result<Vec<usize>, ObjectiveError> {
    let num_classes = g.num_classes();
    let in_range = match standing {
        GtStanding::TiedWith { class } => class < num_classes,
        GtStanding::Above { class } => class <= num_classes,
    };
    if !in_range {
        let class = match standing {
            GtStanding::TiedWith { class } | GtStanding::Above { class } => class,
        };
        return Err(ObjectiveError::InvalidStanding { class, classes: num_classes });
    }
    let first = standing.first_dominated_class();
    Ok(g.classes()[first.min(num_classes)..]
        .iter()
        .flat_map(|class| class.iter().copied())
        .collect())
}

/// Anchoring loss for a ground-truth response: its local loss against the
/// responses in strictly worse classes.
///
/// Responses tied with the ground truth are excluded from the competition
/// set, so a perfect rollout never receives gradient pressure away from an
/// equally good reference answer. When nothing ranks strictly worse the
/// loss is zero.
pub fn anchor_loss(
    scores: &ScoreSet,
    g: &PreferenceGraph,
    standing: GtStanding,
) -> Result<f64, ObjectiveError> {
    check_scores_match(scores, g)?;
    let gt = scores.gt_centered().ok_or(ObjectiveError::MissingGroundTruth)?;
    let worse = gt_dominated_members(g, standing)?;
    if worse.is_empty() {
        return Ok(0.0);
    }
    let cs = scores.centered();
    let mut vals = Vec::with_capacity(worse.len() + 1);
    vals.push(gt);
    vals.extend(worse.iter().map(|&j| cs[j]));
    Ok(logsumexp(&vals) - gt)
}

/// The sequence-mean token-mean log-ratio between policy and reference:
/// `(1/K) * sum_i (1/T_i) * sum_t (policy - reference)`.
///
/// Implemented literally as written — a single-sample surrogate that may be
/// negative. No clamping or absolute value: it is used purely as a weighted
/// regularizer and altering it would change gradients.
pub fn kl_regularizer(
    policy: &[TokenLogProbs],
    reference: &[TokenLogProbs],
) -> Result<f64, ObjectiveError> {
    if policy.len() != reference.len() {
        return Err(ObjectiveError::ResponseCountMismatch {
            policy: policy.len(),
            reference: reference.len(),
        });
    }
    if policy.is_empty() {
        return Err(ObjectiveError::EmptyScores);
    }
    let mut total = 0.0;
    for (response, (p, r)) in policy.iter().zip(reference).enumerate() {
        if p.len() != r.len() {
            return Err(ObjectiveError::TokenCountMismatch {
                response,
                policy: p.len(),
                reference: r.len(),
            });
        }
        let diff: f64 = p
            .values()
            .iter()
            .zip(r.values())
            .map(|(&pt, &rt)| pt - rt)
            .sum();
        total += diff / p.len() as f64;
    }
    Ok(total / policy.len() as f64)
}

/// Annealing parameters for the anchor and KL weights.
///
/// `lambda_gt` decays linearly from `gt_init` to `gt_final` over
/// `total_steps`. `lambda_kl` ramps linearly from zero to `kl_peak` over
/// the first `kl_warmup_frac` of the run, then cosine-decays back to zero.
/// The KL peak and warmup shape are design defaults with no external
/// source; override them freely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub gt_init: f64,
    pub gt_final: f64,
    pub total_steps: u64,
    pub kl_peak: f64,
    pub kl_warmup_frac: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            gt_init: 2.5,
            gt_final: 1.0,
            total_steps: 1000,
            kl_peak: 0.1,
            kl_warmup_frac: 0.1,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.gt_init.is_finite()
            && self.gt_final.is_finite()
            && self.gt_init >= self.gt_final
            && self.gt_final >= 0.0)
        {
            return Err(ObjectiveError::InvalidGtSchedule {
                gt_init: self.gt_init,
                gt_final: self.gt_final,
            });
        }
        if !self.kl_peak.is_finite() || self.kl_peak < 0.0 {
            return Err(ObjectiveError::InvalidKlPeak(self.kl_peak));
        }
        if !self.kl_warmup_frac.is_finite()
            || self.kl_warmup_frac <= 0.0
            || self.kl_warmup_frac > 1.0
        {
            return Err(ObjectiveError::InvalidKlWarmup(self.kl_warmup_frac));
        }
        if self.total_steps == 0 {
            return Err(ObjectiveError::ZeroTotalSteps);
        }
        Ok(())
    }
}

fn clamp_step(t: u64, p: &ScheduleParams) -> f64 {
    if t > p.total_steps {
        log::warn!(
            "schedule step {t} exceeds total_steps {}; clamping to the end of the run",
            p.total_steps
        );
        p.total_steps as f64
    } else {
        t as f64
    }
}

/// Anchor weight at step `t`: linear from `gt_init` (t = 0) to `gt_final`
/// (t = total_steps). Out-of-range steps clamp with a warning.
pub fn lambda_gt(t: u64, p: &ScheduleParams) -> f64 {
    let tf = clamp_step(t, p);
    p.gt_init + (p.gt_final - p.gt_init) * tf / p.total_steps as f64
}

/// KL weight at step `t`: linear ramp to `kl_peak`, then cosine decay to
/// zero at `total_steps` (the decay endpoint wins if the warmup spans the
/// whole run). Out-of-range steps clamp with a warning.
pub fn lambda_kl(t: u64, p: &ScheduleParams) -> f64 {
    let tf = clamp_step(t, p);
    let total = p.total_steps as f64;
    if tf >= total {
        return 0.0;
    }
    let warmup = p.kl_warmup_frac * total;
    if tf <= warmup {
        p.kl_peak * tf / warmup
    } else {
        let phase = (tf - warmup) / (total - warmup);
        p.kl_peak * 0.5 * (1.0 + (std::f64::consts::PI * phase).cos())
    }
}

/// One prompt's loss, term by term.
///
/// `total = graph_loss + lambda_gt * anchor_loss + lambda_kl * kl_loss`,
/// with absent terms contributing zero. The anchor value is `None` when no
/// ground truth was supplied, and the KL value is `None` when no
/// policy/reference token data was available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub graph_loss: f64,
    pub contributing_nodes: usize,
    pub anchor_loss: Option<f64>,
    pub kl_loss: Option<f64>,
    pub lambda_gt: f64,
    pub lambda_kl: f64,
    pub total: f64,
}

/// Combines the loss terms with explicit weights. `kl_value` is the
/// already-evaluated output of [`kl_regularizer`] (or an equivalent
/// token-mean log-ratio).
pub fn total_loss_with_weights(
    scores: &ScoreSet,
    g: &PreferenceGraph,
    standing: Option<GtStanding>,
    kl_value: Option<f64>,
    lambda_gt: f64,
    lambda_kl: f64,
) -> Result<LossBreakdown, ObjectiveError> {
    let graph_term = graph_loss_layered(scores, g)?;
    let anchor = match standing {
        Some(standing) => Some(anchor_loss(scores, g, standing)?),
        None => None,
    };
    let total = graph_term.loss
        + lambda_gt * anchor.unwrap_or(0.0)
        + lambda_kl * kl_value.unwrap_or(0.0);
    Ok(LossBreakdown {
        graph_loss: graph_term.loss,
        contributing_nodes: graph_term.contributing_nodes,
        anchor_loss: anchor,
        kl_loss: kl_value,
        lambda_gt,
        lambda_kl,
        total,
    })
}

/// Combines the loss terms with schedule weights evaluated at step `t`.
pub fn total_loss(
    scores: &ScoreSet,
    g: &PreferenceGraph,
    standing: Option<GtStanding>,
    kl_value: Option<f64>,
    t: u64,
    params: &ScheduleParams,
) -> Result<LossBreakdown, ObjectiveError> {
    params.validate()?;
    total_loss_with_weights(
        scores,
        g,
        standing,
        kl_value,
        lambda_gt(t, params),
        lambda_kl(t, params),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_from_labels, PreferenceLabeling};
    use proptest::prelude::*;

    fn graph_of(labels: &[f64]) -> PreferenceGraph {
        build_from_labels(&PreferenceLabeling::new(labels.to_vec())).unwrap()
    }

    fn scores_of(raw: &[f64]) -> ScoreSet {
        ScoreSet::center(raw.to_vec(), None).unwrap()
    }

    #[test]
    fn sequence_logprob_sums_tokens() {
        let t = TokenLogProbs::new(vec![-1.0, -2.0, -0.5]).unwrap();
        assert_eq!(sequence_logprob(&t), -3.5);
        let certain = TokenLogProbs::new(vec![0.0]).unwrap();
        assert_eq!(sequence_logprob(&certain), 0.0);
        let repeated = TokenLogProbs::new(vec![-0.1; 10]).unwrap();
        assert!((sequence_logprob(&repeated) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_lists_are_validated() {
        assert_eq!(TokenLogProbs::new(vec![]), Err(ObjectiveError::EmptyTokenList));
        assert_eq!(
            TokenLogProbs::new(vec![-1.0, 0.5]),
            Err(ObjectiveError::InvalidTokenLogProb { index: 1, value: 0.5 })
        );
    }

    #[test]
    fn log_ratio_score_cases() {
        assert!((log_ratio_score(-10.0, -12.0, 0.05).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(log_ratio_score(-4.0, -4.0, 7.0).unwrap(), 0.0);
        assert!((log_ratio_score(-3.0, -1.0, 0.5).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(log_ratio_score(0.0, 0.0, 0.0), Err(ObjectiveError::InvalidBeta(0.0)));
        assert_eq!(log_ratio_score(0.0, 0.0, -1.0), Err(ObjectiveError::InvalidBeta(-1.0)));
    }

    #[test]
    fn centering_basics() {
        let s = ScoreSet::center(vec![1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(s.centered(), &[-1.0, 0.0, 1.0]);

        let constant = ScoreSet::center(vec![4.2; 5], None).unwrap();
        assert!(constant.centered().iter().all(|&c| c == 0.0));

        // The ground truth is centered by the response mean only.
        let with_gt = ScoreSet::center(vec![0.0, 2.0], Some(4.0)).unwrap();
        assert_eq!(with_gt.centered(), &[-1.0, 1.0]);
        assert_eq!(with_gt.gt_centered(), Some(3.0));
    }

    #[test]
    fn two_node_graph_loss_is_the_pairwise_logistic_loss() {
        let g = graph_of(&[1.0, 0.0]);
        let s = scores_of(&[0.5, -0.5]);
        let term = graph_loss_naive(&s, &g).unwrap();
        assert!((term.loss - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert_eq!(term.contributing_nodes, 1);

        let even = scores_of(&[0.0, 0.0]);
        // Raw scores (0, 0) with two strict classes: the winner's local set
        // holds two equal scores.
        let term = graph_loss_naive(&even, &g).unwrap();
        assert!((term.loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn chain_of_three_matches_hand_computation() {
        let g = graph_of(&[2.0, 1.0, 0.0]);
        let s = scores_of(&[1.0, 0.0, -1.0]);
        let locals = local_losses(&s, &g).unwrap();
        assert!((locals[0].unwrap() - 0.407_605_964_444_380_35).abs() < 1e-12);
        assert!((locals[1].unwrap() - 0.313_261_687_518_222_86).abs() < 1e-12);
        assert_eq!(locals[2], None);
        let term = graph_loss_naive(&s, &g).unwrap();
        assert_eq!(term.contributing_nodes, 2);
        assert!((term.loss - 0.360_433_825_981_301_6).abs() < 1e-12);
        let layered = graph_loss_layered(&s, &g).unwrap();
        assert!((layered.loss - term.loss).abs() < 1e-12);
        assert_eq!(layered.contributing_nodes, 2);
    }

    #[test]
    fn single_class_loss_is_exactly_zero() {
        let g = graph_of(&[3.0, 3.0, 3.0]);
        let s = scores_of(&[0.4, -0.2, 1.7]);
        for term in [graph_loss_naive(&s, &g).unwrap(), graph_loss_layered(&s, &g).unwrap()] {
            assert_eq!(term.loss, 0.0);
            assert_eq!(term.contributing_nodes, 0);
        }
    }

    #[test]
    fn anchor_loss_cases() {
        // Ground truth (centered 1.0) dominating every response; dominated
        // scores carry 1.0, 0.0, -1.0 after centering.
        let s = ScoreSet::center(vec![1.0, 0.0, -1.0], Some(1.0)).unwrap();
        assert_eq!(s.gt_centered(), Some(1.0));
        let chain = graph_of(&[2.0, 1.0, 0.0]);
        // Tied with the top class: competes against {0.0, -1.0} only.
        let loss = anchor_loss(&s, &chain, GtStanding::TiedWith { class: 0 }).unwrap();
        assert!((loss - 0.407_605_964_444_380_35).abs() < 1e-12);

        // Tied with every response: nothing strictly worse, zero loss.
        let all_tied = graph_of(&[1.0, 1.0, 1.0]);
        let s2 = ScoreSet::center(vec![0.3, -0.3, 0.0], Some(0.9)).unwrap();
        assert_eq!(
            anchor_loss(&s2, &all_tied, GtStanding::TiedWith { class: 0 }).unwrap(),
            0.0
        );

        let two = graph_of(&[1.0, 0.0]);
        let s3 = ScoreSet::center(vec![0.4, -0.4], Some(-0.4)).unwrap();
        let loss = anchor_loss(&s3, &two, GtStanding::TiedWith { class: 1 }).unwrap();
        assert_eq!(loss, 0.0, "tied with the bottom class dominates nothing");

        // gt at 0 against one worse node at 0: log 2.
        let s4 = ScoreSet::center(vec![0.0, 0.0], Some(0.0)).unwrap();
        let loss = anchor_loss(&s4, &two, GtStanding::TiedWith { class: 0 }).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);

        // Below every class: dominates nothing.
        assert_eq!(
            anchor_loss(&s4, &two, GtStanding::Above { class: 2 }).unwrap(),
            0.0
        );

        // Missing gt score is an error.
        let s5 = scores_of(&[0.1, -0.1]);
        assert_eq!(
            anchor_loss(&s5, &two, GtStanding::Above { class: 0 }),
            Err(ObjectiveError::MissingGroundTruth)
        );
    }

    #[test]
    fn kl_regularizer_cases() {
        let p = vec![TokenLogProbs::new(vec![-1.0, -2.0]).unwrap()];
        let same = kl_regularizer(&p, &p).unwrap();
        assert_eq!(same, 0.0);

        let r = vec![TokenLogProbs::new(vec![-2.0, -2.0]).unwrap()];
        let p1 = vec![TokenLogProbs::new(vec![-1.0, -1.0]).unwrap()];
        assert!((kl_regularizer(&p1, &r).unwrap() - 1.0).abs() < 1e-12);

        // Per-response means 0.5 and -0.5 cancel.
        let policy = vec![
            TokenLogProbs::new(vec![-1.0]).unwrap(),
            TokenLogProbs::new(vec![-2.0]).unwrap(),
        ];
        let reference = vec![
            TokenLogProbs::new(vec![-1.5]).unwrap(),
            TokenLogProbs::new(vec![-1.5]).unwrap(),
        ];
        assert!(kl_regularizer(&policy, &reference).unwrap().abs() < 1e-15);

        let short = vec![TokenLogProbs::new(vec![-1.0]).unwrap()];
        assert_eq!(
            kl_regularizer(&p, &short),
            Err(ObjectiveError::TokenCountMismatch { response: 0, policy: 2, reference: 1 })
        );
    }

    #[test]
    fn lambda_gt_is_linear_between_defaults() {
        let p = ScheduleParams::default();
        assert_eq!(lambda_gt(0, &p), 2.5);
        assert_eq!(lambda_gt(p.total_steps, &p), 1.0);
        assert!((lambda_gt(p.total_steps / 2, &p) - 1.75).abs() < 1e-12);
        // Clamped beyond the end.
        assert_eq!(lambda_gt(p.total_steps + 50, &p), 1.0);
    }

    #[test]
    fn lambda_kl_ramps_and_decays() {
        let p = ScheduleParams::default();
        assert_eq!(lambda_kl(0, &p), 0.0);
        let warmup_end = (p.kl_warmup_frac * p.total_steps as f64) as u64;
        assert!((lambda_kl(warmup_end, &p) - p.kl_peak).abs() < 1e-12);
        assert_eq!(lambda_kl(p.total_steps, &p), 0.0);
        assert_eq!(lambda_kl(p.total_steps + 3, &p), 0.0);
        // Strictly inside the decay the weight is positive and below peak.
        let mid = (p.total_steps + warmup_end) / 2;
        let v = lambda_kl(mid, &p);
        assert!(v > 0.0 && v < p.kl_peak);
    }

    #[test]
    fn schedule_validation() {
        let mut p = ScheduleParams::default();
        p.gt_final = 3.0;
        assert!(matches!(p.validate(), Err(ObjectiveError::InvalidGtSchedule { .. })));
        let mut p = ScheduleParams::default();
        p.kl_warmup_frac = 0.0;
        assert!(matches!(p.validate(), Err(ObjectiveError::InvalidKlWarmup(_))));
        let mut p = ScheduleParams::default();
        p.total_steps = 0;
        assert!(matches!(p.validate(), Err(ObjectiveError::ZeroTotalSteps)));
        assert!(ScheduleParams::default().validate().is_ok());
    }

    #[test]
    fn total_loss_composes_terms() {
        let g = graph_of(&[2.0, 1.0, 0.0]);
        let s = scores_of(&[1.0, 0.0, -1.0]);
        // Degenerate weights reduce to the graph term.
        let b = total_loss_with_weights(&s, &g, None, None, 0.7, 0.3).unwrap();
        assert!((b.total - 0.360_433_825_981_301_6).abs() < 1e-12);
        assert_eq!(b.anchor_loss, None);
        assert_eq!(b.kl_loss, None);

        // Single-class graph with a strictly better ground truth: the total
        // is carried by the anchor and KL terms alone.
        let tied = graph_of(&[1.0, 1.0]);
        let s2 = ScoreSet::center(vec![0.2, -0.2], Some(0.8)).unwrap();
        let b2 = total_loss_with_weights(
            &s2,
            &tied,
            Some(GtStanding::Above { class: 0 }),
            Some(-0.25),
            2.0,
            0.1,
        )
        .unwrap();
        assert_eq!(b2.graph_loss, 0.0);
        let anchor = b2.anchor_loss.unwrap();
        assert!(anchor > 0.0);
        assert!((b2.total - (2.0 * anchor + 0.1 * -0.25)).abs() < 1e-12);

        // Schedule-driven weights at t = 0: no KL, full anchor weight.
        let b3 = total_loss(&s2, &tied, None, Some(0.5), 0, &ScheduleParams::default()).unwrap();
        assert_eq!(b3.lambda_gt, 2.5);
        assert_eq!(b3.lambda_kl, 0.0);
        assert_eq!(b3.total, 0.0);
    }

    proptest! {
        #[test]
        fn centered_scores_sum_to_zero_and_preserve_gaps(
            raw in proptest::collection::vec(-1e3f64..1e3, 1..40),
        ) {
            let s = ScoreSet::center(raw.clone(), None).unwrap();
            let sum: f64 = s.centered().iter().sum();
            prop_assert!(sum.abs() < 1e-9);
            for i in 0..raw.len() {
                for j in 0..raw.len() {
                    let raw_gap = raw[i] - raw[j];
                    let centered_gap = s.centered()[i] - s.centered()[j];
                    prop_assert!((raw_gap - centered_gap).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn graph_loss_is_shift_invariant(
            raw in proptest::collection::vec(-5.0f64..5.0, 2..12),
            labels in proptest::collection::vec(0i32..4, 2..12),
            shift in -100.0f64..100.0,
        ) {
            let k = raw.len().min(labels.len());
            let raw = &raw[..k];
            let labels: Vec<f64> = labels[..k].iter().map(|&l| l as f64).collect();
            let g = build_from_labels(&PreferenceLabeling::new(labels)).unwrap();
            let base = ScoreSet::center(raw.to_vec(), Some(raw[0] + 1.0)).unwrap();
            let shifted_raw: Vec<f64> = raw.iter().map(|&s| s + shift).collect();
            let shifted = ScoreSet::center(shifted_raw, Some(raw[0] + 1.0 + shift)).unwrap();

            let a = graph_loss_layered(&base, &g).unwrap();
            let b = graph_loss_layered(&shifted, &g).unwrap();
            prop_assert!((a.loss - b.loss).abs() < 1e-9);
            prop_assert_eq!(a.contributing_nodes, b.contributing_nodes);

            let standing = crate::graph::gt_standing(
                &PreferenceLabeling::new(vec![0.0; k]),
                &build_from_labels(&PreferenceLabeling::new(vec![0.0; k])).unwrap(),
                1.0,
            ).unwrap();
            let anchor_a = anchor_loss(
                &base,
                &build_from_labels(&PreferenceLabeling::new(vec![0.0; k])).unwrap(),
                standing,
            ).unwrap();
            let anchor_b = anchor_loss(
                &shifted,
                &build_from_labels(&PreferenceLabeling::new(vec![0.0; k])).unwrap(),
                standing,
            ).unwrap();
            prop_assert!((anchor_a - anchor_b).abs() < 1e-9);
        }

        #[test]
        fn within_class_score_permutations_do_not_change_the_loss(
            raw in proptest::collection::vec(-4.0f64..4.0, 4..10),
            swap in proptest::sample::select(vec![(0usize, 1usize), (1, 2), (0, 2)]),
        ) {
            // Three-member top class, rest in a second class.
            let k = raw.len();
            let mut labels = vec![0.0; k];
            labels[0] = 1.0;
            labels[1] = 1.0;
            labels[2] = 1.0;
            let g = build_from_labels(&PreferenceLabeling::new(labels)).unwrap();
            let base = graph_loss_layered(&ScoreSet::center(raw.clone(), None).unwrap(), &g)
                .unwrap();
            let mut permuted = raw.clone();
            permuted.swap(swap.0, swap.1);
            let perm = graph_loss_layered(&ScoreSet::center(permuted, None).unwrap(), &g)
                .unwrap();
            prop_assert!((base.loss - perm.loss).abs() < 1e-9);
        }

        #[test]
        fn layered_equals_naive_on_random_layered_graphs(
            raw in proptest::collection::vec(-6.0f64..6.0, 1..64),
            label_seed in proptest::collection::vec(0i32..8, 1..64),
        ) {
            let k = raw.len().min(label_seed.len());
            let labels: Vec<f64> = label_seed[..k].iter().map(|&l| l as f64).collect();
            let g = build_from_labels(&PreferenceLabeling::new(labels)).unwrap();
            let s = ScoreSet::center(raw[..k].to_vec(), None).unwrap();
            let naive = graph_loss_naive(&s, &g).unwrap();
            let layered = graph_loss_layered(&s, &g).unwrap();
            prop_assert!((naive.loss - layered.loss).abs() < 1e-9);
            prop_assert_eq!(naive.contributing_nodes, layered.contributing_nodes);
        }

        #[test]
        fn local_losses_are_nonnegative(
            raw in proptest::collection::vec(-8.0f64..8.0, 2..16),
            labels in proptest::collection::vec(0i32..5, 2..16),
        ) {
            let k = raw.len().min(labels.len());
            let labels: Vec<f64> = labels[..k].iter().map(|&l| l as f64).collect();
            let g = build_from_labels(&PreferenceLabeling::new(labels)).unwrap();
            let s = ScoreSet::center(raw[..k].to_vec(), None).unwrap();
            for l in local_losses(&s, &g).unwrap().into_iter().flatten() {
                prop_assert!(l >= 0.0);
            }
            prop_assert!(graph_loss_layered(&s, &g).unwrap().loss >= 0.0);
        }

        #[test]
        fn raising_a_contributing_score_strictly_lowers_its_local_loss(
            raw in proptest::collection::vec(-3.0f64..3.0, 3..10),
            bump in 0.01f64..2.0,
        ) {
            // Strict chain: every node except the last contributes.
            let k = raw.len();
            let labels: Vec<f64> = (0..k).rev().map(|l| l as f64).collect();
            let g = build_from_labels(&PreferenceLabeling::new(labels)).unwrap();
            let before = local_losses(&ScoreSet::center(raw.clone(), None).unwrap(), &g).unwrap();
            let mut bumped = raw.clone();
            bumped[0] += bump;
            let after = local_losses(&ScoreSet::center(bumped, None).unwrap(), &g).unwrap();
            prop_assert!(after[0].unwrap() < before[0].unwrap());
        }

        #[test]
        fn lambda_gt_interpolates_linearly(t in 0u64..=1000) {
            let p = ScheduleParams::default();
            let expected = 2.5 + (1.0 - 2.5) * t as f64 / 1000.0;
            prop_assert!((lambda_gt(t, &p) - expected).abs() < 1e-12);
        }
    }
}
