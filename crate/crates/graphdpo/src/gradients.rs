//! Analytic gradients of the objective terms, a finite-difference
//! verifier, and per-node influence diagnostics.
//!
//! Gradients are derived by hand rather than through autodiff so the crate
//! stands alone; [`finite_diff_check`] is the safety net that keeps the
//! derivations honest. Each local term is a multinomial logit, so its
//! centered-space gradient is a softmax minus an indicator: the chosen
//! node `i` receives `p_i(i) - 1` and each dominated node `j` receives
//! `p_i(j)`, where `p_i` is the softmax over `{i}` plus `i`'s dominated
//! set. Those per-term vectors each sum to zero.
//!
//! Raw-space gradients — what an optimizer over scores actually needs —
//! follow by the centering Jacobian `d c_i / d s_j = delta_ij - 1/K`,
//! which subtracts the mean centered gradient. Since every term's
//! centered gradient already sums to zero, the subtraction is a numerical
//! no-op for the graph and anchor terms, but it is applied unconditionally
//! so the code matches the calculus rather than relying on that identity.

use crate::graph::{GtStanding, PreferenceGraph};
use crate::objective::{gt_dominated_members, ObjectiveError, ScheduleParams, ScoreSet};

/// Raw-score-space partial derivatives of a loss: one entry per response,
/// plus the ground-truth component when the loss has one.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub per_response: Vec<f64>,
    pub gt: Option<f64>,
}

impl GradientVector {
    fn zeros(k: usize, with_gt: bool) -> Self {
        Self { per_response: vec![0.0; k], gt: with_gt.then_some(0.0) }
    }

    /// `self + weight * other`, merging ground-truth components.
    fn add_scaled(&mut self, other: &GradientVector, weight: f64) {
        for (a, b) in self.per_response.iter_mut().zip(&other.per_response) {
            *a += weight * b;
        }
        if let Some(g) = other.gt {
            *self.gt.get_or_insert(0.0) += weight * g;
        }
    }
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

/// Centered-space softmax over `cs[i]` and `cs[dom]`, returned as
/// (p_of_i, p_of_each_dom). Max-subtracted.
fn local_softmax(cs: &[f64], i: usize, dom: &[usize]) -> (f64, Vec<f64>) {
    let mut m = cs[i];
    for &j in dom {
        m = m.max(cs[j]);
    }
    let ei = (cs[i] - m).exp();
    let ej: Vec<f64> = dom.iter().map(|&j| (cs[j] - m).exp()).collect();
    let denom = ei + ej.iter().sum::<f64>();
    (ei / denom, ej.iter().map(|e| e / denom).collect())
}

/// Applies the centering Jacobian: raw gradient = centered gradient minus
/// its mean (spread over the K response coordinates). The ground-truth
/// coordinate, when present, maps through unchanged but contributes to the
/// mean because the response mean is what centers it.
fn to_raw_space(mut centered: Vec<f64>, gt: Option<f64>) -> GradientVector {
    let k = centered.len() as f64;
    let total: f64 = centered.iter().sum::<f64>() + gt.unwrap_or(0.0);
    let mean = total / k;
    for c in &mut centered {
        *c -= mean;
    }
    GradientVector { per_response: centered, gt }
}

/// Gradient of the graph loss with respect to raw scores.
///
/// Aggregates the per-term softmax-minus-indicator gradients over all
/// contributing nodes, divides by their count (the loss is their mean),
/// and maps through the centering Jacobian. A single-class graph yields an
/// exactly zero vector.
pub fn grad_graph_loss(
    scores: &ScoreSet,
    g: &PreferenceGraph,
) -> Result<GradientVector, ObjectiveError> {
    check_scores_match(scores, g)?;
    let cs = scores.centered();
    let k = cs.len();
    let mut centered = vec![0.0; k];
    let mut contributing = 0usize;
    for i in 0..k {
        let dom = g.dominated_set(i).expect("index in range");
        if dom.is_empty() {
            continue;
        }
        contributing += 1;
        let (pi, pj) = local_softmax(cs, i, &dom);
        centered[i] += pi - 1.0;
        for (&j, p) in dom.iter().zip(pj) {
            centered[j] += p;
        }
    }
    if contributing == 0 {
        return Ok(GradientVector::zeros(k, false));
    }
    let scale = 1.0 / contributing as f64;
    for c in &mut centered {
        *c *= scale;
    }
    Ok(to_raw_space(centered, None))
}

/// Gradient of the anchoring loss with respect to raw scores, including
/// the ground-truth coordinate.
///
/// The anchor term is a single multinomial logit over the ground truth and
/// everything it strictly dominates, so its centered gradient is
/// `p(gt) - 1` on the ground truth and `p(j)` on each dominated response.
/// When nothing is dominated the loss is constant and the gradient zero.
pub fn grad_anchor_loss(
    scores: &ScoreSet,
    g: &PreferenceGraph,
    standing: GtStanding,
) -> Result<GradientVector, ObjectiveError> {
    check_scores_match(scores, g)?;
    let gt = scores.gt_centered().ok_or(ObjectiveError::MissingGroundTruth)?;
    let worse = gt_dominated_members(g, standing)?;
    let k = scores.len();
    if worse.is_empty() {
        return Ok(GradientVector::zeros(k, true));
    }
    let cs = scores.centered();
    let mut m = gt;
    for &j in &worse {
        m = m.max(cs[j]);
    }
    let egt = (gt - m).exp();
    let ej: Vec<f64> = worse.iter().map(|&j| (cs[j] - m).exp()).collect();
    let denom = egt + ej.iter().sum::<f64>();

    let mut centered = vec![0.0; k];
    for (&j, e) in worse.iter().zip(&ej) {
        centered[j] += e / denom;
    }
    let gt_grad = egt / denom - 1.0;
    Ok(to_raw_space(centered, Some(gt_grad)))
}

/// Gradient of the weighted combination `graph + lambda_gt * anchor` with
/// respect to raw scores.
///
/// The KL regularizer does not depend on scores at all: its gradient lives
/// in token space, where each policy token log-probability of response `i`
/// receives the constant `lambda_kl / (K * T_i)`. Callers that own token
/// data apply that term themselves.
pub fn grad_total_with_weights(
    scores: &ScoreSet,
    g: &PreferenceGraph,
    standing: Option<GtStanding>,
    lambda_gt: f64,
) -> Result<GradientVector, ObjectiveError> {
    let mut grad = grad_graph_loss(scores, g)?;
    if let Some(standing) = standing {
        let anchor = grad_anchor_loss(scores, g, standing)?;
        grad.add_scaled(&anchor, lambda_gt);
    }
    Ok(grad)
}

/// As [`grad_total_with_weights`] with the anchor weight drawn from the
/// schedule at step `t`.
pub fn grad_total(
    scores: &ScoreSet,
    g: &PreferenceGraph,
    standing: Option<GtStanding>,
    t: u64,
    params: &ScheduleParams,
) -> Result<GradientVector, ObjectiveError> {
    params.validate()?;
    grad_total_with_weights(scores, g, standing, crate::objective::lambda_gt(t, params))
}

/// Result of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
    pub per_coordinate: Vec<f64>,
}

/// Central-difference check of an analytic gradient.
///
/// For each coordinate the numeric slope is `(f(x + h e_i) - f(x - h e_i))
/// / 2h` and the relative error is `|analytic - numeric| / max(1e-12,
/// |numeric|)`. Central differences are exact for affine functions, so a
/// healthy implementation lands many orders of magnitude below common
/// thresholds at `h = 1e-6`.
pub fn finite_diff_check(
    f: impl Fn(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<FiniteDiffReport, ObjectiveError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(ObjectiveError::InvalidStepSize(h));
    }
    if point.len() != analytic.len() {
        return Err(ObjectiveError::ScoreCountMismatch {
            count: analytic.len(),
            nodes: point.len(),
        });
    }
    let mut per_coordinate = Vec::with_capacity(point.len());
    let mut max_rel_error = 0.0;
    let mut worst_coordinate = 0;
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + h;
        let up = f(&probe);
        probe[i] = point[i] - h;
        let down = f(&probe);
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / numeric.abs().max(1e-12);
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_coordinate = i;
        }
        per_coordinate.push(rel);
    }
    Ok(FiniteDiffReport { max_rel_error, worst_coordinate, per_coordinate })
}

/// Total gradient pressure on each node from the terms of its ancestors:
/// for node `j`, the sum of `p_i(j)` over every `i` that dominates `j`.
///
/// This is the diagnostic behind two structural facts: influence grows
/// with ancestor count (roughly `1/|set|` per ancestor at equal scores),
/// and a node's influence decays to zero as its score drops — noisy
/// low-quality responses fade out instead of dominating updates.
pub fn node_influence(
    scores: &ScoreSet,
    g: &PreferenceGraph,
) -> Result<Vec<f64>, ObjectiveError> {
    check_scores_match(scores, g)?;
    let cs = scores.centered();
    let k = cs.len();
    let mut influence = vec![0.0; k];
    for i in 0..k {
        let dom = g.dominated_set(i).expect("index in range");
        if dom.is_empty() {
            continue;
        }
        let (_, pj) = local_softmax(cs, i, &dom);
        for (&j, p) in dom.iter().zip(pj) {
            influence[j] += p;
        }
    }
    Ok(influence)
}
