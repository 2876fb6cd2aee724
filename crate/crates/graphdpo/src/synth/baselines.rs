//! Competing ranking objectives, each with loss and analytic gradient.
//!
//! Three surrogates share the trainer with the graph objective so runs
//! differ only in the loss function:
//!
//! - pairwise: mean logistic loss over every dominance edge;
//! - list-MLE: the negative log-likelihood of one total order, with ties
//!   broken by ascending response index — the arbitrariness the graph
//!   objective exists to avoid, kept here verbatim as a foil;
//! - multi-negative: every positive against the pooled negatives, defined
//!   only for two-class comparisons.
//!
//! All losses are shift-invariant in the centered scores, so their
//! centered-space gradients sum to zero and pass through the centering
//! Jacobian unchanged.

use crate::graph::build_from_labels;
use crate::graph::PreferenceLabeling;
use crate::objective::ScoreSet;

use super::SynthError;

/// A baseline's value and its gradient with respect to raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTerms {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check_lengths(scores: &ScoreSet, labels: &[f64]) -> Result<(), SynthError> {
    if scores.len() != labels.len() {
        return Err(SynthError::ScoreLabelMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    Ok(())
}

/// Mean pairwise logistic loss over all dominance edges implied by exact
/// label ties. An edgeless comparison (single class) contributes nothing.
pub fn baseline_dpo_pairwise(
    scores: &ScoreSet,
    labels: &[f64],
) -> Result<BaselineTerms, SynthError> {
    check_lengths(scores, labels)?;
    let g = build_from_labels(&PreferenceLabeling::new(labels.to_vec()))?;
    let cs = scores.centered();
    let k = cs.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    let mut edges = 0usize;
    for (i, j) in g.edges() {
        let margin = cs[j] - cs[i];
        // softplus(margin) = -log sigmoid(-margin), stable on both sides
        loss += if margin > 0.0 {
            margin + (-margin).exp().ln_1p()
        } else {
            margin.exp().ln_1p()
        };
        let sigma = 1.0 / (1.0 + (-margin).exp());
        grad[j] += sigma;
        grad[i] -= sigma;
        edges += 1;
    }
    if edges == 0 {
        return Ok(BaselineTerms { loss: 0.0, grad });
    }
    let scale = 1.0 / edges as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok(BaselineTerms { loss: loss * scale, grad })
}

/// Negative log-likelihood of the single total order obtained by sorting
/// labels descending with ties broken by ascending response index.
///
/// Tied responses therefore receive an arbitrary strict order — two
/// comparisons differing only in which tied response has the lower index
/// get different losses.
pub fn baseline_pro_listmle(
    scores: &ScoreSet,
    labels: &[f64],
) -> Result<BaselineTerms, SynthError> {
    check_lengths(scores, labels)?;
    let cs = scores.centered();
    let k = cs.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| labels[b].total_cmp(&labels[a]).then(a.cmp(&b)));

    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    for stage in 0..k.saturating_sub(1) {
        let remaining = &order[stage..];
        let max = remaining.iter().map(|&i| cs[i]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| (cs[i] - max).exp()).collect();
        let denom: f64 = weights.iter().sum();
        loss += max + denom.ln() - cs[remaining[0]];
        grad[remaining[0]] -= 1.0;
        for (&i, w) in remaining.iter().zip(&weights) {
            grad[i] += w / denom;
        }
    }
    Ok(BaselineTerms { loss, grad })
}

/// Mean, over the better class, of each positive's logistic loss against
/// the pooled worse class. Requires exactly two classes.
pub fn baseline_multi_negative(
    scores: &ScoreSet,
    labels: &[f64],
) -> Result<BaselineTerms, SynthError> {
    check_lengths(scores, labels)?;
    let mut distinct: Vec<f64> = labels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(SynthError::NotTwoClasses(distinct.len()));
    }
    let top = distinct[1];
    let cs = scores.centered();
    let k = cs.len();
    let positives: Vec<usize> = (0..k).filter(|&i| labels[i] == top).collect();
    let negatives: Vec<usize> = (0..k).filter(|&i| labels[i] != top).collect();

    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    for &i in &positives {
        let mut max = cs[i];
        for &j in &negatives {
            max = max.max(cs[j]);
        }
        let wi = (cs[i] - max).exp();
        let wneg: Vec<f64> = negatives.iter().map(|&j| (cs[j] - max).exp()).collect();
        let denom = wi + wneg.iter().sum::<f64>();
        loss += max + denom.ln() - cs[i];
        grad[i] += wi / denom - 1.0;
        for (&j, w) in negatives.iter().zip(&wneg) {
            grad[j] += w / denom;
        }
    }
    let scale = 1.0 / positives.len() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok(BaselineTerms { loss: loss * scale, grad })
}
