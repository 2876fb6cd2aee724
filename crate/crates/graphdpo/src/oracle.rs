//! Brute-force reference implementations used to cross-check the
//! production paths in tests.
//!
//! Everything here is written from scratch against the mathematical
//! definitions: no helper, loss kernel, or log-sum-exp is shared with the
//! `objective` or `gradients` modules, so agreement between the two sides
//! is evidence rather than tautology. Oracles favor obviousness over speed
//! and may be quadratic or worse.

use thiserror::Error;

use crate::graph::PreferenceGraph;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum OracleError {
    #[error("{count} scores supplied for a graph over {nodes} nodes")]
    ScoreCountMismatch { count: usize, nodes: usize },
    #[error("order of length {order} does not match {count} scores")]
    OrderLengthMismatch { order: usize, count: usize },
    #[error("order is not a permutation: index {index} appears {times} times")]
    NotAPermutation { index: usize, times: usize },
}

/// Mean-subtracts scores. The oracle keeps its own copy of this one-liner
/// so its arithmetic path stays fully independent.
fn centered(raw: &[f64]) -> Vec<f64> {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.iter().map(|&s| s - mean).collect()
}

/// Oracle-local max-subtracted log-sum-exp.
fn lse(values: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &v in values {
        if v > m {
            m = v;
        }
    }
    let mut sum = 0.0;
    for &v in values {
        sum += (v - m).exp();
    }
    m + sum.ln()
}

/// Stable `log(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Graph loss by the most literal reading: for every node, scan the full
/// adjacency row to build its dominated set, evaluate the multinomial-logit
/// local loss, and average over nodes with non-empty sets (zero when there
/// are none). Raw scores are centered internally.
pub fn naive_dominated_loss(raw: &[f64], g: &PreferenceGraph) -> Result<f64, OracleError> {
    if raw.len() != g.num_nodes() {
        return Err(OracleError::ScoreCountMismatch { count: raw.len(), nodes: g.num_nodes() });
    }
    let cs = centered(raw);
    let k = cs.len();
    let mut total = 0.0;
    let mut contributing = 0usize;
    for i in 0..k {
        let mut pool = vec![cs[i]];
        for j in 0..k {
            if g.edge(i, j) {
                pool.push(cs[j]);
            }
        }
        if pool.len() == 1 {
            continue;
        }
        total += lse(&pool) - cs[i];
        contributing += 1;
    }
    if contributing == 0 {
        Ok(0.0)
    } else {
        Ok(total / contributing as f64)
    }
}

/// A strict total order over `K` nodes, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationOrder(Vec<usize>);

impl PermutationOrder {
    pub fn new(order: Vec<usize>) -> Result<Self, OracleError> {
        let mut seen = vec![0usize; order.len()];
        for &i in &order {
            if i >= order.len() {
                return Err(OracleError::NotAPermutation { index: i, times: 0 });
            }
            seen[i] += 1;
        }
        for (index, &times) in seen.iter().enumerate() {
            if times != 1 {
                return Err(OracleError::NotAPermutation { index, times });
            }
        }
        Ok(Self(order))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Negative log-likelihood of picking the given order by sequential
/// elimination: at each stage the chosen node competes against the whole
/// remaining suffix under a softmax of centered scores.
pub fn pl_permutation_nll(raw: &[f64], order: &PermutationOrder) -> Result<f64, OracleError> {
    if raw.len() != order.0.len() {
        return Err(OracleError::OrderLengthMismatch { order: order.0.len(), count: raw.len() });
    }
    let cs = centered(raw);
    let mut nll = 0.0;
    for stage in 0..order.0.len() {
        let suffix: Vec<f64> = order.0[stage..].iter().map(|&i| cs[i]).collect();
        nll += lse(&suffix) - cs[order.0[stage]];
    }
    Ok(nll)
}

/// Mean logistic loss over every edge of the graph, i.e. the decomposition
/// of the ranking into independent pairwise comparisons. Returns 0 (with a
/// warning) when the graph has no edges, since there is nothing to compare.
pub fn pairwise_dpo_loss(raw: &[f64], g: &PreferenceGraph) -> Result<f64, OracleError> {
    if raw.len() != g.num_nodes() {
        return Err(OracleError::ScoreCountMismatch { count: raw.len(), nodes: g.num_nodes() });
    }
    let cs = centered(raw);
    let k = cs.len();
    let mut total = 0.0;
    let mut edges = 0usize;
    for i in 0..k {
        for j in 0..k {
            if g.edge(i, j) {
                total += softplus(cs[j] - cs[i]);
                edges += 1;
            }
        }
    }
    if edges == 0 {
        log::warn!("pairwise loss over an edgeless graph: nothing to compare, returning 0");
        return Ok(0.0);
    }
    Ok(total / edges as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_from_labels, PreferenceLabeling};
    use crate::objective::{graph_loss_layered, graph_loss_naive, ScoreSet};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph_of(labels: &[f64]) -> crate::graph::PreferenceGraph {
        build_from_labels(&PreferenceLabeling::new(labels.to_vec())).unwrap()
    }

    #[test]
    fn strict_pair_is_the_logistic_loss() {
        let g = graph_of(&[1.0, 0.0]);
        let raw = [0.5, -0.5];
        let expect = 0.313_261_687_518_222_8; // -log sigmoid(1)
        assert!((naive_dominated_loss(&raw, &g).unwrap() - expect).abs() < 1e-12);
        assert!((pairwise_dpo_loss(&raw, &g).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn single_class_yields_zero() {
        let g = graph_of(&[2.0, 2.0, 2.0]);
        assert_eq!(naive_dominated_loss(&[0.3, -0.1, 0.9], &g).unwrap(), 0.0);
        assert_eq!(pairwise_dpo_loss(&[0.3, -0.1, 0.9], &g).unwrap(), 0.0);
    }

    #[test]
    fn chain_permutation_nll_hand_check() {
        let order = PermutationOrder::new(vec![0, 1, 2]).unwrap();
        let nll = pl_permutation_nll(&[1.0, 0.0, -1.0], &order).unwrap();
        assert!((nll - 0.720_867_651_962_603_2).abs() < 1e-12);

        let equal = pl_permutation_nll(&[0.0, 0.0, 0.0], &order).unwrap();
        assert!((equal - 6.0f64.ln()).abs() < 1e-12, "uniform stages: log 3 + log 2");

        let single = PermutationOrder::new(vec![0]).unwrap();
        assert_eq!(pl_permutation_nll(&[4.2], &single).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_chain_hand_check() {
        let g = graph_of(&[2.0, 1.0, 0.0]);
        let loss = pairwise_dpo_loss(&[1.0, 0.0, -1.0], &g).unwrap();
        // Mean of -log sigmoid over gaps 1, 2, 1.
        assert!((loss - 0.251_150_462_026_472_8).abs() < 1e-9);

        let tied = pairwise_dpo_loss(&[0.0, 0.0, 0.0], &g).unwrap();
        assert!((tied - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn permutations_are_validated() {
        assert!(matches!(
            PermutationOrder::new(vec![0, 0, 1]),
            Err(OracleError::NotAPermutation { .. })
        ));
        assert!(matches!(
            PermutationOrder::new(vec![0, 3]),
            Err(OracleError::NotAPermutation { .. })
        ));
    }

    #[test]
    fn chain_sum_of_local_losses_is_the_permutation_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let k = rng.gen_range(1..=12);
            let labels: Vec<f64> = (0..k).rev().map(|l| l as f64).collect();
            let g = graph_of(&labels);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect();

            let term =
                graph_loss_naive(&ScoreSet::center(raw.clone(), None).unwrap(), &g).unwrap();
            let sum = term.loss * term.contributing_nodes as f64;

            let order = PermutationOrder::new((0..k).collect()).unwrap();
            let nll = pl_permutation_nll(&raw, &order).unwrap();
            assert!(
                (sum - nll).abs() < 1e-9,
                "chain K={k}: local-loss sum {sum} vs permutation nll {nll}"
            );
        }
    }

    #[test]
    fn tie_broken_permutations_disagree_with_the_graph_loss() {
        // Two tied winners over one loser: the graph treats the winners
        // symmetrically, while any strict order must pick one first and
        // charge a spurious winner-vs-winner factor.
        let g = graph_of(&[1.0, 1.0, 0.0]);
        let raw = [0.6, 0.1, -0.7];
        let term =
            graph_loss_naive(&ScoreSet::center(raw.to_vec(), None).unwrap(), &g).unwrap();
        let graph_sum = term.loss * term.contributing_nodes as f64;
        for order in [vec![0, 1, 2], vec![1, 0, 2]] {
            let nll =
                pl_permutation_nll(&raw, &PermutationOrder::new(order.clone()).unwrap()).unwrap();
            assert!(
                (graph_sum - nll).abs() > 1e-3,
                "tie-breaking {order:?} should not reproduce the graph loss"
            );
        }
    }

    proptest! {
        #[test]
        fn oracle_agrees_with_both_production_losses(
            raw in proptest::collection::vec(-6.0f64..6.0, 1..32),
            labels in proptest::collection::vec(0i32..6, 1..32),
        ) {
            let k = raw.len().min(labels.len());
            let raw = &raw[..k];
            let labels: Vec<f64> = labels[..k].iter().map(|&l| l as f64).collect();
            let g = graph_of(&labels);
            let reference = naive_dominated_loss(raw, &g).unwrap();
            let s = ScoreSet::center(raw.to_vec(), None).unwrap();
            prop_assert!((graph_loss_naive(&s, &g).unwrap().loss - reference).abs() < 1e-9);
            prop_assert!((graph_loss_layered(&s, &g).unwrap().loss - reference).abs() < 1e-9);
        }
    }
}
