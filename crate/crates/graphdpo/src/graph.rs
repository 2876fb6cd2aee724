//! Preference DAGs over one prompt's responses.
//!
//! A [`PreferenceGraph`] partitions the `K` responses into ordered
//! equivalence classes (class 0 is the most preferred) and materializes the
//! implied adjacency: an edge `i -> j` exists exactly when `i`'s class is
//! strictly better than `j`'s. Ties never produce edges, so the relation is
//! irreflexive, antisymmetric, and transitively closed by construction.
//!
//! Graphs come from two sources. [`build_from_labels`] clusters per-response
//! ordinal labels (higher = better) into classes, optionally merging labels
//! that differ by at most a tolerance. [`build_from_edges`] accepts raw
//! dominance pairs, takes their transitive closure, and recovers a layered
//! form when one exists — rejecting inputs whose order cannot be expressed
//! as ranked classes.
//!
//! All node indices in this module are 0-based.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from graph construction and queries.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    /// A labeling with no entries cannot describe any response set.
    #[error("label list is empty; need at least one response")]
    EmptyLabels,
    /// Tie tolerances must be finite and nonnegative.
    #[error("tie tolerance must be finite and >= 0, got {0}")]
    InvalidTolerance(f64),
    /// Labels must be finite so they can be ordered.
    #[error("label for response {index} is not finite ({value})")]
    NonFiniteLabel { index: usize, value: f64 },
    /// The ground-truth label must be finite to place it among the classes.
    #[error("ground-truth label is not finite ({0})")]
    NonFiniteGtLabel(f64),
    /// A node index fell outside `0..num_nodes`.
    #[error("node index {index} out of range for a graph over {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },
    /// Edge lists may not contain `i -> i`.
    #[error("edge {node} -> {node} is a self-loop; preferences are irreflexive")]
    SelfLoop { node: usize },
    /// A graph must cover at least one node.
    #[error("node count must be at least 1")]
    EmptyGraph,
    /// The input edges contain a directed cycle; the offending node sequence
    /// is reported first-to-first.
    #[error("preference edges contain a cycle: {}", format_cycle(cycle))]
    CyclicPreference { cycle: Vec<usize> },
    /// The transitive closure of the input edges is not a layered order:
    /// after placing nodes by longest-path depth, `better` sits in a
    /// strictly higher layer than `worse` without actually dominating it.
    #[error(
        "edges do not form a layered order: node {better} would outrank node {worse} \
         but no chain of edges connects them; supply labels instead to express ties"
    )]
    NotLayerable { better: usize, worse: usize },
    /// A labeling was paired with a graph built over a different node count.
    #[error("labeling covers {labels} responses but the graph has {nodes} nodes")]
    LabelCountMismatch { labels: usize, nodes: usize },
}

fn format_cycle(cycle: &[usize]) -> String {
    cycle
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Ordinal preference labels for one prompt's responses.
///
/// Higher label = more preferred. Two responses whose labels differ by at
/// most `tie_tolerance` are considered tied; tolerance 0 (the default)
/// means exact equality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceLabeling {
    pub labels: Vec<f64>,
    pub tie_tolerance: f64,
}

impl PreferenceLabeling {
    /// Labels with exact-equality ties.
    pub fn new(labels: Vec<f64>) -> Self {
        Self { labels, tie_tolerance: 0.0 }
    }

    /// Labels with a nonnegative tie tolerance.
    pub fn with_tolerance(labels: Vec<f64>, tie_tolerance: f64) -> Self {
        Self { labels, tie_tolerance }
    }

    fn check(&self) -> Result<(), GraphError> {
        if self.labels.is_empty() {
            return Err(GraphError::EmptyLabels);
        }
        if !self.tie_tolerance.is_finite() || self.tie_tolerance < 0.0 {
            return Err(GraphError::InvalidTolerance(self.tie_tolerance));
        }
        for (index, &value) in self.labels.iter().enumerate() {
            if !value.is_finite() {
                return Err(GraphError::NonFiniteLabel { index, value });
            }
        }
        Ok(())
    }
}

/// Directed dominance pairs `(better, worse)` over nodes `0..K`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    pub edges: Vec<(usize, usize)>,
}

impl From<Vec<(usize, usize)>> for EdgeList {
    fn from(edges: Vec<(usize, usize)>) -> Self {
        Self { edges }
    }
}

/// A layered preference DAG: ordered equivalence classes plus the adjacency
/// they imply.
///
/// The adjacency is stored explicitly (row-major `K x K`) so that
/// [`PreferenceGraph::validate`] can detect hand-corrupted instances built
/// through [`PreferenceGraph::from_parts`]; graphs produced by the builder
/// functions always satisfy `A(i, j) = 1 iff class(i) < class(j)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceGraph {
    num_nodes: usize,
    /// Disjoint node sets, best class first; members sorted ascending.
    classes: Vec<Vec<usize>>,
    /// Class index per node.
    class_of: Vec<usize>,
    /// Row-major edge predicate: `adjacency[i * num_nodes + j]`.
    adjacency: Vec<bool>,
}

impl PreferenceGraph {
    /// Assembles a graph from raw parts without any consistency checks.
    ///
    /// `class_of` is derived from `classes` (last assignment wins on
    /// overlap; unassigned nodes get `usize::MAX`). This exists so tests and
    /// tooling can construct deliberately broken graphs and watch
    /// [`validate`](Self::validate) flag them; use [`build_from_labels`] or
    /// [`build_from_edges`] for anything real.
    pub fn from_parts(num_nodes: usize, classes: Vec<Vec<usize>>, adjacency: Vec<bool>) -> Self {
        let mut class_of = vec![usize::MAX; num_nodes];
        for (g, class) in classes.iter().enumerate() {
            for &i in class {
                if i < num_nodes {
                    class_of[i] = g;
                }
            }
        }
        Self { num_nodes, classes, class_of, adjacency }
    }

    /// Builds the graph implied by an ordered partition: adjacency follows
    /// the cross-class rule exactly.
    pub(crate) fn from_classes(num_nodes: usize, mut classes: Vec<Vec<usize>>) -> Self {
        for class in &mut classes {
            class.sort_unstable();
        }
        let mut class_of = vec![usize::MAX; num_nodes];
        for (g, class) in classes.iter().enumerate() {
            for &i in class {
                class_of[i] = g;
            }
        }
        let mut adjacency = vec![false; num_nodes * num_nodes];
        for i in 0..num_nodes {
            for j in 0..num_nodes {
                adjacency[i * num_nodes + j] = class_of[i] < class_of[j];
            }
        }
        Self { num_nodes, classes, class_of, adjacency }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    /// Ordered classes, best first; members sorted ascending.
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    /// Class index of each node, parallel to `0..num_nodes`.
    pub fn class_assignments(&self) -> &[usize] {
        &self.class_of
    }

    pub fn class_of(&self, i: usize) -> Result<usize, GraphError> {
        self.check_node(i)?;
        Ok(self.class_of[i])
    }

    /// The edge predicate `A(i, j)`.
    ///
    /// # Panics
    /// Panics if either index is out of range.
    pub fn edge(&self, i: usize, j: usize) -> bool {
        assert!(i < self.num_nodes && j < self.num_nodes, "edge index out of range");
        self.adjacency[i * self.num_nodes + j]
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&&e| e).count()
    }

    /// All edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.num_nodes;
        (0..k).flat_map(move |i| {
            (0..k).filter_map(move |j| self.adjacency[i * k + j].then_some((i, j)))
        })
    }

    /// The dominated neighborhood of `i`: every node in a strictly worse
    /// class, i.e. all `j` with `A(i, j) = 1`. Sorted ascending.
    pub fn dominated_set(&self, i: usize) -> Result<Vec<usize>, GraphError> {
        self.check_node(i)?;
        Ok((0..self.num_nodes)
            .filter(|&j| self.adjacency[i * self.num_nodes + j])
            .collect())
    }

    /// Checks every structural invariant and reports each violation found.
    ///
    /// Never fails; a clean graph yields an empty report. Adjacency checks
    /// are skipped when the class partition itself is broken, since the
    /// expected adjacency is undefined in that case.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let k = self.num_nodes;

        if self.classes.is_empty() {
            violations.push("graph has no equivalence classes".to_string());
        }
        let mut assignment_count = vec![0usize; k];
        for (g, class) in self.classes.iter().enumerate() {
            if class.is_empty() {
                violations.push(format!("class {g} is empty"));
            }
            for &i in class {
                if i >= k {
                    violations.push(format!("class {g} contains out-of-range node {i}"));
                } else {
                    assignment_count[i] += 1;
                }
            }
        }
        for (i, &count) in assignment_count.iter().enumerate() {
            match count {
                0 => violations.push(format!("node {i} belongs to no class")),
                1 => {}
                n => violations.push(format!("node {i} belongs to {n} classes")),
            }
        }
        let partition_ok = violations.is_empty();

        if self.class_of.len() != k {
            violations.push(format!(
                "class_of covers {} nodes but the graph has {k}",
                self.class_of.len()
            ));
        } else if partition_ok {
            for (g, class) in self.classes.iter().enumerate() {
                for &i in class {
                    if self.class_of[i] != g {
                        violations.push(format!(
                            "class_of[{i}] = {} but node {i} sits in class {g}",
                            self.class_of[i]
                        ));
                    }
                }
            }
        }

        if self.adjacency.len() != k * k {
            violations.push(format!(
                "adjacency holds {} entries, expected {}",
                self.adjacency.len(),
                k * k
            ));
        } else if partition_ok {
            for i in 0..k {
                for j in 0..k {
                    let actual = self.adjacency[i * k + j];
                    let expected = self.class_of[i] < self.class_of[j];
                    if actual == expected {
                        continue;
                    }
                    if actual {
                        if i == j {
                            violations.push(format!("self-loop edge at node {i}"));
                        } else if self.class_of[i] == self.class_of[j] {
                            violations.push(format!(
                                "edge {i} -> {j} connects two nodes of class {}",
                                self.class_of[i]
                            ));
                        } else {
                            violations.push(format!(
                                "edge {i} -> {j} points from class {} into the better class {}",
                                self.class_of[i], self.class_of[j]
                            ));
                        }
                    } else {
                        violations.push(format!(
                            "missing edge {i} -> {j} across classes {} -> {}",
                            self.class_of[i], self.class_of[j]
                        ));
                    }
                }
            }
        }

        ValidationReport { violations }
    }

    fn check_node(&self, i: usize) -> Result<(), GraphError> {
        if i >= self.num_nodes {
            Err(GraphError::NodeOutOfRange { index: i, num_nodes: self.num_nodes })
        } else {
            Ok(())
        }
    }
}

/// Outcome of [`PreferenceGraph::validate`]: the list of violated
/// invariants, empty when the graph is well formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            write!(f, "ok")
        } else {
            for (n, v) in self.violations.iter().enumerate() {
                if n > 0 {
                    writeln!(f)?;
                }
                write!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

/// Clusters labels into classes and derives the cross-class adjacency.
///
/// Classes are maximal groups of labels equal within `tie_tolerance`,
/// ordered by descending label. With a positive tolerance, grouping is
/// single-linkage over the descending-sorted labels: a response joins the
/// current class when the gap to the previously placed label is at most the
/// tolerance. This makes chained near-ties (`|a-b| <= tol`, `|b-c| <= tol`,
/// `|a-c| > tol`) merge into one class, deterministically.
pub fn build_from_labels(labeling: &PreferenceLabeling) -> Result<PreferenceGraph, GraphError> {
    labeling.check()?;
    let labels = &labeling.labels;
    let tol = labeling.tie_tolerance;

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| {
        labels[b]
            .partial_cmp(&labels[a])
            .expect("labels checked finite")
            .then(a.cmp(&b))
    });

    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut prev_label = f64::INFINITY;
    for &i in &order {
        if classes.is_empty() || prev_label - labels[i] > tol {
            classes.push(vec![i]);
        } else {
            classes.last_mut().expect("nonempty").push(i);
        }
        prev_label = labels[i];
    }

    Ok(PreferenceGraph::from_classes(labels.len(), classes))
}

/// Result of [`build_from_edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBuild {
    pub graph: PreferenceGraph,
    /// True when mutually incomparable nodes were merged into a shared
    /// class. Edge lists cannot express ties directly, so any multi-member
    /// class is a guess that "incomparable" means "tied"; callers who want
    /// explicit ties should build from labels instead.
    pub layering_approximate: bool,
}

/// Takes the transitive closure of raw dominance pairs and recovers the
/// layered class structure when one exists.
///
/// Nodes are placed by longest-path depth over the closure, which for any
/// layerable order reproduces its unique layering. The placement is then
/// checked pair by pair: every cross-layer pair must actually be connected
/// in the closure, otherwise the order has no layered form and the build is
/// rejected with [`GraphError::NotLayerable`]. Accepted builds flag
/// [`EdgeBuild::layering_approximate`] (and log a warning) whenever
/// incomparable nodes ended up sharing a class.
///
/// # Errors
/// [`GraphError::CyclicPreference`] when the edges contain a directed
/// cycle; [`GraphError::NotLayerable`] as described above; range and
/// self-loop errors for malformed input.
pub fn build_from_edges(num_nodes: usize, edges: &EdgeList) -> Result<EdgeBuild, GraphError> {
    if num_nodes == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let k = num_nodes;
    let mut direct = vec![false; k * k];
    let mut successors = vec![Vec::new(); k];
    for &(from, to) in &edges.edges {
        for &n in &[from, to] {
            if n >= k {
                return Err(GraphError::NodeOutOfRange { index: n, num_nodes: k });
            }
        }
        if from == to {
            return Err(GraphError::SelfLoop { node: from });
        }
        if !direct[from * k + to] {
            direct[from * k + to] = true;
            successors[from].push(to);
        }
    }

    // Floyd-Warshall reachability over the direct edges.
    let mut reach = direct.clone();
    for via in 0..k {
        for i in 0..k {
            if !reach[i * k + via] {
                continue;
            }
            for j in 0..k {
                if reach[via * k + j] {
                    reach[i * k + j] = true;
                }
            }
        }
    }

    if let Some(start) = (0..k).find(|&i| reach[i * k + i]) {
        return Err(GraphError::CyclicPreference { cycle: find_cycle(start, &successors) });
    }

    // Longest-path depth via Kahn's algorithm over the direct edges.
    let mut indegree = vec![0usize; k];
    for i in 0..k {
        for &j in &successors[i] {
            indegree[j] += 1;
        }
    }
    let mut depth = vec![0usize; k];
    let mut queue: Vec<usize> = (0..k).filter(|&i| indegree[i] == 0).collect();
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        for &j in &successors[i] {
            depth[j] = depth[j].max(depth[i] + 1);
            indegree[j] -= 1;
            if indegree[j] == 0 {
                queue.push(j);
            }
        }
    }
    debug_assert_eq!(queue.len(), k, "acyclicity was established above");

    // Layered orders are exactly those whose closure connects every
    // cross-depth pair.
    for i in 0..k {
        for j in 0..k {
            if depth[i] < depth[j] && !reach[i * k + j] {
                return Err(GraphError::NotLayerable { better: i, worse: j });
            }
        }
    }

    let num_layers = depth.iter().copied().max().unwrap_or(0) + 1;
    let mut classes = vec![Vec::new(); num_layers];
    for (i, &d) in depth.iter().enumerate() {
        classes[d].push(i);
    }
    let layering_approximate = classes.iter().any(|c| c.len() > 1);
    if layering_approximate {
        log::warn!(
            "layering approximation: incomparable nodes were merged into shared classes; \
             use labels to express ties explicitly"
        );
    }

    Ok(EdgeBuild { graph: PreferenceGraph::from_classes(k, classes), layering_approximate })
}

/// Shortest cycle through `start`, as `start -> ... -> start`, found by BFS
/// over the direct edges. Only called once reachability proves one exists.
fn find_cycle(start: usize, successors: &[Vec<usize>]) -> Vec<usize> {
    let k = successors.len();
    let mut parent = vec![usize::MAX; k];
    let mut queue = vec![start];
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        for &j in &successors[i] {
            if j == start {
                let mut path = vec![start, i];
                let mut cur = i;
                while cur != start {
                    cur = parent[cur];
                    path.push(cur);
                }
                path.reverse();
                return path;
            }
            if parent[j] == usize::MAX {
                parent[j] = i;
                queue.push(j);
            }
        }
    }
    unreachable!("caller guarantees a cycle through `start`");
}

/// Where a ground-truth answer stands relative to the response classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtStanding {
    /// Tied with class `class`: its members are excluded from the
    /// ground truth's dominated set.
    TiedWith { class: usize },
    /// Strictly better than class `class` and everything below it, without
    /// tying any class. `class == num_classes` means the ground truth is
    /// worse than every response and dominates nothing.
    Above { class: usize },
}

impl GtStanding {
    /// Index of the best class the ground truth strictly dominates;
    /// `num_classes` when it dominates nothing.
    pub fn first_dominated_class(&self) -> usize {
        match *self {
            GtStanding::TiedWith { class } => class + 1,
            GtStanding::Above { class } => class,
        }
    }
}

/// Places a ground-truth label among the classes of a graph built from
/// `labeling`.
///
/// Each class spans the label interval `[min - tol, max + tol]` of its
/// members; the ground truth ties with the best class whose interval
/// contains its label, and otherwise sits `Above` the first class it
/// outranks. With a positive tolerance adjacent class intervals can
/// overlap; scanning best-first resolves such bridges in favor of the
/// better class, so anchoring never dominates a response it might tie.
pub fn gt_standing(
    labeling: &PreferenceLabeling,
    graph: &PreferenceGraph,
    gt_label: f64,
) -> Result<GtStanding, GraphError> {
    labeling.check()?;
    if !gt_label.is_finite() {
        return Err(GraphError::NonFiniteGtLabel(gt_label));
    }
    if labeling.labels.len() != graph.num_nodes() {
        return Err(GraphError::LabelCountMismatch {
            labels: labeling.labels.len(),
            nodes: graph.num_nodes(),
        });
    }
    let tol = labeling.tie_tolerance;
    for (g, class) in graph.classes().iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in class {
            lo = lo.min(labeling.labels[i]);
            hi = hi.max(labeling.labels[i]);
        }
        if gt_label > hi + tol {
            return Ok(GtStanding::Above { class: g });
        }
        if gt_label >= lo - tol {
            return Ok(GtStanding::TiedWith { class: g });
        }
    }
    Ok(GtStanding::Above { class: graph.num_classes() })
}
