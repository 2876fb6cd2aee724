//! Micro-timing harness contrasting the quadratic and linear loss paths.
//!
//! Strict chains are the stress case: every node dominates everything below
//! it, so the naive evaluation touches Θ(K²) score pairs while the layered
//! evaluation stays Θ(K). The harness calibrates an iteration count per
//! measurement so each timing window is a few milliseconds, then takes the
//! median of several windows — enough to make the naive/layered ratio a
//! stable, monotonically growing function of K on an otherwise idle box.
//! Absolute numbers are hardware-dependent and deliberately not asserted
//! anywhere; only the trend matters.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{build_from_labels, GraphError, PreferenceGraph, PreferenceLabeling};
use crate::objective::{graph_loss_layered, graph_loss_naive, ScoreSet};

/// Per-K timing outcome: nanoseconds per evaluation for each path and
/// their ratio (naive / layered).
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub naive_ns: f64,
    pub layered_ns: f64,
    pub ratio: f64,
}

const TARGET_WINDOW_NS: f64 = 2_000_000.0;
const REPS: usize = 5;

/// Median nanoseconds per call of `f` over [`REPS`] calibrated windows.
fn time_per_eval(mut f: impl FnMut() -> f64) -> f64 {
    // Warm up and estimate cost to size the measurement window.
    let start = Instant::now();
    let mut sink = 0.0;
    for _ in 0..16 {
        sink += f();
    }
    black_box(sink);
    let estimate = (start.elapsed().as_nanos() as f64 / 16.0).max(1.0);
    let iters = ((TARGET_WINDOW_NS / estimate) as usize).clamp(16, 2_000_000);

    let mut samples = [0.0; REPS];
    for sample in &mut samples {
        let start = Instant::now();
        let mut sink = 0.0;
        for _ in 0..iters {
            sink += f();
        }
        black_box(sink);
        *sample = start.elapsed().as_nanos() as f64 / iters as f64;
    }
    samples.sort_by(|a, b| a.total_cmp(b));
    samples[REPS / 2]
}

fn strict_chain(k: usize) -> Result<PreferenceGraph, GraphError> {
    let labels: Vec<f64> = (0..k).rev().map(|v| v as f64).collect();
    build_from_labels(&PreferenceLabeling::new(labels))
}

/// Times both loss evaluations on strict chains of each requested size.
///
/// Scores are shared between the two paths so they do identical numeric
/// work per node; only the aggregation strategy differs.
pub fn loss_scaling_bench(ks: &[usize], seed: u64) -> Result<Vec<BenchRow>, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let g = strict_chain(k)?;
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let scores = ScoreSet::center(raw, None).expect("finite generated scores");

        let naive_ns = time_per_eval(|| {
            graph_loss_naive(black_box(&scores), black_box(&g))
                .expect("matched sizes")
                .loss
        });
        let layered_ns = time_per_eval(|| {
            graph_loss_layered(black_box(&scores), black_box(&g))
                .expect("matched sizes")
                .loss
        });
        rows.push(BenchRow { k, naive_ns, layered_ns, ratio: naive_ns / layered_ns });
    }
    Ok(rows)
}
