//! Output rendering: DOT export of preference structures, human-readable
//! loss tables, and their CSV twins.
//!
//! Everything here is pure string/stream work; the commands in `main`
//! compute the numbers and hand them over. Loss values are always printed
//! with six fixed decimals so output diffs cleanly across locales and
//! machines.

use std::io::Write;

use clap::ValueEnum;
use graphdpo::{
    BenchRow, GtStanding, LossBreakdown, PreferenceGraph, ScoredPrompt, SweepRow, TrainRun,
};
use serde::Deserialize;

/// Output selector for the table-producing commands.
#[derive(Clone, Copy, Debug, Eq, PartialEq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    /// Aligned columns for terminals.
    Human,
    /// Comma-separated rows with a header line.
    Csv,
}

/// One prompt after scoring: the inputs every renderer needs.
pub struct PromptAnalysis {
    pub scored: ScoredPrompt,
    pub graph: PreferenceGraph,
    pub standing: Option<GtStanding>,
}

/// Fixed six-decimal rendering used for every loss-like value.
pub fn fmt6(value: f64) -> String {
    format!("{value:.6}")
}

fn dot_escape(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders one `digraph` over all prompts: an outer cluster per prompt, an
/// inner cluster per equivalence class (best first), solid edges for every
/// dominance pair, and — when a verified answer is present — a
/// double-bordered node with dashed edges to everything it outranks.
pub fn render_dot(prompts: &[PromptAnalysis]) -> String {
    let mut out = String::from("digraph preferences {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=box, style=rounded];\n");
    for (pi, row) in prompts.iter().enumerate() {
        let scored = &row.scored;
        out.push_str(&format!("  subgraph cluster_p{pi} {{\n"));
        out.push_str(&format!(
            "    label=\"{}\";\n",
            dot_escape(&scored.prompt_id)
        ));
        for (ci, class) in row.graph.classes().iter().enumerate() {
            out.push_str(&format!("    subgraph cluster_p{pi}_class{ci} {{\n"));
            let pref = scored.labeling.labels[class[0]];
            out.push_str(&format!("      label=\"pref {pref}\";\n"));
            for &node in class {
                out.push_str(&format!(
                    "      p{pi}_r{node} [label=\"{} ({pref})\"];\n",
                    dot_escape(&scored.response_ids[node])
                ));
            }
            out.push_str("    }\n");
        }
        for (better, worse) in row.graph.edges() {
            out.push_str(&format!("    p{pi}_r{better} -> p{pi}_r{worse};\n"));
        }
        if let (Some(gt), Some(standing)) = (&scored.gt, row.standing) {
            out.push_str(&format!(
                "    p{pi}_gt [label=\"{} ({})\", peripheries=2];\n",
                dot_escape(&gt.id),
                gt.label
            ));
            let first = standing.first_dominated_class();
            for class in &row.graph.classes()[first..] {
                for &node in class {
                    out.push_str(&format!(
                        "    p{pi}_gt -> p{pi}_r{node} [style=dashed];\n"
                    ));
                }
            }
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    out
}

/// One row of the `loss` command: identifying columns plus the weighted
/// breakdown for that prompt.
pub struct LossRow {
    pub prompt_id: String,
    pub nodes: usize,
    pub classes: usize,
    pub breakdown: LossBreakdown,
}

struct MeanRow {
    graph: f64,
    anchor: Option<f64>,
    kl: Option<f64>,
    total: f64,
}

/// Column means over the prompts; optional columns average only the rows
/// that define them and stay empty when none do.
fn mean_over(rows: &[LossRow]) -> MeanRow {
    let n = rows.len() as f64;
    let optional_mean = |pick: fn(&LossBreakdown) -> Option<f64>| {
        let values: Vec<f64> = rows.iter().filter_map(|r| pick(&r.breakdown)).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    MeanRow {
        graph: rows.iter().map(|r| r.breakdown.graph_loss).sum::<f64>() / n,
        anchor: optional_mean(|b| b.anchor_loss),
        kl: optional_mean(|b| b.kl_loss),
        total: rows.iter().map(|r| r.breakdown.total).sum::<f64>() / n,
    }
}

fn cell(value: Option<f64>) -> String {
    value.map(fmt6).unwrap_or_else(|| "-".to_string())
}

/// Aligned table with one row per prompt and a closing `mean` row. The
/// component columns are unweighted; `total` applies the weights.
pub fn render_loss_table(rows: &[LossRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.prompt_id.len())
        .chain(["prompt".len(), "mean".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!(
        "{:width$}  {:>5}  {:>7}  {:>7}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "prompt", "nodes", "classes", "contrib", "graph", "anchor", "kl", "total",
    );
    for row in rows {
        let b = &row.breakdown;
        out.push_str(&format!(
            "{:width$}  {:>5}  {:>7}  {:>7}  {:>10}  {:>10}  {:>10}  {:>10}\n",
            row.prompt_id,
            row.nodes,
            row.classes,
            b.contributing_nodes,
            fmt6(b.graph_loss),
            cell(b.anchor_loss),
            cell(b.kl_loss),
            fmt6(b.total),
        ));
    }
    let mean = mean_over(rows);
    out.push_str(&format!(
        "{:width$}  {:>5}  {:>7}  {:>7}  {:>10}  {:>10}  {:>10}  {:>10}\n",
        "mean",
        "-",
        "-",
        "-",
        fmt6(mean.graph),
        cell(mean.anchor),
        cell(mean.kl),
        fmt6(mean.total),
    ));
    out
}

/// CSV twin of [`render_loss_table`]: same rows and closing `mean` record,
/// with empty cells where the table prints `-`.
pub fn write_loss_csv(rows: &[LossRow], out: &mut dyn Write) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "prompt_id",
        "nodes",
        "classes",
        "contrib",
        "graph",
        "anchor",
        "kl",
        "total",
    ])?;
    let csv_cell = |value: Option<f64>| value.map(fmt6).unwrap_or_default();
    for row in rows {
        let b = &row.breakdown;
        writer.write_record([
            row.prompt_id.clone(),
            row.nodes.to_string(),
            row.classes.to_string(),
            b.contributing_nodes.to_string(),
            fmt6(b.graph_loss),
            csv_cell(b.anchor_loss),
            csv_cell(b.kl_loss),
            fmt6(b.total),
        ])?;
    }
    let mean = mean_over(rows);
    writer.write_record([
        "mean".to_string(),
        String::new(),
        String::new(),
        String::new(),
        fmt6(mean.graph),
        csv_cell(mean.anchor),
        csv_cell(mean.kl),
        fmt6(mean.total),
    ])?;
    writer.flush()?;
    Ok(())
}

/// Metric trajectory of a training run, one CSV row per evaluation.
pub fn write_metrics_csv(run: &TrainRun, out: &mut dyn Write) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["step", "objective", "loss", "top1", "tau", "kl"])?;
    for m in &run.metrics {
        writer.write_record([
            m.step.to_string(),
            m.objective.name().to_string(),
            fmt6(m.loss),
            fmt6(m.top1_accuracy),
            fmt6(m.kendall_tau),
            fmt6(m.mean_kl),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Anchor-weight sweep results; `gt_init` echoes the grid value verbatim.
pub fn write_sweep_csv(rows: &[SweepRow], out: &mut dyn Write) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["gt_init", "final_top1", "in_guidance_band"])?;
    for row in rows {
        writer.write_record([
            row.gt_init.to_string(),
            fmt6(row.final_top1),
            row.in_guidance_band.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Timing table for the two loss evaluators.
pub fn render_bench_table(rows: &[BenchRow]) -> String {
    let mut out = format!(
        "{:>6}  {:>16}  {:>18}  {:>14}\n",
        "k", "naive (ns/eval)", "layered (ns/eval)", "naive/layered",
    );
    for r in rows {
        out.push_str(&format!(
            "{:>6}  {:>16.1}  {:>18.1}  {:>14.2}\n",
            r.k, r.naive_ns, r.layered_ns, r.ratio,
        ));
    }
    out
}
