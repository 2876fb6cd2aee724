//! Command-line harness over the `graphdpo` library.
//!
//! Reads rollout files (JSONL, one prompt per line), scores them, and
//! exposes the library's machinery as subcommands: structural validation,
//! DOT export, loss tables, gradient checking, toy-task training,
//! evaluator benchmarks, and anchor-weight sweeps.
//!
//! Exit codes: 0 on success, 1 for validation or runtime failures, 2 for
//! usage errors. A flat TOML file named by `GRAPHDPO_CONFIG` can supply
//! defaults for most flags; explicit flags always win.

use std::fs::{self, File};
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graphdpo::{
    build_from_labels, finite_diff_check, gen_task, grad_total_with_weights, gt_standing,
    lambda_gt, lambda_kl, loss_scaling_bench, score_record, sweep_lambda_gt,
    total_loss_with_weights, train, GtStanding, Ingest, ObjectiveKind, RolloutRecord,
    ScheduleParams, ScoreSet, ToyTask, TrainConfig, TrainRun,
};

mod config;
mod report;

use config::FileConfig;
use report::{
    fmt6, render_bench_table, render_dot, render_loss_table, write_loss_csv, write_metrics_csv,
    write_sweep_csv, LossRow, OutputFormat, PromptAnalysis,
};

/// Relative-error ceiling for `gradcheck`; at `h = 1e-6` a correct
/// gradient lands several orders of magnitude below it.
const GRADCHECK_THRESHOLD: f64 = 1e-5;

const DEFAULT_BETA: f64 = 1.0;
const DEFAULT_H: f64 = 1e-6;
const BENCH_BASE_K: usize = 8;

#[derive(Parser)]
#[command(
    name = "graphdpo",
    version,
    about = "Preference-graph objectives over multi-rollout comparison files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Rollout file: JSONL, one prompt record per line.
    data: PathBuf,
    /// Drop malformed lines with a warning instead of failing the run.
    #[arg(long)]
    skip_invalid: bool,
}

#[derive(Args)]
struct ScoreArgs {
    /// Scale applied to the policy/reference log-ratio [default: 1].
    #[arg(long)]
    beta: Option<f64>,
    /// Treat preference labels within this distance as tied [default: 0].
    #[arg(long)]
    tie_tolerance: Option<f64>,
}

#[derive(Args)]
struct AnchorWeightArgs {
    /// Fixed anchor weight; overrides the annealing schedule.
    #[arg(long)]
    lambda_gt: Option<f64>,
    /// Schedule position used when no fixed weight is given [default: 0].
    #[arg(long)]
    step: Option<u64>,
    /// Schedule length used when no fixed weight is given [default: 1000].
    #[arg(long)]
    total_steps: Option<u64>,
}

#[derive(Args)]
struct WeightArgs {
    #[command(flatten)]
    anchor: AnchorWeightArgs,
    /// Fixed drift-penalty weight; overrides the schedule (zero at step 0).
    #[arg(long)]
    lambda_kl: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskKind {
    /// Deterministic synthetic task with banded preference labels.
    Synth,
}

#[derive(Args)]
struct TaskArgs {
    /// Task family to generate.
    #[arg(long, value_enum, default_value = "synth")]
    task: TaskKind,
    /// Prompts in the task [default: 200].
    #[arg(long)]
    prompts: Option<usize>,
    /// Candidate responses per prompt [default: 16].
    #[arg(long)]
    responses: Option<usize>,
    /// Distinct preference bands the responses are graded into [default: 4].
    #[arg(long)]
    levels: Option<usize>,
    /// Noise added to utilities when assigning bands [default: 0].
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct TrainKnobs {
    /// Rollouts sampled per prompt each step [default: 8].
    #[arg(long)]
    rollouts: Option<usize>,
    /// Sampling temperature for rollouts [default: 0.8].
    #[arg(long)]
    temperature: Option<f64>,
    /// Scale applied to the policy/reference log-ratio [default: 0.05].
    #[arg(long)]
    beta: Option<f64>,
    /// Optimizer steps [default: 400].
    #[arg(long)]
    steps: Option<usize>,
    /// Prompts per batch [default: 32].
    #[arg(long)]
    batch: Option<usize>,
    /// Peak learning rate [default: 0.1].
    #[arg(long)]
    peak_lr: Option<f64>,
    /// Anchor weight at the start of the run [default: 2.5].
    #[arg(long)]
    gt_init: Option<f64>,
    /// Anchor weight at the end of the run [default: 1].
    #[arg(long)]
    gt_final: Option<f64>,
    /// Peak drift-penalty weight [default: 0.1].
    #[arg(long)]
    kl_peak: Option<f64>,
    /// Steps between metric evaluations [default: 10].
    #[arg(long)]
    eval_every: Option<usize>,
    /// Seed shared by task generation and training [default: 0].
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a rollout file and report each prompt's comparison structure.
    Validate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        score: ScoreArgs,
    },
    /// Export the preference structure as Graphviz DOT.
    Graph {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        score: ScoreArgs,
        /// Write the DOT document here instead of stdout.
        #[arg(long, value_name = "FILE")]
        dot: Option<PathBuf>,
    },
    /// Evaluate the objective on a rollout file, one row per prompt.
    Loss {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        score: ScoreArgs,
        #[command(flatten)]
        weights: WeightArgs,
        /// Table layout [default: human].
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Compare analytic gradients against central differences.
    Gradcheck {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        score: ScoreArgs,
        #[command(flatten)]
        anchor: AnchorWeightArgs,
        /// Finite-difference step [default: 1e-6].
        #[arg(long)]
        h: Option<f64>,
    },
    /// Train a toy tabular policy on a synthetic task, emitting metric rows.
    Train {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        knobs: TrainKnobs,
        /// Objective to optimize: graphdpo, graphdpo+gt, dpo-pairwise,
        /// pro-listmle, or multi-negative [default: graphdpo].
        #[arg(long)]
        objective: Option<String>,
        /// Write the metrics CSV here; the summary then goes to stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Time both loss evaluators as the comparison set grows.
    Bench {
        /// Largest comparison-set size; sizes double from 8 up to this
        /// [default: 64].
        #[arg(long)]
        k_max: Option<usize>,
        /// Seed for the benchmark's random scores [default: 0].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train once per anchor-weight grid point and tabulate final accuracy.
    SweepGt {
        #[command(flatten)]
        task: TaskArgs,
        #[command(flatten)]
        knobs: TrainKnobs,
        /// Comma-separated starting anchor weights, e.g. 0,2,2.5,8.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Write the sweep CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Re-serialize an ingested file (round-trip debugging aid).
    Emit {
        #[command(flatten)]
        input: InputArgs,
        /// Write the JSONL here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file = config::load_from_env()?;
    match cli.command {
        Command::Validate { input, score } => cmd_validate(&input, &score, &file),
        Command::Graph { input, score, dot } => cmd_graph(&input, &score, dot.as_deref(), &file),
        Command::Loss { input, score, weights, format } => {
            cmd_loss(&input, &score, &weights, format, &file)
        }
        Command::Gradcheck { input, score, anchor, h } => {
            cmd_gradcheck(&input, &score, &anchor, h, &file)
        }
        Command::Train { task, knobs, objective, out } => {
            cmd_train(&task, &knobs, objective, out.as_deref(), &file)
        }
        Command::Bench { k_max, seed } => cmd_bench(k_max, seed, &file),
        Command::SweepGt { task, knobs, grid, out } => {
            cmd_sweep(&task, &knobs, grid, out.as_deref(), &file)
        }
        Command::Emit { input, out } => cmd_emit(&input, out.as_deref(), &file),
    }
}

/// Explicit value, then config file, then built-in default.
fn pick<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn load_records(input: &InputArgs, file: &FileConfig) -> Result<Ingest> {
    let skip = input.skip_invalid || file.skip_invalid.unwrap_or(false);
    let loaded = graphdpo::ingest(&input.data, skip)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    log::debug!("{} records from {}", loaded.records.len(), input.data.display());
    Ok(loaded)
}

/// Scores every record and builds its comparison structure.
fn analyze(records: &[RolloutRecord], beta: f64, tie_tolerance: f64) -> Result<Vec<PromptAnalysis>> {
    records
        .iter()
        .map(|record| {
            let scored = score_record(record, beta, tie_tolerance)?;
            let graph = build_from_labels(&scored.labeling)
                .with_context(|| format!("prompt {}", record.prompt_id))?;
            let standing = match &scored.gt {
                Some(gt) => Some(
                    gt_standing(&scored.labeling, &graph, gt.label)
                        .with_context(|| format!("prompt {}", record.prompt_id))?,
                ),
                None => None,
            };
            Ok(PromptAnalysis { scored, graph, standing })
        })
        .collect()
}

fn scoring(args: &ScoreArgs, file: &FileConfig) -> (f64, f64) {
    (
        pick(args.beta, file.beta, DEFAULT_BETA),
        pick(args.tie_tolerance, file.tie_tolerance, 0.0),
    )
}

struct ResolvedWeights {
    lambda_gt: f64,
    lambda_kl: f64,
}

/// Fixed weights win; otherwise both come from the annealing schedule
/// evaluated at `--step` (the drift penalty is exactly zero there by
/// default, since its ramp starts at zero).
fn resolve_weights(
    anchor: &AnchorWeightArgs,
    lambda_kl_flag: Option<f64>,
    file: &FileConfig,
) -> Result<ResolvedWeights> {
    let d = ScheduleParams::default();
    let gt_init = file.gt_init.unwrap_or(d.gt_init);
    let params = ScheduleParams {
        gt_init,
        gt_final: file.gt_final.unwrap_or(d.gt_final).min(gt_init),
        total_steps: pick(anchor.total_steps, file.total_steps, d.total_steps),
        kl_peak: file.kl_peak.unwrap_or(d.kl_peak),
        ..d
    };
    params.validate()?;
    let step = pick(anchor.step, file.step, 0);
    Ok(ResolvedWeights {
        lambda_gt: anchor
            .lambda_gt
            .or(file.lambda_gt)
            .unwrap_or_else(|| lambda_gt(step, &params)),
        lambda_kl: lambda_kl_flag
            .or(file.lambda_kl)
            .unwrap_or_else(|| lambda_kl(step, &params)),
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn describe_standing(standing: GtStanding, id: &str, num_classes: usize) -> String {
    match standing {
        GtStanding::TiedWith { class } => format!(", gt {id:?} ties class {class}"),
        GtStanding::Above { class } if class == num_classes => {
            format!(", gt {id:?} outranks nothing")
        }
        GtStanding::Above { class } => {
            format!(", gt {id:?} outranks classes {class}..{num_classes}")
        }
    }
}

fn cmd_validate(input: &InputArgs, score: &ScoreArgs, file: &FileConfig) -> Result<ExitCode> {
    let (beta, tie_tolerance) = scoring(score, file);
    let loaded = load_records(input, file)?;
    let analyses = analyze(&loaded.records, beta, tie_tolerance)?;
    let mut responses = 0;
    for row in &analyses {
        let report = row.graph.validate();
        if !report.is_ok() {
            bail!(
                "prompt {}: inconsistent structure: {}",
                row.scored.prompt_id,
                report.violations.join("; ")
            );
        }
        let k = row.scored.raw_scores.len();
        responses += k + usize::from(row.scored.gt.is_some());
        let gt_note = match (&row.scored.gt, row.standing) {
            (Some(gt), Some(standing)) => {
                describe_standing(standing, &gt.id, row.graph.num_classes())
            }
            _ => String::new(),
        };
        let edges = row.graph.num_edges();
        println!(
            "{}: {} responses, {} classes, {} edge{}{}",
            row.scored.prompt_id,
            k,
            row.graph.num_classes(),
            edges,
            if edges == 1 { "" } else { "s" },
            gt_note,
        );
    }
    println!(
        "ok: {} prompts, {} responses, {} warnings",
        analyses.len(),
        responses,
        loaded.warnings.len(),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_graph(
    input: &InputArgs,
    score: &ScoreArgs,
    dot: Option<&std::path::Path>,
    file: &FileConfig,
) -> Result<ExitCode> {
    let (beta, tie_tolerance) = scoring(score, file);
    let loaded = load_records(input, file)?;
    let analyses = analyze(&loaded.records, beta, tie_tolerance)?;
    let document = render_dot(&analyses);
    match dot {
        Some(path) => fs::write(path, document)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{document}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_loss(
    input: &InputArgs,
    score: &ScoreArgs,
    weights: &WeightArgs,
    format: Option<OutputFormat>,
    file: &FileConfig,
) -> Result<ExitCode> {
    let (beta, tie_tolerance) = scoring(score, file);
    let resolved = resolve_weights(&weights.anchor, weights.lambda_kl, file)?;
    let loaded = load_records(input, file)?;
    let analyses = analyze(&loaded.records, beta, tie_tolerance)?;

    let mut rows = Vec::with_capacity(analyses.len());
    for row in &analyses {
        let scores = ScoreSet::center(
            row.scored.raw_scores.clone(),
            row.scored.gt.as_ref().map(|gt| gt.raw_score),
        )?;
        let breakdown = total_loss_with_weights(
            &scores,
            &row.graph,
            row.standing,
            Some(mean(&row.scored.kl_terms)),
            resolved.lambda_gt,
            resolved.lambda_kl,
        )?;
        rows.push(LossRow {
            prompt_id: row.scored.prompt_id.clone(),
            nodes: row.scored.raw_scores.len(),
            classes: row.graph.num_classes(),
            breakdown,
        });
    }

    let weights_note = format!(
        "weights: lambda_gt={} lambda_kl={}",
        fmt6(resolved.lambda_gt),
        fmt6(resolved.lambda_kl)
    );
    match format.or(file.format).unwrap_or(OutputFormat::Human) {
        OutputFormat::Human => {
            println!("{weights_note}");
            print!("{}", render_loss_table(&rows));
        }
        OutputFormat::Csv => {
            eprintln!("{weights_note}");
            write_loss_csv(&rows, &mut io::stdout().lock())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(
    input: &InputArgs,
    score: &ScoreArgs,
    anchor: &AnchorWeightArgs,
    h: Option<f64>,
    file: &FileConfig,
) -> Result<ExitCode> {
    let (beta, tie_tolerance) = scoring(score, file);
    let lambda = resolve_weights(anchor, None, file)?.lambda_gt;
    let h = pick(h, file.h, DEFAULT_H);
    let loaded = load_records(input, file)?;
    let analyses = analyze(&loaded.records, beta, tie_tolerance)?;

    let mut worst: f64 = 0.0;
    for row in &analyses {
        let k = row.scored.raw_scores.len();
        let gt_raw = row.scored.gt.as_ref().map(|gt| gt.raw_score);
        let mut point = row.scored.raw_scores.clone();
        point.extend(gt_raw);

        let scores = ScoreSet::center(row.scored.raw_scores.clone(), gt_raw)?;
        let grad = grad_total_with_weights(&scores, &row.graph, row.standing, lambda)?;
        let mut analytic = grad.per_response.clone();
        analytic.extend(grad.gt);

        // The drift penalty is constant in the scores, so the probed
        // objective is the graph term plus the weighted anchor term.
        let loss_at = |x: &[f64]| {
            let (resp, rest) = x.split_at(k);
            let probed = ScoreSet::center(resp.to_vec(), rest.first().copied())
                .expect("perturbed scores stay finite");
            total_loss_with_weights(&probed, &row.graph, row.standing, None, lambda, 0.0)
                .expect("perturbed scores stay valid")
                .total
        };
        let report = finite_diff_check(loss_at, &point, &analytic, h)?;
        let coordinate = if report.worst_coordinate < k {
            row.scored.response_ids[report.worst_coordinate].as_str()
        } else {
            "gt"
        };
        println!(
            "{}: max rel error {:.3e} at {coordinate} ({} coordinates)",
            row.scored.prompt_id,
            report.max_rel_error,
            point.len(),
        );
        worst = worst.max(report.max_rel_error);
    }

    let ok = worst < GRADCHECK_THRESHOLD;
    println!(
        "gradcheck {}: max rel error {:.3e}, threshold {GRADCHECK_THRESHOLD:.0e}",
        if ok { "ok" } else { "failed" },
        worst,
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn resolve_train_config(
    knobs: &TrainKnobs,
    file: &FileConfig,
    objective: ObjectiveKind,
) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        objective,
        rollouts_per_prompt: pick(knobs.rollouts, file.rollouts, d.rollouts_per_prompt),
        temperature: pick(knobs.temperature, file.temperature, d.temperature),
        beta: pick(knobs.beta, file.beta, d.beta),
        steps: pick(knobs.steps, file.steps, d.steps),
        batch_prompts: pick(knobs.batch, file.batch, d.batch_prompts),
        peak_lr: pick(knobs.peak_lr, file.peak_lr, d.peak_lr),
        gt_init: pick(knobs.gt_init, file.gt_init, d.gt_init),
        gt_final: pick(knobs.gt_final, file.gt_final, d.gt_final),
        kl_peak: pick(knobs.kl_peak, file.kl_peak, d.kl_peak),
        eval_every: pick(knobs.eval_every, file.eval_every, d.eval_every),
        seed: pick(knobs.seed, file.seed, d.seed),
        ..d
    }
}

fn resolve_task(args: &TaskArgs, file: &FileConfig, seed: u64) -> Result<ToyTask> {
    let TaskKind::Synth = args.task;
    Ok(gen_task(
        seed,
        pick(args.prompts, file.prompts, 200),
        pick(args.responses, file.responses, 16),
        pick(args.levels, file.levels, 4),
        pick(args.noise, file.noise, 0.0),
    )?)
}

fn train_summary(run: &TrainRun) -> String {
    let last = run.final_metrics();
    let crossing = run
        .steps_to_top1(0.95)
        .map(|step| step.to_string())
        .unwrap_or_else(|| "-".to_string());
    format!(
        "final step={} objective={} loss={} top1={} tau={} kl={} steps_to_top1_95pct={crossing}",
        last.step,
        last.objective.name(),
        fmt6(last.loss),
        fmt6(last.top1_accuracy),
        fmt6(last.kendall_tau),
        fmt6(last.mean_kl),
    )
}

fn cmd_train(
    task: &TaskArgs,
    knobs: &TrainKnobs,
    objective: Option<String>,
    out: Option<&std::path::Path>,
    file: &FileConfig,
) -> Result<ExitCode> {
    let name = objective
        .or_else(|| file.objective.clone())
        .unwrap_or_else(|| ObjectiveKind::GraphDpo.name().to_string());
    let objective: ObjectiveKind = name.parse()?;
    let config = resolve_train_config(knobs, file, objective);
    let task = resolve_task(task, file, config.seed)?;
    let run = train(&task, &config)?;

    match out {
        Some(path) => {
            let mut sink = File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?;
            write_metrics_csv(&run, &mut sink)?;
            println!("{}", train_summary(&run));
        }
        None => {
            write_metrics_csv(&run, &mut io::stdout().lock())?;
            eprintln!("{}", train_summary(&run));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(k_max: Option<usize>, seed: Option<u64>, file: &FileConfig) -> Result<ExitCode> {
    let k_max = pick(k_max, file.k_max, 64);
    if k_max < BENCH_BASE_K {
        bail!("--k-max must be at least {BENCH_BASE_K}, got {k_max}");
    }
    let mut sizes = Vec::new();
    let mut k = BENCH_BASE_K;
    while k <= k_max {
        sizes.push(k);
        k *= 2;
    }
    let rows = loss_scaling_bench(&sizes, pick(seed, file.seed, 0))?;
    print!("{}", render_bench_table(&rows));
    println!(
        "the quadratic evaluator touches every dominance pair, the layered one \
         shares terms across classes; the ratio should climb with k"
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    task: &TaskArgs,
    knobs: &TrainKnobs,
    grid: Option<Vec<f64>>,
    out: Option<&std::path::Path>,
    file: &FileConfig,
) -> Result<ExitCode> {
    let grid = grid
        .filter(|g| !g.is_empty())
        .or_else(|| file.grid.clone())
        .context("provide --grid w1,w2,... or a `grid` key in the config file")?;
    let config = resolve_train_config(knobs, file, ObjectiveKind::GraphDpoGt);
    let task = resolve_task(task, file, config.seed)?;
    let rows = sweep_lambda_gt(&task, &config, &grid)?;

    let k = config.rollouts_per_prompt as f64;
    eprintln!(
        "guidance band for k={}: [{}, {}]",
        config.rollouts_per_prompt,
        fmt6(k / 4.0),
        fmt6(k / 3.0),
    );
    match out {
        Some(path) => {
            let mut sink = File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?;
            write_sweep_csv(&rows, &mut sink)?;
        }
        None => write_sweep_csv(&rows, &mut io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_emit(
    input: &InputArgs,
    out: Option<&std::path::Path>,
    file: &FileConfig,
) -> Result<ExitCode> {
    let loaded = load_records(input, file)?;
    match out {
        Some(path) => {
            let mut sink = File::create(path)
                .with_context(|| format!("cannot create {}", path.display()))?;
            graphdpo::emit(&loaded.records, &mut sink)?;
        }
        None => graphdpo::emit(&loaded.records, &mut io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}
