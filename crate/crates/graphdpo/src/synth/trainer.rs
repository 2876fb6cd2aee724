//! The optimizer loop tying objective, policy, and task together.
//!
//! Each step samples a prompt batch, draws K rollouts per prompt from the
//! current policy, scores them against the frozen reference, builds the
//! preference graph from band labels, and backpropagates the selected
//! objective through the log-softmax into the logits. Updates use the
//! decoupled-weight-decay adaptive optimizer under a warmup-then-cosine
//! learning-rate schedule; the anchor and drift weights follow their own
//! annealing schedules.
//!
//! Everything is driven by one seeded generator in a fixed order (batch
//! prompts are visited sorted), so a seed pins the entire trajectory
//! bit-for-bit.
//!
//! Reported metrics separate concerns: `top1_accuracy`, `kendall_tau`, and
//! `mean_kl` are deterministic functions of the policy, while `loss` is the
//! selected objective measured on a fixed probe rollout set (its own seed,
//! recreated each evaluation) with the anchor/drift weights frozen at their
//! step-0 values — so the loss column moves only when the policy moves,
//! never because the schedules annealed underneath it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradients::grad_total_with_weights;
use crate::graph::{build_from_labels, gt_standing, PreferenceLabeling};
use crate::objective::{lambda_gt, lambda_kl, log_ratio_score, ScheduleParams, ScoreSet};

use super::baselines::{
    baseline_dpo_pairwise, baseline_multi_negative, baseline_pro_listmle, BaselineTerms,
};
use super::policy::TabularPolicy;
use super::task::ToyTask;
use super::SynthError;

/// Which objective drives the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    GraphDpo,
    GraphDpoGt,
    DpoPairwise,
    ProListMle,
    MultiNegative,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 5] = [
        ObjectiveKind::GraphDpo,
        ObjectiveKind::GraphDpoGt,
        ObjectiveKind::DpoPairwise,
        ObjectiveKind::ProListMle,
        ObjectiveKind::MultiNegative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::GraphDpo => "graphdpo",
            ObjectiveKind::GraphDpoGt => "graphdpo+gt",
            ObjectiveKind::DpoPairwise => "dpo-pairwise",
            ObjectiveKind::ProListMle => "pro-listmle",
            ObjectiveKind::MultiNegative => "multi-negative",
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectiveKind::ALL
            .into_iter()
            .find(|kind| kind.name() == s)
            .ok_or_else(|| SynthError::UnknownObjective(s.to_string()))
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: ObjectiveKind,
    /// Rollouts sampled per prompt per visit (K), with replacement.
    pub rollouts_per_prompt: usize,
    /// Softmax temperature used when sampling rollouts.
    pub temperature: f64,
    /// Log-ratio scale applied at scoring time.
    pub beta: f64,
    pub steps: usize,
    pub batch_prompts: usize,
    pub peak_lr: f64,
    /// Fraction of steps spent ramping linearly to `peak_lr`, in (0, 1].
    pub lr_warmup_frac: f64,
    /// Cosine decay floor as a fraction of `peak_lr`, in (0, 1].
    pub final_lr_frac: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weight_decay: f64,
    /// Anchor weight at step 0, decayed linearly to `gt_final`.
    pub gt_init: f64,
    /// Anchor weight at the final step. Clamped down to `gt_init` when the
    /// latter is smaller, so sweeps can probe initial weights below it.
    pub gt_final: f64,
    pub kl_peak: f64,
    pub kl_warmup_frac: f64,
    pub seed: u64,
    /// Record metrics every this many steps (the final step always records).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::GraphDpo,
            rollouts_per_prompt: 8,
            temperature: 0.8,
            beta: 0.05,
            steps: 400,
            batch_prompts: 32,
            peak_lr: 0.1,
            lr_warmup_frac: 0.1,
            final_lr_frac: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            weight_decay: 1e-2,
            gt_init: 2.5,
            gt_final: 1.0,
            kl_peak: 0.1,
            kl_warmup_frac: 0.1,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.rollouts_per_prompt < 2 {
            return Err(SynthError::TooFewRollouts(self.rollouts_per_prompt));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(SynthError::InvalidTemperature(self.temperature));
        }
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(SynthError::Objective(
                crate::objective::ObjectiveError::InvalidBeta(self.beta),
            ));
        }
        if self.steps == 0 {
            return Err(SynthError::ZeroSteps);
        }
        if self.batch_prompts == 0 {
            return Err(SynthError::ZeroBatch);
        }
        if self.eval_every == 0 {
            return Err(SynthError::ZeroEvalCadence);
        }
        if !self.peak_lr.is_finite() || self.peak_lr < 0.0 {
            return Err(SynthError::InvalidLearningRate(self.peak_lr));
        }
        for (name, value) in [
            ("lr_warmup_frac", self.lr_warmup_frac),
            ("final_lr_frac", self.final_lr_frac),
        ] {
            if !value.is_finite() || value <= 0.0 || value > 1.0 {
                return Err(SynthError::InvalidFraction { name, value });
            }
        }
        self.schedule_params().validate()?;
        Ok(())
    }

    /// Anchor/drift schedule for this run. `gt_final` is clamped to
    /// `gt_init` so a sweep over small initial weights stays a valid
    /// (non-increasing) schedule.
    pub fn schedule_params(&self) -> ScheduleParams {
        ScheduleParams {
            gt_init: self.gt_init,
            gt_final: self.gt_final.min(self.gt_init),
            total_steps: self.steps as u64,
            kl_peak: self.kl_peak,
            kl_warmup_frac: self.kl_warmup_frac,
        }
    }
}

/// One recorded point of a training trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub step: usize,
    pub objective: ObjectiveKind,
    /// Selected objective on the fixed probe rollout set, schedule weights
    /// frozen at step 0 (see module docs).
    pub loss: f64,
    /// Fraction of prompts whose argmax response attains the top utility
    /// band — correctness at the resolution the preference signal defines.
    pub top1_accuracy: f64,
    /// Mean per-prompt rank correlation between logits and true utilities.
    pub kendall_tau: f64,
    /// Mean per-prompt divergence from the frozen reference.
    pub mean_kl: f64,
}

/// Deterministic policy-quality measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub top1_accuracy: f64,
    pub kendall_tau: f64,
    pub mean_kl: f64,
}

/// A finished run: the metric trajectory and the trained policy.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub metrics: Vec<Metrics>,
    pub policy: TabularPolicy,
}

impl TrainRun {
    /// First recorded step at which `top1_accuracy` reached `threshold`,
    /// at the evaluation cadence's resolution.
    pub fn steps_to_top1(&self, threshold: f64) -> Option<usize> {
        self.metrics
            .iter()
            .find(|m| m.top1_accuracy >= threshold)
            .map(|m| m.step)
    }

    pub fn final_metrics(&self) -> &Metrics {
        self.metrics.last().expect("the final step always records metrics")
    }
}

const ADAM_EPS: f64 = 1e-8;

/// Adaptive-moment optimizer with decoupled weight decay: the decay term
/// `lr * wd * param` is applied directly to the parameters, outside the
/// moment estimates.
#[derive(Debug, Clone)]
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(len: usize, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self { beta1, beta2, weight_decay, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * params[i]);
        }
    }
}

/// Linear warmup to `peak_lr`, then cosine decay to `final_lr_frac` of it,
/// landing exactly on the floor at the last step.
fn learning_rate(config: &TrainConfig, step: usize) -> f64 {
    let warmup = ((config.lr_warmup_frac * config.steps as f64).round() as usize)
        .clamp(1, config.steps);
    let peak = config.peak_lr;
    if step < warmup {
        return peak * (step + 1) as f64 / warmup as f64;
    }
    let floor = config.final_lr_frac * peak;
    let last = config.steps - 1;
    if last <= warmup {
        return floor;
    }
    let progress = (step - warmup) as f64 / (last - warmup) as f64;
    floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// K rollouts of one prompt with their band labels, plus the prompt's
/// ground-truth response. Duplicate draws are kept as distinct entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutSet {
    pub responses: Vec<usize>,
    pub labels: Vec<f64>,
    pub gt_response: usize,
    pub gt_label: f64,
}

/// Samples K response indices (with replacement) from the
/// temperature-scaled policy and attaches their labels.
pub fn sample_rollouts(
    policy: &TabularPolicy,
    task: &ToyTask,
    prompt: usize,
    k: usize,
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<RolloutSet, SynthError> {
    if k < 2 {
        return Err(SynthError::TooFewRollouts(k));
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(SynthError::InvalidTemperature(temperature));
    }
    let responses: Vec<usize> = (0..k)
        .map(|_| policy.sample_response(prompt, temperature, rng))
        .collect();
    let labels = responses.iter().map(|&r| task.label(prompt, r)).collect();
    let gt_response = task.gt_response(prompt);
    Ok(RolloutSet { responses, labels, gt_response, gt_label: task.label(prompt, gt_response) })
}

/// One prompt's loss and score-space gradient coefficients.
struct PromptTerms {
    /// Preference loss plus the weighted drift term.
    loss: f64,
    /// d loss / d raw score, one per rollout.
    score_coeffs: Vec<f64>,
    /// d loss / d ground-truth raw score (anchor weight already applied).
    gt_score_coeff: f64,
}

fn prompt_terms(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    prompt: usize,
    set: &RolloutSet,
    objective: ObjectiveKind,
    lambda_gt_weight: f64,
    lambda_kl_weight: f64,
    beta: f64,
) -> Result<PromptTerms, SynthError> {
    let k = set.responses.len();
    let mut raw = Vec::with_capacity(k);
    let mut drift = 0.0;
    for &r in &set.responses {
        let lp = policy.logprob(prompt, r);
        let lp_ref = reference.logprob(prompt, r);
        raw.push(log_ratio_score(lp, lp_ref, beta)?);
        drift += lp - lp_ref;
    }
    // Each rollout is a single draw — one "token" — so the token-mean drift
    // per rollout is just the log-ratio itself.
    let kl_value = drift / k as f64;

    let labeling = PreferenceLabeling::new(set.labels.clone());
    let (pref_loss, score_coeffs, gt_score_coeff) = match objective {
        ObjectiveKind::GraphDpo | ObjectiveKind::GraphDpoGt => {
            let anchored = objective == ObjectiveKind::GraphDpoGt;
            let gt_raw = if anchored {
                Some(log_ratio_score(
                    policy.logprob(prompt, set.gt_response),
                    reference.logprob(prompt, set.gt_response),
                    beta,
                )?)
            } else {
                None
            };
            let scores = ScoreSet::center(raw, gt_raw)?;
            let g = build_from_labels(&labeling)?;
            let standing = if anchored {
                Some(gt_standing(&labeling, &g, set.gt_label)?)
            } else {
                None
            };
            let breakdown = crate::objective::total_loss_with_weights(
                &scores,
                &g,
                standing,
                None,
                lambda_gt_weight,
                0.0,
            )?;
            let grad = grad_total_with_weights(&scores, &g, standing, lambda_gt_weight)?;
            (breakdown.total, grad.per_response, grad.gt.unwrap_or(0.0))
        }
        ObjectiveKind::DpoPairwise => {
            let scores = ScoreSet::center(raw, None)?;
            let terms = baseline_dpo_pairwise(&scores, &set.labels)?;
            (terms.loss, terms.grad, 0.0)
        }
        ObjectiveKind::ProListMle => {
            let scores = ScoreSet::center(raw, None)?;
            let terms = baseline_pro_listmle(&scores, &set.labels)?;
            (terms.loss, terms.grad, 0.0)
        }
        ObjectiveKind::MultiNegative => {
            let scores = ScoreSet::center(raw, None)?;
            match baseline_multi_negative(&scores, &set.labels) {
                Ok(BaselineTerms { loss, grad }) => (loss, grad, 0.0),
                // A batch whose rollouts all share one band carries no
                // comparison signal; treat it as inert rather than fatal.
                Err(SynthError::NotTwoClasses(1)) => (0.0, vec![0.0; k], 0.0),
                Err(e) => return Err(e),
            }
        }
    };

    Ok(PromptTerms {
        loss: pref_loss + lambda_kl_weight * kl_value,
        score_coeffs,
        gt_score_coeff,
    })
}

/// Backpropagates one prompt's score-space coefficients through the
/// scoring rule and the log-softmax into the logit gradient buffer.
///
/// Raw score `s_r = beta * (logprob(y_r) - ref_logprob(y_r))` makes the
/// coefficient on `logprob(y_r)` equal `beta * a_r`, plus the drift term's
/// constant `lambda_kl / K` per rollout. With `c` the per-response totals,
/// `d loss / d logit_m = c_m - p_m * sum(c)`.
fn accumulate_logit_grad(
    policy: &TabularPolicy,
    prompt: usize,
    set: &RolloutSet,
    terms: &PromptTerms,
    lambda_kl_weight: f64,
    beta: f64,
    weight: f64,
    grad: &mut [f64],
) {
    let m = policy.num_responses();
    let mut coeff = vec![0.0; m];
    let drift_per_rollout = lambda_kl_weight / set.responses.len() as f64;
    for (r, &response) in set.responses.iter().enumerate() {
        coeff[response] += beta * terms.score_coeffs[r] + drift_per_rollout;
    }
    if terms.gt_score_coeff != 0.0 {
        coeff[set.gt_response] += beta * terms.gt_score_coeff;
    }
    let total: f64 = coeff.iter().sum();
    let probs = policy.probabilities_row(prompt);
    let base = prompt * m;
    for response in 0..m {
        grad[base + response] += weight * (coeff[response] - probs[response] * total);
    }
}

/// Mixes the probe seed away from the training stream so the two never
/// overlap even for adjacent user seeds.
const PROBE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// The selected objective measured over every prompt on a freshly seeded
/// probe rollout set, schedule weights frozen at step 0. Depends only on
/// config, task, and current policy — not on training progress.
fn probe_loss(
    policy: &TabularPolicy,
    reference: &TabularPolicy,
    task: &ToyTask,
    config: &TrainConfig,
) -> Result<f64, SynthError> {
    let schedule = config.schedule_params();
    let gt_weight = lambda_gt(0, &schedule);
    let kl_weight = lambda_kl(0, &schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ PROBE_SEED_SALT);
    let mut total = 0.0;
    for prompt in 0..task.num_prompts() {
        let set = sample_rollouts(
            policy,
            task,
            prompt,
            config.rollouts_per_prompt,
            config.temperature,
            &mut rng,
        )?;
        total += prompt_terms(
            policy,
            reference,
            prompt,
            &set,
            config.objective,
            gt_weight,
            kl_weight,
            config.beta,
        )?
        .loss;
    }
    Ok(total / task.num_prompts() as f64)
}

/// Deterministic quality metrics of a policy on a task.
pub fn evaluate(policy: &TabularPolicy, reference: &TabularPolicy, task: &ToyTask) -> EvalStats {
    let prompts = task.num_prompts();
    let m = task.responses_per_prompt();
    let pair_count = (m * (m - 1) / 2) as f64;
    let mut top1 = 0.0;
    let mut tau_sum = 0.0;
    let mut kl_sum = 0.0;
    for prompt in 0..prompts {
        let argmax = policy.argmax_response(prompt);
        if task.label(prompt, argmax) == task.top_band() {
            top1 += 1.0;
        }

        let logits = policy.logits_row(prompt);
        let utils = task.utilities_row(prompt);
        let mut net = 0i64;
        for i in 0..m {
            for j in i + 1..m {
                let dl = logits[i] - logits[j];
                let du = utils[i] - utils[j];
                if dl != 0.0 && du != 0.0 {
                    net += if (dl > 0.0) == (du > 0.0) { 1 } else { -1 };
                }
            }
        }
        tau_sum += net as f64 / pair_count;

        let p = policy.probabilities_row(prompt);
        let q = reference.probabilities_row(prompt);
        let mut kl = 0.0;
        for r in 0..m {
            if p[r] > 0.0 {
                kl += p[r] * (p[r].ln() - q[r].ln());
            }
        }
        kl_sum += kl;
    }
    EvalStats {
        top1_accuracy: top1 / prompts as f64,
        kendall_tau: tau_sum / prompts as f64,
        mean_kl: kl_sum / prompts as f64,
    }
}

/// Runs one training job from a uniform initialization.
///
/// The reference policy is the frozen initial policy. Metrics are recorded
/// after the update at every `eval_every`-th step and at the final step.
/// Aborts with [`SynthError::Diverged`] if a batch loss leaves the finite
/// range.
pub fn train(task: &ToyTask, config: &TrainConfig) -> Result<TrainRun, SynthError> {
    config.validate()?;
    if config.objective == ObjectiveKind::MultiNegative && task.discretization_levels() != 2 {
        return Err(SynthError::NeedsTwoLevels(task.discretization_levels()));
    }
    let schedule = config.schedule_params();
    let prompts = task.num_prompts();
    let mut policy = TabularPolicy::uniform(prompts, task.responses_per_prompt());
    let reference = policy.clone();
    let mut optimizer = AdamW::new(
        policy.params().len(),
        config.adam_beta1,
        config.adam_beta2,
        config.weight_decay,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batch_size = config.batch_prompts.min(prompts);
    let mut metrics = Vec::new();

    for step in 0..config.steps {
        let gt_weight = lambda_gt(step as u64, &schedule);
        let kl_weight = lambda_kl(step as u64, &schedule);

        let mut batch = rand::seq::index::sample(&mut rng, prompts, batch_size).into_vec();
        batch.sort_unstable();

        let mut grad = vec![0.0; policy.params().len()];
        let mut batch_loss = 0.0;
        for &prompt in &batch {
            let set = sample_rollouts(
                &policy,
                task,
                prompt,
                config.rollouts_per_prompt,
                config.temperature,
                &mut rng,
            )?;
            let terms = prompt_terms(
                &policy,
                &reference,
                prompt,
                &set,
                config.objective,
                gt_weight,
                kl_weight,
                config.beta,
            )?;
            batch_loss += terms.loss;
            accumulate_logit_grad(
                &policy,
                prompt,
                &set,
                &terms,
                kl_weight,
                config.beta,
                1.0 / batch_size as f64,
                &mut grad,
            );
        }
        batch_loss /= batch_size as f64;
        if !batch_loss.is_finite() {
            return Err(SynthError::Diverged { step, loss: batch_loss });
        }

        optimizer.step(policy.params_mut(), &grad, learning_rate(config, step));

        if step % config.eval_every == 0 || step == config.steps - 1 {
            let stats = evaluate(&policy, &reference, task);
            let loss = probe_loss(&policy, &reference, task, config)?;
            metrics.push(Metrics {
                step,
                objective: config.objective,
                loss,
                top1_accuracy: stats.top1_accuracy,
                kendall_tau: stats.kendall_tau,
                mean_kl: stats.mean_kl,
            });
        }
    }

    Ok(TrainRun { metrics, policy })
}

/// One sweep measurement: anchor weight, resulting accuracy, and whether
/// the weight falls in the `[K/4, K/3]` guidance band.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gt_init: f64,
    pub final_top1: f64,
    pub in_guidance_band: bool,
}

/// Trains the anchored objective once per grid value of the initial anchor
/// weight, all runs sharing the base config's seed.
pub fn sweep_lambda_gt(
    task: &ToyTask,
    base: &TrainConfig,
    grid: &[f64],
) -> Result<Vec<SweepRow>, SynthError> {
    if grid.is_empty() {
        return Err(SynthError::EmptySweepGrid);
    }
    let k = base.rollouts_per_prompt as f64;
    let (band_lo, band_hi) = (k / 4.0, k / 3.0);
    grid.iter()
        .map(|&gt_init| {
            let mut config = base.clone();
            config.objective = ObjectiveKind::GraphDpoGt;
            config.gt_init = gt_init;
            let run = train(task, &config)?;
            Ok(SweepRow {
                gt_init,
                final_top1: run.final_metrics().top1_accuracy,
                in_guidance_band: gt_init >= band_lo - 1e-9 && gt_init <= band_hi + 1e-9,
            })
        })
        .collect()
}
