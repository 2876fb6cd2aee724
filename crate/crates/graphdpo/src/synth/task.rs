//! Synthetic preference tasks with exactly known utilities.
//!
//! Each prompt gets `M` candidate responses with continuous utilities drawn
//! uniformly at random. Preference labels are the utilities quantile-binned
//! into `G` ordinal bands — the discrete, tie-heavy signal a verifier or
//! reward model would emit — while the continuous utilities stay available
//! for evaluation. An optional noise knob perturbs the values used for
//! binning so bands can disagree with true utility, emulating a noisy
//! judge; the designated ground-truth response is always the true-utility
//! argmax, regardless of noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SynthError;

/// A synthetic task: per-(prompt, response) utilities, their discretized
/// band labels, and the per-prompt ground-truth response index.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    num_prompts: usize,
    responses_per_prompt: usize,
    discretization_levels: usize,
    seed: u64,
    /// Row-major `(prompt, response)` true utilities in `[0, 1)`.
    true_utility: Vec<f64>,
    /// Row-major band labels, `0.0` (worst band) to `G-1` (best band).
    labels: Vec<f64>,
    gt_response: Vec<usize>,
}

impl ToyTask {
    pub fn num_prompts(&self) -> usize {
        self.num_prompts
    }

    pub fn responses_per_prompt(&self) -> usize {
        self.responses_per_prompt
    }

    pub fn discretization_levels(&self) -> usize {
        self.discretization_levels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn utility(&self, prompt: usize, response: usize) -> f64 {
        self.true_utility[prompt * self.responses_per_prompt + response]
    }

    pub fn label(&self, prompt: usize, response: usize) -> f64 {
        self.labels[prompt * self.responses_per_prompt + response]
    }

    pub fn utilities_row(&self, prompt: usize) -> &[f64] {
        let m = self.responses_per_prompt;
        &self.true_utility[prompt * m..(prompt + 1) * m]
    }

    pub fn labels_row(&self, prompt: usize) -> &[f64] {
        let m = self.responses_per_prompt;
        &self.labels[prompt * m..(prompt + 1) * m]
    }

    pub fn gt_response(&self, prompt: usize) -> usize {
        self.gt_response[prompt]
    }

    /// The best band label, `G - 1`. Quantile binning guarantees every
    /// prompt has at least one response in it.
    pub fn top_band(&self) -> f64 {
        (self.discretization_levels - 1) as f64
    }
}

/// Generates a reproducible task.
///
/// Utilities are uniform on `[0, 1)`. Binning ranks each prompt's
/// responses by `utility + utility_noise * u` with `u` uniform on
/// `(-1, 1)`, then assigns ascending ranks to bands of (near-)equal size:
/// rank `r` lands in band `floor(r * G / M)`. With zero noise the bands
/// order exactly by true utility, so the ground-truth response sits in the
/// top band.
pub fn gen_task(
    seed: u64,
    num_prompts: usize,
    responses_per_prompt: usize,
    discretization_levels: usize,
    utility_noise: f64,
) -> Result<ToyTask, SynthError> {
    if num_prompts == 0 {
        return Err(SynthError::NoPrompts(num_prompts));
    }
    if responses_per_prompt < 2 {
        return Err(SynthError::TooFewResponses(responses_per_prompt));
    }
    if discretization_levels == 0 || discretization_levels > responses_per_prompt {
        return Err(SynthError::InvalidLevels {
            levels: discretization_levels,
            responses: responses_per_prompt,
        });
    }
    if !utility_noise.is_finite() || utility_noise < 0.0 {
        return Err(SynthError::InvalidNoise(utility_noise));
    }

    let m = responses_per_prompt;
    let g = discretization_levels;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut true_utility = Vec::with_capacity(num_prompts * m);
    let mut labels = vec![0.0; num_prompts * m];
    let mut gt_response = Vec::with_capacity(num_prompts);

    for prompt in 0..num_prompts {
        let utilities: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let binning_values: Vec<f64> = utilities
            .iter()
            .map(|&u| u + utility_noise * rng.gen_range(-1.0..1.0))
            .collect();

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| binning_values[a].total_cmp(&binning_values[b]));
        for (rank, &response) in order.iter().enumerate() {
            labels[prompt * m + response] = (rank * g / m) as f64;
        }

        let gt = (0..m)
            .max_by(|&a, &b| utilities[a].total_cmp(&utilities[b]))
            .expect("m >= 2");
        gt_response.push(gt);
        true_utility.extend(utilities);
    }

    Ok(ToyTask {
        num_prompts,
        responses_per_prompt: m,
        discretization_levels: g,
        seed,
        true_utility,
        labels,
        gt_response,
    })
}
