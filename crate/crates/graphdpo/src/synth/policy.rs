//! Tabular softmax policy: one free logit per (prompt, response) pair.
//!
//! `log pi(response | prompt)` is the log-softmax of the prompt's logit
//! row, so log-probabilities, sampling, and gradients are all exact — no
//! function approximation between the objective and the parameters. The
//! frozen reference policy is just a clone of the initialization.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    num_prompts: usize,
    num_responses: usize,
    /// Row-major `(prompt, response)` logits.
    logits: Vec<f64>,
}

impl TabularPolicy {
    /// All-zero logits: the uniform policy.
    pub fn uniform(num_prompts: usize, num_responses: usize) -> Self {
        Self {
            num_prompts,
            num_responses,
            logits: vec![0.0; num_prompts * num_responses],
        }
    }

    pub fn num_prompts(&self) -> usize {
        self.num_prompts
    }

    pub fn num_responses(&self) -> usize {
        self.num_responses
    }

    /// Flat parameter view, row-major by prompt; the optimizer updates this
    /// in place.
    pub fn params(&self) -> &[f64] {
        &self.logits
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn logits_row(&self, prompt: usize) -> &[f64] {
        let m = self.num_responses;
        &self.logits[prompt * m..(prompt + 1) * m]
    }

    /// `log pi(response | prompt)` via a max-subtracted log-softmax.
    pub fn logprob(&self, prompt: usize, response: usize) -> f64 {
        let row = self.logits_row(prompt);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        row[response] - lse
    }

    /// The full probability row; sums to 1 up to rounding.
    pub fn probabilities_row(&self, prompt: usize) -> Vec<f64> {
        let row = self.logits_row(prompt);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = row.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        unnorm.into_iter().map(|w| w / total).collect()
    }

    /// The most probable response, first index on exact ties.
    pub fn argmax_response(&self, prompt: usize) -> usize {
        let row = self.logits_row(prompt);
        let mut best = 0;
        for (i, &l) in row.iter().enumerate() {
            if l > row[best] {
                best = i;
            }
        }
        best
    }

    /// Samples a response from the temperature-scaled softmax. As the
    /// temperature approaches zero this concentrates on the argmax.
    pub fn sample_response(&self, prompt: usize, temperature: f64, rng: &mut impl Rng) -> usize {
        let row = self.logits_row(prompt);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = row.iter().map(|&l| ((l - max) / temperature).exp()).collect();
        WeightedIndex::new(&weights)
            .expect("at least the max-logit response has positive weight")
            .sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_initialization_is_uniform() {
        let policy = TabularPolicy::uniform(3, 5);
        for p in 0..3 {
            for r in 0..5 {
                assert!((policy.logprob(p, r) - (1.0f64 / 5.0).ln()).abs() < 1e-12);
            }
            let total: f64 = policy.probabilities_row(p).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn probabilities_stay_normalized_for_extreme_logits() {
        let mut policy = TabularPolicy::uniform(1, 4);
        policy.params_mut().copy_from_slice(&[800.0, -750.0, 3.0, 0.0]);
        let probs = policy.probabilities_row(0);
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(policy.logprob(0, 0) <= 0.0);
        assert!(policy.logprob(0, 1).is_finite() || policy.logprob(0, 1) == f64::NEG_INFINITY);
    }

    #[test]
    fn argmax_breaks_exact_ties_by_first_index() {
        let mut policy = TabularPolicy::uniform(1, 4);
        policy.params_mut().copy_from_slice(&[0.0, 2.0, 2.0, 1.0]);
        assert_eq!(policy.argmax_response(0), 1);
    }

    #[test]
    fn near_zero_temperature_sampling_collapses_to_the_argmax() {
        let mut policy = TabularPolicy::uniform(1, 6);
        policy.params_mut().copy_from_slice(&[0.1, 0.9, 0.2, 0.4, 0.8, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..64 {
            assert_eq!(policy.sample_response(0, 1e-6, &mut rng), 1);
        }
    }

    #[test]
    fn sampling_is_reproducible_under_a_fixed_seed() {
        let mut policy = TabularPolicy::uniform(1, 8);
        for (i, l) in policy.params_mut().iter_mut().enumerate() {
            *l = (i as f64 * 0.3).sin();
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..32)
                .map(|_| policy.sample_response(0, 0.8, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
        assert_ne!(draw(42), draw(43));
    }

    #[test]
    fn sampling_frequencies_track_probabilities() {
        let mut policy = TabularPolicy::uniform(1, 3);
        policy.params_mut().copy_from_slice(&[1.0, 0.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        let trials = 20_000;
        for _ in 0..trials {
            counts[policy.sample_response(0, 1.0, &mut rng)] += 1;
        }
        let probs = policy.probabilities_row(0);
        for r in 0..3 {
            let freq = counts[r] as f64 / trials as f64;
            // 4 sigma of a binomial proportion at n = 20k.
            let sigma = (probs[r] * (1.0 - probs[r]) / trials as f64).sqrt();
            assert!(
                (freq - probs[r]).abs() < 4.0 * sigma,
                "response {r}: freq {freq} vs p {}",
                probs[r]
            );
        }
    }
}
