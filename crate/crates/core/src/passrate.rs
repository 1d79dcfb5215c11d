//! Synthetic prompts with exactly computable pass rates.
//!
//! A prompt owns a vector of logits over `M` discrete responses and a set of
//! responses the verifier accepts. The policy is the softmax of the logits,
//! so the pass rate is the softmax mass on the correct set and its gradient
//! with respect to the logits is `pi_j * (1{j correct} - p)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Normal};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Tolerance on `sum(base_weights) == 1`.
pub const BASE_WEIGHT_TOLERANCE: f64 = 1e-12;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

fn log_sum_exp<I: Iterator<Item = f64> + Clone>(values: I) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.map(|v| libm::exp(v - max)).sum::<f64>())
}

/// One prompt: logits over `M` responses and the verifier's accepted set.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptInstance {
    id: usize,
    logits: Vec<f64>,
    correct: Vec<usize>,
}

impl PromptInstance {
    /// Builds a prompt. `correct` may be empty (structurally unsolvable) and
    /// is sorted and deduplicated.
    pub fn new(id: usize, logits: Vec<f64>, mut correct: Vec<usize>) -> Result<Self> {
        let m = logits.len();
        if m < 2 {
            return Err(Error::InvalidPrompt(format!(
                "prompt {id} has {m} responses, need at least 2"
            )));
        }
        if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
            return Err(Error::InvalidPrompt(format!("prompt {id} has non-finite logit {bad}")));
        }
        correct.sort_unstable();
        correct.dedup();
        if let Some(&bad) = correct.iter().find(|&&c| c >= m) {
            return Err(Error::ResponseOutOfRange {
                response: bad,
                responses: m,
            });
        }
        Ok(Self { id, logits, correct })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn num_responses(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn correct_set(&self) -> &[usize] {
        &self.correct
    }

    pub fn is_correct(&self, response: usize) -> bool {
        self.correct.binary_search(&response).is_ok()
    }

    pub fn is_solvable(&self) -> bool {
        !self.correct.is_empty()
    }

    /// Softmax policy over the responses.
    pub fn policy(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// Probability that a sampled response is accepted.
    pub fn exact_pass_rate(&self) -> f64 {
        if self.correct.is_empty() {
            return 0.0;
        }
        let pi = self.policy();
        let p: f64 = self.correct.iter().map(|&c| pi[c]).sum();
        p.clamp(0.0, 1.0)
    }

    /// Gradient of the exact pass rate with respect to the logits.
    pub fn exact_pass_rate_gradient(&self) -> Vec<f64> {
        if self.correct.is_empty() {
            return vec![0.0; self.logits.len()];
        }
        let pi = self.policy();
        let p: f64 = self.correct.iter().map(|&c| pi[c]).sum();
        pi.iter()
            .enumerate()
            .map(|(j, &pj)| {
                let indicator = if self.is_correct(j) { 1.0 } else { 0.0 };
                pj * (indicator - p)
            })
            .collect()
    }

    /// `grad log pi(response)`: the one-hot of `response` minus the policy.
    pub fn score_vector(&self, response: usize) -> Result<Vec<f64>> {
        let m = self.logits.len();
        if response >= m {
            return Err(Error::ResponseOutOfRange { response, responses: m });
        }
        let mut score: Vec<f64> = self.policy().into_iter().map(|p| -p).collect();
        score[response] += 1.0;
        Ok(score)
    }

    /// Draws `n` i.i.d. responses from the policy and verifies each one.
    pub fn sample_rollouts<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> RolloutBatch {
        let pi = self.policy();
        // Softmax output is finite, nonnegative and sums to one.
        let dist = WeightedIndex::new(&pi).expect("softmax weights are valid");
        let responses: Vec<usize> = (0..n).map(|_| dist.sample(rng)).collect();
        RolloutBatch::from_responses(self, responses)
    }

    /// Gradient-ascent update `logits += step * direction`.
    pub fn apply_update(&mut self, direction: &[f64], step: f64) {
        debug_assert_eq!(direction.len(), self.logits.len());
        for (l, d) in self.logits.iter_mut().zip(direction) {
            *l += step * d;
        }
    }
}

/// `N` verified rollouts of one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub prompt_id: usize,
    pub rewards: Vec<bool>,
    pub responses: Vec<usize>,
    pub empirical_pass_rate: f64,
}

impl RolloutBatch {
    /// Scores `responses` against the prompt's correct set.
    pub fn from_responses(prompt: &PromptInstance, responses: Vec<usize>) -> Self {
        let rewards: Vec<bool> = responses.iter().map(|&y| prompt.is_correct(y)).collect();
        let successes = rewards.iter().filter(|&&r| r).count();
        let empirical_pass_rate = if rewards.is_empty() {
            0.0
        } else {
            successes as f64 / rewards.len() as f64
        };
        Self {
            prompt_id: prompt.id(),
            rewards,
            responses,
            empirical_pass_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn successes(&self) -> usize {
        self.rewards.iter().filter(|&&r| r).count()
    }

    /// True when the group has both successes and failures.
    pub fn is_active(&self) -> bool {
        let s = self.successes();
        s > 0 && s < self.len()
    }
}

/// Prompts plus the base sampling distribution `d_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPopulation {
    prompts: Vec<PromptInstance>,
    base_weights: Vec<f64>,
}

impl PromptPopulation {
    pub fn new(prompts: Vec<PromptInstance>, base_weights: Vec<f64>) -> Result<Self> {
        if prompts.is_empty() {
            return Err(Error::InvalidPopulation("population has no prompts".into()));
        }
        let m = prompts[0].num_responses();
        if let Some(p) = prompts.iter().find(|p| p.num_responses() != m) {
            return Err(Error::InvalidPopulation(format!(
                "prompt {} has {} responses, population uses {m}",
                p.id(),
                p.num_responses()
            )));
        }
        if base_weights.len() != prompts.len() {
            return Err(Error::InvalidPopulation(format!(
                "{} base weights for {} prompts",
                base_weights.len(),
                prompts.len()
            )));
        }
        if base_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPopulation(
                "base weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = base_weights.iter().sum();
        if (total - 1.0).abs() > BASE_WEIGHT_TOLERANCE {
            return Err(Error::InvalidPopulation(format!(
                "base weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { prompts, base_weights })
    }

    /// Population with uniform `d_0`.
    pub fn uniform(prompts: Vec<PromptInstance>) -> Result<Self> {
        let n = prompts.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::new(prompts, vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }

    pub fn num_responses(&self) -> usize {
        self.prompts[0].num_responses()
    }

    pub fn prompts(&self) -> &[PromptInstance] {
        &self.prompts
    }

    pub fn prompt(&self, index: usize) -> &PromptInstance {
        &self.prompts[index]
    }

    pub(crate) fn prompt_mut(&mut self, index: usize) -> &mut PromptInstance {
        &mut self.prompts[index]
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub fn exact_pass_rates(&self) -> Vec<f64> {
        self.prompts.iter().map(PromptInstance::exact_pass_rate).collect()
    }

    /// `E_{x ~ d_0}[p(x)]`.
    pub fn mean_exact_pass_rate(&self) -> f64 {
        self.prompts
            .iter()
            .zip(&self.base_weights)
            .map(|(p, w)| w * p.exact_pass_rate())
            .sum()
    }

    /// Draws `count` prompt indices from `d_0` with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        // Validated in the constructor: nonnegative and summing to one.
        let dist = WeightedIndex::new(&self.base_weights).expect("base weights are valid");
        (0..count).map(|_| dist.sample(rng)).collect()
    }
}

/// Distribution of initial pass rates for generated populations.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum DifficultyProfile {
    Beta { alpha: f64, beta: f64 },
    Uniform { low: f64, high: f64 },
    Fixed { pass_rate: f64 },
}

impl DifficultyProfile {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Beta { alpha, beta } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(invalid("population.profile.alpha", "must be positive"));
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(invalid("population.profile.beta", "must be positive"));
                }
            }
            Self::Uniform { low, high } => {
                if !(0.0 < low && low < high && high < 1.0) {
                    return Err(invalid(
                        "population.profile",
                        "uniform profile needs 0 < low < high < 1",
                    ));
                }
            }
            Self::Fixed { pass_rate } => {
                if !(0.0 < pass_rate && pass_rate < 1.0) {
                    return Err(invalid("population.profile.pass_rate", "must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Beta { alpha, beta } => Beta::new(alpha, beta).expect("validated beta parameters").sample(rng),
            Self::Uniform { low, high } => rng.random_range(low..high),
            Self::Fixed { pass_rate } => pass_rate,
        }
    }
}

/// Recipe for a synthetic population.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PopulationSpec {
    pub size: usize,
    pub responses: usize,
    pub profile: DifficultyProfile,
    /// Share of prompts with an empty correct set.
    pub unsolvable_fraction: f64,
    pub correct_per_prompt: usize,
    /// Standard deviation of the random base logits.
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            size: 64,
            responses: 16,
            profile: DifficultyProfile::Beta { alpha: 2.0, beta: 2.0 },
            unsolvable_fraction: 0.0,
            correct_per_prompt: 1,
            logit_scale: 1.0,
            seed: 0,
        }
    }
}

/// Largest tolerated gap between a generated prompt's pass rate and its target.
pub const TARGET_TOLERANCE: f64 = 1e-9;

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(invalid("population.size", "must be positive"));
        }
        if self.responses < 2 {
            return Err(invalid("population.responses", "must be at least 2"));
        }
        if self.correct_per_prompt == 0 || self.correct_per_prompt >= self.responses {
            return Err(invalid("population.correct_per_prompt", "must lie in [1, responses)"));
        }
        if !(0.0..=1.0).contains(&self.unsolvable_fraction) {
            return Err(invalid("population.unsolvable_fraction", "must lie in [0, 1]"));
        }
        if !(self.logit_scale >= 0.0 && self.logit_scale.is_finite()) {
            return Err(invalid("population.logit_scale", "must be finite and >= 0"));
        }
        self.profile.validate()
    }

    /// Generates the population with uniform `d_0`.
    ///
    /// Solvable prompts get random base logits and a random correct set; the
    /// logits of the correct responses are then shifted by a common offset so
    /// the exact pass rate hits a target drawn from the profile. With
    /// `S_c`/`S_w` the softmax numerators of the correct/wrong responses the
    /// offset solves `S_c e^d / (S_c e^d + S_w) = target` in closed form.
    pub fn generate(&self) -> Result<PromptPopulation> {
        self.validate()?;
        let mut rng = rng::seeded(self.seed);
        let normal = Normal::new(0.0, self.logit_scale.max(f64::MIN_POSITIVE))
            .map_err(|_| invalid("population.logit_scale", "invalid normal scale"))?;
        let unsolvable_count = libm::round(self.unsolvable_fraction * self.size as f64) as usize;
        let mut unsolvable = vec![false; self.size];
        for i in index::sample(&mut rng, self.size, unsolvable_count.min(self.size)) {
            unsolvable[i] = true;
        }

        let mut prompts = Vec::with_capacity(self.size);
        for (id, &is_unsolvable) in unsolvable.iter().enumerate() {
            let mut logits: Vec<f64> = (0..self.responses)
                .map(|_| {
                    if self.logit_scale == 0.0 {
                        0.0
                    } else {
                        normal.sample(&mut rng)
                    }
                })
                .collect();
            if is_unsolvable {
                prompts.push(PromptInstance::new(id, logits, Vec::new())?);
                continue;
            }
            let mut correct = index::sample(&mut rng, self.responses, self.correct_per_prompt).into_vec();
            correct.sort_unstable();
            let target = self.profile.sample(&mut rng).clamp(1e-12, 1.0 - 1e-12);
            let offset = offset_for_target(&logits, &correct, target);
            for &c in &correct {
                logits[c] += offset;
            }
            let prompt = PromptInstance::new(id, logits, correct)?;
            let achieved = prompt.exact_pass_rate();
            if (achieved - target).abs() > TARGET_TOLERANCE {
                return Err(Error::InvalidPopulation(format!(
                    "prompt {id}: pass rate {achieved} misses target {target}"
                )));
            }
            prompts.push(prompt);
        }
        PromptPopulation::uniform(prompts)
    }
}

fn offset_for_target(logits: &[f64], correct: &[usize], target: f64) -> f64 {
    let is_correct = |j: &usize| correct.binary_search(j).is_ok();
    let log_correct = log_sum_exp((0..logits.len()).filter(is_correct).map(|j| logits[j]));
    let log_wrong = log_sum_exp((0..logits.len()).filter(|j| !is_correct(j)).map(|j| logits[j]));
    libm::log(target) - libm::log1p(-target) + log_wrong - log_correct
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(logits: &[f64], correct: &[usize]) -> PromptInstance {
        PromptInstance::new(0, logits.to_vec(), correct.to_vec()).unwrap()
    }

    #[test]
    fn pass_rate_examples() {
        assert_eq!(prompt(&[0.0, 0.0], &[0]).exact_pass_rate(), 0.5);
        assert_eq!(prompt(&[0.3, -1.0, 2.0], &[]).exact_pass_rate(), 0.0);
        let p = prompt(&[libm::log(3.0), 0.0], &[0]).exact_pass_rate();
        assert!((p - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let g = prompt(&[0.0, 0.0], &[0]).exact_pass_rate_gradient();
        assert_eq!(g, vec![0.25, -0.25]);
        let g = prompt(&[1.0, 2.0, 3.0], &[]).exact_pass_rate_gradient();
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let base = prompt(&[1.0, 0.0, 0.0], &[0, 1]);
        let g = base.exact_pass_rate_gradient();
        let h = 1e-6;
        for j in 0..3 {
            let mut plus = base.logits().to_vec();
            let mut minus = base.logits().to_vec();
            plus[j] += h;
            minus[j] -= h;
            let fd = (prompt(&plus, &[0, 1]).exact_pass_rate() - prompt(&minus, &[0, 1]).exact_pass_rate()) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7, "component {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn score_vector_examples() {
        let p = prompt(&[0.0, 0.0], &[0]);
        assert_eq!(p.score_vector(0).unwrap(), vec![0.5, -0.5]);
        assert_eq!(
            p.score_vector(2),
            Err(Error::ResponseOutOfRange {
                response: 2,
                responses: 2
            })
        );
    }

    #[test]
    fn score_has_zero_policy_mean() {
        let p = prompt(&[0.2, -1.3, 0.7, 2.1], &[1, 3]);
        let pi = p.policy();
        let mut acc = [0.0; 4];
        for (y, &py) in pi.iter().enumerate() {
            for (a, s) in acc.iter_mut().zip(p.score_vector(y).unwrap()) {
                *a += py * s;
            }
        }
        assert!(acc.iter().all(|a| a.abs() < 1e-12), "{acc:?}");
    }

    #[test]
    fn score_mean_is_zero_under_sampling() {
        let p = prompt(&[0.5, -0.5, 1.0], &[0]);
        let mut rng = rng::seeded(11);
        let batch = p.sample_rollouts(200_000, &mut rng);
        let mut acc = [0.0; 3];
        for &y in &batch.responses {
            for (a, s) in acc.iter_mut().zip(p.score_vector(y).unwrap()) {
                *a += s;
            }
        }
        // Each score component is bounded by 1, so 0.01 is > 4 standard errors.
        for a in acc {
            assert!((a / batch.len() as f64).abs() < 0.01);
        }
    }

    #[test]
    fn rollouts_edge_cases() {
        let mut rng = rng::seeded(1);
        let all = prompt(&[0.1, 0.4, -0.2], &[0, 1, 2]).sample_rollouts(50, &mut rng);
        assert!(all.rewards.iter().all(|&r| r));
        assert_eq!(all.empirical_pass_rate, 1.0);
        let none = prompt(&[0.1, 0.4, -0.2], &[]).sample_rollouts(50, &mut rng);
        assert!(none.rewards.iter().all(|&r| !r));
        assert_eq!(none.empirical_pass_rate, 0.0);
    }

    #[test]
    fn rollouts_concentrate_on_pass_rate() {
        let mut rng = rng::seeded(5);
        let b = prompt(&[0.0, 0.0], &[0]).sample_rollouts(100_000, &mut rng);
        assert!((b.empirical_pass_rate - 0.5).abs() < 0.005);
        assert_eq!(b.empirical_pass_rate * b.len() as f64, b.successes() as f64);
    }

    #[test]
    fn rollouts_are_reproducible() {
        let p = prompt(&[0.3, 0.1, -0.4, 0.0], &[2]);
        let a = p.sample_rollouts(64, &mut rng::seeded(3));
        let b = p.sample_rollouts(64, &mut rng::seeded(3));
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_prompts_are_rejected() {
        assert!(PromptInstance::new(0, vec![0.0], vec![]).is_err());
        assert!(PromptInstance::new(0, vec![0.0, f64::NAN], vec![]).is_err());
        assert!(PromptInstance::new(0, vec![0.0, 1.0], vec![2]).is_err());
    }

    #[test]
    fn population_rejects_bad_weights() {
        let ps = vec![prompt(&[0.0, 0.0], &[0]), prompt(&[0.0, 0.0], &[1])];
        assert!(PromptPopulation::new(ps.clone(), vec![0.5, 0.6]).is_err());
        assert!(PromptPopulation::new(ps.clone(), vec![1.0]).is_err());
        assert!(PromptPopulation::new(ps, vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn generator_hits_targets() {
        let spec = PopulationSpec {
            size: 200,
            profile: DifficultyProfile::Beta { alpha: 1.0, beta: 5.0 },
            unsolvable_fraction: 0.1,
            correct_per_prompt: 2,
            seed: 9,
            ..PopulationSpec::default()
        };
        let pop = spec.generate().unwrap();
        assert_eq!(pop.len(), 200);
        let unsolvable = pop.prompts().iter().filter(|p| !p.is_solvable()).count();
        assert_eq!(unsolvable, 20);
        assert_eq!(pop, spec.generate().unwrap());

        let fixed = PopulationSpec {
            size: 10,
            profile: DifficultyProfile::Fixed { pass_rate: 0.3 },
            ..PopulationSpec::default()
        }
        .generate()
        .unwrap();
        for p in fixed.exact_pass_rates() {
            assert!((p - 0.3).abs() < TARGET_TOLERANCE);
        }
    }
}
