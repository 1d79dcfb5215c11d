//! Evaluation metrics: bootstrap pass@k, majority voting, difficulty buckets.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::passrate::{PromptInstance, PromptPopulation};
use crate::rng;

/// `R` verified rollouts of one prompt kept for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSampleSet {
    pub prompt_id: usize,
    pub rewards: Vec<bool>,
    pub answers: Vec<usize>,
}

impl EvalSampleSet {
    pub fn new(prompt_id: usize, rewards: Vec<bool>, answers: Vec<usize>) -> Result<Self> {
        if rewards.len() != answers.len() {
            return Err(invalid("answers", "need one answer per reward"));
        }
        Ok(Self {
            prompt_id,
            rewards,
            answers,
        })
    }

    /// Samples `rollouts` responses from the prompt's current policy.
    pub fn draw<R: Rng + ?Sized>(prompt: &PromptInstance, rollouts: usize, rng: &mut R) -> Self {
        let batch = prompt.sample_rollouts(rollouts, rng);
        Self {
            prompt_id: batch.prompt_id,
            rewards: batch.rewards,
            answers: batch.responses,
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

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.successes() as f64 / self.len() as f64
        }
    }
}

fn check_k(k: usize, available: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid("k", "must be positive"));
    }
    if k > available {
        return Err(Error::KTooLarge { k, available });
    }
    Ok(())
}

/// Share of `resamples` size-`k` draws (with replacement) containing a
/// success. `k = 1` returns the raw mean reward without resampling.
pub fn pass_at_k<R: Rng + ?Sized>(samples: &EvalSampleSet, k: usize, resamples: usize, rng: &mut R) -> Result<f64> {
    check_k(k, samples.len())?;
    if k == 1 {
        return Ok(samples.mean_reward());
    }
    if resamples == 0 {
        return Err(invalid("resamples", "must be positive"));
    }
    let r = samples.len();
    let mut hits = 0usize;
    for _ in 0..resamples {
        if (0..k).any(|_| samples.rewards[rng.random_range(0..r)]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / resamples as f64)
}

/// Unbiased without-replacement estimator `1 - C(R-c, k) / C(R, k)`.
pub fn pass_at_k_exact(successes: usize, rollouts: usize, k: usize) -> Result<f64> {
    check_k(k, rollouts)?;
    if successes > rollouts {
        return Err(invalid("successes", "cannot exceed rollouts"));
    }
    let failures = rollouts - successes;
    if failures < k {
        return Ok(1.0);
    }
    let mut all_fail = 1.0;
    for i in 0..k {
        all_fail *= (failures - i) as f64 / (rollouts - i) as f64;
    }
    Ok(1.0 - all_fail)
}

/// `1 - (1 - q)^k`: pass@k of `k` i.i.d. draws with success probability `q`.
pub fn pass_at_k_iid(q: f64, k: usize) -> f64 {
    1.0 - libm::pow(1.0 - q, k as f64)
}

/// Whether the most frequent of the first `k` answers is correct. Ties go
/// to the smallest response index.
pub fn majority_at_k(samples: &EvalSampleSet, k: usize, correct_set: &[usize]) -> Result<bool> {
    check_k(k, samples.len())?;
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &a in &samples.answers[..k] {
        *counts.entry(a).or_insert(0) += 1;
    }
    let mut best = (0usize, 0usize);
    for (&answer, &count) in &counts {
        // Ascending keys: a later answer wins only with a strictly larger count.
        if count > best.1 {
            best = (answer, count);
        }
    }
    Ok(correct_set.contains(&best.0))
}

/// Prompt counts by empirical pass rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DifficultyCounts {
    /// `p = 0`.
    pub unsolvable: usize,
    /// `0 < p <= 1/2`.
    pub hard: usize,
    /// `1/2 < p < 1`.
    pub medium: usize,
    /// `p = 1`.
    pub easy: usize,
}

impl DifficultyCounts {
    pub fn total(&self) -> usize {
        self.unsolvable + self.hard + self.medium + self.easy
    }

    /// `(name, count)` in bucket order.
    pub fn buckets(&self) -> [(&'static str, usize); 4] {
        [
            ("unsolvable", self.unsolvable),
            ("hard", self.hard),
            ("medium", self.medium),
            ("easy", self.easy),
        ]
    }
}

pub fn difficulty_histogram(pass_rates: &[f64]) -> Result<DifficultyCounts> {
    let mut c = DifficultyCounts::default();
    for &p in pass_rates {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PassRateDomain(p));
        }
        if p == 0.0 {
            c.unsolvable += 1;
        } else if p <= 0.5 {
            c.hard += 1;
        } else if p < 1.0 {
            c.medium += 1;
        } else {
            c.easy += 1;
        }
    }
    Ok(c)
}

/// Evaluation protocol.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EvalSpec {
    /// Rollouts per prompt.
    pub rollouts: usize,
    pub ks: Vec<usize>,
    pub resamples: usize,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            rollouts: 256,
            ks: (0..8).map(|i| 1usize << i).collect(),
            resamples: 1000,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rollouts == 0 {
            return Err(invalid("eval.rollouts", "must be positive"));
        }
        if self.ks.is_empty() {
            return Err(invalid("eval.ks", "must be nonempty"));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.rollouts) {
            return Err(invalid(
                "eval.ks",
                alloc::format!("k = {k} must lie in 1..={}", self.rollouts),
            ));
        }
        if self.resamples == 0 {
            return Err(invalid("eval.resamples", "must be positive"));
        }
        Ok(())
    }
}

/// Population-level evaluation summary.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEval {
    /// `(k, d_0-weighted mean pass@k)` in the order of `EvalSpec::ks`.
    pub pass_at_k: Vec<(usize, f64)>,
    /// Buckets of the empirical pass rate over `R` rollouts.
    pub buckets: DifficultyCounts,
    /// `d_0` mass of prompts whose exact pass rate is below `1/R`.
    pub unsolved_fraction: f64,
    pub mean_exact_pass_rate: f64,
}

impl PopulationEval {
    pub fn pass_at(&self, k: usize) -> Option<f64> {
        self.pass_at_k.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

/// Draws `R` rollouts per prompt and computes the metrics of `spec`.
///
/// Prompt `i` samples from stream `(seed, i, 0)` and bootstraps pass@k for
/// the `j`-th k from stream `(seed, i, 1 + j)`.
pub fn evaluate_population(population: &PromptPopulation, spec: &EvalSpec, seed: u64) -> Result<PopulationEval> {
    spec.validate()?;
    let mut sums = alloc::vec![0.0; spec.ks.len()];
    let mut empirical = Vec::with_capacity(population.len());
    let mut unsolved = 0.0;
    let threshold = 1.0 / spec.rollouts as f64;
    for (i, (prompt, &d0)) in population.prompts().iter().zip(population.base_weights()).enumerate() {
        let i = i as u64;
        let samples = EvalSampleSet::draw(prompt, spec.rollouts, &mut rng::stream(seed, i, 0));
        for (j, (&k, sum)) in spec.ks.iter().zip(&mut sums).enumerate() {
            let mut boot = rng::stream(seed, i, 1 + j as u64);
            *sum += d0 * pass_at_k(&samples, k, spec.resamples, &mut boot)?;
        }
        empirical.push(samples.mean_reward());
        if prompt.exact_pass_rate() < threshold {
            unsolved += d0;
        }
    }
    Ok(PopulationEval {
        pass_at_k: spec.ks.iter().copied().zip(sums).collect(),
        buckets: difficulty_histogram(&empirical)?,
        unsolved_fraction: unsolved,
        mean_exact_pass_rate: population.mean_exact_pass_rate(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(rewards: &[bool]) -> EvalSampleSet {
        let answers = rewards.iter().map(|&r| usize::from(!r)).collect();
        EvalSampleSet::new(0, rewards.to_vec(), answers).unwrap()
    }

    #[test]
    fn pass_at_one_is_raw_mean() {
        let s = set(&[true, false, false, false]);
        assert_eq!(pass_at_k(&s, 1, 10, &mut rng::seeded(0)).unwrap(), 0.25);
    }

    #[test]
    fn all_correct_passes_every_k() {
        let s = set(&[true; 16]);
        for k in [1, 2, 4, 16] {
            assert_eq!(pass_at_k(&s, k, 100, &mut rng::seeded(1)).unwrap(), 1.0);
        }
    }

    #[test]
    fn k_beyond_samples_is_an_error() {
        let s = set(&[true, false]);
        assert_eq!(
            pass_at_k(&s, 3, 10, &mut rng::seeded(0)),
            Err(Error::KTooLarge { k: 3, available: 2 })
        );
    }

    #[test]
    fn bootstrap_matches_with_replacement_formula() {
        let mut rewards = vec![false; 100];
        rewards[..30].iter_mut().for_each(|r| *r = true);
        let s = set(&rewards);
        let est = pass_at_k(&s, 4, 100_000, &mut rng::seeded(2)).unwrap();
        assert!((est - pass_at_k_iid(0.3, 4)).abs() < 0.01);
    }

    #[test]
    fn exact_estimator_examples() {
        assert_eq!(pass_at_k_exact(0, 10, 3).unwrap(), 0.0);
        assert_eq!(pass_at_k_exact(10, 10, 3).unwrap(), 1.0);
        assert!((pass_at_k_exact(1, 4, 2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pass_at_k_exact(3, 4, 2).unwrap(), 1.0);
    }

    #[test]
    fn majority_examples() {
        let s = EvalSampleSet::new(0, vec![true; 3], vec![2, 2, 2]).unwrap();
        assert!(majority_at_k(&s, 3, &[2]).unwrap());
        let s = EvalSampleSet::new(0, vec![false, false, true], vec![0, 0, 1]).unwrap();
        assert!(!majority_at_k(&s, 3, &[1]).unwrap());
        let tie = EvalSampleSet::new(0, vec![false, true], vec![3, 1]).unwrap();
        assert!(majority_at_k(&tie, 2, &[1]).unwrap());
        assert!(!majority_at_k(&tie, 2, &[3]).unwrap());
    }

    #[test]
    fn buckets() {
        let c = difficulty_histogram(&[0.0, 0.3, 0.8, 1.0]).unwrap();
        assert_eq!((c.unsolvable, c.hard, c.medium, c.easy), (1, 1, 1, 1));
        assert_eq!(difficulty_histogram(&[0.5]).unwrap().hard, 1);
        assert_eq!(difficulty_histogram(&[]).unwrap().total(), 0);
        assert!(difficulty_histogram(&[1.5]).is_err());
    }

    #[test]
    fn spec_validation() {
        EvalSpec::default().validate().unwrap();
        assert_eq!(EvalSpec::default().ks.last(), Some(&128));
        let bad = EvalSpec {
            ks: vec![1, 512],
            ..EvalSpec::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(Error::InvalidParameter { name: "eval.ks", .. })
        ));
    }
}
