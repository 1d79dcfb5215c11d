//! The reweighted policy-gradient loop.
//!
//! One step:
//!
//! 1. estimate the reference from the lagged window (uniform until the
//!    window holds `min_window_count` rates);
//! 2. draw `batch_size` prompts from `d_0` with replacement;
//! 3. sample `N` rollouts per prompt and compute `p_hat`;
//! 4. for active prompts (`0 < p_hat < 1`) evaluate the weight at `p_hat`
//!    and form `(1/N) sum_i w (r_i - p_hat) grad log pi(y_i)`;
//! 5. average over the batch and take a plain gradient-ascent step;
//! 6. append the active `p_hat` to the window and evict entries older than
//!    `t0` steps.
//!
//! Randomness for the batch and for every slot comes from its own
//! seed-derived stream and per-prompt contributions are reduced in prompt
//! order, so a run is a pure function of its config and population.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::passrate::{PromptInstance, PromptPopulation, RolloutBatch};
use crate::refdist::{Reference, ReferenceDistribution, SlidingWindow};
use crate::rng;
use crate::weighting::WeightScheme;

/// Where Curve-family schemes take their reference from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ReferenceMode {
    /// Histogram of the sliding window, uniform during cold start.
    #[default]
    Window,
    /// Always the exact uniform reference.
    Uniform,
}

/// Pass rate at which the weight is evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightArgument {
    /// The group estimate `p_hat`.
    #[default]
    Empirical,
    /// The analytic pass rate; a diagnostic for the bias of `w(p_hat)`.
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub n_rollouts: usize,
    pub t0: u64,
    pub learning_rate: f64,
    pub steps: u64,
    pub scheme: WeightScheme,
    pub seed: u64,
    /// Active rates the window must hold before its histogram is used.
    pub min_window_count: usize,
    pub reference_mode: ReferenceMode,
    pub weight_argument: WeightArgument,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            n_rollouts: 8,
            t0: 10,
            learning_rate: 0.1,
            steps: 200,
            scheme: WeightScheme::Reinforce,
            seed: 0,
            min_window_count: 64,
            reference_mode: ReferenceMode::Window,
            weight_argument: WeightArgument::Empirical,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("train.batch_size", "must be positive"));
        }
        if self.n_rollouts < 2 {
            return Err(invalid("train.n_rollouts", "must be at least 2"));
        }
        if self.t0 == 0 {
            return Err(invalid("train.t0", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("train.learning_rate", "must be positive and finite"));
        }
        if self.steps == 0 {
            return Err(invalid("train.steps", "must be positive"));
        }
        self.scheme.validate().map_err(|e| match e {
            Error::InvalidParameter { name, reason } => invalid(
                if name == "eta" {
                    "train.scheme.eta"
                } else {
                    "train.scheme.lambda"
                },
                reason,
            ),
            other => other,
        })
    }
}

/// Per-prompt record within a step.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptLog {
    pub prompt_id: usize,
    pub p_hat: f64,
    /// Analytic pass rate before the update.
    pub exact_pass_rate: f64,
    /// Weight used for the update; 0 for inactive prompts.
    pub weight: f64,
    /// Weight the scheme assigns at the exact pass rate, when defined.
    pub exact_weight: Option<f64>,
    /// Norm of this prompt's gradient estimate before batch averaging.
    pub grad_norm: f64,
}

/// Summary of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub per_prompt: Vec<PromptLog>,
    /// `E_{d_0}[p]` after the update.
    pub mean_exact_pass_rate: f64,
    pub active_count: usize,
    pub active_fraction: f64,
    /// Mean weight over the active prompts of the batch (0 if none).
    pub z_theta: f64,
    /// Window length after this step's append and eviction.
    pub window_size: usize,
    /// Norm of the batch-averaged gradient.
    pub grad_norm: f64,
    pub cold_start: bool,
    /// Reference the weights were evaluated against.
    pub reference: Reference,
}

impl StepLog {
    /// `p f_ref(p) / F_ref(p)` on the rollout grid: the log-distortion
    /// weight relative to MaxRL. All ones under the uniform reference.
    pub fn relative_multipliers(&self, n_rollouts: usize) -> Vec<f64> {
        match &self.reference {
            Reference::Uniform => vec![1.0; n_rollouts - 1],
            Reference::Histogram(h) => h.log_relative_multipliers(),
        }
    }
}

/// `(1/N) sum_i weight (r_i - p_hat) grad log pi(y_i)`.
pub fn per_prompt_gradient(prompt: &PromptInstance, batch: &RolloutBatch, weight: f64) -> Vec<f64> {
    let m = prompt.num_responses();
    let mut grad = vec![0.0; m];
    if batch.is_empty() {
        return grad;
    }
    let p_hat = batch.empirical_pass_rate;
    let pi = prompt.policy();
    // score(y) = e_y - pi, so the sum splits into a one-hot part and a
    // policy part scaled by sum_i (r_i - p_hat).
    let mut coef_sum = 0.0;
    for (&r, &y) in batch.rewards.iter().zip(&batch.responses) {
        let c = f64::from(u8::from(r)) - p_hat;
        grad[y] += c;
        coef_sum += c;
    }
    let scale = weight / batch.len() as f64;
    for (g, p) in grad.iter_mut().zip(&pi) {
        *g = scale * (*g - coef_sum * p);
    }
    grad
}

/// Effective prompt distribution `d_0 w / Z` and its normalizer `Z`.
pub fn effective_distribution(weights: &[f64], base_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if weights.len() != base_weights.len() {
        return Err(invalid("weights", "need one weight per prompt"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(invalid("weights", "must be finite and nonnegative"));
    }
    let z: f64 = weights.iter().zip(base_weights).map(|(w, b)| w * b).sum();
    if z <= 0.0 {
        return Err(Error::UndefinedDistribution);
    }
    Ok((weights.iter().zip(base_weights).map(|(w, b)| b * w / z).collect(), z))
}

/// Analytic population gradient `d_0(x) w(x) grad p(x)` per prompt.
///
/// `weight` receives the prompt index and its exact pass rate; prompts whose
/// pass rate lies outside (0, 1) have zero gradient and are skipped.
pub fn population_gradient<F>(population: &PromptPopulation, mut weight: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    population
        .prompts()
        .iter()
        .zip(population.base_weights())
        .enumerate()
        .map(|(i, (prompt, &d0))| {
            let p = prompt.exact_pass_rate();
            let mut g = prompt.exact_pass_rate_gradient();
            if p > 0.0 && p < 1.0 {
                let scale = d0 * weight(i, p)?;
                g.iter_mut().for_each(|v| *v *= scale);
            } else {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            Ok(g)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Training state: policy, window and step counter.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    population: PromptPopulation,
    window: SlidingWindow,
    step: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, population: PromptPopulation) -> Result<Self> {
        config.validate()?;
        let window = SlidingWindow::new(config.t0, config.batch_size)?;
        Ok(Self {
            config,
            population,
            window,
            step: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn population(&self) -> &PromptPopulation {
        &self.population
    }

    pub fn window(&self) -> &SlidingWindow {
        &self.window
    }

    /// Index of the next step.
    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn into_population(self) -> PromptPopulation {
        self.population
    }

    /// Reference for the next step and whether it is the cold-start fallback.
    pub fn current_reference(&self) -> Result<(Reference, bool)> {
        if self.config.reference_mode == ReferenceMode::Uniform {
            return Ok((Reference::Uniform, false));
        }
        if self.window.len() < self.config.min_window_count.max(1) {
            return Ok((Reference::Uniform, true));
        }
        let h = ReferenceDistribution::estimate(&self.window, self.config.n_rollouts)?;
        Ok((Reference::Histogram(h), false))
    }

    pub fn step(&mut self) -> Result<StepLog> {
        let cfg = &self.config;
        let step = self.step;
        let (reference, cold_start) = self.current_reference()?;
        // Diagnostic lookups at the exact rate go to a copy so the snapping
        // counter of `reference` only sees the weights used for training.
        let diagnostic = reference.clone();

        let mut batch_rng = rng::stream(cfg.seed, step, rng::BATCH_SLOT);
        let indices = self.population.sample_indices(cfg.batch_size, &mut batch_rng);

        let mut per_prompt = Vec::with_capacity(indices.len());
        let mut accumulated: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut active_rates = Vec::new();
        let mut weight_sum = 0.0;
        let inv_batch = 1.0 / cfg.batch_size as f64;

        for (slot, &idx) in indices.iter().enumerate() {
            let prompt = self.population.prompt(idx);
            let mut slot_rng = rng::stream(cfg.seed, step, slot as u64);
            let batch = prompt.sample_rollouts(cfg.n_rollouts, &mut slot_rng);
            let p_hat = batch.empirical_pass_rate;
            let exact = prompt.exact_pass_rate();
            let exact_weight = cfg.scheme.weight(exact, &diagnostic).ok();

            let mut log = PromptLog {
                prompt_id: prompt.id(),
                p_hat,
                exact_pass_rate: exact,
                weight: 0.0,
                exact_weight,
                grad_norm: 0.0,
            };
            if batch.is_active() {
                let argument = match cfg.weight_argument {
                    WeightArgument::Empirical => p_hat,
                    WeightArgument::Exact => exact,
                };
                let weight = cfg.scheme.weight(argument, &reference)?;
                let grad = per_prompt_gradient(prompt, &batch, weight);
                log.weight = weight;
                log.grad_norm = norm(&grad);
                weight_sum += weight;
                active_rates.push(p_hat);
                let acc = accumulated.entry(idx).or_insert_with(|| vec![0.0; grad.len()]);
                for (a, g) in acc.iter_mut().zip(&grad) {
                    *a += inv_batch * g;
                }
            }
            per_prompt.push(log);
        }

        let mut squared = 0.0;
        for (&idx, grad) in &accumulated {
            squared += grad.iter().map(|g| g * g).sum::<f64>();
            self.population.prompt_mut(idx).apply_update(grad, cfg.learning_rate);
        }
        self.window.push_batch(step, &active_rates)?;
        self.step += 1;

        let active_count = active_rates.len();
        Ok(StepLog {
            step,
            per_prompt,
            mean_exact_pass_rate: self.population.mean_exact_pass_rate(),
            active_count,
            active_fraction: active_count as f64 / cfg.batch_size as f64,
            z_theta: if active_count == 0 {
                0.0
            } else {
                weight_sum / active_count as f64
            },
            window_size: self.window.len(),
            grad_norm: libm::sqrt(squared),
            cold_start,
            reference,
        })
    }

    /// Runs the remaining configured steps.
    pub fn run(&mut self) -> Result<Vec<StepLog>> {
        let mut logs = Vec::new();
        while self.step < self.config.steps {
            logs.push(self.step()?);
        }
        Ok(logs)
    }
}
