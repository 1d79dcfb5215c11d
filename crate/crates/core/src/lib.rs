//! Prompt-reweighted policy gradients on synthetic verifiable-reward bandits.
//!
//! Every prompt carries its own softmax policy over a small set of discrete
//! responses, so pass rates and their gradients are available in closed form.
//! On top of that ground truth the crate provides:
//!
//! - [`passrate`]: prompts, populations, rollouts and score vectors.
//! - [`weighting`]: the prompt-weight schemes (REINFORCE, GRPO, MaxRL,
//!   entropic risk, CurveRL and two integrated variants), distortion
//!   utilities and the prior induced by a pointwise weight.
//! - [`refdist`]: the sliding window of active pass rates, histogram
//!   references on the rollout grid and the 1-D Wasserstein distance.
//! - [`trainer`]: the reweighted training loop with group baseline.
//! - [`calibration`]: monotone recalibration of pass rates and the gradient
//!   invariance check.
//! - [`eval`]: bootstrap pass@k, majority voting and difficulty buckets.
//! - [`checks`]: the verification suites exposed by the `curverl verify`
//!   command.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod calibration;
pub mod checks;
pub mod eval;
pub mod passrate;
pub mod quadrature;
pub mod refdist;
pub mod rng;
pub mod trainer;
pub mod weighting;

mod error;

pub use error::{Error, Result};
pub use passrate::{PopulationSpec, PromptInstance, PromptPopulation, RolloutBatch};
pub use refdist::{Reference, ReferenceCurve, ReferenceDistribution, SlidingWindow};
pub use trainer::{StepLog, TrainConfig, Trainer};
pub use weighting::{Distortion, WeightScheme};
