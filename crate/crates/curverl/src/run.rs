//! Run orchestration behind the `train`, `compare` and `passk` commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use curverl_core::eval::{evaluate_population, PopulationEval};
use curverl_core::trainer::WeightArgument;
use curverl_core::weighting::scheme_label;
use curverl_core::{PromptPopulation, Trainer, WeightScheme};
use log::{debug, info, warn};

use crate::config::ExperimentConfig;
use crate::formats::{self, fmt_f64, TrainLogWriters};

/// Keeps evaluation streams apart from the training streams of the same seed.
const EVAL_SEED_SALT: u64 = 0xE7A1_5EED_0000_0000;

pub fn eval_seed(train_seed: u64) -> u64 {
    train_seed ^ EVAL_SEED_SALT
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    pub per_prompt: bool,
    pub skip_eval: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub scheme: WeightScheme,
    pub steps: u64,
    pub initial_mean_pass_rate: f64,
    pub final_mean_pass_rate: f64,
    pub final_population: PromptPopulation,
    pub eval: Option<PopulationEval>,
}

/// Trains from `config`, writing every artifact into `config.output_dir`.
pub fn train(config: &ExperimentConfig, options: TrainOptions) -> Result<RunSummary> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("manifest.json"), config.to_json())
        .with_context(|| format!("writing manifest in {}", dir.display()))?;

    let population = config.population.generate()?;
    formats::write_population(&population, &dir.join("population.json"))?;
    let initial = population.mean_exact_pass_rate();

    let label = scheme_label(&config.train.scheme);
    let mut writers = TrainLogWriters::create(dir, label.clone(), config.train.n_rollouts, options.per_prompt)?;
    let mut trainer = Trainer::new(config.train.clone(), population)?;
    info!(
        "training {label} for {} steps into {}",
        config.train.steps,
        dir.display()
    );
    let mut was_cold = false;
    while trainer.current_step() < config.train.steps {
        let log = trainer.step()?;
        if log.cold_start && !was_cold {
            info!(
                "step {}: window below {} rates, using the uniform reference",
                log.step, config.train.min_window_count
            );
        }
        if was_cold && !log.cold_start {
            info!("step {}: switching to the window reference", log.step);
        }
        was_cold = log.cold_start;
        if let Some(h) = log.reference.histogram() {
            let off = h.off_grid_queries();
            if off > 0 && config.train.weight_argument == WeightArgument::Exact {
                debug!(
                    "step {}: {off} exact-rate reference queries snapped to the grid",
                    log.step
                );
            } else if off > 0 {
                warn!("step {}: {off} off-grid reference queries were snapped", log.step);
            }
        }
        debug!(
            "step {} mean_p {} active {} z {}",
            log.step, log.mean_exact_pass_rate, log.active_fraction, log.z_theta
        );
        writers.write(&log)?;
    }
    writers.finish()?;

    let final_population = trainer.into_population();
    formats::write_population(&final_population, &dir.join("final_population.json"))?;
    let eval = if options.skip_eval {
        None
    } else {
        let eval = evaluate_population(&final_population, &config.eval, eval_seed(config.train.seed))?;
        formats::write_pass_at_k(formats::output(Some(dir), "passk.csv")?, &label, &eval)?;
        formats::write_buckets(formats::output(Some(dir), "buckets.csv")?, &label, &eval.buckets)?;
        formats::write_eval_summary(formats::output(Some(dir), "eval_summary.csv")?, &label, &eval)?;
        Some(eval)
    };
    Ok(RunSummary {
        output_dir: dir.clone(),
        scheme: config.train.scheme,
        steps: config.train.steps,
        initial_mean_pass_rate: initial,
        final_mean_pass_rate: final_population.mean_exact_pass_rate(),
        final_population,
        eval,
    })
}

/// Directory names for the compared runs; repeated schemes get a suffix.
pub fn run_labels(schemes: &[WeightScheme]) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    schemes
        .iter()
        .map(|s| {
            let base = scheme_label(s).replace(':', "-");
            let repeats = seen.iter().filter(|l| **l == base).count();
            seen.push(base.clone());
            if repeats == 0 {
                base
            } else {
                format!("{base}-{}", repeats + 1)
            }
        })
        .collect()
}

/// One run per scheme on the shared population and seed, then `compare.csv`.
pub fn compare(config: &ExperimentConfig, schemes: &[WeightScheme], options: TrainOptions) -> Result<Vec<RunSummary>> {
    if schemes.len() < 2 {
        bail!("compare needs at least two schemes");
    }
    config.validate()?;
    let root = &config.output_dir;
    let mut summaries = Vec::new();
    for (scheme, label) in schemes.iter().zip(run_labels(schemes)) {
        let mut run = config.clone();
        run.train.scheme = *scheme;
        run.output_dir = root.join(&label);
        summaries.push(train(&run, options)?);
    }
    write_compare(
        &root.join("compare.csv"),
        &run_labels(schemes),
        &summaries,
        &config.eval.ks,
    )?;
    Ok(summaries)
}

fn write_compare(path: &Path, labels: &[String], runs: &[RunSummary], ks: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec![
        "run".to_string(),
        "scheme".into(),
        "initial_mean_pass_rate".into(),
        "final_mean_pass_rate".into(),
        "unsolved_fraction".into(),
    ];
    header.extend(ks.iter().map(|k| format!("pass_at_{k}")));
    w.write_record(&header)?;
    for (label, run) in labels.iter().zip(runs) {
        let mut row = vec![
            label.clone(),
            scheme_label(&run.scheme),
            fmt_f64(run.initial_mean_pass_rate),
            fmt_f64(run.final_mean_pass_rate),
        ];
        match &run.eval {
            Some(e) => {
                row.push(fmt_f64(e.unsolved_fraction));
                row.extend(ks.iter().map(|&k| e.pass_at(k).map(fmt_f64).unwrap_or_default()));
            }
            None => row.extend(std::iter::repeat_n(String::new(), 1 + ks.len())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
