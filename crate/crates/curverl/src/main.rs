use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use curverl::config::ExperimentConfig;
use curverl::formats;
use curverl::run::{self, TrainOptions};
use curverl_core::checks::{run_suites, suite_names};
use curverl_core::eval::{evaluate_population, EvalSpec};
use curverl_core::refdist::Uniform;
use curverl_core::weighting::{scheme_label, weight_table};
use curverl_core::{Reference, WeightScheme};

/// Prompt-reweighted policy-gradient experiments on synthetic bandits.
#[derive(Parser)]
#[command(name = "curverl", version)]
struct Cli {
    /// Overrides the training seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir` of the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment config or manifest (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one scheme and write logs, reference dumps and the manifest.
    Train {
        /// Config path; same as --config.
        config_path: Option<PathBuf>,
        /// Also write per_prompt.csv.
        #[arg(long)]
        per_prompt: bool,
        /// Skip the final pass@k evaluation.
        #[arg(long)]
        no_eval: bool,
    },
    /// Run a verification suite: theorem1, corollary1, prop1, prop2, prop4,
    /// aggressiveness or all.
    Verify { suite: String },
    /// Write the weight table of a scheme over the rollout grid.
    Weights {
        /// e.g. reinforce, grpo, maxrl, entropic:2, curve, integrated-convex:0.5
        scheme: String,
        /// `uniform` or a refdist.csv dump.
        #[arg(long)]
        reference: Option<String>,
        /// Snapshot step inside the dump (default: last).
        #[arg(long)]
        step: Option<u64>,
        /// Rollouts per prompt, i.e. the grid size.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train several schemes on the same population and seed.
    Compare {
        /// Config path; same as --config.
        config_path: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        schemes: Vec<String>,
        #[arg(long)]
        per_prompt: bool,
    },
    /// Evaluate pass@k and difficulty buckets of a population JSON.
    Passk {
        #[arg(long)]
        population: PathBuf,
        #[arg(long, default_value = "population")]
        label: String,
        #[arg(long)]
        rollouts: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long)]
        resamples: Option<usize>,
    },
}

enum Failure {
    /// Bad arguments or configuration: exit 2.
    Usage(anyhow::Error),
    /// Verification checks failed: exit 1.
    Checks,
    /// Anything else going wrong at run time: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Usage(e.into())
}

fn load_config(cli: &Cli, positional: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let path = positional
        .or(cli.config.as_deref())
        .ok_or_else(|| usage(anyhow!("a config file is required (--config PATH)")))?;
    let mut config = ExperimentConfig::load(path).map_err(usage)?;
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn parse_scheme(s: &str) -> Result<WeightScheme, Failure> {
    let scheme: WeightScheme = s.parse().map_err(usage)?;
    scheme.validate().map_err(usage)?;
    Ok(scheme)
}

fn cmd_verify(cli: &Cli, suite: &str) -> Result<(), Failure> {
    if suite != "all" && suite.parse::<curverl_core::checks::Suite>().is_err() {
        return Err(usage(anyhow!(
            "unknown suite `{suite}`; available: {}",
            suite_names().join(", ")
        )));
    }
    let results = run_suites(suite, cli.seed.unwrap_or(0)).context("running checks")?;
    let mut stdout = std::io::stdout().lock();
    for r in &results {
        writeln!(stdout, "{r}").context("writing results")?;
    }
    let passed = results.iter().filter(|r| r.passed).count();
    writeln!(stdout, "{passed}/{} checks passed", results.len()).context("writing results")?;
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_weights(
    cli: &Cli,
    scheme: &str,
    reference: Option<&str>,
    step: Option<u64>,
    n: Option<usize>,
) -> Result<(), Failure> {
    let scheme = parse_scheme(scheme)?;
    let reference = match reference {
        None if scheme.uses_reference() => {
            return Err(usage(anyhow!(
                "scheme `{scheme}` needs --reference (`uniform` or a refdist.csv dump)"
            )))
        }
        None | Some("uniform") => Reference::Uniform,
        Some(path) => {
            let (snapshot, h) = formats::read_refdist(Path::new(path), step).map_err(usage)?;
            log::info!("using reference snapshot of step {snapshot} from {path}");
            Reference::Histogram(h)
        }
    };
    let n = match (&reference, n) {
        (Reference::Histogram(h), Some(n)) if n != h.n_rollouts() => {
            return Err(usage(anyhow!(
                "--n {n} does not match the {}-rollout grid of the reference",
                h.n_rollouts()
            )))
        }
        (Reference::Histogram(h), _) => h.n_rollouts(),
        (Reference::Uniform, n) => n.unwrap_or(8),
    };
    let rows = match &reference {
        Reference::Uniform => weight_table(&scheme, &Uniform, n),
        r => weight_table(&scheme, r, n),
    }
    .map_err(usage)?;
    let out = formats::output(cli.out.as_deref(), "weights.csv")?;
    formats::write_weights(out, &scheme_label(&scheme), &rows)?;
    Ok(())
}

fn cmd_passk(
    cli: &Cli,
    population: &Path,
    label: &str,
    rollouts: Option<usize>,
    ks: Option<Vec<usize>>,
    resamples: Option<usize>,
) -> Result<(), Failure> {
    let mut spec = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(usage)?.eval,
        None => EvalSpec::default(),
    };
    if let Some(r) = rollouts {
        spec.rollouts = r;
    }
    if let Some(ks) = ks {
        spec.ks = ks;
    }
    if let Some(r) = resamples {
        spec.resamples = r;
    }
    spec.validate().map_err(usage)?;
    let pop = formats::read_population(population).map_err(usage)?;
    let eval = evaluate_population(&pop, &spec, run::eval_seed(cli.seed.unwrap_or(0))).context("evaluating")?;
    let dir = cli.out.as_deref();
    formats::write_pass_at_k(formats::output(dir, "passk.csv")?, label, &eval)?;
    if dir.is_none() {
        println!();
    }
    formats::write_buckets(formats::output(dir, "buckets.csv")?, label, &eval.buckets)?;
    if dir.is_none() {
        println!();
    }
    formats::write_eval_summary(formats::output(dir, "eval_summary.csv")?, label, &eval)?;
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Train {
            config_path,
            per_prompt,
            no_eval,
        } => {
            let config = load_config(cli, config_path.as_deref())?;
            let summary = run::train(
                &config,
                TrainOptions {
                    per_prompt: *per_prompt,
                    skip_eval: *no_eval,
                },
            )?;
            println!(
                "{}: mean exact pass rate {:.4} -> {:.4} over {} steps ({})",
                scheme_label(&summary.scheme),
                summary.initial_mean_pass_rate,
                summary.final_mean_pass_rate,
                summary.steps,
                summary.output_dir.display()
            );
            Ok(())
        }
        Command::Verify { suite } => cmd_verify(cli, suite),
        Command::Weights {
            scheme,
            reference,
            step,
            n,
        } => cmd_weights(cli, scheme, reference.as_deref(), *step, *n),
        Command::Compare {
            config_path,
            schemes,
            per_prompt,
        } => {
            let config = load_config(cli, config_path.as_deref())?;
            let schemes = schemes.iter().map(|s| parse_scheme(s)).collect::<Result<Vec<_>, _>>()?;
            if schemes.len() < 2 {
                return Err(usage(anyhow!("compare needs at least two schemes")));
            }
            let summaries = run::compare(
                &config,
                &schemes,
                TrainOptions {
                    per_prompt: *per_prompt,
                    skip_eval: false,
                },
            )?;
            for s in summaries {
                println!(
                    "{}: final mean exact pass rate {:.4} ({})",
                    scheme_label(&s.scheme),
                    s.final_mean_pass_rate,
                    s.output_dir.display()
                );
            }
            Ok(())
        }
        Command::Passk {
            population,
            label,
            rollouts,
            ks,
            resamples,
        } => cmd_passk(cli, population, label, *rollouts, ks.clone(), *resamples),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CURVERL_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
