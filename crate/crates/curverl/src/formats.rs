//! File formats: population JSON and the CSV artifacts.
//!
//! Every float is written as `{:.16e}` (17 significant digits), which reads
//! back to the same `f64`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use curverl_core::eval::{DifficultyCounts, PopulationEval};
use curverl_core::refdist::rollout_grid;
use curverl_core::trainer::StepLog;
use curverl_core::weighting::WeightRow;
use curverl_core::{PromptInstance, PromptPopulation, Reference, ReferenceDistribution};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

/// Canonical float text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn raw(x: f64) -> Box<RawValue> {
    RawValue::from_string(fmt_f64(x)).expect("formatted float is valid JSON")
}

#[derive(Serialize)]
struct PromptOut {
    id: usize,
    logits: Vec<Box<RawValue>>,
    correct: Vec<usize>,
}

#[derive(Serialize)]
struct PopulationOut {
    m: usize,
    prompts: Vec<PromptOut>,
    base_weights: Vec<Box<RawValue>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptIn {
    id: usize,
    logits: Vec<f64>,
    correct: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PopulationIn {
    m: usize,
    prompts: Vec<PromptIn>,
    base_weights: Vec<f64>,
}

pub fn population_to_json(population: &PromptPopulation) -> String {
    let doc = PopulationOut {
        m: population.num_responses(),
        prompts: population
            .prompts()
            .iter()
            .map(|p| PromptOut {
                id: p.id(),
                logits: p.logits().iter().map(|&x| raw(x)).collect(),
                correct: p.correct_set().to_vec(),
            })
            .collect(),
        base_weights: population.base_weights().iter().map(|&x| raw(x)).collect(),
    };
    let mut text = serde_json::to_string(&doc).expect("population serializes");
    text.push('\n');
    text
}

pub fn population_from_json(text: &str) -> Result<PromptPopulation> {
    let doc: PopulationIn = serde_json::from_str(text).context("malformed population JSON")?;
    let prompts = doc
        .prompts
        .into_iter()
        .map(|p| {
            if p.logits.len() != doc.m {
                bail!("prompt {} has {} logits, expected m = {}", p.id, p.logits.len(), doc.m);
            }
            Ok(PromptInstance::new(p.id, p.logits, p.correct)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PromptPopulation::new(prompts, doc.base_weights)?)
}

pub fn write_population(population: &PromptPopulation, path: &Path) -> Result<()> {
    fs::write(path, population_to_json(population)).with_context(|| format!("writing {}", path.display()))
}

pub fn read_population(path: &Path) -> Result<PromptPopulation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    population_from_json(&text).with_context(|| format!("in {}", path.display()))
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(csv::Writer::from_writer(file))
}

/// Streaming writers for the per-step training artifacts.
pub struct TrainLogWriters {
    scheme: String,
    n_rollouts: usize,
    train: csv::Writer<File>,
    refdist: csv::Writer<File>,
    multiplier: csv::Writer<File>,
    per_prompt: Option<csv::Writer<File>>,
}

impl TrainLogWriters {
    pub fn create(dir: &Path, scheme: String, n_rollouts: usize, per_prompt: bool) -> Result<Self> {
        let mut train = create(&dir.join("train_log.csv"))?;
        train.write_record([
            "step",
            "scheme",
            "mean_exact_pass_rate",
            "active_fraction",
            "z_theta",
            "window_size",
            "grad_norm",
        ])?;
        let mut refdist = create(&dir.join("refdist.csv"))?;
        refdist.write_record(["step", "grid_point", "mass", "cdf", "density"])?;
        let mut multiplier = create(&dir.join("multiplier.csv"))?;
        multiplier.write_record(["step", "reference", "grid_point", "multiplier"])?;
        let per_prompt = if per_prompt {
            let mut w = create(&dir.join("per_prompt.csv"))?;
            w.write_record([
                "step",
                "prompt_id",
                "p_hat",
                "exact_pass_rate",
                "weight",
                "exact_weight",
                "grad_norm",
            ])?;
            Some(w)
        } else {
            None
        };
        Ok(Self {
            scheme,
            n_rollouts,
            train,
            refdist,
            multiplier,
            per_prompt,
        })
    }

    pub fn write(&mut self, log: &StepLog) -> Result<()> {
        let step = log.step.to_string();
        self.train.write_record([
            step.as_str(),
            &self.scheme,
            &fmt_f64(log.mean_exact_pass_rate),
            &fmt_f64(log.active_fraction),
            &fmt_f64(log.z_theta),
            &log.window_size.to_string(),
            &fmt_f64(log.grad_norm),
        ])?;
        if let Reference::Histogram(h) = &log.reference {
            write_refdist_rows(&mut self.refdist, log.step, h)?;
        }
        let label = match (&log.reference, log.cold_start) {
            (Reference::Histogram(_), _) => "window",
            (Reference::Uniform, true) => "cold_start",
            (Reference::Uniform, false) => "uniform",
        };
        for (p, r) in rollout_grid(self.n_rollouts)
            .into_iter()
            .zip(log.relative_multipliers(self.n_rollouts))
        {
            self.multiplier
                .write_record([step.as_str(), label, &fmt_f64(p), &fmt_f64(r)])?;
        }
        if let Some(w) = &mut self.per_prompt {
            for p in &log.per_prompt {
                w.write_record([
                    step.as_str(),
                    &p.prompt_id.to_string(),
                    &fmt_f64(p.p_hat),
                    &fmt_f64(p.exact_pass_rate),
                    &fmt_f64(p.weight),
                    &p.exact_weight.map(fmt_f64).unwrap_or_default(),
                    &fmt_f64(p.grad_norm),
                ])?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.train.flush()?;
        self.refdist.flush()?;
        self.multiplier.flush()?;
        if let Some(w) = &mut self.per_prompt {
            w.flush()?;
        }
        Ok(())
    }
}

fn write_refdist_rows<W: Write>(w: &mut csv::Writer<W>, step: u64, h: &ReferenceDistribution) -> Result<()> {
    let step = step.to_string();
    for (((p, m), c), d) in h
        .grid()
        .into_iter()
        .zip(h.bin_mass())
        .zip(h.cdf_values())
        .zip(h.density_values())
    {
        w.write_record([step.as_str(), &fmt_f64(p), &fmt_f64(*m), &fmt_f64(*c), &fmt_f64(*d)])?;
    }
    Ok(())
}

/// Writes a single reference snapshot in the `refdist.csv` layout.
pub fn write_refdist(path: &Path, step: u64, h: &ReferenceDistribution) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["step", "grid_point", "mass", "cdf", "density"])?;
    write_refdist_rows(&mut w, step, h)?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct RefdistRow {
    step: u64,
    grid_point: f64,
    mass: f64,
    cdf: f64,
    density: f64,
}

/// Reads the snapshot for `step` (default: the last one) from a
/// `refdist.csv` dump. The floored CDF and density are used as stored.
pub fn read_refdist(path: &Path, step: Option<u64>) -> Result<(u64, ReferenceDistribution)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut by_step: BTreeMap<u64, Vec<RefdistRow>> = BTreeMap::new();
    for row in reader.deserialize() {
        let row: RefdistRow = row.with_context(|| format!("malformed row in {}", path.display()))?;
        by_step.entry(row.step).or_default().push(row);
    }
    let (step, rows) = match step {
        Some(s) => (
            s,
            by_step
                .remove(&s)
                .with_context(|| format!("no snapshot for step {s} in {}", path.display()))?,
        ),
        None => by_step
            .pop_last()
            .with_context(|| format!("{} holds no reference snapshot", path.display()))?,
    };
    let n = rows.len() + 1;
    for (k, row) in rows.iter().enumerate() {
        let expected = (k + 1) as f64 / n as f64;
        if (row.grid_point - expected).abs() > 1e-12 {
            bail!(
                "step {step}: grid point {} where {expected} was expected",
                row.grid_point
            );
        }
    }
    let reference = ReferenceDistribution::from_parts(
        n,
        rows.iter().map(|r| r.mass).collect(),
        rows.iter().map(|r| r.cdf).collect(),
        rows.iter().map(|r| r.density).collect(),
    )?;
    Ok((step, reference))
}

pub fn write_weights<W: Write>(out: W, scheme: &str, rows: &[WeightRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "p", "weight", "normalized_weight"])?;
    for r in rows {
        w.write_record([scheme, &fmt_f64(r.p), &fmt_f64(r.weight), &fmt_f64(r.normalized)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pass_at_k<W: Write>(out: W, label: &str, eval: &PopulationEval) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "k", "mean_pass_at_k"])?;
    for (k, v) in &eval.pass_at_k {
        w.write_record([label, &k.to_string(), &fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_buckets<W: Write>(out: W, label: &str, counts: &DifficultyCounts) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "bucket", "count"])?;
    for (bucket, count) in counts.buckets() {
        w.write_record([label, bucket, &count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eval_summary<W: Write>(out: W, label: &str, eval: &PopulationEval) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "mean_exact_pass_rate", "unsolved_fraction"])?;
    w.write_record([
        label,
        &fmt_f64(eval.mean_exact_pass_rate),
        &fmt_f64(eval.unsolved_fraction),
    ])?;
    w.flush()?;
    Ok(())
}

/// Opens `dir/name`, or stdout when no directory is given.
pub fn output(dir: Option<&Path>, name: &str) -> Result<Box<dyn Write>> {
    match dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            let path = d.join(name);
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            Ok(Box::new(io::BufWriter::new(file)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curverl_core::PopulationSpec;

    #[test]
    fn population_json_round_trip_is_exact() {
        let pop = PopulationSpec {
            size: 5,
            unsolvable_fraction: 0.2,
            ..PopulationSpec::default()
        }
        .generate()
        .unwrap();
        let text = population_to_json(&pop);
        let back = population_from_json(&text).unwrap();
        assert_eq!(back, pop);
        assert_eq!(population_to_json(&back), text);
    }

    #[test]
    fn population_json_rejects_bad_documents() {
        assert!(population_from_json(
            r#"{"m": 2, "prompts": [{"id": 0, "logits": [0.0], "correct": []}], "base_weights": [1.0]}"#
        )
        .is_err());
        assert!(population_from_json(
            r#"{"m": 2, "prompts": [{"id": 0, "logits": [0.0, 1.0], "correct": [5]}], "base_weights": [1.0]}"#
        )
        .is_err());
        assert!(population_from_json(
            r#"{"m": 2, "prompts": [{"id": 0, "logits": [0.0, 1.0], "correct": [0]}], "base_weights": [0.5]}"#
        )
        .is_err());
        let ok = population_from_json(r#"{"m": 2, "prompts": [{"id": 0, "logits": [1.0986122886681098, 0.0], "correct": [0]}], "base_weights": [1.0]}"#).unwrap();
        assert!((ok.prompt(0).exact_pass_rate() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn refdist_snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("refdist.csv");
        let h = ReferenceDistribution::from_rates(&[0.25, 0.5, 0.5, 0.625], None, 8).unwrap();
        write_refdist(&path, 3, &h).unwrap();
        let (step, back) = read_refdist(&path, None).unwrap();
        assert_eq!(step, 3);
        assert_eq!(back.cdf_values(), h.cdf_values());
        assert_eq!(back.density_values(), h.density_values());
        assert_eq!(back.bin_mass(), h.bin_mass());
        assert!(read_refdist(&path, Some(4)).is_err());
    }

    #[test]
    fn float_text_is_seventeen_digits() {
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }
}
