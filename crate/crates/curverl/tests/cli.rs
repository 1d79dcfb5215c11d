use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curverl::config::ExperimentConfig;
use curverl_core::trainer::ReferenceMode;
use curverl_core::WeightScheme;
use tempfile::TempDir;

fn curverl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curverl"))
        .args(args)
        .env_remove("CURVERL_LOG_LEVEL")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.population.size = 60;
    c.train.batch_size = 32;
    c.train.steps = 12;
    c.train.min_window_count = 16;
    c.train.learning_rate = 3.2;
    c.eval.rollouts = 32;
    c.eval.ks = vec![1, 2, 8];
    c.eval.resamples = 200;
    c.output_dir = dir.join("run");
    c
}

fn write_config(dir: &Path, config: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, config.to_json()).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_one_log_row_per_step() {
    let tmp = TempDir::new().unwrap();
    let mut config = small_config(tmp.path());
    config.train.steps = 2;
    let path = write_config(tmp.path(), &config);
    let out = curverl(&["train", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let run = tmp.path().join("run");
    assert_eq!(csv_rows(&run.join("train_log.csv")).len(), 2);
    for name in [
        "manifest.json",
        "population.json",
        "final_population.json",
        "multiplier.csv",
        "passk.csv",
        "buckets.csv",
    ] {
        assert!(run.join(name).exists(), "{name} missing");
    }
    assert!(!run.join("per_prompt.csv").exists());
}

#[test]
fn invalid_config_is_a_usage_error_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, r#"{"version": 1, "train": {"t0": 0}}"#).unwrap();
    let out = curverl(&["train", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("train.t0"), "{}", stderr(&out));

    let out = curverl(&["train", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = curverl(&["train"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_and_out_flags_override_the_config() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let path = write_config(tmp.path(), &config);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for (dir, seed) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        let out = curverl(&[
            "train",
            "--config",
            path.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            seed,
            "--no-eval",
            "--per-prompt",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in ["train_log.csv", "per_prompt.csv", "refdist.csv", "multiplier.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert_ne!(read(&a, "train_log.csv"), read(&c, "train_log.csv"));
    let manifest = ExperimentConfig::load(&a.join("manifest.json")).unwrap();
    assert_eq!(manifest.train.seed, 1);
    assert_eq!(manifest.output_dir, a);
    assert!(!a.join("passk.csv").exists());
}

#[test]
fn verify_exit_codes() {
    let out = curverl(&["verify", "theorem1"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("[PASS]")), "{text}");
    assert!(!text.contains("[FAIL]"), "{text}");

    let out = curverl(&["verify", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("prop4"), "{}", stderr(&out));
}

#[test]
fn verify_all_passes() {
    let out = curverl(&["verify", "all"]);
    assert!(out.status.success(), "{}", stdout(&out));
}

fn weights(args: &[&str]) -> Vec<(f64, f64)> {
    let out = curverl(args);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(r.headers().unwrap(), vec!["scheme", "p", "weight", "normalized_weight"]);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[1].parse().unwrap(), rec[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn weight_tables() {
    let grpo = weights(&["weights", "grpo"]);
    assert_eq!(grpo.len(), 7);
    for i in 0..7 {
        assert!((grpo[i].1 - grpo[6 - i].1).abs() < 1e-12);
    }
    let maxrl = weights(&["weights", "maxrl", "--n", "16"]);
    assert_eq!(maxrl.len(), 15);
    assert!(maxrl.windows(2).all(|w| w[1].1 < w[0].1));
    let uniform = weights(&["weights", "curve", "--reference", "uniform", "--n", "16"]);
    assert_eq!(uniform, maxrl);

    let out = curverl(&["weights", "curve"]);
    assert_eq!(out.status.code(), Some(2));
    let out = curverl(&["weights", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = curverl(&["weights", "entropic:-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn curve_weights_follow_a_dumped_reference() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let path = write_config(tmp.path(), &config);
    assert!(curverl(&["train", path.to_str().unwrap(), "--no-eval"])
        .status
        .success());
    let dump = tmp.path().join("run/refdist.csv");
    let rows = csv_rows(&dump);
    let last = rows.last().unwrap()[0].clone();
    let snapshot: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r[0] == last)
        .map(|r| (r[3].parse().unwrap(), r[4].parse().unwrap()))
        .collect();
    let table = weights(&["weights", "curve", "--reference", dump.to_str().unwrap()]);
    assert_eq!(table.len(), snapshot.len());
    for ((_, w), (cdf, density)) in table.iter().zip(&snapshot) {
        assert!((w - density / cdf).abs() <= 1e-12 * w.abs(), "{w} vs {}", density / cdf);
    }

    let first = rows[0][0].clone();
    let early = weights(&[
        "weights",
        "curve",
        "--reference",
        dump.to_str().unwrap(),
        "--step",
        &first,
    ]);
    assert_eq!(early.len(), 7);
    let out = curverl(&[
        "weights",
        "curve",
        "--reference",
        dump.to_str().unwrap(),
        "--step",
        "9999",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = curverl(&["weights", "curve", "--reference", dump.to_str().unwrap(), "--n", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_one_directory_per_scheme() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let path = write_config(tmp.path(), &config);
    let out = curverl(&[
        "compare",
        path.to_str().unwrap(),
        "--schemes",
        "reinforce,curve,maxrl,maxrl",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let root = tmp.path().join("run");
    for d in ["reinforce", "curve", "maxrl", "maxrl-2"] {
        assert!(root.join(d).join("train_log.csv").exists(), "{d}");
    }
    let rows = csv_rows(&root.join("compare.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[2][1..], rows[3][1..]);
    assert_eq!(rows[0][2], rows[1][2], "shared initial population");
    assert_eq!(
        fs::read(root.join("maxrl/train_log.csv")).unwrap(),
        fs::read(root.join("maxrl-2/train_log.csv")).unwrap()
    );

    let out = curverl(&["compare", path.to_str().unwrap(), "--schemes", "maxrl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn curve_pinned_to_uniform_matches_maxrl_artifacts() {
    let tmp = TempDir::new().unwrap();
    let mut config = small_config(tmp.path());
    config.train.reference_mode = ReferenceMode::Uniform;
    config.train.scheme = WeightScheme::Curve;
    let path = write_config(tmp.path(), &config);
    let out = curverl(&[
        "compare",
        path.to_str().unwrap(),
        "--schemes",
        "curve,maxrl",
        "--per-prompt",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let root = tmp.path().join("run");
    for f in ["train_log.csv", "per_prompt.csv", "passk.csv"] {
        let strip = |d: &str| -> Vec<Vec<String>> {
            csv_rows(&root.join(d).join(f))
                .into_iter()
                .map(|r| r.into_iter().filter(|c| c != "curve" && c != "maxrl").collect())
                .collect()
        };
        assert_eq!(strip("curve"), strip("maxrl"), "{f}");
    }
    assert_eq!(
        fs::read(root.join("curve/final_population.json")).unwrap(),
        fs::read(root.join("maxrl/final_population.json")).unwrap()
    );
}

#[test]
fn passk_on_a_saved_population() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let path = write_config(tmp.path(), &config);
    assert!(curverl(&["train", path.to_str().unwrap()]).status.success());
    let run = tmp.path().join("run");
    let pop = run.join("final_population.json");
    let eval_dir = tmp.path().join("eval");
    let out = curverl(&[
        "passk",
        "--population",
        pop.to_str().unwrap(),
        "--label",
        "final",
        "--rollouts",
        "32",
        "--ks",
        "1,2,8",
        "--resamples",
        "200",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&eval_dir.join("passk.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[0] == "final"));
    let values: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] >= w[0]));
    // Same seed and settings as the evaluation at the end of training.
    let trained: Vec<String> = csv_rows(&run.join("passk.csv"))
        .into_iter()
        .map(|r| r[2].clone())
        .collect();
    assert_eq!(rows.iter().map(|r| r[2].clone()).collect::<Vec<_>>(), trained);
    let buckets = csv_rows(&eval_dir.join("buckets.csv"));
    let total: usize = buckets.iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 60);

    let out = curverl(&["passk", "--population", pop.to_str().unwrap(), "--ks", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = curverl(&["passk", "--population", tmp.path().join("none.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_reproduces_the_config() {
    let tmp = TempDir::new().unwrap();
    let mut config = small_config(tmp.path());
    config.train.scheme = WeightScheme::EntropicRisk { eta: 0.1 + 0.2 };
    config.train.learning_rate = 1.0 / 3.0;
    let path = write_config(tmp.path(), &config);
    assert!(curverl(&["train", path.to_str().unwrap(), "--no-eval"])
        .status
        .success());
    let manifest = tmp.path().join("run/manifest.json");
    assert_eq!(ExperimentConfig::load(&manifest).unwrap(), config);
    assert_eq!(fs::read_to_string(&manifest).unwrap(), config.to_json());
}

#[test]
fn log_level_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let config = small_config(tmp.path());
    let path = write_config(tmp.path(), &config);
    let quiet = curverl(&["train", path.to_str().unwrap(), "--no-eval"]);
    assert!(stderr(&quiet).is_empty(), "{}", stderr(&quiet));
    let chatty = Command::new(env!("CARGO_BIN_EXE_curverl"))
        .args(["train", path.to_str().unwrap(), "--no-eval"])
        .env("CURVERL_LOG_LEVEL", "info")
        .output()
        .unwrap();
    assert!(chatty.status.success());
    let log = stderr(&chatty);
    assert!(log.contains("INFO"), "{log}");
    assert!(log.contains("switching to the window reference"), "{log}");
}
