//! Verification suites: each runs a family of numeric checks and reports the
//! measured quantity next to its threshold.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::calibration::{calibration_invariance_check, pointwise_calibration_check, CalibrationMap};
use crate::error::{Error, Result};
use crate::passrate::{DifficultyProfile, PopulationSpec};
use crate::refdist::{
    rollout_grid, ReferenceCurve, ReferenceDistribution, ReflectedTruncatedExponential, SmoothedHistogram,
    TruncatedExponential, Uniform,
};
use crate::rng;
use crate::trainer::{ReferenceMode, TrainConfig, Trainer};
use crate::weighting::{
    entropic_weight, induced_prior_numeric, relative_multiplier, reverse_hazard_residual, utility_gap_bound,
    Distortion, WeightScheme,
};

/// How the measured value is compared with the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Below,
    AtMost,
    Above,
}

impl Relation {
    fn holds(self, measured: f64, threshold: f64) -> bool {
        match self {
            Self::Below => measured < threshold,
            Self::AtMost => measured <= threshold,
            Self::Above => measured > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Below => "<",
            Self::AtMost => "<=",
            Self::Above => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(suite: Suite, name: String, measured: f64, relation: Relation, threshold: f64) -> Self {
        Self {
            suite,
            name,
            measured,
            relation,
            threshold,
            passed: relation.holds(measured, threshold),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} {}: {:.6e} {} {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.relation.symbol(),
            self.threshold
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorem1,
    Corollary1,
    Prop1,
    Prop2,
    Prop4,
    Aggressiveness,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Theorem1,
        Suite::Corollary1,
        Suite::Prop1,
        Suite::Prop2,
        Suite::Prop4,
        Suite::Aggressiveness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Theorem1 => "theorem1",
            Self::Corollary1 => "corollary1",
            Self::Prop1 => "prop1",
            Self::Prop2 => "prop2",
            Self::Prop4 => "prop4",
            Self::Aggressiveness => "aggressiveness",
        }
    }

    pub fn run(self, seed: u64) -> Result<Vec<CheckResult>> {
        match self {
            Self::Theorem1 => theorem1(),
            Self::Corollary1 => corollary1(seed),
            Self::Prop1 => prop1(),
            Self::Prop2 => prop2(seed),
            Self::Prop4 => prop4(seed),
            Self::Aggressiveness => aggressiveness(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::UnknownSuite(s.into()))
    }
}

/// Names accepted by [`run_suites`].
pub fn suite_names() -> Vec<&'static str> {
    let mut names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
    names.push("all");
    names
}

/// Runs one suite by name, or every suite for `"all"`.
pub fn run_suites(name: &str, seed: u64) -> Result<Vec<CheckResult>> {
    if name == "all" {
        let mut out = Vec::new();
        for suite in Suite::ALL {
            out.extend(suite.run(seed)?);
        }
        return Ok(out);
    }
    name.parse::<Suite>()?.run(seed)
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn twentieths() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

/// `{0.1, ..., 0.9}`.
pub fn tenths() -> Vec<f64> {
    (1..10).map(|i| i as f64 / 10.0).collect()
}

fn max_abs<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub const POINTWISE: [WeightScheme; 3] = [WeightScheme::Reinforce, WeightScheme::Grpo, WeightScheme::MaxRl];

/// The weight as a bare function of `t`, for the quadrature route.
fn raw_weight(scheme: WeightScheme) -> fn(f64) -> f64 {
    match scheme {
        WeightScheme::Reinforce => |_| 1.0,
        WeightScheme::Grpo => |t| 1.0 / libm::sqrt(t * (1.0 - t)),
        _ => |t| 1.0 / t,
    }
}

fn theorem1() -> Result<Vec<CheckResult>> {
    let suite = Suite::Theorem1;
    let mut out = Vec::new();
    for scheme in POINTWISE {
        let w = raw_weight(scheme);
        for p in twentieths() {
            let numeric = induced_prior_numeric(w, p)?;
            let closed = scheme.induced_prior(p)?;
            out.push(CheckResult::new(
                suite,
                format!("{scheme} prior p={p:.2}"),
                (numeric - closed).abs(),
                Relation::Below,
                1e-6,
            ));
        }
        let residual = twentieths()
            .into_iter()
            .map(|p| reverse_hazard_residual(&scheme, p, 1e-5))
            .collect::<Result<Vec<_>>>()?;
        out.push(CheckResult::new(
            suite,
            format!("{scheme} reverse hazard max residual"),
            max_abs(residual),
            Relation::Below,
            1e-4,
        ));
        let mut grid = twentieths();
        grid.push(1.0);
        let values = grid
            .iter()
            .map(|&p| scheme.induced_prior(p))
            .collect::<Result<Vec<_>>>()?;
        let worst_step = values.windows(2).map(|w| w[0] - w[1]).fold(f64::MIN, f64::max);
        out.push(CheckResult::new(
            suite,
            format!("{scheme} prior nondecreasing (max decrease)"),
            worst_step,
            Relation::AtMost,
            0.0,
        ));
        out.push(CheckResult::new(
            suite,
            format!("{scheme} prior |F(1) - 1|"),
            (scheme.induced_prior(1.0)? - 1.0).abs(),
            Relation::AtMost,
            0.0,
        ));
    }
    Ok(out)
}

fn corollary1(seed: u64) -> Result<Vec<CheckResult>> {
    let suite = Suite::Corollary1;
    let mut grid = rollout_grid(8);
    grid.extend(twentieths());
    let weight_gap = grid
        .iter()
        .map(|&p| Ok(WeightScheme::Curve.weight(p, &Uniform)? - WeightScheme::MaxRl.weight(p, &Uniform)?))
        .collect::<Result<Vec<_>>>()?;

    let population = PopulationSpec {
        size: 64,
        seed,
        ..PopulationSpec::default()
    }
    .generate()?;
    let config = |scheme| TrainConfig {
        batch_size: 32,
        steps: 20,
        scheme,
        seed,
        reference_mode: ReferenceMode::Uniform,
        ..TrainConfig::default()
    };
    let mut curve = Trainer::new(config(WeightScheme::Curve), population.clone())?;
    let mut maxrl = Trainer::new(config(WeightScheme::MaxRl), population)?;
    let (a, b) = (curve.run()?, maxrl.run()?);
    let mismatched =
        a.iter().zip(&b).filter(|(x, y)| x != y).count() + usize::from(curve.population() != maxrl.population());

    Ok(vec![
        CheckResult::new(
            suite,
            "max |w_curve - w_maxrl| under uniform reference".into(),
            max_abs(weight_gap),
            Relation::AtMost,
            0.0,
        ),
        CheckResult::new(
            suite,
            "mismatched steps, curve vs maxrl, 20-step run".into(),
            mismatched as f64,
            Relation::AtMost,
            0.0,
        ),
    ])
}

fn prop1() -> Result<Vec<CheckResult>> {
    let suite = Suite::Prop1;
    let small = max_abs(tenths().into_iter().map(|p| entropic_weight(1e-4, p) - 1.0));
    let large = max_abs(tenths().into_iter().map(|p| 50.0 * entropic_weight(50.0, p) - 1.0 / p));
    let mut out = vec![
        CheckResult::new(suite, "eta=1e-4 max |w - 1|".into(), small, Relation::Below, 1e-4),
        CheckResult::new(suite, "eta=50 max |eta w - 1/p|".into(), large, Relation::Below, 1e-3),
    ];
    let fine: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
    for eta in [0.5, 2.0, 10.0] {
        let worst = fine
            .windows(2)
            .map(|w| entropic_weight(eta, w[1]) - entropic_weight(eta, w[0]))
            .fold(f64::MIN, f64::max);
        out.push(CheckResult::new(
            suite,
            format!("eta={eta} max increment (strictly decreasing)"),
            worst,
            Relation::Below,
            0.0,
        ));
    }
    Ok(out)
}

/// Random histogram reference on the `n`-grid.
fn random_reference<R: Rng>(n: usize, rng: &mut R) -> Result<ReferenceDistribution> {
    let weights: Vec<f64> = (1..n).map(|_| rng.random::<f64>()).collect();
    ReferenceDistribution::from_bin_weights(n, &weights, 1000)
}

/// Random grid-valued pass rates, concentrated on a random subset of bins.
fn random_rates<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let count = rng.random_range(5..60);
    let lo = rng.random_range(1..n);
    let hi = rng.random_range(lo..n);
    (0..count)
        .map(|_| rng.random_range(lo..=hi) as f64 / n as f64)
        .collect()
}

/// Margin `gap - bound` against the grid slack, worst case over 50 random
/// population/reference pairs plus two structured cases.
fn prop2(seed: u64) -> Result<Vec<CheckResult>> {
    let suite = Suite::Prop2;
    let n = 8;
    let mut out = Vec::new();
    for psi in [Distortion::Identity, Distortion::clipped_log()] {
        let mut rng = rng::stream(seed, 2, 0);
        let mut worst = f64::MIN;
        for _ in 0..50 {
            let rates = random_rates(n, &mut rng);
            let reference = random_reference(n, &mut rng)?;
            let b = utility_gap_bound(&psi, &rates, &reference)?;
            worst = worst.max(b.gap - b.bound);
        }
        out.push(CheckResult::new(
            suite,
            format!("{} worst gap - bound, 50 random pairs", psi.name()),
            worst,
            Relation::AtMost,
            2.0 / n as f64,
        ));

        let rates = [0.25, 0.25, 0.5, 0.625];
        let shifted: Vec<f64> = rates.iter().map(|p| p + 1.0 / n as f64).collect();
        let reference = ReferenceDistribution::from_rates(&shifted, None, n)?;
        let b = utility_gap_bound(&psi, &rates, &reference)?;
        out.push(CheckResult::new(
            suite,
            format!("{} shifted by one bin: gap - bound", psi.name()),
            b.gap - b.bound,
            Relation::AtMost,
            b.slack,
        ));

        let rates = [0.375; 10];
        let reference = random_reference(n, &mut rng)?;
        let b = utility_gap_bound(&psi, &rates, &reference)?;
        out.push(CheckResult::new(
            suite,
            format!("{} equal rates: gap - bound", psi.name()),
            b.gap - b.bound,
            Relation::AtMost,
            b.slack,
        ));

        let own = ReferenceDistribution::from_rates(&rates, None, n)?;
        let b = utility_gap_bound(&psi, &rates, &own)?;
        out.push(CheckResult::new(
            suite,
            format!("{} identical reference: gap + bound", psi.name()),
            b.gap + b.bound,
            Relation::AtMost,
            0.0,
        ));
    }
    Ok(out)
}

fn prop4(seed: u64) -> Result<Vec<CheckResult>> {
    let suite = Suite::Prop4;
    let population = PopulationSpec {
        size: 20,
        responses: 8,
        profile: DifficultyProfile::Uniform { low: 0.05, high: 0.95 },
        seed,
        ..PopulationSpec::default()
    }
    .generate()?;
    let reference = SmoothedHistogram::from_rates(&population.exact_pass_rates(), population.base_weights(), 10, 0.1)?;
    let mut out = Vec::new();
    for (label, map) in [("t^2", CalibrationMap::square()), ("sqrt(t)", CalibrationMap::sqrt())] {
        let curve = calibration_invariance_check(&population, &reference, &map)?;
        out.push(CheckResult::new(
            suite,
            format!("curve G={label} max gradient discrepancy"),
            curve.discrepancy,
            Relation::Below,
            1e-8,
        ));
        let maxrl = pointwise_calibration_check(&population, &WeightScheme::MaxRl, &map)?;
        out.push(CheckResult::new(
            suite,
            format!("maxrl G={label} discrepancy / |gradient|"),
            maxrl.relative(),
            Relation::Above,
            0.1,
        ));
    }
    Ok(out)
}

/// Largest step of `R_log` along `grid`, signed so that a negative value
/// means strictly monotone in the requested direction.
fn multiplier_steps<R: ReferenceCurve>(reference: &R, grid: &[f64], decreasing: bool) -> Result<f64> {
    let values = grid
        .iter()
        .map(|&p| relative_multiplier(&Distortion::Log, reference, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(values
        .windows(2)
        .map(|w| if decreasing { w[1] - w[0] } else { w[0] - w[1] })
        .fold(f64::MIN, f64::max))
}

fn aggressiveness() -> Result<Vec<CheckResult>> {
    let suite = Suite::Aggressiveness;
    let truncated = TruncatedExponential { lambda: 4.0 };
    let reflected = ReflectedTruncatedExponential { lambda: 4.0 };
    let mut out = Vec::new();
    for (label, grid) in [("N=8 grid", rollout_grid(8)), ("0.05 grid", twentieths())] {
        out.push(CheckResult::new(
            suite,
            format!("truncated exp lambda=4, {label}: max increment of R"),
            multiplier_steps(&truncated, &grid, true)?,
            Relation::Below,
            0.0,
        ));
        out.push(CheckResult::new(
            suite,
            format!("reflected exp lambda=4, {label}: max decrement of R"),
            multiplier_steps(&reflected, &grid, false)?,
            Relation::Below,
            0.0,
        ));
    }
    let uniform = max_abs(
        twentieths()
            .into_iter()
            .map(|p| relative_multiplier(&Distortion::Log, &Uniform, p).map(|r| r - 1.0))
            .collect::<Result<Vec<_>>>()?,
    );
    out.push(CheckResult::new(
        suite,
        "uniform reference max |R - 1|".into(),
        uniform,
        Relation::Below,
        1e-12,
    ));
    Ok(out)
}
