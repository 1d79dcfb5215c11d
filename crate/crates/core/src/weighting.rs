//! Prompt-weight schemes and the utilities they differentiate.
//!
//! A reweighted policy gradient scales each prompt's `grad p(x)` by a weight
//! `w(x)`. Pointwise schemes use a function of the pass rate alone:
//!
//! | scheme      | `w(p)`                                   |
//! |-------------|------------------------------------------|
//! | REINFORCE   | `1`                                      |
//! | GRPO        | `1 / sqrt(p (1 - p))`                    |
//! | MaxRL       | `1 / p`                                  |
//! | entropic    | `(e^eta - 1) / (eta (1 + (e^eta - 1) p))` |
//!
//! The distribution-aware scheme replaces `p` by its rank `F_ref(p)` under a
//! reference distribution and applies `log`, giving the reverse hazard rate
//! `f_ref(p) / F_ref(p)`. Conversely every pointwise weight is the reverse
//! hazard of the prior `F(p) = exp(-int_p^1 w)`, see [`induced_prior`].

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{adaptive_trapezoid, INTERVAL_TOLERANCE};
use crate::refdist::{ReferenceCurve, ReferenceDistribution};

/// Prompt-weighting rule.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum WeightScheme {
    Reinforce,
    Grpo,
    #[cfg_attr(feature = "serde", serde(rename = "maxrl"))]
    MaxRl,
    EntropicRisk {
        eta: f64,
    },
    Curve,
    IntegratedConvex {
        lambda: f64,
    },
    IntegratedProduct,
}

/// Above this `eta * p` the entropic weight is returned as `1 / (eta p)`;
/// the dropped term is below `e^-30` relative.
const ENTROPIC_ASYMPTOTIC: f64 = 30.0;

/// Entropic-risk weight, evaluated without forming `e^eta`.
pub fn entropic_weight(eta: f64, p: f64) -> f64 {
    let ep = eta * p;
    if ep > ENTROPIC_ASYMPTOTIC {
        return 1.0 / ep;
    }
    // (e^eta - 1) / (eta (1 + (e^eta - 1) p)) = 1 / (eta / expm1(eta) + eta p)
    1.0 / (eta / libm::expm1(eta) + ep)
}

fn check_open_unit(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::PassRateDomain(p))
    }
}

impl WeightScheme {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Reinforce => "reinforce",
            Self::Grpo => "grpo",
            Self::MaxRl => "maxrl",
            Self::EntropicRisk { .. } => "entropic",
            Self::Curve => "curve",
            Self::IntegratedConvex { .. } => "integrated-convex",
            Self::IntegratedProduct => "integrated-product",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::EntropicRisk { eta } if !(eta > 0.0 && eta.is_finite()) => {
                Err(invalid("eta", "must be positive and finite"))
            }
            Self::IntegratedConvex { lambda } if !(0.0..=1.0).contains(&lambda) => {
                Err(invalid("lambda", "must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// True for schemes whose weight reads the reference distribution.
    pub fn uses_reference(&self) -> bool {
        matches!(
            self,
            Self::Curve | Self::IntegratedConvex { .. } | Self::IntegratedProduct
        )
    }

    /// Weight at pass rate `p` in (0, 1). Pointwise schemes ignore `reference`.
    pub fn weight<R: ReferenceCurve + ?Sized>(&self, p: f64, reference: &R) -> Result<f64> {
        check_open_unit(p)?;
        self.validate()?;
        let w = match *self {
            Self::Reinforce => 1.0,
            Self::Grpo => 1.0 / libm::sqrt(p * (1.0 - p)),
            Self::MaxRl => 1.0 / p,
            Self::EntropicRisk { eta } => entropic_weight(eta, p),
            Self::Curve => reverse_hazard(reference, p)?,
            Self::IntegratedConvex { lambda } => (1.0 - lambda) / p + lambda * reverse_hazard(reference, p)?,
            Self::IntegratedProduct => {
                let cdf = positive_cdf(reference, p)?;
                -(libm::log(cdf) / p + reference.density(p) * libm::log(p) / cdf)
            }
        };
        Ok(w)
    }

    /// `int_p^1 w(t) dt` in closed form.
    pub fn tail_integral(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::PassRateDomain(p));
        }
        match self {
            Self::Reinforce => Ok(1.0 - p),
            Self::Grpo => Ok(PI - 2.0 * libm::asin(libm::sqrt(p))),
            Self::MaxRl if p == 0.0 => Err(Error::Divergent(p)),
            Self::MaxRl => Ok(-libm::log(p)),
            other => Err(Error::NoClosedForm(other.name())),
        }
    }

    /// Closed-form prior `exp(-int_p^1 w)` whose reverse hazard is `w`.
    pub fn induced_prior(&self, p: f64) -> Result<f64> {
        Ok(libm::exp(-self.tail_integral(p)?))
    }
}

/// Free-function form of [`WeightScheme::weight`].
pub fn pointwise_weight<R: ReferenceCurve + ?Sized>(scheme: &WeightScheme, p: f64, reference: &R) -> Result<f64> {
    scheme.weight(p, reference)
}

/// Free-function form of [`WeightScheme::induced_prior`].
pub fn induced_prior(scheme: &WeightScheme, p: f64) -> Result<f64> {
    scheme.induced_prior(p)
}

fn positive_cdf<R: ReferenceCurve + ?Sized>(reference: &R, p: f64) -> Result<f64> {
    let cdf = reference.cdf(p);
    if cdf > 0.0 {
        Ok(cdf)
    } else {
        Err(Error::ZeroDenominator("reference CDF"))
    }
}

fn reverse_hazard<R: ReferenceCurve + ?Sized>(reference: &R, p: f64) -> Result<f64> {
    Ok(reference.density(p) / positive_cdf(reference, p)?)
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EntropicRisk { eta } => write!(f, "entropic:{eta}"),
            Self::IntegratedConvex { lambda } => write!(f, "integrated-convex:{lambda}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    /// Parses `reinforce`, `grpo`, `maxrl`, `entropic:<eta>`, `curve`,
    /// `integrated-convex:<lambda>` and `integrated-product`.
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let number = |name: &'static str| -> Result<f64> {
            arg.ok_or_else(|| invalid(name, "missing value, use `scheme:<value>`"))?
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(name, "not a number"))
        };
        let scheme = match (head.trim().to_ascii_lowercase().as_str(), arg) {
            ("reinforce", None) => Self::Reinforce,
            ("grpo", None) => Self::Grpo,
            ("maxrl", None) => Self::MaxRl,
            ("curve" | "curverl", None) => Self::Curve,
            ("integrated-product", None) => Self::IntegratedProduct,
            ("entropic" | "entropic-risk", _) => Self::EntropicRisk { eta: number("eta")? },
            ("integrated-convex", _) => Self::IntegratedConvex {
                lambda: number("lambda")?,
            },
            _ => return Err(Error::UnknownScheme(String::from(s))),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

/// Tail integrals beyond this are reported as divergent; `exp(-700)` is
/// already below the smallest normal `f64`.
pub const TAIL_INTEGRAL_CAP: f64 = 700.0;

/// Below this the substituted integrand is sampled at `S_MIN` instead of the
/// endpoint itself, where `w(1)` may be infinite.
const S_MIN: f64 = 1e-8;

/// `exp(-int_p^1 w(t) dt)` by adaptive trapezoid quadrature.
///
/// The integral is taken in `s = sqrt(1 - t)`, i.e. `int_0^sqrt(1-p) 2 s
/// w(1 - s^2) ds`, which removes inverse-square-root singularities at
/// `t = 1` such as GRPO's.
pub fn induced_prior_numeric<W: Fn(f64) -> f64>(weight: W, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::PassRateDomain(p));
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let upper = libm::sqrt(1.0 - p);
    let integrand = |s: f64| {
        let s = s.max(S_MIN);
        2.0 * s * weight(1.0 - s * s)
    };
    let q = adaptive_trapezoid(integrand, 0.0, upper, INTERVAL_TOLERANCE);
    if !q.converged || !q.value.is_finite() || q.value.abs() > TAIL_INTEGRAL_CAP {
        return Err(Error::Divergent(p));
    }
    Ok(libm::exp(-q.value))
}

/// `|F'(p) / F(p) - w(p)|` with `F` the closed-form induced prior and `F'`
/// its central difference with the given step.
pub fn reverse_hazard_residual(scheme: &WeightScheme, p: f64, step: f64) -> Result<f64> {
    if !(step > 0.0 && p > step && p < 1.0 - step) {
        return Err(invalid("step", "need 0 < step < p < 1 - step"));
    }
    let f = scheme.induced_prior(p)?;
    let derivative = (scheme.induced_prior(p + step)? - scheme.induced_prior(p - step)?) / (2.0 * step);
    let w = scheme.weight(p, &crate::refdist::Uniform)?;
    Ok((derivative / f - w).abs())
}

/// Increasing transform applied to a pass rate or a quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Distortion {
    Log,
    Identity,
    /// `log(max(u, floor))`.
    ClippedLog {
        floor: f64,
    },
}

/// Default floor of [`Distortion::ClippedLog`].
pub const DEFAULT_LOG_FLOOR: f64 = 1e-3;

impl Distortion {
    pub fn clipped_log() -> Self {
        Self::ClippedLog {
            floor: DEFAULT_LOG_FLOOR,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Log => "log",
            Self::Identity => "identity",
            Self::ClippedLog { .. } => "clipped-log",
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Self::ClippedLog { floor } if !(floor > 0.0 && floor < 1.0) => Err(invalid("floor", "must lie in (0, 1)")),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, u: f64) -> Result<f64> {
        self.check()?;
        match *self {
            Self::Log if u <= 0.0 => Err(Error::LogDomain(u)),
            Self::Log => Ok(libm::log(u)),
            Self::Identity => Ok(u),
            Self::ClippedLog { floor } => Ok(libm::log(u.max(floor))),
        }
    }

    pub fn derivative(&self, u: f64) -> Result<f64> {
        self.check()?;
        match *self {
            Self::Log if u <= 0.0 => Err(Error::LogDomain(u)),
            Self::Log => Ok(1.0 / u),
            Self::Identity => Ok(1.0),
            Self::ClippedLog { floor } if u < floor => Ok(0.0),
            Self::ClippedLog { .. } => Ok(1.0 / u),
        }
    }

    /// Lipschitz constant on `[0, 1]`, if finite.
    pub fn lipschitz(&self) -> Option<f64> {
        match *self {
            Self::Log => None,
            Self::Identity => Some(1.0),
            Self::ClippedLog { floor } => Some(1.0 / floor),
        }
    }
}

fn weighted_mean<F: FnMut(f64) -> Result<f64>>(rates: &[f64], weights: &[f64], mut f: F) -> Result<f64> {
    if rates.len() != weights.len() {
        return Err(invalid("weights", "need one weight per pass rate"));
    }
    let mut acc = 0.0;
    for (&p, &w) in rates.iter().zip(weights) {
        acc += w * f(p)?;
    }
    Ok(acc)
}

/// `E_{d_0}[g(p)]`.
pub fn pointwise_utility(g: &Distortion, pass_rates: &[f64], weights_d0: &[f64]) -> Result<f64> {
    weighted_mean(pass_rates, weights_d0, |p| g.apply(p))
}

/// `E_{d_0}[psi(F_ref(p))]`.
pub fn distribution_utility<R: ReferenceCurve + ?Sized>(
    psi: &Distortion,
    reference: &R,
    pass_rates: &[f64],
    weights_d0: &[f64],
) -> Result<f64> {
    weighted_mean(pass_rates, weights_d0, |p| psi.apply(reference.cdf(p)))
}

/// Two sides of the utility-gap inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBound {
    /// `|U(F_ref) - U(F_theta)|`.
    pub gap: f64,
    /// `L_psi * max density of F_theta * W_1(F_ref, F_theta)`.
    pub bound: f64,
    /// Grid-resolution allowance `2 / N`.
    pub slack: f64,
}

impl GapBound {
    pub fn holds(&self) -> bool {
        self.gap <= self.bound + self.slack
    }
}

/// Compares the utility under `reference` with the utility under the
/// histogram of the rates themselves (uniform `d_0`), against the Lipschitz
/// Wasserstein bound.
pub fn utility_gap_bound(psi: &Distortion, pass_rates: &[f64], reference: &ReferenceDistribution) -> Result<GapBound> {
    let lipschitz = psi.lipschitz().ok_or(Error::NotLipschitz(psi.name()))?;
    if pass_rates.is_empty() {
        return Err(invalid("pass_rates", "must be nonempty"));
    }
    let n = reference.n_rollouts();
    let own = ReferenceDistribution::from_rates(pass_rates, None, n)?;
    let d0 = alloc::vec![1.0 / pass_rates.len() as f64; pass_rates.len()];
    let with_ref = distribution_utility(psi, reference, pass_rates, &d0)?;
    let with_own = distribution_utility(psi, &own, pass_rates, &d0)?;
    let w1 = crate::refdist::wasserstein1(reference, &own)?;
    Ok(GapBound {
        gap: (with_ref - with_own).abs(),
        bound: lipschitz * own.max_density() * w1,
        slack: 2.0 / n as f64,
    })
}

/// `R_psi(p) = psi'(F_ref(p)) f_ref(p) / psi'(p)`: the distribution-aware
/// weight relative to the pointwise weight `psi'(p)`.
pub fn relative_multiplier<R: ReferenceCurve + ?Sized>(psi: &Distortion, reference: &R, p: f64) -> Result<f64> {
    check_open_unit(p)?;
    let pointwise = psi.derivative(p)?;
    if pointwise == 0.0 {
        return Err(Error::ZeroDenominator("psi'(p)"));
    }
    let cdf = reference.cdf(p);
    if cdf <= 0.0 && matches!(psi, Distortion::Log) {
        return Err(Error::ZeroDenominator("reference CDF"));
    }
    Ok(psi.derivative(cdf)? * reference.density(p) / pointwise)
}

/// Functional derivative of `Var_{d_0}(p)`: `2 p(x) - 2 E[p]`.
///
/// Diagnostic only: the values can be negative, so this is not offered as a
/// training scheme.
pub fn variance_utility_weights(pass_rates: &[f64], weights_d0: &[f64]) -> Result<Vec<f64>> {
    let mean = weighted_mean(pass_rates, weights_d0, Ok)?;
    Ok(pass_rates.iter().map(|p| 2.0 * p - 2.0 * mean).collect())
}

/// One row of a weight table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub p: f64,
    pub weight: f64,
    /// Weight divided by the sum over the grid.
    pub normalized: f64,
}

/// Weights on the rollout grid `{1/N, ..., (N-1)/N}`.
pub fn weight_table<R: ReferenceCurve + ?Sized>(
    scheme: &WeightScheme,
    reference: &R,
    n_rollouts: usize,
) -> Result<Vec<WeightRow>> {
    let grid = crate::refdist::rollout_grid(n_rollouts);
    let weights = grid
        .iter()
        .map(|&p| scheme.weight(p, reference))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = weights.iter().sum();
    Ok(grid
        .into_iter()
        .zip(weights)
        .map(|(p, weight)| WeightRow {
            p,
            weight,
            normalized: if total > 0.0 { weight / total } else { 0.0 },
        })
        .collect())
}

/// Canonical textual form, also accepted by `FromStr`.
pub fn scheme_label(scheme: &WeightScheme) -> String {
    scheme.to_string()
}
