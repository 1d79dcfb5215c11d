//! Monotone recalibration of pass rates.
//!
//! Replacing every pass rate by `G(p)` for a strictly increasing `G` and the
//! reference by its pushforward `F_ref o G^-1` leaves the CurveRL population
//! gradient unchanged: ranks are preserved and the Jacobian `G'(p)` cancels
//! against the density transform. Pointwise weights have no such freedom,
//! e.g. MaxRL under `G(t) = t^2` doubles its gradient.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::passrate::PromptPopulation;
use crate::refdist::ReferenceCurve;
use crate::weighting::WeightScheme;

/// A differentiable, invertible map of `[0, 1]` onto itself.
pub trait MonotoneMap {
    fn forward(&self, t: f64) -> f64;
    fn inverse(&self, u: f64) -> f64;
    fn derivative(&self, t: f64) -> f64;
}

/// Calibration maps used by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMap {
    Identity,
    /// `G(t) = t^exponent`.
    Power {
        exponent: f64,
    },
}

impl CalibrationMap {
    pub fn square() -> Self {
        Self::Power { exponent: 2.0 }
    }

    pub fn sqrt() -> Self {
        Self::Power { exponent: 0.5 }
    }
}

impl MonotoneMap for CalibrationMap {
    fn forward(&self, t: f64) -> f64 {
        match *self {
            Self::Identity => t,
            Self::Power { exponent: 2.0 } => t * t,
            Self::Power { exponent: 0.5 } => libm::sqrt(t),
            Self::Power { exponent } => libm::pow(t, exponent),
        }
    }

    fn inverse(&self, u: f64) -> f64 {
        match *self {
            Self::Identity => u,
            Self::Power { exponent: 2.0 } => libm::sqrt(u),
            Self::Power { exponent: 0.5 } => u * u,
            Self::Power { exponent } => libm::pow(u, 1.0 / exponent),
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        match *self {
            Self::Identity => 1.0,
            Self::Power { exponent: 2.0 } => 2.0 * t,
            Self::Power { exponent: 0.5 } => 0.5 / libm::sqrt(t),
            Self::Power { exponent } => exponent * libm::pow(t, exponent - 1.0),
        }
    }
}

const MONOTONE_GRID: usize = 200;

/// Rejects maps that are not strictly increasing, have a non-positive
/// derivative, or whose inverse does not undo them on a fine interior grid.
pub fn check_monotone<G: MonotoneMap + ?Sized>(map: &G) -> Result<()> {
    let mut previous = map.forward(0.0);
    for i in 1..=MONOTONE_GRID {
        let t = i as f64 / MONOTONE_GRID as f64;
        let u = map.forward(t);
        if u <= previous || !u.is_finite() {
            return Err(Error::NotMonotone(t));
        }
        if i < MONOTONE_GRID {
            let d = map.derivative(t);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NotMonotone(t));
            }
            if (map.inverse(u) - t).abs() > 1e-9 {
                return Err(invalid("map", "inverse does not undo forward"));
            }
        }
        previous = u;
    }
    Ok(())
}

/// Pushforward of a reference through a calibration map:
/// `F(u) = F_ref(G^-1(u))`, `f(u) = f_ref(G^-1(u)) / G'(G^-1(u))`.
#[derive(Debug, Clone, Copy)]
pub struct Pushforward<'a, R: ?Sized, G: ?Sized> {
    base: &'a R,
    map: &'a G,
}

impl<'a, R: ReferenceCurve + ?Sized, G: MonotoneMap + ?Sized> Pushforward<'a, R, G> {
    pub fn new(base: &'a R, map: &'a G) -> Self {
        Self { base, map }
    }
}

impl<R: ReferenceCurve + ?Sized, G: MonotoneMap + ?Sized> ReferenceCurve for Pushforward<'_, R, G> {
    fn cdf(&self, u: f64) -> f64 {
        self.base.cdf(self.map.inverse(u))
    }
    fn density(&self, u: f64) -> f64 {
        let v = self.map.inverse(u);
        self.base.density(v) / self.map.derivative(v)
    }
}

/// Largest componentwise gradient difference and the largest raw gradient
/// component it is compared against (both max-norms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationReport {
    pub discrepancy: f64,
    pub gradient_norm: f64,
}

impl CalibrationReport {
    /// Discrepancy relative to the raw gradient norm.
    pub fn relative(&self) -> f64 {
        if self.gradient_norm > 0.0 {
            self.discrepancy / self.gradient_norm
        } else {
            0.0
        }
    }
}

/// Sum over prompts of `d_0 * weight(p) * grad p`, where `weight` and the
/// pass-rate gradient may be taken in calibrated coordinates.
fn flat_gradient<W>(population: &PromptPopulation, mut weighted: W) -> Result<Vec<f64>>
where
    W: FnMut(f64, &mut [f64]) -> Result<()>,
{
    let mut out = Vec::with_capacity(population.len() * population.num_responses());
    for (prompt, &d0) in population.prompts().iter().zip(population.base_weights()) {
        let p = prompt.exact_pass_rate();
        let mut g = prompt.exact_pass_rate_gradient();
        if p > 0.0 && p < 1.0 {
            weighted(p, &mut g)?;
            g.iter_mut().for_each(|v| *v *= d0);
        } else {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        out.extend(g);
    }
    Ok(out)
}

fn report(raw: &[f64], transformed: &[f64]) -> CalibrationReport {
    let discrepancy = raw
        .iter()
        .zip(transformed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    CalibrationReport {
        discrepancy,
        gradient_norm: raw.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
    }
}

/// CurveRL population gradient computed on raw pass rates with `reference`
/// and on `G`-calibrated pass rates with the pushforward reference.
pub fn calibration_invariance_check<R, G>(
    population: &PromptPopulation,
    reference: &R,
    map: &G,
) -> Result<CalibrationReport>
where
    R: ReferenceCurve + ?Sized,
    G: MonotoneMap + ?Sized,
{
    check_monotone(map)?;
    let curve = WeightScheme::Curve;
    let raw = flat_gradient(population, |p, g| {
        let w = curve.weight(p, reference)?;
        g.iter_mut().for_each(|v| *v *= w);
        Ok(())
    })?;
    let pushed = Pushforward::new(reference, map);
    let transformed = flat_gradient(population, |p, g| {
        let u = map.forward(p);
        // grad G(p) = G'(p) grad p
        let scale = curve.weight(u, &pushed)? * map.derivative(p);
        g.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    })?;
    Ok(report(&raw, &transformed))
}

/// The same comparison for a pointwise scheme, which keeps its weight
/// function and sees only the calibrated pass rates.
pub fn pointwise_calibration_check<G: MonotoneMap + ?Sized>(
    population: &PromptPopulation,
    scheme: &WeightScheme,
    map: &G,
) -> Result<CalibrationReport> {
    check_monotone(map)?;
    if scheme.uses_reference() {
        return Err(invalid("scheme", "must be pointwise"));
    }
    let uniform = crate::refdist::Uniform;
    let raw = flat_gradient(population, |p, g| {
        let w = scheme.weight(p, &uniform)?;
        g.iter_mut().for_each(|v| *v *= w);
        Ok(())
    })?;
    let transformed = flat_gradient(population, |p, g| {
        let scale = scheme.weight(map.forward(p), &uniform)? * map.derivative(p);
        g.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    })?;
    Ok(report(&raw, &transformed))
}
