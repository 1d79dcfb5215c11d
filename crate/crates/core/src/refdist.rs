//! Reference pass-rate distributions.
//!
//! Pass rates estimated from `N` rollouts live on the grid `k/N`,
//! `k = 1..N-1` (the endpoints carry no gradient and are never stored). A
//! [`ReferenceDistribution`] is a histogram on exactly that grid: bin `k`
//! holds the mass at `k/N`, the density is `mass * N` (bin width `1/N`) and
//! the CDF is the running sum. CDF and density are floored so that the
//! reverse hazard `f/F` stays finite on empty bins.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{invalid, Error, Result};
use crate::passrate::PromptPopulation;

/// A CDF/density pair on `[0, 1]`.
pub trait ReferenceCurve {
    fn cdf(&self, p: f64) -> f64;
    fn density(&self, p: f64) -> f64;
}

impl<R: ReferenceCurve + ?Sized> ReferenceCurve for &R {
    fn cdf(&self, p: f64) -> f64 {
        (**self).cdf(p)
    }
    fn density(&self, p: f64) -> f64 {
        (**self).density(p)
    }
}

/// `F(p) = p`, `f(p) = 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Uniform;

impl ReferenceCurve for Uniform {
    fn cdf(&self, p: f64) -> f64 {
        p
    }
    fn density(&self, _p: f64) -> f64 {
        1.0
    }
}

/// Exponential with rate `lambda` truncated to `[0, 1]`; mass piles up near 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedExponential {
    pub lambda: f64,
}

impl ReferenceCurve for TruncatedExponential {
    fn cdf(&self, p: f64) -> f64 {
        libm::expm1(-self.lambda * p) / libm::expm1(-self.lambda)
    }
    fn density(&self, p: f64) -> f64 {
        -self.lambda * libm::exp(-self.lambda * p) / libm::expm1(-self.lambda)
    }
}

/// Mirror image `1 - Z` of [`TruncatedExponential`]; mass piles up near 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectedTruncatedExponential {
    pub lambda: f64,
}

impl ReferenceCurve for ReflectedTruncatedExponential {
    fn cdf(&self, p: f64) -> f64 {
        libm::expm1(self.lambda * p) / libm::expm1(self.lambda)
    }
    fn density(&self, p: f64) -> f64 {
        self.lambda * libm::exp(self.lambda * p) / libm::expm1(self.lambda)
    }
}

/// Histogram reference on the rollout grid `{1/N, ..., (N-1)/N}`.
#[derive(Debug)]
pub struct ReferenceDistribution {
    n_rollouts: usize,
    mass: Vec<f64>,
    raw_cdf: Vec<f64>,
    cdf: Vec<f64>,
    density: Vec<f64>,
    sample_count: usize,
    off_grid_queries: AtomicUsize,
}

impl Clone for ReferenceDistribution {
    fn clone(&self) -> Self {
        Self {
            n_rollouts: self.n_rollouts,
            mass: self.mass.clone(),
            raw_cdf: self.raw_cdf.clone(),
            cdf: self.cdf.clone(),
            density: self.density.clone(),
            sample_count: self.sample_count,
            off_grid_queries: AtomicUsize::new(self.off_grid_queries.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for ReferenceDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.n_rollouts == other.n_rollouts
            && self.mass == other.mass
            && self.cdf == other.cdf
            && self.density == other.density
            && self.sample_count == other.sample_count
    }
}

/// Tolerance for deciding that a query sits on the grid.
const GRID_TOLERANCE: f64 = 1e-9;

/// Nearest grid index `k` in `0..=n` for `p`.
pub fn nearest_grid_index(p: f64, n_rollouts: usize) -> usize {
    let k = libm::round(p * n_rollouts as f64);
    if k <= 0.0 {
        0
    } else if k >= n_rollouts as f64 {
        n_rollouts
    } else {
        k as usize
    }
}

/// The interior grid `k/N`, `k = 1..N-1`.
pub fn rollout_grid(n_rollouts: usize) -> Vec<f64> {
    (1..n_rollouts).map(|k| k as f64 / n_rollouts as f64).collect()
}

fn check_grid(n_rollouts: usize) -> Result<()> {
    if n_rollouts < 2 {
        return Err(invalid("n_rollouts", "grid needs at least 2 rollouts"));
    }
    Ok(())
}

impl ReferenceDistribution {
    /// Builds the histogram from nonnegative bin weights (one per interior
    /// grid point); `sample_count` drives the floors.
    pub fn from_bin_weights(n_rollouts: usize, weights: &[f64], sample_count: usize) -> Result<Self> {
        check_grid(n_rollouts)?;
        if weights.len() != n_rollouts - 1 {
            return Err(Error::GridMismatch(weights.len() + 1, n_rollouts));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("bin weights", "must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ColdStart);
        }
        let n = n_rollouts as f64;
        let mass: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut running = 0.0;
        let mut raw_cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                running += w;
                running / total
            })
            .collect();
        // The last prefix sum equals `total` but may round; pin it.
        *raw_cdf.last_mut().expect("grid is nonempty") = 1.0;
        let density: Vec<f64> = mass.iter().map(|m| m * n).collect();

        let denom = (sample_count + 1) as f64;
        let cdf_floor = 1.0 / denom;
        let density_floor = 0.5 * n / denom;
        let cdf = raw_cdf.iter().map(|c| c.max(cdf_floor).min(1.0)).collect();
        let density = density.into_iter().map(|d| d.max(density_floor)).collect();
        Ok(Self {
            n_rollouts,
            mass,
            raw_cdf,
            cdf,
            density,
            sample_count,
            off_grid_queries: AtomicUsize::new(0),
        })
    }

    /// Histogram of `rates` (optionally weighted) on the `n_rollouts` grid.
    ///
    /// Each rate is snapped to its nearest grid point; rates that snap onto
    /// 0 or 1 are dropped, mirroring the window's exclusion of inactive
    /// prompts.
    pub fn from_rates(rates: &[f64], weights: Option<&[f64]>, n_rollouts: usize) -> Result<Self> {
        check_grid(n_rollouts)?;
        let mut bins = vec![0.0; n_rollouts - 1];
        let mut count = 0;
        for (i, &p) in rates.iter().enumerate() {
            let k = nearest_grid_index(p, n_rollouts);
            if k == 0 || k == n_rollouts {
                continue;
            }
            bins[k - 1] += weights.map_or(1.0, |w| w[i]);
            count += 1;
        }
        Self::from_bin_weights(n_rollouts, &bins, count)
    }

    /// Histogram estimate from the window contents.
    pub fn estimate(window: &SlidingWindow, n_rollouts: usize) -> Result<Self> {
        if window.is_empty() {
            return Err(Error::ColdStart);
        }
        let rates: Vec<f64> = window.rates().collect();
        let mut bins = vec![0.0; n_rollouts.saturating_sub(1)];
        check_grid(n_rollouts)?;
        for p in rates {
            // Stored rates lie in (0, 1), so clamp into the interior grid.
            let k = nearest_grid_index(p, n_rollouts).clamp(1, n_rollouts - 1);
            bins[k - 1] += 1.0;
        }
        Self::from_bin_weights(n_rollouts, &bins, window.len())
    }

    /// Distribution of the analytic pass rates of `population` under `d_0`.
    pub fn exact_policy_distribution(population: &PromptPopulation, n_rollouts: usize) -> Result<Self> {
        let rates = population.exact_pass_rates();
        Self::from_rates(&rates, Some(population.base_weights()), n_rollouts)
    }

    /// Limit of [`estimate`](Self::estimate) for a frozen policy: the law of
    /// the group estimate `p_hat` over `d_0` and `N` rollouts, conditioned on
    /// the group being active.
    pub fn expected_active_distribution(population: &PromptPopulation, n_rollouts: usize) -> Result<Self> {
        check_grid(n_rollouts)?;
        let n = n_rollouts as f64;
        let mut bins = vec![0.0; n_rollouts - 1];
        for (prompt, &d0) in population.prompts().iter().zip(population.base_weights()) {
            let p = prompt.exact_pass_rate();
            let mut binom = 1.0;
            for (j, bin) in bins.iter_mut().enumerate() {
                let k = (j + 1) as f64;
                // C(N, k) built up incrementally.
                binom *= (n - k + 1.0) / k;
                *bin += d0 * binom * libm::pow(p, k) * libm::pow(1.0 - p, n - k);
            }
        }
        if bins.iter().all(|&b| b <= 0.0) {
            return Err(Error::ColdStart);
        }
        Self::from_bin_weights(n_rollouts, &bins, population.len())
    }

    /// Rebuilds a snapshot from dumped columns, keeping the floored values
    /// exactly as given.
    pub fn from_parts(n_rollouts: usize, mass: Vec<f64>, cdf: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        check_grid(n_rollouts)?;
        let len = n_rollouts - 1;
        if mass.len() != len || cdf.len() != len || density.len() != len {
            return Err(Error::GridMismatch(mass.len() + 1, n_rollouts));
        }
        if cdf.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("cdf", "must be nondecreasing"));
        }
        if cdf.iter().chain(&density).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("cdf/density", "must be finite and positive"));
        }
        let mut running = 0.0;
        let raw_cdf = mass
            .iter()
            .map(|m| {
                running += m;
                running
            })
            .collect();
        Ok(Self {
            n_rollouts,
            mass,
            raw_cdf,
            cdf,
            density,
            sample_count: 0,
            off_grid_queries: AtomicUsize::new(0),
        })
    }

    pub fn n_rollouts(&self) -> usize {
        self.n_rollouts
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn grid(&self) -> Vec<f64> {
        rollout_grid(self.n_rollouts)
    }

    pub fn bin_mass(&self) -> &[f64] {
        &self.mass
    }

    /// Floored CDF at each grid point.
    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    /// CDF before flooring.
    pub fn raw_cdf_values(&self) -> &[f64] {
        &self.raw_cdf
    }

    /// Floored density at each grid point.
    pub fn density_values(&self) -> &[f64] {
        &self.density
    }

    pub fn cdf_floor(&self) -> f64 {
        1.0 / (self.sample_count + 1) as f64
    }

    pub fn density_floor(&self) -> f64 {
        0.5 * self.n_rollouts as f64 / (self.sample_count + 1) as f64
    }

    /// Largest per-unit-length density before flooring.
    pub fn max_density(&self) -> f64 {
        self.mass
            .iter()
            .fold(0.0, |a: f64, m| a.max(m * self.n_rollouts as f64))
    }

    /// Number of queries so far that were not on the grid.
    pub fn off_grid_queries(&self) -> usize {
        self.off_grid_queries.load(Ordering::Relaxed)
    }

    fn bin_of(&self, p: f64) -> usize {
        let scaled = p * self.n_rollouts as f64;
        if (scaled - libm::round(scaled)).abs() > GRID_TOLERANCE
            || !(1.0 - GRID_TOLERANCE..=self.n_rollouts as f64 - 1.0 + GRID_TOLERANCE).contains(&scaled)
        {
            self.off_grid_queries.fetch_add(1, Ordering::Relaxed);
        }
        nearest_grid_index(p, self.n_rollouts).clamp(1, self.n_rollouts - 1) - 1
    }

    /// Floored CDF at the grid point nearest to `p`.
    pub fn cdf_at(&self, p: f64) -> f64 {
        self.cdf[self.bin_of(p)]
    }

    /// Floored density at the grid point nearest to `p`.
    pub fn density_at(&self, p: f64) -> f64 {
        self.density[self.bin_of(p)]
    }

    /// `p * f(p) / F(p)` at every grid point: the log-distortion weight
    /// relative to MaxRL's `1/p`.
    pub fn log_relative_multipliers(&self) -> Vec<f64> {
        self.grid()
            .into_iter()
            .zip(self.density.iter().zip(&self.cdf))
            .map(|(p, (f, c))| p * f / c)
            .collect()
    }
}

impl ReferenceCurve for ReferenceDistribution {
    fn cdf(&self, p: f64) -> f64 {
        self.cdf_at(p)
    }
    fn density(&self, p: f64) -> f64 {
        self.density_at(p)
    }
}

/// `W_1(a, b) = sum_k |F_a(k/N) - F_b(k/N)| / N` on unfloored CDFs.
pub fn wasserstein1(a: &ReferenceDistribution, b: &ReferenceDistribution) -> Result<f64> {
    if a.n_rollouts != b.n_rollouts {
        return Err(Error::GridMismatch(a.n_rollouts, b.n_rollouts));
    }
    let n = a.n_rollouts as f64;
    Ok(a.raw_cdf
        .iter()
        .zip(&b.raw_cdf)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

/// The reference handed to the weight schemes during training.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Exact uniform `F(p) = p`; MaxRL-equivalent.
    Uniform,
    Histogram(ReferenceDistribution),
}

impl Reference {
    pub fn is_uniform(&self) -> bool {
        matches!(self, Self::Uniform)
    }

    pub fn histogram(&self) -> Option<&ReferenceDistribution> {
        match self {
            Self::Uniform => None,
            Self::Histogram(h) => Some(h),
        }
    }
}

impl ReferenceCurve for Reference {
    fn cdf(&self, p: f64) -> f64 {
        match self {
            Self::Uniform => Uniform.cdf(p),
            Self::Histogram(h) => h.cdf_at(p),
        }
    }
    fn density(&self, p: f64) -> f64 {
        match self {
            Self::Uniform => Uniform.density(p),
            Self::Histogram(h) => h.density_at(p),
        }
    }
}

/// FIFO store of recent active pass rates, evicted by step tag.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingWindow {
    t0: u64,
    capacity: usize,
    entries: VecDeque<(u64, f64)>,
}

impl SlidingWindow {
    /// Window covering the last `t0` steps of at most `batch_size` rates each.
    pub fn new(t0: u64, batch_size: usize) -> Result<Self> {
        if t0 == 0 {
            return Err(invalid("t0", "must be positive"));
        }
        if batch_size == 0 {
            return Err(invalid("batch_size", "must be positive"));
        }
        let capacity = usize::try_from(t0)
            .ok()
            .and_then(|t| t.checked_mul(batch_size))
            .ok_or_else(|| invalid("t0", "window capacity overflows"))?;
        Ok(Self {
            t0,
            capacity,
            entries: VecDeque::new(),
        })
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|&(_, p)| p)
    }

    /// Appends the rates of `step` that lie strictly inside (0, 1), then
    /// evicts every entry tagged `<= step - t0`.
    pub fn push_batch(&mut self, step: u64, pass_rates: &[f64]) -> Result<usize> {
        let mut appended = 0;
        for &p in pass_rates {
            if p > 0.0 && p < 1.0 {
                self.entries.push_back((step, p));
                appended += 1;
            }
        }
        if let Some(cutoff) = step.checked_sub(self.t0) {
            while self.entries.front().is_some_and(|&(s, _)| s <= cutoff) {
                self.entries.pop_front();
            }
        }
        if self.entries.len() > self.capacity {
            return Err(Error::WindowOverflow {
                len: self.entries.len(),
                capacity: self.capacity,
            });
        }
        Ok(appended)
    }
}

/// Continuous reference built from pass rates: a piecewise-linear CDF over
/// `bins` equal-width bins mixed with a small uniform component so the
/// density is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedHistogram {
    bin_mass: Vec<f64>,
    cumulative: Vec<f64>,
    uniform_share: f64,
}

impl SmoothedHistogram {
    pub fn from_rates(rates: &[f64], weights: &[f64], bins: usize, uniform_share: f64) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("bins", "must be positive"));
        }
        if !(0.0..1.0).contains(&uniform_share) {
            return Err(invalid("uniform_share", "must lie in [0, 1)"));
        }
        if rates.len() != weights.len() {
            return Err(invalid("weights", "need one weight per rate"));
        }
        let mut bin_mass = vec![0.0; bins];
        for (&p, &w) in rates.iter().zip(weights) {
            let b = ((p * bins as f64) as usize).min(bins - 1);
            bin_mass[b] += w;
        }
        let total: f64 = bin_mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::ColdStart);
        }
        for m in &mut bin_mass {
            *m /= total;
        }
        let mut cumulative = Vec::with_capacity(bins + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for m in &bin_mass {
            acc += m;
            cumulative.push(acc);
        }
        Ok(Self {
            bin_mass,
            cumulative,
            uniform_share,
        })
    }

    fn locate(&self, p: f64) -> (usize, f64) {
        let bins = self.bin_mass.len();
        let scaled = p.clamp(0.0, 1.0) * bins as f64;
        let b = (scaled as usize).min(bins - 1);
        (b, scaled - b as f64)
    }
}

impl ReferenceCurve for SmoothedHistogram {
    fn cdf(&self, p: f64) -> f64 {
        let (b, frac) = self.locate(p);
        let hist = self.cumulative[b] + frac * self.bin_mass[b];
        (1.0 - self.uniform_share) * hist + self.uniform_share * p.clamp(0.0, 1.0)
    }
    fn density(&self, p: f64) -> f64 {
        let (b, _) = self.locate(p);
        (1.0 - self.uniform_share) * self.bin_mass[b] * self.bin_mass.len() as f64 + self.uniform_share
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passrate::PromptInstance;

    fn window_of(rates: &[f64]) -> SlidingWindow {
        let mut w = SlidingWindow::new(10, 1000).unwrap();
        w.push_batch(0, rates).unwrap();
        w
    }

    #[test]
    fn single_point_histogram() {
        let r = ReferenceDistribution::estimate(&window_of(&[0.5]), 8).unwrap();
        assert_eq!(r.bin_mass()[3], 1.0);
        assert_eq!(r.cdf_at(0.5), 1.0);
        assert_eq!(r.density_at(0.5), 8.0);
    }

    #[test]
    fn uniform_over_grid_prefix_sums() {
        let rates: Vec<f64> = rollout_grid(8);
        let r = ReferenceDistribution::estimate(&window_of(&rates), 8).unwrap();
        for k in 1..8 {
            let expected = k as f64 / 7.0;
            assert!((r.cdf_at(k as f64 / 8.0) - expected).abs() < 1e-12);
        }
        assert_eq!(r.off_grid_queries(), 0);
    }

    #[test]
    fn empty_window_signals_cold_start() {
        let w = SlidingWindow::new(3, 4).unwrap();
        assert_eq!(ReferenceDistribution::estimate(&w, 8), Err(Error::ColdStart));
    }

    #[test]
    fn floors_apply_to_empty_bins() {
        let r = ReferenceDistribution::estimate(&window_of(&[7.0 / 8.0]), 8).unwrap();
        assert_eq!(r.cdf_at(1.0 / 8.0), 0.5);
        assert_eq!(r.density_at(1.0 / 8.0), 0.5 * 8.0 / 2.0);
        assert_eq!(r.cdf_at(7.0 / 8.0), 1.0);
        assert_eq!(r.density_at(0.5), r.density_floor());
    }

    #[test]
    fn off_grid_queries_snap_and_count() {
        let r = ReferenceDistribution::estimate(&window_of(&[0.25, 0.5]), 4).unwrap();
        assert_eq!(r.cdf_at(0.26), r.cdf_at(0.25));
        assert_eq!(r.off_grid_queries(), 1);
    }

    #[test]
    fn uniform_reference_values() {
        let u = Reference::Uniform;
        assert_eq!(u.cdf(0.25), 0.25);
        for p in rollout_grid(8) {
            assert_eq!(u.density(p), 1.0);
        }
    }

    #[test]
    fn last_grid_point_has_full_mass() {
        let r = ReferenceDistribution::estimate(&window_of(&[0.125, 0.375, 0.375, 0.5]), 8).unwrap();
        assert_eq!(r.cdf_at(7.0 / 8.0), 1.0);
        assert!(r.cdf_values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn window_evicts_by_step() {
        let mut w = SlidingWindow::new(1, 4).unwrap();
        w.push_batch(0, &[0.25, 0.5, 0.75]).unwrap();
        w.push_batch(1, &[0.125]).unwrap();
        assert_eq!(w.entries().collect::<Vec<_>>(), vec![(1, 0.125)]);
    }

    #[test]
    fn window_drops_inactive_rates() {
        let mut w = SlidingWindow::new(2, 3).unwrap();
        assert_eq!(w.push_batch(0, &[0.0, 0.5, 1.0]).unwrap(), 1);
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn window_rejects_zero_t0_and_overflow() {
        assert!(SlidingWindow::new(0, 4).is_err());
        let mut w = SlidingWindow::new(1, 2).unwrap();
        assert!(matches!(
            w.push_batch(0, &[0.1, 0.2, 0.3]),
            Err(Error::WindowOverflow { .. })
        ));
    }

    #[test]
    fn exact_policy_binning() {
        let prompts = vec![
            PromptInstance::new(0, vec![0.0, libm::log(3.0)], vec![0]).unwrap(),
            PromptInstance::new(1, vec![libm::log(3.0), 0.0], vec![0]).unwrap(),
        ];
        let pop = PromptPopulation::uniform(prompts).unwrap();
        let r = ReferenceDistribution::exact_policy_distribution(&pop, 8).unwrap();
        let mut expected = vec![0.0; 7];
        expected[1] = 0.5;
        expected[5] = 0.5;
        for (m, e) in r.bin_mass().iter().zip(expected) {
            assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn wasserstein_examples() {
        let a = ReferenceDistribution::from_rates(&[0.25], None, 8).unwrap();
        let b = ReferenceDistribution::from_rates(&[0.75], None, 8).unwrap();
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        assert!((wasserstein1(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        let c = ReferenceDistribution::from_rates(&[0.5], None, 4).unwrap();
        assert_eq!(wasserstein1(&a, &c), Err(Error::GridMismatch(8, 4)));
    }

    #[test]
    fn analytic_references_are_cdfs() {
        let refs: [&dyn ReferenceCurve; 3] = [
            &TruncatedExponential { lambda: 4.0 },
            &ReflectedTruncatedExponential { lambda: 4.0 },
            &SmoothedHistogram::from_rates(&[0.1, 0.4, 0.45], &[1.0, 1.0, 2.0], 10, 0.05).unwrap(),
        ];
        for r in refs {
            assert!(r.cdf(0.0).abs() < 1e-15);
            assert!((r.cdf(1.0) - 1.0).abs() < 1e-12);
            let h = 1e-6;
            for p in [0.15, 0.33, 0.62, 0.87] {
                let fd = (r.cdf(p + h) - r.cdf(p - h)) / (2.0 * h);
                assert!((fd - r.density(p)).abs() < 1e-5, "p={p}: {fd} vs {}", r.density(p));
            }
        }
    }
}
