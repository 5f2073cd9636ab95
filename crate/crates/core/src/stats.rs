//! Loss-sample statistics: ECDF, VaR, Kolmogorov-Smirnov distance, Spearman
//! correlation and histograms.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Loss samples of a Monte Carlo experiment, indexed by horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSamples<T> {
    pub horizons: Vec<T>,
    /// `losses[h][m]`: loss at horizon `h` in trial `m`.
    pub losses: Vec<Vec<T>>,
    /// `x_values[h][m]`: systematic factor at horizon `h` in trial `m`.
    pub x_values: Vec<Vec<T>>,
}

impl<T: Real> LossSamples<T> {
    pub(crate) fn from_trials(horizons: Vec<T>, trials: Vec<(Vec<T>, Vec<T>)>) -> Self {
        let h = horizons.len();
        let mut losses = vec![Vec::with_capacity(trials.len()); h];
        let mut x_values = vec![Vec::with_capacity(trials.len()); h];
        for (loss, x) in trials {
            for i in 0..h {
                losses[i].push(loss[i]);
                x_values[i].push(x[i]);
            }
        }
        Self {
            horizons,
            losses,
            x_values,
        }
    }

    pub fn trials(&self) -> usize {
        self.losses.first().map_or(0, Vec::len)
    }

    /// Index of the horizon closest to `t`.
    pub fn horizon_index(&self, t: T) -> Option<usize> {
        self.horizons
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (*a.1 - t)
                    .abs()
                    .partial_cmp(&(*b.1 - t).abs())
                    .unwrap_or(Ordering::Equal)
            })
            .map(|(i, _)| i)
    }

    pub fn distribution(&self, horizon: usize) -> Result<EmpiricalDistribution<T>> {
        EmpiricalDistribution::new(self.losses[horizon].clone())
    }
}

/// Sorted sample carrying the empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution<T> {
    sorted: Vec<T>,
}

impl<T: Real> EmpiricalDistribution<T> {
    pub fn new(mut samples: Vec<T>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("empty sample"));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("sample contains NaN"));
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { sorted: samples })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.sorted
    }

    pub fn min(&self) -> T {
        self.sorted[0]
    }

    pub fn max(&self) -> T {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn mean(&self) -> T {
        self.sorted.iter().copied().sum::<T>() / T::from_count(self.len())
    }

    /// Fraction of samples `<= x`.
    pub fn ecdf(&self, x: T) -> T {
        let count = self.sorted.partition_point(|&v| v <= x);
        T::from_count(count) / T::from_count(self.len())
    }
}

/// Lower empirical quantile: the smallest sample value `x` with `ECDF(x) >= level`.
pub fn var_at_level<T: Real>(dist: &EmpiricalDistribution<T>, level: T) -> Result<T> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::InvalidInput(format!("VaR level {level} outside (0, 1)")));
    }
    let m = dist.len();
    // Guard against `level * m` landing a hair above an integer.
    let k = (level.to_f64().unwrap() * m as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(dist.sorted[k.min(m) - 1])
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F1 - F2|`.
pub fn ks_distance<T: Real>(a: &EmpiricalDistribution<T>, b: &EmpiricalDistribution<T>) -> T {
    let (xa, xb) = (&a.sorted, &b.sorted);
    let (na, nb) = (T::from_count(xa.len()), T::from_count(xb.len()));
    let (mut i, mut j) = (0, 0);
    let mut sup = T::zero();
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i] <= next {
            i += 1;
        }
        while j < xb.len() && xb[j] <= next {
            j += 1;
        }
        let gap = (T::from_count(i) / na - T::from_count(j) / nb).abs();
        if gap > sup {
            sup = gap;
        }
    }
    sup
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn midranks<T: Real>(x: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = T::from_count(start + end + 1) / T::lit(2.0);
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson<T: Real>(x: &[T], y: &[T]) -> Option<T> {
    let n = T::from_count(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == T::zero() || syy == T::zero() {
        return None;
    }
    let r = sxy / (sxx * syy).sqrt();
    Some(r.max(-T::one()).min(T::one()))
}

/// Spearman rank correlation. `Ok(None)` when either input is constant.
pub fn spearman<T: Real>(x: &[T], y: &[T]) -> Result<Option<T>> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "spearman: length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("spearman: need at least two samples"));
    }
    Ok(pearson(&midranks(x), &midranks(y)))
}

/// Approximate standard error of a Spearman coefficient from `n` pairs
/// (Fieller-Hartley-Pearson variance `1.06 / (n - 3)` on the Fisher scale).
pub fn spearman_standard_error<T: Real>(rho: T, n: usize) -> T {
    let n = T::from_count(n.max(4));
    (T::one() - rho * rho) * (T::lit(1.06) / (n - T::lit(3.0))).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    /// `bins + 1` equally spaced edges from the sample minimum to maximum.
    pub edges: Vec<T>,
    pub counts: Vec<usize>,
    /// `count / (M * width)`; for a degenerate sample `count / M`.
    pub densities: Vec<T>,
}

/// Equal-width histogram on `[min, max]`; the last bin is closed on the right.
pub fn histogram<T: Real>(dist: &EmpiricalDistribution<T>, bins: usize) -> Result<Histogram<T>> {
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let (lo, hi) = (dist.min(), dist.max());
    let width = (hi - lo) / T::from_count(bins);
    let edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * T::from_count(i) })
        .collect();
    let mut counts = vec![0usize; bins];
    for &x in dist.values() {
        let k = if width > T::zero() {
            ((x - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    let m = T::from_count(dist.len());
    let scale = if width > T::zero() { m * width } else { m };
    let densities = counts.iter().map(|&c| T::from_count(c) / scale).collect();
    Ok(Histogram {
        edges,
        counts,
        densities,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_standard_error<T: Real>(x: &[T]) -> (T, T) {
    let n = x.len();
    if n == 0 {
        return (T::nan(), T::nan());
    }
    let mean = x.iter().copied().sum::<T>() / T::from_count(n);
    if n < 2 {
        return (mean, T::zero());
    }
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / T::from_count(n - 1);
    (mean, (var / T::from_count(n)).sqrt())
}

/// Bootstrap standard error of the VaR estimator.
pub fn bootstrap_var_standard_error<T: Real, R: Rng + ?Sized>(
    samples: &[T],
    level: T,
    resamples: usize,
    rng: &mut R,
) -> Result<T> {
    if samples.is_empty() || resamples < 2 {
        return Err(Error::invalid("bootstrap needs samples and at least two resamples"));
    }
    let n = samples.len();
    let mut estimates = Vec::with_capacity(resamples);
    let mut buf = vec![T::zero(); n];
    for _ in 0..resamples {
        for slot in buf.iter_mut() {
            *slot = samples[rng.random_range(0..n)];
        }
        let dist = EmpiricalDistribution::new(buf.clone())?;
        estimates.push(var_at_level(&dist, level)?);
    }
    let (_, se) = mean_and_standard_error(&estimates);
    Ok(se * T::from_count(resamples).sqrt())
}
