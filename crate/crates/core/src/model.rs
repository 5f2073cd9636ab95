//! Domain types for a pool of names driven by a common systematic factor.

use std::fmt;

use crate::error::{Error, Result};
use crate::real::{positive_part, Real};

/// Default validation cap on every parameter magnitude. Large enough that any
/// realistic input passes.
pub const DEFAULT_CAP: f64 = 1.0e6;

/// Intensity parameters of one name (its "type").
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NameParams<T> {
    /// Mean-reversion speed.
    pub alpha: T,
    /// Mean-reversion level.
    pub lambda_bar: T,
    /// Idiosyncratic volatility of the square-root diffusion.
    pub sigma: T,
    /// Contagion sensitivity: jump per unit of pool loss.
    pub beta_c: T,
    /// Sensitivity to the systematic factor (any sign).
    pub beta_s: T,
}

impl<T: Real> NameParams<T> {
    pub fn new(alpha: T, lambda_bar: T, sigma: T, beta_c: T, beta_s: T) -> Self {
        Self {
            alpha,
            lambda_bar,
            sigma,
            beta_c,
            beta_s,
        }
    }

    fn fields(&self) -> [(&'static str, T, bool); 5] {
        [
            ("alpha", self.alpha, true),
            ("lambda_bar", self.lambda_bar, true),
            ("sigma", self.sigma, true),
            ("beta_c", self.beta_c, true),
            ("beta_s", self.beta_s, false),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolEntry<T> {
    pub params: NameParams<T>,
    /// Initial intensity of every name in this entry.
    pub lambda0: T,
    /// Number of names sharing these parameters.
    pub weight: usize,
}

/// Empirical type / initial-intensity distribution of a pool, stored as a
/// weighted list. Names are numbered by expanding the entries in order.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolSpec<T> {
    pub entries: Vec<PoolEntry<T>>,
}

impl<T: Real> PoolSpec<T> {
    pub fn new(entries: Vec<PoolEntry<T>>) -> Self {
        Self { entries }
    }

    pub fn homogeneous(params: NameParams<T>, lambda0: T, names: usize) -> Self {
        Self {
            entries: vec![PoolEntry {
                params,
                lambda0,
                weight: names,
            }],
        }
    }

    /// Total number of names `N`.
    pub fn size(&self) -> usize {
        self.entries.iter().map(|e| e.weight).sum()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.entries.len() == 1
    }

    /// The same pool with a different total count. Only defined for homogeneous pools.
    pub fn with_size(&self, names: usize) -> Result<Self> {
        if !self.is_homogeneous() {
            return Err(Error::invalid("only a homogeneous pool can be resized"));
        }
        let e = self.entries[0];
        Ok(Self::homogeneous(e.params, e.lambda0, names))
    }

    /// `(params, lambda0, fraction of the pool)` per entry.
    pub fn buckets(&self) -> Vec<(NameParams<T>, T, T)> {
        let n = T::from_count(self.size().max(1));
        self.entries
            .iter()
            .map(|e| (e.params, e.lambda0, T::from_count(e.weight) / n))
            .collect()
    }

    /// Per-name `(params, lambda0)` in name-index order.
    pub fn names(&self) -> impl Iterator<Item = (NameParams<T>, T)> + '_ {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n((e.params, e.lambda0), e.weight))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Negative(&'static str),
    ExceedsCap(&'static str),
    NotFinite(&'static str),
    ZeroWeight { entry: usize },
    EmptyPool,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Negative(name) => write!(f, "{name} negative"),
            Violation::ExceedsCap(name) => write!(f, "{name} exceeds cap"),
            Violation::NotFinite(name) => write!(f, "{name} not finite"),
            Violation::ZeroWeight { entry } => write!(f, "entry {entry} has zero weight"),
            Violation::EmptyPool => write!(f, "N = 0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<(Option<usize>, Violation)>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations
            .iter()
            .map(|(entry, v)| match entry {
                Some(i) => format!("entry {i}: {v}"),
                None => v.to_string(),
            })
            .collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidInput(self.messages().join("; ")))
        }
    }
}

fn check_field<T: Real>(
    report: &mut ValidationReport,
    entry: usize,
    name: &'static str,
    value: T,
    nonnegative: bool,
    cap: T,
) {
    if !value.is_finite() {
        report.violations.push((Some(entry), Violation::NotFinite(name)));
        return;
    }
    if nonnegative && value < T::zero() {
        report.violations.push((Some(entry), Violation::Negative(name)));
    }
    if value.abs() > cap {
        report.violations.push((Some(entry), Violation::ExceedsCap(name)));
    }
}

/// Checks the standing sign and boundedness conditions on a pool. Never fails;
/// problems are collected in the report.
pub fn validate_pool<T: Real>(pool: &PoolSpec<T>, cap: T) -> ValidationReport {
    let mut report = ValidationReport::default();
    if pool.size() == 0 {
        report.violations.push((None, Violation::EmptyPool));
    }
    for (i, e) in pool.entries.iter().enumerate() {
        for (name, value, nonneg) in e.params.fields() {
            check_field(&mut report, i, name, value, nonneg, cap);
        }
        check_field(&mut report, i, "lambda0", e.lambda0, true, cap);
        if e.weight == 0 {
            report.violations.push((Some(i), Violation::ZeroWeight { entry: i }));
        }
    }
    report
}

/// Dynamics of the systematic factor `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskKind<T> {
    /// `X` is frozen at `x0`; systematic terms are inert.
    None,
    BrownianMotion,
    OrnsteinUhlenbeck {
        kappa: T,
        theta: T,
        epsilon: T,
    },
    /// Square-root diffusion `dX = kappa (theta - X) dt + epsilon sqrt(X) dV`.
    Cir {
        kappa: T,
        theta: T,
        epsilon: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystematicRiskModel<T> {
    pub kind: RiskKind<T>,
    pub x0: T,
}

impl<T: Real> SystematicRiskModel<T> {
    pub fn new(kind: RiskKind<T>, x0: T) -> Self {
        Self { kind, x0 }
    }

    pub fn cir(kappa: T, theta: T, epsilon: T, x0: T) -> Self {
        Self::new(RiskKind::Cir { kappa, theta, epsilon }, x0)
    }

    pub fn brownian(x0: T) -> Self {
        Self::new(RiskKind::BrownianMotion, x0)
    }

    pub fn none(x0: T) -> Self {
        Self::new(RiskKind::None, x0)
    }

    /// Drift `b0(x)`.
    #[inline]
    pub fn drift(&self, x: T) -> T {
        match self.kind {
            RiskKind::None | RiskKind::BrownianMotion => T::zero(),
            RiskKind::OrnsteinUhlenbeck { kappa, theta, .. } | RiskKind::Cir { kappa, theta, .. } => {
                kappa * (theta - x)
            }
        }
    }

    /// Diffusion coefficient `sigma0(x)`; the CIR root is taken of `max(0, x)`.
    #[inline]
    pub fn vol(&self, x: T) -> T {
        match self.kind {
            RiskKind::None => T::zero(),
            RiskKind::BrownianMotion => T::one(),
            RiskKind::OrnsteinUhlenbeck { epsilon, .. } => epsilon,
            RiskKind::Cir { epsilon, .. } => epsilon * positive_part(x).sqrt(),
        }
    }

    pub fn is_cir(&self) -> bool {
        matches!(self.kind, RiskKind::Cir { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() {
            return Err(Error::invalid("x0 not finite"));
        }
        match self.kind {
            RiskKind::Cir { kappa, theta, epsilon } => {
                for (name, v) in [("kappa", kappa), ("theta", theta), ("epsilon", epsilon)] {
                    if !(v >= T::zero()) || !v.is_finite() {
                        return Err(Error::InvalidInput(format!("CIR {name} must be finite and >= 0")));
                    }
                }
                if self.x0 < T::zero() {
                    return Err(Error::invalid("CIR x0 must be >= 0"));
                }
            }
            RiskKind::OrnsteinUhlenbeck { kappa, theta, epsilon } => {
                if !(kappa.is_finite() && theta.is_finite() && epsilon.is_finite()) {
                    return Err(Error::invalid("OU coefficients must be finite"));
                }
            }
            RiskKind::None | RiskKind::BrownianMotion => {}
        }
        Ok(())
    }
}

/// Uniform time grid `t_j = j * delta`, `j = 0..=steps`, with the subset of
/// steps at which losses are recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    pub delta: T,
    pub horizon: T,
    pub steps: usize,
    pub sample_steps: Vec<usize>,
}

fn grid_index<T: Real>(t: T, delta: T) -> Option<usize> {
    let ratio = t / delta;
    let j = ratio.round();
    if j < T::zero() {
        return None;
    }
    let tol = T::lit(1e-6) * j.max(T::one());
    if (ratio - j).abs() > tol {
        return None;
    }
    j.to_usize()
}

impl<T: Real> TimeGrid<T> {
    /// Grid on `[0, horizon]`; the horizon must be a whole number of steps.
    /// Losses are sampled at the horizon only.
    pub fn new(delta: T, horizon: T) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::invalid("time step must be positive"));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::invalid("horizon must be positive"));
        }
        let steps = grid_index(horizon, delta)
            .filter(|&j| j > 0)
            .ok_or_else(|| Error::invalid("horizon is not a whole number of time steps"))?;
        Ok(Self {
            delta,
            horizon,
            steps,
            sample_steps: vec![steps],
        })
    }

    pub fn with_sample_times(mut self, times: &[T]) -> Result<Self> {
        let mut steps = Vec::with_capacity(times.len());
        for &t in times {
            let j = grid_index(t, self.delta)
                .filter(|&j| j <= self.steps)
                .ok_or_else(|| Error::InvalidInput(format!("sample time {t} is not a grid time")))?;
            steps.push(j);
        }
        if steps.is_empty() {
            return Err(Error::invalid("at least one sample time is required"));
        }
        self.sample_steps = steps;
        Ok(self)
    }

    #[inline]
    pub fn time(&self, j: usize) -> T {
        T::from_count(j) * self.delta
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.steps).map(|j| self.time(j)).collect()
    }

    pub fn sample_times(&self) -> Vec<T> {
        self.sample_steps.iter().map(|&j| self.time(j)).collect()
    }

    /// Whether `other` has the same step and length.
    pub fn matches(&self, steps: usize, delta: T) -> bool {
        self.steps == steps && (self.delta - delta).abs() <= T::epsilon() * self.delta * T::lit(16.0)
    }
}

/// Monte Carlo settings. `parallelism` is a worker-count hint and never changes results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub trials: usize,
    pub master_seed: u64,
    pub parallelism: Option<usize>,
}

impl SimConfig {
    pub fn new(trials: usize, master_seed: u64) -> Self {
        Self {
            trials,
            master_seed,
            parallelism: None,
        }
    }

    pub fn with_parallelism(mut self, threads: usize) -> Self {
        self.parallelism = Some(threads);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.parallelism == Some(0) {
            return Err(Error::invalid("parallelism must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> NameParams<f64> {
        NameParams::new(4.0, 0.2, 0.9, 2.0, 2.0)
    }

    #[test]
    fn figure_one_pool_validates() {
        let pool = PoolSpec::homogeneous(fig1(), 0.2, 1000);
        assert!(validate_pool(&pool, 100.0).is_ok());
    }

    #[test]
    fn negative_sigma_is_reported() {
        let mut p = fig1();
        p.sigma = -1.0;
        let report = validate_pool(&PoolSpec::homogeneous(p, 0.2, 10), DEFAULT_CAP);
        assert_eq!(report.violations, vec![(Some(0), Violation::Negative("sigma"))]);
        assert_eq!(report.messages(), vec!["entry 0: sigma negative".to_string()]);
    }

    #[test]
    fn empty_pool_is_reported() {
        let report = validate_pool(&PoolSpec::<f64>::new(vec![]), DEFAULT_CAP);
        assert_eq!(report.violations, vec![(None, Violation::EmptyPool)]);
        assert_eq!(report.messages(), vec!["N = 0".to_string()]);
    }

    #[test]
    fn cap_applies_to_magnitude_of_beta_s() {
        let mut p = fig1();
        p.beta_s = -200.0;
        let report = validate_pool(&PoolSpec::homogeneous(p, 0.2, 10), 100.0);
        assert_eq!(report.violations, vec![(Some(0), Violation::ExceedsCap("beta_s"))]);
    }

    #[test]
    fn grid_rejects_bad_steps() {
        assert!(TimeGrid::new(0.0, 1.0).is_err());
        assert!(TimeGrid::new(-0.01, 1.0).is_err());
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        let g = TimeGrid::new(0.01, 1.0).unwrap();
        assert_eq!(g.steps, 100);
        assert!(g.clone().with_sample_times(&[0.255]).is_err());
        let g = g.with_sample_times(&[0.25, 0.5, 1.0]).unwrap();
        assert_eq!(g.sample_steps, vec![25, 50, 100]);
    }
}
