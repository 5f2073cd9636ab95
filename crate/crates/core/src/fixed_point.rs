//! Picard iteration for the contagion rate of the limiting system along a
//! fixed common-noise path.
//!
//! Given a contagion rate `Q`, the effective intensity of a bucket solves
//!
//! ```text
//! d lambda* = -alpha (lambda* - lambda_bar) dt + Q(t) dt + sigma sqrt(lambda*) dW* + beta_s lambda* dX
//! ```
//!
//! and the map `Q -> beta_c E[lambda*_t exp(-int_0^t lambda*)]` is iterated
//! from `Q = 0` with the inner noise `W*` held fixed.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{validate_pool, NameParams, PoolSpec, SimConfig, SystematicRiskModel, TimeGrid, DEFAULT_CAP};
use crate::parallel::map_trials;
use crate::real::{positive_part, Real};
use crate::risk::{trial_risk_path, RiskPath};
use crate::rng::{derive_stream, Purpose, StreamId};
use crate::stats::LossSamples;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    /// Inner Monte Carlo paths of `lambda*` per bucket.
    pub inner_trials: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Independent blocks the inner paths are split into for the standard
    /// error.
    pub groups: usize,
    pub seed: u64,
    pub parallelism: Option<usize>,
}

impl FixedPointConfig {
    pub fn new(inner_trials: usize, tol: f64, seed: u64) -> Self {
        Self {
            inner_trials,
            tol,
            max_iter: 50,
            groups: 10,
            seed,
            parallelism: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.inner_trials < 1 {
            return Err(Error::invalid("inner_trials must be >= 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.groups < 1 {
            return Err(Error::invalid("groups must be >= 1"));
        }
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Converged contagion rate on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ContagionRate<T> {
    /// `Q(t_j) = sum_b w_b beta_c_b E[lambda*_b exp(-int lambda*_b)]`.
    pub q: Vec<T>,
    /// Aggregate default rate `sum_b w_b E[lambda*_b exp(-int lambda*_b)]`;
    /// bucket `b` is driven by `beta_c_b` times this rate.
    pub loss_rate: Vec<T>,
    pub iterations: usize,
    pub final_change: T,
    /// Sup-norm change of every iteration.
    pub changes: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution<T> {
    pub times: Vec<T>,
    pub rate: ContagionRate<T>,
    pub loss: Vec<T>,
    /// Monte Carlo standard error of `loss` (NaN with a single group).
    pub loss_se: Vec<T>,
    /// Smallest `lambda*` seen in the final iteration.
    pub min_intensity: T,
}

/// Per-chunk sums over inner paths, one entry per grid time.
struct Moments<T> {
    rate: Vec<T>,
    survival: Vec<T>,
    min_intensity: T,
}

impl<T: Real> Moments<T> {
    fn zeros(n: usize) -> Self {
        Self {
            rate: vec![T::zero(); n],
            survival: vec![T::zero(); n],
            min_intensity: T::infinity(),
        }
    }

    fn absorb(&mut self, other: &Self) {
        for j in 0..self.rate.len() {
            self.rate[j] += other.rate[j];
            self.survival[j] += other.survival[j];
        }
        self.min_intensity = self.min_intensity.min(other.min_intensity);
    }
}

/// Simulates inner paths `paths` of one bucket under the aggregate loss
/// rate `driver`. Survival is accumulated as `s_{j+1} = s_j (1 - dt lambda_j)`,
/// the same forward-Euler discretisation of `ds = -lambda s dt` that the
/// moment solver applies to `u_0`.
#[allow(clippy::too_many_arguments)]
fn inner_chunk<T: Real>(
    params: &NameParams<T>,
    lambda0: T,
    bucket: usize,
    paths: Range<usize>,
    driver: &[T],
    risk: &RiskPath<T>,
    dt: T,
    seed: u64,
) -> Moments<T> {
    let n = risk.x.len();
    let sqrt_dt = dt.sqrt();
    let mut acc = Moments::<T>::zeros(n);
    for k in paths {
        let mut rng = derive_stream(seed, StreamId::new(Purpose::EffectiveBrownian, k, bucket));
        let mut lam = lambda0;
        let mut survival = T::one();
        for j in 0..n {
            acc.rate[j] += lam * survival;
            acc.survival[j] += survival;
            acc.min_intensity = acc.min_intensity.min(lam);
            if j + 1 == n {
                break;
            }
            survival = positive_part(survival * (T::one() - dt * lam));
            let z = T::standard_normal(&mut rng);
            lam = positive_part(
                lam + (params.alpha * (params.lambda_bar - lam) + params.beta_c * driver[j]) * dt
                    + params.sigma * lam.sqrt() * sqrt_dt * z
                    + params.beta_s * lam * risk.dx(j),
            );
        }
    }
    acc
}

/// One independent replica of the iteration over a block of inner paths.
struct Replica<T> {
    paths: Range<usize>,
    rate: Vec<T>,
    q: Vec<T>,
    loss: Vec<T>,
    min_intensity: T,
}

fn sup_change<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Solves for the contagion rate and limiting loss along `risk`.
///
/// The inner paths are split into `cfg.groups` blocks, each iterated to its
/// own fixed point; the reported solution averages the blocks and the
/// standard error is their spread, which includes the noise that feeds back
/// through the estimated contagion rate.
pub fn solve_fixed_point<T: Real>(
    pool: &PoolSpec<T>,
    risk: &RiskPath<T>,
    grid: &TimeGrid<T>,
    cfg: &FixedPointConfig,
) -> Result<FixedPointSolution<T>> {
    validate_pool(pool, T::lit(DEFAULT_CAP)).into_result()?;
    cfg.validate()?;
    risk.check_grid(grid)?;
    let buckets = pool.buckets();
    let n = grid.steps + 1;
    let m = cfg.inner_trials;
    let groups = cfg.groups.min(m);
    let tol = T::lit(cfg.tol);

    let mut replicas: Vec<Replica<T>> = (0..groups)
        .map(|g| Replica {
            paths: g * m / groups..(g + 1) * m / groups,
            rate: vec![T::zero(); n],
            q: vec![T::zero(); n],
            loss: vec![T::zero(); n],
            min_intensity: T::infinity(),
        })
        .collect();
    let work: Vec<(usize, Range<usize>)> = replicas
        .iter()
        .enumerate()
        .flat_map(|(g, r)| {
            r.paths
                .clone()
                .step_by(CHUNK)
                .map(move |start| (g, start..(start + CHUNK).min(r.paths.end)))
        })
        .collect();

    let mut changes = Vec::new();
    for iteration in 1..=cfg.max_iter {
        let mut sums: Vec<Vec<Moments<T>>> = (0..groups).map(|_| Vec::with_capacity(buckets.len())).collect();
        for (b, (params, lambda0, _)) in buckets.iter().enumerate() {
            let parts = map_trials(work.len(), cfg.parallelism, |c| {
                let (g, ref range) = work[c];
                Ok(inner_chunk(
                    params,
                    *lambda0,
                    b,
                    range.clone(),
                    &replicas[g].rate,
                    risk,
                    grid.delta,
                    cfg.seed,
                ))
            })?;
            let mut totals: Vec<Moments<T>> = (0..groups).map(|_| Moments::zeros(n)).collect();
            for ((g, _), part) in work.iter().zip(&parts) {
                totals[*g].absorb(part);
            }
            for (g, total) in totals.into_iter().enumerate() {
                sums[g].push(total);
            }
        }

        let mut change = T::zero();
        for (replica, per_bucket) in replicas.iter_mut().zip(&sums) {
            let inv = T::one() / T::from_count(replica.paths.len());
            let mut rate = vec![T::zero(); n];
            let mut q = vec![T::zero(); n];
            let mut loss = vec![T::zero(); n];
            let mut min_intensity = T::infinity();
            for ((params, _, w), acc) in buckets.iter().zip(per_bucket) {
                min_intensity = min_intensity.min(acc.min_intensity);
                for j in 0..n {
                    let r = *w * acc.rate[j] * inv;
                    rate[j] += r;
                    q[j] += params.beta_c * r;
                    loss[j] += *w * (T::one() - acc.survival[j] * inv);
                }
            }
            change = change.max(sup_change(&q, &replica.q));
            replica.rate = rate;
            replica.q = q;
            replica.loss = loss;
            replica.min_intensity = min_intensity;
        }
        if !change.is_finite() {
            return Err(Error::Instability { step: 0, time: 0.0 });
        }
        changes.push(change);
        if change < tol {
            return Ok(combine(grid, replicas, iteration, changes));
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        last_change: changes.last().and_then(|c| c.to_f64()).unwrap_or(f64::NAN),
    })
}

fn combine<T: Real>(
    grid: &TimeGrid<T>,
    replicas: Vec<Replica<T>>,
    iterations: usize,
    changes: Vec<T>,
) -> FixedPointSolution<T> {
    let n = grid.steps + 1;
    let total = T::from_count(replicas.iter().map(|r| r.paths.len()).sum());
    let g = replicas.len();
    let average = |field: &dyn Fn(&Replica<T>) -> &Vec<T>| -> Vec<T> {
        (0..n)
            .map(|j| {
                replicas
                    .iter()
                    .map(|r| T::from_count(r.paths.len()) * field(r)[j])
                    .sum::<T>()
                    / total
            })
            .collect()
    };
    let q = average(&|r| &r.q);
    let loss_rate = average(&|r| &r.rate);
    let loss = average(&|r| &r.loss);
    let loss_se = (0..n)
        .map(|j| {
            if g < 2 {
                return T::nan();
            }
            let ss: T = replicas.iter().map(|r| (r.loss[j] - loss[j]).powi(2)).sum();
            (ss / (T::from_count(g - 1) * T::from_count(g))).sqrt()
        })
        .collect();
    FixedPointSolution {
        times: grid.times(),
        rate: ContagionRate {
            q,
            loss_rate,
            iterations,
            final_change: *changes.last().unwrap(),
            changes,
        },
        loss,
        loss_se,
        min_intensity: replicas.iter().fold(T::infinity(), |m, r| m.min(r.min_intensity)),
    }
}

/// Fixed-point losses on the shared risk paths of `sim`; outer trials run in
/// sequence and each parallelises over its inner paths.
pub fn simulate_fixed_point_loss<T: Real>(
    pool: &PoolSpec<T>,
    model: &SystematicRiskModel<T>,
    grid: &TimeGrid<T>,
    sim: &SimConfig,
    cfg: &FixedPointConfig,
) -> Result<LossSamples<T>> {
    model.validate()?;
    sim.validate()?;
    let cfg = FixedPointConfig {
        parallelism: sim.parallelism.or(cfg.parallelism),
        ..*cfg
    };
    let mut trials = Vec::with_capacity(sim.trials);
    for m in 0..sim.trials {
        let risk = trial_risk_path(model, grid, sim.master_seed, m)?;
        let sol = solve_fixed_point(pool, &risk, grid, &cfg)?;
        let loss = grid.sample_steps.iter().map(|&j| sol.loss[j]).collect();
        let x = grid.sample_steps.iter().map(|&j| risk.x[j]).collect();
        trials.push((loss, x));
    }
    Ok(LossSamples::from_trials(grid.sample_times(), trials))
}
