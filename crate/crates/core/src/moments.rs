//! Method of moments for the large-pool limit.
//!
//! The surviving-intensity density of the limit is represented by its moments
//! `u_k(t) = int lambda^k v(t, lambda) d lambda`, `k = 0..=K`, which follow a
//! hierarchy of SDEs driven by the single systematic Brownian motion. The
//! hierarchy is closed with `u_{K+1} = u_K` and integrated by Euler-Maruyama
//! along a common-noise path. The limiting loss is `L = 1 - u_0`.

use crate::error::{Error, Result};
use crate::model::{validate_pool, NameParams, PoolSpec, SimConfig, SystematicRiskModel, TimeGrid, DEFAULT_CAP};
use crate::parallel::map_trials;
use crate::real::Real;
use crate::risk::{trial_risk_path, RiskPath};
use crate::stats::LossSamples;

/// How the moment hierarchy is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentVariant {
    /// Euler-Maruyama on `u_k` with negative moments clamped to zero.
    #[default]
    Plain,
    /// Euler-Maruyama on `w_k = u_k exp(-(beta_s^2 / 2) k (k-1) int sigma0^2(X) ds)`,
    /// which removes the exponential growth term of the high moments.
    Transformed,
    /// Random ODEs for `u_0` and `eta_k = X - log(u_k) / (k beta_s)`; needs `beta_s > 0`.
    Canonical,
}

/// Moments `u_0..=u_K` of one homogeneous bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState<T> {
    pub u: Vec<T>,
    /// Which moments were clamped to zero in the last step.
    pub clamped: Vec<bool>,
    /// Total clamp events so far.
    pub clamp_events: usize,
    /// Steps after which `u_0` left `[0, 1 + 1e-6]`.
    pub mass_flags: usize,
    scratch: Vec<T>,
}

impl<T: Real> MomentState<T> {
    /// Moments of the point mass at `lambda0`: `u_k = lambda0^k`.
    pub fn point_mass(lambda0: T, truncation: usize) -> Self {
        let mut u = Vec::with_capacity(truncation + 1);
        let mut p = T::one();
        for _ in 0..=truncation {
            u.push(p);
            p *= lambda0;
        }
        Self::from_moments(u)
    }

    pub fn from_moments(u: Vec<T>) -> Self {
        let n = u.len();
        Self {
            u,
            clamped: vec![false; n],
            clamp_events: 0,
            mass_flags: 0,
            scratch: vec![T::zero(); n],
        }
    }

    /// Truncation level `K`.
    pub fn truncation(&self) -> usize {
        self.u.len() - 1
    }

    pub fn loss(&self) -> T {
        T::one() - self.u[0]
    }

    fn finish_step(&mut self) {
        for (k, v) in self.u.iter_mut().enumerate() {
            self.clamped[k] = *v < T::zero();
            if self.clamped[k] {
                *v = T::zero();
                self.clamp_events += 1;
            }
        }
        if !(self.u[0] >= T::zero() && self.u[0] <= T::one() + T::lit(1e-6)) {
            self.mass_flags += 1;
        }
    }
}

/// Drift and `dV`-loading of the `k`-th moment SDE. `coupling` is the pool's
/// aggregate first moment (`u_1` itself for a homogeneous pool); the hierarchy
/// is closed with `u_{K+1} = u_K`.
#[inline]
pub fn moment_drift_diff<T: Real>(
    k: usize,
    u: &[T],
    params: &NameParams<T>,
    model: &SystematicRiskModel<T>,
    x: T,
    coupling: T,
) -> (T, T) {
    let top = u.len() - 1;
    let kk = T::from_count(k);
    let half = T::lit(0.5);
    let (b0, s0) = (model.drift(x), model.vol(x));
    let bs = params.beta_s;
    let next = if k < top { u[k + 1] } else { u[top] };
    let mut drift = u[k] * (-params.alpha * kk + bs * b0 * kk + half * bs * bs * s0 * s0 * kk * (kk - T::one())) - next;
    if k > 0 {
        drift += u[k - 1]
            * (half * params.sigma * params.sigma * kk * (kk - T::one())
                + params.alpha * params.lambda_bar * kk
                + params.beta_c * kk * coupling);
    }
    (drift, bs * s0 * kk * u[k])
}

fn plain_step<T: Real>(
    state: &mut MomentState<T>,
    params: &NameParams<T>,
    model: &SystematicRiskModel<T>,
    x: T,
    dv: T,
    dt: T,
    coupling: T,
) {
    let mut next = std::mem::take(&mut state.scratch);
    for (k, slot) in next.iter_mut().enumerate() {
        let (drift, load) = moment_drift_diff(k, &state.u, params, model, x, coupling);
        *slot = state.u[k] + drift * dt + load * dv;
    }
    state.scratch = std::mem::replace(&mut state.u, next);
    state.finish_step();
}

/// One Euler-Maruyama step of a homogeneous moment system from `t_j` with
/// `X(t_j) = x` and Brownian increment `dv`, followed by clamping of negative moments.
pub fn step_moments<T: Real>(
    state: &mut MomentState<T>,
    params: &NameParams<T>,
    model: &SystematicRiskModel<T>,
    x: T,
    dv: T,
    dt: T,
) -> Result<()> {
    if !(dt > T::zero()) {
        return Err(Error::invalid("time step must be positive"));
    }
    let coupling = state.u[1.min(state.truncation())];
    plain_step(state, params, model, x, dv, dt, coupling);
    Ok(())
}

#[derive(Debug, Clone)]
enum Repr<T> {
    Plain(MomentState<T>),
    Transformed {
        w: MomentState<T>,
        /// `int_0^t sigma0^2(X_s) ds`, left-endpoint sums.
        integral: T,
    },
    Canonical {
        u0: T,
        /// `eta[k - 1] = eta_k`, `k = 1..=K`.
        eta: Vec<T>,
        clamp_events: usize,
    },
}

#[derive(Debug, Clone)]
struct Bucket<T> {
    weight: T,
    params: NameParams<T>,
    repr: Repr<T>,
}

impl<T: Real> Bucket<T> {
    fn u0(&self) -> T {
        match &self.repr {
            Repr::Plain(s) => s.u[0],
            Repr::Transformed { w, .. } => w.u[0],
            Repr::Canonical { u0, .. } => *u0,
        }
    }

    fn u1(&self, x: T) -> T {
        match &self.repr {
            Repr::Plain(s) => s.u[1],
            // exponent vanishes for k = 1
            Repr::Transformed { w, .. } => w.u[1],
            Repr::Canonical { eta, .. } => (self.params.beta_s * (x - eta[0])).exp(),
        }
    }

    fn moments(&self, x: T) -> Vec<T> {
        match &self.repr {
            Repr::Plain(s) => s.u.clone(),
            Repr::Transformed { w, integral } => {
                let b2 = self.params.beta_s * self.params.beta_s;
                w.u.iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        let kk = T::from_count(k);
                        v * (T::lit(0.5) * b2 * kk * (kk - T::one()) * *integral).exp()
                    })
                    .collect()
            }
            Repr::Canonical { u0, eta, .. } => {
                let bs = self.params.beta_s;
                std::iter::once(*u0)
                    .chain(
                        eta.iter()
                            .enumerate()
                            .map(|(i, &e)| (T::from_count(i + 1) * bs * (x - e)).exp()),
                    )
                    .collect()
            }
        }
    }

    fn clamp_events(&self) -> usize {
        match &self.repr {
            Repr::Plain(s) => s.clamp_events,
            Repr::Transformed { w, .. } => w.clamp_events,
            Repr::Canonical { clamp_events, .. } => *clamp_events,
        }
    }

    fn mass_flags(&self) -> usize {
        match &self.repr {
            Repr::Plain(s) => s.mass_flags,
            Repr::Transformed { w, .. } => w.mass_flags,
            Repr::Canonical { .. } => 0,
        }
    }

    fn step(&mut self, model: &SystematicRiskModel<T>, x: T, dv: T, dt: T, coupling: T) {
        let p = self.params;
        match &mut self.repr {
            Repr::Plain(s) => plain_step(s, &p, model, x, dv, dt, coupling),
            Repr::Transformed { w, integral } => {
                transformed_step(w, *integral, &p, model, x, dv, dt, coupling);
                let s0 = model.vol(x);
                *integral += s0 * s0 * dt;
            }
            Repr::Canonical { u0, eta, clamp_events } => {
                canonical_step(u0, eta, &p, model, x, dt, coupling);
                if *u0 < T::zero() {
                    *u0 = T::zero();
                    *clamp_events += 1;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn transformed_step<T: Real>(
    w: &mut MomentState<T>,
    integral: T,
    p: &NameParams<T>,
    model: &SystematicRiskModel<T>,
    x: T,
    dv: T,
    dt: T,
    coupling: T,
) {
    let top = w.truncation();
    let half = T::lit(0.5);
    let (b0, s0) = (model.drift(x), model.vol(x));
    let bs = p.beta_s;
    let b2i = bs * bs * integral;
    let mut next = std::mem::take(&mut w.scratch);
    for (k, slot) in next.iter_mut().enumerate() {
        let kk = T::from_count(k);
        let u = &w.u;
        // u_{k+1} e^{-c_k I} with c_k = beta^2 k (k-1) / 2; the closure gives w_K at the top
        let upper = if k < top { u[k + 1] * (b2i * kk).exp() } else { u[top] };
        let mut drift = u[k] * (-p.alpha * kk + bs * b0 * kk) - upper;
        if k > 0 {
            let lower = u[k - 1] * (-b2i * (kk - T::one())).exp();
            drift += lower
                * (half * p.sigma * p.sigma * kk * (kk - T::one())
                    + p.alpha * p.lambda_bar * kk
                    + p.beta_c * kk * coupling);
        }
        *slot = u[k] + drift * dt + bs * s0 * kk * u[k] * dv;
    }
    w.scratch = std::mem::replace(&mut w.u, next);
    w.finish_step();
}

fn canonical_step<T: Real>(
    u0: &mut T,
    eta: &mut [T],
    p: &NameParams<T>,
    model: &SystematicRiskModel<T>,
    x: T,
    dt: T,
    coupling: T,
) {
    let top = eta.len();
    let half = T::lit(0.5);
    let (b0, s0) = (model.drift(x), model.vol(x));
    let bs = p.beta_s;
    // log u_k, k = 1..=K
    let log_u: Vec<T> = eta
        .iter()
        .enumerate()
        .map(|(i, &e)| T::from_count(i + 1) * bs * (x - e))
        .collect();
    let mut deta = Vec::with_capacity(top);
    for k in 1..=top {
        let kk = T::from_count(k);
        let lower_ratio = if k == 1 {
            *u0 * (-log_u[0]).exp()
        } else {
            (log_u[k - 2] - log_u[k - 1]).exp()
        };
        let upper_ratio = if k < top {
            (log_u[k] - log_u[k - 1]).exp()
        } else {
            T::one()
        };
        let g = -p.alpha
            + bs * b0
            + half * bs * bs * s0 * s0 * (kk - T::one())
            + lower_ratio * (half * p.sigma * p.sigma * (kk - T::one()) + p.alpha * p.lambda_bar + p.beta_c * coupling)
            - upper_ratio / kk;
        deta.push(b0 + half * kk * bs * s0 * s0 - g / bs);
    }
    *u0 -= log_u[0].exp() * dt;
    for (e, d) in eta.iter_mut().zip(deta) {
        *e += d * dt;
    }
}

/// Moment systems of every bucket of a (possibly heterogeneous) pool, coupled
/// through the weighted first moment.
#[derive(Debug, Clone)]
pub struct HeterogeneousMomentState<T> {
    buckets: Vec<Bucket<T>>,
}

impl<T: Real> HeterogeneousMomentState<T> {
    /// One bucket per pool entry, each started from the point mass at its `lambda0`.
    pub fn new(pool: &PoolSpec<T>, truncation: usize, variant: MomentVariant, x0: T) -> Result<Self> {
        if truncation < 1 {
            return Err(Error::invalid("moment truncation K must be >= 1"));
        }
        if pool.size() == 0 {
            return Err(Error::invalid("pool has no names (N = 0)"));
        }
        let buckets = pool
            .buckets()
            .into_iter()
            .map(|(params, lambda0, weight)| {
                let repr = match variant {
                    MomentVariant::Plain => Repr::Plain(MomentState::point_mass(lambda0, truncation)),
                    MomentVariant::Transformed => Repr::Transformed {
                        w: MomentState::point_mass(lambda0, truncation),
                        integral: T::zero(),
                    },
                    MomentVariant::Canonical => {
                        if !(params.beta_s > T::zero()) {
                            return Err(Error::invalid("canonical moments need beta_s > 0"));
                        }
                        if !(lambda0 > T::zero()) {
                            return Err(Error::invalid(
                                "canonical moments need strictly positive moments (lambda0 > 0)",
                            ));
                        }
                        let eta = x0 - lambda0.ln() / params.beta_s;
                        Repr::Canonical {
                            u0: T::one(),
                            eta: vec![eta; truncation],
                            clamp_events: 0,
                        }
                    }
                };
                Ok(Bucket { weight, params, repr })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { buckets })
    }

    /// Aggregate first moment `sum_b w_b u_1^(b)`.
    pub fn coupling(&self, x: T) -> T {
        self.buckets.iter().fold(T::zero(), |acc, b| acc + b.weight * b.u1(x))
    }

    pub fn loss(&self) -> T {
        self.buckets
            .iter()
            .fold(T::zero(), |acc, b| acc + b.weight * (T::one() - b.u0()))
    }

    /// Moments of bucket `b` when the factor is at `x`.
    pub fn bucket_moments(&self, b: usize, x: T) -> Vec<T> {
        self.buckets[b].moments(x)
    }

    pub fn clamp_events(&self) -> usize {
        self.buckets.iter().map(Bucket::clamp_events).sum()
    }

    pub fn mass_flags(&self) -> usize {
        self.buckets.iter().map(Bucket::mass_flags).sum()
    }

    pub fn step(&mut self, model: &SystematicRiskModel<T>, x: T, dv: T, dt: T) {
        let coupling = self.coupling(x);
        for b in &mut self.buckets {
            b.step(model, x, dv, dt, coupling);
        }
    }
}

/// Moment solution along one risk path.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPath<T> {
    /// `L(t_j)` at every grid time.
    pub loss: Vec<T>,
    /// Aggregate first moment at every grid time.
    pub first_moment: Vec<T>,
    pub clamp_events: usize,
    pub mass_flags: usize,
}

pub fn solve_moment_path<T: Real>(
    pool: &PoolSpec<T>,
    model: &SystematicRiskModel<T>,
    risk: &RiskPath<T>,
    grid: &TimeGrid<T>,
    truncation: usize,
    variant: MomentVariant,
) -> Result<MomentPath<T>> {
    risk.check_grid(grid)?;
    let mut state = HeterogeneousMomentState::new(pool, truncation, variant, risk.x[0])?;
    let mut loss = Vec::with_capacity(grid.steps + 1);
    let mut first_moment = Vec::with_capacity(grid.steps + 1);
    loss.push(state.loss());
    first_moment.push(state.coupling(risk.x[0]));
    for j in 0..grid.steps {
        state.step(model, risk.x[j], risk.dv[j], grid.delta);
        let l = state.loss();
        if !l.is_finite() {
            return Err(Error::Instability {
                step: j + 1,
                time: grid.time(j + 1).to_f64().unwrap_or(f64::NAN),
            });
        }
        loss.push(l);
        first_moment.push(state.coupling(risk.x[j + 1]));
    }
    Ok(MomentPath {
        loss,
        first_moment,
        clamp_events: state.clamp_events(),
        mass_flags: state.mass_flags(),
    })
}

/// Samples of the limiting loss `L = 1 - u_0`, one risk path per trial.
pub fn simulate_limiting_loss<T: Real>(
    pool: &PoolSpec<T>,
    model: &SystematicRiskModel<T>,
    grid: &TimeGrid<T>,
    truncation: usize,
    sim: &SimConfig,
    variant: MomentVariant,
) -> Result<LossSamples<T>> {
    validate_pool(pool, T::lit(DEFAULT_CAP)).into_result()?;
    model.validate()?;
    sim.validate()?;
    if truncation < 1 {
        return Err(Error::invalid("moment truncation K must be >= 1"));
    }
    let trials = map_trials(sim.trials, sim.parallelism, |m| {
        let risk = trial_risk_path(model, grid, sim.master_seed, m)?;
        let path = solve_moment_path(pool, model, &risk, grid, truncation, variant)?;
        let loss = grid.sample_steps.iter().map(|&j| path.loss[j]).collect();
        let x = grid.sample_steps.iter().map(|&j| risk.x[j]).collect();
        Ok((loss, x))
    })?;
    Ok(LossSamples::from_trials(grid.sample_times(), trials))
}
