//! Monte Carlo simulation of the finite pool with contagion.
//!
//! Intensities follow a truncated Euler scheme on the grid. A name defaults
//! at `t_{j+1}` once its discretised cumulative intensity crosses its Exp(1)
//! threshold; after all defaults of a step are counted, every intensity
//! receives the contagion jump `beta_c * (step loss) / N`.

use crate::error::{Error, Result};
use crate::model::{validate_pool, NameParams, PoolSpec, SimConfig, SystematicRiskModel, TimeGrid, DEFAULT_CAP};
use crate::parallel::map_trials;
use crate::real::{positive_part, Real};
use crate::risk::{trial_risk_path, RiskPath};
use crate::rng::{derive_stream, Purpose, RngStream, StreamId};
use crate::stats::LossSamples;

/// Loss given default of each name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LgdSpec<T> {
    /// Every default costs one unit.
    Unit,
    /// i.i.d. uniform loss rates on `(lo, hi)`.
    Uniform { lo: T, hi: T },
}

impl<T: Real> LgdSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if let LgdSpec::Uniform { lo, hi } = *self {
            if !(lo > T::zero() && lo <= hi && hi < T::one()) {
                return Err(Error::invalid("uniform loss given default needs 0 < lo <= hi < 1"));
            }
        }
        Ok(())
    }

    fn draw(&self, rng: &mut RngStream) -> T {
        match *self {
            LgdSpec::Unit => T::one(),
            LgdSpec::Uniform { lo, hi } => {
                let u = T::unit_uniform(rng);
                // u in [0, 1) and lo > 0 keep the draw inside (0, 1)
                lo + (hi - lo) * u
            }
        }
    }
}

/// Loss path of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialLossPath<T> {
    pub times: Vec<T>,
    pub loss: Vec<T>,
    /// `(name index, grid step of default)`.
    pub defaults: Vec<(usize, usize)>,
}

/// State of the `N` intensities of one trial.
#[derive(Debug, Clone)]
pub struct FiniteSystem<T> {
    params: Vec<NameParams<T>>,
    intensity: Vec<T>,
    /// `delta * sum_{i=1..j} lambda(t_i)`.
    integrated: Vec<T>,
    threshold: Vec<T>,
    alive: Vec<bool>,
    lgd: Option<Vec<T>>,
    noise: Vec<RngStream>,
    defaulted: usize,
    lost: T,
    step: usize,
}

impl<T: Real> FiniteSystem<T> {
    pub fn new(pool: &PoolSpec<T>, lgd: &LgdSpec<T>, master_seed: u64, trial: usize) -> Result<Self> {
        let n = pool.size();
        if n == 0 {
            return Err(Error::invalid("pool has no names (N = 0)"));
        }
        lgd.validate()?;
        let mut params = Vec::with_capacity(n);
        let mut intensity = Vec::with_capacity(n);
        for (p, l0) in pool.names() {
            params.push(p);
            intensity.push(l0);
        }
        let threshold = (0..n)
            .map(|k| {
                let mut rng = derive_stream(master_seed, StreamId::new(Purpose::ExpClock, trial, k));
                T::standard_exponential(&mut rng)
            })
            .collect();
        let lgd = match lgd {
            LgdSpec::Unit => None,
            spec => Some(
                (0..n)
                    .map(|k| {
                        let mut rng = derive_stream(master_seed, StreamId::new(Purpose::LossGivenDefault, trial, k));
                        spec.draw(&mut rng)
                    })
                    .collect(),
            ),
        };
        let noise = (0..n)
            .map(|k| derive_stream(master_seed, StreamId::new(Purpose::IdiosyncraticBrownian, trial, k)))
            .collect();
        Ok(Self {
            params,
            intensity,
            integrated: vec![T::zero(); n],
            threshold,
            alive: vec![true; n],
            lgd,
            noise,
            defaulted: 0,
            lost: T::zero(),
            step: 0,
        })
    }

    pub fn size(&self) -> usize {
        self.params.len()
    }

    /// Intensities; a defaulted name keeps the value it had when it defaulted.
    pub fn intensities(&self) -> &[T] {
        &self.intensity
    }

    pub fn is_alive(&self, name: usize) -> bool {
        self.alive[name]
    }

    pub fn defaults(&self) -> usize {
        self.defaulted
    }

    /// Current portfolio loss `L^N`.
    pub fn loss(&self) -> T {
        match self.lgd {
            None => T::from_count(self.defaulted) / T::from_count(self.size()),
            Some(_) => self.lost / T::from_count(self.size()),
        }
    }

    /// Advances from `t_j` to `t_{j+1}` given the factor increment `dx`.
    /// Returns the names defaulting at `t_{j+1}`.
    pub fn advance(&mut self, dt: T, dx: T) -> Vec<usize> {
        let sqrt_dt = dt.sqrt();
        let mut defaults = Vec::new();
        let mut jump = T::zero();
        for k in 0..self.params.len() {
            if !self.alive[k] {
                continue;
            }
            let p = &self.params[k];
            let lam = self.intensity[k];
            let z = T::standard_normal(&mut self.noise[k]);
            let tilde = positive_part(
                lam + p.alpha * (p.lambda_bar - lam) * dt
                    + p.sigma * positive_part(lam).sqrt() * sqrt_dt * z
                    + p.beta_s * lam * dx,
            );
            if self.integrated[k] + dt * tilde >= self.threshold[k] {
                self.alive[k] = false;
                defaults.push(k);
                jump += self.lgd.as_ref().map_or(T::one(), |l| l[k]);
            }
            self.intensity[k] = tilde;
        }
        let per_name = jump / T::from_count(self.params.len());
        for k in 0..self.params.len() {
            if !self.alive[k] {
                continue;
            }
            if jump > T::zero() {
                self.intensity[k] += self.params[k].beta_c * per_name;
            }
            self.integrated[k] += dt * self.intensity[k];
        }
        self.defaulted += defaults.len();
        self.lost += jump;
        self.step += 1;
        defaults
    }
}

/// Simulates one trial of the finite system along a given risk path. Name
/// streams are keyed by `(master_seed, trial, name)`.
pub fn simulate_trial<T: Real>(
    pool: &PoolSpec<T>,
    risk: &RiskPath<T>,
    lgd: &LgdSpec<T>,
    grid: &TimeGrid<T>,
    master_seed: u64,
    trial: usize,
) -> Result<TrialLossPath<T>> {
    risk.check_grid(grid)?;
    let mut system = FiniteSystem::new(pool, lgd, master_seed, trial)?;
    let mut loss = Vec::with_capacity(grid.steps + 1);
    let mut defaults = Vec::new();
    loss.push(system.loss());
    for j in 0..grid.steps {
        for k in system.advance(grid.delta, risk.dx(j)) {
            defaults.push((k, j + 1));
        }
        loss.push(system.loss());
    }
    Ok(TrialLossPath {
        times: grid.times(),
        loss,
        defaults,
    })
}

/// Runs `sim.trials` independent trials, each with its own risk path, and
/// collects `L^N` and `X` at the grid's sample horizons.
pub fn run_finite_experiment<T: Real>(
    pool: &PoolSpec<T>,
    model: &SystematicRiskModel<T>,
    lgd: &LgdSpec<T>,
    grid: &TimeGrid<T>,
    sim: &SimConfig,
) -> Result<LossSamples<T>> {
    validate_pool(pool, T::lit(DEFAULT_CAP)).into_result()?;
    model.validate()?;
    lgd.validate()?;
    sim.validate()?;
    let trials = map_trials(sim.trials, sim.parallelism, |m| {
        let risk = trial_risk_path(model, grid, sim.master_seed, m)?;
        let path = simulate_trial(pool, &risk, lgd, grid, sim.master_seed, m)?;
        let loss = grid.sample_steps.iter().map(|&j| path.loss[j]).collect();
        let x = grid.sample_steps.iter().map(|&j| risk.x[j]).collect();
        Ok((loss, x))
    })?;
    Ok(LossSamples::from_trials(grid.sample_times(), trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_standard_error;

    fn quiet(lambda0: f64, beta_c: f64, n: usize) -> PoolSpec<f64> {
        PoolSpec::homogeneous(NameParams::new(0.0, 0.0, 0.0, beta_c, 0.0), lambda0, n)
    }

    fn grid() -> TimeGrid<f64> {
        TimeGrid::new(0.01, 1.0).unwrap()
    }

    #[test]
    fn single_name_default_probability() {
        let sim = SimConfig::new(100_000, 17);
        let s = run_finite_experiment(
            &quiet(0.2, 0.0, 1),
            &SystematicRiskModel::none(0.0),
            &LgdSpec::Unit,
            &grid(),
            &sim,
        )
        .unwrap();
        let (mean, se) = mean_and_standard_error(&s.losses[0]);
        let exact = 1.0 - (-0.2f64).exp();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn large_independent_pool_obeys_lln() {
        let n = 10_000;
        let sim = SimConfig::new(1, 5);
        let s = run_finite_experiment(
            &quiet(0.2, 0.0, n),
            &SystematicRiskModel::none(0.0),
            &LgdSpec::Unit,
            &grid(),
            &sim,
        )
        .unwrap();
        let p = 1.0 - (-0.2f64).exp();
        let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((s.losses[0][0] - p).abs() < tol);
    }

    #[test]
    fn contagion_jump_is_beta_c_over_n() {
        let pool = quiet(0.5, 2.0, 2);
        let mut seen = false;
        for trial in 0..200 {
            let mut sys = FiniteSystem::new(&pool, &LgdSpec::Unit, 3, trial).unwrap();
            for _ in 0..300 {
                let before = sys.intensities().to_vec();
                let d = sys.advance(0.01, 0.0);
                if d.len() == 1 {
                    let survivor = 1 - d[0];
                    if sys.is_alive(survivor) {
                        let inc = sys.intensities()[survivor] - before[survivor];
                        assert!((inc - 1.0).abs() < 1e-12, "jump {inc}");
                        seen = true;
                    }
                }
                if d.len() == 2 {
                    break;
                }
            }
        }
        assert!(seen);
    }

    #[test]
    fn loss_paths_are_monotone_lattice_valued() {
        let pool = PoolSpec::homogeneous(NameParams::new(4.0, 0.2, 0.9, 2.0, 3.0), 0.2, 50);
        let model = SystematicRiskModel::cir(4.0, 0.5, 0.5, 0.5);
        let g = grid();
        for trial in 0..50 {
            let risk = trial_risk_path(&model, &g, 1, trial).unwrap();
            let path = simulate_trial(&pool, &risk, &LgdSpec::Unit, &g, 1, trial).unwrap();
            assert_eq!(path.loss[0], 0.0);
            assert!(path.loss.windows(2).all(|w| w[0] <= w[1]));
            for &l in &path.loss {
                let k = l * 50.0;
                assert!((k - k.round()).abs() < 1e-9);
            }
            let mut names: Vec<usize> = path.defaults.iter().map(|d| d.0).collect();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), path.defaults.len());
            assert!((path.loss[100] - path.defaults.len() as f64 / 50.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stochastic_lgd_losses_stay_in_unit_interval() {
        let pool = PoolSpec::homogeneous(NameParams::new(4.0, 0.5, 0.9, 2.0, 0.0), 1.0, 40);
        let g = grid();
        let lgd = LgdSpec::Uniform { lo: 0.3, hi: 0.7 };
        let risk = trial_risk_path(&SystematicRiskModel::none(0.0), &g, 2, 0).unwrap();
        let path = simulate_trial(&pool, &risk, &lgd, &g, 2, 0).unwrap();
        assert!(!path.defaults.is_empty());
        assert!(path.loss.windows(2).all(|w| w[0] <= w[1]));
        let last = *path.loss.last().unwrap();
        assert!(last > 0.0 && last < path.defaults.len() as f64 / 40.0);
        assert!(LgdSpec::Uniform { lo: 0.0, hi: 0.5 }.validate().is_err());
    }

    #[test]
    fn intensities_stay_nonnegative() {
        let pool = PoolSpec::homogeneous(NameParams::new(1.0, 0.05, 3.0, 1.0, -6.0), 0.05, 200);
        let model = SystematicRiskModel::cir(1.0, 0.5, 1.5, 0.5);
        let g = grid();
        let risk = trial_risk_path(&model, &g, 4, 0).unwrap();
        let mut sys = FiniteSystem::new(&pool, &LgdSpec::Unit, 4, 0).unwrap();
        for j in 0..g.steps {
            sys.advance(g.delta, risk.dx(j));
            assert!(sys.intensities().iter().all(|&l| l >= 0.0));
        }
    }

    #[test]
    fn contagion_raises_mean_loss() {
        let model = SystematicRiskModel::cir(4.0, 0.5, 0.5, 0.5);
        let sim = SimConfig::new(10_000, 21);
        let run = |bc| {
            let pool = PoolSpec::homogeneous(NameParams::new(4.0, 0.2, 0.9, bc, 2.0), 0.2, 100);
            run_finite_experiment(&pool, &model, &LgdSpec::Unit, &grid(), &sim).unwrap()
        };
        let (m2, se2) = mean_and_standard_error(&run(2.0).losses[0]);
        let (m0, se0) = mean_and_standard_error(&run(0.0).losses[0]);
        assert!(m2 >= m0 - 3.0 * (se2 * se2 + se0 * se0).sqrt(), "{m2} vs {m0}");
    }

    #[test]
    fn reruns_and_thread_counts_agree() {
        let pool = PoolSpec::homogeneous(NameParams::new(4.0, 0.2, 0.9, 2.0, 3.0), 0.2, 100);
        let model = SystematicRiskModel::cir(4.0, 0.5, 0.5, 0.5);
        let g = grid().with_sample_times(&[0.5, 1.0]).unwrap();
        let a = run_finite_experiment(&pool, &model, &LgdSpec::Unit, &g, &SimConfig::new(40, 8)).unwrap();
        let b = run_finite_experiment(
            &pool,
            &model,
            &LgdSpec::Unit,
            &g,
            &SimConfig::new(40, 8).with_parallelism(3),
        )
        .unwrap();
        assert_eq!(a, b);
        let one = run_finite_experiment(&pool, &model, &LgdSpec::Unit, &g, &SimConfig::new(1, 8)).unwrap();
        assert_eq!(one.losses[1][0], a.losses[1][0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = grid();
        let risk = trial_risk_path(&SystematicRiskModel::none(0.0), &g, 1, 0).unwrap();
        let empty = PoolSpec::<f64>::new(vec![]);
        assert!(simulate_trial(&empty, &risk, &LgdSpec::Unit, &g, 1, 0).is_err());
        let other = TimeGrid::new(0.02, 1.0).unwrap();
        assert!(matches!(
            simulate_trial(&quiet(0.2, 0.0, 3), &risk, &LgdSpec::Unit, &other, 1, 0),
            Err(Error::GridMismatch(_))
        ));
    }
}
