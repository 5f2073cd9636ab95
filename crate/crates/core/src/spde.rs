//! Explicit finite differences for the full loss SPDE along one common-noise
//! path.

use crate::deterministic::DensitySolution;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{NameParams, SimConfig, SystematicRiskModel, TimeGrid};
use crate::parallel::map_trials;
use crate::real::Real;
use crate::risk::{trial_risk_path, RiskPath};
use crate::stats::LossSamples;

/// Approximate stability bound `delta^2 / (beta_s * lambda_max)^2` on the time
/// step of the explicit scheme.
pub fn stability_threshold<T: Real>(delta: T, beta_s: T, lambda_max: T) -> Result<T> {
    if beta_s == T::zero() {
        return Err(Error::invalid(
            "stability threshold is undefined for beta_s = 0; use the deterministic solver",
        ));
    }
    if !(lambda_max > T::zero()) || !(delta > T::zero()) {
        return Err(Error::invalid("delta and lambda_max must be positive"));
    }
    let ratio = delta / (beta_s * lambda_max);
    Ok(ratio * ratio)
}

/// Estimated cost of explicit finite differences relative to the moment
/// method at a target time accuracy `target_step`.
pub fn cost_ratio_estimate<T: Real>(
    mesh_points: usize,
    moments: usize,
    target_step: T,
    delta: T,
    beta_s: T,
    lambda_max: T,
) -> T {
    let s = beta_s * lambda_max;
    let factor = (target_step * s * s / (delta * delta)).min(T::one());
    T::from_count(mesh_points) / T::from_count(moments) * factor
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdeFdConfig<T> {
    pub mesh: Mesh<T>,
    pub dt: T,
    /// Any `|v|` above this classifies the run as unstable.
    pub blow_up: T,
}

impl<T: Real> SpdeFdConfig<T> {
    pub fn new(delta: T, lambda_max: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::invalid("time step must be positive"));
        }
        Ok(Self {
            mesh: Mesh::new(delta, lambda_max)?,
            dt,
            blow_up: T::lit(1e6),
        })
    }

    pub fn with_blow_up(mut self, bound: T) -> Self {
        self.blow_up = bound;
        self
    }

    /// True when `dt` exceeds the approximate stability threshold.
    pub fn exceeds_threshold(&self, beta_s: T) -> bool {
        stability_threshold(self.mesh.delta, beta_s, self.mesh.lambda_max())
            .map(|limit| self.dt > limit)
            .unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpdeSolution<T> {
    pub solution: DensitySolution<T>,
    /// Steps on which the density undershot `-1e-3 * max(v)`.
    pub undershoot_steps: usize,
    pub stability_warning: bool,
}

/// Advances the projected initial density along `risk` with the explicit
/// three-point scheme; boundary nodes stay zero.
pub fn solve_spde_explicit<T: Real>(
    params: &NameParams<T>,
    initial: &[(T, T)],
    cfg: &SpdeFdConfig<T>,
    model: &SystematicRiskModel<T>,
    risk: &RiskPath<T>,
) -> Result<SpdeSolution<T>> {
    let steps = risk.steps();
    if steps == 0 || (risk.delta() - cfg.dt).abs() > T::lit(1e-9) * cfg.dt {
        return Err(Error::GridMismatch(format!(
            "risk path step {} does not match solver step {}",
            risk.delta(),
            cfg.dt
        )));
    }
    let mesh = &cfg.mesh;
    let (d, dt) = (mesh.delta, cfg.dt);
    let s2 = params.sigma * params.sigma;
    let undershoot_tol = T::lit(1e-3);
    let mut v = mesh.project(initial)?;
    let mut next = vec![T::zero(); v.len()];
    let mut loss = Vec::with_capacity(steps + 1);
    let mut first_moment = Vec::with_capacity(steps + 1);
    loss.push(T::one() - mesh.mass(&v));
    first_moment.push(mesh.first_moment(&v));
    let mut min_density = T::zero();
    let mut undershoot_steps = 0;
    for i in 1..=steps {
        let x = risk.x[i - 1];
        let sv = params.beta_s * model.vol(x);
        let sv2 = sv * sv;
        let shock = params.beta_s * (model.drift(x) + model.vol(x) * risk.dv[i - 1] / dt);
        let contagion = params.beta_c * mesh.first_moment(&v);
        let coefficients = |l: T| {
            let mr = params.alpha * (params.lambda_bar - l);
            let lower = contagion / (d + d) - s2 / (d + d)
                + s2 * l / (d * d + d * d)
                + sv2 * l * l / (d * d + d * d)
                + mr / (d + d)
                + shock * l / (d + d)
                - sv2 * l / d;
            let centre = T::one() / dt + params.alpha - s2 * l / (d * d) - sv2 * l * l / (d * d) - l - shock + sv2;
            let upper = -contagion / (d + d) + s2 / (d + d) + s2 * l / (d * d + d * d) + sv2 * l * l / (d * d + d * d)
                - mr / (d + d)
                - shock * l / (d + d)
                + sv2 * l / d;
            (lower, centre, upper)
        };
        // Zero flux through lambda = 0, as in the predictor-corrector scheme.
        let (_, _, reflected) = coefficients(T::zero());
        for j in 1..mesh.last {
            let (mut lower, mut centre, upper) = coefficients(mesh.node(j));
            if j == 1 {
                centre += reflected;
                lower = T::zero();
            }
            next[j] = dt * (lower * v[j - 1] + centre * v[j] + upper * v[j + 1]);
        }
        std::mem::swap(&mut v, &mut next);
        let (lo, hi) = v
            .iter()
            .fold((T::zero(), T::zero()), |(lo, hi), &x| (lo.min(x), hi.max(x.abs())));
        if !(hi <= cfg.blow_up) || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Instability {
                step: i,
                time: risk.times[i].to_f64().unwrap_or(f64::NAN),
            });
        }
        if lo < -undershoot_tol * hi {
            undershoot_steps += 1;
        }
        min_density = min_density.min(lo);
        loss.push(T::one() - mesh.mass(&v));
        first_moment.push(mesh.first_moment(&v));
    }
    Ok(SpdeSolution {
        solution: DensitySolution {
            times: risk.times.clone(),
            loss,
            first_moment,
            density: v,
            min_density,
        },
        undershoot_steps,
        stability_warning: cfg.exceeds_threshold(params.beta_s),
    })
}

/// Explicit-scheme losses on the shared risk paths of `sim`.
pub fn simulate_spde_loss<T: Real>(
    params: &NameParams<T>,
    initial: &[(T, T)],
    cfg: &SpdeFdConfig<T>,
    model: &SystematicRiskModel<T>,
    grid: &TimeGrid<T>,
    sim: &SimConfig,
) -> Result<LossSamples<T>> {
    model.validate()?;
    sim.validate()?;
    if !grid.matches(grid.steps, cfg.dt) {
        return Err(Error::GridMismatch(format!(
            "grid step {} differs from solver step {}",
            grid.delta, cfg.dt
        )));
    }
    let trials = map_trials(sim.trials, sim.parallelism, |m| {
        let risk = trial_risk_path(model, grid, sim.master_seed, m)?;
        let sol = solve_spde_explicit(params, initial, cfg, model, &risk)?;
        let loss = grid.sample_steps.iter().map(|&j| sol.solution.loss[j]).collect();
        let x = grid.sample_steps.iter().map(|&j| risk.x[j]).collect();
        Ok((loss, x))
    })?;
    Ok(LossSamples::from_trials(grid.sample_times(), trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deterministic::{analytic_no_feedback_loss, solve_pde_predictor_corrector};
    use crate::risk::trial_risk_path;

    #[test]
    fn threshold_examples() {
        assert_eq!(stability_threshold(0.1, 5.0, 10.0).unwrap(), 4e-6);
        assert!((stability_threshold(0.2f64, 5.0, 10.0).unwrap() - 1.6e-5).abs() < 1e-18);
        assert!((stability_threshold(0.1f64, 1.0, 1.0).unwrap() - 1e-2).abs() < 1e-15);
        assert!(stability_threshold(0.1, 0.0, 10.0).is_err());
    }

    #[test]
    fn cost_ratio_examples() {
        assert_eq!(cost_ratio_estimate(100, 10, 1.0, 0.1, 5.0, 10.0), 10.0);
        assert_eq!(cost_ratio_estimate(100, 100, 1e-2, 0.1, 2.0, 10.0), 1.0);
        let r = cost_ratio_estimate(100, 100, 1e-7f64, 0.1, 5.0, 10.0);
        assert!((r - 0.025).abs() < 1e-12, "{r}");
    }

    fn fig2() -> NameParams<f64> {
        NameParams::new(4.0, 0.2, 0.9, 2.0, 0.0)
    }

    #[test]
    fn weak_perturbation_of_closed_form() {
        let params = NameParams::new(4.0, 0.2, 0.9, 0.0, 0.1);
        let model = SystematicRiskModel::cir(4.0, 0.5, 0.5, 0.5);
        let grid = TimeGrid::new(1e-3, 1.0).unwrap();
        let cfg = SpdeFdConfig::new(0.1, 10.0, 1e-3).unwrap();
        let exact = analytic_no_feedback_loss(&NameParams { beta_s: 0.0, ..params }, &[(0.2, 1.0)], 1.0).unwrap();
        let sim = SimConfig::new(200, 17);
        let samples = simulate_spde_loss(&params, &[(0.2, 1.0)], &cfg, &model, &grid, &sim).unwrap();
        let mean = samples.losses[0].iter().sum::<f64>() / 200.0;
        assert!((mean - exact).abs() < 1e-2, "{mean} vs {exact}");
    }

    #[test]
    fn deterministic_given_path() {
        let params = NameParams::new(4.0, 0.2, 0.9, 2.0, 1.0);
        let model = SystematicRiskModel::cir(4.0, 0.5, 0.5, 0.5);
        let grid = TimeGrid::new(1e-4, 0.2).unwrap();
        let cfg = SpdeFdConfig::new(0.1, 10.0, 1e-4).unwrap();
        let risk = trial_risk_path(&model, &grid, 3, 0).unwrap();
        let a = solve_spde_explicit(&params, &[(0.2, 1.0)], &cfg, &model, &risk).unwrap();
        let b = solve_spde_explicit(&params, &[(0.2, 1.0)], &cfg, &model, &risk).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.solution.density[0], 0.0);
        assert_eq!(a.solution.density[100], 0.0);
    }

    #[test]
    fn blows_up_far_above_threshold() {
        let params = NameParams::new(4.0, 1.0, 1.0, 1.5, 5.0);
        let model = SystematicRiskModel::brownian(0.0);
        let dt = 100.0 * stability_threshold(0.1, 5.0, 10.0).unwrap();
        let grid = TimeGrid::new(dt, 0.1).unwrap();
        let cfg = SpdeFdConfig::new(0.1, 10.0, dt).unwrap();
        let risk = trial_risk_path(&model, &grid, 1, 0).unwrap();
        let err = solve_spde_explicit(&params, &[(2.0, 1.0)], &cfg, &model, &risk).unwrap_err();
        assert!(err.to_string().contains("instability detected"), "{err}");
        assert!(cfg.exceeds_threshold(5.0));
    }

    #[test]
    fn matches_predictor_corrector_without_systematic_risk() {
        let model = SystematicRiskModel::none(0.0);
        let grid = TimeGrid::new(1e-4, 1.0).unwrap();
        let cfg = SpdeFdConfig::new(0.05, 10.0, 1e-4).unwrap();
        let risk = trial_risk_path(&model, &grid, 5, 0).unwrap();
        let fd = solve_spde_explicit(&fig2(), &[(0.2, 1.0)], &cfg, &model, &risk).unwrap();
        let mesh = Mesh::new(0.05, 10.0).unwrap();
        let pc_grid = TimeGrid::new(1e-3, 1.0).unwrap();
        let pc = solve_pde_predictor_corrector(&fig2(), &[(0.2, 1.0)], &mesh, &pc_grid, 2).unwrap();
        let (a, b) = (*fd.solution.loss.last().unwrap(), *pc.solution.loss.last().unwrap());
        assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        assert!(!fd.stability_warning);
    }

    #[test]
    fn rejects_mismatched_step() {
        let model = SystematicRiskModel::none(0.0);
        let grid = TimeGrid::new(1e-2, 1.0).unwrap();
        let cfg = SpdeFdConfig::new(0.1, 10.0, 1e-3).unwrap();
        let risk = trial_risk_path(&model, &grid, 5, 0).unwrap();
        assert!(matches!(
            solve_spde_explicit(&fig2(), &[(0.2, 1.0)], &cfg, &model, &risk),
            Err(Error::GridMismatch(_))
        ));
    }
}
