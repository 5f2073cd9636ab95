//! Paths of the systematic factor `X` and its driving Brownian increments.

use crate::error::{Error, Result};
use crate::model::{SystematicRiskModel, TimeGrid};
use crate::real::Real;
use crate::rng::{derive_stream, Purpose, RngStream, StreamId};

/// One realisation of the common noise on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskPath<T> {
    pub times: Vec<T>,
    /// `X` at every grid time, `x[0] = x0`.
    pub x: Vec<T>,
    /// Brownian increments `V(t_{j+1}) - V(t_j)`.
    pub dv: Vec<T>,
}

impl<T: Real> RiskPath<T> {
    pub fn steps(&self) -> usize {
        self.dv.len()
    }

    pub fn delta(&self) -> T {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            T::zero()
        }
    }

    /// `X(t_{j+1}) - X(t_j)`.
    #[inline]
    pub fn dx(&self, j: usize) -> T {
        self.x[j + 1] - self.x[j]
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid<T>) -> Result<()> {
        if self.x.len() != grid.steps + 1 || !grid.matches(self.steps(), self.delta()) {
            return Err(Error::GridMismatch(format!(
                "risk path has {} steps of {}, grid has {} steps of {}",
                self.steps(),
                self.delta(),
                grid.steps,
                grid.delta
            )));
        }
        Ok(())
    }
}

/// Euler scheme for `X`, truncated at zero for CIR. `dv` is drawn even when
/// the factor is inert so that every solver sees the same noise.
pub fn simulate_risk_path<T: Real>(
    model: &SystematicRiskModel<T>,
    grid: &TimeGrid<T>,
    rng: &mut RngStream,
) -> Result<RiskPath<T>> {
    if !(grid.delta > T::zero()) {
        return Err(Error::invalid("time step must be positive"));
    }
    let n = grid.steps;
    let sqrt_dt = grid.delta.sqrt();
    let mut x = Vec::with_capacity(n + 1);
    let mut dv = Vec::with_capacity(n);
    x.push(model.x0);
    let mut cur = model.x0;
    let truncate = model.is_cir();
    for _ in 0..n {
        let dw = sqrt_dt * T::standard_normal(rng);
        let mut next = cur + model.drift(cur) * grid.delta + model.vol(cur) * dw;
        if truncate && next < T::zero() {
            next = T::zero();
        }
        dv.push(dw);
        x.push(next);
        cur = next;
    }
    Ok(RiskPath {
        times: grid.times(),
        x,
        dv,
    })
}

/// Risk path of Monte Carlo trial `trial`; every solver uses this stream so
/// that trial `m` of two experiments with one seed shares its common noise.
pub fn trial_risk_path<T: Real>(
    model: &SystematicRiskModel<T>,
    grid: &TimeGrid<T>,
    master_seed: u64,
    trial: usize,
) -> Result<RiskPath<T>> {
    let mut rng = derive_stream(master_seed, StreamId::new(Purpose::SystematicBrownian, trial, 0));
    simulate_risk_path(model, grid, &mut rng)
}
