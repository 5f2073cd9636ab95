//! Uniform intensity mesh shared by the finite-difference solvers.

use crate::error::{Error, Result};
use crate::real::Real;

/// Nodes `lambda_j = j * delta`, `j = 0..=nodes`; both ends carry zero
/// Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh<T> {
    pub delta: T,
    /// Index `J` of the last node; `lambda_max = J * delta`.
    pub last: usize,
}

impl<T: Real> Mesh<T> {
    pub fn new(delta: T, lambda_max: T) -> Result<Self> {
        if !(delta > T::zero()) || !(lambda_max > delta) {
            return Err(Error::invalid("mesh needs 0 < delta < lambda_max"));
        }
        let ratio = lambda_max / delta;
        let last = ratio.round();
        if (ratio - last).abs() > T::lit(1e-6) * last {
            return Err(Error::invalid("lambda_max must be a whole number of mesh cells"));
        }
        let last = last.to_usize().unwrap();
        if last < 3 {
            return Err(Error::invalid("mesh needs at least two interior nodes"));
        }
        Ok(Self { delta, last })
    }

    pub fn lambda_max(&self) -> T {
        T::from_count(self.last) * self.delta
    }

    #[inline]
    pub fn node(&self, j: usize) -> T {
        T::from_count(j) * self.delta
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.last).map(|j| self.node(j)).collect()
    }

    /// Projects a mixture of point masses `(lambda0, weight)` onto the mesh as
    /// hat functions on the two bracketing nodes. Weights are normalised, so
    /// the projected density integrates to one. Mass that would land on a
    /// boundary node is moved to its interior neighbour.
    pub fn project(&self, initial: &[(T, T)]) -> Result<Vec<T>> {
        let total: T = initial.iter().map(|&(_, w)| w).sum();
        if initial.is_empty() || !(total > T::zero()) {
            return Err(Error::invalid("initial distribution needs positive total weight"));
        }
        let mut v = vec![T::zero(); self.last + 1];
        for &(l0, w) in initial {
            if !(l0 >= T::zero()) || !(l0 < self.lambda_max()) || w < T::zero() {
                return Err(Error::InvalidInput(format!(
                    "initial intensity {l0} must lie in [0, lambda_max)"
                )));
            }
            let pos = l0 / self.delta;
            let i = pos.floor().to_usize().unwrap().min(self.last - 1);
            let frac = pos - T::from_count(i);
            let mass = w / total;
            v[i] += mass * (T::one() - frac);
            v[i + 1] += mass * frac;
        }
        let (first, end) = (v[0], v[self.last]);
        v[1] += first;
        v[self.last - 1] += end;
        v[0] = T::zero();
        v[self.last] = T::zero();
        for x in v.iter_mut() {
            *x /= self.delta;
        }
        Ok(v)
    }

    /// Trapezoid rule `int v d lambda`.
    pub fn mass(&self, v: &[T]) -> T {
        let inner: T = v[1..self.last].iter().copied().sum();
        self.delta * (inner + T::lit(0.5) * (v[0] + v[self.last]))
    }

    /// Trapezoid rule `int lambda v d lambda`.
    pub fn first_moment(&self, v: &[T]) -> T {
        let inner: T = (1..self.last).map(|j| self.node(j) * v[j]).sum();
        self.delta * (inner + T::lit(0.5) * self.lambda_max() * v[self.last])
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm). `sub[0]` and
/// `sup[n - 1]` are ignored.
pub(crate) fn solve_tridiagonal<T: Real>(sub: &[T], diag: &[T], sup: &[T], rhs: &mut [T]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let tiny = T::min_positive_value();
    let mut beta = diag[0];
    if beta.abs() <= tiny {
        return Err(Error::SingularSystem { row: 0 });
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i - 1];
        if beta.abs() <= tiny || !beta.is_finite() {
            return Err(Error::SingularSystem { row: i });
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c[i] * next;
    }
    Ok(())
}
