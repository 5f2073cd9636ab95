//! Reference solutions without systematic risk (`beta_s = 0`).

use crate::error::{Error, Result};
use crate::mesh::{solve_tridiagonal, Mesh};
use crate::model::{NameParams, TimeGrid};
use crate::real::Real;

/// Constants of the affine transform `E[exp(-int lambda)] = exp(A(t) + B(t) lambda0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiCoefficients<T> {
    pub gamma: T,
    pub c1: T,
    pub c2: T,
    pub d1: T,
    pub d2: T,
}

fn ln_cosh<T: Real>(x: T) -> T {
    let a = x.abs();
    a + (-(a + a)).exp().ln_1p() - T::LN_2()
}

impl<T: Real> RiccatiCoefficients<T> {
    pub fn new(params: &NameParams<T>) -> Result<Self> {
        let s2 = params.sigma * params.sigma;
        if !(s2 > T::zero()) {
            return Err(Error::invalid(
                "closed form needs sigma > 0 (use the moment cascade when sigma = 0)",
            ));
        }
        let alpha = params.alpha;
        let gamma = (alpha * alpha + (s2 + s2)).sqrt();
        Ok(Self {
            gamma,
            c1: (-alpha / gamma).atanh(),
            c2: alpha / s2,
            d1: gamma / s2,
            d2: -alpha * params.lambda_bar,
        })
    }

    pub fn b(&self, params: &NameParams<T>, t: T) -> T {
        let half = T::lit(0.5);
        (params.alpha + self.gamma * (-half * self.gamma * t + self.c1).tanh()) / (params.sigma * params.sigma)
    }

    pub fn a(&self, t: T) -> T {
        let half = T::lit(0.5);
        let two = T::lit(2.0);
        -self.c2 * self.d2 * t
            + two * self.d1 * self.d2 / self.gamma * (ln_cosh(-half * self.gamma * t + self.c1) - ln_cosh(self.c1))
    }
}

/// Limiting (and finite-pool mean) loss without contagion or systematic risk:
/// `L_t = 1 - sum_i w_i exp(A(t) + B(t) lambda0_i)` for the initial mixture
/// `(lambda0_i, w_i)`.
pub fn analytic_no_feedback_loss<T: Real>(params: &NameParams<T>, initial: &[(T, T)], t: T) -> Result<T> {
    if params.beta_c != T::zero() || params.beta_s != T::zero() {
        return Err(Error::invalid("closed form needs beta_c = beta_s = 0"));
    }
    let total: T = initial.iter().map(|&(_, w)| w).sum();
    if initial.is_empty() || !(total > T::zero()) {
        return Err(Error::invalid("initial distribution needs positive total weight"));
    }
    let rc = RiccatiCoefficients::new(params)?;
    let (a, b) = (rc.a(t), rc.b(params, t));
    let survival: T = initial.iter().map(|&(l0, w)| w / total * (a + b * l0).exp()).sum();
    Ok(T::one() - survival)
}

/// Loss path and final density of a finite-difference PDE solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySolution<T> {
    pub times: Vec<T>,
    /// `1 - int v(t_i, lambda) d lambda`.
    pub loss: Vec<T>,
    /// `int lambda v(t_i, lambda) d lambda`.
    pub first_moment: Vec<T>,
    /// Density at the final time on the mesh nodes.
    pub density: Vec<T>,
    /// Smallest density value seen.
    pub min_density: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorCorrectorSolution<T> {
    pub solution: DensitySolution<T>,
    /// Per time step, sup-norm changes between successive corrector iterates.
    pub iterate_changes: Vec<Vec<T>>,
}

/// Tridiagonal rows of `L1* + I * L2*` on interior nodes, central differences
/// in conservative form.
fn operator_rows<T: Real>(params: &NameParams<T>, mesh: &Mesh<T>, contagion: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = mesh.last - 1;
    let d = mesh.delta;
    let half = T::lit(0.5);
    let s2 = params.sigma * params.sigma;
    let lower = |l: T| half * s2 * l / (d * d) - params.alpha * (l - params.lambda_bar) / (d + d) + contagion / (d + d);
    let upper = |l: T| half * s2 * l / (d * d) + params.alpha * (l - params.lambda_bar) / (d + d) - contagion / (d + d);
    let (mut sub, mut diag, mut sup) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    for i in 0..n {
        let j = i + 1;
        let l = mesh.node(j);
        sub[i] = lower(mesh.node(j - 1));
        diag[i] = -s2 * l / (d * d) - l;
        sup[i] = upper(mesh.node(j + 1));
    }
    // No flux through lambda = 0: what the stencil would move into the
    // pinned node stays on the first interior node.
    diag[0] += upper(mesh.node(1));
    (sub, diag, sup)
}

fn crank_nicolson_step<T: Real>(
    params: &NameParams<T>,
    mesh: &Mesh<T>,
    contagion: T,
    dt: T,
    prev: &[T],
) -> Result<Vec<T>> {
    let (sub, diag, sup) = operator_rows(params, mesh, contagion);
    let n = diag.len();
    let h = T::lit(0.5) * dt;
    let mut rhs = vec![T::zero(); n];
    for i in 0..n {
        let j = i + 1;
        rhs[i] = prev[j] + h * (sub[i] * prev[j - 1] + diag[i] * prev[j] + sup[i] * prev[j + 1]);
    }
    let lhs_sub: Vec<T> = sub.iter().map(|&a| -h * a).collect();
    let lhs_diag: Vec<T> = diag.iter().map(|&b| T::one() - h * b).collect();
    let lhs_sup: Vec<T> = sup.iter().map(|&c| -h * c).collect();
    solve_tridiagonal(&lhs_sub, &lhs_diag, &lhs_sup, &mut rhs)?;
    let mut next = vec![T::zero(); mesh.last + 1];
    next[1..mesh.last].copy_from_slice(&rhs);
    Ok(next)
}

/// Crank-Nicolson in the differential operators with the contagion integral
/// `I[v] = beta_c int lambda v` lagged and refined by `substeps`
/// predictor-corrector iterations per time step.
pub fn solve_pde_predictor_corrector<T: Real>(
    params: &NameParams<T>,
    initial: &[(T, T)],
    mesh: &Mesh<T>,
    grid: &TimeGrid<T>,
    substeps: usize,
) -> Result<PredictorCorrectorSolution<T>> {
    if params.beta_s != T::zero() {
        return Err(Error::invalid("predictor-corrector scheme needs beta_s = 0"));
    }
    if substeps < 1 {
        return Err(Error::invalid("predictor-corrector needs at least one substep"));
    }
    let mut v = mesh.project(initial)?;
    let dt = grid.delta;
    let mut loss = vec![T::one() - mesh.mass(&v)];
    let mut first_moment = vec![mesh.first_moment(&v)];
    let mut min_density = T::zero();
    let mut iterate_changes = Vec::with_capacity(grid.steps);
    for _ in 0..grid.steps {
        let mut iterate = crank_nicolson_step(params, mesh, params.beta_c * mesh.first_moment(&v), dt, &v)?;
        let mut changes = Vec::with_capacity(substeps.saturating_sub(1));
        for _ in 1..substeps {
            let mid: Vec<T> = iterate.iter().zip(&v).map(|(&a, &b)| T::lit(0.5) * (a + b)).collect();
            let next = crank_nicolson_step(params, mesh, params.beta_c * mesh.first_moment(&mid), dt, &v)?;
            let change = next
                .iter()
                .zip(&iterate)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
            changes.push(change);
            iterate = next;
        }
        v = iterate;
        for &x in &v {
            min_density = min_density.min(x);
        }
        loss.push(T::one() - mesh.mass(&v));
        first_moment.push(mesh.first_moment(&v));
        iterate_changes.push(changes);
    }
    Ok(PredictorCorrectorSolution {
        solution: DensitySolution {
            times: grid.times(),
            loss,
            first_moment,
            density: v,
            min_density,
        },
        iterate_changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_feedback() -> NameParams<f64> {
        NameParams::new(4.0, 0.2, 0.9, 0.0, 0.0)
    }

    /// RK4 on `B' = s^2 B^2 / 2 - a B - 1`, `A' = a lb B` from zero.
    fn riccati_oracle(p: &NameParams<f64>, t: f64) -> (f64, f64) {
        let n = 20_000;
        let h = t / n as f64;
        let f = |b: f64| 0.5 * p.sigma * p.sigma * b * b - p.alpha * b - 1.0;
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..n {
            let k1 = f(b);
            let k2 = f(b + 0.5 * h * k1);
            let k3 = f(b + 0.5 * h * k2);
            let k4 = f(b + h * k3);
            let a1 = p.alpha * p.lambda_bar * b;
            let a2 = p.alpha * p.lambda_bar * (b + 0.5 * h * k1);
            let a3 = p.alpha * p.lambda_bar * (b + 0.5 * h * k2);
            let a4 = p.alpha * p.lambda_bar * (b + h * k3);
            a += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            b += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        (a, b)
    }

    #[test]
    fn zero_loss_at_time_zero() {
        for p in [no_feedback(), NameParams::new(0.5, 1.0, 2.0, 0.0, 0.0)] {
            assert!(analytic_no_feedback_loss(&p, &[(0.2, 1.0)], 0.0).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_riccati_ode() {
        let mut p = no_feedback();
        p.alpha = 0.0;
        let rc = RiccatiCoefficients::new(&p).unwrap();
        let expected_b = -(2f64.sqrt() / 0.9) * (0.9 / 2f64.sqrt()).tanh();
        assert!((rc.b(&p, 1.0) - expected_b).abs() < 1e-14);
        assert!(rc.a(1.0).abs() < 1e-14);
        for p in [p, no_feedback(), NameParams::new(1.5, 0.7, 0.3, 0.0, 0.0)] {
            for t in [0.25, 1.0, 3.0] {
                let (a, b) = riccati_oracle(&p, t);
                let exact = 1.0 - (a + b * 0.2).exp();
                let closed = analytic_no_feedback_loss(&p, &[(0.2, 1.0)], t).unwrap();
                assert!((closed - exact).abs() < 1e-8, "{p:?} t={t}: {closed} vs {exact}");
            }
        }
    }

    #[test]
    fn closed_form_matches_moment_cascade() {
        use crate::model::{PoolSpec, SystematicRiskModel};
        use crate::moments::{solve_moment_path, MomentVariant};
        use crate::risk::trial_risk_path;
        let model = SystematicRiskModel::none(0.0);
        let grid = TimeGrid::new(1e-3, 1.0).unwrap();
        let risk = trial_risk_path(&model, &grid, 0, 0).unwrap();
        let pool = PoolSpec::homogeneous(no_feedback(), 0.2, 1);
        let path = solve_moment_path(&pool, &model, &risk, &grid, 15, MomentVariant::Plain).unwrap();
        for (j, t) in [(250, 0.25), (500, 0.5), (1000, 1.0)] {
            let exact = analytic_no_feedback_loss(&no_feedback(), &[(0.2, 1.0)], t).unwrap();
            assert!(
                (path.loss[j] - exact).abs() < 1e-3,
                "t={t}: {} vs {exact}",
                path.loss[j]
            );
        }
    }

    #[test]
    fn closed_form_rejects_degenerate_inputs() {
        let mut p = no_feedback();
        p.sigma = 0.0;
        assert!(analytic_no_feedback_loss(&p, &[(0.2, 1.0)], 1.0).is_err());
        let mut p = no_feedback();
        p.beta_c = 1.0;
        assert!(analytic_no_feedback_loss(&p, &[(0.2, 1.0)], 1.0).is_err());
    }

    #[test]
    fn predictor_corrector_matches_closed_form() {
        let mesh = Mesh::new(0.01, 10.0).unwrap();
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let sol = solve_pde_predictor_corrector(&no_feedback(), &[(0.2, 1.0)], &mesh, &grid, 2).unwrap();
        let exact = analytic_no_feedback_loss(&no_feedback(), &[(0.2, 1.0)], 1.0).unwrap();
        assert!(
            (sol.solution.loss[100] - exact).abs() < 1e-3,
            "{} vs {exact}",
            sol.solution.loss[100]
        );
    }

    fn fig2() -> NameParams<f64> {
        NameParams::new(4.0, 0.2, 0.9, 2.0, 0.0)
    }

    #[test]
    fn mass_and_conservation() {
        let mesh = Mesh::new(0.01, 10.0).unwrap();
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        for p in [no_feedback(), fig2()] {
            let sol = solve_pde_predictor_corrector(&p, &[(0.2, 1.0)], &mesh, &grid, 2)
                .unwrap()
                .solution;
            let mut integral = 0.0;
            for j in 0..=grid.steps {
                assert!(1.0 - sol.loss[j] <= 1.0 + 1e-6);
                if j > 0 {
                    integral += grid.delta * sol.first_moment[j];
                }
            }
            assert!((sol.loss[100] - integral).abs() <= 1e-2, "{p:?}");
        }
    }

    #[test]
    fn corrector_iterates_contract() {
        let mesh = Mesh::new(0.01, 10.0).unwrap();
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let sol = solve_pde_predictor_corrector(&fig2(), &[(0.2, 1.0)], &mesh, &grid, 5).unwrap();
        for changes in &sol.iterate_changes {
            for w in changes.windows(2) {
                assert!(w[1] <= w[0], "{changes:?}");
            }
        }
    }

    #[test]
    fn mesh_refinement_converges() {
        let run = |d: f64, dt: f64| {
            let mesh = Mesh::new(d, 10.0).unwrap();
            let grid = TimeGrid::new(dt, 1.0).unwrap();
            let sol = solve_pde_predictor_corrector(&fig2(), &[(0.2, 1.0)], &mesh, &grid, 2).unwrap();
            *sol.solution.loss.last().unwrap()
        };
        let (l1, l2, l3) = (run(0.04, 0.04), run(0.02, 0.02), run(0.01, 0.01));
        assert!((l3 - l2).abs() < (l2 - l1).abs(), "{l1} {l2} {l3}");
    }

    #[test]
    fn rejects_systematic_risk() {
        let mesh = Mesh::new(0.1, 10.0).unwrap();
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let mut p = fig2();
        p.beta_s = 1.0;
        assert!(solve_pde_predictor_corrector(&p, &[(0.2, 1.0)], &mesh, &grid, 2).is_err());
        assert!(solve_pde_predictor_corrector(&fig2(), &[(0.2, 1.0)], &mesh, &grid, 0).is_err());
    }
}
