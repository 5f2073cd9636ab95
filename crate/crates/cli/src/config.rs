//! Experiment configuration: TOML on input, JSON in the output sidecar.

use std::fmt;
use std::path::Path;

use contagion_core::{
    FixedPointConfig, Lgd, MomentVariant, NameParams, Pool, PoolEntry, RiskKind, RiskModel, SimConfig, SpdeFdConfig,
    TimeGrid, Violation,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// `(lambda0, mass)` point masses of the initial intensity law.
pub type InitialMasses = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub risk: RiskSection,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
}

/// Either flat name parameters with `lambda0`, or a list of buckets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buckets: Option<Vec<BucketSection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketSection {
    pub alpha: f64,
    pub lambda_bar: f64,
    pub sigma: f64,
    pub beta_c: f64,
    pub beta_s: f64,
    pub lambda0: f64,
    /// Number of names in the bucket.
    pub names: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskKindName {
    #[default]
    None,
    Brownian,
    Ou,
    Cir,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    #[serde(default)]
    pub kind: RiskKindName,
    #[serde(default)]
    pub x0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Finite,
    Moments,
    FdDeterministic,
    FdSpde,
    FixedPoint,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Finite => "finite",
            SolverKind::Moments => "moments",
            SolverKind::FdDeterministic => "fd-deterministic",
            SolverKind::FdSpde => "fd-spde",
            SolverKind::FixedPoint => "fixed-point",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    #[default]
    Plain,
    Transformed,
    Canonical,
}

/// Knobs of every solver; each solver reads only its own.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SolverKind>,
    /// Pool size `N` of the finite simulator (homogeneous pools).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<usize>,
    /// Uniform loss given default on `[lgd_lo, lgd_hi]`; unit losses when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lgd_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lgd_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blow_up: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub left: SolverKind,
    pub right: SolverKind,
}

/// Sidecar written next to every output file; accepted back as a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub subcommand: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: ExperimentConfig,
}

fn invalid(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Validation(format!("{key}: {msg}"))
}

fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T, CliError> {
    value.ok_or_else(|| invalid(key, "missing"))
}

fn positive(value: f64, key: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(key, format!("must be positive and finite, got {value}")))
    }
}

fn violation_key(v: &Violation) -> &'static str {
    match v {
        Violation::Negative(name) | Violation::ExceedsCap(name) | Violation::NotFinite(name) => name,
        Violation::ZeroWeight { .. } => "names",
        Violation::EmptyPool => "",
    }
}

impl ExperimentConfig {
    /// Reads a TOML config, or a JSON sidecar written by a previous run.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let sidecar: Sidecar =
                serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            return Ok(sidecar.config);
        }
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Validation(format!("config: {}", e.message().trim())).with_span(&e, text))
    }

    pub fn pool(&self) -> Result<Pool, CliError> {
        let m = &self.model;
        let pool = match &m.buckets {
            Some(buckets) => {
                if m.alpha.is_some() || m.lambda0.is_some() || m.sigma.is_some() {
                    return Err(invalid(
                        "model",
                        "give either flat parameters or [[model.buckets]], not both",
                    ));
                }
                if buckets.is_empty() {
                    return Err(invalid("model.buckets", "empty"));
                }
                let entries = buckets
                    .iter()
                    .map(|b| PoolEntry {
                        params: NameParams::new(b.alpha, b.lambda_bar, b.sigma, b.beta_c, b.beta_s),
                        lambda0: b.lambda0,
                        weight: b.names,
                    })
                    .collect();
                Pool::new(entries)
            }
            None => {
                let params = NameParams::new(
                    require(m.alpha, "model.alpha")?,
                    require(m.lambda_bar, "model.lambda_bar")?,
                    require(m.sigma, "model.sigma")?,
                    require(m.beta_c, "model.beta_c")?,
                    require(m.beta_s, "model.beta_s")?,
                );
                Pool::homogeneous(
                    params,
                    require(m.lambda0, "model.lambda0")?,
                    self.solver.names.unwrap_or(1),
                )
            }
        };
        let report = contagion_core::validate_pool(&pool, contagion_core::DEFAULT_CAP);
        if let Some((index, v)) = report.violations.first() {
            let key = match (index, m.buckets.is_some()) {
                (Some(i), true) => format!("model.buckets[{i}].{}", violation_key(v)),
                _ if matches!(v, Violation::EmptyPool) => "solver.names".to_string(),
                _ => format!("model.{}", violation_key(v)),
            };
            return Err(invalid(key.trim_end_matches('.'), v));
        }
        Ok(pool)
    }

    /// Homogeneous parameters and the initial point mass, for the PDE solvers.
    pub fn homogeneous(&self) -> Result<(NameParams<f64>, InitialMasses), CliError> {
        let pool = self.pool()?;
        if !pool.is_homogeneous() {
            return Err(invalid(
                "model.buckets",
                "finite-difference solvers need a homogeneous pool",
            ));
        }
        let e = pool.entries[0];
        Ok((e.params, vec![(e.lambda0, 1.0)]))
    }

    pub fn risk_model(&self) -> Result<RiskModel, CliError> {
        let r = &self.risk;
        let kind = match r.kind {
            RiskKindName::None => RiskKind::None,
            RiskKindName::Brownian => RiskKind::BrownianMotion,
            RiskKindName::Ou => RiskKind::OrnsteinUhlenbeck {
                kappa: require(r.kappa, "risk.kappa")?,
                theta: require(r.theta, "risk.theta")?,
                epsilon: require(r.epsilon, "risk.epsilon")?,
            },
            RiskKindName::Cir => RiskKind::Cir {
                kappa: require(r.kappa, "risk.kappa")?,
                theta: require(r.theta, "risk.theta")?,
                epsilon: require(r.epsilon, "risk.epsilon")?,
            },
        };
        let model = RiskModel::new(kind, r.x0);
        model.validate().map_err(|e| invalid("risk", e))?;
        Ok(model)
    }

    pub fn grid(&self) -> Result<TimeGrid<f64>, CliError> {
        let g = &self.grid;
        let grid = TimeGrid::new(positive(g.dt, "grid.dt")?, positive(g.horizon, "grid.horizon")?)
            .map_err(|e| invalid("grid.horizon", e))?;
        match &g.sample_times {
            Some(times) => grid
                .with_sample_times(times)
                .map_err(|e| invalid("grid.sample_times", e)),
            None => Ok(grid),
        }
    }

    pub fn sim(&self, threads: Option<usize>) -> Result<SimConfig, CliError> {
        let s = self.sim.ok_or_else(|| invalid("sim", "missing section"))?;
        if s.trials == 0 {
            return Err(invalid("sim.trials", "must be >= 1"));
        }
        let mut sim = SimConfig::new(s.trials, s.seed);
        if let Some(n) = threads {
            if n == 0 {
                return Err(invalid("threads", "must be >= 1"));
            }
            sim = sim.with_parallelism(n);
        }
        Ok(sim)
    }

    pub fn lgd(&self) -> Result<Lgd, CliError> {
        match (self.solver.lgd_lo, self.solver.lgd_hi) {
            (None, None) => Ok(Lgd::Unit),
            (Some(lo), Some(hi)) => {
                let lgd = Lgd::Uniform { lo, hi };
                lgd.validate().map_err(|e| invalid("solver.lgd_lo", e))?;
                Ok(lgd)
            }
            _ => Err(invalid("solver.lgd_lo", "lgd_lo and lgd_hi must be given together")),
        }
    }

    /// Pool used by the finite simulator: `solver.names` names for a flat
    /// model, the bucket counts otherwise.
    pub fn finite_pool(&self) -> Result<Pool, CliError> {
        let pool = self.pool()?;
        match (&self.model.buckets, self.solver.names) {
            (None, None) => Err(invalid("solver.names", "missing (pool size of the finite simulator)")),
            (Some(_), Some(n)) if n != pool.size() => Err(invalid(
                "solver.names",
                format!("{n} differs from the bucket total {}", pool.size()),
            )),
            _ => Ok(pool),
        }
    }

    pub fn truncation(&self) -> Result<usize, CliError> {
        let k = self.solver.truncation.unwrap_or(15);
        if k < 1 {
            return Err(invalid("solver.truncation", "must be >= 1"));
        }
        Ok(k)
    }

    pub fn variant(&self) -> MomentVariant {
        match self.solver.variant.unwrap_or_default() {
            VariantName::Plain => MomentVariant::Plain,
            VariantName::Transformed => MomentVariant::Transformed,
            VariantName::Canonical => MomentVariant::Canonical,
        }
    }

    pub fn mesh(&self) -> Result<(f64, f64), CliError> {
        let delta = positive(self.solver.mesh_delta.unwrap_or(0.1), "solver.mesh_delta")?;
        let lambda_max = positive(self.solver.lambda_max.unwrap_or(10.0), "solver.lambda_max")?;
        contagion_core::IntensityMesh::new(delta, lambda_max).map_err(|e| invalid("solver.mesh_delta", e))?;
        Ok((delta, lambda_max))
    }

    pub fn substeps(&self) -> Result<usize, CliError> {
        let k = self.solver.substeps.unwrap_or(2);
        if k < 1 {
            return Err(invalid("solver.substeps", "must be >= 1"));
        }
        Ok(k)
    }

    pub fn spde(&self) -> Result<SpdeFdConfig<f64>, CliError> {
        let (delta, lambda_max) = self.mesh()?;
        let cfg = SpdeFdConfig::new(delta, lambda_max, self.grid.dt).map_err(|e| invalid("grid.dt", e))?;
        Ok(match self.solver.blow_up {
            Some(b) => cfg.with_blow_up(positive(b, "solver.blow_up")?),
            None => cfg,
        })
    }

    pub fn fixed_point(&self, threads: Option<usize>) -> Result<FixedPointConfig, CliError> {
        let s = &self.solver;
        let seed = self.sim.map_or(0, |s| s.seed);
        let mut cfg = FixedPointConfig::new(s.inner_trials.unwrap_or(10_000), s.tol.unwrap_or(1e-6), seed);
        if cfg.inner_trials == 0 {
            return Err(invalid("solver.inner_trials", "must be >= 1"));
        }
        positive(cfg.tol, "solver.tol")?;
        if let Some(n) = s.max_iter {
            if n == 0 {
                return Err(invalid("solver.max_iter", "must be >= 1"));
            }
            cfg.max_iter = n;
        }
        if let Some(g) = s.groups {
            if g == 0 {
                return Err(invalid("solver.groups", "must be >= 1"));
            }
            cfg.groups = g;
        }
        cfg.parallelism = threads;
        Ok(cfg)
    }
}

trait WithSpan {
    fn with_span(self, err: &toml::de::Error, text: &str) -> Self;
}

impl WithSpan for CliError {
    fn with_span(self, err: &toml::de::Error, text: &str) -> Self {
        match (self, err.span()) {
            (CliError::Validation(msg), Some(span)) => {
                let line = text[..span.start.min(text.len())].lines().count().max(1);
                CliError::Validation(format!("{msg} (line {line})"))
            }
            (other, _) => other,
        }
    }
}
