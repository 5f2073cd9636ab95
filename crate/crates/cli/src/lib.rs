//! Command implementations behind the `contagion` binary.
//!
//! Every command reads an [`ExperimentConfig`], writes one CSV file and a JSON
//! sidecar `<out>.json` holding the resolved config. The sidecar can be passed
//! back as `--config` to reproduce the run.

pub mod config;
pub mod table;

use std::fmt;
use std::path::{Path, PathBuf};

use contagion_core::{
    analytic_no_feedback_loss, bootstrap_var_standard_error, derive_stream, histogram, ks_distance,
    mean_and_standard_error, run_finite_experiment, simulate_limiting_loss, simulate_spde_loss, solve_fixed_point,
    solve_pde_predictor_corrector, spearman, spearman_standard_error, trial_risk_path, var_at_level,
    EmpiricalDistribution, IntensityMesh, Purpose, Samples, SimConfig, StreamId,
};

pub use config::{ExperimentConfig, Sidecar, SolverKind};
use table::{fmt_f64, SampleTable, Table};

/// Environment variable giving the default worker count.
pub const THREADS_ENV: &str = "CONTAGION_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad config, flags or input files.
    Validation(String),
    /// Instability, non-convergence or a singular solve.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<contagion_core::Error> for CliError {
    fn from(e: contagion_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SimulateFinite,
    SimulateLimit,
    SolveDeterministic,
    SolveSpdeFd,
    SolveFixedPoint,
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateFinite => "simulate-finite",
            Command::SimulateLimit => "simulate-limit",
            Command::SolveDeterministic => "solve-deterministic",
            Command::SolveSpdeFd => "solve-spde-fd",
            Command::SolveFixedPoint => "solve-fixed-point",
            Command::Compare => "compare",
        }
    }
}

/// Flags shared by the solver commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub threads: Option<usize>,
}

/// Worker count from the flag, else from [`THREADS_ENV`].
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Validation(format!("{THREADS_ENV}: not a thread count: {v:?}"))),
        _ => Ok(None),
    }
}

/// Applies `--seed` / `--trials` to the config.
pub fn apply_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, trials: Option<usize>) -> Result<(), CliError> {
    match (&mut cfg.sim, seed, trials) {
        (Some(sim), _, _) => {
            if let Some(s) = seed {
                sim.seed = s;
            }
            if let Some(t) = trials {
                sim.trials = t;
            }
        }
        (None, Some(seed), Some(trials)) => cfg.sim = Some(config::SimSection { trials, seed }),
        (None, None, None) => {}
        (None, _, _) => {
            return Err(CliError::Validation(
                "sim: missing section (give both --seed and --trials to create it)".into(),
            ))
        }
    }
    Ok(())
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_sidecar(out: &Path, command: &str, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let sidecar = Sidecar {
        subcommand: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.sim.map(|s| s.seed),
        config: cfg.clone(),
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("config serialises");
    std::fs::write(sidecar_path(out), text + "\n")
        .map_err(|e| CliError::Validation(format!("cannot write sidecar for {}: {e}", out.display())))
}

/// Loss samples of a Monte Carlo solver on the config's shared seeds.
pub fn sample(kind: SolverKind, cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Samples, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.risk_model()?;
    let sim = cfg.sim(threads)?;
    Ok(match kind {
        SolverKind::Finite => run_finite_experiment(&cfg.finite_pool()?, &model, &cfg.lgd()?, &grid, &sim)?,
        SolverKind::Moments => {
            simulate_limiting_loss(&cfg.pool()?, &model, &grid, cfg.truncation()?, &sim, cfg.variant())?
        }
        SolverKind::FdSpde => {
            let (params, initial) = cfg.homogeneous()?;
            simulate_spde_loss(&params, &initial, &cfg.spde()?, &model, &grid, &sim)?
        }
        SolverKind::FixedPoint => {
            contagion_core::simulate_fixed_point_loss(&cfg.pool()?, &model, &grid, &sim, &cfg.fixed_point(threads)?)?
        }
        SolverKind::FdDeterministic => {
            return Err(CliError::Validation(
                "compare: fd-deterministic has no Monte Carlo samples; use solve-deterministic".into(),
            ))
        }
    })
}

fn fixed_point_table(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Table, CliError> {
    let grid = cfg.grid()?;
    let model = cfg.risk_model()?;
    let sim: SimConfig = cfg.sim(threads)?;
    let pool = cfg.pool()?;
    let fp = cfg.fixed_point(threads)?;
    let mut table = Table::new(&["trial", "horizon", "loss", "x_value", "loss_se", "iterations"]);
    for m in 0..sim.trials {
        let risk = trial_risk_path(&model, &grid, sim.master_seed, m)?;
        let sol = solve_fixed_point(&pool, &risk, &grid, &fp)?;
        for &j in &grid.sample_steps {
            table.push(vec![
                m.to_string(),
                fmt_f64(grid.time(j)),
                fmt_f64(sol.loss[j]),
                fmt_f64(risk.x[j]),
                fmt_f64(sol.loss_se[j]),
                sol.rate.iterations.to_string(),
            ]);
        }
    }
    Ok(table)
}

fn deterministic_table(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let (params, initial) = cfg.homogeneous()?;
    if params.beta_s != 0.0 {
        return Err(CliError::Validation(
            "model.beta_s: solve-deterministic needs beta_s = 0".into(),
        ));
    }
    let grid = cfg.grid()?;
    let (delta, lambda_max) = cfg.mesh()?;
    let mesh = IntensityMesh::new(delta, lambda_max)?;
    let sol = solve_pde_predictor_corrector(&params, &initial, &mesh, &grid, cfg.substeps()?)?.solution;
    let closed_form = params.beta_c == 0.0 && params.sigma > 0.0;
    let mut table = Table::new(&["horizon", "loss", "first_moment", "analytic_loss"]);
    for (j, &t) in sol.times.iter().enumerate() {
        let analytic = if closed_form {
            fmt_f64(analytic_no_feedback_loss(&params, &initial, t)?)
        } else {
            String::new()
        };
        table.push(vec![
            fmt_f64(t),
            fmt_f64(sol.loss[j]),
            fmt_f64(sol.first_moment[j]),
            analytic,
        ]);
    }
    Ok(table)
}

fn var_column(level: f64) -> String {
    format!("var_{}", fmt_f64(level * 100.0))
}

fn compare_table(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Table, CliError> {
    let section = cfg
        .compare
        .as_ref()
        .ok_or_else(|| CliError::Validation("compare: missing section".into()))?;
    let left = sample(section.left, cfg, threads)?;
    let right = sample(section.right, cfg, threads)?;
    let levels = [0.95, 0.99];
    let mut header = vec![
        "horizon".to_string(),
        "trials".into(),
        "left".into(),
        "right".into(),
        "ks".into(),
    ];
    header.extend(["mean_left".into(), "mean_right".into()]);
    for level in levels {
        let c = var_column(level);
        header.extend([format!("{c}_left"), format!("{c}_right"), format!("{c}_delta")]);
    }
    let mut table = Table::with_header(header);
    for h in 0..left.horizons.len() {
        let a = left.distribution(h)?;
        let b = right.distribution(h)?;
        let mut row = vec![
            fmt_f64(left.horizons[h]),
            left.trials().to_string(),
            section.left.to_string(),
            section.right.to_string(),
            fmt_f64(ks_distance(&a, &b)),
            fmt_f64(a.mean()),
            fmt_f64(b.mean()),
        ];
        for level in levels {
            let (va, vb) = (var_at_level(&a, level)?, var_at_level(&b, level)?);
            row.extend([fmt_f64(va), fmt_f64(vb), fmt_f64(va - vb)]);
        }
        table.push(row);
    }
    Ok(table)
}

/// Runs a solver command and writes `opts.out` plus its sidecar.
pub fn run(command: Command, opts: &RunOptions) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(&opts.config)?;
    apply_overrides(&mut cfg, opts.seed, opts.trials)?;
    let threads = resolve_threads(opts.threads)?;
    let table = match command {
        Command::SimulateFinite => SampleTable::from_samples(&sample(SolverKind::Finite, &cfg, threads)?).into_table(),
        Command::SimulateLimit => SampleTable::from_samples(&sample(SolverKind::Moments, &cfg, threads)?).into_table(),
        Command::SolveSpdeFd => SampleTable::from_samples(&sample(SolverKind::FdSpde, &cfg, threads)?).into_table(),
        Command::SolveFixedPoint => fixed_point_table(&cfg, threads)?,
        Command::SolveDeterministic => deterministic_table(&cfg)?,
        Command::Compare => compare_table(&cfg, threads)?,
    };
    table.write(&opts.out)?;
    write_sidecar(&opts.out, command.name(), &cfg)
}

/// Settings of `analyze`.
#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
    pub levels: Vec<f64>,
    /// Bootstrap resamples for the VaR standard error; 0 disables it.
    pub resamples: usize,
    pub seed: u64,
    pub bins: Option<usize>,
    pub histogram: Option<PathBuf>,
}

/// Summary statistics of stored sample files, one row per (input, horizon).
/// `ks_to_first` is the KS distance to the first input at the same horizon.
pub fn analyze(opts: &AnalyzeOptions) -> Result<(), CliError> {
    if opts.inputs.is_empty() {
        return Err(CliError::Validation(
            "input: at least one sample file is required".into(),
        ));
    }
    for &level in &opts.levels {
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::Validation(format!("level: {level} is outside (0, 1)")));
        }
    }
    let samples = opts
        .inputs
        .iter()
        .map(|p| SampleTable::read(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut header: Vec<String> = ["sample", "horizon", "trials", "mean", "std_error"]
        .map(String::from)
        .into();
    for &level in &opts.levels {
        header.push(var_column(level));
        header.push(format!("{}_se", var_column(level)));
    }
    header.extend(["spearman", "spearman_se", "ks_to_first"].map(String::from));
    let mut table = Table::with_header(header);
    let mut hist = Table::new(&["sample", "horizon", "bin", "lower", "upper", "count", "density"]);
    for (i, s) in samples.iter().enumerate() {
        for (h, &t) in s.horizons.iter().enumerate() {
            let dist = EmpiricalDistribution::new(s.losses[h].clone())?;
            let (mean, se) = mean_and_standard_error(&s.losses[h]);
            let mut row = vec![
                i.to_string(),
                fmt_f64(t),
                dist.len().to_string(),
                fmt_f64(mean),
                fmt_f64(se),
            ];
            for &level in &opts.levels {
                row.push(fmt_f64(var_at_level(&dist, level)?));
                row.push(if opts.resamples > 0 && dist.len() > 1 {
                    let mut rng = derive_stream(opts.seed, StreamId::new(Purpose::Bootstrap, i, h));
                    fmt_f64(bootstrap_var_standard_error(
                        &s.losses[h],
                        level,
                        opts.resamples,
                        &mut rng,
                    )?)
                } else {
                    String::new()
                });
            }
            match spearman(&s.x_values[h], &s.losses[h])? {
                Some(rho) => {
                    row.push(fmt_f64(rho));
                    row.push(fmt_f64(spearman_standard_error(rho, dist.len())));
                }
                None => row.extend([String::new(), String::new()]),
            }
            let first = &samples[0];
            let ks = match first.horizons.iter().position(|&u| (u - t).abs() < 1e-12) {
                Some(k) => fmt_f64(ks_distance(
                    &EmpiricalDistribution::new(first.losses[k].clone())?,
                    &dist,
                )),
                None => String::new(),
            };
            row.push(ks);
            table.push(row);
            if let Some(bins) = opts.bins {
                let hg = histogram(&dist, bins)?;
                for b in 0..hg.counts.len() {
                    hist.push(vec![
                        i.to_string(),
                        fmt_f64(t),
                        b.to_string(),
                        fmt_f64(hg.edges[b]),
                        fmt_f64(hg.edges[b + 1]),
                        hg.counts[b].to_string(),
                        fmt_f64(hg.densities[b]),
                    ]);
                }
            }
        }
    }
    table.write(&opts.out)?;
    if let Some(path) = &opts.histogram {
        if opts.bins.is_none() {
            return Err(CliError::Validation("histogram: needs --bins".into()));
        }
        hist.write(path)?;
    }
    Ok(())
}
