//! Convergence harness: coupled sweeps over step size and particle count,
//! sampling-rate measurement, log-log rate fitting, a closed-form benchmark,
//! and the acceptance suite.
//!
//! Sweeps derive every random stream from the plan seed, reuse one Brownian
//! grid per replication across all cells (synchronous coupling), and report
//! per-cell values plus per-abscissa aggregates. Cells whose simulation
//! diverged are excluded from aggregates and counted instead.

pub mod acceptance;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    simulate_particles, simulate_reference, strong_error_sup, BrownianGrid, CoarseCache,
    EngineError, FirstParticles, InitialLaw,
};
use crate::measure::{
    wasserstein_1d, wasserstein_sliced, EmpiricalMeasure, MeasureError,
};
use crate::model::{ModelError, ModelSpec};
use crate::numeric::median;
use crate::rng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("rate fit: {0}")]
    Fit(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

const SALT_GRID: u64 = 0x4752_4944;
const SALT_X0: u64 = 0x5830;
const SALT_EXTRA: u64 = 0x4558;
const SALT_REP: u64 = 0x5245_50;
const SALT_SAMPLE: u64 = 0x534D_50;
const SALT_TRUTH: u64 = 0x5452_55;

fn rep_seed(seed: u64, replication: usize) -> u64 {
    rng::derive(rng::derive(seed, SALT_REP), replication as u64)
}

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub residual_max: f64,
}

/// Fit a power law `y = C x^slope` by least squares on logs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit, ExperimentError> {
    if points.len() < 2 {
        return Err(ExperimentError::Fit(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some((x, y)) = points.iter().find(|(x, y)| !(*x > 0.0) || !(*y > 0.0)) {
        return Err(ExperimentError::Fit(format!(
            "coordinates must be positive, got ({x}, {y})"
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(ExperimentError::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut residual_max = 0.0f64;
    for (x, y) in &logs {
        let r = y - (intercept + slope * x);
        ss_res += r * r;
        ss_tot += (y - my) * (y - my);
        residual_max = residual_max.max(r.abs());
    }
    let r_squared = if ss_tot == 0.0 {
        if ss_res <= 1e-24 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit { slope, intercept, r_squared, n_points: points.len(), residual_max })
}

/// Mean and variance at time `t` of `dX = (a X + c E[X]) dt + s dW` started
/// from mean `m0`, variance `v0`.
///
/// The mean solves `m' = (a + c) m`. Centering, `Y = X - m` is an
/// Ornstein-Uhlenbeck process `dY = a Y dt + s dW`, so the variance solves
/// `v' = 2 a v + s^2`.
pub fn linear_gaussian_moments(a: f64, c: f64, s: f64, m0: f64, v0: f64, t: f64) -> (f64, f64) {
    let mean = m0 * ((a + c) * t).exp();
    let var = if a == 0.0 {
        v0 + s * s * t
    } else {
        let e2 = (2.0 * a * t).exp();
        e2 * v0 + s * s * (e2 - 1.0) / (2.0 * a)
    };
    (mean, var)
}

/// One sweep cell: a single (abscissa, replication) simulation outcome.
#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    /// Regression abscissa (step size or particle count).
    pub x: f64,
    pub n_particles: usize,
    pub factor: usize,
    pub delta: f64,
    pub replication: usize,
    pub q: f64,
    pub value: f64,
    pub diverged: bool,
    /// Wall time of the cell; reported in summaries only, never in CSV.
    pub wall_s: f64,
    pub seed: u64,
}

/// Aggregate of the non-diverged cells of one abscissa.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub x: f64,
    pub mean: f64,
    pub std_error: f64,
    pub median: f64,
    pub n_ok: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub label: String,
    pub model: String,
    pub q: f64,
    pub cells: Vec<Cell>,
    pub aggregates: Vec<Aggregate>,
}

impl SweepResult {
    fn build(label: &str, model: &str, q: f64, cells: Vec<Cell>, xs: &[f64]) -> Self {
        let aggregates = xs
            .iter()
            .map(|&x| {
                let values: Vec<f64> = cells
                    .iter()
                    .filter(|c| c.x == x && !c.diverged)
                    .map(|c| c.value)
                    .collect();
                let n_diverged = cells.iter().filter(|c| c.x == x && c.diverged).count();
                let n_ok = values.len();
                let mean = if n_ok > 0 {
                    values.iter().sum::<f64>() / n_ok as f64
                } else {
                    f64::NAN
                };
                let std_error = if n_ok > 1 {
                    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (n_ok - 1) as f64;
                    (var / n_ok as f64).sqrt()
                } else {
                    f64::NAN
                };
                Aggregate { x, mean, std_error, median: median(&values), n_ok, n_diverged }
            })
            .collect();
        SweepResult { label: label.into(), model: model.into(), q, cells, aggregates }
    }

    /// Power-law fit through the aggregate means.
    pub fn fit(&self) -> Result<RateFit, ExperimentError> {
        let points: Vec<(f64, f64)> = self
            .aggregates
            .iter()
            .filter(|a| a.n_ok > 0)
            .map(|a| (a.x, a.mean))
            .collect();
        fit_rate(&points)
    }

    pub fn total_diverged(&self) -> usize {
        self.cells.iter().filter(|c| c.diverged).count()
    }

    /// Render the per-cell table as CSV. Deterministic for a given plan and
    /// seed: excludes wall times so reruns under any worker count are
    /// byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep,model,n,factor,delta,replication,q,value,diverged\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                self.label,
                self.model,
                c.n_particles,
                c.factor,
                c.delta,
                c.replication,
                c.q,
                c.value,
                c.diverged
            ));
        }
        out
    }
}

/// Plan for a step-size sweep at fixed particle count.
#[derive(Debug, Clone)]
pub struct TimestepPlan {
    pub model: ModelSpec,
    pub n_particles: usize,
    /// Step multipliers of the finest grid, each divisible by `factor_ref`.
    pub factors: Vec<usize>,
    pub horizon: f64,
    pub fine_steps: usize,
    pub replications: usize,
    pub seed: u64,
    pub factor_ref: usize,
    pub n_extra: usize,
    pub q: f64,
    pub initial: InitialLaw,
}

impl TimestepPlan {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.factors.is_empty() {
            return Err(ExperimentError::Plan("factor list is empty".into()));
        }
        for &f in &self.factors {
            if f == 0 || self.fine_steps % f != 0 {
                return Err(ExperimentError::Plan(format!(
                    "factor {f} does not divide fine step count {}",
                    self.fine_steps
                )));
            }
            if f % self.factor_ref != 0 {
                return Err(ExperimentError::Plan(format!(
                    "reference factor {} does not divide factor {f}",
                    self.factor_ref
                )));
            }
        }
        if self.replications == 0 {
            return Err(ExperimentError::Plan("need at least one replication".into()));
        }
        if !(self.q > 0.0) {
            return Err(ExperimentError::Plan(format!("moment order {} must be positive", self.q)));
        }
        Ok(())
    }
}

/// Step-size sweep: per replication, one Brownian grid drives a fine-step
/// reference ensemble (with extra particles sharpening its measure) and one
/// coupled scheme run per factor; the cell value is the strong sup error
/// against the reference.
pub fn run_timestep_sweep(plan: &TimestepPlan) -> Result<SweepResult, ExperimentError> {
    plan.validate()?;
    let dim = plan.model.dim();
    let n = plan.n_particles;
    let min_factor = *plan.factors.iter().min().expect("nonempty");
    let record_every_ref = min_factor / plan.factor_ref;

    let reps: Vec<Vec<Cell>> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Cell>, ExperimentError> {
            let seed = rep_seed(plan.seed, rep);
            let grid = BrownianGrid::new(
                dim,
                n,
                plan.horizon,
                plan.fine_steps,
                rng::derive(seed, SALT_GRID),
            )?;
            let x0 = plan.initial.sample(n, dim, rng::derive(seed, SALT_X0))?;
            let cache = CoarseCache::materialize(&grid, plan.factor_ref, n)?;
            let t_ref = Instant::now();
            let reference = simulate_reference(
                &plan.model,
                &cache,
                plan.factor_ref,
                &x0,
                plan.n_extra,
                rng::derive(seed, SALT_EXTRA),
                &plan.initial,
                record_every_ref,
            )?;
            let ref_wall = t_ref.elapsed().as_secs_f64();
            let mut cells = Vec::with_capacity(plan.factors.len());
            for &factor in &plan.factors {
                let start = Instant::now();
                let delta = factor as f64 * plan.horizon / plan.fine_steps as f64;
                let mut cell = Cell {
                    x: delta,
                    n_particles: n,
                    factor,
                    delta,
                    replication: rep,
                    q: plan.q,
                    value: f64::NAN,
                    diverged: true,
                    wall_s: 0.0,
                    seed,
                };
                if reference.diverged.is_none() {
                    let em = simulate_particles(&plan.model, &cache, factor, &x0, 1)?;
                    match strong_error_sup(&reference, &em, plan.q) {
                        Ok(value) => {
                            cell.value = value;
                            cell.diverged = false;
                        }
                        Err(EngineError::Diverged { .. }) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                cell.wall_s = start.elapsed().as_secs_f64() + ref_wall / plan.factors.len() as f64;
                cells.push(cell);
            }
            Ok(cells)
        })
        .collect::<Result<_, _>>()?;

    let cells: Vec<Cell> = reps.into_iter().flatten().collect();
    let xs: Vec<f64> = plan
        .factors
        .iter()
        .map(|&f| f as f64 * plan.horizon / plan.fine_steps as f64)
        .collect();
    Ok(SweepResult::build("sweep-dt", &plan.model.name, plan.q, cells, &xs))
}

/// Plan for a particle-count sweep at fixed step size.
#[derive(Debug, Clone)]
pub struct ChaosPlan {
    pub model: ModelSpec,
    pub n_list: Vec<usize>,
    pub factor: usize,
    pub factor_ref: usize,
    pub horizon: f64,
    pub fine_steps: usize,
    pub replications: usize,
    pub seed: u64,
    /// Extra reference particles; sized against `max(n_list)`.
    pub n_extra: usize,
    pub q: f64,
    pub initial: InitialLaw,
}

impl ChaosPlan {
    fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_list.is_empty() {
            return Err(ExperimentError::Plan("particle count list is empty".into()));
        }
        if self.factor == 0
            || self.fine_steps % self.factor != 0
            || self.factor % self.factor_ref != 0
        {
            return Err(ExperimentError::Plan(format!(
                "factors ({}, ref {}) incompatible with fine step count {}",
                self.factor, self.factor_ref, self.fine_steps
            )));
        }
        if self.replications == 0 {
            return Err(ExperimentError::Plan("need at least one replication".into()));
        }
        if !(self.q > 0.0) {
            return Err(ExperimentError::Plan(format!("moment order {} must be positive", self.q)));
        }
        Ok(())
    }
}

/// Particle-count sweep: per replication, one grid sized for the largest
/// count; the reference ensemble (largest count plus extras) is simulated
/// once and its first `n` paths are compared against the coupled
/// `n`-particle run for every `n` in the list.
pub fn run_chaos_sweep(plan: &ChaosPlan) -> Result<SweepResult, ExperimentError> {
    plan.validate()?;
    let dim = plan.model.dim();
    let max_n = *plan.n_list.iter().max().expect("nonempty");
    let record_every_ref = plan.factor / plan.factor_ref;

    let reps: Vec<Vec<Cell>> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Cell>, ExperimentError> {
            let seed = rep_seed(plan.seed, rep);
            let grid = BrownianGrid::new(
                dim,
                max_n,
                plan.horizon,
                plan.fine_steps,
                rng::derive(seed, SALT_GRID),
            )?;
            let x0_full = plan.initial.sample(max_n, dim, rng::derive(seed, SALT_X0))?;
            let cache = CoarseCache::materialize(&grid, plan.factor_ref, max_n)?;
            let reference = simulate_reference(
                &plan.model,
                &cache,
                plan.factor_ref,
                &x0_full,
                plan.n_extra,
                rng::derive(seed, SALT_EXTRA),
                &plan.initial,
                record_every_ref,
            )?;
            let delta = plan.factor as f64 * plan.horizon / plan.fine_steps as f64;
            let mut cells = Vec::with_capacity(plan.n_list.len());
            for &n in &plan.n_list {
                let start = Instant::now();
                let mut cell = Cell {
                    x: n as f64,
                    n_particles: n,
                    factor: plan.factor,
                    delta,
                    replication: rep,
                    q: plan.q,
                    value: f64::NAN,
                    diverged: true,
                    wall_s: 0.0,
                    seed,
                };
                if reference.diverged.is_none() {
                    let restricted = FirstParticles { inner: &cache, n };
                    let em = simulate_particles(
                        &plan.model,
                        &restricted,
                        plan.factor,
                        &x0_full[..n * dim],
                        1,
                    )?;
                    let ref_n = reference.first_particles(n);
                    match strong_error_sup(&ref_n, &em, plan.q) {
                        Ok(value) => {
                            cell.value = value;
                            cell.diverged = false;
                        }
                        Err(EngineError::Diverged { .. }) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                cell.wall_s = start.elapsed().as_secs_f64();
                cells.push(cell);
            }
            Ok(cells)
        })
        .collect::<Result<_, _>>()?;

    let cells: Vec<Cell> = reps.into_iter().flatten().collect();
    let xs: Vec<f64> = plan.n_list.iter().map(|&n| n as f64).collect();
    Ok(SweepResult::build("sweep-n", &plan.model.name, plan.q, cells, &xs))
}

/// Where Glivenko-Cantelli samples come from: a law with a sampler, or a
/// frozen empirical snapshot resampled with replacement (the surrogate for
/// a terminal law produced by a large reference run).
#[derive(Debug, Clone)]
pub enum SamplingOracle {
    Law { law: InitialLaw, dim: usize },
    Snapshot(EmpiricalMeasure),
}

impl SamplingOracle {
    pub fn dim(&self) -> usize {
        match self {
            SamplingOracle::Law { dim, .. } => *dim,
            SamplingOracle::Snapshot(m) => m.dim(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SamplingOracle::Law { law, dim } => format!("{law:?} (d={dim})"),
            SamplingOracle::Snapshot(m) => format!("snapshot(n={}, d={})", m.len(), m.dim()),
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<EmpiricalMeasure, ExperimentError> {
        match self {
            SamplingOracle::Law { law, dim } => {
                let atoms = law.sample(n, *dim, seed)?;
                Ok(EmpiricalMeasure::new(atoms, *dim)?)
            }
            SamplingOracle::Snapshot(m) => {
                let d = m.dim();
                let mut atoms = Vec::with_capacity(n * d);
                for i in 0..n {
                    let pick = (rng::bits(seed, i as u64) % m.len() as u64) as usize;
                    atoms.extend_from_slice(m.atom(pick));
                }
                Ok(EmpiricalMeasure::new(atoms, d)?)
            }
        }
    }
}

/// Plan for measuring the decay of `W_p(empirical_N, law)` in `N`.
#[derive(Debug, Clone)]
pub struct GlivenkoPlan {
    pub oracle: SamplingOracle,
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub p: f64,
    /// The surrogate truth uses `surrogate_mult * n` samples.
    pub surrogate_mult: usize,
    /// Projections for the sliced distance in dimension > 1.
    pub n_proj: usize,
}

impl Default for GlivenkoPlan {
    fn default() -> Self {
        Self {
            oracle: SamplingOracle::Law { law: InitialLaw::Uniform { lo: 0.0, hi: 1.0 }, dim: 1 },
            n_list: vec![32, 64, 128, 256],
            replications: 8,
            seed: 1,
            p: 1.0,
            surrogate_mult: 64,
            n_proj: 32,
        }
    }
}

/// Sampling-decay sweep: the cell value is the distance between an
/// `n`-sample empirical measure and a much larger surrogate-truth sample,
/// exact in one dimension (smaller support replicated to match counts) and
/// sliced in higher dimension.
pub fn run_glivenko_sweep(plan: &GlivenkoPlan) -> Result<SweepResult, ExperimentError> {
    if plan.n_list.is_empty() || plan.replications == 0 {
        return Err(ExperimentError::Plan("empty particle list or replications".into()));
    }
    if plan.surrogate_mult < 2 {
        return Err(ExperimentError::Plan("surrogate multiplier must be at least 2".into()));
    }
    let dim = plan.oracle.dim();
    if dim > 1 && plan.p != 2.0 {
        return Err(ExperimentError::Plan(
            "multi-dimensional decay uses the sliced W2; set p = 2".into(),
        ));
    }
    let cells: Vec<Cell> = plan
        .n_list
        .par_iter()
        .map(|&n| -> Result<Vec<Cell>, ExperimentError> {
            let mut out = Vec::with_capacity(plan.replications);
            for rep in 0..plan.replications {
                let seed = rng::derive(rep_seed(plan.seed, rep), n as u64);
                let start = Instant::now();
                let sample = plan.oracle.sample(n, rng::derive(seed, SALT_SAMPLE))?;
                let truth =
                    plan.oracle.sample(n * plan.surrogate_mult, rng::derive(seed, SALT_TRUTH))?;
                let expanded = sample.replicate(plan.surrogate_mult);
                let value = if dim == 1 {
                    wasserstein_1d(plan.p, &expanded, &truth)?
                } else {
                    wasserstein_sliced(&expanded, &truth, plan.n_proj, seed)?
                };
                out.push(Cell {
                    x: n as f64,
                    n_particles: n,
                    factor: 0,
                    delta: 0.0,
                    replication: rep,
                    q: plan.p,
                    value,
                    diverged: false,
                    wall_s: start.elapsed().as_secs_f64(),
                    seed,
                });
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let xs: Vec<f64> = plan.n_list.iter().map(|&n| n as f64).collect();
    Ok(SweepResult::build("glivenko", &plan.oracle.name(), plan.p, cells, &xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin_model, FamilyId};
    use std::collections::BTreeMap;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let points: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, (i * i) as f64)).collect();
        let fit = fit_rate(&points).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.residual_max < 1e-12);

        let points: Vec<(f64, f64)> =
            (1..=5).map(|i| (2f64.powi(i), 3.0 * 2f64.powi(i).powf(-0.25))).collect();
        let fit = fit_rate(&points).unwrap();
        assert!((fit.slope + 0.25).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);

        assert!(fit_rate(&[(1.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (2.0, -1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn oracle_moments_match_hand_derivation() {
        let (m, v) = linear_gaussian_moments(-1.0, 0.5, 0.0, 1.0, 0.3, 1.0);
        assert!((m - (-0.5f64).exp()).abs() < 1e-15);
        assert!((v - (-2.0f64).exp() * 0.3).abs() < 1e-15);

        let (m0, v0) = linear_gaussian_moments(-1.0, 0.5, 1.0, 1.0, 0.25, 0.0);
        assert_eq!((m0, v0), (1.0, 0.25));

        let (_, v) = linear_gaussian_moments(0.0, 0.0, 1.0, 0.0, 0.0, 2.0);
        assert!((v - 2.0).abs() < 1e-15);
    }

    #[test]
    fn timestep_sweep_self_comparison_is_exact_zero() {
        let model = make_builtin_model(FamilyId::LinearMeanField, &BTreeMap::new()).unwrap();
        let plan = TimestepPlan {
            model,
            n_particles: 32,
            factors: vec![4, 8],
            horizon: 1.0,
            fine_steps: 64,
            replications: 2,
            seed: 5,
            factor_ref: 4,
            n_extra: 0,
            q: 2.0,
            initial: InitialLaw::Gaussian { mean: 1.0, var: 0.25 },
        };
        let result = run_timestep_sweep(&plan).unwrap();
        for cell in result.cells.iter().filter(|c| c.factor == 4) {
            assert_eq!(cell.value, 0.0);
        }
        for cell in result.cells.iter().filter(|c| c.factor == 8) {
            assert!(cell.value > 0.0);
        }
        assert_eq!(result.total_diverged(), 0);
    }

    #[test]
    fn deterministic_sweep_recovers_euler_order() {
        // With s = 0 the scheme is the explicit Euler method for the mean
        // flow; the q = 1 error against a much finer reference has slope
        // about 1 in the step size.
        let model = make_builtin_model(
            FamilyId::LinearMeanField,
            &params(&[("a", -1.0), ("c", 0.5), ("s", 0.0)]),
        )
        .unwrap();
        let plan = TimestepPlan {
            model,
            n_particles: 8,
            factors: vec![32, 64, 128, 256],
            horizon: 1.0,
            fine_steps: 1024,
            replications: 1,
            seed: 9,
            factor_ref: 1,
            n_extra: 0,
            q: 1.0,
            initial: InitialLaw::Point(vec![1.0]),
        };
        let result = run_timestep_sweep(&plan).unwrap();
        let fit = result.fit().unwrap();
        assert!((fit.slope - 1.0).abs() < 0.15, "slope {}", fit.slope);
    }

    #[test]
    fn chaos_sweep_without_interaction_is_flat() {
        // No measure dependence: the list runs only differ from the
        // reference by discretization, which does not depend on N.
        let model = make_builtin_model(
            FamilyId::HolderDrift1d,
            &params(&[("k1", 0.0), ("bound", 0.0)]),
        )
        .unwrap();
        let plan = ChaosPlan {
            model,
            n_list: vec![16, 32, 64, 128],
            factor: 8,
            factor_ref: 2,
            horizon: 1.0,
            fine_steps: 256,
            replications: 4,
            seed: 21,
            n_extra: 0,
            q: 2.0,
            initial: InitialLaw::Gaussian { mean: 0.0, var: 1.0 },
        };
        let result = run_chaos_sweep(&plan).unwrap();
        let fit = result.fit().unwrap();
        assert!(fit.slope.abs() < 0.1, "slope {}", fit.slope);
    }

    #[test]
    fn glivenko_point_mass_has_zero_distance() {
        let plan = GlivenkoPlan {
            oracle: SamplingOracle::Law { law: InitialLaw::Point(vec![0.7]), dim: 1 },
            n_list: vec![8, 16],
            replications: 3,
            seed: 2,
            p: 1.0,
            surrogate_mult: 8,
            n_proj: 8,
        };
        let result = run_glivenko_sweep(&plan).unwrap();
        for cell in &result.cells {
            assert_eq!(cell.value, 0.0);
        }
    }

    #[test]
    fn glivenko_uniform_has_square_root_decay() {
        let plan = GlivenkoPlan {
            oracle: SamplingOracle::Law { law: InitialLaw::Uniform { lo: 0.0, hi: 1.0 }, dim: 1 },
            n_list: vec![32, 64, 128, 256, 512],
            replications: 16,
            seed: 3,
            p: 1.0,
            surrogate_mult: 64,
            n_proj: 8,
        };
        let result = run_glivenko_sweep(&plan).unwrap();
        let fit = result.fit().unwrap();
        assert!(
            (-0.65..=-0.35).contains(&fit.slope),
            "slope {} outside the square-root band",
            fit.slope
        );
    }

    #[test]
    fn glivenko_multid_gaussian_decays() {
        // Sliced distance for a 5-dimensional Gaussian: decays at least as
        // fast as the guaranteed high-dimensional rate.
        let plan = GlivenkoPlan {
            oracle: SamplingOracle::Law { law: InitialLaw::Gaussian { mean: 0.0, var: 1.0 }, dim: 5 },
            n_list: vec![32, 64, 128, 256],
            replications: 6,
            seed: 17,
            p: 2.0,
            surrogate_mult: 64,
            n_proj: 24,
        };
        let result = run_glivenko_sweep(&plan).unwrap();
        let fit = result.fit().unwrap();
        assert!(fit.slope <= -0.15, "slope {}", fit.slope);

        // p != 2 has no sliced route in dimension > 1.
        let bad = GlivenkoPlan { p: 1.0, ..plan };
        assert!(matches!(run_glivenko_sweep(&bad), Err(ExperimentError::Plan(_))));
    }

    #[test]
    fn snapshot_oracle_resamples_its_support() {
        let snap = EmpiricalMeasure::from_points(vec![1.0, 2.0, 3.0]).unwrap();
        let oracle = SamplingOracle::Snapshot(snap);
        let sample = oracle.sample(100, 11).unwrap();
        assert!(sample.atoms().iter().all(|v| [1.0, 2.0, 3.0].contains(v)));
        let again = oracle.sample(100, 11).unwrap();
        assert_eq!(sample.atoms(), again.atoms());
    }

    #[test]
    fn csv_has_no_wall_times_and_fixed_header() {
        let model = make_builtin_model(FamilyId::LinearMeanField, &BTreeMap::new()).unwrap();
        let plan = TimestepPlan {
            model,
            n_particles: 8,
            factors: vec![8],
            horizon: 1.0,
            fine_steps: 32,
            replications: 1,
            seed: 1,
            factor_ref: 8,
            n_extra: 0,
            q: 2.0,
            initial: InitialLaw::Point(vec![0.0]),
        };
        let result = run_timestep_sweep(&plan).unwrap();
        let csv = result.to_csv();
        assert!(csv.starts_with("sweep,model,n,factor,delta,replication,q,value,diverged\n"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn divergent_cells_are_excluded_and_counted() {
        use crate::model::{ModelSpec, RegularityProfile};
        use std::sync::Arc;
        // Cubic drift from a large start explodes to infinity in a few steps.
        let profile =
            RegularityProfile { dimension: 1, alpha: 1.0, beta: 1.0, k1: 1.0, k2: 0.0, k: 0.0 };
        let model = ModelSpec::custom(
            "explosive",
            profile,
            Arc::new(|x: &[f64], _m: &crate::model::MeasureView<'_>, out: &mut [f64]| {
                out[0] = 1e3 * x[0] * x[0] * x[0]
            }),
            Arc::new(|_x: &[f64], _m: &crate::model::MeasureView<'_>, out: &mut [f64]| {
                out[0] = 0.0
            }),
            Arc::new(|_x: &[f64], out: &mut [f64]| out[0] = 0.0),
        )
        .unwrap();
        let plan = TimestepPlan {
            model,
            n_particles: 4,
            factors: vec![8],
            horizon: 1.0,
            fine_steps: 64,
            replications: 2,
            seed: 13,
            factor_ref: 8,
            n_extra: 0,
            q: 2.0,
            initial: InitialLaw::Point(vec![10.0]),
        };
        let result = run_timestep_sweep(&plan).unwrap();
        assert!(result.total_diverged() > 0);
        let agg = &result.aggregates[0];
        assert_eq!(agg.n_ok + agg.n_diverged, 2);
    }
}
