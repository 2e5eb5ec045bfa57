//! Particle-system integration: Brownian grids with exact multi-resolution
//! coupling, the interacting Euler-Maruyama scheme, fine-grid reference
//! ensembles, fixed-point iteration over the law flow, and strong-error
//! functionals.
//!
//! Coupling is the load-bearing idea. Every Brownian increment is a pure
//! function of `(seed, particle, fine step, component)` through a counter
//! generator, and an increment at step size `factor * T/M` is the fixed-tree
//! pairwise sum of its `factor` fine increments. Two runs that share a grid
//! therefore see literally the same Brownian path regardless of their step
//! sizes, worker counts, or whether increments are generated on the fly or
//! from a materialized cache, so their difference measures scheme error and
//! not noise.
//!
//! One step of the scheme, for all particles simultaneously: freeze the
//! empirical measure of the current states, then move every particle by
//! `b(x_i, mu) * delta + sigma(x_i) * dW_i`. The measure is refreshed only at
//! step starts, never mid-step.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::measure::{wasserstein_1d, wasserstein_sliced, EmpiricalMeasure};
use crate::model::{MeasureView, ModelSpec};
use crate::numeric::{dist, norm, pairwise_sum_by, pairwise_sum_strided};
use crate::rng;

/// Step sizes at or above exp(-1) leave the scheme's intended regime; the
/// run proceeds but carries a warning.
pub const MAX_SAFE_STEP: f64 = 0.367_879_441_171_442_33; // exp(-1)

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("fine step count {0} must be a positive power of two")]
    FineStepsNotPowerOfTwo(usize),
    #[error("factor {factor} does not divide the fine step count {fine_steps}")]
    FactorDoesNotDivide { factor: usize, fine_steps: usize },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("initial state: {0}")]
    BadInitial(String),
    #[error("recording stride {record_every} must divide the coarse step count {steps}")]
    BadRecording { record_every: usize, steps: usize },
    #[error("incompatible paths: {0}")]
    Incompatible(String),
    #[error("simulation diverged at step {step} (particle {particle})")]
    Diverged { step: usize, particle: usize },
    #[error("moment order must be positive, got {0}")]
    BadOrder(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("binary paths format: {0}")]
    Format(String),
}

/// Provider of coupled Brownian increments.
///
/// `fill_increment(i, factor, k, out, scratch)` writes the `dim` components
/// of the increment over `[k * factor, (k+1) * factor) * (T/M)` for particle
/// `i`. Implementations must make this a pure function of the identifying
/// data so that output never depends on evaluation order.
pub trait BrownianSource: Sync {
    fn dim(&self) -> usize;
    fn n_particles(&self) -> usize;
    fn fine_steps(&self) -> usize;
    fn horizon(&self) -> f64;
    fn fine_dt(&self) -> f64 {
        self.horizon() / self.fine_steps() as f64
    }
    fn fill_increment(
        &self,
        particle: usize,
        factor: usize,
        step: usize,
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    );
}

/// Lazily evaluated grid of Gaussian increments at the finest resolution.
///
/// Nothing is stored: increment `(i, k)` component `c` is the normal draw at
/// counter `(i * M + k) * d + c` scaled by `sqrt(T/M)`, so enlarging the
/// particle count preserves the paths of existing particles and the same
/// seed reproduces the grid bitwise anywhere.
#[derive(Debug, Clone, Serialize)]
pub struct BrownianGrid {
    dim: usize,
    n_particles: usize,
    horizon: f64,
    fine_steps: usize,
    pub seed: u64,
}

impl BrownianGrid {
    pub fn new(
        dim: usize,
        n_particles: usize,
        horizon: f64,
        fine_steps: usize,
        seed: u64,
    ) -> Result<Self, EngineError> {
        if fine_steps == 0 || !fine_steps.is_power_of_two() {
            return Err(EngineError::FineStepsNotPowerOfTwo(fine_steps));
        }
        if dim == 0 || n_particles == 0 {
            return Err(EngineError::BadGrid("dim and n_particles must be positive".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(EngineError::BadGrid(format!("horizon {horizon} must be positive")));
        }
        Ok(Self { dim, n_particles, horizon, fine_steps, seed })
    }
}

impl BrownianSource for BrownianGrid {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_particles(&self) -> usize {
        self.n_particles
    }
    fn fine_steps(&self) -> usize {
        self.fine_steps
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn fill_increment(
        &self,
        particle: usize,
        factor: usize,
        step: usize,
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        debug_assert!(particle < self.n_particles);
        debug_assert_eq!(out.len(), self.dim);
        let d = self.dim;
        let len = factor * d;
        if scratch.len() < len {
            scratch.resize(len, 0.0);
        }
        let buf = &mut scratch[..len];
        let base = ((particle * self.fine_steps + step * factor) * d) as u64;
        rng::fill_normals(self.seed, base, buf);
        let scale = self.fine_dt().sqrt();
        for v in buf.iter_mut() {
            *v *= scale;
        }
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = pairwise_sum_strided(buf, c, d, factor);
        }
    }
}

/// View of a source at a coarser step. `coarsen(source, 1)` is the identity.
pub struct CoarseView<'a> {
    source: &'a dyn BrownianSource,
    pub factor: usize,
}

impl<'a> CoarseView<'a> {
    pub fn dt(&self) -> f64 {
        self.factor as f64 * self.source.fine_dt()
    }
    pub fn step_count(&self) -> usize {
        self.source.fine_steps() / self.factor
    }
    pub fn fill(&self, particle: usize, step: usize, out: &mut [f64], scratch: &mut Vec<f64>) {
        self.source.fill_increment(particle, self.factor, step, out, scratch);
    }
}

/// Check the divisibility contract and return a coarse view.
pub fn coarsen(source: &dyn BrownianSource, factor: usize) -> Result<CoarseView<'_>, EngineError> {
    if factor == 0 || source.fine_steps() % factor != 0 {
        return Err(EngineError::FactorDoesNotDivide { factor, fine_steps: source.fine_steps() });
    }
    Ok(CoarseView { source, factor })
}

/// Materialized increments of the first `n_first` particles at a base
/// factor. Reading at any multiple of the base factor reproduces the grid's
/// own increments bitwise, because base-factor blocks are exact subtrees of
/// the fixed summation tree.
pub struct CoarseCache {
    dim: usize,
    n_first: usize,
    horizon: f64,
    fine_steps: usize,
    base_factor: usize,
    base_steps: usize,
    values: Vec<f64>, // particle-major, then step, then component
}

impl CoarseCache {
    pub fn materialize(
        grid: &dyn BrownianSource,
        base_factor: usize,
        n_first: usize,
    ) -> Result<Self, EngineError> {
        if base_factor == 0 || grid.fine_steps() % base_factor != 0 {
            return Err(EngineError::FactorDoesNotDivide {
                factor: base_factor,
                fine_steps: grid.fine_steps(),
            });
        }
        if n_first > grid.n_particles() {
            return Err(EngineError::BadGrid(format!(
                "cannot cache {n_first} particles from a grid of {}",
                grid.n_particles()
            )));
        }
        let d = grid.dim();
        let base_steps = grid.fine_steps() / base_factor;
        let mut values = vec![0.0; n_first * base_steps * d];
        {
            use rayon::prelude::*;
            values
                .par_chunks_mut(base_steps * d)
                .enumerate()
                .for_each_init(Vec::new, |scratch, (i, row)| {
                    for k in 0..base_steps {
                        let out = &mut row[k * d..(k + 1) * d];
                        grid.fill_increment(i, base_factor, k, out, scratch);
                    }
                });
        }
        Ok(Self {
            dim: d,
            n_first,
            horizon: grid.horizon(),
            fine_steps: grid.fine_steps(),
            base_factor,
            base_steps,
            values,
        })
    }
}

impl BrownianSource for CoarseCache {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_particles(&self) -> usize {
        self.n_first
    }
    fn fine_steps(&self) -> usize {
        self.fine_steps
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn fill_increment(
        &self,
        particle: usize,
        factor: usize,
        step: usize,
        out: &mut [f64],
        _scratch: &mut Vec<f64>,
    ) {
        assert!(
            factor >= self.base_factor && factor % self.base_factor == 0,
            "cache materialized at factor {} cannot serve factor {factor}",
            self.base_factor
        );
        let blocks = factor / self.base_factor;
        let d = self.dim;
        let start = (particle * self.base_steps + step * blocks) * d;
        if blocks == 1 {
            out.copy_from_slice(&self.values[start..start + d]);
        } else {
            for (c, slot) in out.iter_mut().enumerate() {
                *slot = pairwise_sum_strided(&self.values, start + c, d, blocks);
            }
        }
    }
}

/// First `n` particles of a larger source.
pub struct FirstParticles<'a> {
    pub inner: &'a dyn BrownianSource,
    pub n: usize,
}

impl BrownianSource for FirstParticles<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn n_particles(&self) -> usize {
        self.n
    }
    fn fine_steps(&self) -> usize {
        self.inner.fine_steps()
    }
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }
    fn fill_increment(
        &self,
        particle: usize,
        factor: usize,
        step: usize,
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        debug_assert!(particle < self.n);
        self.inner.fill_increment(particle, factor, step, out, scratch);
    }
}

/// A base ensemble extended by independent extra particles drawn from a
/// separate seed. Extras are indexed from zero in their own stream, so the
/// same extras attach to any base.
pub struct ExtendedSource<'a> {
    base: &'a dyn BrownianSource,
    extra: BrownianGrid,
}

impl<'a> ExtendedSource<'a> {
    pub fn new(
        base: &'a dyn BrownianSource,
        n_extra: usize,
        extra_seed: u64,
    ) -> Result<Self, EngineError> {
        if n_extra == 0 {
            return Err(EngineError::BadGrid("extension needs at least one extra particle".into()));
        }
        let extra =
            BrownianGrid::new(base.dim(), n_extra, base.horizon(), base.fine_steps(), extra_seed)?;
        Ok(Self { base, extra })
    }
}

impl BrownianSource for ExtendedSource<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn n_particles(&self) -> usize {
        self.base.n_particles() + self.extra.n_particles
    }
    fn fine_steps(&self) -> usize {
        self.base.fine_steps()
    }
    fn horizon(&self) -> f64 {
        self.base.horizon()
    }
    fn fill_increment(
        &self,
        particle: usize,
        factor: usize,
        step: usize,
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let n_base = self.base.n_particles();
        if particle < n_base {
            self.base.fill_increment(particle, factor, step, out, scratch);
        } else {
            self.extra.fill_increment(particle - n_base, factor, step, out, scratch);
        }
    }
}

/// Initial laws for the particle ensemble. All built-ins have moments of
/// every order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitialLaw {
    /// Every particle starts at this point (length = dimension).
    Point(Vec<f64>),
    /// Components i.i.d. uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Components i.i.d. normal with the given mean and variance.
    Gaussian { mean: f64, var: f64 },
}

impl InitialLaw {
    pub fn sample(&self, n: usize, dim: usize, seed: u64) -> Result<Vec<f64>, EngineError> {
        let mut out = vec![0.0; n * dim];
        match self {
            InitialLaw::Point(p) => {
                if p.len() != dim {
                    return Err(EngineError::BadInitial(format!(
                        "point law has {} components, dimension is {dim}",
                        p.len()
                    )));
                }
                for chunk in out.chunks_mut(dim) {
                    chunk.copy_from_slice(p);
                }
            }
            InitialLaw::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(EngineError::BadInitial(format!("bad uniform range [{lo}, {hi}]")));
                }
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = lo + (hi - lo) * rng::uniform(seed, i as u64);
                }
            }
            InitialLaw::Gaussian { mean, var } => {
                if !(var.is_finite() && *var >= 0.0) {
                    return Err(EngineError::BadInitial(format!("bad variance {var}")));
                }
                let sd = var.sqrt();
                rng::fill_normals(seed, 0, &mut out);
                for slot in out.iter_mut() {
                    *slot = mean + sd * *slot;
                }
            }
        }
        Ok(out)
    }
}

/// First non-finite state encountered by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// Scheme step at which the state became non-finite.
    pub step: usize,
    pub particle: usize,
}

/// Particle trajectories observed on a uniform grid.
///
/// `sim_factor` is the scheme step in fine-grid units; `record_factor` the
/// spacing of the stored rows (a multiple of `sim_factor`). States are
/// stored time-major: row `k` holds all particles at time
/// `k * record_factor * fine_dt`.
#[derive(Debug, Clone, Serialize)]
pub struct ParticlePaths {
    pub dim: usize,
    pub n_particles: usize,
    pub horizon: f64,
    pub fine_dt: f64,
    pub sim_factor: usize,
    pub record_factor: usize,
    pub model: String,
    pub seed: u64,
    states: Vec<f64>,
    pub diverged: Option<Divergence>,
    pub warnings: Vec<String>,
}

impl ParticlePaths {
    /// Scheme step size `delta`.
    pub fn dt(&self) -> f64 {
        self.sim_factor as f64 * self.fine_dt
    }

    /// Spacing of recorded rows.
    pub fn record_dt(&self) -> f64 {
        self.record_factor as f64 * self.fine_dt
    }

    /// Number of recorded rows (truncated if the run diverged).
    pub fn n_times(&self) -> usize {
        self.states.len() / (self.n_particles * self.dim)
    }

    pub fn time(&self, row: usize) -> f64 {
        row as f64 * self.record_dt()
    }

    pub fn state(&self, row: usize, particle: usize) -> &[f64] {
        let stride = self.n_particles * self.dim;
        let base = row * stride + particle * self.dim;
        &self.states[base..base + self.dim]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let stride = self.n_particles * self.dim;
        &self.states[row * stride..(row + 1) * stride]
    }

    /// Copy of the paths of the first `n` particles.
    pub fn first_particles(&self, n: usize) -> ParticlePaths {
        assert!(n >= 1 && n <= self.n_particles);
        let rows = self.n_times();
        let mut states = Vec::with_capacity(rows * n * self.dim);
        for k in 0..rows {
            let row = self.row(k);
            states.extend_from_slice(&row[..n * self.dim]);
        }
        ParticlePaths { n_particles: n, states, ..self.clone() }
    }

    /// Columnar CSV: `t,particle,x0,...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), EngineError> {
        let mut header = String::from("t,particle");
        for c in 0..self.dim {
            header.push_str(&format!(",x{c}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..self.n_times() {
            let t = self.time(k);
            for i in 0..self.n_particles {
                let mut line = format!("{t},{i}");
                for v in self.state(k, i) {
                    line.push(',');
                    line.push_str(&format!("{v}"));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    /// Compact binary dump. Layout (little endian):
    /// magic `MVLABPTH`, u32 version (1), u32 dim, u64 n_particles,
    /// u64 n_times, f64 delta (row spacing), u64 seed, then
    /// `n_times * n_particles * dim` f64 states, time-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), EngineError> {
        w.write_all(b"MVLABPTH")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.n_particles as u64).to_le_bytes())?;
        w.write_all(&(self.n_times() as u64).to_le_bytes())?;
        w.write_all(&self.record_dt().to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Read a binary dump produced by [`ParticlePaths::write_binary`].
    pub fn read_binary<R: Read>(mut r: R) -> Result<ParticlePaths, EngineError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"MVLABPTH" {
            return Err(EngineError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != 1 {
            return Err(EngineError::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let n_particles = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let n_times = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let delta = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        if dim == 0 || n_particles == 0 || n_times == 0 {
            return Err(EngineError::Format("empty dump".into()));
        }
        let mut states = vec![0.0; n_times * n_particles * dim];
        for v in states.iter_mut() {
            r.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        Ok(ParticlePaths {
            dim,
            n_particles,
            horizon: delta * (n_times - 1).max(1) as f64,
            fine_dt: delta,
            sim_factor: 1,
            record_factor: 1,
            model: String::new(),
            seed,
            states,
            diverged: None,
            warnings: Vec::new(),
        })
    }
}

/// Flow of empirical measures on a uniform grid.
#[derive(Debug, Clone)]
pub struct MeasureFlow {
    pub record_factor: usize,
    pub fine_dt: f64,
    pub measures: Vec<EmpiricalMeasure>,
}

impl MeasureFlow {
    fn constant(measure: EmpiricalMeasure, rows: usize, record_factor: usize, fine_dt: f64) -> Self {
        Self { record_factor, fine_dt, measures: vec![measure; rows] }
    }

    fn from_paths(paths: &ParticlePaths) -> Self {
        let measures = (0..paths.n_times())
            .map(|k| EmpiricalMeasure::new(paths.row(k).to_vec(), paths.dim).expect("finite states"))
            .collect();
        Self { record_factor: paths.record_factor, fine_dt: paths.fine_dt, measures }
    }
}

enum DriftMeasure<'a> {
    /// Empirical measure of the ensemble, frozen at each step start.
    FromEnsemble,
    /// Externally supplied flow, frozen per step (particles independent).
    Frozen(&'a MeasureFlow),
}

struct Scratch {
    drift: Vec<f64>,
    drift2: Vec<f64>,
    sigma: Vec<f64>,
    incr: Vec<f64>,
    gen: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            drift2: vec![0.0; dim],
            sigma: vec![0.0; dim * dim],
            incr: vec![0.0; dim],
            gen: Vec::new(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_particle(
    model: &ModelSpec,
    noise: &dyn BrownianSource,
    factor: usize,
    step: usize,
    delta: f64,
    view: &MeasureView<'_>,
    i: usize,
    x: &[f64],
    next: &mut [f64],
    s: &mut Scratch,
) {
    let d = x.len();
    model.eval_drift_monotone(x, view, &mut s.drift);
    model.eval_drift_mean_field(x, view, &mut s.drift2);
    model.eval_diffusion(x, &mut s.sigma);
    noise.fill_increment(i, factor, step, &mut s.incr, &mut s.gen);
    for c in 0..d {
        let mut acc = x[c] + (s.drift[c] + s.drift2[c]) * delta;
        for j in 0..d {
            acc += s.sigma[c * d + j] * s.incr[j];
        }
        next[c] = acc;
    }
}

fn simulate_inner(
    model: &ModelSpec,
    noise: &dyn BrownianSource,
    factor: usize,
    x0: &[f64],
    record_every: usize,
    drift_measure: DriftMeasure<'_>,
    record_first: usize,
) -> Result<ParticlePaths, EngineError> {
    let d = model.dim();
    if d != noise.dim() {
        return Err(EngineError::BadGrid(format!(
            "model dimension {d} vs grid dimension {}",
            noise.dim()
        )));
    }
    if factor == 0 || noise.fine_steps() % factor != 0 {
        return Err(EngineError::FactorDoesNotDivide { factor, fine_steps: noise.fine_steps() });
    }
    let n = noise.n_particles();
    if x0.len() != n * d {
        return Err(EngineError::BadInitial(format!(
            "initial state has {} coordinates, expected {}",
            x0.len(),
            n * d
        )));
    }
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(EngineError::BadInitial("non-finite initial state".into()));
    }
    let steps = noise.fine_steps() / factor;
    if record_every == 0 || steps % record_every != 0 {
        return Err(EngineError::BadRecording { record_every, steps });
    }
    if let DriftMeasure::Frozen(flow) = &drift_measure {
        if flow.record_factor != factor || flow.measures.len() != steps + 1 {
            return Err(EngineError::Incompatible(
                "frozen flow must live on the scheme's own grid".into(),
            ));
        }
    }
    let record_first = record_first.min(n);
    let delta = factor as f64 * noise.fine_dt();
    let mut warnings = Vec::new();
    if delta >= MAX_SAFE_STEP {
        warnings.push(format!(
            "step size {delta} is at or above exp(-1); the scheme's regime assumes smaller steps"
        ));
    }

    let rows = steps / record_every + 1;
    let mut states = Vec::with_capacity(rows * record_first * d);
    let mut prev = x0.to_vec();
    let mut next = vec![0.0; n * d];
    states.extend_from_slice(&prev[..record_first * d]);

    let mut diverged = None;
    let parallel = n * d >= 8192;
    for step in 0..steps {
        {
            let view = match &drift_measure {
                DriftMeasure::FromEnsemble => MeasureView::new(&prev, d),
                DriftMeasure::Frozen(flow) => MeasureView::from_measure(&flow.measures[step]),
            };
            if parallel {
                use rayon::prelude::*;
                next.par_chunks_mut(d).enumerate().for_each_init(
                    || Scratch::new(d),
                    |s, (i, slot)| {
                        update_particle(
                            model,
                            noise,
                            factor,
                            step,
                            delta,
                            &view,
                            i,
                            &prev[i * d..(i + 1) * d],
                            slot,
                            s,
                        );
                    },
                );
            } else {
                let mut s = Scratch::new(d);
                for (i, slot) in next.chunks_mut(d).enumerate() {
                    update_particle(
                        model,
                        noise,
                        factor,
                        step,
                        delta,
                        &view,
                        i,
                        &prev[i * d..(i + 1) * d],
                        slot,
                        &mut s,
                    );
                }
            }
        }
        if let Some(bad) = next.iter().position(|v| !v.is_finite()) {
            diverged = Some(Divergence { step: step + 1, particle: bad / d });
            break;
        }
        std::mem::swap(&mut prev, &mut next);
        if (step + 1) % record_every == 0 {
            states.extend_from_slice(&prev[..record_first * d]);
        }
    }

    Ok(ParticlePaths {
        dim: d,
        n_particles: record_first,
        horizon: noise.horizon(),
        fine_dt: noise.fine_dt(),
        sim_factor: factor,
        record_factor: factor * record_every,
        model: model.name.clone(),
        seed: 0,
        states,
        diverged,
        warnings,
    })
}

/// Run the interacting Euler-Maruyama scheme at step `factor * T/M`.
///
/// Every step freezes the empirical measure of the current states and
/// updates all particles against it; the run is deterministic given the
/// noise source. Rows are recorded every `record_every` scheme steps.
pub fn simulate_particles(
    model: &ModelSpec,
    noise: &dyn BrownianSource,
    factor: usize,
    x0: &[f64],
    record_every: usize,
) -> Result<ParticlePaths, EngineError> {
    simulate_inner(
        model,
        noise,
        factor,
        x0,
        record_every,
        DriftMeasure::FromEnsemble,
        noise.n_particles(),
    )
}

/// Fine-grid reference ensemble standing in for independent particles driven
/// by the true law.
///
/// Simulates `N + n_extra` interacting particles at step
/// `factor_ref * T/M`, where the first `N` reuse the noises of `base` and
/// the extras run on streams derived from `extra_seed`; returns the first
/// `N` paths. The extras only sharpen the empirical measure, so the returned
/// particles approximate the non-interacting system with matched noises.
/// With `n_extra = 0` and equal factors this is exactly
/// [`simulate_particles`].
pub fn simulate_reference(
    model: &ModelSpec,
    base: &dyn BrownianSource,
    factor_ref: usize,
    x0: &[f64],
    n_extra: usize,
    extra_seed: u64,
    extra_law: &InitialLaw,
    record_every: usize,
) -> Result<ParticlePaths, EngineError> {
    let n = base.n_particles();
    let d = base.dim();
    if n_extra == 0 {
        return simulate_inner(
            model,
            base,
            factor_ref,
            x0,
            record_every,
            DriftMeasure::FromEnsemble,
            n,
        );
    }
    let extended = ExtendedSource::new(base, n_extra, rng::derive(extra_seed, SALT_EXTRA_NOISE))?;
    let mut full_x0 = x0.to_vec();
    full_x0.extend(extra_law.sample(n_extra, d, rng::derive(extra_seed, SALT_EXTRA_X0))?);
    simulate_inner(
        model,
        &extended,
        factor_ref,
        &full_x0,
        record_every,
        DriftMeasure::FromEnsemble,
        n,
    )
}

const SALT_EXTRA_NOISE: u64 = 0x455854_4E;
const SALT_EXTRA_X0: u64 = 0x455854_58;

/// Result of the fixed-point iteration over the law flow.
#[derive(Debug)]
pub struct PicardResult {
    /// Flows of iterates 0..=k_max (the zeroth is the initial empirical
    /// measure, constant in time).
    pub flows: Vec<MeasureFlow>,
    /// `d_k = sup_t W1(mu^k_t, mu^{k-1}_t)` for `k = 1..=k_max`.
    pub distances: Vec<f64>,
}

/// Iterate the law flow to a fixed point: iterate `k` simulates independent
/// particles whose drift sees the frozen flow of iterate `k - 1`, reusing
/// the same Brownian grid every time, and records the sup-over-time
/// Wasserstein distance between consecutive flows.
///
/// In one dimension the distance is the exact `W_1`; in higher dimension the
/// sliced `W_2` stands in as the iteration metric.
pub fn picard_iteration(
    model: &ModelSpec,
    noise: &dyn BrownianSource,
    factor: usize,
    k_max: usize,
    x0: &[f64],
) -> Result<PicardResult, EngineError> {
    if k_max == 0 {
        return Err(EngineError::BadGrid("k_max must be at least 1".into()));
    }
    let d = model.dim();
    if factor == 0 || noise.fine_steps() % factor != 0 {
        return Err(EngineError::FactorDoesNotDivide { factor, fine_steps: noise.fine_steps() });
    }
    let steps = noise.fine_steps() / factor;
    let initial = EmpiricalMeasure::new(x0.to_vec(), d)
        .map_err(|e| EngineError::BadInitial(e.to_string()))?;
    let mut flows = vec![MeasureFlow::constant(initial, steps + 1, factor, noise.fine_dt())];
    let mut distances = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let paths = simulate_inner(
            model,
            noise,
            factor,
            x0,
            1,
            DriftMeasure::Frozen(&flows[k - 1]),
            noise.n_particles(),
        )?;
        if let Some(divergence) = paths.diverged {
            return Err(EngineError::Diverged {
                step: divergence.step,
                particle: divergence.particle,
            });
        }
        let flow = MeasureFlow::from_paths(&paths);
        let prev = &flows[k - 1];
        let mut sup = 0.0f64;
        for (m_new, m_old) in flow.measures.iter().zip(&prev.measures) {
            let w = if d == 1 {
                wasserstein_1d(1.0, m_new, m_old)
            } else {
                wasserstein_sliced(m_new, m_old, 32, 0x50494341)
            }
            .map_err(|e| EngineError::Incompatible(e.to_string()))?;
            sup = sup.max(w);
        }
        distances.push(sup);
        flows.push(flow);
    }
    Ok(PicardResult { flows, distances })
}

/// Monte Carlo estimate of `E sup_t |X_t - Y_t|^q` over the coarser path's
/// grid: `(1/N) sum_i (sup_k |a_i(t_k) - b_i(t_k)|)^q`.
///
/// `a`'s recorded grid must refine or equal `b`'s. Comparing at grid points
/// underestimates the continuous-time sup by an `O(sqrt(delta))` term that
/// this estimator deliberately does not correct.
pub fn strong_error_sup(a: &ParticlePaths, b: &ParticlePaths, q: f64) -> Result<f64, EngineError> {
    if q <= 0.0 {
        return Err(EngineError::BadOrder(q));
    }
    if a.n_particles != b.n_particles || a.dim != b.dim {
        return Err(EngineError::Incompatible("particle count or dimension mismatch".into()));
    }
    if a.horizon != b.horizon || a.fine_dt != b.fine_dt {
        return Err(EngineError::Incompatible("paths live on different time grids".into()));
    }
    if let Some(divergence) = a.diverged.or(b.diverged) {
        return Err(EngineError::Diverged {
            step: divergence.step,
            particle: divergence.particle,
        });
    }
    if b.record_factor % a.record_factor != 0 {
        return Err(EngineError::Incompatible(format!(
            "recorded grid {} does not refine {}",
            a.record_factor, b.record_factor
        )));
    }
    let ratio = b.record_factor / a.record_factor;
    let rows_b = b.n_times();
    if a.n_times() < (rows_b - 1) * ratio + 1 {
        return Err(EngineError::Incompatible("reference path too short".into()));
    }
    let n = a.n_particles;
    let per_particle = |i: usize| -> f64 {
        let mut sup = 0.0f64;
        for k in 0..rows_b {
            let da = a.state(k * ratio, i);
            let db = b.state(k, i);
            sup = sup.max(dist(da, db));
        }
        sup.powf(q)
    };
    Ok(pairwise_sum_by(n, &per_particle) / n as f64)
}

/// Mean `q`-th moment of one-step increments `|X_{t_{k+1}} - X_{t_k}|^q`
/// over the recorded grid, the `delta^{q/2}`-scaling diagnostic.
pub fn time_increment_moment(paths: &ParticlePaths, q: f64) -> Result<f64, EngineError> {
    if q <= 0.0 {
        return Err(EngineError::BadOrder(q));
    }
    let rows = paths.n_times();
    if rows < 2 {
        return Ok(0.0);
    }
    let n = paths.n_particles;
    let m = rows - 1;
    let value = pairwise_sum_by(n * m, &|idx| {
        let i = idx / m;
        let k = idx % m;
        dist(paths.state(k + 1, i), paths.state(k, i)).powf(q)
    });
    Ok(value / (n * m) as f64)
}

/// Empirical sup-moment `(1/N) sum_i sup_k |X^i_{t_k}|^p`, the boundedness
/// diagnostic for moment-sanity checks.
pub fn empirical_sup_moment(paths: &ParticlePaths, p: f64) -> Result<f64, EngineError> {
    if p <= 0.0 {
        return Err(EngineError::BadOrder(p));
    }
    let rows = paths.n_times();
    let n = paths.n_particles;
    let value = pairwise_sum_by(n, &|i| {
        let mut sup = 0.0f64;
        for k in 0..rows {
            sup = sup.max(norm(paths.state(k, i)));
        }
        sup.powf(p)
    });
    Ok(value / n as f64)
}
