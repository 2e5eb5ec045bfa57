//! SDE model class: drift split `b = b1 + b2`, measure dependence through a
//! restricted view, state-dependent diffusion, and a numerical assumption
//! validator.
//!
//! Two regularity regimes are supported, selected by [`AssumptionClass`]:
//!
//! - one-dimensional models whose `b1` is continuous and non-increasing in
//!   the state and Hölder of exponent `beta`, whose `b2` is Lipschitz in
//!   state and `W_1`-Lipschitz in the measure, and whose scalar diffusion is
//!   Hölder of exponent `alpha in [1/2, 1]`;
//! - multi-dimensional models with bounded drift that is Hölder in state and
//!   `W_1`-Lipschitz in the measure, and a smooth bounded diffusion matrix
//!   with bounded inverse.
//!
//! The built-in families realize both regimes with declared constants; the
//! hypotheses themselves are analytic, so [`validate_model`] can only probe
//! them at sampled points and falsify, never prove.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::measure::{wasserstein_1d, wasserstein_matching, EmpiricalMeasure, MATCHING_CAP};
use crate::numeric::{dist, norm, pairwise_sum_by, pairwise_sum_strided};
use crate::rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("family `{family}` does not take parameter `{key}`")]
    UnknownParam { family: String, key: String },
    #[error("parameter `{key}` = {value} outside admissible range: {reason}")]
    ParamOutOfRange { key: String, value: f64, reason: String },
    #[error("invalid regularity profile: {0}")]
    BadProfile(String),
    #[error("probe configuration invalid: {0}")]
    BadProbe(String),
}

/// Declared regularity data of a model.
///
/// For one-dimensional families `alpha` is the diffusion Hölder exponent and
/// `beta`/`k1`/`k2` the drift and diffusion constants. For multi-dimensional
/// families `alpha` is the drift Hölder exponent and `k` its constant; `k2`
/// bounds the diffusion's Lipschitz quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityProfile {
    pub dimension: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
}

impl RegularityProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok_exp = |e: f64| e > 0.0 && e <= 1.0;
        if self.dimension == 0 {
            return Err(ModelError::BadProfile("dimension must be positive".into()));
        }
        if !ok_exp(self.alpha) || !ok_exp(self.beta) {
            return Err(ModelError::BadProfile(format!(
                "exponents must lie in (0, 1]: alpha={}, beta={}",
                self.alpha, self.beta
            )));
        }
        for (name, c) in [("k1", self.k1), ("k2", self.k2), ("k", self.k)] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(ModelError::BadProfile(format!(
                    "constant {name}={c} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }
}

/// Read-only view of an empirical measure, the only channel through which
/// drift coefficients may depend on the law. Exposing the mean, absolute
/// moments and Lipschitz averages keeps the law-dependence of every built-in
/// `W_1`-Lipschitz by construction.
pub struct MeasureView<'a> {
    atoms: &'a [f64],
    n: usize,
    dim: usize,
    mean: Vec<f64>,
}

impl<'a> MeasureView<'a> {
    /// View over `n * dim` atom coordinates, atom-major.
    pub fn new(atoms: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && !atoms.is_empty() && atoms.len() % dim == 0);
        let n = atoms.len() / dim;
        let mean = (0..dim)
            .map(|c| pairwise_sum_strided(atoms, c, dim, n) / n as f64)
            .collect();
        Self { atoms, n, dim, mean }
    }

    pub fn from_measure(m: &'a EmpiricalMeasure) -> Self {
        Self::new(m.atoms(), m.dim())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw atom coordinates, atom-major.
    pub fn sample(&self) -> &[f64] {
        self.atoms
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `(1/N) sum_i |x_i|^p` for `p >= 1`.
    pub fn abs_moment(&self, p: f64) -> f64 {
        assert!(p >= 1.0);
        pairwise_sum_by(self.n, &|i| norm(self.atom(i)).powf(p)) / self.n as f64
    }

    /// Average of a caller-supplied test function over the atoms.
    pub fn lip_average<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        pairwise_sum_by(self.n, &|i| f(self.atom(i))) / self.n as f64
    }
}

/// Drift component: writes `b(x, mu)` into `out` (length `dim`).
pub type DriftFn = Arc<dyn Fn(&[f64], &MeasureView<'_>, &mut [f64]) + Send + Sync>;
/// Diffusion: writes the `dim x dim` matrix row-major into `out` (a single
/// scalar when `dim == 1`).
pub type DiffusionFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Which assumption set the validator probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssumptionClass {
    /// 1-D: monotone Hölder `b1`, Lipschitz `b2`, Hölder diffusion.
    Holder1d,
    /// Multi-d: bounded Hölder drift, smooth invertible diffusion.
    BoundedMultid,
    /// User-supplied; validated according to its dimension.
    Custom,
}

/// A complete model: named coefficients plus their declared regularity.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub profile: RegularityProfile,
    pub class: AssumptionClass,
    drift_monotone: DriftFn,
    drift_mean_field: DriftFn,
    diffusion: DiffusionFn,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("profile", &self.profile)
            .field("class", &self.class)
            .finish()
    }
}

impl ModelSpec {
    /// Assemble a custom model. The profile is declared, not checked; run
    /// [`validate_model`] to probe it.
    pub fn custom(
        name: impl Into<String>,
        profile: RegularityProfile,
        drift_monotone: DriftFn,
        drift_mean_field: DriftFn,
        diffusion: DiffusionFn,
    ) -> Result<Self, ModelError> {
        profile.validate()?;
        Ok(Self {
            name: name.into(),
            profile,
            class: AssumptionClass::Custom,
            drift_monotone,
            drift_mean_field,
            diffusion,
        })
    }

    pub fn dim(&self) -> usize {
        self.profile.dimension
    }

    /// Evaluate the monotone drift component `b1`.
    pub fn eval_drift_monotone(&self, x: &[f64], m: &MeasureView<'_>, out: &mut [f64]) {
        (self.drift_monotone)(x, m, out);
    }

    /// Evaluate the mean-field drift component `b2`.
    pub fn eval_drift_mean_field(&self, x: &[f64], m: &MeasureView<'_>, out: &mut [f64]) {
        (self.drift_mean_field)(x, m, out);
    }

    /// Evaluate the full drift `b1 + b2` using `scratch` (length `dim`).
    pub fn eval_drift(&self, x: &[f64], m: &MeasureView<'_>, out: &mut [f64], scratch: &mut [f64]) {
        (self.drift_monotone)(x, m, out);
        (self.drift_mean_field)(x, m, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += *s;
        }
    }

    /// Evaluate the diffusion matrix (row-major, `dim * dim`).
    pub fn eval_diffusion(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out);
    }
}

/// Identifiers of the built-in families, as addressable from configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FamilyId {
    LinearMeanField,
    HolderDrift1d,
    HolderDiffusion1d,
    BoundedHolderMultid,
}

impl FamilyId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FamilyId::LinearMeanField => "linear_mf",
            FamilyId::HolderDrift1d => "holder_drift_1d",
            FamilyId::HolderDiffusion1d => "holder_diffusion_1d",
            FamilyId::BoundedHolderMultid => "bounded_holder_multid",
        }
    }
}

impl std::str::FromStr for FamilyId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear_mf" => Ok(FamilyId::LinearMeanField),
            "holder_drift_1d" => Ok(FamilyId::HolderDrift1d),
            "holder_diffusion_1d" => Ok(FamilyId::HolderDiffusion1d),
            "bounded_holder_multid" => Ok(FamilyId::BoundedHolderMultid),
            other => Err(ModelError::UnknownFamily(other.to_string())),
        }
    }
}

/// Truncation bound applied to the mean-field term of the Hölder families,
/// keeping them bounded under stress without affecting moderate states.
pub const DEFAULT_MEAN_BOUND: f64 = 1e3;

struct ParamReader<'a> {
    family: &'static str,
    params: &'a BTreeMap<String, f64>,
    seen: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    fn new(family: &'static str, params: &'a BTreeMap<String, f64>) -> Self {
        Self { family, params, seen: Vec::new() }
    }

    fn get(&mut self, key: &'static str, default: f64) -> f64 {
        self.seen.push(key);
        self.params.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<(), ModelError> {
        for key in self.params.keys() {
            if !self.seen.iter().any(|s| s == key) {
                return Err(ModelError::UnknownParam {
                    family: self.family.to_string(),
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }
}

fn require_range(
    key: &'static str,
    value: f64,
    ok: bool,
    reason: &str,
) -> Result<f64, ModelError> {
    if ok && value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::ParamOutOfRange {
            key: key.to_string(),
            value,
            reason: reason.to_string(),
        })
    }
}

/// Signed power `sign(x) |x|^e`, the prototypical non-increasing Hölder term
/// (when negated).
#[inline]
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(e)
    }
}

/// Instantiate a built-in family from a flat key/value parameter map.
///
/// Families and their parameters (all optional keys fall back to defaults):
///
/// - `linear_mf` (d = 1): `b(x, mu) = a*x + c*mean(mu)`, `sigma = s`.
///   Keys: `a` (-1), `c` (0.5), `s` (1).
/// - `holder_drift_1d`: `b1 = -lambda*sign(x)|x|^beta`,
///   `b2 = clamp(k1*mean(mu), +-bound)`, `sigma = s`.
///   Keys: `lambda` (1), `beta` (0.5), `k1` (0.25), `bound` (1e3), `s` (1).
/// - `holder_diffusion_1d`: drift as above, `sigma = min(kappa*|x|^alpha, cap)`
///   with `alpha in [1/2, 1]`.
///   Keys: `alpha` (0.75), `kappa` (1), `cap` (10), `lambda` (1), `beta` (1),
///   `k1` (0.25), `bound` (1e3).
/// - `bounded_holder_multid`: `b_i = amp*sign(x_i)*min(|x_i|, 1)^alpha
///   + c*tanh(mean_i(mu))`, `sigma = I + eps*D(x)` with
///   `D_jk = sin(x_j + x_k)/d`.
///   Keys: `d` (2), `alpha` (0.5), `amp` (1), `c` (0.5), `eps` (0.25).
pub fn make_builtin_model(
    family: FamilyId,
    params: &BTreeMap<String, f64>,
) -> Result<ModelSpec, ModelError> {
    match family {
        FamilyId::LinearMeanField => {
            let mut p = ParamReader::new("linear_mf", params);
            let a = p.get("a", -1.0);
            let c = p.get("c", 0.5);
            let s = p.get("s", 1.0);
            p.finish()?;
            require_range("a", a, true, "")?;
            require_range("c", c, true, "")?;
            require_range("s", s, true, "")?;
            let profile = RegularityProfile {
                dimension: 1,
                alpha: 1.0,
                beta: 1.0,
                k1: a.abs().max(c.abs()),
                k2: 0.0,
                k: 0.0,
            };
            profile.validate()?;
            Ok(ModelSpec {
                name: format!("linear_mf(a={a},c={c},s={s})"),
                profile,
                class: AssumptionClass::Holder1d,
                drift_monotone: Arc::new(move |x, _m, out| out[0] = a * x[0]),
                drift_mean_field: Arc::new(move |_x, m, out| out[0] = c * m.mean()[0]),
                diffusion: Arc::new(move |_x, out| out[0] = s),
            })
        }
        FamilyId::HolderDrift1d | FamilyId::HolderDiffusion1d => {
            let is_diffusion = family == FamilyId::HolderDiffusion1d;
            let fam_name = if is_diffusion { "holder_diffusion_1d" } else { "holder_drift_1d" };
            let mut p = ParamReader::new(fam_name, params);
            let lambda = p.get("lambda", 1.0);
            let beta = p.get("beta", if is_diffusion { 1.0 } else { 0.5 });
            let k1 = p.get("k1", 0.25);
            let bound = p.get("bound", DEFAULT_MEAN_BOUND);
            let (alpha, kappa, cap, s) = if is_diffusion {
                let alpha = p.get("alpha", 0.75);
                let kappa = p.get("kappa", 1.0);
                let cap = p.get("cap", 10.0);
                (alpha, kappa, cap, 0.0)
            } else {
                let s = p.get("s", 1.0);
                (1.0, 0.0, 0.0, s)
            };
            p.finish()?;
            let lambda = require_range("lambda", lambda, lambda >= 0.0, "must be >= 0")?;
            let beta =
                require_range("beta", beta, beta > 0.0 && beta <= 1.0, "must lie in (0, 1]")?;
            let k1 = require_range("k1", k1, k1 >= 0.0, "must be >= 0")?;
            let bound = require_range("bound", bound, bound >= 0.0, "must be >= 0")?;
            if is_diffusion {
                require_range(
                    "alpha",
                    alpha,
                    (0.5..=1.0).contains(&alpha),
                    "diffusion Hölder exponent must lie in [1/2, 1]",
                )?;
                require_range("kappa", kappa, kappa >= 0.0, "must be >= 0")?;
                require_range("cap", cap, cap > 0.0, "must be > 0")?;
            }
            let profile = RegularityProfile {
                dimension: 1,
                alpha,
                beta,
                k1: (lambda * f64::powf(2.0, 1.0 - beta)).max(k1),
                k2: if is_diffusion { kappa } else { 0.0 },
                k: 0.0,
            };
            profile.validate()?;
            let name = if is_diffusion {
                format!("{fam_name}(alpha={alpha},kappa={kappa},cap={cap},lambda={lambda},beta={beta},k1={k1})")
            } else {
                format!("{fam_name}(lambda={lambda},beta={beta},k1={k1},s={s})")
            };
            let diffusion: DiffusionFn = if is_diffusion {
                Arc::new(move |x, out| out[0] = (kappa * x[0].abs().powf(alpha)).min(cap))
            } else {
                Arc::new(move |_x, out| out[0] = s)
            };
            Ok(ModelSpec {
                name,
                profile,
                class: AssumptionClass::Holder1d,
                drift_monotone: Arc::new(move |x, _m, out| {
                    out[0] = -lambda * signed_pow(x[0], beta)
                }),
                drift_mean_field: Arc::new(move |_x, m, out| {
                    out[0] = (k1 * m.mean()[0]).clamp(-bound, bound)
                }),
                diffusion,
            })
        }
        FamilyId::BoundedHolderMultid => {
            let mut p = ParamReader::new("bounded_holder_multid", params);
            let d_raw = p.get("d", 2.0);
            let alpha = p.get("alpha", 0.5);
            let amp = p.get("amp", 1.0);
            let c = p.get("c", 0.5);
            let eps = p.get("eps", 0.25);
            p.finish()?;
            let d = require_range("d", d_raw, d_raw >= 1.0 && d_raw.fract() == 0.0, "must be a positive integer")? as usize;
            let alpha =
                require_range("alpha", alpha, alpha > 0.0 && alpha <= 1.0, "must lie in (0, 1]")?;
            let amp = require_range("amp", amp, amp >= 0.0, "must be >= 0")?;
            require_range("c", c, true, "")?;
            let eps = require_range("eps", eps, eps >= 0.0, "must be >= 0")?;
            let profile = RegularityProfile {
                dimension: d,
                alpha,
                beta: 1.0,
                k1: 0.0,
                k2: 2.0 * eps,
                k: (amp * f64::powf(2.0, 1.0 - alpha) * (d as f64).powf(0.5 * (1.0 - alpha)))
                    .max(c.abs()),
            };
            profile.validate()?;
            Ok(ModelSpec {
                name: format!("bounded_holder_multid(d={d},alpha={alpha},amp={amp},c={c},eps={eps})"),
                profile,
                class: AssumptionClass::BoundedMultid,
                drift_monotone: Arc::new(move |x, _m, out| {
                    for (o, &xi) in out.iter_mut().zip(x) {
                        *o = amp * signed_pow(xi.clamp(-1.0, 1.0), alpha);
                    }
                }),
                drift_mean_field: Arc::new(move |_x, m, out| {
                    for (o, &mi) in out.iter_mut().zip(m.mean()) {
                        *o = c * mi.tanh();
                    }
                }),
                diffusion: Arc::new(move |x, out| {
                    let d = x.len();
                    let inv_d = 1.0 / d as f64;
                    for j in 0..d {
                        for k in 0..d {
                            let offdiag = eps * (x[j] + x[k]).sin() * inv_d;
                            out[j * d + k] = if j == k { 1.0 + offdiag } else { offdiag };
                        }
                    }
                }),
            })
        }
    }
}

/// Probe configuration for [`validate_model`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeConfig {
    /// Half-width of the sampling box around the origin.
    pub box_radius: f64,
    /// Number of probe pairs (points and measures).
    pub n_pairs: usize,
    pub seed: u64,
    /// Slack added to declared constants, and the floor for the minimal
    /// singular value of the diffusion in the multi-d regime.
    pub tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { box_radius: 2.0, n_pairs: 256, seed: 0x50524F4245, tol: 1e-6 }
    }
}

/// Outcome of one probe-based check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Worst observed value (max quotient, max violation, or min singular
    /// value depending on the check).
    pub observed: f64,
    /// Bound it was compared against (including slack).
    pub bound: f64,
    pub passed: bool,
    pub detail: Option<String>,
}

/// Report of all checks run against a model's declared profile.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const PROBE_MEASURE_ATOMS: usize = 16;

struct Probes {
    points_a: Vec<Vec<f64>>,
    points_b: Vec<Vec<f64>>,
    measures_a: Vec<EmpiricalMeasure>,
    measures_b: Vec<EmpiricalMeasure>,
    w1: Vec<f64>,
}

fn draw_point(seed: u64, idx: &mut u64, dim: usize, radius: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let u = rng::uniform(seed, *idx);
            *idx += 1;
            radius * (2.0 * u - 1.0)
        })
        .collect()
}

fn build_probes(dim: usize, cfg: &ProbeConfig) -> Result<Probes, ModelError> {
    if cfg.n_pairs == 0 || cfg.box_radius <= 0.0 {
        return Err(ModelError::BadProbe(
            "need n_pairs >= 1 and box_radius > 0".into(),
        ));
    }
    let seed = rng::derive(cfg.seed, 0x56414C);
    let mut idx = 0u64;
    let mut points_a = Vec::with_capacity(cfg.n_pairs);
    let mut points_b = Vec::with_capacity(cfg.n_pairs);
    let mut measures_a = Vec::with_capacity(cfg.n_pairs);
    let mut measures_b = Vec::with_capacity(cfg.n_pairs);
    let mut w1 = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        points_a.push(draw_point(seed, &mut idx, dim, cfg.box_radius));
        points_b.push(draw_point(seed, &mut idx, dim, cfg.box_radius));
        let mut atoms_a = Vec::with_capacity(PROBE_MEASURE_ATOMS * dim);
        let mut atoms_b = Vec::with_capacity(PROBE_MEASURE_ATOMS * dim);
        for _ in 0..PROBE_MEASURE_ATOMS {
            atoms_a.extend(draw_point(seed, &mut idx, dim, cfg.box_radius));
            atoms_b.extend(draw_point(seed, &mut idx, dim, cfg.box_radius));
        }
        let ma = EmpiricalMeasure::new(atoms_a, dim).expect("finite probe atoms");
        let mb = EmpiricalMeasure::new(atoms_b, dim).expect("finite probe atoms");
        let w = if dim == 1 {
            wasserstein_1d(1.0, &ma, &mb).expect("probe W1")
        } else {
            wasserstein_matching(1.0, &ma, &mb, MATCHING_CAP).expect("probe W1")
        };
        measures_a.push(ma);
        measures_b.push(mb);
        w1.push(w);
    }
    Ok(Probes { points_a, points_b, measures_a, measures_b, w1 })
}

/// Probe a model's declared assumptions on random point and measure pairs.
///
/// Reports Hölder/Lipschitz quotients against the declared constants (plus
/// `tol` slack), monotonicity violations of the 1-D `b1`, and for multi-d
/// models the extremes of `|b|`, `|sigma|`, the diffusion's Lipschitz
/// quotient and its minimal singular value. Non-finite outputs fail the
/// `finite_outputs` entry. Report-only: never errors on a bad model.
pub fn validate_model(model: &ModelSpec, cfg: &ProbeConfig) -> Result<ValidationReport, ModelError> {
    let dim = model.dim();
    let probes = build_probes(dim, cfg)?;
    let mut checks = Vec::new();
    let mut finite = true;

    let eval = |f: &dyn Fn(&[f64], &MeasureView<'_>, &mut [f64]),
                x: &[f64],
                m: &EmpiricalMeasure|
     -> Vec<f64> {
        let mut out = vec![0.0; dim];
        let view = MeasureView::from_measure(m);
        f(x, &view, &mut out);
        out
    };
    let b1 = |x: &[f64], m: &EmpiricalMeasure| eval(&*model.drift_monotone, x, m);
    let b2 = |x: &[f64], m: &EmpiricalMeasure| eval(&*model.drift_mean_field, x, m);
    let sig = |x: &[f64]| {
        let mut out = vec![0.0; dim * dim];
        (model.diffusion)(x, &mut out);
        out
    };

    fn record(
        checks: &mut Vec<CheckOutcome>,
        name: &str,
        observed: f64,
        bound: f64,
        detail: Option<String>,
    ) {
        let passed = observed.is_finite() && observed <= bound;
        checks.push(CheckOutcome { name: name.to_string(), observed, bound, passed, detail });
    }

    let one_dimensional = dim == 1;
    let quotient_floor = 1e-9;

    if one_dimensional {
        // Monotonicity of x -> b1(x, mu): report the worst increase.
        let mut worst_increase = f64::NEG_INFINITY;
        let mut holder_b1_x: f64 = 0.0;
        let mut lip_b1_mu: f64 = 0.0;
        let mut lip_b2_x: f64 = 0.0;
        let mut lip_b2_mu: f64 = 0.0;
        let mut holder_sigma: f64 = 0.0;
        for i in 0..probes.points_a.len() {
            let (x, y) = (&probes.points_a[i], &probes.points_b[i]);
            let (mu, nu) = (&probes.measures_a[i], &probes.measures_b[i]);
            let w1 = probes.w1[i];
            let b1_x_mu = b1(x, mu)[0];
            let b1_y_mu = b1(y, mu)[0];
            let b1_x_nu = b1(x, nu)[0];
            let b2_x_mu = b2(x, mu)[0];
            let b2_y_mu = b2(y, mu)[0];
            let b2_x_nu = b2(x, nu)[0];
            let s_x = sig(x)[0];
            let s_y = sig(y)[0];
            for v in [b1_x_mu, b1_y_mu, b1_x_nu, b2_x_mu, b2_y_mu, b2_x_nu, s_x, s_y] {
                finite &= v.is_finite();
            }
            let dx = (x[0] - y[0]).abs();
            if dx > quotient_floor {
                let (lo_val, hi_val) = if x[0] < y[0] { (b1_x_mu, b1_y_mu) } else { (b1_y_mu, b1_x_mu) };
                worst_increase = worst_increase.max(hi_val - lo_val);
                holder_b1_x = holder_b1_x.max((b1_x_mu - b1_y_mu).abs() / dx.powf(model.profile.beta));
                lip_b2_x = lip_b2_x.max((b2_x_mu - b2_y_mu).abs() / dx);
                holder_sigma = holder_sigma.max((s_x - s_y).abs() / dx.powf(model.profile.alpha));
            }
            if w1 > quotient_floor {
                lip_b1_mu = lip_b1_mu.max((b1_x_mu - b1_x_nu).abs() / w1);
                lip_b2_mu = lip_b2_mu.max((b2_x_mu - b2_x_nu).abs() / w1);
            }
        }
        record(
            &mut checks,
            "b1_monotone",
            worst_increase,
            cfg.tol,
            Some("max of b1(hi) - b1(lo) over probed pairs".into()),
        );
        record(&mut checks, "b1_holder_x", holder_b1_x, model.profile.k1 + cfg.tol, None);
        record(&mut checks, "b1_w1_lipschitz", lip_b1_mu, model.profile.k1 + cfg.tol, None);
        record(&mut checks, "b2_lipschitz_x", lip_b2_x, model.profile.k1 + cfg.tol, None);
        record(&mut checks, "b2_w1_lipschitz", lip_b2_mu, model.profile.k1 + cfg.tol, None);
        record(&mut checks, "sigma_holder", holder_sigma, model.profile.k2 + cfg.tol, None);
    } else {
        let mut holder_b_x: f64 = 0.0;
        let mut lip_b_mu: f64 = 0.0;
        let mut max_b: f64 = 0.0;
        let mut max_sigma: f64 = 0.0;
        let mut lip_sigma: f64 = 0.0;
        let mut min_singular = f64::INFINITY;
        for i in 0..probes.points_a.len() {
            let (x, y) = (&probes.points_a[i], &probes.points_b[i]);
            let (mu, nu) = (&probes.measures_a[i], &probes.measures_b[i]);
            let w1 = probes.w1[i];
            let add = |a: &[f64], b: &[f64]| -> Vec<f64> {
                a.iter().zip(b).map(|(u, v)| u + v).collect()
            };
            let b_x_mu = add(&b1(x, mu), &b2(x, mu));
            let b_y_mu = add(&b1(y, mu), &b2(y, mu));
            let b_x_nu = add(&b1(x, nu), &b2(x, nu));
            let s_x = sig(x);
            let s_y = sig(y);
            for v in b_x_mu.iter().chain(&b_y_mu).chain(&b_x_nu).chain(&s_x).chain(&s_y) {
                finite &= v.is_finite();
            }
            max_b = max_b.max(norm(&b_x_mu)).max(norm(&b_y_mu));
            max_sigma = max_sigma.max(norm(&s_x)).max(norm(&s_y));
            let dxy = dist(x, y);
            if dxy > quotient_floor {
                holder_b_x = holder_b_x.max(dist(&b_x_mu, &b_y_mu) / dxy.powf(model.profile.alpha));
                lip_sigma = lip_sigma.max(dist(&s_x, &s_y) / dxy);
            }
            if w1 > quotient_floor {
                lip_b_mu = lip_b_mu.max(dist(&b_x_mu, &b_x_nu) / w1);
            }
            min_singular = min_singular.min(min_singular_value(&s_x, dim));
        }
        record(&mut checks, "drift_holder_x", holder_b_x, model.profile.k + cfg.tol, None);
        record(&mut checks, "drift_w1_lipschitz", lip_b_mu, model.profile.k + cfg.tol, None);
        record(
            &mut checks,
            "drift_bounded",
            max_b,
            f64::MAX,
            Some("max |b| over probes; fails only on non-finite values".into()),
        );
        record(&mut checks, "sigma_bounded", max_sigma, f64::MAX, None);
        record(&mut checks, "sigma_lipschitz", lip_sigma, model.profile.k2 + cfg.tol, None);
        // Invertibility with bounded inverse: the smallest singular value
        // over the probe box must stay above the tolerance.
        let passed = min_singular.is_finite() && min_singular >= cfg.tol;
        checks.push(CheckOutcome {
            name: "sigma_min_singular".into(),
            observed: min_singular,
            bound: cfg.tol,
            passed,
            detail: Some("must be >= bound".into()),
        });
    }

    checks.push(CheckOutcome {
        name: "finite_outputs".into(),
        observed: if finite { 0.0 } else { 1.0 },
        bound: 0.0,
        passed: finite,
        detail: None,
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { model: model.name.clone(), checks, passed })
}

/// Smallest singular value of a row-major `d x d` matrix, via cyclic Jacobi
/// on `A^T A`.
pub fn min_singular_value(a: &[f64], d: usize) -> f64 {
    assert_eq!(a.len(), d * d);
    // Gram matrix, symmetric positive semidefinite.
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[k * d + i] * a[k * d + j];
            }
            g[i * d + j] = acc;
        }
    }
    // Cyclic Jacobi rotations annihilate off-diagonal entries.
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += g[i * d + j] * g[i * d + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + norm(&g)) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let gpq = g[p * d + q];
                if gpq.abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (g[q * d + q] - g[p * d + p]) / gpq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let gkp = g[k * d + p];
                    let gkq = g[k * d + q];
                    g[k * d + p] = c * gkp - s * gkq;
                    g[k * d + q] = s * gkp + c * gkq;
                }
                for k in 0..d {
                    let gpk = g[p * d + k];
                    let gqk = g[q * d + k];
                    g[p * d + k] = c * gpk - s * gqk;
                    g[q * d + k] = s * gpk + c * gqk;
                }
            }
        }
    }
    (0..d)
        .map(|i| g[i * d + i].max(0.0))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::coupling_upper_bound;

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn view_of(points: &[f64]) -> (Vec<f64>, usize) {
        (points.to_vec(), 1)
    }

    #[test]
    fn linear_family_is_direct_parameter_substitution() {
        let m = make_builtin_model(
            FamilyId::LinearMeanField,
            &params(&[("a", -1.0), ("c", 0.5), ("s", 0.0)]),
        )
        .unwrap();
        let (atoms, dim) = view_of(&[1.0, 3.0]); // mean 2
        let view = MeasureView::new(&atoms, dim);
        let mut out = [0.0];
        let mut scratch = [0.0];
        m.eval_drift(&[2.0], &view, &mut out, &mut scratch);
        assert!((out[0] - (-2.0 + 0.5 * 2.0)).abs() < 1e-15);
        m.eval_diffusion(&[2.0], &mut out);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn holder_diffusion_formula_and_range_check() {
        let m = make_builtin_model(
            FamilyId::HolderDiffusion1d,
            &params(&[("alpha", 0.5), ("kappa", 1.0), ("cap", 10.0), ("lambda", 1.0), ("beta", 1.0), ("k1", 0.0), ("bound", 0.0)]),
        )
        .unwrap();
        let mut out = [0.0];
        m.eval_diffusion(&[2.0], &mut out);
        assert!((out[0] - 2.0f64.sqrt()).abs() < 1e-15);

        let err = make_builtin_model(
            FamilyId::HolderDiffusion1d,
            &params(&[("alpha", 0.25)]),
        );
        assert!(matches!(err, Err(ModelError::ParamOutOfRange { .. })));
    }

    #[test]
    fn unknown_family_and_unknown_key_are_rejected() {
        assert!(matches!("bogus".parse::<FamilyId>(), Err(ModelError::UnknownFamily(_))));
        let err = make_builtin_model(FamilyId::LinearMeanField, &params(&[("zeta", 1.0)]));
        assert!(matches!(err, Err(ModelError::UnknownParam { .. })));
    }

    #[test]
    fn measure_view_mean_and_averages() {
        let atoms = vec![1.0, 2.0, 3.0, 4.0];
        let v = MeasureView::new(&atoms, 1);
        assert_eq!(v.mean()[0], 2.5);
        assert!(v.abs_moment(1.0) >= v.mean()[0].abs());
        // Average of a constant is exactly that constant.
        assert_eq!(v.lip_average(|_| 0.7), 0.7);
        let atoms3 = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let v2 = MeasureView::new(&atoms3, 2);
        assert_eq!(v2.mean(), &[3.0, 4.0]);
    }

    #[test]
    fn validator_passes_linear_family() {
        let m = make_builtin_model(
            FamilyId::LinearMeanField,
            &params(&[("a", -1.0), ("c", 0.5), ("s", 1.0)]),
        )
        .unwrap();
        let report = validate_model(&m, &ProbeConfig::default()).unwrap();
        assert!(report.passed, "{report:?}");
        for name in ["b1_holder_x", "b2_w1_lipschitz", "sigma_holder"] {
            let c = report.check(name).unwrap();
            assert!(c.observed <= c.bound);
        }
    }

    #[test]
    fn validator_flags_increasing_drift() {
        let profile = RegularityProfile { dimension: 1, alpha: 1.0, beta: 1.0, k1: 1.0, k2: 0.0, k: 0.0 };
        let m = ModelSpec::custom(
            "increasing_b1",
            profile,
            Arc::new(|x, _m, out| out[0] = x[0]),
            Arc::new(|_x, _m, out| out[0] = 0.0),
            Arc::new(|_x, out| out[0] = 1.0),
        )
        .unwrap();
        let report = validate_model(&m, &ProbeConfig::default()).unwrap();
        assert!(!report.passed);
        assert!(!report.check("b1_monotone").unwrap().passed);
    }

    #[test]
    fn validator_flags_near_singular_diffusion() {
        // eps far above 1 drives I + eps*D close to singular somewhere in the
        // probe box.
        let m = make_builtin_model(
            FamilyId::BoundedHolderMultid,
            &params(&[("d", 2.0), ("alpha", 0.5), ("eps", 4.0)]),
        )
        .unwrap();
        let cfg = ProbeConfig { box_radius: 3.0, n_pairs: 512, seed: 7, tol: 5e-2 };
        let report = validate_model(&m, &cfg).unwrap();
        let sing = report.check("sigma_min_singular").unwrap();
        assert!(!sing.passed, "min singular {} unexpectedly above {}", sing.observed, sing.bound);

        // A small eps keeps the matrix uniformly invertible.
        let ok = make_builtin_model(
            FamilyId::BoundedHolderMultid,
            &params(&[("d", 2.0), ("alpha", 0.5), ("eps", 0.25)]),
        )
        .unwrap();
        let report = validate_model(&ok, &cfg).unwrap();
        assert!(report.check("sigma_min_singular").unwrap().passed);
    }

    #[test]
    fn validator_flags_non_finite_output() {
        let profile = RegularityProfile { dimension: 1, alpha: 1.0, beta: 1.0, k1: 1.0, k2: 1.0, k: 0.0 };
        let m = ModelSpec::custom(
            "nan_drift",
            profile,
            Arc::new(|x, _m, out| out[0] = (x[0] - 10.0).ln()), // NaN in the box
            Arc::new(|_x, _m, out| out[0] = 0.0),
            Arc::new(|_x, out| out[0] = 1.0),
        )
        .unwrap();
        let report = validate_model(&m, &ProbeConfig::default()).unwrap();
        assert!(!report.check("finite_outputs").unwrap().passed);
    }

    #[test]
    fn builtin_families_respect_declared_constants() {
        let models = vec![
            make_builtin_model(FamilyId::LinearMeanField, &BTreeMap::new()).unwrap(),
            make_builtin_model(FamilyId::HolderDrift1d, &BTreeMap::new()).unwrap(),
            make_builtin_model(FamilyId::HolderDiffusion1d, &BTreeMap::new()).unwrap(),
            make_builtin_model(
                FamilyId::HolderDiffusion1d,
                &params(&[("alpha", 0.5), ("beta", 0.5)]),
            )
            .unwrap(),
            make_builtin_model(FamilyId::BoundedHolderMultid, &params(&[("d", 3.0)])).unwrap(),
        ];
        for m in models {
            let report = validate_model(&m, &ProbeConfig::default()).unwrap();
            assert!(report.passed, "{}: {report:#?}", m.name);
        }
    }

    #[test]
    fn mean_is_w1_lipschitz_on_probes() {
        // |mean(mu) - mean(nu)| <= W1(mu, nu); exact W1 available in 1-D.
        for t in 0..40u64 {
            let n = 8;
            let xs: Vec<f64> = (0..n).map(|i| 4.0 * rng::uniform(t, i as u64) - 2.0).collect();
            let ys: Vec<f64> = (0..n).map(|i| 4.0 * rng::uniform(t, (n + i) as u64) - 2.0).collect();
            let mu = EmpiricalMeasure::from_points(xs.clone()).unwrap();
            let nu = EmpiricalMeasure::from_points(ys.clone()).unwrap();
            let w1 = wasserstein_1d(1.0, &mu, &nu).unwrap();
            let va = MeasureView::new(&xs, 1);
            let vb = MeasureView::new(&ys, 1);
            assert!((va.mean()[0] - vb.mean()[0]).abs() <= w1 + 1e-12);
        }
    }

    #[test]
    fn builtin_b2_satisfies_joint_lipschitz_bound() {
        let m = make_builtin_model(FamilyId::HolderDrift1d, &BTreeMap::new()).unwrap();
        let k1 = 0.25; // the family's mean-field constant
        for t in 0..40u64 {
            let n = 8;
            let xs: Vec<f64> = (0..n).map(|i| 4.0 * rng::uniform(t, i as u64) - 2.0).collect();
            let ys: Vec<f64> = (0..n).map(|i| 4.0 * rng::uniform(t, (n + i) as u64) - 2.0).collect();
            let mu = EmpiricalMeasure::from_points(xs.clone()).unwrap();
            let nu = EmpiricalMeasure::from_points(ys.clone()).unwrap();
            let w1 = wasserstein_1d(1.0, &mu, &nu).unwrap();
            let x = 2.0 * rng::uniform(t, 100) - 1.0;
            let y = 2.0 * rng::uniform(t, 101) - 1.0;
            let va = MeasureView::new(&xs, 1);
            let vb = MeasureView::new(&ys, 1);
            let mut out_a = [0.0];
            let mut out_b = [0.0];
            m.eval_drift_mean_field(&[x], &va, &mut out_a);
            m.eval_drift_mean_field(&[y], &vb, &mut out_b);
            assert!((out_a[0] - out_b[0]).abs() <= k1 * ((x - y).abs() + w1) + 1e-12);
        }
    }

    #[test]
    fn min_singular_value_matches_known_matrices() {
        assert!((min_singular_value(&[1.0, 0.0, 0.0, 1.0], 2) - 1.0).abs() < 1e-12);
        assert!((min_singular_value(&[3.0, 0.0, 0.0, -2.0], 2) - 2.0).abs() < 1e-12);
        // [[2,1],[1,2]] has eigenvalues {1, 3}; symmetric so singular values equal.
        assert!((min_singular_value(&[2.0, 1.0, 1.0, 2.0], 2) - 1.0).abs() < 1e-12);
        // Singular matrix.
        assert!(min_singular_value(&[1.0, 2.0, 2.0, 4.0], 2).abs() < 1e-7);
    }

    #[test]
    fn coupling_bound_dominates_in_model_probes() {
        // Sanity link between modules used by the validator.
        let a = EmpiricalMeasure::from_points(vec![0.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::from_points(vec![3.0, 1.0]).unwrap();
        let exact = wasserstein_1d(1.0, &a, &b).unwrap();
        let bound = coupling_upper_bound(1.0, &a, &b).unwrap();
        assert!(exact <= bound);
    }
}
