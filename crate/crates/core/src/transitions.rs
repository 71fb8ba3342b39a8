//! Model families for the run-length dependent switch probabilities
//! `alpha(direction, n)`, their JSON descriptors, and admissibility checks.
//!
//! A model assigns to every direction `l` and run length `n >= 1` the
//! probability of changing direction after `n` consecutive steps in
//! direction `l`. Admissible models never get stuck in an infinite run:
//! either the per-direction switch probabilities sum to infinity or some
//! finite run length forces a switch outright.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{log_iter, n_start};
use crate::error::{Error, Result};
use crate::perturb::{NoiseSpec, PerturbSeq};
use crate::primes;
use crate::rngutil::{indexed_symmetric, indexed_uniform, StreamLabel};
use crate::tails::TailCache;

/// Largest switch probability a "stays away from one" family may produce.
/// Exact 1.0 is reserved for families where the user asked for it
/// (constant, tabulated, overlay).
pub const ALPHA_MAX: f64 = 1.0 - 1e-9;

/// Probe window used to validate perturbed models at construction.
pub const PERTURB_PROBE_HORIZON: u64 = 100_000;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    #[inline]
    pub fn flip(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    /// Displacement of one step in this direction.
    #[inline]
    pub fn step(self) -> i64 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }

    /// Index for per-direction arrays: Up = 0, Down = 1.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Direction::Up => 0,
            Direction::Down => 1,
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Up => write!(f, "up"),
            Direction::Down => write!(f, "down"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySide {
    Lower,
    Upper,
}

/// How a tabulated family continues past its listed values.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extension {
    /// Repeat the last listed value forever.
    Hold,
    /// Multiply the last value by `ratio` for each further step.
    Decay { ratio: f64 },
}

/// A single replaced switch probability inside an overlay model.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct AlphaOverride {
    pub direction: Direction,
    pub n: u64,
    pub value: f64,
}

/// Family tag plus parameters. Serialized as {"kind": ..., "params": ...}.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum Family {
    /// alpha = p in each direction, every n.
    Constant { p_up: f64, p_down: f64 },
    /// alpha = lambda / max(n, floor(lambda)+1).
    Harmonic { lambda_up: f64, lambda_down: f64 },
    /// alpha = lambda_0/n + lambda_1/(n log n) + ... with iterated logs,
    /// frozen below the first n where every iterated log exceeds 1.
    LogFamily {
        lambdas_up: Vec<f64>,
        lambdas_down: Vec<f64>,
    },
    /// The slowest (lower) or fastest (upper) admissible iterated-log decay
    /// of the given depth, same in both directions.
    Boundary { side: BoundarySide, depth: u32 },
    /// Boundary family plus a signed next-order correction on one direction.
    BoundaryPerturbed {
        side: BoundarySide,
        depth: u32,
        c: f64,
        perturbed: Direction,
    },
    /// Explicit per-n values with a declared continuation.
    Tabulated {
        alpha_up: Vec<f64>,
        alpha_down: Vec<f64>,
        extend_up: Extension,
        extend_down: Extension,
    },
    /// Up: lambda/n. Down: lambda/n except zero on small prime multiples
    /// (n = j*p, p prime, j <= max_multiple).
    PrimeLacunar { lambda: f64, max_multiple: u32 },
    /// Up: lower-boundary decay of the given depth. Down: same with random
    /// independent erasures whose probability decays like one over the next
    /// iterated log.
    RandomLacunar { depth: u32, seed: u64 },
    /// Base model plus a deterministic per-n perturbation per direction.
    Perturbed {
        base: Box<ModelSpec>,
        gamma_up: PerturbSeq,
        gamma_down: PerturbSeq,
    },
    /// One realized random environment around a mean model.
    RandomEnv {
        mean: Box<ModelSpec>,
        noise_up: NoiseSpec,
        noise_down: NoiseSpec,
        seed: u64,
    },
    /// Base model with finitely many (direction, n) values replaced.
    Overlay {
        base: Box<ModelSpec>,
        overrides: Vec<AlphaOverride>,
    },
}

fn one() -> f64 {
    1.0
}

#[allow(clippy::trivially_copy_pass_by_ref)]
fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// JSON-serializable model descriptor.
///
/// `alpha_inf_up` / `alpha_inf_down` are the switch probabilities attached
/// to the two infinite-run contexts. They never influence finite-run
/// sampling of an admissible model; they are carried for descriptor
/// completeness and must lie in (0, 1].
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub alpha_inf_up: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub alpha_inf_down: f64,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec { family, alpha_inf_up: 1.0, alpha_inf_down: 1.0 }
    }

    pub fn alpha_inf(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Up => self.alpha_inf_up,
            Direction::Down => self.alpha_inf_down,
        }
    }

    /// Short readable tag for tables and sweep rows.
    pub fn kind_name(&self) -> &'static str {
        match self.family {
            Family::Constant { .. } => "constant",
            Family::Harmonic { .. } => "harmonic",
            Family::LogFamily { .. } => "log_family",
            Family::Boundary { .. } => "boundary",
            Family::BoundaryPerturbed { .. } => "boundary_perturbed",
            Family::Tabulated { .. } => "tabulated",
            Family::PrimeLacunar { .. } => "prime_lacunar",
            Family::RandomLacunar { .. } => "random_lacunar",
            Family::Perturbed { .. } => "perturbed",
            Family::RandomEnv { .. } => "random_env",
            Family::Overlay { .. } => "overlay",
        }
    }
}

struct Inner {
    spec: ModelSpec,
    tails: [TailCache; 2],
}

/// Immutable model handle. Cheap to clone; clones share tail memoization.
#[derive(Clone)]
pub struct TransitionModel {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for TransitionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransitionModel").field("spec", &self.inner.spec).finish()
    }
}

impl TransitionModel {
    /// Validate a descriptor and build the model.
    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        validate_spec(&spec)?;
        Ok(TransitionModel {
            inner: Arc::new(Inner { tails: [TailCache::new(), TailCache::new()], spec }),
        })
    }

    pub fn constant(p_up: f64, p_down: f64) -> Result<Self> {
        let mut spec = ModelSpec::new(Family::Constant { p_up, p_down });
        // The infinite-context probabilities mirror p where that is legal;
        // a never-switching direction keeps the default 1 descriptor (it is
        // never consulted: such a run also never ends).
        if p_up > 0.0 {
            spec.alpha_inf_up = p_up;
        }
        if p_down > 0.0 {
            spec.alpha_inf_down = p_down;
        }
        Self::from_spec(spec)
    }

    pub fn harmonic(lambda_up: f64, lambda_down: f64) -> Result<Self> {
        Self::from_spec(ModelSpec::new(Family::Harmonic { lambda_up, lambda_down }))
    }

    pub fn log_family(lambdas_up: Vec<f64>, lambdas_down: Vec<f64>) -> Result<Self> {
        Self::from_spec(ModelSpec::new(Family::LogFamily { lambdas_up, lambdas_down }))
    }

    pub fn boundary(side: BoundarySide, depth: u32) -> Result<Self> {
        Self::from_spec(ModelSpec::new(Family::Boundary { side, depth }))
    }

    pub fn boundary_perturbed(
        side: BoundarySide,
        depth: u32,
        c: f64,
        perturbed: Direction,
    ) -> Result<Self> {
        Self::from_spec(ModelSpec::new(Family::BoundaryPerturbed { side, depth, c, perturbed }))
    }

    pub fn tabulated(
        alpha_up: Vec<f64>,
        alpha_down: Vec<f64>,
        extend_up: Extension,
        extend_down: Extension,
    ) -> Result<Self> {
        let up_inf = tabulated_limit(&alpha_up, &extend_up);
        let down_inf = tabulated_limit(&alpha_down, &extend_down);
        let mut spec =
            ModelSpec::new(Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down });
        if let Some(v) = up_inf {
            spec.alpha_inf_up = v;
        }
        if let Some(v) = down_inf {
            spec.alpha_inf_down = v;
        }
        Self::from_spec(spec)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.inner.spec
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.inner.spec).expect("model specs always serialize")
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(json)?;
        Self::from_spec(spec)
    }

    /// Switch probability after a run of length `n` in direction `dir`.
    #[inline]
    pub fn alpha(&self, dir: Direction, n: u64) -> f64 {
        eval_alpha(&self.inner.spec, dir, n)
    }

    pub fn alpha_inf(&self, dir: Direction) -> f64 {
        self.inner.spec.alpha_inf(dir)
    }

    pub(crate) fn tail_cache(&self, dir: Direction) -> &TailCache {
        &self.inner.tails[dir.index()]
    }

    /// Decide whether runs terminate almost surely in both directions.
    pub fn admissibility(&self, horizon: u64) -> AdmissibilityVerdict {
        let up = direction_admissibility(self, Direction::Up, horizon);
        let down = direction_admissibility(self, Direction::Down, horizon);
        let overall = match (up.status, down.status) {
            (Admissibility::NotAdmissible, _) | (_, Admissibility::NotAdmissible) => {
                Admissibility::NotAdmissible
            }
            (Admissibility::Admissible, Admissibility::Admissible) => Admissibility::Admissible,
            _ => Admissibility::Inconclusive,
        };
        AdmissibilityVerdict { overall, up, down, horizon }
    }
}

fn tabulated_limit(values: &[f64], extend: &Extension) -> Option<f64> {
    match extend {
        Extension::Hold => values.last().copied().filter(|v| *v > 0.0),
        Extension::Decay { .. } => None,
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(Error::InvalidModel(format!("{name} = {v} is not a probability")));
    }
    Ok(())
}

fn validate_spec(spec: &ModelSpec) -> Result<()> {
    for (name, v) in [("alpha_inf_up", spec.alpha_inf_up), ("alpha_inf_down", spec.alpha_inf_down)]
    {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::InvalidModel(format!("{name} = {v} must lie in (0, 1]")));
        }
    }
    match &spec.family {
        Family::Constant { p_up, p_down } => {
            for (name, p) in [("p_up", *p_up), ("p_down", *p_down)] {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidModel(format!("{name} = {p} must lie in (0, 1]")));
                }
            }
            Ok(())
        }
        Family::Harmonic { lambda_up, lambda_down } => {
            for (name, l) in [("lambda_up", *lambda_up), ("lambda_down", *lambda_down)] {
                if !(l > 0.0) || !l.is_finite() {
                    return Err(Error::InvalidModel(format!("{name} = {l} must be positive")));
                }
            }
            Ok(())
        }
        Family::LogFamily { lambdas_up, lambdas_down } => {
            for (name, ls) in [("lambdas_up", lambdas_up), ("lambdas_down", lambdas_down)] {
                if ls.is_empty() {
                    return Err(Error::InvalidModel(format!("{name} must be nonempty")));
                }
                if ls.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "{name} entries must all be positive"
                    )));
                }
            }
            Ok(())
        }
        Family::Boundary { .. } => Ok(()),
        Family::BoundaryPerturbed { c, .. } => {
            if !c.is_finite() {
                return Err(Error::InvalidModel(format!("c = {c} must be finite")));
            }
            Ok(())
        }
        Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down } => {
            for (name, vals) in [("alpha_up", alpha_up), ("alpha_down", alpha_down)] {
                if vals.is_empty() {
                    return Err(Error::InvalidModel(format!("{name} must be nonempty")));
                }
                for (i, v) in vals.iter().enumerate() {
                    check_prob(&format!("{name}[{i}]"), *v)?;
                }
            }
            for ext in [extend_up, extend_down] {
                if let Extension::Decay { ratio } = ext {
                    if !(0.0..1.0).contains(ratio) {
                        return Err(Error::InvalidModel(format!(
                            "decay ratio {ratio} must lie in [0, 1)"
                        )));
                    }
                }
            }
            Ok(())
        }
        Family::PrimeLacunar { lambda, max_multiple } => {
            if !(*lambda > 0.0 && *lambda <= 1.0) {
                return Err(Error::InvalidModel(format!(
                    "lambda = {lambda} must lie in (0, 1]"
                )));
            }
            if *max_multiple < 1 {
                return Err(Error::InvalidModel("max_multiple must be at least 1".into()));
            }
            Ok(())
        }
        Family::RandomLacunar { .. } => Ok(()),
        Family::Perturbed { base, gamma_up, gamma_down } => {
            validate_spec(base)?;
            gamma_up.validate("gamma_up")?;
            gamma_down.validate("gamma_down")?;
            // Probe the perturbed values: the invariant alpha + gamma in [0,1]
            // must hold on the whole probe window, unclamped.
            for (dir, gamma) in
                [(Direction::Up, gamma_up), (Direction::Down, gamma_down)]
            {
                if matches!(gamma, PerturbSeq::Zero) {
                    continue;
                }
                let probe_end = PERTURB_PROBE_HORIZON.max(gamma.support_end());
                for n in 1..=probe_end {
                    let v = eval_alpha(base, dir, n) + gamma.eval(n);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::RangeViolation { n, direction: dir, value: v });
                    }
                }
            }
            Ok(())
        }
        Family::RandomEnv { mean, noise_up, noise_down, .. } => {
            validate_spec(mean)?;
            noise_up.validate("noise_up")?;
            noise_down.validate("noise_down")?;
            Ok(())
        }
        Family::Overlay { base, overrides } => {
            validate_spec(base)?;
            for (i, o) in overrides.iter().enumerate() {
                if o.n < 1 {
                    return Err(Error::InvalidModel(format!(
                        "overrides[{i}].n must be at least 1"
                    )));
                }
                check_prob(&format!("overrides[{i}].value"), o.value)?;
            }
            Ok(())
        }
    }
}

/// Clamp for harmonic-style rates: keeps alpha below 1 at small n while
/// leaving the exact value lambda/n untouched from n = floor(lambda)+1 on.
#[inline]
fn harmonic_denominator(lambda: f64, n: u64) -> u64 {
    n.max(lambda as u64 + 1)
}

/// One iterated-log reciprocal term 1/(n log n ... log_[depth] n),
/// evaluated at the frozen index max(n, n_start(depth)).
fn boundary_term(n: u64, depth: u32) -> f64 {
    let m = n.max(n_start(depth)) as f64;
    let mut denom = m;
    for j in 1..=depth {
        denom *= log_iter(m, j);
    }
    1.0 / denom
}

/// Sum of boundary terms of depths 0..=depth (the fastest admissible decay).
fn boundary_sum(n: u64, depth: u32) -> f64 {
    let mut s = 0.0;
    for j in 0..=depth {
        s += boundary_term(n, j);
    }
    s
}

fn boundary_value(side: BoundarySide, depth: u32, n: u64) -> f64 {
    match side {
        BoundarySide::Lower => boundary_term(n, depth),
        BoundarySide::Upper => boundary_sum(n, depth),
    }
}

pub(crate) fn eval_alpha(spec: &ModelSpec, dir: Direction, n: u64) -> f64 {
    debug_assert!(n >= 1);
    match &spec.family {
        Family::Constant { p_up, p_down } => match dir {
            Direction::Up => *p_up,
            Direction::Down => *p_down,
        },
        Family::Harmonic { lambda_up, lambda_down } => {
            let l = match dir {
                Direction::Up => *lambda_up,
                Direction::Down => *lambda_down,
            };
            l / harmonic_denominator(l, n) as f64
        }
        Family::LogFamily { lambdas_up, lambdas_down } => {
            let ls = match dir {
                Direction::Up => lambdas_up,
                Direction::Down => lambdas_down,
            };
            let depth = (ls.len() - 1) as u32;
            let m = n.max(n_start(depth));
            let mut sum = 0.0;
            let mf = m as f64;
            let mut denom = mf;
            for (j, l) in ls.iter().enumerate() {
                if j > 0 {
                    denom *= log_iter(mf, j as u32);
                }
                sum += l / denom;
            }
            sum.min(ALPHA_MAX)
        }
        Family::Boundary { side, depth } => {
            boundary_value(*side, *depth, n).min(ALPHA_MAX)
        }
        Family::BoundaryPerturbed { side, depth, c, perturbed } => {
            let mut v = boundary_value(*side, *depth, n);
            if dir == *perturbed {
                let extra_depth = match side {
                    BoundarySide::Upper => depth + 2,
                    BoundarySide::Lower => depth + 1,
                };
                v += c * boundary_term(n, extra_depth);
            }
            v.clamp(0.0, ALPHA_MAX)
        }
        Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down } => {
            let (vals, ext) = match dir {
                Direction::Up => (alpha_up, extend_up),
                Direction::Down => (alpha_down, extend_down),
            };
            let len = vals.len() as u64;
            if n <= len {
                vals[(n - 1) as usize]
            } else {
                let last = *vals.last().expect("validated nonempty");
                match ext {
                    Extension::Hold => last,
                    Extension::Decay { ratio } => {
                        if last == 0.0 || *ratio == 0.0 {
                            0.0
                        } else {
                            // last * ratio^(n-len) in log space to dodge
                            // premature underflow of powi at huge n.
                            let k = (n - len) as f64;
                            let lv = last.ln() + k * ratio.ln();
                            if lv < -745.0 {
                                0.0
                            } else {
                                lv.exp()
                            }
                        }
                    }
                }
            }
        }
        Family::PrimeLacunar { lambda, max_multiple } => {
            let base = lambda / harmonic_denominator(*lambda, n) as f64;
            match dir {
                Direction::Up => base,
                Direction::Down => {
                    if primes::is_small_multiple_of_prime(n, *max_multiple) {
                        0.0
                    } else {
                        base
                    }
                }
            }
        }
        Family::RandomLacunar { depth, seed } => {
            let base = boundary_term(n, *depth).min(ALPHA_MAX);
            match dir {
                Direction::Up => base,
                Direction::Down => {
                    let p_erase = 1.0 / log_iter(n.max(n_start(depth + 1)) as f64, depth + 1);
                    if indexed_uniform(*seed, StreamLabel::Lacunar, n) < p_erase {
                        0.0
                    } else {
                        base
                    }
                }
            }
        }
        Family::Perturbed { base, gamma_up, gamma_down } => {
            let gamma = match dir {
                Direction::Up => gamma_up,
                Direction::Down => gamma_down,
            };
            (eval_alpha(base, dir, n) + gamma.eval(n)).clamp(0.0, 1.0)
        }
        Family::RandomEnv { mean, noise_up, noise_down, seed } => {
            let m = eval_alpha(mean, dir, n);
            let (noise, label) = match dir {
                Direction::Up => (noise_up, StreamLabel::EnvUp),
                Direction::Down => (noise_down, StreamLabel::EnvDown),
            };
            match noise {
                NoiseSpec::None => m,
                NoiseSpec::RelativeUniform { delta } => {
                    let u = indexed_symmetric(*seed, label, n);
                    (m * (1.0 + delta * u)).clamp(0.0, ALPHA_MAX)
                }
            }
        }
        Family::Overlay { base, overrides } => {
            for o in overrides {
                if o.direction == dir && o.n == n {
                    return o.value;
                }
            }
            eval_alpha(base, dir, n)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    Admissible,
    NotAdmissible,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionAdmissibility {
    pub status: Admissibility,
    /// Which rule produced the status ("numeric" for the threshold scan).
    pub rule: String,
    pub partial_sum: f64,
    pub last_decade_increase: f64,
    /// First n with alpha = 1, if one was seen (forces admissibility).
    pub unit_alpha_at: Option<u64>,
    pub alpha_inf: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityVerdict {
    pub overall: Admissibility,
    pub up: DirectionAdmissibility,
    pub down: DirectionAdmissibility,
    pub horizon: u64,
}

/// Analytic divergence of the switch-probability series, per family.
/// Returns (diverges, rule) or None when only numerics can speak.
fn analytic_divergence(spec: &ModelSpec, dir: Direction) -> Option<(bool, String)> {
    match &spec.family {
        Family::Constant { .. } => {
            Some((true, "constant positive rate".into()))
        }
        Family::Harmonic { .. } => Some((true, "harmonic series diverges".into())),
        Family::LogFamily { .. } | Family::Boundary { .. } => {
            Some((true, "iterated-log series diverges at every depth".into()))
        }
        Family::BoundaryPerturbed { .. } => Some((
            true,
            "correction is lower order than the divergent boundary term".into(),
        )),
        Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down } => {
            let (vals, ext) = match dir {
                Direction::Up => (alpha_up, extend_up),
                Direction::Down => (alpha_down, extend_down),
            };
            if vals.iter().any(|v| *v == 1.0) {
                return Some((true, "unit switch probability witness".into()));
            }
            let last = *vals.last().expect("validated nonempty");
            match ext {
                Extension::Hold if last > 0.0 => {
                    Some((true, "eventually constant positive rate".into()))
                }
                Extension::Hold => Some((false, "eventually zero rate, finite sum".into())),
                Extension::Decay { .. } => {
                    Some((false, "geometric extension has a finite sum".into()))
                }
            }
        }
        Family::PrimeLacunar { .. } => Some((
            true,
            "erased indices have vanishing density inside a harmonic series".into(),
        )),
        Family::RandomLacunar { .. } => Some((
            true,
            "erasures remove a lower-order part of a divergent series".into(),
        )),
        Family::Perturbed { base, gamma_up, gamma_down } => {
            let gamma = match dir {
                Direction::Up => gamma_up,
                Direction::Down => gamma_down,
            };
            let (base_div, base_rule) = analytic_divergence(base, dir)?;
            match gamma {
                PerturbSeq::Zero | PerturbSeq::Tabulated { .. } => Some((
                    base_div,
                    format!("{base_rule}; perturbation has finite support or is zero"),
                )),
                PerturbSeq::Alternating { .. } => Some((
                    base_div,
                    format!("{base_rule}; alternating perturbation has bounded partial sums"),
                )),
                PerturbSeq::LogTerm { c, depth } => {
                    // The combined leading coefficient decides. A log term can
                    // only cancel a divergent base at its own depth and sign.
                    match crate::asymptotics::alpha_coeffs(spec, dir) {
                        Some(coeffs) => {
                            let lead = coeffs.iter().copied().find(|v| *v != 0.0);
                            match lead {
                                Some(l) if l > 0.0 => {
                                    Some((true, "combined leading coefficient positive".into()))
                                }
                                Some(_) => Some((
                                    false,
                                    "combined leading coefficient negative".into(),
                                )),
                                None => None,
                            }
                        }
                        None if matches!(base.family, Family::Constant { .. }) => Some((
                            base_div,
                            format!("{base_rule}; vanishing perturbation (c = {c}, depth {depth})"),
                        )),
                        None => None,
                    }
                }
            }
        }
        Family::RandomEnv { mean, noise_up, noise_down, .. } => {
            let noise = match dir {
                Direction::Up => noise_up,
                Direction::Down => noise_down,
            };
            let (base_div, base_rule) = analytic_divergence(mean, dir)?;
            match noise {
                NoiseSpec::None => Some((base_div, base_rule)),
                NoiseSpec::RelativeUniform { delta } if *delta < 1.0 => Some((
                    base_div,
                    format!("{base_rule}; relative noise keeps a (1-delta) share"),
                )),
                NoiseSpec::RelativeUniform { .. } => None,
            }
        }
        Family::Overlay { base, overrides } => {
            if overrides.iter().any(|o| o.direction == dir && o.value == 1.0) {
                return Some((true, "unit switch probability witness".into()));
            }
            let (base_div, base_rule) = analytic_divergence(base, dir)?;
            Some((base_div, format!("{base_rule}; finitely many overrides")))
        }
    }
}

/// Numeric thresholds for the fallback scan: divergence is undecidable, so
/// these are deliberately conservative and recorded in the verdict.
const ADMISSIBLE_SUM_THRESHOLD: f64 = 50.0;
const ADMISSIBLE_DECADE_THRESHOLD: f64 = 0.5;

fn direction_admissibility(
    model: &TransitionModel,
    dir: Direction,
    horizon: u64,
) -> DirectionAdmissibility {
    let alpha_inf = model.alpha_inf(dir);
    let horizon = horizon.max(10);
    let mut sum = 0.0;
    let mut decade_start_sum = 0.0;
    let decade_start = horizon / 10;
    let mut unit_at = None;
    for n in 1..=horizon {
        let a = model.alpha(dir, n);
        sum += a;
        if a >= 1.0 && unit_at.is_none() {
            unit_at = Some(n);
            break;
        }
        if n == decade_start {
            decade_start_sum = sum;
        }
    }
    let last_decade_increase = if unit_at.is_some() { f64::INFINITY } else { sum - decade_start_sum };

    if let Some(n) = unit_at {
        return DirectionAdmissibility {
            status: Admissibility::Admissible,
            rule: format!("alpha({dir}, {n}) = 1 forces a switch"),
            partial_sum: sum,
            last_decade_increase,
            unit_alpha_at: unit_at,
            alpha_inf,
        };
    }

    if let Some((diverges, rule)) = analytic_divergence(model.spec(), dir) {
        return DirectionAdmissibility {
            status: if diverges { Admissibility::Admissible } else { Admissibility::NotAdmissible },
            rule,
            partial_sum: sum,
            last_decade_increase,
            unit_alpha_at: None,
            alpha_inf,
        };
    }

    let status = if sum > ADMISSIBLE_SUM_THRESHOLD
        && last_decade_increase > ADMISSIBLE_DECADE_THRESHOLD
    {
        Admissibility::Admissible
    } else {
        Admissibility::Inconclusive
    };
    DirectionAdmissibility {
        status,
        rule: "numeric".into(),
        partial_sum: sum,
        last_decade_increase,
        unit_alpha_at: None,
        alpha_inf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn up(m: &TransitionModel, n: u64) -> f64 {
        m.alpha(Direction::Up, n)
    }
    fn down(m: &TransitionModel, n: u64) -> f64 {
        m.alpha(Direction::Down, n)
    }

    #[test]
    fn constant_family_evaluates_and_validates() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        assert_eq!(up(&m, 1), 0.5);
        assert_eq!(down(&m, 7), 0.25);
        assert!(TransitionModel::constant(0.0, 0.5).is_err());
        assert!(TransitionModel::constant(1.1, 0.5).is_err());
    }

    #[test]
    fn harmonic_small_lambda_is_exact() {
        let m = TransitionModel::harmonic(0.5, 0.5).unwrap();
        for n in 1..200u64 {
            assert_eq!(up(&m, n), 0.5 / n as f64);
        }
        assert_eq!(up(&m, 4), 0.125);
    }

    #[test]
    fn harmonic_large_lambda_clamps_small_n() {
        let m = TransitionModel::harmonic(2.5, 2.5).unwrap();
        // floor(2.5)+1 = 3: frozen at 2.5/3 below n = 3.
        assert_eq!(up(&m, 1), 2.5 / 3.0);
        assert_eq!(up(&m, 2), 2.5 / 3.0);
        assert_eq!(up(&m, 3), 2.5 / 3.0);
        assert_eq!(up(&m, 4), 0.625);
        let m1 = TransitionModel::harmonic(1.0, 1.0).unwrap();
        assert_eq!(up(&m1, 1), 0.5);
        assert_eq!(up(&m1, 2), 0.5);
        assert_eq!(up(&m1, 3), 1.0 / 3.0);
    }

    #[test]
    fn log_family_single_term_matches_harmonic() {
        let lf = TransitionModel::log_family(vec![0.5], vec![0.5]).unwrap();
        let h = TransitionModel::harmonic(0.5, 0.5).unwrap();
        for n in 1..100u64 {
            assert_eq!(up(&lf, n), up(&h, n));
        }
    }

    #[test]
    fn log_family_two_terms_in_frozen_and_live_zones() {
        let m = TransitionModel::log_family(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        // n_start(1) = 3; below that the value is frozen at n = 3.
        let frozen = 1.0 / 3.0 + 1.0 / (3.0 * 3f64.ln());
        assert_eq!(up(&m, 1), frozen);
        assert_eq!(up(&m, 2), frozen);
        let n = 25u64;
        let expect = 1.0 / 25.0 + 1.0 / (25.0 * 25f64.ln());
        assert!((up(&m, n) - expect).abs() < 1e-15);
    }

    #[test]
    fn boundary_families_match_their_formulas() {
        let lower = TransitionModel::boundary(BoundarySide::Lower, 0).unwrap();
        let upper = TransitionModel::boundary(BoundarySide::Upper, 0).unwrap();
        assert_eq!(up(&lower, 10), 0.1);
        assert_eq!(up(&upper, 10), 0.1);
        let upper1 = TransitionModel::boundary(BoundarySide::Upper, 1).unwrap();
        let n = 100.0f64;
        let expect = 1.0 / n + 1.0 / (n * n.ln());
        assert!((up(&upper1, 100) - expect).abs() < 1e-15);
        // Depth-0 values at n = 1 hit the clamp rather than reaching 1.
        assert_eq!(up(&lower, 1), ALPHA_MAX);
    }

    #[test]
    fn boundary_perturbation_hits_only_one_direction() {
        let m =
            TransitionModel::boundary_perturbed(BoundarySide::Upper, 0, 1.0, Direction::Down)
                .unwrap();
        let base = TransitionModel::boundary(BoundarySide::Upper, 0).unwrap();
        let n = 1000u64;
        assert_eq!(up(&m, n), up(&base, n));
        let nf = n as f64;
        let expect = 1.0 / nf + 1.0 / (nf * nf.ln() * nf.ln().ln());
        assert!((down(&m, n) - expect).abs() < 1e-15);
        //

        // Negative c must clamp at zero rather than go negative.
        let neg =
            TransitionModel::boundary_perturbed(BoundarySide::Lower, 0, -5.0, Direction::Down)
                .unwrap();
        for n in 1..100u64 {
            assert!(down(&neg, n) >= 0.0);
        }
    }

    #[test]
    fn tabulated_extensions() {
        let hold = TransitionModel::tabulated(
            vec![0.2, 0.4],
            vec![0.2, 0.4],
            Extension::Hold,
            Extension::Hold,
        )
        .unwrap();
        assert_eq!(up(&hold, 1), 0.2);
        assert_eq!(up(&hold, 2), 0.4);
        assert_eq!(up(&hold, 50), 0.4);
        assert_eq!(hold.alpha_inf(Direction::Up), 0.4);

        let decay = TransitionModel::tabulated(
            vec![0.5],
            vec![0.5],
            Extension::Decay { ratio: 0.5 },
            Extension::Decay { ratio: 0.5 },
        )
        .unwrap();
        // 0.5 * 0.5^(n-1) = 2^-n.
        assert_eq!(up(&decay, 1), 0.5);
        assert!((up(&decay, 3) - 0.125).abs() < 1e-15);
        assert_eq!(up(&decay, 10_000), 0.0);
    }

    #[test]
    fn prime_lacunar_erases_small_prime_multiples() {
        let m = TransitionModel::from_spec(ModelSpec::new(Family::PrimeLacunar {
            lambda: 0.5,
            max_multiple: 2,
        }))
        .unwrap();
        assert_eq!(up(&m, 6), 0.5 / 6.0);
        assert_eq!(down(&m, 6), 0.0); // 6 = 2*3
        assert_eq!(down(&m, 9), 0.5 / 9.0); // 9 = 3*3 needs j = 3 > 2
        assert_eq!(down(&m, 7), 0.0); // prime
    }

    #[test]
    fn random_lacunar_is_deterministic_per_seed() {
        let a = TransitionModel::from_spec(ModelSpec::new(Family::RandomLacunar {
            depth: 0,
            seed: 11,
        }))
        .unwrap();
        let b = TransitionModel::from_spec(ModelSpec::new(Family::RandomLacunar {
            depth: 0,
            seed: 11,
        }))
        .unwrap();
        let c = TransitionModel::from_spec(ModelSpec::new(Family::RandomLacunar {
            depth: 0,
            seed: 12,
        }))
        .unwrap();
        let pattern = |m: &TransitionModel| -> Vec<bool> {
            (1..500u64).map(|n| down(m, n) == 0.0).collect()
        };
        assert_eq!(pattern(&a), pattern(&b));
        assert_ne!(pattern(&a), pattern(&c));
        // Up direction untouched.
        for n in 1..200u64 {
            assert!(up(&a, n) > 0.0);
        }
    }

    #[test]
    fn overlay_replaces_single_values() {
        let base = ModelSpec::new(Family::Constant { p_up: 0.4, p_down: 0.4 });
        let m = TransitionModel::from_spec(ModelSpec::new(Family::Overlay {
            base: Box::new(base),
            overrides: vec![AlphaOverride { direction: Direction::Up, n: 1, value: 0.6 }],
        }))
        .unwrap();
        assert_eq!(up(&m, 1), 0.6);
        assert_eq!(up(&m, 2), 0.4);
        assert_eq!(down(&m, 1), 0.4);
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let specs = vec![
            ModelSpec::new(Family::Constant { p_up: 0.5, p_down: 0.25 }),
            ModelSpec::new(Family::Harmonic { lambda_up: 0.3, lambda_down: 0.6 }),
            ModelSpec::new(Family::LogFamily {
                lambdas_up: vec![1.0, 1.0],
                lambdas_down: vec![0.5],
            }),
            ModelSpec::new(Family::BoundaryPerturbed {
                side: BoundarySide::Lower,
                depth: 1,
                c: -1.5,
                perturbed: Direction::Up,
            }),
            ModelSpec::new(Family::RandomLacunar { depth: 0, seed: 3 }),
        ];
        for spec in specs {
            let json = serde_json::to_string(&spec).unwrap();
            let back: ModelSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(spec, back, "round trip failed for {json}");
        }
    }

    #[test]
    fn json_shape_is_kind_params() {
        let m = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["kind"], "harmonic");
        assert_eq!(v["params"]["lambda_up"], 0.5);
    }

    #[test]
    fn admissibility_analytic_rules() {
        let adm = |m: &TransitionModel| m.admissibility(10_000).overall;
        assert_eq!(
            adm(&TransitionModel::harmonic(0.5, 0.5).unwrap()),
            Admissibility::Admissible
        );
        assert_eq!(
            adm(&TransitionModel::constant(1.0, 1.0).unwrap()),
            Admissibility::Admissible
        );
        // Geometric decay: finite sum, runs can last forever.
        let bad = TransitionModel::tabulated(
            vec![0.5],
            vec![0.5],
            Extension::Decay { ratio: 0.5 },
            Extension::Decay { ratio: 0.5 },
        )
        .unwrap();
        assert_eq!(adm(&bad), Admissibility::NotAdmissible);
        // A unit value rescues an otherwise decaying table.
        let rescued = TransitionModel::tabulated(
            vec![0.5, 1.0],
            vec![0.5, 1.0],
            Extension::Decay { ratio: 0.5 },
            Extension::Decay { ratio: 0.5 },
        )
        .unwrap();
        assert_eq!(adm(&rescued), Admissibility::Admissible);
    }

    #[test]
    fn admissibility_unit_witness_reported() {
        let m = TransitionModel::constant(1.0, 0.5).unwrap();
        let v = m.admissibility(1000);
        assert_eq!(v.up.unit_alpha_at, Some(1));
        assert_eq!(v.overall, Admissibility::Admissible);
    }

    #[test]
    fn perturbed_range_violation_is_caught() {
        let base = ModelSpec::new(Family::Constant { p_up: 0.5, p_down: 0.5 });
        let res = TransitionModel::from_spec(ModelSpec::new(Family::Perturbed {
            base: Box::new(base),
            gamma_up: PerturbSeq::Tabulated { values: vec![0.6] },
            gamma_down: PerturbSeq::Zero,
        }));
        match res {
            Err(Error::RangeViolation { n: 1, direction: Direction::Up, .. }) => {}
            other => panic!("expected range violation, got {other:?}"),
        }
    }

    #[test]
    fn perturbed_evaluates_base_plus_gamma() {
        let base = ModelSpec::new(Family::Constant { p_up: 0.5, p_down: 0.5 });
        let m = TransitionModel::from_spec(ModelSpec::new(Family::Perturbed {
            base: Box::new(base),
            gamma_up: PerturbSeq::Alternating { c: 0.25, power: 1.0 },
            gamma_down: PerturbSeq::Zero,
        }))
        .unwrap();
        // (-1)^n: n = 1 subtracts, n = 2 adds.
        assert_eq!(up(&m, 1), 0.25);
        assert_eq!(up(&m, 2), 0.625);
        assert_eq!(down(&m, 1), 0.5);
    }

    #[test]
    fn random_env_is_centered_and_seeded() {
        let mean = ModelSpec::new(Family::Harmonic { lambda_up: 0.5, lambda_down: 0.5 });
        let make = |seed: u64| {
            TransitionModel::from_spec(ModelSpec::new(Family::RandomEnv {
                mean: Box::new(mean.clone()),
                noise_up: NoiseSpec::RelativeUniform { delta: 0.5 },
                noise_down: NoiseSpec::RelativeUniform { delta: 0.5 },
                seed,
            }))
            .unwrap()
        };
        let a = make(1);
        let b = make(1);
        let c = make(2);
        let h = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let mut saw_difference_between_seeds = false;
        for n in 1..2000u64 {
            let va = up(&a, n);
            assert_eq!(va, up(&b, n));
            if va != up(&c, n) {
                saw_difference_between_seeds = true;
            }
            let base = up(&h, n);
            assert!(va >= base * 0.5 - 1e-18 && va <= base * 1.5 + 1e-18);
        }
        assert!(saw_difference_between_seeds);
    }
}
