//! Perturbations of a base model: deterministic per-n shifts, realized
//! random environments, and the lacunary families.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{log_iter, n_start};
use crate::error::{Error, Result};
use crate::transitions::{
    Direction, Family, ModelSpec, TransitionModel,
};

/// Deterministic perturbation sequence gamma(n), added to a base alpha.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbSeq {
    Zero,
    /// c * (-1)^n / n^power.
    Alternating { c: f64, power: f64 },
    /// c / (n log n ... log_[depth] n), frozen below n_start(depth).
    LogTerm { c: f64, depth: u32 },
    /// Explicit values for n = 1..len, zero afterwards.
    Tabulated { values: Vec<f64> },
}

impl PerturbSeq {
    pub fn eval(&self, n: u64) -> f64 {
        match self {
            PerturbSeq::Zero => 0.0,
            PerturbSeq::Alternating { c, power } => {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                sign * c / (n as f64).powf(*power)
            }
            PerturbSeq::LogTerm { c, depth } => {
                let m = n.max(n_start(*depth)) as f64;
                let mut denom = m;
                for j in 1..=*depth {
                    denom *= log_iter(m, j);
                }
                c / denom
            }
            PerturbSeq::Tabulated { values } => {
                values.get((n - 1) as usize).copied().unwrap_or(0.0)
            }
        }
    }

    /// Last index that can carry a nonzero value, for probe sizing.
    pub(crate) fn support_end(&self) -> u64 {
        match self {
            PerturbSeq::Tabulated { values } => values.len() as u64,
            _ => 0,
        }
    }

    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        match self {
            PerturbSeq::Zero => Ok(()),
            PerturbSeq::Alternating { c, power } => {
                if !c.is_finite() || !power.is_finite() || *power <= 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "{name}: alternating perturbation needs finite c and power > 0"
                    )));
                }
                Ok(())
            }
            PerturbSeq::LogTerm { c, .. } => {
                if !c.is_finite() {
                    return Err(Error::InvalidModel(format!("{name}: c must be finite")));
                }
                Ok(())
            }
            PerturbSeq::Tabulated { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "{name}: tabulated values must be finite"
                    )));
                }
                Ok(())
            }
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            PerturbSeq::Zero => true,
            PerturbSeq::Alternating { c, .. } | PerturbSeq::LogTerm { c, .. } => *c == 0.0,
            PerturbSeq::Tabulated { values } => values.iter().all(|v| *v == 0.0),
        }
    }
}

/// Per-direction perturbation pair.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct Perturbation {
    pub gamma_up: PerturbSeq,
    pub gamma_down: PerturbSeq,
}

impl Perturbation {
    pub fn zero() -> Self {
        Perturbation { gamma_up: PerturbSeq::Zero, gamma_down: PerturbSeq::Zero }
    }

    pub fn gamma(&self, dir: Direction) -> &PerturbSeq {
        match dir {
            Direction::Up => &self.gamma_up,
            Direction::Down => &self.gamma_down,
        }
    }
}

/// Build the perturbed model alpha + gamma. Fails with the first probed n
/// where the unclamped sum leaves [0, 1].
pub fn apply_perturbation(base: &TransitionModel, pert: &Perturbation) -> Result<TransitionModel> {
    TransitionModel::from_spec(ModelSpec::new(Family::Perturbed {
        base: Box::new(base.spec().clone()),
        gamma_up: pert.gamma_up.clone(),
        gamma_down: pert.gamma_down.clone(),
    }))
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    Bounded,
    Unbounded,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirectionBoundedness {
    pub status: Boundedness,
    pub rule: String,
    /// Extremes of the partial sums of log(1 - gamma/(1 - alpha)).
    pub partial_min: f64,
    pub partial_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundedVerdict {
    pub status: Boundedness,
    pub up: DirectionBoundedness,
    pub down: DirectionBoundedness,
    pub horizon: u64,
}

/// Numeric band: partial sums confined to this range over the whole
/// horizon count as bounded; a one-signed escape counts as unbounded.
const BOUNDED_BAND: f64 = 20.0;

/// Does limsup alpha stay strictly below 1? Conservative per-family answer.
fn limsup_alpha_below_one(spec: &ModelSpec, dir: Direction) -> Option<bool> {
    match &spec.family {
        Family::Constant { p_up, p_down } => {
            let p = match dir {
                Direction::Up => *p_up,
                Direction::Down => *p_down,
            };
            Some(p < 1.0)
        }
        Family::Harmonic { .. }
        | Family::LogFamily { .. }
        | Family::Boundary { .. }
        | Family::BoundaryPerturbed { .. }
        | Family::PrimeLacunar { .. }
        | Family::RandomLacunar { .. } => Some(true),
        Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down } => {
            let (vals, ext) = match dir {
                Direction::Up => (alpha_up, extend_up),
                Direction::Down => (alpha_down, extend_down),
            };
            match ext {
                crate::transitions::Extension::Decay { .. } => Some(true),
                crate::transitions::Extension::Hold => {
                    Some(vals.last().copied().unwrap_or(0.0) < 1.0)
                }
            }
        }
        Family::Perturbed { base, .. } => limsup_alpha_below_one(base, dir),
        // Environment values are clamped strictly below 1 at evaluation.
        Family::RandomEnv { .. } => Some(true),
        Family::Overlay { base, .. } => limsup_alpha_below_one(base, dir),
    }
}

fn analytic_boundedness(
    base: &ModelSpec,
    gamma: &PerturbSeq,
) -> Option<(Boundedness, String)> {
    if gamma.is_zero() {
        return Some((Boundedness::Bounded, "zero perturbation".into()));
    }
    match gamma {
        PerturbSeq::Tabulated { .. } => {
            Some((Boundedness::Bounded, "finite support".into()))
        }
        PerturbSeq::LogTerm { .. } => Some((
            Boundedness::Unbounded,
            "one-signed terms with a divergent sum".into(),
        )),
        PerturbSeq::Alternating { power, .. } => {
            if *power > 0.5 {
                match limsup_alpha_below_one(base, Direction::Up) {
                    Some(true) => Some((
                        Boundedness::Bounded,
                        "alternating with bounded partial sums and square-summable terms".into(),
                    )),
                    _ => None,
                }
            } else {
                None
            }
        }
        PerturbSeq::Zero => unreachable!("is_zero handled above"),
    }
}

fn numeric_boundedness(
    base: &TransitionModel,
    gamma: &PerturbSeq,
    dir: Direction,
    horizon: u64,
) -> Result<DirectionBoundedness> {
    let mut partial = 0.0;
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for n in 1..=horizon {
        let g = gamma.eval(n);
        if g == 0.0 {
            continue;
        }
        let a = base.alpha(dir, n);
        if a >= 1.0 {
            return Err(Error::InvalidModel(format!(
                "perturbation at n = {n} where alpha({dir}) = 1 forces a switch"
            )));
        }
        let x = g / (1.0 - a);
        if x >= 1.0 {
            return Err(Error::RangeViolation { n, direction: dir, value: a + g });
        }
        partial += (-x).ln_1p();
        lo = lo.min(partial);
        hi = hi.max(partial);
        // One-signed escape from the band: call it unbounded early.
        if hi > BOUNDED_BAND && lo >= -1e-9 {
            return Ok(DirectionBoundedness {
                status: Boundedness::Unbounded,
                rule: "numeric: one-signed escape beyond the band".into(),
                partial_min: lo,
                partial_max: hi,
            });
        }
        if lo < -BOUNDED_BAND && hi <= 1e-9 {
            return Ok(DirectionBoundedness {
                status: Boundedness::Unbounded,
                rule: "numeric: one-signed escape beyond the band".into(),
                partial_min: lo,
                partial_max: hi,
            });
        }
    }
    let status = if lo > -BOUNDED_BAND && hi < BOUNDED_BAND {
        Boundedness::Bounded
    } else {
        Boundedness::Inconclusive
    };
    Ok(DirectionBoundedness {
        status,
        rule: format!("numeric: partial sums in [{lo:.3}, {hi:.3}] over horizon {horizon}"),
        partial_min: lo,
        partial_max: hi,
    })
}

/// Decide whether a perturbation moves log-tails by at most a bounded
/// amount. Analytic sufficient conditions first, numeric band otherwise.
pub fn bounded_perturbation_verdict(
    base: &TransitionModel,
    pert: &Perturbation,
    horizon: u64,
) -> Result<BoundedVerdict> {
    let horizon = horizon.max(10);
    let mut dirs = Vec::with_capacity(2);
    for dir in [Direction::Up, Direction::Down] {
        let gamma = pert.gamma(dir);
        let verdict = match analytic_boundedness(base.spec(), gamma) {
            Some((status, rule)) => DirectionBoundedness {
                status,
                rule,
                partial_min: 0.0,
                partial_max: 0.0,
            },
            None => numeric_boundedness(base, gamma, dir, horizon)?,
        };
        dirs.push(verdict);
    }
    let down = dirs.pop().expect("two directions");
    let up = dirs.pop().expect("two directions");
    let status = match (up.status, down.status) {
        (Boundedness::Unbounded, _) | (_, Boundedness::Unbounded) => Boundedness::Unbounded,
        (Boundedness::Bounded, Boundedness::Bounded) => Boundedness::Bounded,
        _ => Boundedness::Inconclusive,
    };
    Ok(BoundedVerdict { status, up, down, horizon })
}

/// Noise attached to one direction of a random environment.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    /// A(n) = mean(n) * (1 + delta * U) with U uniform on [-1, 1];
    /// variance is delta^2 mean^2 / 3.
    RelativeUniform { delta: f64 },
}

impl NoiseSpec {
    pub(crate) fn validate(&self, name: &str) -> Result<()> {
        match self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::RelativeUniform { delta } => {
                if !(0.0..1.0).contains(delta) {
                    return Err(Error::InvalidModel(format!(
                        "{name}: delta = {delta} must lie in [0, 1)"
                    )));
                }
                Ok(())
            }
        }
    }

    pub(crate) fn is_none(&self) -> bool {
        matches!(self, NoiseSpec::None)
            || matches!(self, NoiseSpec::RelativeUniform { delta } if *delta == 0.0)
    }
}

/// Mean model plus per-direction noise, before a seed picks a realization.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EnvSpec {
    pub mean: ModelSpec,
    pub noise_up: NoiseSpec,
    pub noise_down: NoiseSpec,
}

/// Whether the realized environment provably classifies like its mean
/// model: requires switch rates bounded away from 1 and summable noise
/// variances.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub limsup_up_below_one: Option<bool>,
    pub limsup_down_below_one: Option<bool>,
    pub variance_summable_up: Option<bool>,
    pub variance_summable_down: Option<bool>,
    pub holds: Option<bool>,
    pub detail: String,
}

/// Draw one environment realization (deterministic per seed) and report
/// whether the stability hypothesis holds for the spec.
pub fn realize_random_env(spec: &EnvSpec, seed: u64) -> Result<(TransitionModel, HypothesisReport)> {
    let model = TransitionModel::from_spec(ModelSpec::new(Family::RandomEnv {
        mean: Box::new(spec.mean.clone()),
        noise_up: spec.noise_up.clone(),
        noise_down: spec.noise_down.clone(),
        seed,
    }))?;

    let limsup_up = limsup_alpha_below_one(&spec.mean, Direction::Up);
    let limsup_down = limsup_alpha_below_one(&spec.mean, Direction::Down);
    let var_up = if spec.noise_up.is_none() {
        Some(true)
    } else {
        crate::asymptotics::variance_summable(&spec.mean, Direction::Up)
    };
    let var_down = if spec.noise_down.is_none() {
        Some(true)
    } else {
        crate::asymptotics::variance_summable(&spec.mean, Direction::Down)
    };
    let holds = [limsup_up, limsup_down, var_up, var_down]
        .into_iter()
        .try_fold(true, |acc, v| v.map(|b| acc && b));
    let detail = match holds {
        Some(true) => "rates stay below 1 and noise variances are summable".to_string(),
        Some(false) => "some condition fails; realized classification need not match the mean model"
            .to_string(),
        None => "conditions not decidable analytically for this family".to_string(),
    };
    Ok((
        model,
        HypothesisReport {
            limsup_up_below_one: limsup_up,
            limsup_down_below_one: limsup_down,
            variance_summable_up: var_up,
            variance_summable_down: var_down,
            holds,
            detail,
        },
    ))
}

/// Up: lambda/n. Down: lambda/n away from {j*p : p prime, j <= r}, zero on
/// that set.
pub fn make_prime_lacunar(lambda: f64, max_multiple: u32) -> Result<TransitionModel> {
    TransitionModel::from_spec(ModelSpec::new(Family::PrimeLacunar { lambda, max_multiple }))
}

/// Up: the lower-boundary decay of the given depth. Down: the same rate
/// with independent erasures of decaying probability (one realization per
/// seed).
pub fn make_random_lacunar(depth: u32, seed: u64) -> Result<TransitionModel> {
    TransitionModel::from_spec(ModelSpec::new(Family::RandomLacunar { depth, seed }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alternating_eval_signs() {
        let g = PerturbSeq::Alternating { c: 0.25, power: 1.0 };
        assert_eq!(g.eval(1), -0.25);
        assert_eq!(g.eval(2), 0.125);
        assert_eq!(g.eval(4), 0.0625);
    }

    #[test]
    fn log_term_freeze() {
        let g = PerturbSeq::LogTerm { c: 1.0, depth: 1 };
        // Frozen at n_start(1) = 3 below it.
        assert_eq!(g.eval(1), g.eval(3));
        let n = 100f64;
        assert!((g.eval(100) - 1.0 / (n * n.ln())).abs() < 1e-15);
    }

    #[test]
    fn zero_perturbation_recovers_base() {
        let base = TransitionModel::constant(0.5, 0.5).unwrap();
        let m = apply_perturbation(&base, &Perturbation::zero()).unwrap();
        for n in 1..50u64 {
            assert_eq!(m.alpha(Direction::Up, n), 0.5);
            assert_eq!(m.alpha(Direction::Down, n), 0.5);
        }
    }

    #[test]
    fn subtracting_gamma_recovers_base() {
        let base = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let gamma = PerturbSeq::Alternating { c: 0.1, power: 1.0 };
        let pert = Perturbation { gamma_up: gamma.clone(), gamma_down: PerturbSeq::Zero };
        let m = apply_perturbation(&base, &pert).unwrap();
        for n in 1..1000u64 {
            let diff = m.alpha(Direction::Up, n) - gamma.eval(n);
            let want = base.alpha(Direction::Up, n);
            assert!((diff - want).abs() <= 1e-16 * (1.0 + want.abs()));
            assert_eq!(m.alpha(Direction::Down, n), base.alpha(Direction::Down, n));
        }
    }

    #[test]
    fn boundedness_analytic_cases() {
        let base = TransitionModel::constant(0.5, 0.5).unwrap();
        let zero = bounded_perturbation_verdict(&base, &Perturbation::zero(), 1000).unwrap();
        assert_eq!(zero.status, Boundedness::Bounded);

        let alt = Perturbation {
            gamma_up: PerturbSeq::Alternating { c: 1.0, power: 1.0 },
            gamma_down: PerturbSeq::Zero,
        };
        let v = bounded_perturbation_verdict(&base, &alt, 1000).unwrap();
        assert_eq!(v.status, Boundedness::Bounded);

        let h = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let log = Perturbation {
            gamma_up: PerturbSeq::Zero,
            gamma_down: PerturbSeq::LogTerm { c: 0.5, depth: 1 },
        };
        let v = bounded_perturbation_verdict(&h, &log, 1000).unwrap();
        assert_eq!(v.status, Boundedness::Unbounded);
    }

    #[test]
    fn boundedness_numeric_band() {
        // power = 0.4 has no analytic rule; partial sums still stay tiny
        // over the scanned horizon, so the numeric band reports Bounded.
        let base = TransitionModel::constant(0.5, 0.5).unwrap();
        let pert = Perturbation {
            gamma_up: PerturbSeq::Alternating { c: 0.05, power: 0.4 },
            gamma_down: PerturbSeq::Zero,
        };
        let v = bounded_perturbation_verdict(&base, &pert, 100_000).unwrap();
        assert_eq!(v.status, Boundedness::Bounded);
        assert!(v.up.rule.starts_with("numeric"));
    }

    #[test]
    fn env_hypothesis_reports() {
        let harmonic = EnvSpec {
            mean: ModelSpec::new(Family::Harmonic { lambda_up: 0.5, lambda_down: 0.5 }),
            noise_up: NoiseSpec::RelativeUniform { delta: 0.5 },
            noise_down: NoiseSpec::RelativeUniform { delta: 0.5 },
        };
        let (_, report) = realize_random_env(&harmonic, 7).unwrap();
        assert_eq!(report.holds, Some(true));

        let constant = EnvSpec {
            mean: ModelSpec::new(Family::Constant { p_up: 0.5, p_down: 0.5 }),
            noise_up: NoiseSpec::RelativeUniform { delta: 0.5 },
            noise_down: NoiseSpec::None,
        };
        let (_, report) = realize_random_env(&constant, 7).unwrap();
        // Constant rates have non-summable variance: hypothesis fails.
        assert_eq!(report.holds, Some(false));
    }

    #[test]
    fn lacunar_constructors() {
        assert!(make_prime_lacunar(0.5, 1).is_ok());
        assert!(make_prime_lacunar(1.5, 1).is_err());
        assert!(make_prime_lacunar(0.5, 0).is_err());
        assert!(make_random_lacunar(0, 1).is_ok());
    }
}
