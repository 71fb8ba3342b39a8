//! Recurrence/transience classification.
//!
//! Two regimes. When at least one mean run length is finite the walk has a
//! well-defined drift and its sign settles everything. When both means are
//! infinite the drift degenerates and the verdict comes from the
//! Erickson-type series J and K over the ordered direction pairs: both
//! infinite means recurrent, exactly one finite sends the walk toward the
//! direction whose conditional series still diverges.
//!
//! Series verdicts are analytic wherever the model's tails live on the
//! iterated-log scale (numeric detection of log-log divergence is hopeless
//! at any horizon), and numeric with explicit thresholds otherwise.

use std::time::Instant;

use serde::Serialize;

use crate::asymptotics;
use crate::error::{Error, Result};
use crate::tails::{MeanStatus, MeanVerdict};
use crate::transitions::{
    Admissibility, Direction, Family, ModelSpec, TransitionModel,
};

/// Work cap shared by classification, series evaluation, and mean scans.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Budget {
    pub max_terms: u64,
    pub max_seconds: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { max_terms: 10_000_000, max_seconds: 60.0 }
    }
}

impl Budget {
    pub fn new(max_terms: u64, max_seconds: f64) -> Self {
        Budget { max_terms, max_seconds }
    }
}

/// Horizon for the admissibility gate inside classify.
pub const ADMISSIBILITY_HORIZON: u64 = 100_000;
/// Analytic verdicts stream at most this many terms for diagnostics.
const ANALYTIC_REPORT_HORIZON: u64 = 100_000;
/// Numeric Infinite needs at least this partial-sum gain per decade.
const NUMERIC_GROWTH_MIN: f64 = 0.2;
/// Numeric Finite needs the integral remainder below this.
const NUMERIC_REMAINDER_TOL: f64 = 1e-4;
/// Numeric zero-drift band, reported Recurrent with a tolerance note.
const DRIFT_ZERO_TOL: f64 = 1e-12;

/// Extended value for the drift quantities.
#[derive(Clone, Copy, PartialEq, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtReal {
    Finite { value: f64 },
    PlusInfinite,
    MinusInfinite,
    /// Degenerate (infinity minus infinity).
    Undefined,
    /// Not resolved within budget.
    Inconclusive,
}

impl ExtReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite { value } => Some(value),
            _ => None,
        }
    }
}

/// Mean run lengths per direction and the derived drifts: drift_T is the
/// mean cycle length Theta_u + Theta_d, drift_M the mean per-cycle
/// displacement Theta_u - Theta_d, drift_S their ratio in [-1, 1].
#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub theta_up: MeanVerdict,
    pub theta_down: MeanVerdict,
    pub drift_t: ExtReal,
    pub drift_m: ExtReal,
    pub drift_s: ExtReal,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    J,
    K,
    Ktilde,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesStatus {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Analytic,
    Numeric,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesVerdict {
    pub which: SeriesKind,
    pub pair: (Direction, Direction),
    pub status: SeriesStatus,
    pub partial_sum: f64,
    /// Terms actually accumulated into partial_sum.
    pub horizon: u64,
    /// Estimated remaining mass past the horizon (last term when no
    /// integral bound applies).
    pub tail_term_estimate: f64,
    pub rule: RuleKind,
    pub detail: String,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Recurrent,
    TransientUp,
    TransientDown,
    Inconclusive,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Label::Recurrent => "Recurrent",
            Label::TransientUp => "TransientUp",
            Label::TransientDown => "TransientDown",
            Label::Inconclusive => "Inconclusive",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    DefinedDrift,
    UndefinedDrift,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub label: Label,
    pub regime: Regime,
    pub drift: Option<DriftReport>,
    pub j_up_given_down: Option<SeriesVerdict>,
    pub j_down_given_up: Option<SeriesVerdict>,
    pub k_up_given_down: Option<SeriesVerdict>,
    pub k_down_given_up: Option<SeriesVerdict>,
    pub notes: Vec<String>,
}

impl Classification {
    fn bare(label: Label, regime: Regime) -> Self {
        Classification {
            label,
            regime,
            drift: None,
            j_up_given_down: None,
            j_down_given_up: None,
            k_up_given_down: None,
            k_down_given_up: None,
            notes: Vec::new(),
        }
    }
}

/// The K-series factor 1 - n T(n) / Theta(n), always in [0, 1].
pub fn k_factor(model: &TransitionModel, dir: Direction, n: u64) -> f64 {
    1.0 - n as f64 * model.tail(dir, n) / model.truncated_mean(dir, n)
}

/// Does the model treat the two directions identically? Exact drift zero
/// then needs no numerics.
fn symmetric_spec(spec: &ModelSpec) -> bool {
    match &spec.family {
        Family::Constant { p_up, p_down } => p_up == p_down,
        Family::Harmonic { lambda_up, lambda_down } => lambda_up == lambda_down,
        Family::LogFamily { lambdas_up, lambdas_down } => lambdas_up == lambdas_down,
        Family::Boundary { .. } => true,
        Family::BoundaryPerturbed { c, .. } => *c == 0.0,
        Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down } => {
            alpha_up == alpha_down && extend_up == extend_down
        }
        Family::PrimeLacunar { .. } | Family::RandomLacunar { .. } => false,
        Family::Perturbed { base, gamma_up, gamma_down } => {
            symmetric_spec(base) && gamma_up == gamma_down
        }
        Family::RandomEnv { mean, noise_up, noise_down, .. } => {
            symmetric_spec(mean) && noise_up.is_none() && noise_down.is_none()
        }
        Family::Overlay { base, overrides } => symmetric_spec(base) && overrides.is_empty(),
    }
}

/// Mean verdicts per direction and the three drift quantities.
pub fn drift_report(model: &TransitionModel) -> DriftReport {
    drift_report_with(model, &Budget::default())
}

pub fn drift_report_with(model: &TransitionModel, budget: &Budget) -> DriftReport {
    let up = model.mean_verdict(Direction::Up, budget);
    let down = model.mean_verdict(Direction::Down, budget);
    let (drift_t, drift_m, drift_s) = match (up.status, down.status) {
        (MeanStatus::Finite, MeanStatus::Finite) => match (up.value, down.value) {
            (Some(u), Some(d)) => {
                if symmetric_spec(model.spec()) {
                    (ExtReal::Finite { value: u + d }, ExtReal::Finite { value: 0.0 }, ExtReal::Finite { value: 0.0 })
                } else {
                    (
                        ExtReal::Finite { value: u + d },
                        ExtReal::Finite { value: u - d },
                        ExtReal::Finite { value: (u - d) / (u + d) },
                    )
                }
            }
            _ if symmetric_spec(model.spec()) => {
                (ExtReal::Inconclusive, ExtReal::Finite { value: 0.0 }, ExtReal::Finite { value: 0.0 })
            }
            _ => (ExtReal::Inconclusive, ExtReal::Inconclusive, ExtReal::Inconclusive),
        },
        (MeanStatus::Finite, MeanStatus::Infinite) => (
            ExtReal::PlusInfinite,
            ExtReal::MinusInfinite,
            ExtReal::Finite { value: -1.0 },
        ),
        (MeanStatus::Infinite, MeanStatus::Finite) => (
            ExtReal::PlusInfinite,
            ExtReal::PlusInfinite,
            ExtReal::Finite { value: 1.0 },
        ),
        (MeanStatus::Infinite, MeanStatus::Infinite) => {
            (ExtReal::PlusInfinite, ExtReal::Undefined, ExtReal::Undefined)
        }
        (MeanStatus::Infinite, MeanStatus::Inconclusive)
        | (MeanStatus::Inconclusive, MeanStatus::Infinite) => {
            (ExtReal::PlusInfinite, ExtReal::Inconclusive, ExtReal::Inconclusive)
        }
        _ => (ExtReal::Inconclusive, ExtReal::Inconclusive, ExtReal::Inconclusive),
    };
    DriftReport { theta_up: up, theta_down: down, drift_t, drift_m, drift_s }
}

/// J series for the ordered pair (l1 | l2): sum of n (T_l1(n) - T_l1(n+1))
/// / Theta_l2(n).
pub fn series_j(model: &TransitionModel, l1: Direction, l2: Direction, horizon: u64) -> SeriesVerdict {
    series_verdict(model, SeriesKind::J, l1, l2, horizon, None)
}

/// K series (or Ktilde without the front factor) for the ordered pair.
pub fn series_k(
    model: &TransitionModel,
    l1: Direction,
    l2: Direction,
    horizon: u64,
    variant: SeriesKind,
) -> SeriesVerdict {
    assert!(
        matches!(variant, SeriesKind::K | SeriesKind::Ktilde),
        "variant must be K or Ktilde"
    );
    series_verdict(model, variant, l1, l2, horizon, None)
}

struct StreamStats {
    partial: f64,
    partial_at_decade: f64,
    last_term: f64,
    horizon: u64,
    /// T_l1 hit an exact zero: the sum is complete.
    terminated: bool,
    /// (ln n, ln term) samples on a geometric grid, zero terms skipped.
    samples: Vec<(f64, f64)>,
}

/// Accumulate series terms to `horizon`. None when the deadline passes.
fn stream_series(
    model: &TransitionModel,
    which: SeriesKind,
    l1: Direction,
    l2: Direction,
    horizon: u64,
    deadline: Option<Instant>,
) -> Option<StreamStats> {
    let decade_mark = horizon / 10;
    let mut logt1 = 0.0f64;
    let mut logt2 = 0.0f64;
    let mut th2 = 1.0f64;
    let mut th2_c = 0.0f64;
    let mut partial = 0.0f64;
    let mut partial_c = 0.0f64;
    let mut partial_at_decade = 0.0f64;
    let mut last_term = 0.0f64;
    let mut samples = Vec::with_capacity(160);
    let mut next_sample = 1u64;
    let mut terminated = false;

    let kahan = |s: &mut f64, c: &mut f64, x: f64| {
        let y = x - *c;
        let t = *s + y;
        *c = (t - *s) - y;
        *s = t;
    };

    for n in 1..=horizon {
        let t1 = logt1.exp();
        if t1 == 0.0 {
            terminated = true;
            break;
        }
        let a1 = model.alpha(l1, n);
        let term = match which {
            SeriesKind::J => n as f64 * t1 * a1 / th2,
            SeriesKind::K => {
                let t2 = logt2.exp();
                (1.0 - n as f64 * t2 / th2) * t1 / th2
            }
            SeriesKind::Ktilde => t1 / th2,
        };
        kahan(&mut partial, &mut partial_c, term);
        last_term = term;
        if n == decade_mark {
            partial_at_decade = partial;
        }
        if n >= next_sample {
            if term > 0.0 {
                samples.push(((n as f64).ln(), term.ln()));
            }
            next_sample = (next_sample + next_sample / 4).max(next_sample + 1);
        }
        // Advance both tail states to n+1 and Theta_l2 to n+1.
        let a2 = model.alpha(l2, n);
        logt1 += (-a1).ln_1p();
        logt2 += (-a2).ln_1p();
        kahan(&mut th2, &mut th2_c, logt2.exp());
        if n & 0xFFFF == 0 {
            if let Some(d) = deadline {
                if Instant::now() > d {
                    return None;
                }
            }
        }
    }
    Some(StreamStats {
        partial,
        partial_at_decade,
        last_term,
        horizon,
        terminated,
        samples,
    })
}

/// Least-squares slope of ln term against ln n over points past ln_lo.
fn fit_slope(samples: &[(f64, f64)], ln_lo: f64) -> Option<f64> {
    let pts: Vec<_> = samples.iter().filter(|(x, _)| *x >= ln_lo).collect();
    if pts.len() < 3 {
        return None;
    }
    let k = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let denom = k * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some((k * sxy - sx * sy) / denom)
}

fn series_verdict(
    model: &TransitionModel,
    which: SeriesKind,
    l1: Direction,
    l2: Direction,
    horizon: u64,
    deadline: Option<Instant>,
) -> SeriesVerdict {
    let horizon = horizon.max(2);
    // The K form's term order is insensitive to pointwise irregularity of
    // alpha, so one analytic rule serves J, K, and Ktilde alike.
    let analytic = asymptotics::analytic_series_diverges(model.spec(), l1, l2);
    if let Some(diverges) = analytic {
        let h = horizon.min(ANALYTIC_REPORT_HORIZON);
        let stats = stream_series(model, which, l1, l2, h, deadline);
        let (partial, h_used, last) = match &stats {
            Some(s) => (s.partial, s.horizon, s.last_term),
            None => (f64::NAN, 0, f64::NAN),
        };
        return SeriesVerdict {
            which,
            pair: (l1, l2),
            status: if diverges { SeriesStatus::Infinite } else { SeriesStatus::Finite },
            partial_sum: partial,
            horizon: h_used,
            tail_term_estimate: last,
            rule: RuleKind::Analytic,
            detail: if diverges {
                "exponent comparison: general term at or above the divergence boundary".into()
            } else {
                "exponent comparison: general term below the divergence boundary".into()
            },
        };
    }

    let Some(stats) = stream_series(model, which, l1, l2, horizon, deadline) else {
        return SeriesVerdict {
            which,
            pair: (l1, l2),
            status: SeriesStatus::Inconclusive,
            partial_sum: f64::NAN,
            horizon: 0,
            tail_term_estimate: f64::NAN,
            rule: RuleKind::Numeric,
            detail: "time budget exhausted mid-stream".into(),
        };
    };
    let (status, estimate, detail) = decide_numeric(&stats);
    SeriesVerdict {
        which,
        pair: (l1, l2),
        status,
        partial_sum: stats.partial,
        horizon: stats.horizon,
        tail_term_estimate: estimate,
        rule: RuleKind::Numeric,
        detail,
    }
}

fn decide_numeric(stats: &StreamStats) -> (SeriesStatus, f64, String) {
    if stats.terminated {
        return (
            SeriesStatus::Finite,
            0.0,
            "tails hit an exact zero; the sum is complete".into(),
        );
    }
    let increase = stats.partial - stats.partial_at_decade;
    let ln_lo = ((stats.horizon / 10).max(1) as f64).ln();
    let slope = fit_slope(&stats.samples, ln_lo);
    if stats.last_term < 1e-300 && increase < 1e-12 {
        return (
            SeriesStatus::Finite,
            stats.last_term,
            "terms underflowed to zero and the partial sum froze".into(),
        );
    }
    if let Some(s) = slope {
        if increase > NUMERIC_GROWTH_MIN && s > -1.0 {
            return (
                SeriesStatus::Infinite,
                stats.last_term,
                format!(
                    "partial sum grew {increase:.3} over the last decade with term slope {s:.3} \
                     above -1"
                ),
            );
        }
        if s < -1.05 {
            let rem = stats.last_term * stats.horizon as f64 / (-s - 1.0);
            if rem < NUMERIC_REMAINDER_TOL {
                return (
                    SeriesStatus::Finite,
                    rem,
                    format!("integral remainder bound {rem:.3e} with term slope {s:.3}"),
                );
            }
        }
    }
    (
        SeriesStatus::Inconclusive,
        stats.last_term,
        "neither the growth nor the remainder threshold met".into(),
    )
}

/// Full classification: admissibility gate, drift regime, series regime.
pub fn classify(model: &TransitionModel, budget: &Budget) -> Result<Classification> {
    let adm = model.admissibility(ADMISSIBILITY_HORIZON.min(budget.max_terms.max(1000)));
    if adm.overall == Admissibility::NotAdmissible {
        return Err(Error::InvalidModel(format!(
            "model is not admissible (up: {}; down: {})",
            adm.up.rule, adm.down.rule
        )));
    }
    let mut notes = Vec::new();
    if adm.overall == Admissibility::Inconclusive {
        notes.push("admissibility not settled within the probe horizon".to_string());
    }
    Ok(classify_inner(model, budget, notes))
}

/// Classification without the admissibility gate, for callers that already
/// checked or deliberately override it.
pub fn classify_unchecked(model: &TransitionModel, budget: &Budget) -> Classification {
    classify_inner(model, budget, vec!["admissibility gate skipped".to_string()])
}

fn classify_inner(model: &TransitionModel, budget: &Budget, mut notes: Vec<String>) -> Classification {
    let deadline = Instant::now() + std::time::Duration::from_secs_f64(budget.max_seconds.max(0.01));
    let drift = drift_report_with(model, budget);
    match drift.drift_s {
        ExtReal::Finite { value } => {
            let label = if value == 0.0 {
                Label::Recurrent
            } else if value.abs() < DRIFT_ZERO_TOL {
                notes.push(format!(
                    "drift magnitude {value:.3e} inside the zero tolerance {DRIFT_ZERO_TOL:.0e}"
                ));
                Label::Recurrent
            } else if value > 0.0 {
                Label::TransientUp
            } else {
                Label::TransientDown
            };
            Classification {
                label,
                regime: Regime::DefinedDrift,
                drift: Some(drift),
                j_up_given_down: None,
                j_down_given_up: None,
                k_up_given_down: None,
                k_down_given_up: None,
                notes,
            }
        }
        ExtReal::Undefined => {
            let h = budget.max_terms;
            let j_ud = series_verdict(model, SeriesKind::J, Direction::Up, Direction::Down, h, Some(deadline));
            let j_du = series_verdict(model, SeriesKind::J, Direction::Down, Direction::Up, h, Some(deadline));
            let k_ud = series_verdict(model, SeriesKind::K, Direction::Up, Direction::Down, h, Some(deadline));
            let k_du = series_verdict(model, SeriesKind::K, Direction::Down, Direction::Up, h, Some(deadline));

            let resolve = |j: &SeriesVerdict, k: &SeriesVerdict, name: &str, notes: &mut Vec<String>| {
                match (j.status, k.status) {
                    (SeriesStatus::Inconclusive, SeriesStatus::Inconclusive) => None,
                    (SeriesStatus::Inconclusive, s) => {
                        notes.push(format!("{name}: K decided where J was inconclusive"));
                        Some(s)
                    }
                    (s, SeriesStatus::Inconclusive) => Some(s),
                    (sj, sk) if sj == sk => Some(sj),
                    (sj, sk) => {
                        notes.push(format!(
                            "{name}: J says {sj:?} but K says {sk:?}; treating as unresolved"
                        ));
                        None
                    }
                }
            };
            let s_ud = resolve(&j_ud, &k_ud, "(up|down)", &mut notes);
            let s_du = resolve(&j_du, &k_du, "(down|up)", &mut notes);
            let label = match (s_ud, s_du) {
                (Some(SeriesStatus::Infinite), Some(SeriesStatus::Infinite)) => Label::Recurrent,
                (Some(SeriesStatus::Infinite), Some(SeriesStatus::Finite)) => Label::TransientUp,
                (Some(SeriesStatus::Finite), Some(SeriesStatus::Infinite)) => Label::TransientDown,
                (Some(SeriesStatus::Finite), Some(SeriesStatus::Finite)) => {
                    notes.push(
                        "diagnostic: both conditional series finite under an undefined drift; \
                         this pattern lies outside the classification table"
                            .to_string(),
                    );
                    Label::Inconclusive
                }
                _ => {
                    notes.push("conditional series not resolved within budget".to_string());
                    Label::Inconclusive
                }
            };
            Classification {
                label,
                regime: Regime::UndefinedDrift,
                drift: Some(drift),
                j_up_given_down: Some(j_ud),
                j_down_given_up: Some(j_du),
                k_up_given_down: Some(k_ud),
                k_down_given_up: Some(k_du),
                notes,
            }
        }
        _ => {
            notes.push("mean run lengths not resolved within budget".to_string());
            Classification {
                label: Label::Inconclusive,
                regime: Regime::DefinedDrift,
                drift: Some(drift),
                j_up_given_down: None,
                j_down_given_up: None,
                k_up_given_down: None,
                k_down_given_up: None,
                notes,
            }
        }
    }
}

/// Direct labels for families with a published criterion; None elsewhere.
pub fn classify_closed_form(model: &TransitionModel) -> Option<Classification> {
    let spec = model.spec();
    let finite_mean = |dir| asymptotics::analytic_mean_finite(spec, dir).unwrap_or(false);
    let regime = if finite_mean(Direction::Up) || finite_mean(Direction::Down) {
        Regime::DefinedDrift
    } else {
        Regime::UndefinedDrift
    };
    let mut out = match &spec.family {
        Family::Constant { p_up, p_down } => {
            if *p_up == 0.0 && *p_down == 0.0 {
                return None;
            }
            let label = if p_up == p_down {
                Label::Recurrent
            } else if p_up < p_down {
                // Slower switching up means longer up-runs.
                Label::TransientUp
            } else {
                Label::TransientDown
            };
            let mut c = Classification::bare(label, Regime::DefinedDrift);
            c.notes.push("geometric runs: drift sign is the sign of 1/p_up - 1/p_down".into());
            c
        }
        Family::Harmonic { lambda_up, lambda_down } => {
            let label = if lambda_up == lambda_down {
                Label::Recurrent
            } else if lambda_up < lambda_down {
                Label::TransientUp
            } else {
                Label::TransientDown
            };
            let mut c = Classification::bare(label, regime);
            c.notes.push("recurrent exactly when the two rate constants agree".into());
            c
        }
        Family::LogFamily { lambdas_up, lambdas_down } => {
            let label = if lambdas_up == lambdas_down {
                Label::Recurrent
            } else {
                // First differing exponent: the smaller one has the
                // heavier tail and wins the race.
                let mut label = Label::Recurrent;
                for i in 0..lambdas_up.len().max(lambdas_down.len()) {
                    let u = lambdas_up.get(i).copied().unwrap_or(0.0);
                    let d = lambdas_down.get(i).copied().unwrap_or(0.0);
                    if u != d {
                        label = if u < d { Label::TransientUp } else { Label::TransientDown };
                        break;
                    }
                }
                label
            };
            let mut c = Classification::bare(label, regime);
            c.notes.push("recurrent exactly when the exponent vectors agree".into());
            c
        }
        Family::Boundary { .. } => {
            let mut c = Classification::bare(Label::Recurrent, Regime::UndefinedDrift);
            c.notes.push("symmetric rates: recurrent".into());
            c
        }
        Family::BoundaryPerturbed { c, perturbed, .. } => {
            let label = if c.abs() <= 1.0 {
                Label::Recurrent
            } else if *c > 1.0 {
                // Faster switching shortens runs in the perturbed direction.
                match perturbed {
                    Direction::Up => Label::TransientDown,
                    Direction::Down => Label::TransientUp,
                }
            } else {
                match perturbed {
                    Direction::Up => Label::TransientUp,
                    Direction::Down => Label::TransientDown,
                }
            };
            let mut cl = Classification::bare(label, Regime::UndefinedDrift);
            cl.notes.push("next-order window: recurrent exactly when |c| <= 1".into());
            cl
        }
        Family::PrimeLacunar { lambda, max_multiple } => {
            let h: f64 = (1..=*max_multiple).map(|j| 1.0 / j as f64).sum();
            let label = if *max_multiple == 1 && *lambda == 1.0 {
                // The headline inequality lambda H_r <= 1 would say
                // recurrent, but at equality with r = 1 the partial sums
                // of the erased side change order and the walk escapes
                // downward. Kept as the stated exception.
                Label::TransientDown
            } else if lambda * h <= 1.0 {
                Label::Recurrent
            } else {
                Label::TransientDown
            };
            let mut c = Classification::bare(label, Regime::UndefinedDrift);
            c.notes.push(format!(
                "erased-multiples criterion: lambda H_r = {:.6} against 1",
                lambda * h
            ));
            c
        }
        Family::RandomLacunar { depth, .. } => {
            if *depth == 0 {
                return None;
            }
            let mut c = Classification::bare(Label::Recurrent, Regime::UndefinedDrift);
            c.notes.push("erasures are too sparse to change the order at depth >= 1".into());
            c
        }
        _ => return None,
    };
    out.notes.push("closed-form label; run classify for numeric evidence".into());
    Some(out)
}

/// Classification with family rules taking precedence over streamed
/// evidence. When an exact label exists the stream only supplies
/// diagnostics, so its horizon is capped; families without a rule get the
/// full budget.
pub fn classify_full(model: &TransitionModel, budget: &Budget) -> Result<Classification> {
    let closed = classify_closed_form(model);
    let effective = match &closed {
        Some(_) => Budget {
            max_terms: budget.max_terms.min(ANALYTIC_REPORT_HORIZON),
            max_seconds: budget.max_seconds,
        },
        None => *budget,
    };
    let streamed = classify(model, &effective)?;
    let Some(closed) = closed else {
        return Ok(streamed);
    };
    if closed.label == streamed.label {
        return Ok(streamed);
    }
    let mut out = streamed;
    if out.label != Label::Inconclusive {
        out.notes.push(format!(
            "streamed verdict {} overridden by the exact family rule",
            out.label
        ));
    }
    out.label = closed.label;
    out.regime = closed.regime;
    out.notes.extend(closed.notes);
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SameOrder {
    Agree,
    Disagree,
    Absent,
}

/// When two models share tail exponent vectors in both directions they
/// must classify identically; report whether they do. Absent when either
/// model has no exponent vectors or the vectors differ.
pub fn same_order_check(a: &TransitionModel, b: &TransitionModel) -> SameOrder {
    let (Some(ea), Some(eb)) = (a.tail_exponents(), b.tail_exponents()) else {
        return SameOrder::Absent;
    };
    if ea.up != eb.up || ea.down != eb.down {
        return SameOrder::Absent;
    }
    let budget = Budget::default();
    let (Ok(ca), Ok(cb)) = (classify(a, &budget), classify(b, &budget)) else {
        return SameOrder::Absent;
    };
    if ca.label == Label::Inconclusive || cb.label == Label::Inconclusive {
        return SameOrder::Absent;
    }
    if ca.label == cb.label {
        SameOrder::Agree
    } else {
        SameOrder::Disagree
    }
}
