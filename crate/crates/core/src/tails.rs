//! Run-length tail probabilities T(n) = P(tau >= n), their partial sums
//! Theta(n), and inverse-CDF sampling of run lengths.
//!
//! Everything is driven by the product T(n+1) = T(n) (1 - alpha(n)),
//! accumulated in log space so heavy products neither underflow nor lose
//! relative accuracy. Each model carries one memo per direction: a dense
//! prefix of the logtail and Theta arrays, then sparse checkpoints so
//! queries far beyond the dense range do not rescan from 1 every time.
//!
//! Index convention: logtail[i] = ln T(i+1) and theta[i] = Theta(i+1),
//! so index 0 holds the trivial T(1) = 1.
//!
//! Constant rates skip the memo entirely (geometric closed form), and
//! harmonic rates switch to a log-gamma closed form beyond the dense
//! range. Those express the same quantity two ways; the scan stays the
//! canonical value inside the dense range.

use std::sync::RwLock;
use std::time::Instant;

use libm::lgamma;
use serde::Serialize;

use crate::asymptotics;
use crate::classifier::Budget;
use crate::error::{Error, Result};
use crate::transitions::{Direction, Family, TransitionModel};

/// Dense memo entries per direction (two f64 arrays, about 16 MB when full).
const DENSE_MAX: usize = 1 << 20;
/// Beyond the dense range, scans leave a resume point this often.
const CHECKPOINT_STRIDE: u64 = 1 << 20;

/// Tail envelope coefficient: T(n) n^2 staying below this over the last
/// decade certifies a finite mean numerically.
const MEAN_TAIL_COEF: f64 = 1e-3;
/// Truncated-mean growth per decade above this keeps the verdict Infinite.
const MEAN_GROWTH_MIN: f64 = 1.0;

pub(crate) struct TailCache {
    state: RwLock<CacheState>,
}

struct CacheState {
    logtail: Vec<f64>,
    theta: Vec<f64>,
    /// Kahan carry for the next theta append.
    theta_c: f64,
    /// First n with alpha(n) = 1; runs never exceed it.
    first_unit: Option<u64>,
    /// Theta at first_unit, which is Theta(infinity). Valid iff first_unit.
    final_theta: f64,
    /// Resume points beyond the dense range, ascending in n.
    checkpoints: Vec<Checkpoint>,
}

/// Scan state at n: ln T(n) and Theta(n) with its Kahan carry.
#[derive(Clone, Copy)]
struct Checkpoint {
    n: u64,
    logtail: f64,
    theta: f64,
    theta_c: f64,
}

#[inline]
fn kahan_add(sum: &mut f64, c: &mut f64, x: f64) {
    let y = x - *c;
    let t = *sum + y;
    *c = (t - *sum) - y;
    *sum = t;
}

impl TailCache {
    pub(crate) fn new() -> Self {
        TailCache {
            state: RwLock::new(CacheState {
                logtail: vec![0.0],
                theta: vec![1.0],
                theta_c: 0.0,
                first_unit: None,
                final_theta: 0.0,
                checkpoints: Vec::new(),
            }),
        }
    }

    fn dense_len(&self) -> usize {
        self.state.read().unwrap().logtail.len()
    }

    /// Extend the dense arrays until they hold `target` entries (clamped to
    /// DENSE_MAX) or a unit alpha ends the support.
    fn ensure_dense(&self, model: &TransitionModel, dir: Direction, target: u64) {
        let target = target.min(DENSE_MAX as u64) as usize;
        {
            let st = self.state.read().unwrap();
            if st.logtail.len() >= target || st.first_unit.is_some() {
                return;
            }
        }
        let mut st = self.state.write().unwrap();
        while st.logtail.len() < target && st.first_unit.is_none() {
            let i = st.logtail.len() as u64; // appending ln T(i+1)
            let a = model.alpha(dir, i);
            if a >= 1.0 {
                st.first_unit = Some(i);
                st.final_theta = *st.theta.last().expect("theta never empty");
                break;
            }
            let logt = st.logtail[st.logtail.len() - 1] + (-a).ln_1p();
            st.logtail.push(logt);
            let mut th = *st.theta.last().unwrap();
            let mut c = st.theta_c;
            kahan_add(&mut th, &mut c, logt.exp());
            st.theta.push(th);
            st.theta_c = c;
        }
    }

    /// Extend the dense arrays geometrically until the last logtail drops
    /// to `level` or the arrays reach `want` entries.
    fn ensure_until_level(&self, model: &TransitionModel, dir: Direction, level: f64, want: u64) {
        let want = want.min(DENSE_MAX as u64);
        loop {
            let len = {
                let st = self.state.read().unwrap();
                if st.first_unit.is_some() {
                    return;
                }
                let len = st.logtail.len();
                if st.logtail[len - 1] <= level || len as u64 >= want {
                    return;
                }
                len as u64
            };
            self.ensure_dense(model, dir, (len * 2).max(64).min(want));
        }
    }

    /// (ln T(n), Theta(n)) when already memoized or implied by a unit alpha.
    fn read_state(&self, n: u64) -> Option<(f64, f64)> {
        let st = self.state.read().unwrap();
        if n as usize <= st.logtail.len() {
            let i = (n - 1) as usize;
            return Some((st.logtail[i], st.theta[i]));
        }
        if let Some(k) = st.first_unit {
            if n > k {
                return Some((f64::NEG_INFINITY, st.final_theta));
            }
        }
        None
    }

    fn first_unit(&self) -> Option<u64> {
        self.state.read().unwrap().first_unit
    }

    /// (ln T(n), Theta(n)) by scanning from the best resume point, leaving
    /// checkpoints along the way.
    fn scan_state(&self, model: &TransitionModel, dir: Direction, target: u64) -> (f64, f64) {
        self.ensure_dense(model, dir, DENSE_MAX as u64);
        let mut st = self.state.write().unwrap();
        if (target as usize) <= st.logtail.len() {
            let i = (target - 1) as usize;
            return (st.logtail[i], st.theta[i]);
        }
        if let Some(k) = st.first_unit {
            if target > k {
                return (f64::NEG_INFINITY, st.final_theta);
            }
        }
        let (mut n, mut logt, mut th, mut c) = resume_point(&st, target);
        while n < target {
            let a = model.alpha(dir, n);
            if a >= 1.0 {
                st.first_unit = Some(n);
                st.final_theta = th;
                return (f64::NEG_INFINITY, th);
            }
            logt += (-a).ln_1p();
            kahan_add(&mut th, &mut c, logt.exp());
            n += 1;
            maybe_checkpoint(&mut st, n, logt, th, c);
        }
        (logt, th)
    }

    /// Smallest n in [lo, limit] with ln T(n+1) <= level, scanning beyond
    /// the dense range. Precondition: the dense range held no answer.
    fn scan_level(
        &self,
        model: &TransitionModel,
        dir: Direction,
        level: f64,
        lo: u64,
        limit: u64,
    ) -> Option<u64> {
        let mut st = self.state.write().unwrap();
        let start_target = (lo + 1).max(st.logtail.len() as u64);
        let (mut q, mut logt, mut th, mut c) = resume_point(&st, start_target);
        loop {
            if q >= lo + 1 && logt <= level {
                return Some(q - 1).filter(|&n| n <= limit);
            }
            if q >= limit.saturating_add(1) {
                return None;
            }
            let a = model.alpha(dir, q);
            if a >= 1.0 {
                st.first_unit = Some(q);
                st.final_theta = th;
                let n = q.max(lo);
                return Some(n).filter(|&n| n <= limit);
            }
            logt += (-a).ln_1p();
            kahan_add(&mut th, &mut c, logt.exp());
            q += 1;
            maybe_checkpoint(&mut st, q, logt, th, c);
        }
    }
}

/// Best known scan state at some n <= target: the dense frontier or the
/// nearest checkpoint.
fn resume_point(st: &CacheState, target: u64) -> (u64, f64, f64, f64) {
    let len = st.logtail.len();
    let mut best = (len as u64, st.logtail[len - 1], st.theta[len - 1], st.theta_c);
    let idx = st.checkpoints.partition_point(|cp| cp.n <= target);
    if idx > 0 {
        let cp = st.checkpoints[idx - 1];
        if cp.n > best.0 {
            best = (cp.n, cp.logtail, cp.theta, cp.theta_c);
        }
    }
    best
}

fn maybe_checkpoint(st: &mut CacheState, n: u64, logt: f64, th: f64, c: f64) {
    if n % CHECKPOINT_STRIDE == 0 && st.checkpoints.last().map_or(true, |cp| cp.n < n) {
        st.checkpoints.push(Checkpoint { n, logtail: logt, theta: th, theta_c: c });
    }
}

fn constant_log_tail(p: f64, n: u64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    (n - 1) as f64 * (-p).ln_1p()
}

/// Closed form for harmonic rates from m0 = floor(lambda)+1 on, where
/// alpha(n) = lambda/n exactly: T(n) = T(m0) Gamma(n-lambda) Gamma(m0)
/// / (Gamma(n) Gamma(m0-lambda)).
struct HarmonicAnchor {
    lambda: f64,
    m0: u64,
    log_t_m0: f64,
    theta_before_m0: f64,
}

impl HarmonicAnchor {
    fn log_tail(&self, n: u64) -> f64 {
        debug_assert!(n >= self.m0);
        let x = n as f64;
        let m = self.m0 as f64;
        self.log_t_m0 + lgamma(x - self.lambda) - lgamma(x) + lgamma(m) - lgamma(m - self.lambda)
    }

    /// Theta(m) for m >= m0 by telescoping n T(n) - n T(n+1) = lambda T(n).
    fn theta(&self, m: u64) -> Option<f64> {
        if (self.lambda - 1.0).abs() < 1e-9 {
            return None;
        }
        let t_m0 = self.log_t_m0.exp();
        let t_next = self.log_tail(m + 1).exp();
        Some(
            self.theta_before_m0
                + ((self.m0 - 1) as f64 * t_m0 - m as f64 * t_next) / (self.lambda - 1.0),
        )
    }

    /// Exact full mean when lambda > 1 (the m -> infinity limit of theta).
    fn exact_mean(&self) -> Option<f64> {
        if self.lambda <= 1.0 {
            return None;
        }
        let t_m0 = self.log_t_m0.exp();
        Some(self.theta_before_m0 + t_m0 * (self.m0 - 1) as f64 / (self.lambda - 1.0))
    }
}

fn harmonic_anchor(model: &TransitionModel, dir: Direction) -> Option<HarmonicAnchor> {
    let Family::Harmonic { lambda_up, lambda_down } = model.spec().family else {
        return None;
    };
    let lambda = match dir {
        Direction::Up => lambda_up,
        Direction::Down => lambda_down,
    };
    let m0 = lambda as u64 + 1;
    if m0 as usize >= DENSE_MAX {
        return None;
    }
    let cache = model.tail_cache(dir);
    cache.ensure_dense(model, dir, m0);
    let st = cache.state.read().unwrap();
    let log_t_m0 = st.logtail[(m0 - 1) as usize];
    let theta_before_m0 = if m0 >= 2 { st.theta[(m0 - 2) as usize] } else { 0.0 };
    Some(HarmonicAnchor { lambda, m0, log_t_m0, theta_before_m0 })
}

fn constant_p(model: &TransitionModel, dir: Direction) -> Option<f64> {
    match model.spec().family {
        Family::Constant { p_up, p_down } => Some(match dir {
            Direction::Up => p_up,
            Direction::Down => p_down,
        }),
        _ => None,
    }
}

/// Why a reported tail value is zero.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZeroKind {
    /// alpha hit 1 at this n; the tail is exactly zero beyond it.
    Analytic { first_unit_n: u64 },
    /// The log value is finite but exp underflows f64.
    Underflow,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TailValue {
    pub value: f64,
    pub log_value: f64,
    pub zero: Option<ZeroKind>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanStatus {
    Finite,
    Infinite,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanVerdict {
    pub status: MeanStatus,
    /// Present only when the mean is finite and the value converged.
    pub value: Option<f64>,
    pub rule: String,
}

/// Iterated-log exponents of both tails, present only when every entry is
/// positive in both directions (tails of the pure product shape).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailExponents {
    pub up: Vec<f64>,
    pub down: Vec<f64>,
}

/// Outcome of a run-length draw capped by the caller's step budget.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum TauDraw {
    Within(u64),
    Beyond,
}

impl TransitionModel {
    /// ln P(tau >= n). Zero for n <= 1; -inf once alpha hits 1.
    pub fn log_tail(&self, dir: Direction, n: u64) -> f64 {
        if n <= 1 {
            return 0.0;
        }
        if let Some(p) = constant_p(self, dir) {
            return constant_log_tail(p, n);
        }
        let cache = self.tail_cache(dir);
        cache.ensure_dense(self, dir, n.min(DENSE_MAX as u64));
        if let Some((lt, _)) = cache.read_state(n) {
            return lt;
        }
        if let Some(h) = harmonic_anchor(self, dir) {
            return h.log_tail(n);
        }
        cache.scan_state(self, dir, n).0
    }

    /// P(tau >= n).
    pub fn tail(&self, dir: Direction, n: u64) -> f64 {
        self.log_tail(dir, n).exp()
    }

    /// Tail with its log value and, when zero, the reason.
    pub fn tail_detail(&self, dir: Direction, n: u64) -> TailValue {
        let log_value = self.log_tail(dir, n);
        let value = log_value.exp();
        let zero = if log_value == f64::NEG_INFINITY {
            let k = if constant_p(self, dir).is_some_and(|p| p >= 1.0) {
                1
            } else {
                self.tail_cache(dir).first_unit().unwrap_or(n.saturating_sub(1))
            };
            Some(ZeroKind::Analytic { first_unit_n: k })
        } else if value == 0.0 {
            Some(ZeroKind::Underflow)
        } else {
            None
        };
        TailValue { value, log_value, zero }
    }

    /// Theta(m) = sum of T(n) for n <= m, the truncated mean of tau.
    pub fn truncated_mean(&self, dir: Direction, m: u64) -> f64 {
        if m == 0 {
            return 0.0;
        }
        if let Some(p) = constant_p(self, dir) {
            if p == 0.0 {
                return m as f64;
            }
            return (1.0 - (m as f64 * (-p).ln_1p()).exp()) / p;
        }
        let cache = self.tail_cache(dir);
        cache.ensure_dense(self, dir, m.min(DENSE_MAX as u64));
        if let Some((_, th)) = cache.read_state(m) {
            return th;
        }
        if let Some(h) = harmonic_anchor(self, dir) {
            if let Some(th) = h.theta(m) {
                return th;
            }
        }
        cache.scan_state(self, dir, m).1
    }

    /// Is E[tau] finite, and what is it? Exact for geometric and harmonic
    /// rates, analytic where tail exponents decide, numeric thresholds
    /// otherwise.
    pub fn mean_verdict(&self, dir: Direction, budget: &Budget) -> MeanVerdict {
        if let Some(p) = constant_p(self, dir) {
            return if p > 0.0 {
                MeanVerdict {
                    status: MeanStatus::Finite,
                    value: Some(1.0 / p),
                    rule: "geometric tail sums to 1/p".into(),
                }
            } else {
                MeanVerdict {
                    status: MeanStatus::Infinite,
                    value: None,
                    rule: "zero switch rate: runs never end".into(),
                }
            };
        }
        if let Family::Harmonic { .. } = self.spec().family {
            if let Some(h) = harmonic_anchor(self, dir) {
                if let Some(v) = h.exact_mean() {
                    return MeanVerdict {
                        status: MeanStatus::Finite,
                        value: Some(v),
                        rule: "telescoped tail sum, exact for rates lambda/n".into(),
                    };
                }
                return MeanVerdict {
                    status: MeanStatus::Infinite,
                    value: None,
                    rule: format!(
                        "tail decays like n^-{}, too heavy for a mean",
                        h.lambda
                    ),
                };
            }
        }
        match asymptotics::analytic_mean_finite(self.spec(), dir) {
            Some(false) => MeanVerdict {
                status: MeanStatus::Infinite,
                value: None,
                rule: "tail exponent vector keeps the sum divergent".into(),
            },
            Some(true) => {
                let t0 = asymptotics::tail_decay_vector(self.spec(), dir)
                    .and_then(|v| v.first().copied());
                let scan = self.numeric_mean_scan(dir, budget, t0);
                match scan.outcome {
                    ScanOutcome::ForcedStop | ScanOutcome::Converged => MeanVerdict {
                        status: MeanStatus::Finite,
                        value: Some(scan.theta),
                        rule: scan.rule,
                    },
                    ScanOutcome::Completed if scan.tail_bound_ok => MeanVerdict {
                        status: MeanStatus::Finite,
                        value: Some(scan.theta),
                        rule: format!(
                            "finite by tail exponents; {} bounds the remainder",
                            scan.rule
                        ),
                    },
                    _ => MeanVerdict {
                        status: MeanStatus::Finite,
                        value: None,
                        rule: "finite by tail exponents; value did not converge in budget"
                            .into(),
                    },
                }
            }
            None => {
                let scan = self.numeric_mean_scan(dir, budget, None);
                match scan.outcome {
                    ScanOutcome::ForcedStop | ScanOutcome::Converged => MeanVerdict {
                        status: MeanStatus::Finite,
                        value: Some(scan.theta),
                        rule: scan.rule,
                    },
                    ScanOutcome::OutOfTime => MeanVerdict {
                        status: MeanStatus::Inconclusive,
                        value: None,
                        rule: "time budget exhausted before the term budget".into(),
                    },
                    ScanOutcome::Completed => {
                        if scan.growth > MEAN_GROWTH_MIN {
                            MeanVerdict {
                                status: MeanStatus::Infinite,
                                value: None,
                                rule: format!(
                                    "truncated mean still grew by {:.3} over the last decade",
                                    scan.growth
                                ),
                            }
                        } else if scan.tail_bound_ok {
                            MeanVerdict {
                                status: MeanStatus::Finite,
                                value: Some(scan.theta),
                                rule: scan.rule,
                            }
                        } else {
                            MeanVerdict {
                                status: MeanStatus::Inconclusive,
                                value: None,
                                rule: "neither the growth nor the tail envelope threshold met"
                                    .into(),
                            }
                        }
                    }
                }
            }
        }
    }

    fn numeric_mean_scan(&self, dir: Direction, budget: &Budget, t0: Option<f64>) -> MeanScan {
        let n_max = budget.max_terms.max(1000);
        let decade_mark = n_max / 10;
        let start = Instant::now();
        let mut logt = 0.0f64; // ln T(1)
        let mut th = 1.0f64;
        let mut c = 0.0f64;
        let mut theta_decade = 0.0f64;
        let mut tail_bound_ok = true;
        let margin = t0.map_or(0.0, |t| t - 1.0);
        for n in 2..=n_max {
            let a = self.alpha(dir, n - 1);
            if a >= 1.0 {
                return MeanScan {
                    outcome: ScanOutcome::ForcedStop,
                    theta: th,
                    growth: 0.0,
                    tail_bound_ok: true,
                    rule: format!("runs are capped at {} by a forced switch", n - 1),
                };
            }
            logt += (-a).ln_1p();
            let t = logt.exp();
            kahan_add(&mut th, &mut c, t);
            if n == decade_mark {
                theta_decade = th;
            }
            if n > decade_mark && t * (n as f64) * (n as f64) >= MEAN_TAIL_COEF {
                tail_bound_ok = false;
            }
            if margin > 0.05 && t * n as f64 / margin < 1e-8 * th.max(1.0) {
                return MeanScan {
                    outcome: ScanOutcome::Converged,
                    theta: th,
                    growth: 0.0,
                    tail_bound_ok: true,
                    rule: format!("remainder below 1e-8 relative at n = {n}"),
                };
            }
            if n & 0xFFFF == 0 && start.elapsed().as_secs_f64() > budget.max_seconds {
                return MeanScan {
                    outcome: ScanOutcome::OutOfTime,
                    theta: th,
                    growth: 0.0,
                    tail_bound_ok: false,
                    rule: String::new(),
                };
            }
        }
        MeanScan {
            outcome: ScanOutcome::Completed,
            theta: th,
            growth: th - theta_decade,
            tail_bound_ok,
            rule: format!(
                "tail envelope {MEAN_TAIL_COEF}/n^2 held over the last decade up to {n_max}"
            ),
        }
    }

    /// Iterated-log tail exponents when both directions have the pure
    /// product shape with positive entries.
    pub fn tail_exponents(&self) -> Option<TailExponents> {
        let up = asymptotics::tail_decay_vector(self.spec(), Direction::Up)?;
        let down = asymptotics::tail_decay_vector(self.spec(), Direction::Down)?;
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&e| e > 0.0);
        (positive(&up) && positive(&down)).then_some(TailExponents { up, down })
    }

    /// Smallest n >= 1 with 1 - T(n+1) >= v: the run length whose CDF
    /// first reaches v. Errors if that exceeds `cap`.
    pub fn inverse_cdf(&self, dir: Direction, v: f64, cap: u64) -> Result<u64> {
        assert!((0.0..1.0).contains(&v), "inverse_cdf needs v in [0, 1), got {v}");
        let cap = cap.max(1);
        match self.icdf_impl(dir, v, 0, cap) {
            Some(n) => Ok(n),
            None => Err(Error::SampleCapExceeded { cap, direction: dir }),
        }
    }

    /// Like inverse_cdf, but a draw past `bound` reports Beyond instead of
    /// erroring. Lets the simulator cap a run at the remaining step budget.
    pub(crate) fn inverse_cdf_bounded(&self, dir: Direction, v: f64, bound: u64) -> TauDraw {
        match self.icdf_impl(dir, v, 0, bound) {
            Some(n) => TauDraw::Within(n),
            None => TauDraw::Beyond,
        }
    }

    /// Conditional draw of tau given tau > m: smallest n > m with
    /// 1 - T(n+1)/T(m+1) >= v.
    pub(crate) fn inverse_cdf_from(
        &self,
        dir: Direction,
        given_exceeds: u64,
        v: f64,
        bound: u64,
    ) -> TauDraw {
        match self.icdf_impl(dir, v, given_exceeds, bound) {
            Some(n) => TauDraw::Within(n),
            None => TauDraw::Beyond,
        }
    }

    /// Shared search: smallest n >= m+1 with ln T(n+1) <= ln(1-v) + ln T(m+1),
    /// or None past `limit`. m = 0 is the unconditional draw.
    fn icdf_impl(&self, dir: Direction, v: f64, m: u64, limit: u64) -> Option<u64> {
        debug_assert!((0.0..1.0).contains(&v));
        if v == 0.0 {
            return Some(m + 1).filter(|&n| n <= limit);
        }
        let shift = if m == 0 { 0.0 } else { self.log_tail(dir, m + 1) };
        debug_assert!(
            shift > f64::NEG_INFINITY,
            "conditioning on a run length the model cannot reach"
        );
        let level = (-v).ln_1p() + shift;
        if let Some(p) = constant_p(self, dir) {
            // Validation pins p to (0, 1].
            if p >= 1.0 {
                return Some(m + 1).filter(|&n| n <= limit);
            }
            // ln T(n+1) = n ln(1-p): smallest integer n with n ln(1-p) <= level.
            let n = ((level / (-p).ln_1p()).ceil() as u64).max(m + 1);
            return Some(n).filter(|&n| n <= limit);
        }
        let cache = self.tail_cache(dir);
        cache.ensure_until_level(self, dir, level, limit.saturating_add(1));
        {
            let st = cache.state.read().unwrap();
            let len = st.logtail.len();
            let lo_idx = ((m + 1) as usize).min(len);
            let idx = gallop_below(&st.logtail, lo_idx, level);
            if idx < len {
                return Some(idx as u64).filter(|&n| n <= limit);
            }
            if let Some(k) = st.first_unit {
                let n = k.max(m + 1);
                return Some(n).filter(|&n| n <= limit);
            }
            if len as u64 > limit {
                return None;
            }
        }
        if let Some(h) = harmonic_anchor(self, dir) {
            if h.log_tail(limit.saturating_add(1)) > level {
                return None;
            }
            let mut lo = (cache.dense_len() as u64).max(m + 1);
            let mut hi = limit;
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if h.log_tail(mid + 1) <= level {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            return Some(lo).filter(|&n| n <= limit);
        }
        cache.scan_level(self, dir, level, m + 1, limit)
    }
}

/// First index >= lo_idx where the nonincreasing array drops to `level`
/// or below (array length if none). Exponential search from the front:
/// run-length draws concentrate at small n, so probing near lo_idx first
/// keeps the hot path in cache.
fn gallop_below(arr: &[f64], lo_idx: usize, level: f64) -> usize {
    let len = arr.len();
    if lo_idx >= len || arr[lo_idx] <= level {
        return lo_idx.min(len);
    }
    let mut lo = lo_idx;
    let mut span = 1usize;
    let mut hi = len;
    while lo + span < len {
        let probe = lo + span;
        if arr[probe] > level {
            lo = probe;
            span <<= 1;
        } else {
            hi = probe;
            break;
        }
    }
    // arr[lo] > level and either hi == len or arr[hi] <= level.
    lo + 1 + arr[lo + 1..hi].partition_point(|&x| x > level)
}

struct MeanScan {
    outcome: ScanOutcome,
    theta: f64,
    growth: f64,
    tail_bound_ok: bool,
    rule: String,
}

enum ScanOutcome {
    Completed,
    Converged,
    ForcedStop,
    OutOfTime,
}
