//! Seeded Monte Carlo: run-length sampling, full trajectories, skeleton
//! walks, pathwise couplings, and grafted context-tree simulation.
//!
//! Every walk starts with a descent: S_0 = 0 and the first run moves down.
//! Runs then alternate down/up forever. The pair skeleton records
//! (T_k, M_k) = (total time, position) after k completed down-up pairs,
//! so S at time T_k equals M_k.
//!
//! Reproducibility: a master seed and a replica index derive independent
//! per-purpose streams (one per direction, plus extra labels). Replicas
//! never share stream state, so they can run in any order or in parallel.

mod graft;

pub use graft::{
    simulate_grafted, Graft, GraftNode, GraftedTree, LeafCount,
};

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rngutil::{self, StreamLabel};
use crate::tails::TauDraw;
use crate::transitions::{Direction, TransitionModel};

/// What to do when a run-length draw exceeds the cap.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapPolicy {
    /// Abort the replica. Truncating silently would bias statistics that
    /// hinge on rare giant runs, so this is the default.
    Abort,
    /// Clamp the run to the cap and count the clamp in the summary.
    ClampCounted,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SampleConfig {
    pub run_cap: u64,
    pub cap_policy: CapPolicy,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { run_cap: 1_000_000_000, cap_policy: CapPolicy::Abort }
    }
}

/// One sampled run length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunDraw {
    pub tau: u64,
    /// The draw hit the cap and was clamped (ClampCounted only).
    pub capped: bool,
}

enum DrawOutcome {
    Complete { tau: u64, capped: bool },
    /// The run outlives the remaining step budget; only its first
    /// `remaining` steps are ever observed.
    PastHorizon,
}

/// Draw a run length from its inverse CDF at `v`, honoring both the step
/// horizon (when given) and the cap policy.
fn draw_bounded(
    model: &TransitionModel,
    dir: Direction,
    v: f64,
    remaining: Option<u64>,
    cfg: &SampleConfig,
) -> Result<DrawOutcome> {
    let cap = cfg.run_cap.max(1);
    let bound = remaining.unwrap_or(u64::MAX).min(cap);
    match model.inverse_cdf_bounded(dir, v, bound) {
        TauDraw::Within(tau) => Ok(DrawOutcome::Complete { tau, capped: false }),
        TauDraw::Beyond => {
            if remaining.map_or(false, |r| r <= cap) {
                return Ok(DrawOutcome::PastHorizon);
            }
            match cfg.cap_policy {
                CapPolicy::Abort => Err(Error::SampleCapExceeded { cap, direction: dir }),
                CapPolicy::ClampCounted => Ok(DrawOutcome::Complete { tau: cap, capped: true }),
            }
        }
    }
}

/// One run length drawn from the stream. With the Abort policy a draw past
/// the cap is an error; with ClampCounted it comes back clamped and marked.
pub fn sample_run(
    model: &TransitionModel,
    dir: Direction,
    rng: &mut ChaCha12Rng,
    cfg: &SampleConfig,
) -> Result<RunDraw> {
    let v = rngutil::uniform53(rng.next_u64());
    match draw_bounded(model, dir, v, None, cfg)? {
        DrawOutcome::Complete { tau, capped } => Ok(RunDraw { tau, capped }),
        DrawOutcome::PastHorizon => unreachable!("no horizon was given"),
    }
}

/// Statistics of one simulated trajectory. Integer-valued throughout, so
/// equality is exact and determinism is testable bit for bit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrajectorySummary {
    pub steps: u64,
    pub final_position: i64,
    /// S_0..S_steps, stored only on request.
    pub positions: Option<Vec<i64>>,
    /// B_0 = 0 and the end time of every completed run.
    pub breaking_times: Vec<u64>,
    /// Completed run lengths, alternating descent, rise, descent, ...
    pub run_lengths: Vec<u64>,
    /// M_k after each completed down-up pair.
    pub skeleton_m: Vec<i64>,
    /// T_k after each completed down-up pair.
    pub skeleton_t: Vec<u64>,
    pub sign_changes_m: u64,
    pub min_pos: i64,
    pub max_pos: i64,
    /// Times k in [1, steps] with S_k = 0.
    pub returns_to_origin: u64,
    /// Runs clamped at the cap (ClampCounted policy).
    pub capped_runs: u64,
    pub seed: u64,
    pub replica: u64,
}

/// Tracks sign changes of an integer sequence: a change is counted when the
/// sign differs from the last nonzero sign seen. Zeros never count.
#[derive(Clone, Copy, Default)]
struct SignTracker {
    last: i8,
    count: u64,
}

impl SignTracker {
    fn update(&mut self, value: i128) {
        let s = match value {
            v if v > 0 => 1i8,
            v if v < 0 => -1i8,
            _ => return,
        };
        if self.last != 0 && s != self.last {
            self.count += 1;
        }
        self.last = s;
    }
}

/// Streaming trajectory state shared by the run-based and the stepwise
/// (grafted) engines.
struct Walker {
    steps: u64,
    t: u64,
    pos: i64,
    min_pos: i64,
    max_pos: i64,
    returns: u64,
    path: Option<Vec<i64>>,
    breaking_times: Vec<u64>,
    run_lengths: Vec<u64>,
    skeleton_m: Vec<i64>,
    skeleton_t: Vec<u64>,
    signs: SignTracker,
    m_acc: i64,
    pending_down: u64,
    capped_runs: u64,
}

impl Walker {
    fn new(steps: u64, store_path: bool) -> Self {
        Walker {
            steps,
            t: 0,
            pos: 0,
            min_pos: 0,
            max_pos: 0,
            returns: 0,
            path: store_path.then(|| {
                let mut p = Vec::with_capacity(steps.min(1 << 24) as usize + 1);
                p.push(0i64);
                p
            }),
            breaking_times: vec![0],
            run_lengths: Vec::new(),
            skeleton_m: Vec::new(),
            skeleton_t: Vec::new(),
            signs: SignTracker::default(),
            m_acc: 0,
            pending_down: 0,
            capped_runs: 0,
        }
    }

    /// Advance `len` unit steps in `dir`, updating every streaming statistic.
    fn advance(&mut self, dir: Direction, len: u64) {
        debug_assert!(self.t + len <= self.steps);
        let l = len as i64;
        match dir {
            Direction::Down => {
                // Monotone segment: the origin is hit at most once.
                if self.pos >= 1 && self.pos <= l {
                    self.returns += 1;
                }
                self.pos -= l;
                self.min_pos = self.min_pos.min(self.pos);
            }
            Direction::Up => {
                if self.pos <= -1 && -self.pos <= l {
                    self.returns += 1;
                }
                self.pos += l;
                self.max_pos = self.max_pos.max(self.pos);
            }
        }
        if let Some(p) = &mut self.path {
            let step = dir.step();
            let mut x = *p.last().unwrap();
            for _ in 0..len {
                x += step;
                p.push(x);
            }
        }
        self.t += len;
    }

    /// Record a completed run of length `len` ending at the current time.
    fn complete_run(&mut self, dir: Direction, len: u64, capped: bool) {
        self.run_lengths.push(len);
        self.breaking_times.push(self.t);
        if capped {
            self.capped_runs += 1;
        }
        match dir {
            Direction::Down => self.pending_down = len,
            Direction::Up => {
                self.m_acc += len as i64 - self.pending_down as i64;
                self.skeleton_m.push(self.m_acc);
                self.skeleton_t.push(self.t);
                self.signs.update(self.m_acc as i128);
            }
        }
    }

    fn finish(self, seed: u64, replica: u64) -> TrajectorySummary {
        TrajectorySummary {
            steps: self.steps,
            final_position: self.pos,
            positions: self.path,
            breaking_times: self.breaking_times,
            run_lengths: self.run_lengths,
            skeleton_m: self.skeleton_m,
            skeleton_t: self.skeleton_t,
            sign_changes_m: self.signs.count,
            min_pos: self.min_pos,
            max_pos: self.max_pos,
            returns_to_origin: self.returns,
            capped_runs: self.capped_runs,
            seed,
            replica,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    pub store_path: bool,
    pub sample: SampleConfig,
}

fn check_steps(steps: u64) -> Result<()> {
    if steps == 0 {
        return Err(Error::Config("steps must be at least 1".into()));
    }
    if steps > i64::MAX as u64 {
        return Err(Error::Config("steps must fit a signed position".into()));
    }
    Ok(())
}

/// Simulate `steps` steps of the walk. Work and memory are proportional to
/// the number of runs, not steps, unless the path is stored.
pub fn simulate(
    model: &TransitionModel,
    steps: u64,
    seed: u64,
    replica: u64,
    opts: &SimOptions,
) -> Result<TrajectorySummary> {
    check_steps(steps)?;
    let mut rng_down = rngutil::stream(seed, replica, StreamLabel::RunsDown);
    let mut rng_up = rngutil::stream(seed, replica, StreamLabel::RunsUp);
    let mut w = Walker::new(steps, opts.store_path);
    let mut dir = Direction::Down;
    while w.t < steps {
        let rng = match dir {
            Direction::Down => &mut rng_down,
            Direction::Up => &mut rng_up,
        };
        let v = rngutil::uniform53(rng.next_u64());
        let remaining = steps - w.t;
        match draw_bounded(model, dir, v, Some(remaining), &opts.sample)? {
            DrawOutcome::PastHorizon => {
                w.advance(dir, remaining);
                break;
            }
            DrawOutcome::Complete { tau, capped } => {
                w.advance(dir, tau);
                w.complete_run(dir, tau, capped);
                dir = dir.flip();
            }
        }
    }
    Ok(w.finish(seed, replica))
}

/// Skeleton path statistics. Wide integers because standalone skeletons can
/// take run-cap-sized jumps for many pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SkeletonSummary {
    /// Number of increments (down-up pairs, or randomized draws).
    pub increments: u64,
    pub final_m: i128,
    pub sign_changes: u64,
    pub min_m: i128,
    pub max_m: i128,
    /// M_1..M_n when stored.
    pub m_path: Option<Vec<i128>>,
    /// T_1..T_n when stored (pair skeleton only).
    pub t_path: Option<Vec<u128>>,
    pub capped_runs: u64,
    pub seed: u64,
    pub replica: u64,
}

struct SkeletonAcc {
    m: i128,
    t: u128,
    min_m: i128,
    max_m: i128,
    signs: SignTracker,
    m_path: Option<Vec<i128>>,
    t_path: Option<Vec<u128>>,
    capped: u64,
}

impl SkeletonAcc {
    fn new(store: bool, with_t: bool) -> Self {
        SkeletonAcc {
            m: 0,
            t: 0,
            min_m: 0,
            max_m: 0,
            signs: SignTracker::default(),
            m_path: store.then(Vec::new),
            t_path: (store && with_t).then(Vec::new),
            capped: 0,
        }
    }

    fn push(&mut self, dm: i128, dt: u128) {
        self.m += dm;
        self.t += dt;
        self.min_m = self.min_m.min(self.m);
        self.max_m = self.max_m.max(self.m);
        self.signs.update(self.m);
        if let Some(p) = &mut self.m_path {
            p.push(self.m);
        }
        if let Some(p) = &mut self.t_path {
            p.push(self.t);
        }
    }

    fn finish(self, increments: u64, seed: u64, replica: u64) -> SkeletonSummary {
        SkeletonSummary {
            increments,
            final_m: self.m,
            sign_changes: self.signs.count,
            min_m: self.min_m,
            max_m: self.max_m,
            m_path: self.m_path,
            t_path: self.t_path,
            capped_runs: self.capped,
            seed,
            replica,
        }
    }
}

/// The walk watched at down-up breaking times: `pairs` increments of
/// M_k = M_{k-1} + tau_k^u - tau_k^d. Uses the same streams as `simulate`,
/// so the two agree pair for pair under one (seed, replica).
pub fn skeleton(
    model: &TransitionModel,
    pairs: u64,
    seed: u64,
    replica: u64,
    cfg: &SampleConfig,
    store: bool,
) -> Result<SkeletonSummary> {
    if pairs == 0 {
        return Err(Error::Config("pairs must be at least 1".into()));
    }
    let mut rng_down = rngutil::stream(seed, replica, StreamLabel::RunsDown);
    let mut rng_up = rngutil::stream(seed, replica, StreamLabel::RunsUp);
    let mut acc = SkeletonAcc::new(store, true);
    for _ in 0..pairs {
        let d = sample_run(model, Direction::Down, &mut rng_down, cfg)?;
        let u = sample_run(model, Direction::Up, &mut rng_up, cfg)?;
        acc.capped += d.capped as u64 + u.capped as u64;
        acc.push(u.tau as i128 - d.tau as i128, d.tau as u128 + u.tau as u128);
    }
    Ok(acc.finish(pairs, seed, replica))
}

/// Coin-flipped skeleton: each increment is +tau^u with probability p and
/// -tau^d otherwise, the coin independent of the run lengths. Only the
/// chosen direction's run is drawn, which is legitimate because runs are
/// independent within a direction and never reused.
pub fn randomized_skeleton(
    model: &TransitionModel,
    p: f64,
    increments: u64,
    seed: u64,
    replica: u64,
    cfg: &SampleConfig,
    store: bool,
) -> Result<SkeletonSummary> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Config(format!("coin probability must lie in (0, 1), got {p}")));
    }
    if increments == 0 {
        return Err(Error::Config("increments must be at least 1".into()));
    }
    let mut rng_coin = rngutil::stream(seed, replica, StreamLabel::Randomizer);
    let mut rng_down = rngutil::stream(seed, replica, StreamLabel::RunsDown);
    let mut rng_up = rngutil::stream(seed, replica, StreamLabel::RunsUp);
    let mut acc = SkeletonAcc::new(store, false);
    for _ in 0..increments {
        let xi = rngutil::uniform53(rng_coin.next_u64()) < p;
        let (dir, rng) = if xi {
            (Direction::Up, &mut rng_up)
        } else {
            (Direction::Down, &mut rng_down)
        };
        let draw = sample_run(model, dir, rng, cfg)?;
        acc.capped += draw.capped as u64;
        let tau = draw.tau as i128;
        acc.push(if xi { tau } else { -tau }, 0);
    }
    Ok(acc.finish(increments, seed, replica))
}

/// Outcome of a monotone coupling check between a walk expected to stay
/// below (`low`) and one expected to stay above (`high`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoupleOutcome {
    pub steps: u64,
    /// Steps n in [1, steps] with S^low_n > S^high_n.
    pub violations: u64,
    pub first_violation: Option<u64>,
    pub final_low: i64,
    pub final_high: i64,
    /// Minimum of S^high_n - S^low_n over n in [1, steps].
    pub min_gap: i64,
    pub seed: u64,
    pub replica: u64,
}

const COUPLE_TAG: u64 = 0x636f75706c653031;

struct CoupledWalk<'m> {
    model: &'m TransitionModel,
    pos: i64,
    dir: Direction,
    /// Steps left in the current run; 0 means a new run must start.
    rem: u64,
    /// Completed run starts per direction, indexing the shared uniforms.
    counts: [u64; 2],
    /// Horizon reached mid-run: no further run starts.
    censored: bool,
}

impl<'m> CoupledWalk<'m> {
    fn new(model: &'m TransitionModel) -> Self {
        CoupledWalk { model, pos: 0, dir: Direction::Up, rem: 0, counts: [0, 0], censored: false }
    }

    /// Start the next run using the shared per-direction indexed uniforms.
    fn start_run(&mut self, base: u64, remaining: u64, cfg: &SampleConfig) -> Result<()> {
        debug_assert!(self.rem == 0 && !self.censored);
        let dir = self.dir.flip();
        let label = match dir {
            Direction::Up => StreamLabel::RunsUp,
            Direction::Down => StreamLabel::RunsDown,
        };
        let k = self.counts[dir.index()];
        self.counts[dir.index()] += 1;
        let v = rngutil::indexed_uniform(base, label, k);
        self.dir = dir;
        match draw_bounded(self.model, dir, v, Some(remaining), cfg)? {
            DrawOutcome::Complete { tau, .. } => self.rem = tau,
            DrawOutcome::PastHorizon => {
                self.rem = remaining;
                self.censored = true;
            }
        }
        Ok(())
    }
}

/// Count steps j in [1, dt] where d0 + j*delta < 0, and the first such j.
fn segment_violations(d0: i64, delta: i64, dt: u64) -> (u64, Option<u64>) {
    match delta.cmp(&0) {
        std::cmp::Ordering::Equal => {
            if d0 < 0 {
                (dt, Some(1))
            } else {
                (0, None)
            }
        }
        std::cmp::Ordering::Greater => {
            // Rising difference: violations are an initial stretch.
            if d0 >= 0 {
                return (0, None);
            }
            let j_max = ((-d0 - 1) / delta) as u64;
            let c = j_max.min(dt);
            (c, (c > 0).then_some(1))
        }
        std::cmp::Ordering::Less => {
            // Falling difference: violations are a final stretch.
            let j_min = if d0 < 0 { 1 } else { (d0 / -delta) as u64 + 1 };
            if j_min > dt {
                (0, None)
            } else {
                (dt - j_min + 1, Some(j_min))
            }
        }
    }
}

/// Run two walks off the same per-direction uniform streams (each model
/// applying its own inverse CDF, run index for run index) and check the
/// pathwise order S^low <= S^high at every step.
pub fn couple(
    low: &TransitionModel,
    high: &TransitionModel,
    steps: u64,
    seed: u64,
    replica: u64,
    cfg: &SampleConfig,
) -> Result<CoupleOutcome> {
    check_steps(steps)?;
    let base = rngutil::mix3(seed, replica, COUPLE_TAG);
    let mut a = CoupledWalk::new(low);
    let mut b = CoupledWalk::new(high);
    let mut t = 0u64;
    let mut violations = 0u64;
    let mut first_violation = None;
    let mut min_gap = i64::MAX;
    while t < steps {
        let remaining = steps - t;
        if a.rem == 0 {
            a.start_run(base, remaining, cfg)?;
        }
        if b.rem == 0 {
            b.start_run(base, remaining, cfg)?;
        }
        let dt = remaining.min(a.rem).min(b.rem);
        let d0 = b.pos - a.pos;
        let delta = b.dir.step() - a.dir.step();
        let (viol, first) = segment_violations(d0, delta, dt);
        violations += viol;
        if first_violation.is_none() {
            if let Some(j) = first {
                first_violation = Some(t + j);
            }
        }
        // The difference is linear over the segment, so its minimum sits at
        // an endpoint.
        min_gap = min_gap.min(d0 + delta).min(d0 + delta * dt as i64);
        a.pos += a.dir.step() * dt as i64;
        b.pos += b.dir.step() * dt as i64;
        a.rem -= dt;
        b.rem -= dt;
        t += dt;
    }
    Ok(CoupleOutcome {
        steps,
        violations,
        first_violation,
        final_low: a.pos,
        final_high: b.pos,
        min_gap,
        seed,
        replica,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SimOptions {
        SimOptions { store_path: true, sample: SampleConfig::default() }
    }

    #[test]
    fn unit_runs_alternate() {
        let m = TransitionModel::constant(1.0, 1.0).unwrap();
        let s = simulate(&m, 4, 7, 0, &opts()).unwrap();
        assert_eq!(s.positions.as_deref(), Some(&[0, -1, 0, -1, 0][..]));
        assert_eq!(s.final_position, 0);
        assert_eq!(s.run_lengths, vec![1, 1, 1, 1]);
        assert_eq!(s.breaking_times, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.skeleton_m, vec![0, 0]);
        assert_eq!(s.skeleton_t, vec![2, 4]);
        assert_eq!(s.returns_to_origin, 2);
        assert_eq!(s.min_pos, -1);
        assert_eq!(s.max_pos, 0);
    }

    #[test]
    fn determinism_and_replica_separation() {
        let m = TransitionModel::harmonic(0.7, 0.9).unwrap();
        let a = simulate(&m, 5000, 42, 3, &opts()).unwrap();
        let b = simulate(&m, 5000, 42, 3, &opts()).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, 5000, 42, 4, &opts()).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn streaming_stats_match_stored_path() {
        let m = TransitionModel::harmonic(0.8, 0.9).unwrap();
        let s = simulate(&m, 20_000, 11, 0, &opts()).unwrap();
        let path = s.positions.as_ref().unwrap();
        assert_eq!(path.len() as u64, s.steps + 1);
        assert_eq!(*path.last().unwrap(), s.final_position);
        assert_eq!(path.iter().copied().min().unwrap(), s.min_pos);
        assert_eq!(path.iter().copied().max().unwrap(), s.max_pos);
        let returns = path[1..].iter().filter(|&&x| x == 0).count() as u64;
        assert_eq!(returns, s.returns_to_origin);
        // Runs reproduce the skeleton and the skeleton pins the path.
        let mut m_acc = 0i64;
        let mut t_acc = 0u64;
        let mut ms = Vec::new();
        let mut ts = Vec::new();
        for pair in s.run_lengths.chunks(2) {
            if let [d, u] = pair {
                m_acc += *u as i64 - *d as i64;
                t_acc += d + u;
                ms.push(m_acc);
                ts.push(t_acc);
            }
        }
        assert_eq!(ms, s.skeleton_m);
        assert_eq!(ts, s.skeleton_t);
        for (mk, tk) in s.skeleton_m.iter().zip(&s.skeleton_t) {
            assert_eq!(path[*tk as usize], *mk);
        }
        // Every breaking time is a run boundary of the stored path.
        for w in s.breaking_times.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn drift_shows_in_long_runs() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        let mut total = 0.0;
        for r in 0..8 {
            let s = simulate(&m, 100_000, 5, r, &SimOptions::default()).unwrap();
            total += s.final_position as f64 / s.steps as f64;
        }
        let mean = total / 8.0;
        assert!((mean - (-1.0 / 3.0)).abs() < 0.03, "mean drift {mean}");
    }

    #[test]
    fn skeleton_constant_unit() {
        let m = TransitionModel::constant(1.0, 1.0).unwrap();
        let s = skeleton(&m, 5, 9, 0, &SampleConfig::default(), true).unwrap();
        assert_eq!(s.final_m, 0);
        assert_eq!(s.m_path.as_deref(), Some(&[0, 0, 0, 0, 0][..]));
        assert_eq!(s.t_path.as_deref(), Some(&[2, 4, 6, 8, 10][..]));
    }

    #[test]
    fn skeleton_agrees_with_simulate() {
        let m = TransitionModel::harmonic(0.9, 0.8).unwrap();
        let sim = simulate(&m, 30_000, 77, 2, &SimOptions::default()).unwrap();
        let pairs = sim.skeleton_m.len() as u64;
        assert!(pairs > 0);
        let sk = skeleton(&m, pairs, 77, 2, &SampleConfig::default(), true).unwrap();
        let ms: Vec<i64> = sk.m_path.unwrap().iter().map(|&x| x as i64).collect();
        let ts: Vec<u64> = sk.t_path.unwrap().iter().map(|&x| x as u64).collect();
        assert_eq!(ms, sim.skeleton_m);
        assert_eq!(ts, sim.skeleton_t);
    }

    #[test]
    fn skeleton_drift_estimate() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        let s = skeleton(&m, 100_000, 13, 0, &SampleConfig::default(), false).unwrap();
        // Theta_u - Theta_d = 2 - 4 = -2 per pair.
        let per_pair = s.final_m as f64 / s.increments as f64;
        assert!((per_pair + 2.0).abs() < 0.05, "per-pair drift {per_pair}");
    }

    #[test]
    fn randomized_skeleton_degenerate_coin() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        let s =
            randomized_skeleton(&m, 0.999, 2000, 3, 0, &SampleConfig::default(), true).unwrap();
        let ups = s.m_path.unwrap().windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups >= 1990, "got {ups} positive increments");
        assert!(s.final_m > 0);
    }

    #[test]
    fn randomized_skeleton_balanced_mean() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        let n = 100_000u64;
        let s = randomized_skeleton(&m, 0.5, n, 21, 0, &SampleConfig::default(), false).unwrap();
        // E[Y] = 0, Var[Y] = E[tau^2] = 6: the final value sits well inside
        // a few standard deviations of the sum.
        let sd = (6.0 * n as f64).sqrt();
        assert!((s.final_m as f64).abs() < 6.0 * sd, "final {}", s.final_m);
    }

    #[test]
    fn randomized_skeleton_rejects_degenerate_p() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        for p in [0.0, 1.0, -0.1, 1.1] {
            assert!(matches!(
                randomized_skeleton(&m, p, 10, 0, 0, &SampleConfig::default(), false),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn couple_identical_models() {
        let m = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let c = couple(&m, &m, 20_000, 4, 0, &SampleConfig::default()).unwrap();
        assert_eq!(c.violations, 0);
        assert_eq!(c.min_gap, 0);
        assert_eq!(c.final_low, c.final_high);
    }

    #[test]
    fn couple_dominance_constant() {
        let a = TransitionModel::constant(0.5, 0.5).unwrap();
        let b = TransitionModel::constant(0.25, 0.75).unwrap();
        for r in 0..5 {
            let c = couple(&a, &b, 10_000, 8, r, &SampleConfig::default()).unwrap();
            assert_eq!(c.violations, 0, "replica {r}");
            assert!(c.min_gap >= 0);
        }
    }

    #[test]
    fn couple_dominance_harmonic() {
        let a = TransitionModel::harmonic(0.6, 0.4).unwrap();
        let b = TransitionModel::harmonic(0.4, 0.6).unwrap();
        for r in 0..5 {
            let c = couple(&a, &b, 10_000, 15, r, &SampleConfig::default()).unwrap();
            assert_eq!(c.violations, 0, "replica {r}");
        }
    }

    #[test]
    fn couple_detects_reversed_order() {
        let a = TransitionModel::constant(0.5, 0.5).unwrap();
        let b = TransitionModel::constant(0.25, 0.75).unwrap();
        // Passing the dominating walk as `low` must report violations.
        let c = couple(&b, &a, 10_000, 8, 0, &SampleConfig::default()).unwrap();
        assert!(c.violations > 0);
        assert!(c.first_violation.is_some());
        assert!(c.min_gap < 0);
    }

    #[test]
    fn segment_violation_arithmetic() {
        // Flat difference.
        assert_eq!(segment_violations(-2, 0, 5), (5, Some(1)));
        assert_eq!(segment_violations(0, 0, 5), (0, None));
        // Rising out of violation: D = -5+2j hits -3, -1, 1, ...
        assert_eq!(segment_violations(-5, 2, 10), (2, Some(1)));
        assert_eq!(segment_violations(-4, 2, 10), (1, Some(1)));
        assert_eq!(segment_violations(-4, 2, 1), (1, Some(1)));
        // Falling into violation: D = 4-2j hits 2, 0, -2, ...
        assert_eq!(segment_violations(4, -2, 5), (3, Some(3)));
        assert_eq!(segment_violations(0, -2, 5), (5, Some(1)));
        assert_eq!(segment_violations(4, -2, 2), (0, None));
    }

    #[test]
    fn sample_run_cap_policies() {
        let m = TransitionModel::harmonic(0.2, 0.2).unwrap();
        let abort = SampleConfig { run_cap: 4, cap_policy: CapPolicy::Abort };
        let clamp = SampleConfig { run_cap: 4, cap_policy: CapPolicy::ClampCounted };
        let mut rng = rngutil::stream(1, 0, StreamLabel::RunsUp);
        let mut saw_abort = false;
        for _ in 0..200 {
            if sample_run(&m, Direction::Up, &mut rng, &abort).is_err() {
                saw_abort = true;
                break;
            }
        }
        assert!(saw_abort, "a cap hit was expected within 200 draws");
        let mut rng = rngutil::stream(1, 0, StreamLabel::RunsUp);
        let mut saw_clamp = false;
        for _ in 0..200 {
            let d = sample_run(&m, Direction::Up, &mut rng, &clamp).unwrap();
            assert!(d.tau <= 4);
            saw_clamp |= d.capped;
        }
        assert!(saw_clamp);
    }

    #[test]
    fn sample_run_unit_model() {
        let m = TransitionModel::constant(1.0, 1.0).unwrap();
        let mut rng = rngutil::stream(0, 0, StreamLabel::RunsDown);
        for _ in 0..50 {
            let d = sample_run(&m, Direction::Down, &mut rng, &SampleConfig::default()).unwrap();
            assert_eq!(d.tau, 1);
        }
    }

    #[test]
    fn sample_run_geometric_mean() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        let mut rng = rngutil::stream(6, 0, StreamLabel::RunsUp);
        let n = 200_000u64;
        let mut sum = 0u64;
        for _ in 0..n {
            sum += sample_run(&m, Direction::Up, &mut rng, &SampleConfig::default())
                .unwrap()
                .tau;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 2.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn zero_steps_rejected() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        assert!(matches!(
            simulate(&m, 0, 0, 0, &SimOptions::default()),
            Err(Error::Config(_))
        ));
    }
}
