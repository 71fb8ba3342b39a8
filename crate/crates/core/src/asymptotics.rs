//! Orders of growth for iterated-log scale sequences.
//!
//! The analytic machinery in this crate runs on one representation: a
//! sequence f(n) is described by a signed exponent vector s with
//!
//! ```text
//!   f(n) = n^{s_0} (log n)^{s_1} (log log n)^{s_2} ... up to slowly
//!   varying corrections of every deeper level
//! ```
//!
//! Missing entries are zero. On this scale the crate decides mean
//! finiteness, truncated-mean growth, and convergence of the
//! recurrence/transience series, all by lexicographic comparison against
//! the all-(-1) boundary: sum_n n^{-1}(log n)^{-1}...(log_[j] n)^{-1}
//! diverges for every j.

use crate::transitions::{BoundarySide, Direction, Family, ModelSpec};
use crate::perturb::{NoiseSpec, PerturbSeq};

/// log_[depth](n): depth-fold iterated natural logarithm; depth 0 is n.
pub fn log_iter(n: f64, depth: u32) -> f64 {
    let mut x = n;
    for _ in 0..depth {
        x = x.ln();
    }
    x
}

/// Smallest n with log_[j](n) > 1 for every j <= depth. Saturates at
/// u64::MAX once the tower exceeds the integer range.
pub fn n_start(depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    let mut t = 1.0f64;
    for _ in 0..depth {
        t = t.exp();
        if t > 1e18 {
            return u64::MAX;
        }
    }
    let mut n = t.floor() as u64 + 1;
    // A couple of float-safety nudges near the threshold.
    while log_iter(n as f64, depth) <= 1.0 {
        n += 1;
    }
    while n > 2 && log_iter((n - 1) as f64, depth) > 1.0 {
        n -= 1;
    }
    n
}

/// Trim trailing zeros so vectors compare by content, not padding.
fn trimmed(mut v: Vec<f64>) -> Vec<f64> {
    while v.last() == Some(&0.0) {
        v.pop();
    }
    v
}

/// Entry-wise sum of exponent vectors (product of the sequences).
pub(crate) fn vec_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().max(b.len());
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        out.push(a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0));
    }
    trimmed(out)
}

pub(crate) fn vec_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().max(b.len());
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        out.push(a.get(i).copied().unwrap_or(0.0) - b.get(i).copied().unwrap_or(0.0));
    }
    trimmed(out)
}

fn negated(a: &[f64]) -> Vec<f64> {
    trimmed(a.iter().map(|v| -v).collect())
}

/// Does sum_n f(n) diverge, for f with exponent vector s?
///
/// Walk the entries: at the first s_j != -1, the sum diverges iff
/// s_j > -1. If every entry equals -1 the sum is a deeper iterated-log
/// and still diverges.
pub(crate) fn series_diverges(s: &[f64]) -> bool {
    for &e in s {
        if e != -1.0 {
            return e > -1.0;
        }
    }
    true
}

/// Order of the partial sums Theta(n) = sum_{k<=n} f(k) for decaying f.
pub(crate) enum PartialSumOrder {
    /// The series converges: partial sums are bounded.
    Bounded,
    /// Partial sums grow like the returned exponent vector
    /// (an extra level means log_[level] growth).
    Grows(Vec<f64>),
}

pub(crate) fn partial_sum_order(s: &[f64]) -> PartialSumOrder {
    for (j, &e) in s.iter().enumerate() {
        if e != -1.0 {
            if e < -1.0 {
                return PartialSumOrder::Bounded;
            }
            // Integrate: one more power at level j, deeper levels copied.
            let mut out = vec![0.0; j];
            out.push(e + 1.0);
            out.extend_from_slice(&s[j + 1..]);
            return PartialSumOrder::Grows(trimmed(out));
        }
    }
    // All entries -1: the sum is the next iterated log.
    let mut out = vec![0.0; s.len()];
    out.push(1.0);
    PartialSumOrder::Grows(out)
}

/// Is sum_n f(n) finite, for a TAIL sequence written with decay exponents
/// t (T(n) = n^{-t_0} (log n)^{-t_1} ...)? Finite iff the first non-unit
/// entry exceeds 1.
pub(crate) fn tail_mean_finite(t: &[f64]) -> bool {
    for &e in t {
        if e != 1.0 {
            return e > 1.0;
        }
    }
    false
}

/// Per-direction coefficient vector (c_0, c_1, ..., c_p) when the family's
/// switch probability is (eventually, up to clamps and freezes)
/// c_0/n + c_1/(n log n) + ... + c_p/(n log n ... log_[p] n).
///
/// For admissible families of this shape the run-length tail obeys
/// T(n) = n^{-c_0} (log n)^{-c_1} ... up to slowly varying corrections, so
/// the same vector doubles as the tail decay vector.
pub(crate) fn alpha_coeffs(spec: &ModelSpec, dir: Direction) -> Option<Vec<f64>> {
    match &spec.family {
        Family::Harmonic { lambda_up, lambda_down } => {
            let l = match dir {
                Direction::Up => *lambda_up,
                Direction::Down => *lambda_down,
            };
            Some(vec![l])
        }
        Family::LogFamily { lambdas_up, lambdas_down } => {
            let ls = match dir {
                Direction::Up => lambdas_up,
                Direction::Down => lambdas_down,
            };
            Some(ls.clone())
        }
        Family::Boundary { side, depth } => Some(boundary_coeffs(*side, *depth)),
        Family::BoundaryPerturbed { side, depth, c, perturbed } => {
            let mut v = boundary_coeffs(*side, *depth);
            if dir == *perturbed {
                let extra = match side {
                    BoundarySide::Upper => depth + 2,
                    BoundarySide::Lower => depth + 1,
                } as usize;
                if v.len() <= extra {
                    v.resize(extra + 1, 0.0);
                }
                v[extra] += c;
            }
            Some(trimmed(v))
        }
        Family::Perturbed { base, gamma_up, gamma_down } => {
            let gamma = match dir {
                Direction::Up => gamma_up,
                Direction::Down => gamma_down,
            };
            gamma_adjusted(alpha_coeffs(base, dir)?, gamma)
        }
        Family::RandomEnv { mean, noise_up, noise_down, .. } => {
            let noise = match dir {
                Direction::Up => noise_up,
                Direction::Down => noise_down,
            };
            noise_kept(alpha_coeffs(mean, dir)?, mean, noise, dir)
        }
        // Finitely many replaced values shift tails by a constant factor.
        Family::Overlay { base, .. } => alpha_coeffs(base, dir),
        Family::Constant { .. }
        | Family::Tabulated { .. }
        | Family::PrimeLacunar { .. }
        | Family::RandomLacunar { .. } => None,
    }
}

/// Exponent vector after adding a perturbation gamma to the switch rate.
/// Tabulated and square-summable alternating terms leave orders alone; a
/// log-scale term adds its coefficient at the matching depth.
fn gamma_adjusted(base: Vec<f64>, gamma: &PerturbSeq) -> Option<Vec<f64>> {
    match gamma {
        PerturbSeq::Zero | PerturbSeq::Tabulated { .. } => Some(base),
        PerturbSeq::LogTerm { c, depth } => {
            let mut v = base;
            let d = *depth as usize;
            if v.len() <= d {
                v.resize(d + 1, 0.0);
            }
            v[d] += c;
            Some(trimmed(v))
        }
        PerturbSeq::Alternating { power, .. } if *power > 0.5 => Some(base),
        PerturbSeq::Alternating { .. } => None,
    }
}

/// A realized environment with summable relative variance keeps the mean
/// model's orders (the log-tail correction converges a.s.).
fn noise_kept(
    base: Vec<f64>,
    mean: &ModelSpec,
    noise: &NoiseSpec,
    dir: Direction,
) -> Option<Vec<f64>> {
    match noise {
        NoiseSpec::None => Some(base),
        NoiseSpec::RelativeUniform { .. } => {
            if variance_summable(mean, dir) == Some(true) {
                Some(base)
            } else {
                None
            }
        }
    }
}

fn boundary_coeffs(side: BoundarySide, depth: u32) -> Vec<f64> {
    match side {
        BoundarySide::Lower => {
            let mut v = vec![0.0; depth as usize];
            v.push(1.0);
            v
        }
        BoundarySide::Upper => vec![1.0; depth as usize + 1],
    }
}

/// Is the relative-noise variance sum_n alpha_n^2 finite for this mean
/// model? True for every family whose rate decays at least like 1/n.
pub(crate) fn variance_summable(spec: &ModelSpec, dir: Direction) -> Option<bool> {
    match &spec.family {
        Family::Constant { .. } => Some(false),
        Family::Tabulated { alpha_up, alpha_down, extend_up, extend_down } => {
            let (vals, ext) = match dir {
                Direction::Up => (alpha_up, extend_up),
                Direction::Down => (alpha_down, extend_down),
            };
            match ext {
                Extension::Decay { .. } => Some(true),
                Extension::Hold => Some(vals.last().copied() == Some(0.0)),
            }
        }
        Family::PrimeLacunar { .. } | Family::RandomLacunar { .. } => Some(true),
        _ => alpha_coeffs(spec, dir).map(|_| true),
    }
}

use crate::transitions::Extension;

/// Tail decay vector t with T(n) = n^{-t_0} (log n)^{-t_1} ... for the
/// families whose tails live on the iterated-log scale. Entries may be
/// negative (tails heavier than the pure power).
pub(crate) fn tail_decay_vector(spec: &ModelSpec, dir: Direction) -> Option<Vec<f64>> {
    match &spec.family {
        Family::PrimeLacunar { lambda, max_multiple } => {
            match dir {
                Direction::Up => Some(vec![*lambda]),
                Direction::Down => {
                    // Erasing multiples j*p (j <= r) removes about
                    // lambda * H_r * log log n from the switch-rate sum, so
                    // the tail gains a (log n)^{lambda H_r} factor.
                    let h: f64 = (1..=*max_multiple).map(|j| 1.0 / j as f64).sum();
                    Some(trimmed(vec![*lambda, -lambda * h]))
                }
            }
        }
        Family::RandomLacunar { depth, .. } => {
            let mut base = vec![0.0; *depth as usize];
            base.push(1.0);
            match dir {
                Direction::Up => Some(base),
                Direction::Down => {
                    // Erasures remove ~ log_[depth+2] n of rate mass, which
                    // exponentiates to one extra log_[depth+1] factor.
                    base.push(-1.0);
                    Some(base)
                }
            }
        }
        // Wrappers recurse on the tail vector so bases without a pure
        // coefficient form (the lacunar families) keep their orders.
        Family::Perturbed { base, gamma_up, gamma_down } => {
            let gamma = match dir {
                Direction::Up => gamma_up,
                Direction::Down => gamma_down,
            };
            gamma_adjusted(tail_decay_vector(base, dir)?, gamma)
        }
        Family::RandomEnv { mean, noise_up, noise_down, .. } => {
            let noise = match dir {
                Direction::Up => noise_up,
                Direction::Down => noise_down,
            };
            noise_kept(tail_decay_vector(mean, dir)?, mean, noise, dir)
        }
        Family::Overlay { base, .. } => tail_decay_vector(base, dir),
        _ => alpha_coeffs(spec, dir),
    }
}

/// Order of the factor 1 - n T(n) / Theta(n) appearing in the K series.
///
/// The factor tends to a positive constant unless T is slowly varying
/// (t_0 = 0), where it decays like 1/(log n ... log_[j] n) with j the
/// first nonzero decay level.
pub(crate) fn k_factor_vector(tail_decay: &[f64]) -> Option<Vec<f64>> {
    match tail_decay.first() {
        None => None, // constant tail: inadmissible shape, no verdict
        Some(&t0) if t0 == 0.0 => {
            let j = tail_decay.iter().position(|&e| e != 0.0)?;
            let mut v = vec![0.0];
            v.extend(std::iter::repeat(-1.0).take(j));
            Some(v)
        }
        Some(_) => Some(vec![]),
    }
}

/// Analytic status of the Erickson-type series for the ordered pair
/// (l1 | l2): Some(true) = divergent, Some(false) = convergent, None when
/// the model has no usable exponent vectors.
///
/// Uses the K form: term = factor(l2) * T_{l1}(n) / Theta_{l2}(n), whose
/// order is insensitive to irregularities of alpha itself.
pub(crate) fn analytic_series_diverges(
    spec: &ModelSpec,
    l1: Direction,
    l2: Direction,
) -> Option<bool> {
    if matches!(spec.family, Family::Constant { .. }) {
        // Geometric tails: every series term is exponentially small.
        return Some(false);
    }
    let t1 = tail_decay_vector(spec, l1)?;
    let t2 = tail_decay_vector(spec, l2)?;
    let tail1 = negated(&t1);
    let theta2 = match partial_sum_order(&negated(&t2)) {
        PartialSumOrder::Bounded => vec![], // finite truncated mean: constant order
        PartialSumOrder::Grows(v) => v,
    };
    let factor2 = k_factor_vector(&t2)?;
    let term = vec_sub(&vec_add(&factor2, &tail1), &theta2);
    Some(series_diverges(&term))
}

/// Analytic mean finiteness via the tail decay vector, when available.
pub(crate) fn analytic_mean_finite(spec: &ModelSpec, dir: Direction) -> Option<bool> {
    if let Family::Constant { p_up, p_down } = spec.family {
        let p = match dir {
            Direction::Up => p_up,
            Direction::Down => p_down,
        };
        // Geometric tails sum to 1/p; p = 0 never switches at all.
        return Some(p > 0.0);
    }
    tail_decay_vector(spec, dir).map(|t| tail_mean_finite(&t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transitions::ModelSpec;

    #[test]
    fn n_start_values() {
        assert_eq!(n_start(0), 1);
        assert_eq!(n_start(1), 3);
        assert_eq!(n_start(2), 16);
        let n3 = n_start(3);
        assert!(log_iter(n3 as f64, 3) > 1.0);
        assert!(log_iter((n3 - 1) as f64, 3) <= 1.0);
        assert_eq!(n_start(4), u64::MAX);
    }

    #[test]
    fn series_rule_on_known_cases() {
        assert!(series_diverges(&[-0.5])); // sum n^-1/2
        assert!(!series_diverges(&[-1.5])); // sum n^-3/2
        assert!(series_diverges(&[-1.0])); // harmonic
        assert!(series_diverges(&[-1.0, -1.0])); // 1/(n log n)
        assert!(!series_diverges(&[-1.0, -2.0])); // 1/(n log^2 n)
        assert!(series_diverges(&[-1.0, -0.5])); // 1/(n sqrt(log n))
        // First non-(-1) entry decides even with deeper junk after it.
        assert!(series_diverges(&[-1.0, -0.5, -9.0]));
        assert!(!series_diverges(&[-1.0, -2.0, 5.0]));
        // n^-1/2 (log n)^-2 still diverges: power term dominates.
        assert!(series_diverges(&[-0.5, -2.0]));
    }

    #[test]
    fn partial_sums_integrate_one_level() {
        match partial_sum_order(&[-0.5]) {
            PartialSumOrder::Grows(v) => assert_eq!(v, vec![0.5]),
            _ => panic!(),
        }
        match partial_sum_order(&[-1.0]) {
            PartialSumOrder::Grows(v) => assert_eq!(v, vec![0.0, 1.0]),
            _ => panic!(),
        }
        match partial_sum_order(&[-1.0, 0.0, -2.0]) {
            PartialSumOrder::Grows(v) => assert_eq!(v, vec![0.0, 1.0, -2.0]),
            _ => panic!(),
        }
        assert!(matches!(partial_sum_order(&[-1.5]), PartialSumOrder::Bounded));
        assert!(matches!(partial_sum_order(&[-1.0, -1.5]), PartialSumOrder::Bounded));
    }

    #[test]
    fn mean_rule_matches_examples() {
        assert!(!tail_mean_finite(&[0.5]));
        assert!(tail_mean_finite(&[1.5]));
        assert!(!tail_mean_finite(&[1.0, 1.0]));
        assert!(tail_mean_finite(&[1.0, 2.0]));
        assert!(!tail_mean_finite(&[1.0, 0.5]));
        assert!(!tail_mean_finite(&[1.0]));
    }

    fn harmonic_spec(lu: f64, ld: f64) -> ModelSpec {
        ModelSpec::new(Family::Harmonic { lambda_up: lu, lambda_down: ld })
    }

    #[test]
    fn harmonic_series_verdicts() {
        // Symmetric: both ordered pairs diverge (recurrent pattern).
        let sym = harmonic_spec(0.5, 0.5);
        assert_eq!(analytic_series_diverges(&sym, Direction::Up, Direction::Down), Some(true));
        assert_eq!(analytic_series_diverges(&sym, Direction::Down, Direction::Up), Some(true));
        // lambda_u < lambda_d: up-tails heavier, walk escapes upward:
        // (u|d) diverges, (d|u) converges.
        let asym = harmonic_spec(0.3, 0.6);
        assert_eq!(analytic_series_diverges(&asym, Direction::Up, Direction::Down), Some(true));
        assert_eq!(analytic_series_diverges(&asym, Direction::Down, Direction::Up), Some(false));
    }

    #[test]
    fn boundary_perturbed_window() {
        // Upper side, depth 0: the correction sits two log levels down and
        // the walk stays recurrent exactly for |c| <= 1.
        for (c, expect_both_infinite) in
            [(0.0, true), (1.0, true), (-1.0, true), (2.0, false), (-2.0, false)]
        {
            let spec = ModelSpec::new(Family::BoundaryPerturbed {
                side: BoundarySide::Upper,
                depth: 0,
                c,
                perturbed: Direction::Down,
            });
            let ud = analytic_series_diverges(&spec, Direction::Up, Direction::Down).unwrap();
            let du = analytic_series_diverges(&spec, Direction::Down, Direction::Up).unwrap();
            assert_eq!(ud && du, expect_both_infinite, "c = {c}");
        }
    }

    #[test]
    fn prime_lacunar_vectors() {
        let spec = ModelSpec::new(Family::PrimeLacunar { lambda: 0.8, max_multiple: 2 });
        assert_eq!(tail_decay_vector(&spec, Direction::Up), Some(vec![0.8]));
        let down = tail_decay_vector(&spec, Direction::Down).unwrap();
        assert_eq!(down.len(), 2);
        assert!((down[1] + 0.8 * 1.5).abs() < 1e-12);
        // lambda H_r = 1.2 > 1: (u|d) converges, (d|u) diverges.
        assert_eq!(analytic_series_diverges(&spec, Direction::Up, Direction::Down), Some(false));
        assert_eq!(analytic_series_diverges(&spec, Direction::Down, Direction::Up), Some(true));
    }

    #[test]
    fn k_factor_orders() {
        // Power-decaying tail: constant factor.
        assert_eq!(k_factor_vector(&[0.5]).unwrap(), Vec::<f64>::new());
        // Slowly varying tail (log n)^-1: factor decays like 1/log n.
        assert_eq!(k_factor_vector(&[0.0, 1.0]).unwrap(), vec![0.0, -1.0]);
        assert_eq!(k_factor_vector(&[0.0, 0.0, 1.0]).unwrap(), vec![0.0, -1.0, -1.0]);
    }

    #[test]
    fn wrappers_keep_lacunar_tail_orders() {
        let base = ModelSpec::new(Family::PrimeLacunar { lambda: 0.8, max_multiple: 2 });
        let base_up = tail_decay_vector(&base, Direction::Up).unwrap();
        let base_down = tail_decay_vector(&base, Direction::Down).unwrap();

        // Bounded-support perturbation: orders untouched.
        let perturbed = ModelSpec::new(Family::Perturbed {
            base: Box::new(base.clone()),
            gamma_up: PerturbSeq::Tabulated { values: vec![0.05, -0.02] },
            gamma_down: PerturbSeq::Zero,
        });
        assert_eq!(tail_decay_vector(&perturbed, Direction::Up), Some(base_up.clone()));
        assert_eq!(tail_decay_vector(&perturbed, Direction::Down), Some(base_down.clone()));
        assert_eq!(
            analytic_series_diverges(&perturbed, Direction::Up, Direction::Down),
            Some(false)
        );
        assert_eq!(
            analytic_series_diverges(&perturbed, Direction::Down, Direction::Up),
            Some(true)
        );

        // Relative noise over a summable-variance mean: orders untouched.
        let noisy = ModelSpec::new(Family::RandomEnv {
            mean: Box::new(base.clone()),
            noise_up: NoiseSpec::RelativeUniform { delta: 0.2 },
            noise_down: NoiseSpec::RelativeUniform { delta: 0.2 },
            seed: 7,
        });
        assert_eq!(variance_summable(&base, Direction::Up), Some(true));
        assert_eq!(tail_decay_vector(&noisy, Direction::Up), Some(base_up));
        assert_eq!(tail_decay_vector(&noisy, Direction::Down), Some(base_down));

        // Noise over a constant mean has non-summable variance: no verdict.
        let flat = ModelSpec::new(Family::Constant { p_up: 0.5, p_down: 0.5 });
        let noisy_flat = ModelSpec::new(Family::RandomEnv {
            mean: Box::new(flat),
            noise_up: NoiseSpec::RelativeUniform { delta: 0.2 },
            noise_down: NoiseSpec::None,
            seed: 7,
        });
        assert_eq!(tail_decay_vector(&noisy_flat, Direction::Up), None);
    }
}
