//! Exact small-horizon laws by dynamic programming.
//!
//! The walk's state (position, direction, current run length) is Markov, so
//! the exact law of S_n follows from forward evolution over a dense state
//! array. Cost is O(n^3) time and O(n^2) memory, which is why the horizon
//! is capped; these laws are the ground truth the Monte Carlo engine and
//! the classifier are checked against.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::transitions::{Direction, TransitionModel};

/// An exact finite-horizon distribution over integer values.
#[derive(Clone, Debug, Serialize)]
pub struct ExactDistribution {
    /// Steps for walk laws, pairs for skeleton laws.
    pub horizon: u64,
    pub pmf: BTreeMap<i64, f64>,
    /// Total mass kept: 1 unless a run-length truncation applies.
    pub retained_mass: f64,
}

impl ExactDistribution {
    pub fn mean(&self) -> f64 {
        self.pmf.iter().map(|(x, p)| *x as f64 * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.pmf.values().sum()
    }
}

/// Half the L1 distance between two pmfs over the union of supports.
pub fn total_variation(a: &BTreeMap<i64, f64>, b: &BTreeMap<i64, f64>) -> f64 {
    let mut tv = 0.0;
    for (x, p) in a {
        tv += (p - b.get(x).copied().unwrap_or(0.0)).abs();
    }
    for (x, q) in b {
        if !a.contains_key(x) {
            tv += q;
        }
    }
    tv / 2.0
}

pub const MAX_HORIZON: u64 = 500;

fn check_horizon(n: u64) -> Result<()> {
    if n == 0 || n > MAX_HORIZON {
        return Err(Error::HorizonTooLarge { requested: n, max: MAX_HORIZON });
    }
    Ok(())
}

/// Forward evolution of (position, direction, run length) for n steps.
/// Position is stored re-based: slot j at time t holds position 2j - t.
/// With `absorb_at_zero` any mass reaching the origin is pulled out of the
/// evolution and accumulated (first-return bookkeeping).
fn forward(model: &TransitionModel, n: u64, absorb_at_zero: bool) -> (Vec<f64>, f64) {
    let n = n as usize;
    let a_up: Vec<f64> = (1..=n as u64).map(|k| model.alpha(Direction::Up, k)).collect();
    let a_down: Vec<f64> = (1..=n as u64).map(|k| model.alpha(Direction::Down, k)).collect();
    // Layout at time t: state[(d * t + (k - 1)) * (t + 1) + j], d: Up=0/Down=1.
    let mut cur = vec![0.0f64; 2 * 2];
    cur[(1 + 0) * 2 + 0] = 1.0; // S_1 = -1, moving down, run length 1
    let mut absorbed = 0.0f64;
    for t in 1..n {
        let width = t + 2;
        let mut next = vec![0.0f64; 2 * (t + 1) * width];
        for d in 0..2 {
            let alphas = if d == 0 { &a_up } else { &a_down };
            for k in 1..=t {
                let a = alphas[k - 1];
                let row = (d * t + (k - 1)) * (t + 1);
                for j in 0..=t {
                    let p = cur[row + j];
                    if p == 0.0 {
                        continue;
                    }
                    // An up-step maps slot j to j+1, a down-step to j.
                    let (j_switch, j_keep) = if d == 0 { (j, j + 1) } else { (j + 1, j) };
                    let p_switch = p * a;
                    let p_keep = p - p_switch;
                    if p_switch > 0.0 {
                        let pos = 2 * j_switch as i64 - (t as i64 + 1);
                        if absorb_at_zero && pos == 0 {
                            absorbed += p_switch;
                        } else {
                            next[((1 - d) * (t + 1)) * width + j_switch] += p_switch;
                        }
                    }
                    if p_keep > 0.0 {
                        let pos = 2 * j_keep as i64 - (t as i64 + 1);
                        if absorb_at_zero && pos == 0 {
                            absorbed += p_keep;
                        } else {
                            next[(d * (t + 1) + k) * width + j_keep] += p_keep;
                        }
                    }
                }
            }
        }
        cur = next;
    }
    // Collapse direction and run length into the position marginal.
    let mut marginal = vec![0.0f64; n + 1];
    let width = n + 1;
    for d in 0..2 {
        for k in 1..=n {
            let row = (d * n + (k - 1)) * width;
            for j in 0..=n {
                marginal[j] += cur[row + j];
            }
        }
    }
    (marginal, absorbed)
}

/// Exact law of S_n under the descent-first start. No truncation happens:
/// runs inside an n-step window are at most n long.
pub fn exact_pmf(model: &TransitionModel, n: u64) -> Result<ExactDistribution> {
    check_horizon(n)?;
    let (marginal, _) = forward(model, n, false);
    let mut pmf = BTreeMap::new();
    for (j, p) in marginal.iter().enumerate() {
        if *p > 0.0 {
            pmf.insert(2 * j as i64 - n as i64, *p);
        }
    }
    Ok(ExactDistribution { horizon: n, pmf, retained_mass: 1.0 })
}

/// E[S_n], exactly.
pub fn exact_mean(model: &TransitionModel, n: u64) -> Result<f64> {
    Ok(exact_pmf(model, n)?.mean())
}

/// P(S_k = 0 for some k in [1, n]): the walk returns to the origin within
/// the horizon. Mass is absorbed at its first return.
pub fn exact_return_prob(model: &TransitionModel, n: u64) -> Result<f64> {
    check_horizon(n)?;
    let (_, absorbed) = forward(model, n, true);
    Ok(absorbed)
}

const SKELETON_BUDGET: u64 = 100_000;

/// Exact law of the pair skeleton M_pairs with each run truncated at
/// `run_cap`. The discarded tail mass is reported, never renormalized:
/// the pmf sums to retained_mass, not 1.
pub fn exact_skeleton_pmf(
    model: &TransitionModel,
    pairs: u64,
    run_cap: u64,
) -> Result<ExactDistribution> {
    if pairs == 0 || run_cap == 0 {
        return Err(Error::Config("pairs and run_cap must be at least 1".into()));
    }
    if pairs.saturating_mul(run_cap) > SKELETON_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "pairs * run_cap = {} exceeds the skeleton state budget {SKELETON_BUDGET}",
            pairs.saturating_mul(run_cap)
        )));
    }
    let cap = run_cap as usize;
    let law = |dir: Direction| -> Vec<f64> {
        (1..=cap as u64).map(|j| model.tail(dir, j) - model.tail(dir, j + 1)).collect()
    };
    let law_u = law(Direction::Up);
    let law_d = law(Direction::Down);
    // Law of tau_u - tau_d, shifted by cap-1 so indices start at 0.
    let mut pair = vec![0.0f64; 2 * cap - 1];
    for (ui, pu) in law_u.iter().enumerate() {
        if *pu == 0.0 {
            continue;
        }
        for (di, pd) in law_d.iter().enumerate() {
            pair[ui + (cap - 1) - di] += pu * pd;
        }
    }
    let mut dist = vec![1.0f64];
    for _ in 0..pairs {
        dist = convolve(&dist, &pair);
    }
    let shift = (cap as i64 - 1) * pairs as i64;
    let mut pmf = BTreeMap::new();
    let mut retained = 0.0;
    for (i, p) in dist.iter().enumerate() {
        if *p > 0.0 {
            pmf.insert(i as i64 - shift, *p);
            retained += p;
        }
    }
    Ok(ExactDistribution { horizon: pairs, pmf, retained_mass: retained })
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0f64; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{simulate, SimOptions};

    fn pmf_of(pairs: &[(i64, f64)]) -> BTreeMap<i64, f64> {
        pairs.iter().copied().collect()
    }

    fn assert_pmf_close(got: &BTreeMap<i64, f64>, want: &[(i64, f64)], tol: f64) {
        assert_eq!(got.len(), want.len(), "support size differs: {got:?}");
        for (x, p) in want {
            let q = got.get(x).copied().unwrap_or(f64::NAN);
            assert!(
                ((q - p) / p.abs().max(1e-300)).abs() < tol,
                "pmf({x}) = {q}, expected {p}"
            );
        }
    }

    #[test]
    fn unit_model_is_deterministic() {
        let m = TransitionModel::constant(1.0, 1.0).unwrap();
        let d = exact_pmf(&m, 2).unwrap();
        assert_eq!(d.pmf, pmf_of(&[(0, 1.0)]));
        assert_eq!(exact_mean(&m, 2).unwrap(), 0.0);
        for n in 2..8 {
            assert_eq!(exact_return_prob(&m, n).unwrap(), 1.0);
        }
    }

    #[test]
    fn first_step_is_down() {
        for m in [
            TransitionModel::constant(0.3, 0.8).unwrap(),
            TransitionModel::harmonic(0.5, 0.5).unwrap(),
        ] {
            let d = exact_pmf(&m, 1).unwrap();
            assert_eq!(d.pmf, pmf_of(&[(-1, 1.0)]));
            assert_eq!(exact_mean(&m, 1).unwrap(), -1.0);
            assert_eq!(exact_return_prob(&m, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_step_laws_by_hand() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        let d = exact_pmf(&m, 2).unwrap();
        assert_eq!(d.pmf, pmf_of(&[(0, 0.5), (-2, 0.5)]));
        assert_eq!(exact_mean(&m, 2).unwrap(), -1.0);
        assert_eq!(exact_return_prob(&m, 2).unwrap(), 0.5);
    }

    #[test]
    fn frozen_eight_step_pmf_asymmetric_constant() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        let d = exact_pmf(&m, 8).unwrap();
        assert_pmf_close(
            &d.pmf,
            &[
                (-8, 0.13348388671875),
                (-6, 0.22247314453125),
                (-4, 0.243896484375),
                (-2, 0.197021484375),
                (0, 0.1220703125),
                (2, 0.0576171875),
                (4, 0.01953125),
                (6, 0.00390625),
            ],
            1e-12,
        );
        let mean = d.mean();
        assert!(((mean + 3.5555419921875) / 3.5555419921875).abs() < 1e-12);
    }

    #[test]
    fn frozen_eight_step_means() {
        let m = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let mean = exact_mean(&m, 8).unwrap();
        assert!(((mean + 1.8466796875) / 1.8466796875).abs() < 1e-12, "got {mean}");

        let m = TransitionModel::harmonic(0.3, 0.6).unwrap();
        let mean = exact_mean(&m, 8).unwrap();
        assert!(((mean - 0.67150852500000013) / 0.67150852500000013).abs() < 1e-12);
    }

    #[test]
    fn frozen_eight_step_pmf_log_family() {
        let m = TransitionModel::log_family(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let d = exact_pmf(&m, 8).unwrap();
        assert_pmf_close(
            &d.pmf,
            &[
                (-8, 0.0107054589095621),
                (-6, 0.0238530818450195),
                (-4, 0.106108755696264),
                (-2, 0.314994522504984),
                (0, 0.356937129561748),
                (2, 0.148717222589274),
                (4, 0.0299860976825278),
                (6, 0.0086977312106198),
            ],
            1e-12,
        );
        let mean = d.mean();
        assert!(((mean + 0.81362100696926265) / 0.81362100696926265).abs() < 1e-12);
    }

    #[test]
    fn frozen_return_probabilities_at_ten() {
        let cases: [(TransitionModel, f64, f64); 5] = [
            (TransitionModel::constant(0.5, 0.5).unwrap(), 0.75390625, 1e-12),
            (TransitionModel::constant(0.5, 0.25).unwrap(), 0.436767578125, 1e-12),
            (TransitionModel::harmonic(0.5, 0.5).unwrap(), 0.648406982421875, 1e-12),
            (TransitionModel::harmonic(0.3, 0.6).unwrap(), 0.7870006712, 1e-9),
            (
                TransitionModel::log_family(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap(),
                0.813964524387265,
                1e-12,
            ),
        ];
        for (m, want, tol) in cases {
            let p = exact_return_prob(&m, 10).unwrap();
            assert!(((p - want) / want).abs() < tol, "got {p}, want {want}");
        }
    }

    #[test]
    fn frozen_thirty_step_means() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        let mean = exact_mean(&m, 30).unwrap();
        assert!(((mean + 10.8888888888889) / 10.8888888888889).abs() < 1e-12);

        let m = TransitionModel::harmonic(0.5, 0.5).unwrap();
        let mean = exact_mean(&m, 30).unwrap();
        assert!(((mean + 3.34032835939105) / 3.34032835939105).abs() < 1e-12);
    }

    #[test]
    fn mass_and_parity_conserved() {
        let models = [
            TransitionModel::constant(0.5, 0.25).unwrap(),
            TransitionModel::harmonic(0.3, 0.6).unwrap(),
            TransitionModel::harmonic(1.7, 0.9).unwrap(),
        ];
        for m in &models {
            for n in [5u64, 12, 25] {
                let d = exact_pmf(m, n).unwrap();
                assert!((d.total_mass() - 1.0).abs() < 1e-12);
                for x in d.pmf.keys() {
                    assert!(x.rem_euclid(2) == (n as i64).rem_euclid(2), "parity at {x}");
                    assert!(*x >= -(n as i64) && *x <= n as i64 - 2);
                }
            }
        }
    }

    #[test]
    fn mean_over_n_trends_toward_drift() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        let drift = -1.0 / 3.0;
        let err = |n: u64| (exact_mean(&m, n).unwrap() / n as f64 - drift).abs();
        let (e1, e2, e3) = (err(20), err(60), err(180));
        assert!(e1 > e2 && e2 > e3, "errors {e1} {e2} {e3} not decreasing");
    }

    #[test]
    fn horizon_limits_enforced() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        assert!(matches!(
            exact_pmf(&m, 0),
            Err(Error::HorizonTooLarge { .. })
        ));
        assert!(matches!(
            exact_pmf(&m, MAX_HORIZON + 1),
            Err(Error::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn skeleton_unit_runs() {
        let m = TransitionModel::constant(1.0, 1.0).unwrap();
        let d = exact_skeleton_pmf(&m, 3, 5).unwrap();
        assert_eq!(d.pmf, pmf_of(&[(0, 1.0)]));
        assert!((d.retained_mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn skeleton_symmetric_pair() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        let d = exact_skeleton_pmf(&m, 1, 40).unwrap();
        assert!((d.mean()).abs() < 1e-12, "mean {}", d.mean());
        for (x, p) in &d.pmf {
            let q = d.pmf.get(&-x).copied().unwrap_or(0.0);
            assert!((p - q).abs() < 1e-15, "asymmetry at {x}");
        }
        assert!(d.retained_mass < 1.0 && d.retained_mass > 1.0 - 1e-10);
    }

    #[test]
    fn skeleton_drift_pair() {
        let m = TransitionModel::constant(0.5, 0.25).unwrap();
        let d = exact_skeleton_pmf(&m, 1, 60).unwrap();
        assert!((d.mean() + 2.0).abs() < 1e-4, "mean {}", d.mean());
    }

    #[test]
    fn skeleton_budget_enforced() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        assert!(matches!(
            exact_skeleton_pmf(&m, 1000, 1000),
            Err(Error::BudgetExceeded(_))
        ));
    }

    #[test]
    fn oracle_matches_monte_carlo_smoke() {
        let m = TransitionModel::constant(0.5, 0.5).unwrap();
        let exact = exact_pmf(&m, 10).unwrap();
        let mut counts: BTreeMap<i64, f64> = BTreeMap::new();
        let reps = 20_000u64;
        for r in 0..reps {
            let s = simulate(&m, 10, 99, r, &SimOptions::default()).unwrap();
            *counts.entry(s.final_position).or_insert(0.0) += 1.0;
        }
        for v in counts.values_mut() {
            *v /= reps as f64;
        }
        let tv = total_variation(&exact.pmf, &counts);
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn total_variation_basics() {
        let a = pmf_of(&[(0, 0.5), (2, 0.5)]);
        let b = pmf_of(&[(0, 0.5), (2, 0.5)]);
        assert_eq!(total_variation(&a, &b), 0.0);
        let c = pmf_of(&[(1, 1.0)]);
        assert!((total_variation(&a, &c) - 1.0).abs() < 1e-15);
    }
}
