//! Finite probabilized subtrees grafted onto the comb's leaf contexts.
//!
//! A comb context is "run of length n in direction l". A graft at (l, n)
//! refines that context: instead of one switch probability alpha(l, n),
//! the decision reads further into the past, one letter per tree level,
//! until it lands on a leaf carrying its own Bernoulli switch probability.
//!
//! Only a bounded window of history is kept. Before the walk starts, the
//! (never observed) infinite past is taken to be all up-letters, so early
//! contexts resolve deterministically.

use std::collections::{HashMap, VecDeque};

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rngutil::{self, StreamLabel};
use crate::tails::TauDraw;
use crate::transitions::{AlphaOverride, Direction, Family, ModelSpec, TransitionModel};

use super::{CapPolicy, SimOptions, TrajectorySummary, Walker};

/// A complete binary decision tree over past letters. Every split consumes
/// one letter (the next older one); every leaf holds a switch probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraftNode {
    Leaf { q: f64 },
    Split { up: Box<GraftNode>, down: Box<GraftNode> },
}

impl GraftNode {
    fn depth(&self) -> u64 {
        match self {
            GraftNode::Leaf { .. } => 0,
            GraftNode::Split { up, down } => 1 + up.depth().max(down.depth()),
        }
    }

    /// (min, max) over all leaf probabilities.
    fn q_range(&self) -> (f64, f64) {
        match self {
            GraftNode::Leaf { q } => (*q, *q),
            GraftNode::Split { up, down } => {
                let (a, b) = up.q_range();
                let (c, d) = down.q_range();
                (a.min(c), b.max(d))
            }
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            GraftNode::Leaf { q } => {
                if !q.is_finite() || !(0.0..=1.0).contains(q) {
                    return Err(Error::InvalidModel(format!(
                        "graft leaf probability {q} outside [0, 1]"
                    )));
                }
                if *q >= 1.0 {
                    return Err(Error::InvalidModel(
                        "graft leaf probability must stay below 1 so bounding walks exist"
                            .into(),
                    ));
                }
                Ok(())
            }
            GraftNode::Split { up, down } => {
                up.check()?;
                down.check()
            }
        }
    }
}

/// One subtree attached at the comb context (direction, run_length).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graft {
    pub direction: Direction,
    pub run_length: u64,
    pub subtree: GraftNode,
}

/// A base comb model with finitely many grafted contexts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraftedTree {
    pub base: ModelSpec,
    pub grafts: Vec<Graft>,
}

const MAX_GRAFT_DEPTH: u64 = 64;

impl GraftedTree {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for g in &self.grafts {
            if g.run_length == 0 {
                return Err(Error::ContextUnresolvable(
                    "graft attached at run length 0; contexts start at 1".into(),
                ));
            }
            if seen.insert((g.direction, g.run_length), ()).is_some() {
                return Err(Error::ContextUnresolvable(format!(
                    "two grafts attached at ({}, {})",
                    g.direction, g.run_length
                )));
            }
            if g.subtree.depth() > MAX_GRAFT_DEPTH {
                return Err(Error::ContextUnresolvable(format!(
                    "graft at ({}, {}) deeper than {MAX_GRAFT_DEPTH}",
                    g.direction, g.run_length
                )));
            }
            g.subtree.check()?;
        }
        Ok(())
    }

    /// Letters beyond the current run needed to resolve any context: the
    /// run-initiating letter plus one per split level of the deepest graft.
    pub fn max_extra_depth(&self) -> u64 {
        self.grafts.iter().map(|g| 1 + g.subtree.depth()).max().unwrap_or(0)
    }

    /// The bounding comb walks: `check` switches up-runs as often as any
    /// graft leaf allows and down-runs as rarely (stochastically lowest),
    /// `hat` the reverse. Ungrafted contexts keep the base probabilities.
    pub fn graft_bounds(&self) -> Result<(TransitionModel, TransitionModel)> {
        self.validate()?;
        if self.grafts.is_empty() {
            let check = TransitionModel::from_spec(self.base.clone())?;
            let hat = TransitionModel::from_spec(self.base.clone())?;
            return Ok((check, hat));
        }
        let mut lo = Vec::with_capacity(self.grafts.len());
        let mut hi = Vec::with_capacity(self.grafts.len());
        for g in &self.grafts {
            let (mn, mx) = g.subtree.q_range();
            let (check_v, hat_v) = match g.direction {
                Direction::Up => (mx, mn),
                Direction::Down => (mn, mx),
            };
            lo.push(AlphaOverride { direction: g.direction, n: g.run_length, value: check_v });
            hi.push(AlphaOverride { direction: g.direction, n: g.run_length, value: hat_v });
        }
        let wrap = |overrides: Vec<AlphaOverride>| {
            let mut spec = ModelSpec::new(Family::Overlay {
                base: Box::new(self.base.clone()),
                overrides,
            });
            spec.alpha_inf_up = self.base.alpha_inf_up;
            spec.alpha_inf_down = self.base.alpha_inf_down;
            TransitionModel::from_spec(spec)
        };
        Ok((wrap(lo)?, wrap(hi)?))
    }
}

/// Per-leaf visit and switch counts from one grafted simulation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeafCount {
    pub direction: Direction,
    pub run_length: u64,
    /// Older letters selecting this leaf, nearest first ("" for a bare leaf).
    pub path: String,
    pub q: f64,
    pub visits: u64,
    pub switches: u64,
}

enum FlatNode {
    Leaf(usize),
    Split { up: usize, down: usize },
}

struct CompiledGraft {
    nodes: Vec<FlatNode>,
    root: usize,
    leaves: Vec<(String, f64)>,
}

fn compile(node: &GraftNode) -> CompiledGraft {
    fn build(
        node: &GraftNode,
        path: &mut String,
        nodes: &mut Vec<FlatNode>,
        leaves: &mut Vec<(String, f64)>,
    ) -> usize {
        match node {
            GraftNode::Leaf { q } => {
                leaves.push((path.clone(), *q));
                nodes.push(FlatNode::Leaf(leaves.len() - 1));
                nodes.len() - 1
            }
            GraftNode::Split { up, down } => {
                path.push('u');
                let ui = build(up, path, nodes, leaves);
                path.pop();
                path.push('d');
                let di = build(down, path, nodes, leaves);
                path.pop();
                nodes.push(FlatNode::Split { up: ui, down: di });
                nodes.len() - 1
            }
        }
    }
    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    let mut path = String::new();
    let root = build(node, &mut path, &mut nodes, &mut leaves);
    CompiledGraft { nodes, root, leaves }
}

fn push_letters(past: &mut VecDeque<Direction>, dir: Direction, len: u64, window: usize) {
    for _ in 0..len.min(window as u64) {
        past.push_front(dir);
    }
    past.truncate(window);
}

/// Simulate the grafted walk. With no grafts this is exactly `simulate` on
/// the base model, stream for stream. With grafts the engine steps letter
/// by letter through grafted run lengths and jumps over the ungrafted
/// remainder of each run with one conditional inverse-CDF draw.
pub fn simulate_grafted(
    tree: &GraftedTree,
    steps: u64,
    seed: u64,
    replica: u64,
    opts: &SimOptions,
) -> Result<(TrajectorySummary, Vec<LeafCount>)> {
    tree.validate()?;
    let model = TransitionModel::from_spec(tree.base.clone())?;
    if tree.grafts.is_empty() {
        return Ok((super::simulate(&model, steps, seed, replica, opts)?, Vec::new()));
    }
    super::check_steps(steps)?;

    let compiled: Vec<CompiledGraft> = tree.grafts.iter().map(|g| compile(&g.subtree)).collect();
    let mut stats: Vec<Vec<(u64, u64)>> =
        compiled.iter().map(|c| vec![(0, 0); c.leaves.len()]).collect();
    let mut graft_at: HashMap<(Direction, u64), usize> = HashMap::new();
    let mut max_graft_n = [0u64; 2];
    for (i, g) in tree.grafts.iter().enumerate() {
        graft_at.insert((g.direction, g.run_length), i);
        let slot = &mut max_graft_n[g.direction.index()];
        *slot = (*slot).max(g.run_length);
    }
    let window = tree.max_extra_depth() as usize;
    let mut past: VecDeque<Direction> = VecDeque::with_capacity(window + 1);

    let mut rng_up = rngutil::stream(seed, replica, StreamLabel::RunsUp);
    let mut rng_down = rngutil::stream(seed, replica, StreamLabel::RunsDown);
    let mut w = Walker::new(steps, opts.store_path);

    // The conditioned start: the first letter is a descent, unconditionally.
    let mut dir = Direction::Down;
    let mut n = 1u64;
    w.advance(dir, 1);

    let cap = opts.sample.run_cap.max(1);
    while w.t < steps {
        let beyond_grafts = n > max_graft_n[dir.index()];
        if beyond_grafts && model.log_tail(dir, n) > f64::NEG_INFINITY {
            // No graft can apply for the rest of this run, so its remaining
            // length follows the base law given survival to n.
            let rng = match dir {
                Direction::Up => &mut rng_up,
                Direction::Down => &mut rng_down,
            };
            let v = rngutil::uniform53(rng.next_u64());
            let remaining = steps - w.t;
            let bound = (n + remaining).min(cap).max(n);
            let (tau, capped) = match model.inverse_cdf_from(dir, n - 1, v, bound) {
                TauDraw::Within(tau) => (tau, false),
                TauDraw::Beyond => {
                    if n + remaining <= cap {
                        // The run outlives the horizon: censored.
                        w.advance(dir, remaining);
                        break;
                    }
                    match opts.sample.cap_policy {
                        CapPolicy::Abort => {
                            return Err(Error::SampleCapExceeded { cap, direction: dir })
                        }
                        CapPolicy::ClampCounted => (cap.max(n), true),
                    }
                }
            };
            w.advance(dir, tau - n);
            w.complete_run(dir, tau, capped);
            push_letters(&mut past, dir, tau, window);
            dir = dir.flip();
            if w.t == steps {
                break;
            }
            w.advance(dir, 1);
            n = 1;
            continue;
        }
        // Letter-by-letter: the next letter switches with the context's
        // probability, grafted or not.
        let (q, leaf) = match graft_at.get(&(dir, n)) {
            None => (model.alpha(dir, n), None),
            Some(&gi) => {
                let g = &compiled[gi];
                let mut node = g.root;
                let mut idx = 1usize; // past[0] is the run-initiating letter
                loop {
                    match g.nodes[node] {
                        FlatNode::Leaf(li) => break (g.leaves[li].1, Some((gi, li))),
                        FlatNode::Split { up, down } => {
                            let letter = past.get(idx).copied().unwrap_or(Direction::Up);
                            idx += 1;
                            node = match letter {
                                Direction::Up => up,
                                Direction::Down => down,
                            };
                        }
                    }
                }
            }
        };
        if let Some((gi, li)) = leaf {
            stats[gi][li].0 += 1;
        }
        let rng = match dir {
            Direction::Up => &mut rng_up,
            Direction::Down => &mut rng_down,
        };
        let u = rngutil::uniform53(rng.next_u64());
        if u < q {
            if let Some((gi, li)) = leaf {
                stats[gi][li].1 += 1;
            }
            w.complete_run(dir, n, false);
            push_letters(&mut past, dir, n, window);
            dir = dir.flip();
            n = 1;
        } else {
            n += 1;
        }
        w.advance(dir, 1);
    }

    let mut leaf_counts = Vec::new();
    for ((g, c), st) in tree.grafts.iter().zip(&compiled).zip(&stats) {
        for ((path, q), (visits, switches)) in c.leaves.iter().zip(st) {
            leaf_counts.push(LeafCount {
                direction: g.direction,
                run_length: g.run_length,
                path: path.clone(),
                q: *q,
                visits: *visits,
                switches: *switches,
            });
        }
    }
    Ok((w.finish(seed, replica), leaf_counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::simulate;

    fn base_constant(p: f64) -> ModelSpec {
        ModelSpec::new(Family::Constant { p_up: p, p_down: p })
    }

    fn check_summary(s: &TrajectorySummary) {
        let path = s.positions.as_ref().unwrap();
        assert_eq!(*path.last().unwrap(), s.final_position);
        assert_eq!(path.iter().copied().min().unwrap(), s.min_pos);
        assert_eq!(path.iter().copied().max().unwrap(), s.max_pos);
        let returns = path[1..].iter().filter(|&&x| x == 0).count() as u64;
        assert_eq!(returns, s.returns_to_origin);
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
    }

    #[test]
    fn empty_grafts_fast_path_is_byte_identical() {
        let tree = GraftedTree { base: base_constant(0.5), grafts: vec![] };
        let model = TransitionModel::from_spec(tree.base.clone()).unwrap();
        let opts = SimOptions { store_path: true, ..Default::default() };
        let (a, counts) = simulate_grafted(&tree, 10_000, 31, 2, &opts).unwrap();
        let b = simulate(&model, 10_000, 31, 2, &opts).unwrap();
        assert_eq!(a, b);
        assert!(counts.is_empty());
    }

    #[test]
    fn stepwise_engine_keeps_summary_invariants() {
        let tree = GraftedTree {
            base: ModelSpec::new(Family::Harmonic { lambda_up: 0.5, lambda_down: 0.5 }),
            grafts: vec![Graft {
                direction: Direction::Up,
                run_length: 1,
                subtree: GraftNode::Split {
                    up: Box::new(GraftNode::Leaf { q: 0.4 }),
                    down: Box::new(GraftNode::Leaf { q: 0.6 }),
                },
            }],
        };
        let opts = SimOptions { store_path: true, ..Default::default() };
        let (s, counts) = simulate_grafted(&tree, 100_000, 9, 0, &opts).unwrap();
        check_summary(&s);
        assert_eq!(counts.len(), 2);
        assert!(counts.iter().all(|c| c.visits > 0));
    }

    #[test]
    fn constant_graft_reproduces_base_rates() {
        // Both leaves carry the base probability: the context refinement
        // is invisible in distribution.
        let tree = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![Graft {
                direction: Direction::Up,
                run_length: 1,
                subtree: GraftNode::Split {
                    up: Box::new(GraftNode::Leaf { q: 0.5 }),
                    down: Box::new(GraftNode::Leaf { q: 0.5 }),
                },
            }],
        };
        let (s, counts) = simulate_grafted(&tree, 400_000, 12, 0, &SimOptions::default()).unwrap();
        for c in &counts {
            assert!(c.visits > 5_000, "leaf {} starved: {} visits", c.path, c.visits);
            let freq = c.switches as f64 / c.visits as f64;
            assert!((freq - 0.5).abs() < 0.02, "leaf {} freq {freq}", c.path);
        }
        // Drift-free base: the walk stays moderate.
        assert!(s.final_position.abs() < 20_000);
    }

    #[test]
    fn distinct_leaves_show_their_own_frequencies() {
        let tree = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![Graft {
                direction: Direction::Down,
                run_length: 1,
                subtree: GraftNode::Split {
                    up: Box::new(GraftNode::Leaf { q: 0.9 }),
                    down: Box::new(GraftNode::Leaf { q: 0.1 }),
                },
            }],
        };
        let (_, counts) = simulate_grafted(&tree, 600_000, 44, 1, &SimOptions::default()).unwrap();
        for c in &counts {
            assert!(c.visits > 10_000, "leaf {} starved", c.path);
            let freq = c.switches as f64 / c.visits as f64;
            assert!((freq - c.q).abs() < 0.01, "leaf {} freq {freq} vs q {}", c.path, c.q);
        }
    }

    #[test]
    fn bounds_take_sup_on_rises_and_inf_on_descents() {
        let tree = GraftedTree {
            base: base_constant(0.4),
            grafts: vec![Graft {
                direction: Direction::Up,
                run_length: 1,
                subtree: GraftNode::Split {
                    up: Box::new(GraftNode::Leaf { q: 0.2 }),
                    down: Box::new(GraftNode::Leaf { q: 0.6 }),
                },
            }],
        };
        let (check, hat) = tree.graft_bounds().unwrap();
        assert_eq!(check.alpha(Direction::Up, 1), 0.6);
        assert_eq!(hat.alpha(Direction::Up, 1), 0.2);
        assert_eq!(check.alpha(Direction::Up, 2), 0.4);
        assert_eq!(hat.alpha(Direction::Up, 2), 0.4);
        assert_eq!(check.alpha(Direction::Down, 1), 0.4);
        assert_eq!(hat.alpha(Direction::Down, 1), 0.4);
    }

    #[test]
    fn empty_grafts_bounds_equal_base() {
        let tree = GraftedTree { base: base_constant(0.3), grafts: vec![] };
        let (check, hat) = tree.graft_bounds().unwrap();
        for n in 1..20 {
            assert_eq!(check.alpha(Direction::Up, n), 0.3);
            assert_eq!(hat.alpha(Direction::Down, n), 0.3);
        }
    }

    #[test]
    fn validation_rejects_malformed_trees() {
        let leaf = |q| GraftNode::Leaf { q };
        let bad_q = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![Graft { direction: Direction::Up, run_length: 1, subtree: leaf(1.5) }],
        };
        assert!(matches!(bad_q.validate(), Err(Error::InvalidModel(_))));

        let unit_q = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![Graft { direction: Direction::Up, run_length: 1, subtree: leaf(1.0) }],
        };
        assert!(matches!(unit_q.validate(), Err(Error::InvalidModel(_))));

        let zero_n = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![Graft { direction: Direction::Up, run_length: 0, subtree: leaf(0.5) }],
        };
        assert!(matches!(zero_n.validate(), Err(Error::ContextUnresolvable(_))));

        let dup = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![
                Graft { direction: Direction::Up, run_length: 2, subtree: leaf(0.5) },
                Graft { direction: Direction::Up, run_length: 2, subtree: leaf(0.4) },
            ],
        };
        assert!(matches!(dup.validate(), Err(Error::ContextUnresolvable(_))));
    }

    #[test]
    fn grafted_tree_round_trips_through_json() {
        let tree = GraftedTree {
            base: ModelSpec::new(Family::Harmonic { lambda_up: 0.5, lambda_down: 0.7 }),
            grafts: vec![Graft {
                direction: Direction::Down,
                run_length: 3,
                subtree: GraftNode::Split {
                    up: Box::new(GraftNode::Leaf { q: 0.25 }),
                    down: Box::new(GraftNode::Split {
                        up: Box::new(GraftNode::Leaf { q: 0.75 }),
                        down: Box::new(GraftNode::Leaf { q: 0.0 }),
                    }),
                },
            }],
        };
        let json = serde_json::to_string(&tree).unwrap();
        let back: GraftedTree = serde_json::from_str(&json).unwrap();
        assert_eq!(tree, back);
        assert_eq!(tree.max_extra_depth(), 3);
    }

    #[test]
    fn prehistory_is_all_up_letters() {
        // Graft on the very first context (Down, 1) splitting on the letter
        // before the initiating up: at time 1 history is empty, so the
        // resolver must take the up branch, whose leaf never switches.
        let tree = GraftedTree {
            base: base_constant(0.5),
            grafts: vec![Graft {
                direction: Direction::Down,
                run_length: 1,
                subtree: GraftNode::Split {
                    up: Box::new(GraftNode::Leaf { q: 0.0 }),
                    down: Box::new(GraftNode::Leaf { q: 0.9 }),
                },
            }],
        };
        let (s, counts) = simulate_grafted(&tree, 50_000, 5, 0, &SimOptions::default()).unwrap();
        assert!(s.run_lengths[0] >= 2, "first down run must pass length 1");
        // Both branches see traffic; the up branch never fires.
        let up_leaf = counts.iter().find(|c| c.path == "u").unwrap();
        let down_leaf = counts.iter().find(|c| c.path == "d").unwrap();
        assert!(up_leaf.visits > 100);
        assert_eq!(up_leaf.switches, 0);
        assert!(down_leaf.visits > 100);
        let freq = down_leaf.switches as f64 / down_leaf.visits as f64;
        assert!((freq - 0.9).abs() < 0.05, "down-branch leaf freq {freq}");
        assert!(s.run_lengths.chunks(2).any(|p| p[0] == 1), "length-1 down runs exist");
    }
}
