//! Syscall sequence generation.
//!
//! [`gen_unidirectional`] grows a sequence strictly forward, sampling each
//! next call from the previous call's row of the augmented table.
//! [`gen_random_walk`] grows a precedence graph in both directions from a
//! random anchor and linearizes it with a topological sort.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bigram::Rpm;
use crate::choice_table::AugmentedChoiceTable;
use crate::trace::SyscallId;

/// Seeded stream used by every generator.
pub type GenRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> GenRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const DEFAULT_LENGTH: usize = 30;
pub const MAX_WALK_LENGTH: usize = 64;
/// Consecutive unproductive iterations allowed per unit of target length.
pub const STALL_FACTOR: usize = 100;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("random walk stalled at {edges} edges after {iterations} unproductive iterations")]
    Stall {
        edges: usize,
        iterations: usize,
        /// Topological order of the graph built before stalling.
        partial: Vec<SyscallId>,
    },
    #[error("precedence graph contains a cycle")]
    Cycle,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenConfig {
    pub length: usize,
    pub seed: u64,
    pub start_set: Vec<SyscallId>,
}

impl GenConfig {
    pub fn new(length: usize, seed: u64, start_set: Vec<SyscallId>) -> Self {
        Self {
            length,
            seed,
            start_set,
        }
    }

    fn validate(&self, table_size: usize) -> Result<(), GenError> {
        if self.length == 0 {
            return Err(GenError::Config("length must be at least 1".into()));
        }
        if self.start_set.is_empty() {
            return Err(GenError::Config("start set is empty".into()));
        }
        if let Some(id) = self.start_set.iter().find(|id| id.index() >= table_size) {
            return Err(GenError::Config(format!(
                "start call {id} outside a table of {table_size} calls"
            )));
        }
        Ok(())
    }
}

/// Draws an index with probability proportional to `masses` by inverting
/// the cumulative distribution. Returns `None` when all masses are zero.
pub fn sample_proportional<R, I>(masses: I, rng: &mut R) -> Option<usize>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = f64>,
{
    let mut cumulative = Vec::new();
    let mut total = 0.0;
    for m in masses {
        debug_assert!(m >= 0.0);
        total += m;
        cumulative.push(total);
    }
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let u = rng.gen_range(0.0..total);
    let k = cumulative.partition_point(|&c| c <= u);
    Some(k.min(cumulative.len() - 1))
}

fn pick_start<R: Rng + ?Sized>(start_set: &[SyscallId], rng: &mut R) -> SyscallId {
    start_set[rng.gen_range(0..start_set.len())]
}

/// Forward-only generation of exactly `cfg.length` calls.
pub fn gen_unidirectional(
    act: &AugmentedChoiceTable,
    cfg: &GenConfig,
) -> Result<Vec<SyscallId>, GenError> {
    gen_unidirectional_with(act, cfg, &mut rng_from_seed(cfg.seed))
}

pub fn gen_unidirectional_with<R: Rng + ?Sized>(
    act: &AugmentedChoiceTable,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Vec<SyscallId>, GenError> {
    cfg.validate(act.size())?;
    let mut seq = Vec::with_capacity(cfg.length);
    let mut prev = pick_start(&cfg.start_set, rng);
    seq.push(prev);
    while seq.len() < cfg.length {
        let next = choose_front_act(prev, act, rng)
            .expect("augmented rows always have positive support");
        seq.push(next);
        prev = next;
    }
    Ok(seq)
}

/// Successor of `ap` drawn from the learned models, proportional to
/// `dtn[ap][cf] + corpus_n[ap][cf]`.
pub fn choose_front_rpm<R: Rng + ?Sized>(
    ap: SyscallId,
    dtn: &Rpm,
    corpus_n: &Rpm,
    rng: &mut R,
) -> Option<SyscallId> {
    let (d, c) = (dtn.row(ap.index()), corpus_n.row(ap.index()));
    sample_proportional(d.iter().zip(c).map(|(x, y)| x + y), rng).map(SyscallId)
}

/// Predecessor of `ap` drawn from the learned models, proportional to
/// `dtn[cb][ap] + corpus_n[cb][ap]`.
pub fn choose_backward_rpm<R: Rng + ?Sized>(
    ap: SyscallId,
    dtn: &Rpm,
    corpus_n: &Rpm,
    rng: &mut R,
) -> Option<SyscallId> {
    let j = ap.index();
    let masses = (0..dtn.size()).map(|i| dtn.get(i, j) + corpus_n.get(i, j));
    sample_proportional(masses, rng).map(SyscallId)
}

pub fn choose_front_act<R: Rng + ?Sized>(
    ap: SyscallId,
    act: &AugmentedChoiceTable,
    rng: &mut R,
) -> Option<SyscallId> {
    sample_proportional(act.weights().row(ap.index()).iter().copied(), rng).map(SyscallId)
}

pub fn choose_backward_act<R: Rng + ?Sized>(
    ap: SyscallId,
    act: &AugmentedChoiceTable,
    rng: &mut R,
) -> Option<SyscallId> {
    sample_proportional(act.weights().column(ap.index()), rng).map(SyscallId)
}

/// Predecessor side of a precedence edge; `Root` marks the first call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pred {
    Root,
    Call(SyscallId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub pred: Pred,
    pub succ: SyscallId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Insert {
    Added,
    Duplicate,
    WouldCycle,
}

/// Precedence graph grown by the random walk.
#[derive(Clone, Debug)]
pub struct WalkState {
    edges: Vec<Edge>,
    visited: HashSet<Edge>,
    nodes: Vec<SyscallId>,
    rank: HashMap<SyscallId, usize>,
    successors: HashMap<SyscallId, Vec<SyscallId>>,
    target_length: usize,
}

impl WalkState {
    pub fn new(first: SyscallId, target_length: usize) -> Self {
        let root = Edge {
            pred: Pred::Root,
            succ: first,
        };
        let mut state = Self {
            edges: vec![root],
            visited: HashSet::from([root]),
            nodes: Vec::new(),
            rank: HashMap::new(),
            successors: HashMap::new(),
            target_length,
        };
        state.touch(first);
        state
    }

    fn touch(&mut self, id: SyscallId) {
        if !self.rank.contains_key(&id) {
            self.rank.insert(id, self.nodes.len());
            self.nodes.push(id);
        }
    }

    fn reaches(&self, from: SyscallId, to: SyscallId) -> bool {
        let mut stack = vec![from];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                if let Some(next) = self.successors.get(&n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        false
    }

    /// Adds `pred → succ` unless it was already recorded or would close a
    /// cycle.
    pub fn insert(&mut self, pred: SyscallId, succ: SyscallId) -> Insert {
        let edge = Edge {
            pred: Pred::Call(pred),
            succ,
        };
        if self.visited.contains(&edge) {
            return Insert::Duplicate;
        }
        if pred == succ || self.reaches(succ, pred) {
            return Insert::WouldCycle;
        }
        self.visited.insert(edge);
        self.edges.push(edge);
        self.touch(pred);
        self.touch(succ);
        self.successors.entry(pred).or_default().push(succ);
        Insert::Added
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Distinct calls in first-insertion order.
    pub fn nodes(&self) -> &[SyscallId] {
        &self.nodes
    }

    pub fn first_call(&self) -> SyscallId {
        self.edges[0].succ
    }

    pub fn target_length(&self) -> usize {
        self.target_length
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn is_visited(&self, edge: &Edge) -> bool {
        self.visited.contains(edge)
    }
}

/// Kahn's algorithm; among ready nodes the earliest inserted goes first.
pub fn topo_sort(state: &WalkState) -> Result<Vec<SyscallId>, GenError> {
    let n = state.nodes.len();
    let mut indegree = vec![0usize; n];
    for e in &state.edges {
        if let Pred::Call(_) = e.pred {
            indegree[state.rank[&e.succ]] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = indegree
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(r, _)| Reverse(r))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(r)) = ready.pop() {
        let node = state.nodes[r];
        order.push(node);
        for succ in state.successors.get(&node).into_iter().flatten() {
            let sr = state.rank[succ];
            indegree[sr] -= 1;
            if indegree[sr] == 0 {
                ready.push(Reverse(sr));
            }
        }
    }
    if order.len() != n {
        return Err(GenError::Cycle);
    }
    Ok(order)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A finished walk with its graph and per-direction acceptance counts.
#[derive(Clone, Debug)]
pub struct WalkOutcome {
    pub sequence: Vec<SyscallId>,
    pub state: WalkState,
    pub forward_accepted: usize,
    pub backward_accepted: usize,
    pub iterations: usize,
}

/// Bidirectional generation: see [`gen_random_walk_traced`].
pub fn gen_random_walk(
    act: &AugmentedChoiceTable,
    dtn: &Rpm,
    corpus_n: &Rpm,
    cfg: &GenConfig,
) -> Result<Vec<SyscallId>, GenError> {
    gen_random_walk_traced(act, dtn, corpus_n, cfg, &mut rng_from_seed(cfg.seed)).map(|w| w.sequence)
}

/// Grows the precedence graph until it holds `cfg.length` edges (the root
/// edge included).
///
/// Each iteration picks an anchor uniformly among the graph's calls and a
/// fair direction. Forward: a successor from the learned models, else from
/// the table row; failing both, a predecessor from the table column.
/// Backward: a predecessor from the learned models, else from the table
/// column. Duplicate and cycle-closing edges are skipped.
pub fn gen_random_walk_traced<R: Rng + ?Sized>(
    act: &AugmentedChoiceTable,
    dtn: &Rpm,
    corpus_n: &Rpm,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<WalkOutcome, GenError> {
    cfg.validate(act.size())?;
    if cfg.length > MAX_WALK_LENGTH {
        return Err(GenError::Config(format!(
            "walk length {} exceeds cap {MAX_WALK_LENGTH}",
            cfg.length
        )));
    }
    if dtn.size() != act.size() || corpus_n.size() != act.size() {
        return Err(GenError::Config("table sizes differ".into()));
    }

    let first = pick_start(&cfg.start_set, rng);
    let mut state = WalkState::new(first, cfg.length);
    let (mut forward_accepted, mut backward_accepted) = (0, 0);
    let mut idle = 0usize;
    let mut iterations = 0usize;
    let stall_limit = STALL_FACTOR * cfg.length;

    while state.len() < cfg.length {
        iterations += 1;
        let ap = state.nodes[rng.gen_range(0..state.nodes.len())];
        let direction = if rng.gen_bool(0.5) {
            Direction::Forward
        } else {
            Direction::Backward
        };
        let edge = match direction {
            Direction::Forward => choose_front_rpm(ap, dtn, corpus_n, rng)
                .or_else(|| choose_front_act(ap, act, rng))
                .map(|cf| (ap, cf))
                .or_else(|| choose_backward_act(ap, act, rng).map(|cb| (cb, ap))),
            Direction::Backward => choose_backward_rpm(ap, dtn, corpus_n, rng)
                .or_else(|| choose_backward_act(ap, act, rng))
                .map(|cb| (cb, ap)),
        };
        let added = matches!(edge, Some((p, s)) if state.insert(p, s) == Insert::Added);
        if added {
            idle = 0;
            match direction {
                Direction::Forward => forward_accepted += 1,
                Direction::Backward => backward_accepted += 1,
            }
        } else {
            idle += 1;
            if idle >= stall_limit {
                return Err(GenError::Stall {
                    edges: state.len(),
                    iterations: idle,
                    partial: topo_sort(&state)?,
                });
            }
        }
    }
    Ok(WalkOutcome {
        sequence: topo_sort(&state)?,
        state,
        forward_accepted,
        backward_accepted,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::SquareMatrix;

    fn act(rows: &[&[f64]]) -> AugmentedChoiceTable {
        AugmentedChoiceTable::from_weights(SquareMatrix::from_rows(rows), 0).unwrap()
    }

    const A: SyscallId = SyscallId(0);
    const B: SyscallId = SyscallId(1);
    const C: SyscallId = SyscallId(2);

    #[test]
    fn sampling_skips_zero_mass() {
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            assert_eq!(sample_proportional([0.0, 2.0, 0.0], &mut rng), Some(1));
        }
        assert_eq!(sample_proportional([0.0, 0.0], &mut rng), None);
        assert_eq!(sample_proportional(std::iter::empty(), &mut rng), None);
    }

    #[test]
    fn unidirectional_basics() {
        let t = act(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]]);
        let cfg = GenConfig::new(1, 3, vec![A]);
        assert_eq!(gen_unidirectional(&t, &cfg).unwrap(), vec![A]);
        let cfg = GenConfig::new(3, 3, vec![A]);
        assert_eq!(gen_unidirectional(&t, &cfg).unwrap(), vec![A, B, C]);
    }

    #[test]
    fn unidirectional_is_seeded() {
        let t = act(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]]);
        let cfg = GenConfig::new(20, 99, vec![A, B]);
        assert_eq!(gen_unidirectional(&t, &cfg).unwrap(), gen_unidirectional(&t, &cfg).unwrap());
        let other = GenConfig::new(20, 100, vec![A, B]);
        assert_ne!(gen_unidirectional(&t, &cfg).unwrap(), gen_unidirectional(&t, &other).unwrap());
    }

    #[test]
    fn config_validation() {
        let t = act(&[&[1.0]]);
        assert!(gen_unidirectional(&t, &GenConfig::new(0, 0, vec![A])).is_err());
        assert!(gen_unidirectional(&t, &GenConfig::new(1, 0, vec![])).is_err());
        assert!(gen_unidirectional(&t, &GenConfig::new(1, 0, vec![B])).is_err());
        let z = Rpm::zeros(1);
        assert!(matches!(
            gen_random_walk(&t, &z, &z, &GenConfig::new(MAX_WALK_LENGTH + 1, 0, vec![A])),
            Err(GenError::Config(_))
        ));
    }

    #[test]
    fn rpm_choices() {
        let mut rng = rng_from_seed(5);
        let zero = Rpm::zeros(3);
        assert_eq!(choose_front_rpm(A, &zero, &zero, &mut rng), None);
        assert_eq!(choose_backward_rpm(A, &zero, &zero, &mut rng), None);
        let dtn = Rpm::new(SquareMatrix::from_rows(&[
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ]))
        .unwrap();
        for _ in 0..100 {
            assert_eq!(choose_front_rpm(A, &dtn, &zero, &mut rng), Some(B));
            assert_eq!(choose_backward_rpm(B, &dtn, &zero, &mut rng), Some(A));
        }
    }

    #[test]
    fn act_choices() {
        let mut rng = rng_from_seed(5);
        let t = act(&[&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]]);
        assert_eq!(choose_front_act(A, &t, &mut rng), Some(B));
        assert_eq!(choose_backward_act(A, &t, &mut rng), None);
        let back = choose_backward_act(B, &t, &mut rng).unwrap();
        assert!([A, B, C].contains(&back));
    }

    #[test]
    fn topo_sort_examples() {
        let s = WalkState::new(A, 5);
        assert_eq!(topo_sort(&s).unwrap(), vec![A]);

        let mut s = WalkState::new(A, 5);
        assert_eq!(s.insert(A, B), Insert::Added);
        assert_eq!(topo_sort(&s).unwrap(), vec![A, B]);

        let mut s = WalkState::new(B, 5);
        assert_eq!(s.insert(A, B), Insert::Added);
        assert_eq!(s.insert(A, C), Insert::Added);
        assert_eq!(topo_sort(&s).unwrap(), vec![A, B, C]);
    }

    #[test]
    fn insert_guards() {
        let mut s = WalkState::new(A, 5);
        assert_eq!(s.insert(A, B), Insert::Added);
        assert_eq!(s.insert(A, B), Insert::Duplicate);
        assert_eq!(s.insert(B, A), Insert::WouldCycle);
        assert_eq!(s.insert(B, C), Insert::Added);
        assert_eq!(s.insert(C, A), Insert::WouldCycle);
        assert_eq!(s.insert(C, C), Insert::WouldCycle);
        assert_eq!(s.len(), 3);
        assert!(s.edges().iter().all(|e| s.is_visited(e)));
    }

    #[test]
    fn walk_single_and_chain() {
        let z = Rpm::zeros(2);
        let t = act(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let cfg = GenConfig::new(1, 0, vec![A]);
        assert_eq!(gen_random_walk(&t, &z, &z, &cfg).unwrap(), vec![A]);
        // only a→b has weight out of a; b's column is the only backward option
        let cfg = GenConfig::new(2, 0, vec![A]);
        for seed in 0..50 {
            let cfg = GenConfig { seed, ..cfg.clone() };
            assert_eq!(gen_random_walk(&t, &z, &z, &cfg).unwrap(), vec![A, B]);
        }
    }

    #[test]
    fn walk_stalls_on_exhausted_graph() {
        // Two calls admit a single acyclic edge; a third edge is impossible.
        let z = Rpm::zeros(2);
        let t = act(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let err = gen_random_walk(&t, &z, &z, &GenConfig::new(3, 0, vec![A])).unwrap_err();
        match err {
            GenError::Stall { edges, partial, .. } => {
                assert_eq!(edges, 2);
                assert_eq!(partial.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
