//! Branch-and-bound over stage-ordered integer assignments with node weighting.
//!
//! Nodes fix `v(0..depth)`; children fix the next stage. A node's priority is
//! its strategy weight plus, for every guess, the guess weight times the
//! number of stages on which node and guess fix equal vectors. The node with
//! the largest priority is solved next (ties: deeper, then newer).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use log::{debug, warn};
use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MiocpInstance, Trajectory};
use crate::qp::{QpError, QpSettings, QpStatus};
use crate::relaxation::{
    build_relaxation, round_integer, solve_qp, PartialAssignment, RelaxationError, StageAssignment,
};

/// Slack in the pruning test `J* ≥ U − PRUNE_SLACK`.
pub const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("guess has {got} stages, horizon is {expected}")]
    GuessLength { expected: usize, got: usize },
    #[error("{guesses} guesses but {weights} weights")]
    GuessWeightCount { guesses: usize, weights: usize },
    #[error("guess weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("node at depth {0} is a leaf")]
    Leaf(usize),
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error(transparent)]
    Relaxation(#[from] RelaxationError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Default node ordering when no guess applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// `w(n) = depth(n)`.
    DepthFirst,
    /// `w(n) = N − depth(n)`.
    BreadthFirst,
    /// Depth-first until the first incumbent, then `w(n) = −bound(n)`.
    Hybrid,
}

impl Strategy {
    fn base_weight(self, depth: usize, horizon: usize, parent_bound: f64, have_incumbent: bool) -> f64 {
        match self {
            Strategy::DepthFirst => depth as f64,
            Strategy::BreadthFirst => (horizon - depth) as f64,
            Strategy::Hybrid if have_incumbent => -parent_bound,
            Strategy::Hybrid => depth as f64,
        }
    }

    /// Largest base weight the strategy assigns before an incumbent exists.
    pub fn max_base_weight(self, horizon: usize) -> f64 {
        horizon as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbConfig {
    pub eps_tol: f64,
    pub strategy: Strategy,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    pub qp: QpSettings,
    /// Distance to a channel member under which a relaxed `v` counts as integer.
    pub int_tol: f64,
    pub trace: bool,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            eps_tol: 1e-6,
            strategy: Strategy::Hybrid,
            node_limit: None,
            time_limit: None,
            qp: QpSettings::default(),
            int_tol: 1e-6,
            trace: false,
        }
    }
}

/// Guesses `V₀,ᵢ` with weights `w₀,ᵢ`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GuessSet {
    pub guesses: Vec<PartialAssignment>,
    pub weights: Vec<f64>,
}

impl GuessSet {
    pub fn new(guesses: Vec<PartialAssignment>, weights: Vec<f64>) -> Result<Self, BnbError> {
        let gs = Self { guesses, weights };
        gs.check(None)?;
        Ok(gs)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.guesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guesses.is_empty()
    }

    pub fn push(&mut self, guess: PartialAssignment, weight: f64) {
        self.guesses.push(guess);
        self.weights.push(weight);
    }

    pub fn extend(&mut self, other: GuessSet) {
        self.guesses.extend(other.guesses);
        self.weights.extend(other.weights);
    }

    fn check(&self, horizon: Option<usize>) -> Result<(), BnbError> {
        if self.guesses.len() != self.weights.len() {
            return Err(BnbError::GuessWeightCount {
                guesses: self.guesses.len(),
                weights: self.weights.len(),
            });
        }
        if let Some(&w) = self.weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(BnbError::BadWeight(w));
        }
        if let Some(n) = horizon {
            if let Some(g) = self.guesses.iter().find(|g| g.len() != n) {
                return Err(BnbError::GuessLength {
                    expected: n,
                    got: g.len(),
                });
            }
        }
        Ok(())
    }
}

/// A tree node. `pa` fixes exactly stages `0..depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub parent: Option<usize>,
    pub pa: PartialAssignment,
    pub depth: usize,
    pub base_weight: f64,
    /// Lower bound inherited from the parent; `−∞` at the root.
    pub parent_bound: f64,
}

impl Node {
    pub fn root(horizon: usize) -> Self {
        Self {
            id: 0,
            parent: None,
            pa: PartialAssignment::relaxed(horizon),
            depth: 0,
            base_weight: 0.0,
            parent_bound: f64::NEG_INFINITY,
        }
    }
}

/// Stages on which both `guess` and `node_pa` are fixed to equal vectors.
///
/// This is `D_V(guess) − ‖guess − node‖₀` with a relaxed node stage counted
/// as a mismatch for every fixed guess component.
pub fn guess_match_score(guess: &PartialAssignment, node_pa: &PartialAssignment) -> Result<usize, BnbError> {
    if guess.len() != node_pa.len() {
        return Err(BnbError::GuessLength {
            expected: node_pa.len(),
            got: guess.len(),
        });
    }
    Ok(guess
        .entries
        .iter()
        .zip(&node_pa.entries)
        .map(|(g, n)| match (g, n) {
            (StageAssignment::Fixed(a), StageAssignment::Fixed(b)) => a.iter().zip(b).filter(|(x, y)| x == y).count(),
            _ => 0,
        })
        .sum())
}

/// `w̃(n) = w(n) + Σᵢ w₀,ᵢ · score(V₀,ᵢ, V_n)`.
pub fn effective_weight(node: &Node, guesses: &GuessSet) -> Result<f64, BnbError> {
    let mut w = node.base_weight;
    for (g, &wi) in guesses.guesses.iter().zip(&guesses.weights) {
        if wi != 0.0 {
            w += wi * guess_match_score(g, &node.pa)? as f64;
        }
    }
    Ok(w)
}

#[derive(Debug, Clone)]
struct Entry {
    weight: OrderedFloat<f64>,
    depth: usize,
    seq: u64,
    node: Node,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.weight, self.depth, self.seq).cmp(&(other.weight, other.depth, other.seq))
    }
}

/// The candidate set `S`, ordered by cached effective weight, with a
/// multiset of parent bounds for the lower-bound update.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    heap: BinaryHeap<Entry>,
    bounds: BTreeMap<OrderedFloat<f64>, usize>,
    seq: u64,
}

impl CandidateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts `node` with its effective weight already computed.
    pub fn insert(&mut self, node: Node, weight: f64) {
        *self.bounds.entry(OrderedFloat(node.parent_bound)).or_insert(0) += 1;
        self.seq += 1;
        self.heap.push(Entry {
            weight: OrderedFloat(weight),
            depth: node.depth,
            seq: self.seq,
            node,
        });
    }

    /// Removes a node of maximal weight; ties go to the deeper, then to the
    /// most recently inserted node.
    pub fn select(&mut self) -> Result<Node, BnbError> {
        let e = self.heap.pop().ok_or(BnbError::EmptyCandidates)?;
        let key = OrderedFloat(e.node.parent_bound);
        match self.bounds.get_mut(&key) {
            Some(c) if *c > 1 => *c -= 1,
            _ => {
                self.bounds.remove(&key);
            }
        }
        Ok(e.node)
    }

    /// Smallest parent bound over the set, `None` when empty.
    pub fn min_parent_bound(&self) -> Option<f64> {
        self.bounds.keys().next().map(|k| k.0)
    }

    /// Recomputes every cached weight, keeping insertion order for ties.
    fn reweigh(&mut self, mut weight: impl FnMut(&mut Node) -> f64) {
        let entries = std::mem::take(&mut self.heap).into_vec();
        self.heap = entries
            .into_iter()
            .map(|mut e| {
                e.weight = OrderedFloat(weight(&mut e.node));
                e
            })
            .collect();
    }
}

/// Children of `node`, one per element of the stage's integer set, in
/// lexicographic order. Under LIFO tie-breaking the last child pops first.
pub fn expand_node(node: &Node, inst: &MiocpInstance, bound: f64, next_id: &mut usize) -> Result<Vec<Node>, BnbError> {
    let k = node.depth;
    if k >= inst.horizon {
        return Err(BnbError::Leaf(k));
    }
    Ok(inst
        .constraints
        .integer_points()
        .into_iter()
        .map(|v| {
            let id = *next_id;
            *next_id += 1;
            Node {
                id,
                parent: Some(node.id),
                pa: node.pa.with_fixed(k, v),
                depth: k + 1,
                base_weight: 0.0,
                parent_bound: bound,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeAction {
    /// Relaxation infeasible.
    PrunedInfeasible,
    /// Relaxation bound not below the incumbent.
    PrunedBound,
    /// Integer-feasible relaxation; may have improved the incumbent.
    Fathomed,
    Branched,
    /// Leaf whose relaxation could not be solved to tolerance.
    Unresolved,
}

/// One line of the per-node trace. Infinite bounds serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub weight: f64,
    pub qp_status: QpStatus,
    pub action: NodeAction,
    pub objective: f64,
    pub upper: f64,
    pub lower: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnbStatus {
    Optimal,
    /// A node or time limit stopped the search, or some leaf was unresolved.
    Suboptimal,
    Infeasible,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BnbStats {
    pub nodes_solved: usize,
    pub qp_iterations: usize,
    pub wall_time: Duration,
    pub unresolved_nodes: usize,
}

/// Search state: incumbent `U`, bound `L`, candidates `S`, explored `T`.
#[derive(Debug, Clone)]
pub struct BnbState {
    pub upper: f64,
    pub lower: f64,
    pub candidates: CandidateSet,
    /// `(node id, J*)` for every solved node.
    pub explored: Vec<(usize, f64)>,
    pub incumbent: Option<(Vec<Vec<i64>>, Trajectory)>,
    pub stats: BnbStats,
}

impl BnbState {
    fn new() -> Self {
        Self {
            upper: f64::INFINITY,
            lower: f64::NEG_INFINITY,
            candidates: CandidateSet::new(),
            explored: Vec::new(),
            incumbent: None,
            stats: BnbStats::default(),
        }
    }

    /// `L = min(U, min over S of the parent bounds)`; `U` when `S` is empty.
    pub fn update_lower_bound(&mut self) -> f64 {
        self.lower = match self.candidates.min_parent_bound() {
            Some(b) => b.min(self.upper),
            None => self.upper,
        };
        self.lower
    }
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub status: BnbStatus,
    /// Incumbent objective `U` (`+∞` without incumbent).
    pub objective: f64,
    pub lower_bound: f64,
    pub traj: Option<Trajectory>,
    pub v: Option<Vec<Vec<i64>>>,
    pub stats: BnbStats,
    pub trace: Vec<TraceRecord>,
}

impl BnbResult {
    pub fn gap(&self) -> f64 {
        self.objective - self.lower_bound
    }
}

/// Runs the weighted branch-and-bound.
pub fn solve_bnb(inst: &MiocpInstance, guesses: &GuessSet, cfg: &BnbConfig) -> Result<BnbResult, BnbError> {
    if !(cfg.eps_tol > 0.0) {
        return Err(BnbError::Config("eps_tol must be positive".into()));
    }
    if cfg.node_limit == Some(0) || cfg.time_limit == Some(Duration::ZERO) {
        return Err(BnbError::Config("limits must be positive".into()));
    }
    guesses.check(Some(inst.horizon))?;

    let start = Instant::now();
    let horizon = inst.horizon;
    let mut st = BnbState::new();
    let mut trace = Vec::new();
    let mut next_id = 1;
    let mut limited = false;

    let weigh = |node: &mut Node, have_incumbent: bool| -> Result<f64, BnbError> {
        node.base_weight = cfg
            .strategy
            .base_weight(node.depth, horizon, node.parent_bound, have_incumbent);
        effective_weight(node, guesses)
    };

    let mut root = Node::root(horizon);
    let w = weigh(&mut root, false)?;
    st.candidates.insert(root, w);

    while !st.candidates.is_empty() {
        if cfg.node_limit.is_some_and(|n| st.stats.nodes_solved >= n)
            || cfg.time_limit.is_some_and(|t| start.elapsed() >= t)
        {
            limited = true;
            break;
        }
        // Select.
        let node = st.candidates.select()?;
        let node_weight = effective_weight(&node, guesses)?;

        // Solve the relaxation.
        let rqp = build_relaxation(inst, &node.pa)?;
        let sol = solve_qp(&rqp, &cfg.qp)?;
        st.stats.nodes_solved += 1;
        st.stats.qp_iterations += sol.iterations;
        st.explored.push((node.id, sol.objective));

        // Prune, update the incumbent, or branch.
        let had_incumbent = st.incumbent.is_some();
        let action = match sol.status {
            QpStatus::Infeasible => NodeAction::PrunedInfeasible,
            QpStatus::Optimal if sol.objective.max(node.parent_bound) >= st.upper - PRUNE_SLACK => {
                NodeAction::PrunedBound
            }
            QpStatus::Optimal => match round_integer(&sol.traj, inst, cfg.int_tol) {
                Some(v) => {
                    let (j, traj) = if node.pa.is_fully_fixed() {
                        (sol.objective, sol.traj)
                    } else {
                        // Integral relaxation: evaluate the rounded assignment exactly.
                        let full = build_relaxation(inst, &PartialAssignment::full(&v))?;
                        let fs = solve_qp(&full, &cfg.qp)?;
                        st.stats.qp_iterations += fs.iterations;
                        if fs.status != QpStatus::Optimal {
                            warn!(
                                "node {}: rounded assignment did not re-solve ({:?})",
                                node.id, fs.status
                            );
                        }
                        (fs.objective, fs.traj)
                    };
                    if j < st.upper {
                        debug!("node {}: incumbent {} -> {}", node.id, st.upper, j);
                        st.upper = j;
                        st.incumbent = Some((v, traj));
                    }
                    NodeAction::Fathomed
                }
                None => {
                    let bound = sol.objective.max(node.parent_bound);
                    for mut child in expand_node(&node, inst, bound, &mut next_id)? {
                        let w = weigh(&mut child, had_incumbent)?;
                        st.candidates.insert(child, w);
                    }
                    NodeAction::Branched
                }
            },
            QpStatus::IterationLimit if node.depth < horizon => {
                warn!(
                    "node {}: relaxation hit the iteration limit; branching on the parent bound",
                    node.id
                );
                for mut child in expand_node(&node, inst, node.parent_bound, &mut next_id)? {
                    let w = weigh(&mut child, had_incumbent)?;
                    st.candidates.insert(child, w);
                }
                NodeAction::Branched
            }
            QpStatus::IterationLimit => {
                warn!("leaf {}: relaxation hit the iteration limit; discarded", node.id);
                st.stats.unresolved_nodes += 1;
                NodeAction::Unresolved
            }
        };
        if !had_incumbent && st.incumbent.is_some() && cfg.strategy == Strategy::Hybrid {
            st.candidates.reweigh(|n| weigh(n, true).expect("guesses validated"));
        }

        // Bound update and termination test.
        st.update_lower_bound();
        if cfg.trace {
            trace.push(TraceRecord {
                node: node.id,
                parent: node.parent,
                depth: node.depth,
                weight: node_weight,
                qp_status: sol.status,
                action,
                objective: sol.objective,
                upper: st.upper,
                lower: st.lower,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
        }
        if st.upper.is_finite() && st.upper - st.lower <= cfg.eps_tol {
            break;
        }
    }

    st.stats.wall_time = start.elapsed();
    if !limited && st.candidates.is_empty() {
        st.update_lower_bound();
    }
    let closed = st.upper.is_finite() && st.upper - st.lower <= cfg.eps_tol;
    let status = match (&st.incumbent, limited) {
        (Some(_), false) if closed && st.stats.unresolved_nodes == 0 => BnbStatus::Optimal,
        (None, false) if st.stats.unresolved_nodes == 0 => BnbStatus::Infeasible,
        _ => BnbStatus::Suboptimal,
    };
    let (v, traj) = match st.incumbent {
        Some((v, t)) => (Some(v), Some(t)),
        None => (None, None),
    };
    Ok(BnbResult {
        status,
        objective: st.upper,
        lower_bound: st.lower,
        traj,
        v,
        stats: st.stats,
        trace,
    })
}
