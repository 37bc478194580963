//! The hybrid symbolic execution tree and the anytime refinement loop.
//!
//! The tree starts as a single abstract-interpretation leaf for the whole
//! program. Each iteration picks the non-dominated leaf with the largest
//! through-path upper bound, symbolically executes its witness path (the
//! spine), turns every off-spine successor into a fresh AI leaf, and
//! propagates the new bounds back to the root. Annotations hold suffix
//! bounds; through-path bounds add the concrete prefix cost.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::absint::{AbsintError, AbstractContext, AiEngine, AiResult};
use crate::cache::{CacheConfig, MustCache};
use crate::ir::{Op, PointId, TransitionId, TransitionSystem};
use crate::lattice::{Accumulate, Lattice, Wcet};
use crate::solver::{self, Conjunction, Constraint, Entailment, Outcome, Satisfiability};
use crate::symex::{self, symstep, SymbolicState};

pub type NodeId = usize;
pub type Path = Vec<TransitionId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Absint(#[from] AbsintError),
}

/// Lower/upper suffix bounds with the witnesses behind the upper bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bounds {
    pub lower: Wcet,
    pub upper: Wcet,
    pub witnesses: Vec<Path>,
}

impl Bounds {
    /// The identity of [`combine`]: no feasible path.
    pub fn infeasible() -> Self {
        Bounds {
            lower: Wcet::Bottom,
            upper: Wcet::Bottom,
            witnesses: Vec::new(),
        }
    }
}

/// Joins two analyses; the witnesses follow whichever upper bound wins,
/// testing `U1 ⊑ U2` first.
pub fn combine(a: &Bounds, b: &Bounds) -> Bounds {
    let witnesses = if a.upper.leq(&b.upper) {
        b.witnesses.clone()
    } else if b.upper.leq(&a.upper) {
        a.witnesses.clone()
    } else {
        let mut w = a.witnesses.clone();
        w.extend(b.witnesses.iter().cloned());
        w
    };
    Bounds {
        lower: a.lower.join(&b.lower),
        upper: a.upper.join(&b.upper),
        witnesses,
    }
}

/// `⟨L, U, ω, Ψ⟩`; `interpolant == None` stands for `false`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub lower: Wcet,
    pub upper: Wcet,
    pub witnesses: Vec<Path>,
    pub interpolant: Option<Conjunction>,
}

impl Annotation {
    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    /// Summarized by abstract interpretation. `analyses` holds every AI
    /// result whose per-point bounds are valid below this node, newest
    /// first.
    AiLeaf {
        analyses: Vec<Rc<AiResult>>,
    },
    Expanded,
    Terminal,
    Infeasible,
    Subsumed {
        by: NodeId,
    },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub state: SymbolicState,
    pub kind: NodeKind,
    pub ann: Annotation,
    /// Condition on program variables under which `ann`'s bounds hold for
    /// any state at this point (with at least this node's cache contents).
    /// `None` is `false`. Becomes the interpolant once the node is exact.
    pub condition: Option<Conjunction>,
    /// The suffix path that realizes `ann.lower`.
    pub realized: Option<Path>,
    pub children: Vec<(TransitionId, NodeId)>,
    pub parent: Option<NodeId>,
    projection: OnceCell<Conjunction>,
}

impl Node {
    pub fn through_lower(&self) -> Wcet {
        Wcet::Time(self.state.prefix_cost).accumulate(&self.ann.lower)
    }

    pub fn through_upper(&self) -> Wcet {
        Wcet::Time(self.state.prefix_cost).accumulate(&self.ann.upper)
    }

    pub fn is_ai_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::AiLeaf { .. })
    }
}

/// `true` iff `b`'s through-upper bound is below `a`'s through-lower bound.
pub fn dominates(a: &Node, b: &Node) -> bool {
    b.through_upper().leq(&a.through_lower())
}

/// Weakest-precondition approximation of `psi` (None = false) across `op`.
/// For an assume edge into an infeasible successor the result is the part
/// of the parent's constraints that refutes the guard.
pub fn wlp_approx(psi: Option<&Conjunction>, op: &Op, parent: &Conjunction) -> Option<Conjunction> {
    match (psi, op) {
        (Some(p), Op::Assign { var, expr }) => p.substitute(|v| (v == *var).then(|| expr.clone())).ok(),
        (Some(p), Op::Assume(_)) => Some(p.clone()),
        (None, Op::Assign { .. }) => None,
        (None, Op::Assume(c)) => {
            let guard = Constraint::from_comparison(c).ok()?;
            let mut q = parent.clone();
            q.push(guard.clone());
            if solver::is_satisfiable(&q) != Satisfiability::Unsat {
                return None;
            }
            let core = solver::unsat_core(&q).ok()?;
            Some(core.iter().filter(|k| **k != guard).cloned().collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Stop when no non-dominated AI leaf is left.
    Exact,
    /// Stop once `(U - L) / U ≤ e`.
    Epsilon(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub budget: Option<Duration>,
    pub max_iterations: Option<usize>,
    pub domination: bool,
    pub subsumption: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            mode: Mode::Exact,
            budget: None,
            max_iterations: None,
            domination: true,
            subsumption: true,
        }
    }
}

/// Whether the run may stop, given the root bounds and the refinable set.
pub fn bounds_heuristic(lower: Wcet, upper: Wcet, refinable: usize, mode: Mode) -> bool {
    if refinable == 0 {
        return true;
    }
    match mode {
        Mode::Exact => false,
        Mode::Epsilon(e) => match upper {
            Wcet::Bottom | Wcet::Time(0) => true,
            Wcet::Top => false,
            Wcet::Time(u) => {
                let l = lower.cycles().unwrap_or(0).min(u);
                (u - l) as f64 / u as f64 <= e
            }
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub elapsed_ms: f64,
    pub lower: Wcet,
    pub upper: Wcet,
    pub ai_leaves: usize,
    pub dominated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stats {
    pub symsteps: usize,
    /// Largest number of times one `(node, transition)` pair was stepped.
    pub max_step_multiplicity: usize,
    pub subsumption_hits: usize,
    pub ai_invocations: usize,
    pub ai_memo_hits: usize,
    pub nodes: usize,
}

/// One refinement: which leaf was chosen and how it looked at that moment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    pub node: NodeId,
    pub point: String,
    pub through_upper: Wcet,
    pub trail_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub final_lower: Wcet,
    pub final_upper: Wcet,
    pub exact: bool,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TraceRow>,
    /// The bound of the initial whole-program AI leaf.
    pub ai_upper: Wcet,
    /// A complete path achieving `final_lower`.
    pub worst_path: Option<Path>,
    pub refinements: Vec<Refinement>,
    pub stats: Stats,
}

/// Picks the leaf with the largest through-upper bound; ties go to the
/// shorter trail, then the smaller point name, then the older node.
pub fn refinement_heuristic(ts: &TransitionSystem, nodes: &[Node], candidates: &[NodeId]) -> Option<NodeId> {
    candidates.iter().copied().min_by(|&a, &b| {
        let (na, nb) = (&nodes[a], &nodes[b]);
        nb.through_upper()
            .cmp(&na.through_upper())
            .then(na.state.trail.len().cmp(&nb.state.trail.len()))
            .then(ts.point_name(na.state.point).cmp(ts.point_name(nb.state.point)))
            .then(a.cmp(&b))
    })
}

/// The tree together with the machinery that grows it.
pub struct Hset<'a> {
    ts: &'a TransitionSystem,
    cfg: CacheConfig,
    opts: RunOptions,
    engine: AiEngine<'a>,
    nodes: Vec<Node>,
    leaves: BTreeSet<NodeId>,
    index: BTreeMap<PointId, Vec<NodeId>>,
    indexed: BTreeSet<NodeId>,
    steps: HashMap<(NodeId, TransitionId), usize>,
    subsumption_hits: usize,
}

impl<'a> Hset<'a> {
    /// The root state with a single AI leaf summarizing the whole program.
    pub fn new(ts: &'a TransitionSystem, cfg: CacheConfig, opts: RunOptions) -> Result<Self, AnalysisError> {
        let engine = AiEngine::new(ts, cfg)?;
        let mut h = Hset {
            ts,
            cfg,
            opts,
            engine,
            nodes: Vec::new(),
            leaves: BTreeSet::new(),
            index: BTreeMap::new(),
            indexed: BTreeSet::new(),
            steps: HashMap::new(),
            subsumption_hits: 0,
        };
        let root = h.alloc(SymbolicState::initial(ts), None);
        if ts.is_terminal(ts.start()) {
            h.make_terminal(root);
        } else {
            h.make_leaf(root, &[]);
        }
        Ok(h)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    /// Nodes at a program point, in creation order.
    pub fn nodes_at(&self, name: &str) -> Vec<NodeId> {
        let Some(p) = self.ts.point_id(name) else {
            return Vec::new();
        };
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].state.point == p)
            .collect()
    }

    pub fn ai_leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.leaves.iter().copied()
    }

    pub fn is_dominated(&self, id: NodeId) -> bool {
        dominates(self.root(), &self.nodes[id])
    }

    /// Leaves still worth refining.
    pub fn refinable(&self) -> Vec<NodeId> {
        self.leaves
            .iter()
            .copied()
            .filter(|&id| !self.nodes[id].ann.is_exact())
            .filter(|&id| !self.opts.domination || !self.is_dominated(id))
            .collect()
    }

    pub fn stats(&self) -> Stats {
        Stats {
            symsteps: self.steps.values().sum(),
            max_step_multiplicity: self.steps.values().copied().max().unwrap_or(0),
            subsumption_hits: self.subsumption_hits,
            ai_invocations: self.engine.invocations,
            ai_memo_hits: self.engine.memo_hits,
            nodes: self.nodes.len(),
        }
    }

    fn alloc(&mut self, state: SymbolicState, parent: Option<NodeId>) -> NodeId {
        self.nodes.push(Node {
            state,
            kind: NodeKind::Expanded,
            ann: Annotation {
                lower: Wcet::Bottom,
                upper: Wcet::Bottom,
                witnesses: Vec::new(),
                interpolant: None,
            },
            condition: None,
            realized: None,
            children: Vec::new(),
            parent,
            projection: OnceCell::new(),
        });
        self.nodes.len() - 1
    }

    fn projection(&self, id: NodeId) -> &Conjunction {
        let n = &self.nodes[id];
        n.projection.get_or_init(|| symex::project(self.ts, &n.state))
    }

    fn finalize(&mut self, id: NodeId) {
        let n = &mut self.nodes[id];
        if n.ann.is_exact() {
            n.ann.witnesses.clear();
            n.ann.interpolant = n.condition.clone();
        } else {
            n.ann.interpolant = None;
        }
        let reusable = matches!(n.kind, NodeKind::Expanded) && n.ann.interpolant.is_some() && n.realized.is_some();
        if reusable && self.indexed.insert(id) {
            self.index.entry(n.state.point).or_default().push(id);
        }
    }

    fn make_terminal(&mut self, id: NodeId) {
        let n = &mut self.nodes[id];
        n.kind = NodeKind::Terminal;
        n.ann.lower = Wcet::ZERO;
        n.ann.upper = Wcet::ZERO;
        n.ann.witnesses.clear();
        n.condition = Some(Conjunction::truth());
        n.realized = Some(Vec::new());
        self.finalize(id);
    }

    fn make_infeasible(&mut self, id: NodeId) {
        let n = &mut self.nodes[id];
        n.kind = NodeKind::Infeasible;
        n.ann.lower = Wcet::Bottom;
        n.ann.upper = Wcet::Bottom;
        n.ann.witnesses.clear();
        n.condition = None;
        n.realized = None;
        self.finalize(id);
    }

    /// Summarizes a state by abstract interpretation at `α(v)`, keeping the
    /// tightest bound among the fresh result and the inherited analyses.
    fn make_leaf(&mut self, id: NodeId, inherited: &[Rc<AiResult>]) {
        let ctx = AbstractContext::from_state(self.ts, &self.cfg, &self.nodes[id].state);
        let q = self.nodes[id].state.point;
        let fresh = self.engine.analyze(&ctx, q);
        let mut best = Rc::clone(&fresh);
        let mut best_ctx = ctx;
        for a in inherited {
            if a.per_point_upper[q.index()] < best.per_point_upper[q.index()] {
                best = Rc::clone(a);
                best_ctx = a.contexts[q.index()].clone();
            }
        }
        let mut analyses = vec![fresh];
        for a in inherited {
            if !analyses.iter().any(|b| Rc::ptr_eq(a, b)) {
                analyses.push(Rc::clone(a));
            }
        }
        let upper = best.per_point_upper[q.index()];
        let witness = best.witness_from(self.ts, q);
        let n = &mut self.nodes[id];
        n.kind = NodeKind::AiLeaf { analyses };
        n.ann.lower = Wcet::Bottom;
        n.ann.upper = upper;
        n.ann.witnesses = if upper.is_bottom() { Vec::new() } else { vec![witness] };
        n.condition = Some(best_ctx.as_conjunction());
        n.realized = None;
        n.children.clear();
        self.leaves.insert(id);
        self.finalize(id);
    }

    /// Subsumption: an exact node at the same point whose interpolant the
    /// candidate entails, whose abstract context covers the candidate's,
    /// and whose realizing path replays from the candidate at equal cost.
    fn find_subsumer(&self, cand: &SymbolicState) -> Option<NodeId> {
        let ids = self.index.get(&cand.point)?;
        let cand_cache = MustCache::from_concrete(&cand.cache, &self.cfg);
        let mut cand_proj: Option<Conjunction> = None;
        let mut cand_ctx: Option<AbstractContext> = None;
        ids.iter()
            .find(|&&d| self.subsumes(d, cand, &cand_cache, &mut cand_proj, &mut cand_ctx))
            .copied()
    }

    fn subsumes(
        &self,
        d: NodeId,
        cand: &SymbolicState,
        cand_cache: &MustCache,
        cand_proj: &mut Option<Conjunction>,
        cand_ctx: &mut Option<AbstractContext>,
    ) -> bool {
        let done = &self.nodes[d];
        let (Some(psi), Some(realized)) = (&done.ann.interpolant, &done.realized) else {
            return false;
        };
        if !done.ann.is_exact() {
            return false;
        }
        let done_cache = MustCache::from_concrete(&done.state.cache, &self.cfg);
        if !cand_cache.leq(&done_cache) {
            return false;
        }
        let proj = cand_proj.get_or_insert_with(|| symex::project(self.ts, cand));
        if solver::entails(proj, psi) != Entailment::Yes {
            return false;
        }
        let ctx = cand_ctx.get_or_insert_with(|| AbstractContext::from_state(self.ts, &self.cfg, cand));
        let done_ctx = AbstractContext::from_state(self.ts, &self.cfg, &done.state);
        if !ctx.leq(&done_ctx) {
            return false;
        }
        // Replay the realizing path: it must stay feasible and cost the same.
        let mut s = cand.clone();
        for &t in realized {
            match symstep(self.ts, &self.cfg, &s, t) {
                Ok(symex::Step::Feasible(next)) => s = next,
                _ => return false,
            }
        }
        if !matches!(solver::check(&s.path_condition), Ok(Outcome::Sat(_))) {
            return false;
        }
        Wcet::Time(s.prefix_cost - cand.prefix_cost) == done.ann.lower
    }

    /// Unfolds a node. Base cases in order: infeasible, terminal, subsumed,
    /// spine finished; otherwise step the witness transition first and then
    /// its siblings.
    fn unfold(
        &mut self,
        id: NodeId,
        feasible: bool,
        sigma: &[TransitionId],
        spine_done: &mut bool,
        inherited: &[Rc<AiResult>],
    ) {
        if !feasible {
            self.make_infeasible(id);
            *spine_done = true;
            return;
        }
        if self.nodes[id].state.is_terminal(self.ts) {
            self.make_terminal(id);
            *spine_done = true;
            return;
        }
        if self.opts.subsumption {
            if let Some(d) = self.find_subsumer(&self.nodes[id].state) {
                let copy = self.nodes[d].clone();
                let n = &mut self.nodes[id];
                n.kind = NodeKind::Subsumed { by: d };
                n.ann = copy.ann;
                n.condition = copy.condition;
                n.realized = copy.realized;
                n.children.clear();
                self.subsumption_hits += 1;
                *spine_done = true;
                return;
            }
        }
        let point = self.nodes[id].state.point;
        let on_spine = sigma.first().filter(|t| self.ts.transition(**t).src == point);
        let (false, Some(&first)) = (*spine_done, on_spine) else {
            self.make_leaf(id, inherited);
            return;
        };

        self.nodes[id].kind = NodeKind::Expanded;
        self.nodes[id].children.clear();
        let mut order = vec![first];
        order.extend(self.ts.outgoing(point).iter().copied().filter(|t| *t != first));
        for t in order {
            *self.steps.entry((id, t)).or_default() += 1;
            let step =
                symstep(self.ts, &self.cfg, &self.nodes[id].state, t).expect("transition leaves the state's point");
            let feasible = step.is_feasible();
            let child_state = match step {
                symex::Step::Feasible(s) | symex::Step::Infeasible(s) => s,
            };
            let child = self.alloc(child_state, Some(id));
            self.nodes[id].children.push((t, child));
            let rest: &[TransitionId] = if t == first { &sigma[1..] } else { &[] };
            self.unfold(child, feasible, rest, spine_done, inherited);
        }
        self.nodes[id].children.sort();
        self.aggregate(id);
    }

    /// Recomputes an expanded node from its children (joined over the
    /// children shifted by their edge costs, interpolant via wlp).
    fn aggregate(&mut self, id: NodeId) {
        let children = self.nodes[id].children.clone();
        let prefix = self.nodes[id].state.prefix_cost;
        let mut acc = Bounds::infeasible();
        let mut realized: Option<Path> = None;
        let mut best_lower = Wcet::Bottom;
        let mut condition = Some(Conjunction::truth());
        for &(t, c) in &children {
            let child = &self.nodes[c];
            let edge = Wcet::Time(child.state.prefix_cost - prefix);
            let shifted = Bounds {
                lower: edge.accumulate(&child.ann.lower),
                upper: edge.accumulate(&child.ann.upper),
                witnesses: child
                    .ann
                    .witnesses
                    .iter()
                    .map(|w| std::iter::once(t).chain(w.iter().copied()).collect())
                    .collect(),
            };
            if best_lower < shifted.lower {
                best_lower = shifted.lower;
                realized = child
                    .realized
                    .as_ref()
                    .map(|r| std::iter::once(t).chain(r.iter().copied()).collect());
            }
            acc = combine(&acc, &shifted);
            if condition.is_some() {
                let child_cond = child.condition.clone();
                let pre = wlp_approx(child_cond.as_ref(), &self.ts.transition(t).op, self.projection(id));
                condition = match (condition, pre) {
                    (Some(a), Some(b)) => Some(a.and(&b)),
                    _ => None,
                };
            }
        }
        let n = &mut self.nodes[id];
        n.ann.lower = acc.lower;
        n.ann.upper = acc.upper;
        n.ann.witnesses = acc.witnesses;
        n.realized = realized;
        n.condition = condition;
        self.finalize(id);
    }

    /// Refines one AI leaf along its witness and propagates back to the root.
    pub fn refine(&mut self, leaf: NodeId) {
        let NodeKind::AiLeaf { analyses } = &self.nodes[leaf].kind else {
            panic!("refine expects an AI leaf");
        };
        let analyses = analyses.clone();
        let sigma = self.nodes[leaf].ann.witnesses.first().cloned().unwrap_or_default();
        self.leaves.remove(&leaf);
        let mut spine_done = false;
        self.unfold(leaf, true, &sigma, &mut spine_done, &analyses);
        self.propagate_back(leaf);
    }

    /// Re-aggregates every ancestor of `id` up to the root.
    pub fn propagate_back(&mut self, id: NodeId) {
        let mut at = self.nodes[id].parent;
        while let Some(p) = at {
            self.aggregate(p);
            at = self.nodes[p].parent;
        }
    }

    fn trace_row(&self, iteration: usize, start: Instant) -> TraceRow {
        let root = self.root();
        TraceRow {
            iteration,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            lower: root.through_lower(),
            upper: root.through_upper(),
            ai_leaves: self.leaves.len(),
            dominated: self.leaves.iter().filter(|&&l| self.is_dominated(l)).count(),
        }
    }
}

/// The anytime driver: refine until the bounds heuristic holds or the
/// budget runs out. Valid bounds are reported either way.
pub fn incremental_analysis(
    ts: &TransitionSystem,
    cfg: &CacheConfig,
    opts: &RunOptions,
) -> Result<Report, AnalysisError> {
    let start = Instant::now();
    let mut h = Hset::new(ts, *cfg, opts.clone())?;
    let ai_upper = h.root().through_upper();
    let mut trace = vec![h.trace_row(0, start)];
    let mut refinements = Vec::new();
    let mut iterations = 0;
    let status = loop {
        let r = h.refinable();
        let root = h.root();
        if bounds_heuristic(root.through_lower(), root.through_upper(), r.len(), opts.mode) {
            break Status::Converged;
        }
        let out_of_time = opts.budget.is_some_and(|b| start.elapsed() >= b);
        let out_of_iterations = opts.max_iterations.is_some_and(|m| iterations >= m);
        if out_of_time || out_of_iterations {
            break Status::BudgetExhausted;
        }
        let pick = refinement_heuristic(ts, h.nodes(), &r).expect("refinable set is non-empty");
        let n = h.node(pick);
        refinements.push(Refinement {
            node: pick,
            point: ts.point_name(n.state.point).to_string(),
            through_upper: n.through_upper(),
            trail_len: n.state.trail.len(),
        });
        h.refine(pick);
        iterations += 1;
        trace.push(h.trace_row(iterations, start));
    };
    let root = h.root();
    Ok(Report {
        final_lower: root.through_lower(),
        final_upper: root.through_upper(),
        exact: root.through_lower() == root.through_upper(),
        iterations,
        status,
        trace,
        ai_upper,
        worst_path: root.realized.clone(),
        refinements,
        stats: h.stats(),
    })
}
