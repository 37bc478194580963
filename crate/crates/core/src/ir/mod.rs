//! Program representation: a transition system over integer variables whose
//! edges carry basic-block timing (static cycles plus instruction-cache
//! accesses).

mod parse;
mod unroll;

pub use parse::{parse_program, print_program};
pub use unroll::unroll_loops;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::linear::{Comparison, LinExpr, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PointId(pub u32);

impl PointId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransitionId(pub u32);

impl TransitionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Memory block (cache line) identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Assign { var: VarId, expr: LinExpr },
    Assume(Comparison),
}

impl Op {
    pub fn vars(&self) -> Vec<VarId> {
        match self {
            Op::Assign { var, expr } => std::iter::once(*var).chain(expr.vars()).collect(),
            Op::Assume(c) => c.vars().collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CostAnnotation {
    pub static_cycles: u64,
    pub accesses: Vec<BlockId>,
}

impl CostAnnotation {
    pub fn new(static_cycles: u64, accesses: impl IntoIterator<Item = u64>) -> Self {
        CostAnnotation {
            static_cycles,
            accesses: accesses.into_iter().map(BlockId).collect(),
        }
    }

    pub fn cycles(static_cycles: u64) -> Self {
        Self::new(static_cycles, [])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub src: PointId,
    pub dst: PointId,
    pub op: Op,
    pub cost: CostAnnotation,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{message}")]
    Semantic { message: String },
    #[error("loop without a bound through {}", cycle.join(" -> "))]
    UnboundedLoop { cycle: Vec<String> },
}

impl IrError {
    fn semantic(message: impl Into<String>) -> Self {
        IrError::Semantic {
            message: message.into(),
        }
    }
}

/// `⟨Σ, ℓstart, →, O⟩` plus the declared variables and loop bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionSystem {
    vars: Vec<String>,
    points: Vec<String>,
    start: PointId,
    terminals: BTreeSet<PointId>,
    transitions: Vec<Transition>,
    loop_bounds: BTreeMap<PointId, u32>,
    outgoing: Vec<Vec<TransitionId>>,
    incoming: Vec<Vec<TransitionId>>,
}

impl TransitionSystem {
    /// Checks structural well-formedness (identifiers resolve, start and
    /// terminals exist, at least one terminal) and indexes the edges.
    pub fn new(
        vars: Vec<String>,
        points: Vec<String>,
        start: PointId,
        terminals: BTreeSet<PointId>,
        transitions: Vec<Transition>,
        loop_bounds: BTreeMap<PointId, u32>,
    ) -> Result<Self, IrError> {
        let mut seen = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            if seen.insert(p.as_str(), i).is_some() {
                return Err(IrError::semantic(format!("duplicate point `{p}`")));
            }
        }
        let mut seen_vars = BTreeSet::new();
        for v in &vars {
            if !seen_vars.insert(v.as_str()) {
                return Err(IrError::semantic(format!("duplicate variable `{v}`")));
            }
        }
        let np = points.len();
        if start.index() >= np {
            return Err(IrError::semantic("start point is not declared"));
        }
        if terminals.is_empty() {
            return Err(IrError::semantic("no terminal point declared"));
        }
        if let Some(t) = terminals.iter().find(|t| t.index() >= np) {
            return Err(IrError::semantic(format!("terminal {} is not declared", t.0)));
        }
        if let Some(h) = loop_bounds.keys().find(|h| h.index() >= np) {
            return Err(IrError::semantic(format!("loop header {} is not declared", h.0)));
        }
        if let Some((h, _)) = loop_bounds.iter().find(|(_, n)| **n == 0) {
            return Err(IrError::semantic(format!(
                "loop bound of `{}` must be positive",
                points[h.index()]
            )));
        }
        let mut outgoing = vec![Vec::new(); np];
        let mut incoming = vec![Vec::new(); np];
        for (i, t) in transitions.iter().enumerate() {
            if t.src.index() >= np || t.dst.index() >= np {
                return Err(IrError::semantic(format!("transition {i} has a dangling endpoint")));
            }
            if let Some(v) = t.op.vars().into_iter().find(|v| v.index() >= vars.len()) {
                return Err(IrError::semantic(format!(
                    "transition {i} references undeclared variable #{}",
                    v.0
                )));
            }
            outgoing[t.src.index()].push(TransitionId(i as u32));
            incoming[t.dst.index()].push(TransitionId(i as u32));
        }
        Ok(TransitionSystem {
            vars,
            points,
            start,
            terminals,
            transitions,
            loop_bounds,
            outgoing,
            incoming,
        })
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var_name(&self, v: VarId) -> &str {
        self.vars.get(v.index()).map(String::as_str).unwrap_or("?")
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name).map(|i| VarId(i as u32))
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn point_ids(&self) -> impl Iterator<Item = PointId> {
        (0..self.points.len() as u32).map(PointId)
    }

    pub fn point_name(&self, p: PointId) -> &str {
        &self.points[p.index()]
    }

    pub fn point_id(&self, name: &str) -> Option<PointId> {
        self.points.iter().position(|p| p == name).map(|i| PointId(i as u32))
    }

    pub fn start(&self) -> PointId {
        self.start
    }

    pub fn terminals(&self) -> &BTreeSet<PointId> {
        &self.terminals
    }

    pub fn is_terminal(&self, p: PointId) -> bool {
        self.terminals.contains(&p)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, t: TransitionId) -> &Transition {
        &self.transitions[t.index()]
    }

    pub fn outgoing(&self, p: PointId) -> &[TransitionId] {
        &self.outgoing[p.index()]
    }

    pub fn incoming(&self, p: PointId) -> &[TransitionId] {
        &self.incoming[p.index()]
    }

    pub fn loop_bounds(&self) -> &BTreeMap<PointId, u32> {
        &self.loop_bounds
    }

    /// Names a variable for display; closures built from this are handed to
    /// the expression printers.
    pub fn var_namer(&self) -> impl Fn(VarId) -> String + Clone + '_ {
        move |v| self.var_name(v).to_string()
    }

    /// Topological order of all points, or `None` if the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<PointId>> {
        let n = self.points.len();
        let mut indeg: Vec<usize> = (0..n).map(|i| self.incoming[i].len()).collect();
        let mut ready: Vec<PointId> = (0..n as u32).map(PointId).filter(|p| indeg[p.index()] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(n);
        while let Some(p) = ready.pop() {
            order.push(p);
            for &t in self.outgoing(p).iter().rev() {
                let d = self.transition(t).dst;
                indeg[d.index()] -= 1;
                if indeg[d.index()] == 0 {
                    ready.push(d);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().is_some()
    }

    /// Points reachable from `from` (paths stop at terminals).
    pub fn reachable_from(&self, from: PointId) -> Vec<bool> {
        let mut seen = vec![false; self.points.len()];
        let mut stack = vec![from];
        seen[from.index()] = true;
        while let Some(p) = stack.pop() {
            if self.is_terminal(p) {
                continue;
            }
            for &t in self.outgoing(p) {
                let d = self.transition(t).dst;
                if !seen[d.index()] {
                    seen[d.index()] = true;
                    stack.push(d);
                }
            }
        }
        seen
    }

    /// Points from which some terminal is reachable.
    pub fn reaches_terminal(&self) -> Vec<bool> {
        let mut ok = vec![false; self.points.len()];
        let mut stack: Vec<PointId> = self.terminals.iter().copied().collect();
        for t in &stack {
            ok[t.index()] = true;
        }
        while let Some(p) = stack.pop() {
            for &t in self.incoming(p) {
                let s = self.transition(t).src;
                if !ok[s.index()] && !self.is_terminal(s) {
                    ok[s.index()] = true;
                    stack.push(s);
                }
            }
        }
        ok
    }

    /// Number of syntactic start-to-terminal paths (saturating). `None` on a
    /// cyclic graph.
    pub fn count_paths(&self) -> Option<u128> {
        let order = self.topo_order()?;
        let mut count = vec![0u128; self.points.len()];
        for &p in order.iter().rev() {
            count[p.index()] = if self.is_terminal(p) {
                1
            } else {
                self.outgoing(p)
                    .iter()
                    .map(|&t| count[self.transition(t).dst.index()])
                    .fold(0u128, |a, b| a.saturating_add(b))
            };
        }
        Some(count[self.start.index()])
    }

    /// Human-readable rendering of a transition sequence as point names.
    pub fn describe_path(&self, path: &[TransitionId]) -> String {
        match path.first() {
            None => String::from("(empty)"),
            Some(&first) => {
                let mut s = self.point_name(self.transition(first).src).to_string();
                for &t in path {
                    s.push_str(" -> ");
                    s.push_str(self.point_name(self.transition(t).dst));
                }
                s
            }
        }
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        validate(self)
    }
}

/// One violated well-formedness condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    Cycle { points: Vec<String> },
    UnreachablePoint { point: String },
    DeadEndPoint { point: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Cycle { points } => write!(f, "cycle through {}", points.join(", ")),
            Diagnostic::UnreachablePoint { point } => write!(f, "unreachable point `{point}`"),
            Diagnostic::DeadEndPoint { point } => {
                write!(f, "dead-end point `{point}` reaches no terminal")
            }
        }
    }
}

/// Reports cycles, points unreachable from the start, and points that cannot
/// reach a terminal. An empty result means the system is ready for analysis.
pub fn validate(ts: &TransitionSystem) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for scc in unroll::cyclic_components(ts) {
        out.push(Diagnostic::Cycle {
            points: scc.iter().map(|p| ts.point_name(*p).to_string()).collect(),
        });
    }
    let reach = ts.reachable_from(ts.start());
    let live = ts.reaches_terminal();
    for p in ts.point_ids() {
        if !reach[p.index()] {
            out.push(Diagnostic::UnreachablePoint {
                point: ts.point_name(p).to_string(),
            });
        } else if !live[p.index()] {
            out.push(Diagnostic::DeadEndPoint {
                point: ts.point_name(p).to_string(),
            });
        }
    }
    out
}

/// Name-based construction of transition systems, used by the parser, the
/// random program generator, and tests.
#[derive(Debug, Default, Clone)]
pub struct SystemBuilder {
    vars: Vec<String>,
    points: Vec<String>,
    index: HashMap<String, PointId>,
    start: Option<PointId>,
    terminals: BTreeSet<PointId>,
    transitions: Vec<Transition>,
    loop_bounds: BTreeMap<PointId, u32>,
}

impl SystemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: &str) -> VarId {
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            return VarId(i as u32);
        }
        self.vars.push(name.to_string());
        VarId(self.vars.len() as u32 - 1)
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v == name).map(|i| VarId(i as u32))
    }

    /// Declares (or looks up) a point.
    pub fn point(&mut self, name: &str) -> PointId {
        if let Some(&p) = self.index.get(name) {
            return p;
        }
        let id = PointId(self.points.len() as u32);
        self.points.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn terminal(&mut self, name: &str) -> PointId {
        let p = self.point(name);
        self.terminals.insert(p);
        p
    }

    pub fn start(&mut self, name: &str) -> PointId {
        let p = self.point(name);
        self.start = Some(p);
        p
    }

    pub fn loop_bound(&mut self, header: &str, bound: u32) {
        let p = self.point(header);
        self.loop_bounds.insert(p, bound);
    }

    pub fn transition(&mut self, src: &str, dst: &str, op: Op, cost: CostAnnotation) -> TransitionId {
        let src = self.point(src);
        let dst = self.point(dst);
        self.transitions.push(Transition { src, dst, op, cost });
        TransitionId(self.transitions.len() as u32 - 1)
    }

    pub fn assume(&mut self, src: &str, dst: &str, cond: Comparison, cost: CostAnnotation) -> TransitionId {
        self.transition(src, dst, Op::Assume(cond), cost)
    }

    pub fn assign(&mut self, src: &str, dst: &str, var: VarId, expr: LinExpr, cost: CostAnnotation) -> TransitionId {
        self.transition(src, dst, Op::Assign { var, expr }, cost)
    }

    /// A no-op edge (`assume 0 = 0`) carrying only a cost.
    pub fn skip(&mut self, src: &str, dst: &str, cost: CostAnnotation) -> TransitionId {
        let truth = Comparison::new(LinExpr::zero(), crate::linear::Rel::Eq, LinExpr::zero());
        self.assume(src, dst, truth, cost)
    }

    pub fn build(self) -> Result<TransitionSystem, IrError> {
        let start = self.start.ok_or_else(|| IrError::semantic("no start point declared"))?;
        TransitionSystem::new(
            self.vars,
            self.points,
            start,
            self.terminals,
            self.transitions,
            self.loop_bounds,
        )
    }
}
