//! Base abstract interpretation: intervals plus must-cache, propagated
//! forward over the DAG, followed by a backward longest-path pass that
//! yields a worst-case suffix bound for every point and a witness path.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::cache::{CacheConfig, MustCache};
use crate::ir::{Op, PointId, TransitionId, TransitionSystem};
use crate::lattice::{Accumulate, Lattice, Wcet};
use crate::linear::{Comparison, LinExpr, Rel, VarId};
use crate::solver::{self, Conjunction, Constraint, Kind};
use crate::symex::{self, SymbolicState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbsintError {
    #[error("abstract interpretation needs an acyclic program")]
    Cyclic,
}

/// `[lo, hi]`; `None` is the matching infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub lo: Option<i64>,
    pub hi: Option<i64>,
}

impl Interval {
    pub const TOP: Interval = Interval { lo: None, hi: None };

    pub fn new(lo: Option<i64>, hi: Option<i64>) -> Self {
        Interval { lo, hi }
    }

    pub fn point(k: i64) -> Self {
        Interval::new(Some(k), Some(k))
    }

    pub fn is_top(&self) -> bool {
        self.lo.is_none() && self.hi.is_none()
    }

    pub fn is_empty(&self) -> bool {
        matches!((self.lo, self.hi), (Some(l), Some(h)) if l > h)
    }

    /// `self ⊆ other`.
    pub fn within(&self, other: &Interval) -> bool {
        let lo_ok = match (self.lo, other.lo) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a >= b,
        };
        let hi_ok = match (self.hi, other.hi) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a <= b,
        };
        lo_ok && hi_ok
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.zip(other.lo).map(|(a, b)| a.min(b)),
            hi: self.hi.zip(other.hi).map(|(a, b)| a.max(b)),
        }
    }

    fn meet(&self, other: &Interval) -> Interval {
        let pick = |a: Option<i64>, b: Option<i64>, f: fn(i64, i64) -> i64| match (a, b) {
            (Some(x), Some(y)) => Some(f(x, y)),
            (x, None) => x,
            (None, y) => y,
        };
        Interval {
            lo: pick(self.lo, other.lo, i64::max),
            hi: pick(self.hi, other.hi, i64::min),
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = self.lo.map_or("-inf".to_string(), |l| l.to_string());
        let hi = self.hi.map_or("+inf".to_string(), |h| h.to_string());
        write!(f, "[{lo}, {hi}]")
    }
}

/// Bound arithmetic on `i128` where `None` is infinite.
fn scaled_range(iv: &Interval, c: i64) -> (Option<i128>, Option<i128>) {
    let c = c as i128;
    let lo = iv.lo.map(|x| x as i128 * c);
    let hi = iv.hi.map(|x| x as i128 * c);
    if c >= 0 {
        (lo, hi)
    } else {
        (hi, lo)
    }
}

fn clamp(x: Option<i128>) -> Option<i64> {
    x.and_then(|v| i64::try_from(v).ok())
}

/// Abstract state at a program point: `None` intervals mean unreachable.
/// Variables missing from the map are unconstrained.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstractContext {
    pub intervals: Option<BTreeMap<VarId, Interval>>,
    pub cache: MustCache,
}

impl AbstractContext {
    pub fn top(cfg: &CacheConfig) -> Self {
        AbstractContext {
            intervals: Some(BTreeMap::new()),
            cache: MustCache::unknown(cfg.num_sets),
        }
    }

    pub fn bottom(cfg: &CacheConfig) -> Self {
        AbstractContext {
            intervals: None,
            cache: MustCache::unknown(cfg.num_sets),
        }
    }

    pub fn is_bottom(&self) -> bool {
        self.intervals.is_none()
    }

    pub fn interval(&self, v: VarId) -> Interval {
        match &self.intervals {
            None => Interval::new(Some(1), Some(0)),
            Some(m) => m.get(&v).copied().unwrap_or(Interval::TOP),
        }
    }

    fn set(&mut self, v: VarId, iv: Interval) {
        if let Some(m) = &mut self.intervals {
            if iv.is_empty() {
                self.intervals = None;
            } else if iv.is_top() {
                m.remove(&v);
            } else {
                m.insert(v, iv);
            }
        }
    }

    /// `α(v)`: per-variable bounds of the projected state plus a must-cache
    /// that knows every resident block.
    pub fn from_state(ts: &TransitionSystem, cfg: &CacheConfig, v: &SymbolicState) -> Self {
        let cache = MustCache::from_concrete(&v.cache, cfg);
        let proj = symex::project(ts, v);
        if proj.is_trivially_false() {
            return AbstractContext { intervals: None, cache };
        }
        let mut ctx = AbstractContext {
            intervals: Some(BTreeMap::new()),
            cache,
        };
        for i in 0..ts.num_vars() as u32 {
            let var = VarId(i);
            if !proj.vars().contains(&var) {
                continue;
            }
            match solver::bounds(&proj, var) {
                Ok(Some((lo, hi))) => ctx.set(var, Interval::new(lo, hi)),
                Ok(None) => ctx.intervals = None,
                Err(_) => {}
            }
        }
        ctx
    }

    /// `self ⊑ other`: contained intervals and at least as much cache
    /// knowledge.
    pub fn leq(&self, other: &AbstractContext) -> bool {
        match (&self.intervals, &other.intervals) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => {
                b.iter().all(|(v, ib)| a.get(v).unwrap_or(&Interval::TOP).within(ib)) && self.cache.leq(&other.cache)
            }
        }
    }

    pub fn join(&self, other: &AbstractContext) -> AbstractContext {
        match (&self.intervals, &other.intervals) {
            (None, _) => other.clone(),
            (_, None) => self.clone(),
            (Some(a), Some(b)) => {
                let intervals = a
                    .iter()
                    .filter_map(|(v, ia)| b.get(v).map(|ib| (*v, ia.hull(ib))))
                    .filter(|(_, iv)| !iv.is_top())
                    .collect();
                AbstractContext {
                    intervals: Some(intervals),
                    cache: self.cache.join(&other.cache).expect("contexts share a cache geometry"),
                }
            }
        }
    }

    /// The interval box as a conjunction over program variables.
    pub fn as_conjunction(&self) -> Conjunction {
        let Some(m) = &self.intervals else {
            return Conjunction::falsity();
        };
        let mut out = Conjunction::truth();
        for (v, iv) in m {
            if let Some(l) = iv.lo {
                out.push(Constraint::new([(*v, -1)], Kind::Le, -l).expect("bound fits"));
            }
            if let Some(h) = iv.hi {
                out.push(Constraint::new([(*v, 1)], Kind::Le, h).expect("bound fits"));
            }
        }
        out
    }

    pub fn eval(&self, e: &LinExpr) -> Interval {
        let mut lo = Some(e.const_part() as i128);
        let mut hi = lo;
        for (v, c) in e.terms() {
            let (l, h) = scaled_range(&self.interval(v), c);
            lo = lo.zip(l).map(|(a, b)| a + b);
            hi = hi.zip(h).map(|(a, b)| a + b);
        }
        Interval::new(clamp(lo), clamp(hi))
    }

    /// Guard evaluated over the box: `Some(false)` when no point of the box
    /// satisfies it.
    pub fn may_hold(&self, c: &Comparison) -> bool {
        if self.is_bottom() {
            return false;
        }
        let d = match c.lhs.checked_sub(&c.rhs) {
            Some(d) => self.eval(&d),
            None => return true,
        };
        let (lo, hi) = (d.lo, d.hi);
        match c.rel {
            Rel::Le => lo.is_none_or(|l| l <= 0),
            Rel::Lt => lo.is_none_or(|l| l < 0),
            Rel::Ge => hi.is_none_or(|h| h >= 0),
            Rel::Gt => hi.is_none_or(|h| h > 0),
            Rel::Eq => lo.is_none_or(|l| l <= 0) && hi.is_none_or(|h| h >= 0),
            Rel::Ne => !(lo == Some(0) && hi == Some(0)),
        }
    }

    /// Narrows the box by a guard known to hold (bounds propagation over
    /// each variable of the normalized constraint).
    fn refine(&mut self, c: &Comparison) {
        let Ok(k) = Constraint::from_comparison(c) else {
            return;
        };
        let rows: Vec<(Vec<(VarId, i64)>, i64)> = match k.kind() {
            Kind::Le => vec![(k.coeffs().to_vec(), k.bound())],
            Kind::Eq => {
                let neg: Vec<(VarId, i64)> = k.coeffs().iter().map(|(v, c)| (*v, -c)).collect();
                vec![(k.coeffs().to_vec(), k.bound()), (neg, -k.bound())]
            }
            Kind::Ne => return,
        };
        for (coeffs, bound) in rows {
            for &(x, a) in &coeffs {
                // a·x ≤ bound - Σ_{others} min(cᵢ·xᵢ)
                let mut rest = Some(0i128);
                for &(y, b) in &coeffs {
                    if y != x {
                        let (l, _) = scaled_range(&self.interval(y), b);
                        rest = rest.zip(l).map(|(r, l)| r + l);
                    }
                }
                let Some(rest) = rest else { continue };
                let r = bound as i128 - rest;
                let a = a as i128;
                let limit = if a > 0 {
                    Interval::new(None, clamp(Some(num_integer::Integer::div_floor(&r, &a))))
                } else {
                    Interval::new(clamp(Some(num_integer::Integer::div_ceil(&r, &a))), None)
                };
                let narrowed = self.interval(x).meet(&limit);
                self.set(x, narrowed);
                if self.is_bottom() {
                    return;
                }
            }
        }
    }

    /// Transfer function of one edge (without its cost).
    fn apply(&self, op: &Op) -> AbstractContext {
        let mut next = self.clone();
        match op {
            Op::Assign { var, expr } => {
                let iv = self.eval(expr);
                next.set(*var, iv);
            }
            Op::Assume(c) => {
                if !self.may_hold(c) {
                    next.intervals = None;
                } else {
                    next.refine(c);
                }
            }
        }
        next
    }
}

/// Outcome of one analysis query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AiResult {
    pub at: PointId,
    /// Trivial: `Time(0)` at a terminal, bottom elsewhere.
    pub lower: Wcet,
    pub upper: Wcet,
    pub witness: Vec<TransitionId>,
    /// Worst suffix bound from each point under the forward contexts;
    /// bottom for points the query does not reach.
    pub per_point_upper: Vec<Wcet>,
    pub contexts: Vec<AbstractContext>,
    /// Abstract worst cost of each edge that survived the forward pass.
    pub edge_cost: Vec<Option<u64>>,
    /// Argmax successor edge of each point.
    pub marks: Vec<Option<TransitionId>>,
}

impl AiResult {
    /// Follows the argmax marks from `p` to a terminal.
    pub fn witness_from(&self, ts: &TransitionSystem, p: PointId) -> Vec<TransitionId> {
        let mut out = Vec::new();
        let mut at = p;
        while let Some(t) = self.marks[at.index()] {
            out.push(t);
            at = ts.transition(t).dst;
        }
        out
    }
}

/// The analysis proper, without memoization.
pub fn abstract_interpretation(
    ctx: &AbstractContext,
    at: PointId,
    ts: &TransitionSystem,
    cfg: &CacheConfig,
) -> Result<AiResult, AbsintError> {
    let order = ts.topo_order().ok_or(AbsintError::Cyclic)?;
    Ok(analyze_with_order(ctx, at, ts, cfg, &order))
}

fn analyze_with_order(
    ctx: &AbstractContext,
    at: PointId,
    ts: &TransitionSystem,
    cfg: &CacheConfig,
    order: &[PointId],
) -> AiResult {
    let n = ts.num_points();
    let mut contexts = vec![AbstractContext::bottom(cfg); n];
    let mut edge_cost: Vec<Option<u64>> = vec![None; ts.transitions().len()];
    contexts[at.index()] = ctx.clone();
    let start = order.iter().position(|p| *p == at).expect("point in order");

    // Phase A: forward.
    for &p in &order[start..] {
        let here = contexts[p.index()].clone();
        if here.is_bottom() || ts.is_terminal(p) {
            continue;
        }
        for &t in ts.outgoing(p) {
            let tr = ts.transition(t);
            let mut next = here.apply(&tr.op);
            if next.is_bottom() {
                continue;
            }
            edge_cost[t.index()] = Some(next.cache.run(&tr.cost, cfg));
            let d = tr.dst.index();
            contexts[d] = contexts[d].join(&next);
        }
    }

    // Phase B: backward worst-case suffix.
    let mut upper = vec![Wcet::Bottom; n];
    let mut marks: Vec<Option<TransitionId>> = vec![None; n];
    for &p in order[start..].iter().rev() {
        if contexts[p.index()].is_bottom() {
            continue;
        }
        if ts.is_terminal(p) {
            upper[p.index()] = Wcet::ZERO;
            continue;
        }
        let mut best = Wcet::Bottom;
        let mut mark: Option<TransitionId> = None;
        for &t in ts.outgoing(p) {
            let Some(c) = edge_cost[t.index()] else { continue };
            let dst = ts.transition(t).dst;
            let through = Wcet::Time(c).accumulate(&upper[dst.index()]);
            if through.is_bottom() {
                continue;
            }
            let better = match mark {
                None => true,
                Some(m) => {
                    through > best
                        || through == best && {
                            let (a, b) = (ts.point_name(dst), ts.point_name(ts.transition(m).dst));
                            a < b || a == b && t < m
                        }
                }
            };
            if better {
                best = through;
                mark = Some(t);
            }
        }
        upper[p.index()] = best;
        marks[p.index()] = mark;
    }

    let mut result = AiResult {
        at,
        lower: if ts.is_terminal(at) { Wcet::ZERO } else { Wcet::Bottom },
        upper: upper[at.index()],
        witness: Vec::new(),
        per_point_upper: upper,
        contexts,
        edge_cost,
        marks,
    };
    result.witness = result.witness_from(ts, at);
    debug_assert!(result.lower.leq(&result.upper) || result.upper.is_bottom());
    result
}

/// Memoizing front end keyed by `(point, context)`.
pub struct AiEngine<'a> {
    ts: &'a TransitionSystem,
    cfg: CacheConfig,
    order: Vec<PointId>,
    memo: HashMap<(PointId, AbstractContext), Rc<AiResult>>,
    pub invocations: usize,
    pub memo_hits: usize,
}

impl<'a> AiEngine<'a> {
    pub fn new(ts: &'a TransitionSystem, cfg: CacheConfig) -> Result<Self, AbsintError> {
        let order = ts.topo_order().ok_or(AbsintError::Cyclic)?;
        Ok(AiEngine {
            ts,
            cfg,
            order,
            memo: HashMap::new(),
            invocations: 0,
            memo_hits: 0,
        })
    }

    pub fn analyze(&mut self, ctx: &AbstractContext, at: PointId) -> Rc<AiResult> {
        let key = (at, ctx.clone());
        if let Some(r) = self.memo.get(&key) {
            self.memo_hits += 1;
            return Rc::clone(r);
        }
        self.invocations += 1;
        let r = Rc::new(analyze_with_order(ctx, at, self.ts, &self.cfg, &self.order));
        self.memo.insert(key, Rc::clone(&r));
        r
    }
}
