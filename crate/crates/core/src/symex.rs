//! Symbolic states and symbolic execution of single transitions.
//!
//! Program variable `i` starts out as the input symbol `VarId(n + i)` where
//! `n` is the number of program variables, so stores and path conditions
//! never mention program variables directly.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::cache::{path_cost, CacheConfig, ConcreteCache};
use crate::ir::{Op, PointId, TransitionId, TransitionSystem};
use crate::lattice::Wcet;
use crate::linear::{LinExpr, Rel, VarId};
use crate::solver::{self, Conjunction, Constraint, Satisfiability, SolverError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SymexError {
    #[error("transition starts at point {expected} but the state is at {actual}")]
    WrongSource { expected: u32, actual: u32 },
    #[error("theta of a non-terminal state at point {0}")]
    NotTerminal(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicState {
    pub point: PointId,
    /// Value of each program variable as a term over input symbols.
    pub store: Vec<LinExpr>,
    pub path_condition: Conjunction,
    pub trail: Vec<TransitionId>,
    /// Cache contents after running `trail` from a cold cache.
    pub cache: ConcreteCache,
    /// θ of `trail`.
    pub prefix_cost: u64,
}

pub fn input_symbol(ts: &TransitionSystem, v: VarId) -> VarId {
    VarId(ts.num_vars() as u32 + v.0)
}

impl SymbolicState {
    /// `⟨ℓstart, identity store, true, ε⟩`.
    pub fn initial(ts: &TransitionSystem) -> Self {
        SymbolicState {
            point: ts.start(),
            store: (0..ts.num_vars() as u32)
                .map(|i| LinExpr::var(input_symbol(ts, VarId(i))))
                .collect(),
            path_condition: Conjunction::truth(),
            trail: Vec::new(),
            cache: ConcreteCache::empty(),
            prefix_cost: 0,
        }
    }

    pub fn is_terminal(&self, ts: &TransitionSystem) -> bool {
        ts.is_terminal(self.point)
    }

    /// The derived fields agree with a from-scratch simulation of the trail.
    pub fn is_consistent(&self, ts: &TransitionSystem, cfg: &CacheConfig) -> bool {
        let mut cache = ConcreteCache::empty();
        let cost = crate::cache::path_cost_from(ts, &self.trail, cfg, &mut cache);
        cost == self.prefix_cost && cache == self.cache
    }

    fn eval(&self, e: &LinExpr) -> Option<LinExpr> {
        e.substitute(|v| self.store.get(v.index()).cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Feasible(SymbolicState),
    /// The successor whose path condition the solver refuted.
    Infeasible(SymbolicState),
}

impl Step {
    pub fn state(&self) -> &SymbolicState {
        match self {
            Step::Feasible(s) | Step::Infeasible(s) => s,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Step::Feasible(_))
    }
}

/// Executes one transition symbolically. Only a solver-proven `Unsat` makes
/// the successor infeasible.
pub fn symstep(
    ts: &TransitionSystem,
    cfg: &CacheConfig,
    v: &SymbolicState,
    t: TransitionId,
) -> Result<Step, SymexError> {
    let tr = ts.transition(t);
    if tr.src != v.point {
        return Err(SymexError::WrongSource {
            expected: tr.src.0,
            actual: v.point.0,
        });
    }
    let mut next = v.clone();
    next.point = tr.dst;
    next.trail.push(t);
    let step = next.cache.run(&tr.cost, cfg);
    next.prefix_cost = next.prefix_cost.saturating_add(step);
    debug_assert!(next.trail.len() > 64 || next.is_consistent(ts, cfg));

    match &tr.op {
        Op::Assign { var, expr } => {
            // Overflowing terms cannot be represented; forget the variable by
            // binding it to a fresh symbol.
            let value = v.eval(expr).unwrap_or_else(|| fresh_symbol(ts, v));
            next.store[var.index()] = value;
            Ok(Step::Feasible(next))
        }
        Op::Assume(c) => {
            let guard = v
                .eval(&c.lhs)
                .zip(v.eval(&c.rhs))
                .and_then(|(l, r)| l.checked_sub(&r))
                .map(|d| Constraint::from_linear(&d, c.rel));
            match guard {
                Some(Ok(k)) => {
                    next.path_condition.push(k);
                    if solver::is_satisfiable(&next.path_condition) == Satisfiability::Unsat {
                        Ok(Step::Infeasible(next))
                    } else {
                        Ok(Step::Feasible(next))
                    }
                }
                // Unrepresentable guard: keep the path, learn nothing.
                _ => Ok(Step::Feasible(next)),
            }
        }
    }
}

fn fresh_symbol(ts: &TransitionSystem, v: &SymbolicState) -> LinExpr {
    let used: BTreeSet<VarId> = v
        .store
        .iter()
        .flat_map(|e| e.vars().collect::<Vec<_>>())
        .chain(v.path_condition.vars())
        .collect();
    let floor = 2 * ts.num_vars() as u32;
    let next = used.iter().map(|s| s.0 + 1).max().unwrap_or(floor).max(floor);
    LinExpr::var(VarId(next))
}

/// `⟦v⟧`: the path condition and store as a constraint over program
/// variables, with input symbols eliminated.
pub fn try_project(ts: &TransitionSystem, v: &SymbolicState) -> Result<Conjunction, SolverError> {
    let mut c = v.path_condition.clone();
    for (i, term) in v.store.iter().enumerate() {
        let mut eq = LinExpr::var(VarId(i as u32));
        eq = eq.checked_sub(term).ok_or(SolverError::ResourceLimit("store term"))?;
        c.push(Constraint::from_linear(&eq, Rel::Eq)?);
    }
    let keep: BTreeSet<VarId> = (0..ts.num_vars() as u32).map(VarId).collect();
    solver::project(&c, &keep)
}

/// Like [`try_project`], falling back to `true` (a sound weakening) when
/// elimination exceeds the solver's limits.
pub fn project(ts: &TransitionSystem, v: &SymbolicState) -> Conjunction {
    try_project(ts, v).unwrap_or_else(|_| Conjunction::truth())
}

/// θ of a complete path.
pub fn theta(ts: &TransitionSystem, v: &SymbolicState) -> Result<Wcet, SymexError> {
    if !v.is_terminal(ts) {
        return Err(SymexError::NotTerminal(v.point.0));
    }
    Ok(Wcet::Time(v.prefix_cost))
}

/// θ recomputed from the trail alone.
pub fn theta_of_trail(ts: &TransitionSystem, cfg: &CacheConfig, trail: &[TransitionId]) -> Wcet {
    Wcet::Time(path_cost(ts, trail, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::linear::Comparison;

    const PROG: &str = "\
vars x
point a
point b
point c
point d terminal
start a
trans a -> b assume x >= 5 cost 3 access 4
trans b -> c assume x < 5 cost 1
trans b -> d assign x := x + 1 cost 2 access 8 4
trans c -> d assume 0 = 0
";

    fn setup() -> (TransitionSystem, CacheConfig) {
        (parse_program(PROG).unwrap(), CacheConfig::new(4, 0, 10))
    }

    fn step(ts: &TransitionSystem, cfg: &CacheConfig, v: &SymbolicState, t: u32) -> Step {
        symstep(ts, cfg, v, TransitionId(t)).unwrap()
    }

    fn ge(v: u32, k: i64) -> Constraint {
        Constraint::from_comparison(&Comparison::new(LinExpr::var(VarId(v)), Rel::Ge, LinExpr::constant(k))).unwrap()
    }

    #[test]
    fn assume_extends_the_path_condition() {
        let (ts, cfg) = setup();
        let root = SymbolicState::initial(&ts);
        let Step::Feasible(s) = step(&ts, &cfg, &root, 0) else {
            panic!()
        };
        // x is input symbol #1
        assert_eq!(s.path_condition, Conjunction::from_constraints([ge(1, 5)]));
        assert_eq!(s.prefix_cost, 13);
        assert!(matches!(step(&ts, &cfg, &s, 1), Step::Infeasible(_)));
    }

    #[test]
    fn assignment_substitutes() {
        let (ts, cfg) = setup();
        let root = SymbolicState::initial(&ts);
        let Step::Feasible(s) = step(&ts, &cfg, &root, 0) else {
            panic!()
        };
        let Step::Feasible(t) = step(&ts, &cfg, &s, 2) else {
            panic!()
        };
        let mut expect = LinExpr::var(VarId(1));
        expect.add_constant(1);
        assert_eq!(t.store[0], expect);
        assert_eq!(t.path_condition, s.path_condition);
        // 3 + miss(4) + 2 + miss(8) + miss(4): blocks 4 and 8 conflict
        assert_eq!(theta(&ts, &t).unwrap(), Wcet::Time(3 + 10 + 2 + 10 + 10));
        assert!(t.is_consistent(&ts, &cfg));
        assert_eq!(theta_of_trail(&ts, &cfg, &t.trail), Wcet::Time(35));
        assert!(matches!(theta(&ts, &s), Err(SymexError::NotTerminal(_))));
    }

    #[test]
    fn wrong_source_is_rejected() {
        let (ts, cfg) = setup();
        let root = SymbolicState::initial(&ts);
        assert!(matches!(
            symstep(&ts, &cfg, &root, TransitionId(1)),
            Err(SymexError::WrongSource { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let (ts, cfg) = setup();
        let root = SymbolicState::initial(&ts);
        assert!(project(&ts, &root).is_true());
        let Step::Feasible(s) = step(&ts, &cfg, &root, 0) else {
            panic!()
        };
        assert_eq!(project(&ts, &s), Conjunction::from_constraints([ge(0, 5)]));
        let Step::Feasible(t) = step(&ts, &cfg, &s, 2) else {
            panic!()
        };
        assert_eq!(project(&ts, &t), Conjunction::from_constraints([ge(0, 6)]));
    }
}
