//! Seeded random generation of small structured acyclic programs.
//!
//! Programs are sequences of assignments and if/else diamonds (possibly
//! nested) over at most four variables. Guards are difference constraints
//! with small constants so that correlated branches, and therefore
//! infeasible paths, are common. Every transition gets a small static cost
//! and a few accesses from a small block pool, so cache effects matter
//! under [`sweep_cache_config`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::CacheConfig;
use crate::ir::{CostAnnotation, SystemBuilder, TransitionSystem};
use crate::linear::{Comparison, LinExpr, Rel, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub max_branches: usize,
    pub max_vars: usize,
    pub max_statements: usize,
    pub max_depth: usize,
    pub blocks: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_branches: 12,
            max_vars: 4,
            max_statements: 6,
            max_depth: 3,
            blocks: 8,
        }
    }
}

/// Cache geometry used with generated programs: few sets, so the block
/// pool conflicts.
pub fn sweep_cache_config() -> CacheConfig {
    CacheConfig::new(4, 1, 10)
}

struct Gen {
    rng: ChaCha8Rng,
    cfg: GenConfig,
    b: SystemBuilder,
    vars: Vec<VarId>,
    points: usize,
    branches: usize,
}

impl Gen {
    fn fresh(&mut self) -> String {
        self.points += 1;
        format!("p{}", self.points)
    }

    fn cost(&mut self) -> CostAnnotation {
        let n = self.rng.gen_range(0..=2);
        let accesses: Vec<u64> = (0..n).map(|_| self.rng.gen_range(0..self.cfg.blocks)).collect();
        CostAnnotation::new(self.rng.gen_range(0..=4), accesses)
    }

    fn var(&mut self) -> VarId {
        self.vars[self.rng.gen_range(0..self.vars.len())]
    }

    fn guard(&mut self) -> Comparison {
        let x = self.var();
        let rel = [Rel::Lt, Rel::Le, Rel::Gt, Rel::Ge, Rel::Eq][self.rng.gen_range(0..5)];
        let mut rhs = if self.rng.gen_bool(0.5) {
            LinExpr::var(self.var())
        } else {
            LinExpr::zero()
        };
        rhs.add_constant(self.rng.gen_range(-3..=3));
        Comparison::new(LinExpr::var(x), rel, rhs)
    }

    fn assignment(&mut self) -> (VarId, LinExpr) {
        let x = self.var();
        let k = self.rng.gen_range(-3..=3);
        let mut e = match self.rng.gen_range(0..3) {
            0 => LinExpr::var(self.var()),
            1 => LinExpr::var(x),
            _ => LinExpr::zero(),
        };
        e.add_constant(k);
        (x, e)
    }

    /// Emits a statement sequence starting at `from`; returns its exit point.
    fn block(&mut self, from: String, depth: usize) -> String {
        let n = self.rng.gen_range(1..=self.cfg.max_statements);
        let mut at = from;
        for _ in 0..n {
            let branch = self.branches < self.cfg.max_branches && depth < self.cfg.max_depth && self.rng.gen_bool(0.6);
            at = if branch {
                self.diamond(at, depth)
            } else {
                self.assign_stmt(at)
            };
        }
        at
    }

    fn assign_stmt(&mut self, from: String) -> String {
        let to = self.fresh();
        let (x, e) = self.assignment();
        let c = self.cost();
        self.b.assign(&from, &to, x, e, c);
        to
    }

    fn diamond(&mut self, from: String, depth: usize) -> String {
        self.branches += 1;
        let g = self.guard();
        let (then_entry, else_entry, join) = (self.fresh(), self.fresh(), self.fresh());
        let c = self.cost();
        self.b.assume(&from, &then_entry, g.clone(), c);
        let c = self.cost();
        self.b.assume(&from, &else_entry, g.negated(), c);
        for entry in [then_entry, else_entry] {
            let exit = if self.rng.gen_bool(0.5) {
                self.block(entry, depth + 1)
            } else {
                entry
            };
            let c = self.cost();
            self.b.skip(&exit, &join, c);
        }
        join
    }
}

pub fn random_program(seed: u64, cfg: &GenConfig) -> TransitionSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const NAMES: [&str; 4] = ["a", "b", "c", "d"];
    let nvars = rng.gen_range(1..=cfg.max_vars.clamp(1, NAMES.len()));
    let mut b = SystemBuilder::new();
    let vars = NAMES[..nvars].iter().map(|n| b.var(n)).collect();
    let mut g = Gen {
        rng,
        cfg: *cfg,
        b,
        vars,
        points: 0,
        branches: 0,
    };
    let start = g.fresh();
    g.b.start(&start);
    let exit = g.block(start, 0);
    g.b.terminal(&exit);
    g.b.build().expect("generated program is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::print_program;

    #[test]
    fn generation_is_deterministic_and_bounded() {
        let cfg = GenConfig::default();
        for seed in 0..50 {
            let ts = random_program(seed, &cfg);
            assert_eq!(print_program(&ts), print_program(&random_program(seed, &cfg)));
            assert!(ts.num_vars() <= 4);
            let branching = ts.point_ids().filter(|&p| ts.outgoing(p).len() > 1).count();
            assert!(branching <= 12);
            assert!(ts.is_acyclic());
            assert!(ts.validate().is_empty(), "{:?}", ts.validate());
        }
    }
}
