//! Direct-mapped instruction cache: concrete simulation for exact path
//! costs and must-analysis for safe worst-case costs.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ir::{BlockId, CostAnnotation, TransitionId, TransitionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheConfig {
    pub num_sets: u64,
    pub hit_cost: u64,
    pub miss_penalty: u64,
}

impl Default for CacheConfig {
    /// 4 KiB of 32-instruction lines, 128-cycle miss penalty.
    fn default() -> Self {
        CacheConfig {
            num_sets: 128,
            hit_cost: 0,
            miss_penalty: 128,
        }
    }
}

impl CacheConfig {
    pub fn new(num_sets: u64, hit_cost: u64, miss_penalty: u64) -> Self {
        assert!(num_sets >= 1, "a cache needs at least one set");
        CacheConfig {
            num_sets,
            hit_cost,
            miss_penalty,
        }
    }

    pub fn set_of(&self, b: BlockId) -> u64 {
        b.0 % self.num_sets
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("cache states have {0} and {1} sets")]
    DimensionMismatch(u64, u64),
}

/// Resident block per set; absent sets are empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcreteCache {
    lines: BTreeMap<u64, BlockId>,
}

impl ConcreteCache {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn resident(&self, set: u64) -> Option<BlockId> {
        self.lines.get(&set).copied()
    }

    pub fn lines(&self) -> impl Iterator<Item = (u64, BlockId)> + '_ {
        self.lines.iter().map(|(s, b)| (*s, *b))
    }

    /// Performs one access and returns its cost.
    pub fn access(&mut self, b: BlockId, cfg: &CacheConfig) -> u64 {
        let set = cfg.set_of(b);
        if self.lines.get(&set) == Some(&b) {
            cfg.hit_cost
        } else {
            self.lines.insert(set, b);
            cfg.miss_penalty
        }
    }

    /// Static cycles plus the accesses of one edge, advancing the cache.
    pub fn run(&mut self, cost: &CostAnnotation, cfg: &CacheConfig) -> u64 {
        cost.accesses
            .iter()
            .fold(cost.static_cycles, |acc, b| acc.saturating_add(self.access(*b, cfg)))
    }
}

pub fn concrete_access(state: &ConcreteCache, b: BlockId, cfg: &CacheConfig) -> (ConcreteCache, u64) {
    let mut next = state.clone();
    let cost = next.access(b, cfg);
    (next, cost)
}

/// Must-cache: blocks guaranteed resident. Fewer known blocks means less
/// information; the all-unknown state is top.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MustCache {
    num_sets: u64,
    known: BTreeMap<u64, BlockId>,
}

impl MustCache {
    pub fn unknown(num_sets: u64) -> Self {
        MustCache {
            num_sets,
            known: BTreeMap::new(),
        }
    }

    /// The most precise abstraction of a concrete state.
    pub fn from_concrete(c: &ConcreteCache, cfg: &CacheConfig) -> Self {
        MustCache {
            num_sets: cfg.num_sets,
            known: c.lines.clone(),
        }
    }

    pub fn num_sets(&self) -> u64 {
        self.num_sets
    }

    pub fn known(&self, set: u64) -> Option<BlockId> {
        self.known.get(&set).copied()
    }

    /// Performs one access and returns its worst-case cost.
    pub fn access(&mut self, b: BlockId, cfg: &CacheConfig) -> u64 {
        let set = cfg.set_of(b);
        let hit = self.known.get(&set) == Some(&b);
        self.known.insert(set, b);
        if hit {
            cfg.hit_cost
        } else {
            cfg.miss_penalty
        }
    }

    pub fn run(&mut self, cost: &CostAnnotation, cfg: &CacheConfig) -> u64 {
        cost.accesses
            .iter()
            .fold(cost.static_cycles, |acc, b| acc.saturating_add(self.access(*b, cfg)))
    }

    /// Per-set intersection.
    pub fn join(&self, other: &MustCache) -> Result<MustCache, CacheError> {
        if self.num_sets != other.num_sets {
            return Err(CacheError::DimensionMismatch(self.num_sets, other.num_sets));
        }
        let known = self
            .known
            .iter()
            .filter(|(s, b)| other.known.get(s) == Some(b))
            .map(|(s, b)| (*s, *b))
            .collect();
        Ok(MustCache {
            num_sets: self.num_sets,
            known,
        })
    }

    /// `self ⊑ other`: every block `other` knows, `self` knows too.
    pub fn leq(&self, other: &MustCache) -> bool {
        self.num_sets == other.num_sets && other.known.iter().all(|(s, b)| self.known.get(s) == Some(b))
    }

    /// Whether the concrete state is one this abstract state describes.
    pub fn describes(&self, c: &ConcreteCache) -> bool {
        self.known.iter().all(|(s, b)| c.lines.get(s) == Some(b))
    }
}

pub fn abstract_access(state: &MustCache, b: BlockId, cfg: &CacheConfig) -> (MustCache, u64) {
    let mut next = state.clone();
    let cost = next.access(b, cfg);
    (next, cost)
}

pub fn abstract_join(a: &MustCache, b: &MustCache) -> Result<MustCache, CacheError> {
    a.join(b)
}

/// θ of a transition sequence starting from an empty cache.
pub fn path_cost(ts: &TransitionSystem, path: &[TransitionId], cfg: &CacheConfig) -> u64 {
    path_cost_from(ts, path, cfg, &mut ConcreteCache::empty())
}

/// Suffix cost from a given cache state, which is advanced in place.
pub fn path_cost_from(
    ts: &TransitionSystem,
    path: &[TransitionId],
    cfg: &CacheConfig,
    cache: &mut ConcreteCache,
) -> u64 {
    path.iter().fold(0u64, |acc, t| {
        acc.saturating_add(cache.run(&ts.transition(*t).cost, cfg))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::SystemBuilder;
    use proptest::prelude::*;

    // m1 and m2 share set 0 of a 4-set cache
    const M1: BlockId = BlockId(4);
    const M2: BlockId = BlockId(8);

    fn cfg() -> CacheConfig {
        CacheConfig::new(4, 0, 10)
    }

    #[test]
    fn concrete_hits_and_conflicts() {
        let c = cfg();
        let (s, cost) = concrete_access(&ConcreteCache::empty(), M1, &c);
        assert_eq!((cost, s.resident(0)), (10, Some(M1)));
        let (s2, cost) = concrete_access(&s, M1, &c);
        assert_eq!((cost, &s2), (0, &s));
        let mut s = ConcreteCache::empty();
        let total: u64 = [M1, M2, M1].iter().map(|b| s.access(*b, &c)).sum();
        assert_eq!(total, 30);
    }

    #[test]
    fn abstract_access_examples() {
        let c = cfg();
        let (a, cost) = abstract_access(&MustCache::unknown(4), M2, &c);
        assert_eq!((cost, a.known(0)), (10, Some(M2)));
        let (_, cost) = abstract_access(&a, M2, &c);
        assert_eq!(cost, 0);
        let (a2, cost) = abstract_access(&a, M1, &c);
        assert_eq!((cost, a2.known(0)), (10, Some(M1)));
    }

    #[test]
    fn must_join_keeps_only_common_blocks() {
        let c = cfg();
        let mut with_m1 = MustCache::unknown(4);
        with_m1.access(M1, &c);
        let mut with_m2 = MustCache::unknown(4);
        with_m2.access(M2, &c);
        // conflicting blocks: neither survives
        assert_eq!(abstract_join(&with_m1, &with_m2).unwrap().known(0), None);
        // agreement: m2 survives
        assert_eq!(abstract_join(&with_m2, &with_m2).unwrap().known(0), Some(M2));
        assert!(matches!(
            abstract_join(&with_m1, &MustCache::unknown(8)),
            Err(CacheError::DimensionMismatch(4, 8))
        ));
    }

    #[test]
    fn path_cost_examples() {
        let mut b = SystemBuilder::new();
        b.start("a");
        b.terminal("d");
        let t0 = b.skip("a", "b", CostAnnotation::cycles(3));
        let t1 = b.skip("b", "c", CostAnnotation::new(0, [4, 8]));
        let t2 = b.skip("c", "d", CostAnnotation::new(0, [4]));
        let ts = b.build().unwrap();
        let c = cfg();
        assert_eq!(path_cost(&ts, &[t0], &c), 3);
        assert_eq!(path_cost(&ts, &[t1, t2], &c), 30);
        assert_eq!(path_cost(&ts, &[], &c), 0);
        let mut warm = ConcreteCache::empty();
        warm.access(M2, &c);
        assert_eq!(path_cost_from(&ts, &[t2], &c, &mut warm), 10);
    }

    fn small_must() -> impl Strategy<Value = MustCache> {
        proptest::collection::btree_map(0u64..3, 0u64..4, 0..3).prop_map(|m| MustCache {
            num_sets: 3,
            known: m.into_iter().map(|(s, k)| (s, BlockId(s + 3 * k))).collect(),
        })
    }

    proptest! {
        #[test]
        fn abstract_cost_bounds_concrete_cost(
            start in proptest::collection::btree_map(0u64..3, 0u64..4, 0..3),
            forget in proptest::collection::vec(any::<bool>(), 3),
            seq in proptest::collection::vec(0u64..9, 0..20),
        ) {
            let c = CacheConfig::new(3, 1, 7);
            let conc = ConcreteCache {
                lines: start.iter().map(|(s, k)| (*s, BlockId(s + 3 * k))).collect(),
            };
            // an abstract state forgetting some of what the concrete one holds
            let mut abs = MustCache::from_concrete(&conc, &c);
            abs.known.retain(|s, _| !forget[*s as usize]);
            prop_assert!(abs.describes(&conc));
            let (mut conc, mut abs) = (conc, abs);
            let mut cc = 0;
            let mut ac = 0;
            for b in seq {
                cc += conc.access(BlockId(b), &c);
                ac += abs.access(BlockId(b), &c);
                prop_assert!(abs.describes(&conc));
            }
            prop_assert!(cc <= ac);
        }

        #[test]
        fn join_is_the_bound_of_both_inputs(a in small_must(), b in small_must(), x in small_must()) {
            let j = a.join(&b).unwrap();
            // more knowledge is lower, so the intersection sits above both
            // inputs and below anything that is above both
            prop_assert!(a.leq(&j) && b.leq(&j));
            if a.leq(&x) && b.leq(&x) {
                prop_assert!(j.leq(&x));
            }
            prop_assert_eq!(a.join(&a).unwrap(), a);
        }

        #[test]
        fn concrete_hits_are_idempotent(seq in proptest::collection::vec(0u64..9, 1..10)) {
            let c = CacheConfig::new(3, 1, 7);
            let mut s = ConcreteCache::empty();
            for b in &seq {
                s.access(BlockId(*b), &c);
            }
            let last = BlockId(*seq.last().unwrap());
            let before = s.clone();
            prop_assert_eq!(s.access(last, &c), 1);
            prop_assert_eq!(s, before);
        }
    }
}
