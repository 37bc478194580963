//! Quantitative analysis values.
//!
//! The refinement algorithm only needs a lattice of analysis values plus,
//! for domination and the heuristics, a way to add a known prefix value to a
//! suffix bound. The WCET instance is `ℕ ∪ {∞}` under `max`, extended with a
//! distinct bottom that stands for "no feasible path": it is the identity of
//! `join` and absorbs `accumulate`, so infeasible subtrees vanish from
//! aggregates instead of contributing a spurious zero-cost path.

use std::fmt;

pub trait Lattice: Clone + PartialEq + fmt::Debug {
    fn bottom() -> Self;
    fn top() -> Self;
    fn leq(&self, other: &Self) -> bool;
    fn join(&self, other: &Self) -> Self;
    fn meet(&self, other: &Self) -> Self;
}

/// Lattices whose values can be composed along a path.
pub trait Accumulate: Lattice {
    fn accumulate(&self, suffix: &Self) -> Self;
}

/// Worst-case execution time in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Wcet {
    Bottom,
    Time(u64),
    Top,
}

impl Wcet {
    pub const ZERO: Wcet = Wcet::Time(0);

    /// The finite value, treating bottom as 0.
    pub fn cycles(self) -> Option<u64> {
        match self {
            Wcet::Bottom => Some(0),
            Wcet::Time(t) => Some(t),
            Wcet::Top => None,
        }
    }

    pub fn is_bottom(self) -> bool {
        self == Wcet::Bottom
    }
}

impl From<u64> for Wcet {
    fn from(t: u64) -> Self {
        Wcet::Time(t)
    }
}

impl Lattice for Wcet {
    fn bottom() -> Self {
        Wcet::Bottom
    }

    fn top() -> Self {
        Wcet::Top
    }

    fn leq(&self, other: &Self) -> bool {
        self <= other
    }

    fn join(&self, other: &Self) -> Self {
        *self.max(other)
    }

    fn meet(&self, other: &Self) -> Self {
        *self.min(other)
    }
}

impl Accumulate for Wcet {
    fn accumulate(&self, suffix: &Self) -> Self {
        match (self, suffix) {
            (Wcet::Bottom, _) | (_, Wcet::Bottom) => Wcet::Bottom,
            (Wcet::Top, _) | (_, Wcet::Top) => Wcet::Top,
            (Wcet::Time(a), Wcet::Time(b)) => a.checked_add(*b).map_or(Wcet::Top, Wcet::Time),
        }
    }
}

impl fmt::Display for Wcet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Wcet::Bottom => write!(f, "bottom"),
            Wcet::Time(t) => write!(f, "{t}"),
            Wcet::Top => write!(f, "inf"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(n: u64) -> Wcet {
        Wcet::Time(n)
    }

    #[test]
    fn join_examples() {
        assert_eq!(t(3).join(&t(4)), t(4));
        assert_eq!(t(9).join(&t(0)), t(9));
        assert_eq!(t(9).join(&Wcet::Top), Wcet::Top);
        assert_eq!(t(9).join(&Wcet::Bottom), t(9));
    }

    #[test]
    fn accumulate_examples() {
        assert_eq!(t(35).accumulate(&t(49)), t(84));
        assert_eq!(t(12).accumulate(&t(0)), t(12));
        assert_eq!(t(5).accumulate(&Wcet::Top), Wcet::Top);
        assert_eq!(t(5).accumulate(&Wcet::Bottom), Wcet::Bottom);
        assert_eq!(t(u64::MAX).accumulate(&t(1)), Wcet::Top);
    }

    #[test]
    fn display() {
        assert_eq!(Wcet::Bottom.to_string(), "bottom");
        assert_eq!(t(3).to_string(), "3");
        assert_eq!(Wcet::Top.to_string(), "inf");
    }

    fn value() -> impl Strategy<Value = Wcet> {
        prop_oneof![
            Just(Wcet::Bottom),
            Just(Wcet::Top),
            (0u64..50).prop_map(Wcet::Time),
            Just(Wcet::Time(u64::MAX - 1)),
        ]
    }

    proptest! {
        #[test]
        fn lattice_axioms(a in value(), b in value(), c in value()) {
            prop_assert_eq!(a.join(&b), b.join(&a));
            prop_assert_eq!(a.meet(&b), b.meet(&a));
            prop_assert_eq!(a.join(&b).join(&c), a.join(&b.join(&c)));
            prop_assert_eq!(a.meet(&b).meet(&c), a.meet(&b.meet(&c)));
            prop_assert_eq!(a.join(&a), a);
            prop_assert_eq!(a.meet(&a), a);
            prop_assert_eq!(a.join(&a.meet(&b)), a);
            prop_assert_eq!(a.meet(&a.join(&b)), a);
            prop_assert_eq!(a.join(&Wcet::bottom()), a);
            prop_assert_eq!(a.meet(&Wcet::top()), a);
            prop_assert_eq!(a.leq(&b), a.join(&b) == b);
        }

        #[test]
        fn accumulate_is_monotone(a in value(), b in value(), c in value()) {
            if a.leq(&b) {
                prop_assert!(a.accumulate(&c).leq(&b.accumulate(&c)));
                prop_assert!(c.accumulate(&a).leq(&c.accumulate(&b)));
            }
        }
    }
}
