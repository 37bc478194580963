//! Printing, parsing and unrolling on random structured programs.

use proptest::prelude::*;
use wcet_core::gen::{random_program, GenConfig};
use wcet_core::ir::{
    parse_program, print_program, unroll_loops, CostAnnotation, PointId, SystemBuilder, TransitionSystem,
};

#[derive(Debug, Clone)]
enum Seg {
    Diamond,
    Loop { bound: u32, body: Vec<Seg> },
}

fn segs() -> impl Strategy<Value = Vec<Seg>> {
    let leaf = Just(Seg::Diamond);
    let seg = leaf.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            Just(Seg::Diamond),
            (1u32..=3, proptest::collection::vec(inner, 1..=2)).prop_map(|(bound, body)| Seg::Loop { bound, body }),
        ]
    });
    proptest::collection::vec(seg, 1..=3)
}

/// Closed-form path count: loops contribute `1 + b + ... + b^n`.
fn expected_paths(segs: &[Seg]) -> u128 {
    segs.iter()
        .map(|s| match s {
            Seg::Diamond => 2,
            Seg::Loop { bound, body } => {
                let b = expected_paths(body);
                (0..=*bound).map(|i| b.pow(i)).sum()
            }
        })
        .product()
}

struct Emit {
    b: SystemBuilder,
    n: usize,
}

impl Emit {
    fn fresh(&mut self) -> String {
        self.n += 1;
        format!("q{}", self.n)
    }

    fn seq(&mut self, from: String, segs: &[Seg]) -> String {
        segs.iter().fold(from, |at, s| self.seg(at, s))
    }

    fn seg(&mut self, from: String, s: &Seg) -> String {
        // vary the accessed block with the source point
        let block = from.trim_start_matches('q').parse::<u64>().unwrap_or(0) % 5;
        let c = || CostAnnotation::new(1, [block]);
        match s {
            Seg::Diamond => {
                let (l, r, j) = (self.fresh(), self.fresh(), self.fresh());
                self.b.skip(&from, &l, c());
                self.b.skip(&from, &r, CostAnnotation::cycles(2));
                self.b.skip(&l, &j, CostAnnotation::cycles(0));
                self.b.skip(&r, &j, CostAnnotation::cycles(0));
                j
            }
            Seg::Loop { bound, body } => {
                let (h, entry, exit) = (self.fresh(), self.fresh(), self.fresh());
                self.b.skip(&from, &h, CostAnnotation::cycles(0));
                self.b.loop_bound(&h, *bound);
                self.b.skip(&h, &entry, c());
                let end = self.seq(entry, body);
                self.b.skip(&end, &h, CostAnnotation::cycles(1));
                self.b.skip(&h, &exit, CostAnnotation::cycles(0));
                exit
            }
        }
    }
}

fn build(segs: &[Seg]) -> TransitionSystem {
    let mut e = Emit {
        b: SystemBuilder::new(),
        n: 0,
    };
    let start = e.fresh();
    e.b.start(&start);
    let end = e.seq(start, segs);
    e.b.terminal(&end);
    e.b.build().unwrap()
}

/// Path count by explicit enumeration, independent of the DP in the IR.
fn enumerate(ts: &TransitionSystem, p: PointId) -> u128 {
    if ts.is_terminal(p) {
        return 1;
    }
    ts.outgoing(p)
        .iter()
        .map(|&t| enumerate(ts, ts.transition(t).dst))
        .sum()
}

proptest! {
    #[test]
    fn print_parse_round_trip(seed in 0u64..10_000) {
        let ts = random_program(seed, &GenConfig::default());
        let text = print_program(&ts);
        prop_assert_eq!(parse_program(&text).unwrap(), ts);
    }

    #[test]
    fn loops_round_trip(segs in segs()) {
        let ts = build(&segs);
        prop_assert_eq!(parse_program(&print_program(&ts)).unwrap(), ts);
    }

    #[test]
    fn unrolled_path_count_matches_closed_form(segs in segs()) {
        let expected = expected_paths(&segs);
        prop_assume!(expected <= 20_000);
        let ts = build(&segs);
        let flat = unroll_loops(&ts).unwrap();
        prop_assert!(flat.is_acyclic());
        prop_assert_eq!(enumerate(&flat, flat.start()), expected);
        prop_assert_eq!(flat.count_paths(), Some(expected));
    }
}
