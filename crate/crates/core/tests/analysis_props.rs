//! Cross-checks of symbolic execution, abstract interpretation, the tree and
//! the oracle on generated programs.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wcet_core::absint::{abstract_interpretation, AbstractContext};
use wcet_core::cache::{path_cost, CacheConfig};
use wcet_core::gen::{random_program, sweep_cache_config, GenConfig};
use wcet_core::hset::{Hset, RunOptions};
use wcet_core::ir::{Op, TransitionId, TransitionSystem};
use wcet_core::lattice::Wcet;
use wcet_core::linear::VarId;
use wcet_core::oracle::{exhaustive_wcet, DEFAULT_PATH_CAP};
use wcet_core::solver::{self, Outcome};
use wcet_core::symex::{input_symbol, symstep, Step, SymbolicState};

fn program(seed: u64) -> TransitionSystem {
    random_program(seed, &GenConfig::default())
}

/// Worst cost of any feasible completion of `s`, by exhaustive DFS.
fn suffix_wcet(ts: &TransitionSystem, cfg: &CacheConfig, s: &SymbolicState) -> Wcet {
    if s.is_terminal(ts) {
        return Wcet::Time(0);
    }
    ts.outgoing(s.point)
        .iter()
        .filter_map(|&t| match symstep(ts, cfg, s, t).unwrap() {
            Step::Feasible(n) => Some(match suffix_wcet(ts, cfg, &n) {
                Wcet::Time(c) => Wcet::Time(c + n.prefix_cost - s.prefix_cost),
                w => w,
            }),
            Step::Infeasible(_) => None,
        })
        .max()
        .unwrap_or(Wcet::Bottom)
}

/// Walks `len` feasible steps with random branch choices.
fn random_walk(ts: &TransitionSystem, cfg: &CacheConfig, rng: &mut ChaCha8Rng, len: usize) -> Vec<SymbolicState> {
    let mut states = vec![SymbolicState::initial(ts)];
    for _ in 0..len {
        let s = states.last().unwrap();
        let mut options: Vec<SymbolicState> = ts
            .outgoing(s.point)
            .iter()
            .filter_map(|&t| match symstep(ts, cfg, s, t).unwrap() {
                Step::Feasible(n) => Some(n),
                Step::Infeasible(_) => None,
            })
            .collect();
        if options.is_empty() {
            break;
        }
        let pick = rng.gen_range(0..options.len());
        states.push(options.swap_remove(pick));
    }
    states
}

/// Runs the program on concrete inputs, taking the first enabled edge.
fn execute(ts: &TransitionSystem, inputs: &[i64]) -> Option<Vec<TransitionId>> {
    let mut vals = inputs.to_vec();
    let mut at = ts.start();
    let mut path = Vec::new();
    while !ts.is_terminal(at) {
        let t = *ts.outgoing(at).iter().find(|&&t| match &ts.transition(t).op {
            Op::Assume(c) => c.holds(|v| vals[v.index()]) == Some(true),
            Op::Assign { .. } => true,
        })?;
        if let Op::Assign { var, expr } = &ts.transition(t).op {
            vals[var.index()] = expr.eval(|v| vals[v.index()])?;
        }
        path.push(t);
        at = ts.transition(t).dst;
    }
    Some(path)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn abstract_bounds_are_safe_and_witnessed(seed in 0u64..100_000, walk in 0usize..8) {
        let ts = program(seed);
        let cfg = sweep_cache_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = random_walk(&ts, &cfg, &mut rng, walk);
        let s = states.last().unwrap();
        let ctx = AbstractContext::from_state(&ts, &cfg, s);
        let r = abstract_interpretation(&ctx, s.point, &ts, &cfg).unwrap();
        prop_assert!(suffix_wcet(&ts, &cfg, s) <= r.upper);
        // the bound is the sum of the per-edge worst costs along the witness
        if let Wcet::Time(u) = r.upper {
            let sum: u64 = r.witness.iter().map(|t| r.edge_cost[t.index()].unwrap()).sum();
            prop_assert_eq!(sum, u);
            prop_assert!(r.witness.last().map_or(ts.is_terminal(s.point), |t| ts.is_terminal(ts.transition(*t).dst)));
        }
        // more knowledge never worsens the bound
        let top = abstract_interpretation(&AbstractContext::top(&cfg), s.point, &ts, &cfg).unwrap();
        prop_assert!(ctx.leq(&AbstractContext::top(&cfg)));
        prop_assert!(r.upper <= top.upper);
    }

    #[test]
    fn symbolic_steps_only_strengthen(seed in 0u64..100_000) {
        let ts = program(seed);
        let cfg = sweep_cache_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let states = random_walk(&ts, &cfg, &mut rng, 64);
        for w in states.windows(2) {
            prop_assert_eq!(w[1].trail.len(), w[0].trail.len() + 1);
            prop_assert!(w[0].path_condition.iter().all(|k| w[1].path_condition.iter().any(|x| x == k)));
            prop_assert!(w[1].is_consistent(&ts, &cfg));
            prop_assert_eq!(w[1].prefix_cost, path_cost(&ts, &w[1].trail, &cfg));
        }
    }

    #[test]
    fn only_exact_nodes_carry_interpolants(seed in 0u64..100_000) {
        let ts = program(seed);
        let mut h = Hset::new(&ts, sweep_cache_config(), RunOptions::default()).unwrap();
        for _ in 0..50 {
            for n in h.nodes() {
                prop_assert!(n.ann.interpolant.is_none() || n.ann.lower == n.ann.upper);
                prop_assert!(n.ann.lower <= n.ann.upper);
            }
            let Some(&leaf) = h.refinable().first() else { break };
            h.refine(leaf);
        }
    }

    #[test]
    fn oracle_ignores_transition_order(seed in 0u64..100_000) {
        let ts = program(seed);
        let cfg = sweep_cache_config();
        let mut ts_perm = ts.transitions().to_vec();
        ts_perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let points = ts.point_ids().map(|p| ts.point_name(p).to_string()).collect();
        let shuffled = TransitionSystem::new(
            ts.vars().to_vec(),
            points,
            ts.start(),
            ts.terminals().clone(),
            ts_perm,
            ts.loop_bounds().clone(),
        )
        .unwrap();
        let a = exhaustive_wcet(&ts, &cfg, DEFAULT_PATH_CAP).unwrap();
        let b = exhaustive_wcet(&shuffled, &cfg, DEFAULT_PATH_CAP).unwrap();
        prop_assert_eq!((a.wcet, a.paths), (b.wcet, b.paths));
    }

    #[test]
    fn oracle_agrees_with_concrete_runs(seed in 0u64..100_000) {
        let ts = program(seed);
        let cfg = sweep_cache_config();
        let o = exhaustive_wcet(&ts, &cfg, DEFAULT_PATH_CAP).unwrap();
        let n = ts.num_vars();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let inputs: Vec<i64> = (0..n).map(|_| rng.gen_range(-8..=8)).collect();
            let path = execute(&ts, &inputs).unwrap();
            prop_assert!(Wcet::Time(path_cost(&ts, &path, &cfg)) <= o.wcet);
        }
        // the worst path is realized by the inputs of a model of its path condition
        let Some(worst) = o.path else { return Ok(()) };
        let mut s = SymbolicState::initial(&ts);
        for &t in &worst {
            s = match symstep(&ts, &cfg, &s, t).unwrap() {
                Step::Feasible(next) => next,
                Step::Infeasible(_) => return Err(TestCaseError::fail("oracle path is infeasible")),
            };
        }
        if let Outcome::Sat(model) = solver::check(&s.path_condition).unwrap() {
            let inputs: Vec<i64> = (0..n as u32)
                .map(|i| model.get(&input_symbol(&ts, VarId(i))).copied().unwrap_or(0))
                .collect();
            let run = execute(&ts, &inputs).unwrap();
            prop_assert_eq!(Wcet::Time(path_cost(&ts, &run, &cfg)), o.wcet);
        }
    }
}
