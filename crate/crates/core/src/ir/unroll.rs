//! Static loop unrolling into a DAG.
//!
//! A loop is a cyclic strongly connected component with a single entry point
//! (its header). With bound `n` the header and body are copied `n` times as
//! `name@1 .. name@n`; back edges from copy `k` go to header copy `k+1`, and a
//! final header copy `h@(n+1)` keeps only the exit edges. Outer loops are
//! expanded first, which turns each inner loop into `n` independent loops
//! that later rounds expand in turn.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{IrError, PointId, Transition, TransitionSystem};

/// Unrolls every bounded loop. Acyclic input is returned unchanged.
pub fn unroll_loops(ts: &TransitionSystem) -> Result<TransitionSystem, IrError> {
    let mut cur = ts.clone();
    loop {
        let sccs = cyclic_components(&cur);
        let Some(scc) = sccs.into_iter().next() else {
            return Ok(cur);
        };
        cur = unroll_one(&cur, &scc)?;
    }
}

fn unroll_one(ts: &TransitionSystem, scc: &[PointId]) -> Result<TransitionSystem, IrError> {
    let members: BTreeSet<PointId> = scc.iter().copied().collect();
    let mut entries: BTreeSet<PointId> = BTreeSet::new();
    if members.contains(&ts.start()) {
        entries.insert(ts.start());
    }
    for t in ts.transitions() {
        if !members.contains(&t.src) && members.contains(&t.dst) {
            entries.insert(t.dst);
        }
    }
    if entries.len() > 1 {
        let names: Vec<&str> = entries.iter().map(|p| ts.point_name(*p)).collect();
        return Err(IrError::Semantic {
            message: format!("irreducible loop with entries {}", names.join(", ")),
        });
    }
    // A cycle nobody enters is unreachable; anchor it at its first point.
    let header = entries.into_iter().next().unwrap_or(scc[0]);
    let Some(&bound) = ts.loop_bounds().get(&header) else {
        return Err(IrError::UnboundedLoop {
            cycle: cycle_through(ts, &members, header),
        });
    };

    // New point table: untouched points keep their relative order, loop
    // points are replaced in place by their copies.
    let mut names = Vec::new();
    let mut keep: BTreeMap<PointId, PointId> = BTreeMap::new();
    let mut copies: BTreeMap<(PointId, u32), PointId> = BTreeMap::new();
    let mut fresh = BTreeSet::new();
    for p in ts.point_ids() {
        if members.contains(&p) {
            let last = if p == header { bound + 1 } else { bound };
            for k in 1..=last {
                let id = PointId(names.len() as u32);
                names.push(format!("{}@{k}", ts.point_name(p)));
                copies.insert((p, k), id);
                fresh.insert(id);
            }
        } else {
            keep.insert(p, PointId(names.len() as u32));
            names.push(ts.point_name(p).to_string());
        }
    }
    for name in &names {
        if names.iter().filter(|n| *n == name).count() > 1 {
            return Err(IrError::Semantic {
                message: format!("unrolling produces clashing point name `{name}`"),
            });
        }
    }

    let map_outside = |p: PointId| keep[&p];
    let mut transitions = Vec::new();
    for t in ts.transitions() {
        let mut push = |src: PointId, dst: PointId| {
            transitions.push(Transition {
                src,
                dst,
                op: t.op.clone(),
                cost: t.cost.clone(),
            })
        };
        match (members.contains(&t.src), members.contains(&t.dst)) {
            (false, false) => push(map_outside(t.src), map_outside(t.dst)),
            (false, true) => push(map_outside(t.src), copies[&(header, 1)]),
            (true, false) => {
                let last = if t.src == header { bound + 1 } else { bound };
                for k in 1..=last {
                    push(copies[&(t.src, k)], map_outside(t.dst));
                }
            }
            (true, true) => {
                for k in 1..=bound {
                    let dst = if t.dst == header {
                        copies[&(header, k + 1)]
                    } else {
                        copies[&(t.dst, k)]
                    };
                    push(copies[&(t.src, k)], dst);
                }
            }
        }
    }

    let remap = |p: PointId| -> Vec<PointId> {
        if members.contains(&p) {
            copies.iter().filter(|((q, _), _)| *q == p).map(|(_, id)| *id).collect()
        } else {
            vec![keep[&p]]
        }
    };
    let start = if members.contains(&ts.start()) {
        copies[&(header, 1)]
    } else {
        keep[&ts.start()]
    };
    let terminals: BTreeSet<PointId> = ts.terminals().iter().flat_map(|p| remap(*p)).collect();
    let mut loop_bounds = BTreeMap::new();
    for (&h, &n) in ts.loop_bounds() {
        if h == header {
            continue;
        }
        for id in remap(h) {
            loop_bounds.insert(id, n);
        }
    }

    let unrolled = TransitionSystem::new(ts.vars().to_vec(), names, start, terminals, transitions, loop_bounds)?;
    Ok(prune_dead_copies(unrolled, &fresh))
}

/// Drops freshly created copies that cannot reach a terminal (for example a
/// final header copy when the loop only exits from its body).
fn prune_dead_copies(ts: TransitionSystem, fresh: &BTreeSet<PointId>) -> TransitionSystem {
    let live = ts.reaches_terminal();
    let dead: BTreeSet<PointId> = fresh
        .iter()
        .copied()
        .filter(|p| !live[p.index()] && *p != ts.start())
        .collect();
    if dead.is_empty() {
        return ts;
    }
    let mut renum = BTreeMap::new();
    let mut names = Vec::new();
    for p in ts.point_ids() {
        if !dead.contains(&p) {
            renum.insert(p, PointId(names.len() as u32));
            names.push(ts.point_name(p).to_string());
        }
    }
    let transitions = ts
        .transitions()
        .iter()
        .filter(|t| renum.contains_key(&t.src) && renum.contains_key(&t.dst))
        .map(|t| Transition {
            src: renum[&t.src],
            dst: renum[&t.dst],
            op: t.op.clone(),
            cost: t.cost.clone(),
        })
        .collect();
    let terminals = ts.terminals().iter().filter_map(|p| renum.get(p).copied()).collect();
    let loop_bounds = ts
        .loop_bounds()
        .iter()
        .filter_map(|(h, n)| renum.get(h).map(|h| (*h, *n)))
        .collect();
    TransitionSystem::new(
        ts.vars().to_vec(),
        names,
        renum[&ts.start()],
        terminals,
        transitions,
        loop_bounds,
    )
    .expect("pruning preserves well-formedness")
}

/// Shortest cycle through `from` inside `members`, as point names with the
/// first point repeated at the end.
fn cycle_through(ts: &TransitionSystem, members: &BTreeSet<PointId>, from: PointId) -> Vec<String> {
    let mut parent: BTreeMap<PointId, PointId> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut closing = None;
    'search: while let Some(p) = queue.pop_front() {
        for &t in ts.outgoing(p) {
            let d = ts.transition(t).dst;
            if !members.contains(&d) {
                continue;
            }
            if d == from {
                closing = Some(p);
                break 'search;
            }
            if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(d) {
                e.insert(p);
                queue.push_back(d);
            }
        }
    }
    let mut rev = vec![from];
    let mut at = closing.unwrap_or(from);
    while at != from {
        rev.push(at);
        at = parent[&at];
    }
    rev.push(from);
    rev.reverse();
    rev.into_iter().map(|p| ts.point_name(p).to_string()).collect()
}

/// Strongly connected components that contain a cycle (more than one point,
/// or a single point with a self-edge), each sorted, ordered by first point.
pub(crate) fn cyclic_components(ts: &TransitionSystem) -> Vec<Vec<PointId>> {
    let n = ts.num_points();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0usize;
    let mut out = Vec::new();

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // Iterative Tarjan: (node, next outgoing edge position).
        let mut work = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = work.last_mut() {
            let outs = ts.outgoing(PointId(v as u32));
            if *pos < outs.len() {
                let w = ts.transition(outs[*pos]).dst.index();
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(u, _)) = work.last() {
                low[u] = low[u].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(PointId(w as u32));
                    if w == v {
                        break;
                    }
                }
                let self_loop =
                    comp.len() == 1 && ts.outgoing(comp[0]).iter().any(|&t| ts.transition(t).dst == comp[0]);
                if comp.len() > 1 || self_loop {
                    comp.sort();
                    out.push(comp);
                }
            }
        }
    }
    out.sort();
    out
}
