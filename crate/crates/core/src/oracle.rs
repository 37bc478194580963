//! Exhaustive path enumeration: the exact WCET by brute force.

use thiserror::Error;

use crate::cache::CacheConfig;
use crate::ir::{TransitionId, TransitionSystem};
use crate::lattice::Wcet;
use crate::symex::{symstep, Step, SymbolicState};

pub const DEFAULT_PATH_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("program has {paths} syntactic paths, above the cap of {cap}")]
    PathExplosion { paths: u128, cap: u128 },
    #[error("program is cyclic; unroll its loops first")]
    Cyclic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// `Bottom` when no complete path is feasible.
    pub wcet: Wcet,
    /// The first path (in DFS order) attaining `wcet`.
    pub path: Option<Vec<TransitionId>>,
    /// Number of feasible complete paths.
    pub paths: u64,
}

/// Max θ over all feasible complete paths, refusing programs whose
/// syntactic path count exceeds `cap`.
pub fn exhaustive_wcet(ts: &TransitionSystem, cfg: &CacheConfig, cap: u128) -> Result<OracleResult, OracleError> {
    let paths = ts.count_paths().ok_or(OracleError::Cyclic)?;
    if paths > cap {
        return Err(OracleError::PathExplosion { paths, cap });
    }
    let mut out = OracleResult {
        wcet: Wcet::Bottom,
        path: None,
        paths: 0,
    };
    let mut stack = vec![SymbolicState::initial(ts)];
    while let Some(s) = stack.pop() {
        if s.is_terminal(ts) {
            out.paths += 1;
            if Wcet::Time(s.prefix_cost) > out.wcet {
                out.wcet = Wcet::Time(s.prefix_cost);
                out.path = Some(s.trail);
            }
            continue;
        }
        // Reverse so that the lowest transition id is explored first.
        for &t in ts.outgoing(s.point).iter().rev() {
            if let Step::Feasible(next) = symstep(ts, cfg, &s, t).expect("outgoing transition") {
                stack.push(next);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;

    #[test]
    fn sample_programs() {
        let r = exhaustive_wcet(&samples::ticks(), &CacheConfig::default(), DEFAULT_PATH_CAP).unwrap();
        assert_eq!((r.wcet, r.paths), (Wcet::Time(3), 3));
        let r = exhaustive_wcet(&samples::single(), &CacheConfig::default(), DEFAULT_PATH_CAP).unwrap();
        assert_eq!((r.wcet, r.paths), (Wcet::Time(7), 1));
        let r = exhaustive_wcet(
            &samples::cache_diamonds(),
            &samples::cache_diamonds_config(),
            DEFAULT_PATH_CAP,
        )
        .unwrap();
        assert_eq!(r.wcet, Wcet::Time(84));
    }

    #[test]
    fn path_cap_is_checked_before_enumeration() {
        let err = exhaustive_wcet(&samples::huge(), &CacheConfig::default(), DEFAULT_PATH_CAP).unwrap_err();
        assert_eq!(
            err,
            OracleError::PathExplosion {
                paths: 1 << 21,
                cap: DEFAULT_PATH_CAP
            }
        );
    }

    #[test]
    fn no_feasible_path_is_bottom() {
        let ts = crate::ir::parse_program(
            "vars x\npoint a\npoint b\npoint c terminal\nstart a\n\
             trans a -> b assume x > 0\ntrans b -> c assume x < 0\n",
        )
        .unwrap();
        let r = exhaustive_wcet(&ts, &CacheConfig::default(), DEFAULT_PATH_CAP).unwrap();
        assert_eq!((r.wcet, r.path, r.paths), (Wcet::Bottom, None, 0));
    }
}
