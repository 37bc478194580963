//! Sample programs bundled with the library.

use crate::cache::CacheConfig;
use crate::ir::{parse_program, TransitionSystem};

pub const TICKS: &str = include_str!("../programs/ticks.prog");
pub const CACHE_DIAMONDS: &str = include_str!("../programs/cache_diamonds.prog");
pub const SINGLE: &str = include_str!("../programs/single.prog");
pub const HUGE: &str = include_str!("../programs/huge.prog");

/// Three guarded ticks with correlated guards (worst case 3, naive bound 6).
pub fn ticks() -> TransitionSystem {
    parse_program(TICKS).expect("bundled program parses")
}

/// Three diamonds with conflicting cache blocks (exact 84, abstract 85).
pub fn cache_diamonds() -> TransitionSystem {
    parse_program(CACHE_DIAMONDS).expect("bundled program parses")
}

/// Cache geometry the diamond program is meant to be analyzed with.
pub fn cache_diamonds_config() -> CacheConfig {
    CacheConfig::new(4, 0, 10)
}

pub fn single() -> TransitionSystem {
    parse_program(SINGLE).expect("bundled program parses")
}

pub fn huge() -> TransitionSystem {
    parse_program(HUGE).expect("bundled program parses")
}
