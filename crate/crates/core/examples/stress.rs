//! Differential stress run against the oracle on generated programs.
//!
//! cargo run --release --example stress -- [programs] [max-branches]

use wcet_core::gen::{random_program, sweep_cache_config, GenConfig};
use wcet_core::hset::{incremental_analysis, RunOptions};
use wcet_core::oracle::exhaustive_wcet;

fn main() {
    let mut args = std::env::args()
        .skip(1)
        .map(|a| a.parse::<usize>().expect("numeric argument"));
    let programs = args.next().unwrap_or(1000) as u64;
    let gen = GenConfig {
        max_branches: args.next().unwrap_or(12),
        max_depth: 5,
        max_statements: 8,
        ..GenConfig::default()
    };
    let cfg = sweep_cache_config();
    let variants = [
        RunOptions::default(),
        RunOptions {
            subsumption: false,
            ..RunOptions::default()
        },
        RunOptions {
            domination: false,
            ..RunOptions::default()
        },
    ];
    let (mut loose, mut iterations, mut failures) = (0, 0, 0);
    let start = std::time::Instant::now();
    for seed in 0..programs {
        let ts = random_program(seed, &gen);
        let oracle = exhaustive_wcet(&ts, &cfg, 1 << 22).expect("bounded program").wcet;
        for (i, opts) in variants.iter().enumerate() {
            let r = incremental_analysis(&ts, &cfg, opts).expect("acyclic program");
            let ok = r.exact
                && r.final_upper == oracle
                && r.stats.max_step_multiplicity <= 1
                && r.trace.iter().all(|row| row.lower <= oracle && oracle <= row.upper)
                && r.trace
                    .windows(2)
                    .all(|w| w[0].lower <= w[1].lower && w[1].upper <= w[0].upper);
            if !ok {
                failures += 1;
                println!(
                    "seed {seed} variant {i}: {}..{} vs oracle {oracle}",
                    r.final_lower, r.final_upper
                );
            }
            if i == 0 {
                loose += usize::from(r.ai_upper > oracle);
                iterations += r.iterations;
            }
        }
    }
    println!(
        "{programs} programs, {loose} with a loose AI bound, {iterations} refinements, {failures} failures in {:.1?}",
        start.elapsed()
    );
}
