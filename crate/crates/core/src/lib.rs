//! Incremental worst-case execution time analysis over a hybrid symbolic
//! execution tree.

pub mod absint;
pub mod cache;
pub mod gen;
pub mod hset;
pub mod ir;
pub mod lattice;
pub mod linear;
pub mod oracle;
pub mod samples;
pub mod solver;
pub mod symex;
