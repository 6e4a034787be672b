#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod graph;
pub mod linalg;
pub mod sparse;
pub mod coupling;
pub mod discretization;
pub mod evolution;
pub mod analysis;
pub mod semilinear;
pub mod config;
pub mod error;
pub mod cli;
