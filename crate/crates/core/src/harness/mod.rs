//! Scene files, synthetic fixtures, evaluation and the command line.

pub mod cli;
pub mod eval;
pub mod fixture;
pub mod scene;
