//! Reproducible experiments on stochastic recursions over random digraphs:
//! graph-versus-tree convergence, fixed-point decay, contraction, tree-likeness
//! and bound audits, driven by TOML or JSON configs.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cell_seed, plan, run, run_with_workers};
pub use config::ExperimentConfig;
pub use report::{Report, Table, Verb};
