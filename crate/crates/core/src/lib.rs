//! Hybrid Bayesian network engine for product safety risk assessment,
//! with the RAPEX risk-matrix method alongside for comparison.

pub mod discretize;
pub mod graph;
pub mod infer;
pub mod product;
pub mod rapex;
pub mod report;
pub mod scenarios;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
