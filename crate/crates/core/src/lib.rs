//! Redundancy audits, deduplication, rule baselines and ranking evaluation
//! for knowledge-graph link-prediction benchmarks.

pub mod audit;
pub mod baselines;
pub mod cli;
pub mod derive;
pub mod eval;
pub mod rules;
pub mod store;
