//! Bayesian sparse estimation with approximate message passing.

pub mod amp;
pub mod codes;
pub mod learning;
pub mod operators;
pub mod potential;
pub mod priors;
pub mod rng;
pub mod state_evolution;
pub mod special;
