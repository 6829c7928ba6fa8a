//! PAC learning of mean-payoff bounds for blackbox and greybox MDPs and
//! CTMDPs.
//!
//! The learner ([`learn::Learner`]) only talks to a [`model::SampleOracle`].
//! [`whitebox`] solves explicit models exactly and serves as a reference.

pub mod graph;
pub mod learn;
pub mod model;
pub mod stats;
pub mod whitebox;
