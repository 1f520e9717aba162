//! Reward-function search for multi-objective tasks: a sandboxed reward
//! expression language, a grid benchmark, a tabular learner, a training-log
//! analyzer and the weight search that ties them together.

pub mod analyzer;
pub mod dsl;
pub mod env;
pub mod orchestrator;
pub mod proposer;
pub mod requirements;
pub mod search;
pub mod seed;
pub mod trainer;
pub mod weights;
