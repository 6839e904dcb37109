//! Nested polar code construction by reinforcement learning.

pub mod agents;
pub mod channel;
pub mod codec;
pub mod construction;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod genetic;
pub mod mdp;
pub mod neural;

pub use error::{Error, Result};
