pub mod agents;
pub mod dialogue;
pub mod env_gmm;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod nn;
pub mod reward;
pub mod textsim;

pub use error::{Error, Result};
