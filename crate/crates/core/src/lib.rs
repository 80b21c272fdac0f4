//! Position-velocity encoders: unsupervised learning of structured
//! position/velocity state from pixels, trained with robotic-prior losses,
//! together with the simulated tasks, evaluation probes and fitted-Q control
//! used to assess the learned states.

pub mod encoder;
pub mod envs;
pub mod error;
pub mod eval;
pub mod priors;
pub mod rl;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
