pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod prf;
pub mod pulse_sim;
pub mod scenario;
pub mod topology;

pub use error::{Error, Result};
