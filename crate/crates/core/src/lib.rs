//! Latent quantum theories: quantum systems composed with a latent factor per
//! pair of subsystems instead of the plain tensor product.

pub mod bell;
pub mod cli;
pub mod error;
pub mod qmath;
pub mod states_effects;
pub mod strings;
pub mod theory;
pub mod transforms;
pub mod verify;

pub use error::{LqtError, Result};
