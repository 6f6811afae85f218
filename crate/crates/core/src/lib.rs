//! Belief-propagation list decoding of polar codes over permuted factor graphs.

pub mod bp;
pub mod bpl;
pub mod channel;
pub mod error;
pub mod perm;
pub mod polar;
pub mod selection;
mod selftest;
pub mod sim;

pub use error::{Error, Result};
