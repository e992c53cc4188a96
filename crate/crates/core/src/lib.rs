//! Random-projection compressed neural networks.
//!
//! The crate covers the whole pipeline: dense tensors and seeded random
//! matrices ([`linalg`]), restricted-isometry measurement ([`rip`]), sparse
//! recovery ([`recovery`]), trainable networks with fixed random projection
//! layers ([`nn`]), exact parameter/FLOP accounting ([`complexity`]), dataset
//! loaders and generators ([`data`]) and the `rpnet` command line ([`cli`]).

pub mod cli;
pub mod complexity;
pub mod data;
mod error;
pub mod linalg;
pub mod nn;
pub mod recovery;
pub mod rip;

pub use error::{Error, Result};
pub use linalg::{ProjectionKind, ProjectionMatrix, SeededRng, Tensor};
