//! Deep-network vector-to-vector regression lab.
//!
//! The crate pairs a small feed-forward regression stack (network, losses) with
//! executable checks of the loss-function theory around it (theory) and a
//! speech-enhancement pipeline used to compare MAE- and MSE-trained models
//! (dsp, corpus, metrics). The `v2v` binary chains these into experiments.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod theory;

pub use error::{Error, Result};
