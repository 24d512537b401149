//! Style-difference extraction from parallel corpora, a from-scratch dense
//! autoencoder core, and reconstruction-error anomaly detection.

pub mod anomaly;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod nn;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod vae;
pub mod util;

pub use error::{Error, ErrorClass, Result};
