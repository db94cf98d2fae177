//! Covariate selection and ranking for high-dimensional, block-correlated
//! data: covariate clustering, per-cluster factor decorrelation, a bank of
//! selection methods aggregated into an integer score, and a simulation
//! harness.

pub mod armada;
pub mod assoc;
pub mod cli;
pub mod covclust;
pub mod data;
pub mod error;
pub mod factor;
pub mod heatmap;
pub mod linalg;
pub mod multitest;
pub mod plot;
pub mod rng;
pub mod selectors;
pub mod sim;
pub mod special;

pub use error::{Error, Result};
