//! Fractal Purkinje networks on ventricular meshes, coupled eikonal
//! activation, lead-field ECGs and Bayesian identification of the network
//! parameters from a 12-lead recording.

pub mod activation;
pub mod config;
pub mod ecg;
pub mod error;
pub mod fixtures;
pub mod forward;
pub mod gp;
pub mod inference;
pub mod mesh;
pub mod pipeline;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
