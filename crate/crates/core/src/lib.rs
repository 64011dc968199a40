//! Tensor-network discriminators for quantum phase classification.
//!
//! Ground states are prepared as finite MPS, sampled into single-shot product
//! states, classified by an isometric MPS discriminator trained on Riemannian
//! manifolds, and compiled to CNOT + Ry circuits that are simulated exactly
//! as CPTP channels.

pub mod circuit;
pub mod compiler;
pub mod discriminator;
pub mod error;
pub mod imps;
pub mod lbfgs;
pub mod linalg;
pub mod manifold;
pub mod mps;
pub mod par;
pub mod pipeline;
pub mod runtime;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
