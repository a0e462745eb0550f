//! Inverse design of blended-wing-body planforms.
//!
//! The crate bundles a planform parameterization and surface loft, a small
//! reverse-mode autodiff kernel, FiLM-conditioned field and scalar L/D
//! surrogates trained against a synthetic aerodynamic model, a conditional
//! DDPM over the 9-D planform box, projected gradient descent and the hybrid
//! of the two, evaluation metrics, and file formats.

pub mod error;
pub mod geom;
pub mod nn;
pub mod scale;
pub mod surrogate;
pub mod diffusion;
pub mod invert;
pub mod eval;
pub mod io;
pub mod pipeline;

pub use error::{Error, Result};
