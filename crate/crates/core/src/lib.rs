//! Logistic-normal Gaussian-process mixture model for animal trajectories.
//!
//! Movement increments are modelled as a K-component bivariate normal mixture
//! whose time-varying weights are the softmax of a coregionalised Gaussian
//! process. Inference is by MCMC with a nearest-neighbour GP approximation and
//! Pólya-Gamma augmentation.

pub mod design;
pub mod error;
pub mod evaluation;
pub mod gpcore;
pub mod linalg;
pub mod logitn;
pub mod pg;
pub mod sampler;
pub mod trajectory;

pub use error::{Error, Result};
