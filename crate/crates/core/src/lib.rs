//! Disentangled representation learning for discrete-time dynamic graphs.
//!
//! Two structural-temporal generators share one backbone design. The
//! time-invariant generator is trained with a contrastive objective between
//! pairs of temporal clips drawn by bidirectional Bernoulli sampling; the
//! time-varying generator is trained with a pretext task on the combined
//! representation. An adversarial discriminator pushes the two halves toward
//! statistical independence.

pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod sampler;
pub mod train;

pub use error::{Error, Result};
