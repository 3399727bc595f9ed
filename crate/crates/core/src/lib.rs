//! Growth-fragmentation processes with a mass cap.
//!
//! Cells grow exponentially at rate `a` until they reach the cap `c`, split
//! in two at rate `B` according to a symmetric kernel, and are killed at rate
//! `k`. The crate simulates the population and its tagged-cell spine and
//! computes the spectral and ergodic quantities that govern its long-run
//! behaviour.

// `!(x > 0.0)` also rejects NaN; validation relies on it.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod functions;
pub mod measures;
pub mod model;
pub mod numeric;
pub mod population;
pub mod rng;
pub mod scale;
pub mod semigroup;
pub mod skeleton;
pub mod spectral;
pub mod spine;
pub mod stats;

pub use error::{Error, Result, Violation};
pub use functions::TestFunction;
pub use model::{FragmentationKernel, KernelShape, ModelConfig, ModelParams};
pub use rng::{StreamKey, StreamRng};
pub use spectral::{Regime, SpectralProfile};
