//! Lyapunov drift-plus-penalty ratio optimization for renewal systems.
//!
//! A renewal system runs in frames. Each frame a policy is chosen, and the frame
//! produces a length `T`, penalties `y0..yL`, and attributes `x1..xM`. The
//! engines here minimize `ȳ0 / T̄` (or maximize a concave utility of `x̄ / T̄`)
//! subject to `ȳl / T̄ <= c_l`, using virtual queues and a per-frame ratio
//! minimization solved by bisection.

// Negated float comparisons are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alt;
pub mod dpp;
pub mod engine;
pub mod error;
pub mod finite;
pub mod ledger;
pub mod oracle;
pub mod queues;
pub mod ratio;
pub mod scenario;
pub mod task_network;
pub mod types;
pub mod utility;

pub use error::{Error, Result};
pub use types::{BoundsConfig, ConstraintTargets, PolicyOutcome, Rectangle};
