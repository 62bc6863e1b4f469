//! Locality certificates for finite factored multi-agent MDPs.
//!
//! Everything here is computed by exhaustive enumeration, so instances are
//! expected to be small. Influence matrices are stored with rows indexed by
//! the influenced coordinate and columns by the influencing coordinate.

// `!(x > 0.0)` is used throughout to reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod influence;
pub mod lpi;
pub mod mdp;
pub mod measures;
pub mod poisson;
pub mod scenarios;

pub use error::{LocalityError, Result};
