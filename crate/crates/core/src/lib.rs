//! Sparse functional learning at desk scale.
//!
//! Sample a function at random points, recover a sparse dictionary code with
//! a thresholded iteration driven by an analytic threshold schedule,
//! reconstruct the function and evaluate Hölder functionals of it, checking
//! the closed-form bounds along the way.

// `!(x > 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod dictionary;
pub mod error;
pub mod experiments;
pub mod functional_lab;
pub mod rng;
pub mod s_term_oracle;
pub mod sampling;
pub mod sparse_coding;
pub mod stats;
pub mod taylor_decoder;

pub use error::{Error, Result};
