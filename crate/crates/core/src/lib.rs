//! Variational inference for ferromagnetic Ising models.
//!
//! The crate provides the naive mean-field iteration and loopy belief
//! propagation started from the all-ones state, the dual Bethe free energy
//! and its gradient, exact brute-force oracles for small instances, and an
//! ellipsoid-method solver that finds the maximal BP fixed point to
//! exponentially small error.
//!
//! Models are pairwise with nonnegative couplings and nonnegative fields:
//!
//! ```
//! use ferroprop::{bp, model::load_model, IterateOptions};
//!
//! let model = load_model("n 2\nedge 0 1 1.0\n").unwrap();
//! let (nu, _trace) = bp::bp_iterate(&model, &IterateOptions::default()).unwrap();
//! let free_energy = bp::dual_bethe(&model, &nu).unwrap();
//! assert!((free_energy - (4.0 * 1.0f64.cosh()).ln()).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bp;
pub mod ellipsoid;
pub mod error;
pub mod local;
pub mod meanfield;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod topology;
pub mod trace;

pub use error::{Error, Result};
pub use model::{IsingModel, ModelNorms};
pub use trace::{Init, IterateOptions, IterationTrace, TraceKind, TraceRecord};
