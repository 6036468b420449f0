//! Positive multivariate quadrature rules by moment matching.
//!
//! The pipeline takes a polynomial space `P_Λ` (a [`MultiIndexSet`]) and a
//! probability measure, computes the moments of a basis of `P_Λ`, selects a
//! sparse positive rule from a random candidate mesh by nonnegative ℓ1
//! matching, clusters it down to a target size and refines nodes and weights
//! by constrained least squares.
//!
//! ```
//! use quadgen::{indexset, moments, reduce};
//!
//! let set = indexset::total_degree_set(1, 9);
//! let problem = moments::MomentProblem::uniform_box(&set, &[(-1.0, 1.0)]).unwrap();
//! let out = reduce::generate(&problem, &reduce::GenerateOptions::default()).unwrap();
//! assert!(out.success);
//! assert_eq!(out.rule.len(), 5);
//! ```

pub mod error;
pub mod indexset;
pub mod l1init;
pub mod moments;
pub mod baselines;
pub mod domains;
pub mod orthopoly;
pub mod reduce;
pub mod testmodels;
pub mod cli;

pub use error::{Error, Result};
pub use indexset::{MultiIndex, MultiIndexSet};
