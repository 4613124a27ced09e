//! Solvers for indivisible allocation with concave-additive valuations.
//!
//! Items must be assigned whole to agents; each agent's payoff is a
//! monotone concave function of the additive utility of its bundle. The
//! crate provides:
//!
//! - the valuation families and their supergradient geometry
//!   ([`valuations`]),
//! - local multiplicative/additive curvature parameters with certified
//!   witnesses ([`curvature`]),
//! - primal-dual approximation solvers with multiplicative and additive
//!   guarantees ([`solvers`]),
//! - the weighted bang-per-buck tatonnement for smooth asymmetric Nash
//!   welfare ([`wbb`]),
//! - a generator for tight integrality-gap instances with dual
//!   certificates ([`instance`]),
//! - brute-force and dense-grid oracles for desk-scale verification
//!   ([`oracle`]).

// `!(x > 0.0)` is used throughout validation so NaN fails the check too
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// agent/item ids index several parallel arrays; plain index loops read best
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod curvature;
pub mod dual;
pub mod error;
pub mod instance;
pub mod oracle;
pub mod report;
pub mod solvers;
pub mod valuations;
pub mod wbb;

pub use error::{IcaError, Result};
pub use valuations::{ConcaveValuation, PiecewiseFn, SlopePoint};
