//! Deterministic distributional protocols for set disjointness.
//!
//! - [`sets`]: subset masks and removal-history set families.
//! - [`dist`]: sparse distributions, subset-sum tables, information metrics.
//! - [`rectangle`]: extraction of large all-disjoint rectangles.
//! - [`protocol`]: the halving protocol with index-exchange levels.
//! - [`substate`]: truncated surrogates for correlated inputs.
//! - [`harness`]: evaluation, sweeps and CSV reporting.

pub mod dist;
pub mod error;
pub mod harness;
pub mod protocol;
pub mod rectangle;
pub mod sets;
pub mod substate;

pub use error::{Error, Result};
pub use protocol::Protocol;
pub use sets::{FamilyState, GroundSet, SubsetMask};
