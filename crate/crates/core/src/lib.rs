//! Projected Glauber dynamics for atomic constraint satisfaction problems in
//! the local lemma regime: sampling near-uniform satisfying assignments and
//! approximately counting them.
//!
//! The pipeline is: build an [`AtomicCsp`](csp::AtomicCsp), pick a
//! [`ProjectionScheme`](projection::ProjectionScheme) (usually via
//! [`construct::construct_projection`]), then call
//! [`dynamics::main_sample`] or [`counting::approx_count`].

pub mod construct;
pub mod counting;
pub mod csp;
pub mod dynamics;
pub mod error;
pub mod formats;
pub mod instances;
pub mod lll;
pub mod numeric;
pub mod oracle;
pub mod projection;
pub mod rng;
pub mod verify;

pub use csp::{AtomicConstraint, AtomicCsp};
pub use error::{CountError, CspError, OracleError, ProjectionError, VerifyError};
pub use projection::{ProjectionCase, ProjectionScheme};
pub use rng::{chain_rng, ChainRng};
