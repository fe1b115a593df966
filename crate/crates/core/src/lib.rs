//! Training of small feed-forward classifiers whose individual fairness is
//! guaranteed by construction.
//!
//! The pipeline has three stages:
//!
//! 1. [`init`] draws a parameter state that is provably fair and has it
//!    certified by the [`verify`] module before any learning happens.
//! 2. [`train`] runs gradient descent in which every sensitive attribute is
//!    passed through the randomized-response mechanism of [`rr`], with
//!    per-update safeguards that keep the fairness certificate intact.
//! 3. [`eval`] measures empirical fairness, accuracy and runtime overhead of
//!    the result against a plain ERM baseline.
//!
//! [`net`] holds the network substrate (forward, loss, exact gradients) and
//! [`data`] the CSV/schema ingestion that produces normalized datasets and
//! the verifier's input domains.

pub mod data;
pub mod error;
pub mod eval;
pub mod init;
pub mod net;
pub mod rr;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
