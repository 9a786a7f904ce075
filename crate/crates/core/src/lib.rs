//! Convertibility of multipartite pure states.
//!
//! The crate classifies unnormalized multipartite pure states under three
//! transformation regimes: deterministic LOCC, stochastic LOCC (SLOCC) and
//! multi-copy LOCC (MCLOCC, identical to multi-copy SLOCC). It computes the
//! SLOCC invariants (tensor rank and local ranks), the independence graph and
//! party partition that decide the multi-copy regime, and simulates the
//! constructive LOCC protocols exactly so that every positive answer comes
//! with a witness that can be re-checked.
//!
//! Party indices are 0-based throughout the library. Reports and DOT output
//! render them 1-based as `A1..AN`.

pub mod catalog;
pub mod error;
pub mod invariants;
pub mod linalg;
pub mod protocols;
pub mod state;
pub mod structure;
pub mod tol;
pub mod verdict;

pub use error::{Error, Result};
pub use invariants::{InvariantVector, RankMethod, RankStatus, SearchBudget};
pub use protocols::ProtocolTrace;
pub use state::{DensityOperator, LocalOperator, MeasurementRound, Outcome, PureState};
pub use structure::{IndependenceGraph, Partition, SloccWitness};
pub use verdict::{Answer, Reason, Regime, Verdict};

pub use num_complex::Complex64 as C64;
