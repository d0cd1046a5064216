//! Robust self-testing certificates for multipartite GHZ states.
//!
//! Builds Svetlichny and MABK Bell operators, verifies the operator
//! inequality `K ⪰ sW + μI` over all measurement angles through a 2×2 block
//! reduction, and turns observed (or simulated) Bell values into certified
//! fidelity lower bounds.

pub mod bell;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod states;
pub mod tradeoff;
pub mod verifier;

pub use bell::{AngleVector, BellProtocol, Family};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, C64};
pub use verifier::{CertificateConstants, CertificationReport, GridSpec};
