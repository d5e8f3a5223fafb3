//! Locally differentially private perturbation of numeric data in `[−1, 1]`.
//!
//! The crate provides one-dimensional mechanisms ([`mechanisms`]), their
//! optimal constants and analytic variances ([`params`]), grid rounding of
//! continuous outputs ([`discretize`]), tuple perturbation by coordinate
//! sampling ([`multidim`]), a federated SGD simulator ([`fedsgd`]), dataset
//! utilities ([`data`]) and an experiment runner ([`bench`]).

pub mod bench;
pub mod data;
pub mod discretize;
pub mod error;
pub mod fedsgd;
pub mod mechanisms;
pub mod multidim;
pub mod params;
mod roots;

pub use error::{LdpError, Result};
pub use mechanisms::{Mechanism, MechanismKind, RandomStream};
pub use params::PrivacyBudget;
