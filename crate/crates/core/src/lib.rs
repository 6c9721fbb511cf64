//! Score-driven (GAS) time-series models with parameters localized by
//! regime trees and random forests.

// Negated float comparisons are used on purpose so that NaN fails checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod forest;
pub mod score;
pub mod series;
pub mod special;
pub mod tree;

pub use error::{Error, Result};
