#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod censored;
pub mod countlab;
pub mod data;
pub mod error;
pub mod geometry;
pub mod impute;
pub mod io;
pub mod metrics;

pub use data::{CensoringMask, CompositionMatrix, CountMatrix, DetectionLimits};
pub use error::{CodaError, Result};
