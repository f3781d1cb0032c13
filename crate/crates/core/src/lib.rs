//! Calibration and diagnostics for the Nelson-Siegel-Svensson yield-curve model
//! in orthogonal (thin-QR) coordinates.

// `!(x > 0.0)` is used on purpose so NaN is rejected; index loops follow the
// formulas.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod changepoint;
pub mod covariance;
pub mod error;
pub mod gram;
pub mod identifiability;
pub mod nss;
pub mod ortho;
pub mod par;
pub mod profiles;
pub mod regularization;
pub mod rng;
pub mod synthetic;
pub mod timeseries;
pub mod varpro;

pub use error::{NssError, Result};
pub use nss::{MaturityGrid, NssParams};
pub use par::Execution;
