//! Vector quantiles and vector quantile regression computed from discrete
//! optimal-transport problems.

pub mod convex;
pub mod error;
pub mod lp;
pub mod matrix;
pub mod measures;
pub mod qr1d;
pub mod solution;
pub mod synthetic;
pub mod transport;
pub mod vqr;

pub use error::{Result, VqrError};
pub use matrix::Matrix;
