//! Distributionally robust programs with stochastic linear complementarity
//! constraints: regularized LCP solves, moment ambiguity sets, discrete
//! optimal transport, an alternating minimax solver and MPEC stationarity
//! certificates, with the pure characteristics demand model as a worked
//! instance.

pub mod ambiguity;
pub mod domain;
pub mod error;
pub mod lcp;
pub mod minimax;
pub mod pcd;
pub mod stationarity;
pub mod transport;

pub use error::{Error, Result};
