//! Spectral-efficiency analysis and power allocation for cell-free massive MIMO
//! with mixed unicast and multigroup multicast traffic.

pub mod channel;
pub mod dnn;
pub mod error;
pub mod montecarlo;
pub mod moop;
pub mod numerics;
pub mod precoding;
pub mod scenario;
pub mod spectral;

pub use error::{Error, Result};
