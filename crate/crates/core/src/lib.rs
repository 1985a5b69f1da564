//! Spatiotemporal PV forecasting: gridded irradiance nowcasting, station
//! irradiance-to-power regression and forecast verification.

pub mod cascade;
pub mod clearsky;
pub mod error;
pub mod flow;
pub mod forecast;
pub mod grid;
pub mod power;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
