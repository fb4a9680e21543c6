//! Distributed unknown-input observers (DUIOs) for continuous-time LTI
//! plants monitored by a network of sensor nodes.
//!
//! Two design routes produce the same observer network:
//!
//! * [`design_model`] builds the gains from the plant matrices;
//! * [`design_data`] builds them from offline input/output/state records
//!   collected by [`datagen`], without ever touching the plant model.
//!
//! [`observer`] simulates the coupled plant and observer network and
//! [`metrics`] compares both routes against a least-squares
//! identification baseline.

pub mod cli;
pub mod datagen;
pub mod design_data;
pub mod design_model;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod observer;
pub mod plant;
pub mod riccati;
pub mod signal;

pub use error::{DuioError, Result};
