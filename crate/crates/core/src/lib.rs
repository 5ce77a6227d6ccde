//! Path-integral molecular dynamics for two identical particles with
//! exchange treated through free-energy differences between necklace
//! topologies.

pub mod config;
pub mod error;
pub mod estimators;
pub mod io;
pub mod metadynamics;
pub mod model;
pub mod oracle;
pub mod potentials;
pub mod run;
pub mod sampler;
pub mod units;

pub use error::{Error, Result};
