//! Conditional CycleGAN: networks, losses, the training loop, data handling
//! and evaluation metrics.

pub mod checkpoint;
pub mod condition;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod params;
pub mod trainer;

pub use error::{Error, Result};
