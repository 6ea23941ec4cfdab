//! Direction-aware multi-view graph KAN for asymmetric drug-drug
//! interaction prediction.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod decoder;
pub mod error;
pub mod fusion;
pub mod kan;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod synthetic;
pub mod train;
pub mod views;

pub use error::{Error, Result};
