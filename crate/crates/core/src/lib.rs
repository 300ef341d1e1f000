pub mod ablation;
pub mod aggregate;
pub mod artifacts;
pub mod cluster;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod modality;
pub mod model;
pub mod numeric;
pub mod rng;

pub use error::{Error, Result};
pub use modality::Modality;
