//! Learned blending-inconsistency camouflage for face images.

pub mod backbone;
pub mod camouflage;
pub mod checkpoint;
pub mod corpus;
pub mod discriminators;
pub mod error;
pub mod generator;
pub mod image;
pub mod landmarks;
pub mod manifest;
pub mod metrics;
pub mod optimizer;
pub mod params;
pub mod postprocess;
pub mod trainer;

pub use error::{CamoError, Result};
pub use image::ImageF;
