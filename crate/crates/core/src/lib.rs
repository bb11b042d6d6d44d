//! Core machinery for building a semi-dense spatial memory from posed
//! egocentric frames, rendering it into target views with pose overlays,
//! and scoring generated videos.

pub mod bundle;
pub mod error;
pub mod features;
pub mod geometry;
pub mod image;
pub mod io;
pub mod memory;
pub mod metrics;
pub mod numeric;
pub mod pose;
pub mod raster;
pub mod render;
pub mod trajectory;

pub use error::{Error, Result};
