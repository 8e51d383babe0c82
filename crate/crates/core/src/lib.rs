//! Allocation-only building blocks for RGB-D salient object detection.
//!
//! Everything here is a pure function of in-memory rasters: depth
//! normalization and resampling, SLIC superpixels, grid depth-contrast
//! layers, the background enclosure distribution (BED) with a dense
//! ray-casting reference, a small convolutional scorer trained with
//! Adadelta, rotation/flip augmentation and precision/recall scoring.
//!
//! File formats, image decoding, dataset discovery and the command line
//! live in the `bedsal` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod bed;
pub mod color;
pub mod depth;
pub mod error;
pub mod evalkit;
pub mod features;
pub mod lowfeat;
pub mod model;
pub mod optim;
pub mod raster;
pub mod slic;
pub mod train;

mod math;

pub use error::{Error, Result};
pub use raster::{DepthImage, GroundTruth, RawDepthImage, Raster, RgbImage, SaliencyMap};
