//! Real-time RGB to 31-band hyperspectral reconstruction with MXR-U-Nets.
//!
//! - [`nn`]: Mish, xresnet blocks, ICNR sub-pixel upsampling, blur,
//!   self-attention and the U-Net decoder block.
//! - [`model`]: assembly of the depth-18/34/50 networks.
//! - [`loss`]: feature, style and pixel terms over a frozen VGG16-shaped
//!   loss network with a 31-channel input layer.
//! - [`train`]: one-cycle schedule, AdamW, augmentation, the fit loop.
//! - [`metrics`] / [`bench`]: MRAE/RMSE evaluation and latency measurement.
//! - [`io`]: `.hsc` cubes, binary PPM, checkpoints, datasets, run configs.

pub mod bench;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod raster;
pub mod selftest;
pub mod train;

pub use error::{Error, Result};
pub use model::{build_unet, EncoderDepth, ModelConfig, MxrUnet};
pub use raster::{HyperCube, Raster, RgbImage};
