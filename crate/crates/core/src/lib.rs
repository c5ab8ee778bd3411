//! Dual-fisheye calibration for 360° Gaussian splatting.
//!
//! The library simulates imperfect stitched panoramas during training by
//! transforming Gaussian splats through learnable inter-camera gap
//! translations and spherical angular-distortion grids, jointly optimizes the
//! scene and calibration against imperfect captures, and renders seamless
//! distortion-free panoramas at inference.

pub mod calib;
pub mod geom;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod scene;
pub mod synth;
