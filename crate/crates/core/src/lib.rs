//! Volumetric On/Off center-surround filtering and segmentation tooling.
//!
//! - [`kernel`]: balanced 2D/3D difference-of-Gaussians kernels
//! - [`tensor`]: feature maps and the 3D convolution engine
//! - [`block`]: the On/Off encoder block with forward and backward passes
//! - [`losses`], [`metrics`]: training loss and evaluation metrics
//! - [`perturb`], [`preprocess`]: robustness perturbations and data pipeline
//! - [`volio`]: MetaImage and raw+JSON volume files
//! - [`gradcheck`]: finite-difference verification of every gradient

pub mod block;
pub mod error;
pub mod export;
pub mod filter;
pub mod gradcheck;
pub mod interp;
pub mod kernel;
pub mod losses;
pub mod metrics;
pub mod perturb;
pub mod preprocess;
pub mod rng;
pub mod tensor;
pub mod volio;
pub mod volume;

pub use error::{Error, ErrorClass, Result};
pub use kernel::{make_kernel, BalancedKernel, KernelDims, KernelSpec, Polarity};
pub use tensor::{ConvWeights, FeatureMap, Padding};
pub use volume::{BinaryMask, Volume};
