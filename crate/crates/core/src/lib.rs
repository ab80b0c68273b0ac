//! Reconstruction engine for undersampled multi-coil 3D Cartesian MRI.
//!
//! The centrepiece is an ADMM solver whose regularizer is the l1 norm of a
//! learned residual sparsifying transform `G(x) - x`, where `G` is a small
//! pre-trained de-aliasing convolutional network. Classical baselines
//! (zero-filled, iterative SENSE, l1-wavelet / finite-difference compressed
//! sensing, plug-and-play, single-pass network inference, fixed-prior
//! regularization) share the same forward model and solver machinery.
//!
//! Layout of the crate follows the processing pipeline:
//!
//! - [`volume`]: complex 3D containers and elementwise/reduction primitives
//! - [`io`]: the CVOL binary container format
//! - [`forward`]: the imaging operator `A = DFS`, its adjoint and normal form
//! - [`sampling`]: Poisson-disc undersampling mask generation
//! - [`transforms`]: sparsifying transforms and proximal machinery
//! - [`net`]: conv-net inference and vector-Jacobian products
//! - [`solvers`]: conjugate gradients, the ADMM driver, baseline reconstructors
//! - [`synth`]: synthetic phantoms, coil maps, and noisy k-space
//! - [`metrics`]: NMSE / PSNR / SSIM evaluation

pub mod error;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod sampling;
pub mod solvers;
pub mod synth;
pub mod transforms;
pub mod volume;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use volume::{ComplexVolume, Dims, KSpaceData};
