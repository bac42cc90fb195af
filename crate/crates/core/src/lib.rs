//! Differentiable weather-aware image filters.
//!
//! The crate provides six image filters (defog, white balance, gamma,
//! contrast, tone curve, sharpen) whose forward maps come with exact
//! vector-Jacobian products, fog and low-light synthesizers for building
//! test corpora, and an Adam-based fitter that recovers filter parameters
//! from a degraded image and a reference.
//!
//! All arithmetic is `f64`; images are quantized to 8 bits only when they
//! are written to disk.
//!
//! With the default `parallel` feature, per-row loops run on the rayon
//! global pool. Reductions are always combined in row order, so results are
//! bit-identical with and without the feature.

pub mod degrade;
pub mod filters;
pub mod gradient;
pub mod image;
pub mod io;
pub mod par;

pub use degrade::{add_fog, add_lowlight, hybrid_sample, DegradeMode, DegradeSpec, Domain, FogLevel};
pub use filters::{apply_chain, FilterChain, FilterKind, FilterParams};
pub use gradient::{fit_params, gradcheck, FitOptions, FitResult, GradReport};
pub use image::{GrayF, ImageF};
pub use io::{load_image, save_image, ImageIoError};
