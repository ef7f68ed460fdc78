//! Diffusion sampling with training-free resolution upscaling.
//!
//! The library is built around a small set of pieces:
//!
//! - [`field`] — value-semantic multi-axis arrays ([`Field`]) and elementwise
//!   primitives, plus a deterministic per-stream Gaussian RNG ([`RngStream`]).
//! - [`schedule`] — noise schedules `alpha_t`, SNR tables, the power factor
//!   `P = alpha_t + (1 - alpha_t)/n`, and the SNR-matched adjusted time `tau`.
//! - [`resample`] — the block-average downsampling operator `D` and the
//!   nearest-neighbor upsampling operator `U`, with `D∘U = id` exactly.
//! - [`predictors`] — the noise-predictor contract and three concrete
//!   predictors: an exact finite-dataset posterior denoiser, an analytic
//!   spectral (Wiener) denoiser for stationary Gaussian data, and a small
//!   trainable convolutional denoiser with hand-written backprop.
//! - [`guidance`] — classifier-free guidance, the adjusted low-resolution
//!   prediction, and the upsample-guidance combination with its Heaviside
//!   schedule and ablation switches.
//! - [`sampler`] — ancestral and deterministic reverse-process loops, plus
//!   paired initial-noise construction across resolutions.
//! - [`metrics`] — sliced Wasserstein distance, radial power spectra, and
//!   moment summaries for distribution-level evaluation.
//! - [`textures`] — procedural stationary-Gaussian texture datasets used by
//!   the experiment harness and tests.
//!
//! All numerics are double precision; fields are row-major, channels-first.

pub mod error;
pub mod fft;
pub mod field;
pub mod guidance;
pub mod metrics;
pub mod predictors;
pub mod resample;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod textures;

pub use error::{Error, Result};
pub use field::Field;
pub use guidance::GuidanceConfig;
pub use predictors::Predictor;
pub use resample::ScalePlan;
pub use rng::RngStream;
pub use schedule::NoiseSchedule;
