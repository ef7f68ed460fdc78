//! Noise predictors: the contract plus three concrete implementations.
//!
//! * [`DatasetDenoiser`] — the exact Bayes posterior for a finite dataset;
//!   the ground-truth oracle at a fixed shape.
//! * [`SpectralDenoiser`] — the Wiener-optimal denoiser for a stationary
//!   zero-mean Gaussian distribution given by a power spectrum; evaluable at
//!   any power-of-two grid, which makes it the multi-resolution oracle.
//! * [`ConvDenoiser`] — a tiny trainable fully-convolutional net with manual
//!   backprop; resolution-flexible and translation-equivariant.

mod conv;
mod dataset;
mod spectral;

pub use conv::{ConvDenoiser, CONV_PARAM_COUNT};
pub use dataset::DatasetDenoiser;
pub(crate) use spectral::apply_mode_filter;
pub use spectral::{SpectralDenoiser, Spectrum};

use crate::error::Result;
use crate::field::Field;
use crate::schedule::NoiseSchedule;

/// The noise-prediction contract ε(x_t, t; c).
///
/// Implementations are deterministic, shape-preserving, and immutable once
/// constructed, so shared references are safe across concurrent workers.
pub trait Predictor: Sync {
    /// Predicts the noise component of `x` at step `t`, optionally
    /// conditioned on a class label.
    fn predict(&self, x: &Field, t: usize, cond: Option<u32>) -> Result<Field>;

    /// Human-readable description of the accepted input shapes,
    /// used in error messages.
    fn shape_family(&self) -> String;
}

/// Mean squared prediction error of `p` on corruption triples `(x₀, t, ε)`,
/// normalized per entry: the training objective every predictor is scored by.
pub fn prediction_loss(
    p: &dyn Predictor,
    triples: &[(Field, usize, Field)],
    schedule: &NoiseSchedule,
) -> Result<f64> {
    let mut total = 0.0;
    for (x0, t, eps) in triples {
        let a = schedule.alpha(*t)?;
        let xt = Field::linear_comb(a.sqrt(), x0, (1.0 - a).sqrt(), eps)?;
        let pred = p.predict(&xt, *t, None)?;
        total += pred.rms_diff(eps).powi(2);
    }
    Ok(total / triples.len() as f64)
}
