//! Procedural stationary-Gaussian texture datasets.
//!
//! A texture is synthesized by filtering white noise in the frequency
//! domain with `√S(k)`: the result is exactly zero-mean Gaussian with
//! per-mode power `S(k)` under the unitary transform — the very
//! distribution the spectral denoiser is optimal for. That closes the
//! loop for end-to-end tests: generator, denoiser, and expected metrics
//! all share one analytic description.

use crate::error::Result;
use crate::field::Field;
use crate::predictors::{apply_mode_filter, Spectrum};
use crate::rng::RngStream;

/// One sample of the stationary Gaussian distribution with per-mode power
/// `S(k)`. Axes must be powers of two.
pub fn spectral_texture(
    spectrum: &Spectrum,
    channels: usize,
    dims: &[usize],
    rng: &mut RngStream,
) -> Result<Field> {
    let white = Field::gaussian(channels, dims, rng)?;
    apply_mode_filter(&white, spectrum, |s| s.sqrt())
}

/// `count` independent textures from one spectrum.
pub fn texture_set(
    spectrum: &Spectrum,
    channels: usize,
    dims: &[usize],
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<Field>> {
    (0..count).map(|_| spectral_texture(spectrum, channels, dims, rng)).collect()
}

/// A two-class dataset for conditioning tests: class 0 draws from
/// `spectrum_a`, class 1 from `spectrum_b`, alternating so both classes
/// are populated for any `count ≥ 2`. Returns the items and their labels.
pub fn two_class_set(
    spectrum_a: &Spectrum,
    spectrum_b: &Spectrum,
    channels: usize,
    dims: &[usize],
    count: usize,
    rng: &mut RngStream,
) -> Result<(Vec<Field>, Vec<u32>)> {
    let mut items = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let (spectrum, label) = if i % 2 == 0 { (spectrum_a, 0) } else { (spectrum_b, 1) };
        items.push(spectral_texture(spectrum, channels, dims, rng)?);
        labels.push(label);
    }
    Ok((items, labels))
}
