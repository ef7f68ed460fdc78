//! Multi-axis real-valued fields.
//!
//! A [`Field`] is `channels` stacked arrays over the same axes (e.g. `[H, W]`
//! or `[frames, H, W]`), stored row-major channels-first in double precision.
//! Fields are value types: operations return new fields and never alias, so
//! they are safe to share read-only across worker threads.

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A real-valued array of shape `channels × dims`, row-major, channels-first.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    channels: usize,
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn validate_shape(channels: usize, dims: &[usize]) -> Result<()> {
    if channels == 0 {
        return Err(Error::InvalidDimension("channel count must be positive".into()));
    }
    if dims.is_empty() {
        return Err(Error::InvalidDimension("field needs at least one axis".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::InvalidDimension(format!("axis length must be positive, got {d}")));
    }
    Ok(())
}

impl Field {
    /// All-zeros field of the given shape.
    pub fn zeros(channels: usize, dims: &[usize]) -> Result<Field> {
        Field::constant(channels, dims, 0.0)
    }

    /// Constant field of the given shape.
    pub fn constant(channels: usize, dims: &[usize], value: f64) -> Result<Field> {
        validate_shape(channels, dims)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("constant field value".into()));
        }
        let n = channels * dims.iter().product::<usize>();
        Ok(Field { channels, dims: dims.to_vec(), data: vec![value; n] })
    }

    /// Wraps raw data, validating length and finiteness.
    pub fn from_vec(channels: usize, dims: &[usize], data: Vec<f64>) -> Result<Field> {
        validate_shape(channels, dims)?;
        let n = channels * dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::ShapeMismatch {
                left: format!("{}x{:?} ({} entries)", channels, dims, n),
                right: format!("data of {} entries", data.len()),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("field data".into()));
        }
        Ok(Field { channels, dims: dims.to_vec(), data })
    }

    /// I.i.d. standard-normal field; deterministic given the stream state.
    pub fn gaussian(channels: usize, dims: &[usize], rng: &mut RngStream) -> Result<Field> {
        validate_shape(channels, dims)?;
        let n = channels * dims.iter().product::<usize>();
        let mut data = vec![0.0; n];
        rng.fill_normal(&mut data);
        Ok(Field { channels, dims: dims.to_vec(), data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Entries of one axis-plane per channel, i.e. product of `dims`.
    pub fn plane_len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Total entry count (`channels × product(dims)`).
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// The entries of channel `c` as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let p = self.plane_len();
        &self.data[c * p..(c + 1) * p]
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.channels == other.channels && self.dims == other.dims
    }

    /// Shape rendered as `channels x [dims]` for error messages.
    pub fn shape_string(&self) -> String {
        format!("{}x{:?}", self.channels, self.dims)
    }

    /// `a·x + b·y` elementwise. Errors if shapes differ.
    pub fn linear_comb(a: f64, x: &Field, b: f64, y: &Field) -> Result<Field> {
        if !x.same_shape(y) {
            return Err(Error::shape_mismatch(x.channels, &x.dims, y.channels, &y.dims));
        }
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NonFinite("linear combination coefficients".into()));
        }
        let data: Vec<f64> = x
            .data
            .iter()
            .zip(&y.data)
            .map(|(&xv, &yv)| a * xv + b * yv)
            .collect();
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("linear combination result".into()));
        }
        Ok(Field { channels: x.channels, dims: x.dims.clone(), data })
    }

    /// `a·x` elementwise. `a` must be finite.
    pub fn scale(&self, a: f64) -> Field {
        assert!(a.is_finite(), "scale factor must be finite");
        let data = self.data.iter().map(|&v| a * v).collect();
        Field { channels: self.channels, dims: self.dims.clone(), data }
    }

    /// Population mean and variance over all entries.
    pub fn moments(&self) -> (f64, f64) {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var)
    }

    /// Mean of squared entries (total power per entry).
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|&v| v * v).sum::<f64>() / self.data.len() as f64
    }

    /// Largest absolute elementwise difference; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Root-mean-square elementwise difference; panics on shape mismatch.
    pub fn rms_diff(&self, other: &Field) -> f64 {
        assert!(self.same_shape(other), "rms_diff on mismatched shapes");
        let ss: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        (ss / self.data.len() as f64).sqrt()
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
