//! Wiener-optimal denoiser for stationary Gaussian data.
//!
//! The data distribution is zero-mean Gaussian on a periodic grid with a
//! per-mode power spectrum `S(k)` (unitary-DFT convention, `k` in integer
//! cycles per image). Under the forward corruption, each Fourier mode is
//! independent with variance `α_t·S(k) + (1−α_t)`, so the optimal clean
//! estimate is diagonal: `X̂₀(k) = √α_t·S(k)/(α_t·S(k) + 1−α_t) · X_t(k)`,
//! and the noise estimate is `(X_t − √α_t·X̂₀)/√(1−α_t)`. Because `S` is
//! defined for any grid size, one instance serves every resolution — the
//! multi-resolution oracle the guidance algebra is tested against.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::Field;
use crate::predictors::Predictor;
use crate::schedule::NoiseSchedule;

/// Per-mode power spectrum, symmetric under frequency negation and bounded
/// away from zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Spectrum {
    /// `S ≡ 1`: white (unit-variance i.i.d.) data.
    White,
    /// Band-limited profile `S(k) = 1/(1 + ‖k‖²/k0²)²` with `k0` in cycles
    /// per image; gives visible coarse structure with a smooth rolloff.
    LowPass { k0: f64 },
}

impl Spectrum {
    /// Evaluates the spectrum at squared mode radius `‖k‖²`.
    pub fn eval_r2(&self, r2: f64) -> f64 {
        match *self {
            Spectrum::White => 1.0,
            Spectrum::LowPass { k0 } => {
                let q = 1.0 + r2 / (k0 * k0);
                1.0 / (q * q)
            }
        }
    }
}

/// Analytic spectral denoiser; accepts any field whose axes are all powers
/// of two.
pub struct SpectralDenoiser {
    spectrum: Spectrum,
    schedule: NoiseSchedule,
}

fn check_power_of_two(dims: &[usize]) -> Result<()> {
    for (axis, &len) in dims.iter().enumerate() {
        if !len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { axis, len });
        }
    }
    Ok(())
}

/// Shared per-channel frequency-domain pass: applies `coeff(S(k))` to
/// every mode of `x` and transforms back, checking the imaginary residue.
/// Also the backbone of procedural texture synthesis (`coeff = √S`).
pub(crate) fn apply_mode_filter(
    x: &Field,
    spectrum: &Spectrum,
    mut coeff: impl FnMut(f64) -> f64,
) -> Result<Field> {
    check_power_of_two(x.dims())?;
    let dims = x.dims().to_vec();
    let plane: usize = dims.iter().product();
    let mut out = vec![0.0; x.numel()];
    for c in 0..x.channels() {
        let mut buf = fft::forward_real(x.channel(c), &dims);
        for (lin, v) in buf.iter_mut().enumerate() {
            let s = spectrum.eval_r2(fft::mode_radius2(lin, &dims));
            *v *= Complex64::new(coeff(s), 0.0);
        }
        let (re, residue) = fft::inverse_to_real(buf, &dims);
        let scale = re.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if residue > 1e-10 * scale {
            return Err(Error::NonFinite(format!(
                "frequency-domain filter output has imaginary residue {residue}"
            )));
        }
        out[c * plane..(c + 1) * plane].copy_from_slice(&re);
    }
    Field::from_vec(x.channels(), &dims, out)
}

impl SpectralDenoiser {
    pub fn new(spectrum: Spectrum, schedule: NoiseSchedule) -> SpectralDenoiser {
        SpectralDenoiser { spectrum, schedule }
    }

    pub fn spectrum(&self) -> Spectrum {
        self.spectrum
    }

    /// The Wiener clean estimate `X̂₀(k) = √α·S/(α·S + 1−α) · X_t(k)`.
    pub fn denoised_x0(&self, x: &Field, t: usize) -> Result<Field> {
        let a = self.schedule.alpha(t)?;
        apply_mode_filter(x, &self.spectrum, |s| a.sqrt() * s / (a * s + (1.0 - a)))
    }
}

impl Predictor for SpectralDenoiser {
    fn predict(&self, x: &Field, t: usize, cond: Option<u32>) -> Result<Field> {
        if let Some(label) = cond {
            return Err(Error::UnknownCondition {
                label,
                known: "(none; spectral denoiser is unconditional)".into(),
            });
        }
        let a = self.schedule.alpha(t)?;
        // ε̂(k) = (1 − α·S/(α·S + 1−α)) / √(1−α) · X_t(k)
        //       = √(1−α) / (α·S + 1−α) · X_t(k)
        apply_mode_filter(x, &self.spectrum, |s| (1.0 - a).sqrt() / (a * s + (1.0 - a)))
    }

    fn shape_family(&self) -> String {
        "any channel count, every axis length a power of two".into()
    }
}
