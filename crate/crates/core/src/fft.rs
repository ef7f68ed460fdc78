//! Unitary N-dimensional FFT helpers.
//!
//! Transforms are normalized by `1/√len` per axis in both directions, so a
//! forward/inverse round trip is the identity and white noise keeps unit
//! per-mode power — the convention every spectral formula in this crate
//! assumes. Plans are cached process-wide per axis length.

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn plan(len: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (len, dir == Direction::Forward);
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(key)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            match dir {
                Direction::Forward => planner.plan_fft(len, FftDirection::Forward),
                Direction::Inverse => planner.plan_fft(len, FftDirection::Inverse),
            }
        })
        .clone()
}

/// In-place unitary N-D FFT over a row-major buffer of shape `dims`.
pub fn fft_nd(buf: &mut [Complex64], dims: &[usize], dir: Direction) {
    let total: usize = dims.iter().product();
    assert_eq!(buf.len(), total, "buffer length must match dims product");
    for (axis, &len) in dims.iter().enumerate() {
        if len == 1 {
            continue;
        }
        let p = plan(len, dir);
        let stride: usize = dims[axis + 1..].iter().product();
        let block = len * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        for outer in 0..total / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for j in 0..len {
                    line[j] = buf[base + j * stride];
                }
                p.process(&mut line);
                for j in 0..len {
                    buf[base + j * stride] = line[j];
                }
            }
        }
    }
    // One global unitary normalization pass (1/√len per axis).
    let scale = 1.0 / (total as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Unitary forward transform of a real buffer.
pub fn forward_real(data: &[f64], dims: &[usize]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, dims, Direction::Forward);
    buf
}

/// Unitary inverse transform; returns the real part and the largest
/// absolute imaginary residue (should be roundoff for Hermitian input).
pub fn inverse_to_real(mut buf: Vec<Complex64>, dims: &[usize]) -> (Vec<f64>, f64) {
    fft_nd(&mut buf, dims, Direction::Inverse);
    let mut residue = 0.0f64;
    let out = buf
        .iter()
        .map(|v| {
            residue = residue.max(v.im.abs());
            v.re
        })
        .collect();
    (out, residue)
}

/// Signed mode index for position `i` on an axis of length `len`,
/// wrapped into `[-len/2, len/2)`.
pub fn mode_index(i: usize, len: usize) -> i64 {
    if i < len.div_ceil(2) {
        i as i64
    } else {
        i as i64 - len as i64
    }
}

/// Squared mode radius `Σ k_a²` for the row-major linear index `lin`.
pub fn mode_radius2(lin: usize, dims: &[usize]) -> f64 {
    let mut rem = lin;
    let mut r2 = 0.0;
    for a in (0..dims.len()).rev() {
        let i = rem % dims[a];
        rem /= dims[a];
        let k = mode_index(i, dims[a]) as f64;
        r2 += k * k;
    }
    r2
}
