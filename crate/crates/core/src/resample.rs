//! Block-average downsampling and nearest-neighbor upsampling.
//!
//! Both operators are linear and exactly inverse in one direction:
//! downsampling a nearest-upsampled field returns the original bit-for-bit
//! (each block is constant, and the mean of a constant block is that
//! constant). Factors are per-axis, so the same code path covers spatial
//! `m×m` plans (averaging count `n = m²`) and temporal `[m, 1, 1]` plans
//! (`n = m`).

use crate::error::{Error, Result};
use crate::field::Field;

/// Per-axis integer scale factors with the derived averaging count `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalePlan {
    factors: Vec<usize>,
    n: usize,
}

impl ScalePlan {
    /// A plan from per-axis factors (1 = axis untouched). All factors ≥ 1.
    pub fn new(factors: Vec<usize>) -> Result<ScalePlan> {
        if factors.is_empty() {
            return Err(Error::InvalidDimension("scale plan needs at least one axis".into()));
        }
        if let Some(&f) = factors.iter().find(|&&f| f == 0) {
            return Err(Error::InvalidDimension(format!("scale factor must be >= 1, got {f}")));
        }
        let n = factors.iter().product();
        Ok(ScalePlan { factors, n })
    }

    /// The identity plan over `axes` axes.
    pub fn identity(axes: usize) -> ScalePlan {
        ScalePlan { factors: vec![1; axes], n: 1 }
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    /// Averaging count: the number of source entries behind each
    /// downsampled entry (product of the factors).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_identity(&self) -> bool {
        self.n == 1
    }

    /// Downsampled axis lengths for `hi`, validating divisibility.
    pub fn low_dims(&self, hi: &[usize]) -> Result<Vec<usize>> {
        self.check_axes(hi)?;
        hi.iter()
            .zip(&self.factors)
            .enumerate()
            .map(|(axis, (&len, &f))| {
                if len % f != 0 {
                    Err(Error::Indivisible { axis, len, factor: f })
                } else {
                    Ok(len / f)
                }
            })
            .collect()
    }

    /// Upsampled axis lengths for `low`.
    pub fn hi_dims(&self, low: &[usize]) -> Result<Vec<usize>> {
        self.check_axes(low)?;
        Ok(low.iter().zip(&self.factors).map(|(&len, &f)| len * f).collect())
    }

    fn check_axes(&self, dims: &[usize]) -> Result<()> {
        if dims.len() != self.factors.len() {
            return Err(Error::ShapeMismatch {
                left: format!("field with {} axes", dims.len()),
                right: format!("plan with {} factors", self.factors.len()),
            });
        }
        Ok(())
    }
}

/// Row-major strides for the given axis lengths.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

/// Advances a row-major odometer; returns false after the last index.
fn bump(idx: &mut [usize], dims: &[usize]) -> bool {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < dims[a] {
            return true;
        }
        idx[a] = 0;
    }
    false
}

/// Sums `buf` in place by pairwise folding. Keeping equal-magnitude addends
/// paired means a power-of-two block of identical values sums without any
/// rounding, which is what makes the `D∘U = id` round trip exact; it also
/// bounds the error growth of large blocks by the tree depth rather than
/// the block length.
fn pairwise_sum(buf: &mut [f64]) -> f64 {
    let mut len = buf.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            buf[i] = buf[2 * i] + buf[2 * i + 1];
        }
        if len % 2 == 1 {
            buf[half] = buf[len - 1];
            len = half + 1;
        } else {
            len = half;
        }
    }
    buf[0]
}

/// Block-average downsampling: each output entry is the mean of its
/// `plan.n()` source entries. Channels untouched; linear in `x`.
pub fn downsample_box(x: &Field, plan: &ScalePlan) -> Result<Field> {
    if plan.is_identity() {
        return Ok(x.clone());
    }
    let out_dims = plan.low_dims(x.dims())?;
    let in_strides = strides(x.dims());
    let out_plane: usize = out_dims.iter().product();
    let inv_n = 1.0 / plan.n() as f64;
    let axes = out_dims.len();

    let mut data = vec![0.0; x.channels() * out_plane];
    let mut block = vec![0.0; plan.n()];
    for c in 0..x.channels() {
        let src = x.channel(c);
        let dst = &mut data[c * out_plane..(c + 1) * out_plane];
        let mut oidx = vec![0usize; axes];
        for out_lin in 0..out_plane {
            // Offset of the block's corner in the source plane.
            let corner: usize = (0..axes).map(|a| oidx[a] * plan.factors()[a] * in_strides[a]).sum();
            let mut bidx = vec![0usize; axes];
            for slot in block.iter_mut() {
                let off: usize = (0..axes).map(|a| bidx[a] * in_strides[a]).sum();
                *slot = src[corner + off];
                bump(&mut bidx, plan.factors());
            }
            dst[out_lin] = pairwise_sum(&mut block) * inv_n;
            bump(&mut oidx, &out_dims);
        }
    }
    Field::from_vec(x.channels(), &out_dims, data)
}

/// Nearest-neighbor upsampling: each source entry replicated over its
/// `plan.n()` block. Channels untouched; linear in `x`.
pub fn upsample_nearest(x: &Field, plan: &ScalePlan) -> Result<Field> {
    if plan.is_identity() {
        return Ok(x.clone());
    }
    let out_dims = plan.hi_dims(x.dims())?;
    let in_strides = strides(x.dims());
    let out_plane: usize = out_dims.iter().product();
    let axes = out_dims.len();

    let mut data = vec![0.0; x.channels() * out_plane];
    for c in 0..x.channels() {
        let src = x.channel(c);
        let dst = &mut data[c * out_plane..(c + 1) * out_plane];
        let mut oidx = vec![0usize; axes];
        for out_lin in 0..out_plane {
            let src_off: usize =
                (0..axes).map(|a| (oidx[a] / plan.factors()[a]) * in_strides[a]).sum();
            dst[out_lin] = src[src_off];
            bump(&mut oidx, &out_dims);
        }
    }
    Field::from_vec(x.channels(), &out_dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn identity_plan_is_a_noop_both_ways() {
        let mut r = RngStream::new(1, 0);
        let x = Field::gaussian(2, &[4, 6], &mut r).unwrap();
        let plan = ScalePlan::new(vec![1, 1]).unwrap();
        assert_eq!(downsample_box(&x, &plan).unwrap(), x);
        assert_eq!(upsample_nearest(&x, &plan).unwrap(), x);
    }

    #[test]
    fn two_by_two_block_mean_by_hand() {
        let x = Field::from_vec(1, &[2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let plan = ScalePlan::new(vec![2, 2]).unwrap();
        let d = downsample_box(&x, &plan).unwrap();
        assert_eq!(d.dims(), &[1, 1]);
        assert_eq!(d.data(), &[4.0]);
    }

    #[test]
    fn replication_by_hand() {
        let x = Field::from_vec(1, &[1, 1], vec![4.0]).unwrap();
        let plan = ScalePlan::new(vec![2, 2]).unwrap();
        let u = upsample_nearest(&x, &plan).unwrap();
        assert_eq!(u.dims(), &[2, 2]);
        assert_eq!(u.data(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn white_noise_block_mean_shrinks_variance() {
        let mut r = RngStream::new(7, 0);
        let x = Field::gaussian(1, &[64, 64], &mut r).unwrap();
        let plan = ScalePlan::new(vec![2, 2]).unwrap();
        let d = downsample_box(&x, &plan).unwrap();
        let (_, var) = d.moments();
        assert!((0.20..=0.30).contains(&var), "variance {var} outside [0.20, 0.30]");
    }

    #[test]
    fn down_of_up_is_identity_exactly() {
        let mut r = RngStream::new(9, 0);
        for (dims, factors) in [
            (vec![4usize, 6], vec![2usize, 3]),
            (vec![5, 4], vec![1, 2]),
            (vec![3, 4, 4], vec![2, 1, 4]),
        ] {
            let x = Field::gaussian(2, &dims, &mut r).unwrap();
            let plan = ScalePlan::new(factors).unwrap();
            let round = downsample_box(&upsample_nearest(&x, &plan).unwrap(), &plan).unwrap();
            assert!(round.max_abs_diff(&x) <= 1e-15, "D∘U must be the identity");
        }
    }

    #[test]
    fn indivisible_axis_is_named_in_error() {
        let x = Field::zeros(1, &[4, 6]).unwrap();
        let plan = ScalePlan::new(vec![2, 4]).unwrap();
        let err = downsample_box(&x, &plan).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("axis 1") && msg.contains('4'), "unexpected message: {msg}");
    }

    #[test]
    fn axis_count_mismatch_rejected() {
        let x = Field::zeros(1, &[4, 6]).unwrap();
        let plan = ScalePlan::new(vec![2]).unwrap();
        assert!(downsample_box(&x, &plan).is_err());
        assert!(upsample_nearest(&x, &plan).is_err());
    }

    #[test]
    fn temporal_plan_has_linear_averaging_count() {
        let plan = ScalePlan::new(vec![2, 1, 1]).unwrap();
        assert_eq!(plan.n(), 2);
        let mut r = RngStream::new(3, 0);
        let x = Field::gaussian(1, &[8, 4, 4], &mut r).unwrap();
        let d = downsample_box(&x, &plan).unwrap();
        assert_eq!(d.dims(), &[4, 4, 4]);
        // First output frame is the mean of source frames 0 and 1.
        for i in 0..16 {
            let mean = 0.5 * (x.data()[i] + x.data()[16 + i]);
            assert!((d.data()[i] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_noise_decomposition_commutes_with_downsampling() {
        // D[√a·x0 + √(1−a)·eps] = √a·D[x0] + √(1−a)·D[eps], and the noise part
        // has standard deviation near 1/√n.
        let mut r = RngStream::new(21, 0);
        let x0 = Field::gaussian(1, &[64, 64], &mut r).unwrap();
        let eps = Field::gaussian(1, &[64, 64], &mut r).unwrap();
        let a: f64 = 0.85;
        let xt = Field::linear_comb(a.sqrt(), &x0, (1.0 - a).sqrt(), &eps).unwrap();
        let plan = ScalePlan::new(vec![2, 2]).unwrap();
        let d_xt = downsample_box(&xt, &plan).unwrap();
        let recomposed = Field::linear_comb(
            a.sqrt(),
            &downsample_box(&x0, &plan).unwrap(),
            (1.0 - a).sqrt(),
            &downsample_box(&eps, &plan).unwrap(),
        )
        .unwrap();
        assert!(d_xt.max_abs_diff(&recomposed) <= 1e-12, "linearity of the block mean");
        let (_, var) = downsample_box(&eps, &plan).unwrap().moments();
        let sd = var.sqrt();
        // 3σ band around 1/2 for 1024 averaged entries.
        assert!((sd - 0.5).abs() < 3.0 * 0.5 / (2.0 * 1024f64).sqrt() + 0.01, "sd {sd}");
    }
}
