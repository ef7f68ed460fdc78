//! Randomized structural invariants: exact linearity of the field algebra,
//! the resampling round trip and projection identities, byte-level RNG
//! reproducibility, and the interpolation form of the guidance combination.

use proptest::prelude::*;

use ug_core::field::Field;
use ug_core::guidance::ug_combine;
use ug_core::resample::{downsample_box, upsample_nearest, ScalePlan};
use ug_core::rng::RngStream;

/// A handful of small shapes covering 1-D, 2-D, 3-D and multi-channel.
fn any_shape() -> impl Strategy<Value = (usize, Vec<usize>)> {
    prop_oneof![
        Just((1, vec![4, 4])),
        Just((2, vec![2, 6])),
        Just((1, vec![8])),
        Just((3, vec![2, 2, 2])),
        Just((1, vec![5, 3])),
    ]
}

fn field_of(channels: usize, dims: Vec<usize>) -> impl Strategy<Value = Field> {
    let numel = channels * dims.iter().product::<usize>();
    prop::collection::vec(-10.0..10.0f64, numel)
        .prop_map(move |data| Field::from_vec(channels, &dims, data).unwrap())
}

fn field_pair() -> impl Strategy<Value = (Field, Field)> {
    any_shape().prop_flat_map(|(c, d)| (field_of(c, d.clone()), field_of(c, d)))
}

/// Plans paired with compatible fine-grid shapes. Factors include the
/// identity, mixed per-axis factors, a non-power-of-two factor, and the
/// largest block the harness ever uses (4×4).
fn plan_and_fine_field() -> impl Strategy<Value = (ScalePlan, Field)> {
    prop_oneof![
        Just((vec![1usize, 1], 1usize, vec![4usize, 4])),
        Just((vec![2, 2], 1, vec![8, 8])),
        Just((vec![2, 2], 2, vec![6, 4])),
        Just((vec![1, 2], 1, vec![4, 6])),
        Just((vec![4, 4], 1, vec![8, 8])),
        Just((vec![2], 1, vec![10])),
        Just((vec![2, 1, 1], 1, vec![4, 4, 4])),
        Just((vec![3, 3], 1, vec![9, 6])),
    ]
    .prop_flat_map(|(factors, channels, dims)| {
        field_of(channels, dims).prop_map(move |f| (ScalePlan::new(factors.clone()).unwrap(), f))
    })
}

/// Elementwise comparison with a relative floor: `|l−r| ≤ tol·scale` where
/// `scale` grows with the operand magnitudes but never drops below 1.
fn assert_close(l: &Field, r: &Field, tol: f64, scale_floor: f64) {
    assert!(l.same_shape(r));
    for (a, b) in l.data().iter().zip(r.data()) {
        let scale = scale_floor.max(a.abs()).max(b.abs());
        assert!((a - b).abs() <= tol * scale, "{a} vs {b} (scale {scale})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Two linear combinations over the same pair collapse into one with
    /// summed coefficients: the operation is exactly (bi)linear.
    #[test]
    fn linear_comb_is_additive_in_the_coefficients(
        (x, y) in field_pair(),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        c in -3.0..3.0f64,
        d in -3.0..3.0f64,
    ) {
        let lhs = Field::linear_comb(
            1.0,
            &Field::linear_comb(a, &x, b, &y).unwrap(),
            1.0,
            &Field::linear_comb(c, &x, d, &y).unwrap(),
        )
        .unwrap();
        let rhs = Field::linear_comb(a + c, &x, b + d, &y).unwrap();
        assert_close(&lhs, &rhs, 1e-12, 1.0);
    }

    /// Block-averaging a nearest-neighbor upsample recovers the source:
    /// every block holds one constant, and its mean is that constant.
    #[test]
    fn downsample_inverts_upsample((plan, fine) in plan_and_fine_field()) {
        let coarse = downsample_box(&fine, &plan).unwrap();
        let up = upsample_nearest(&coarse, &plan).unwrap();
        let round = downsample_box(&up, &plan).unwrap();
        assert!(round.max_abs_diff(&coarse) <= 1e-15, "gap {}", round.max_abs_diff(&coarse));
    }

    /// Both resampling operators are linear maps.
    #[test]
    fn resampling_is_linear(
        (plan, x) in plan_and_fine_field(),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        seed in 0u64..1000,
    ) {
        let mut r = RngStream::new(seed, 0);
        let y = Field::gaussian(x.channels(), x.dims(), &mut r).unwrap();
        let mix = Field::linear_comb(a, &x, b, &y).unwrap();

        let d_mix = downsample_box(&mix, &plan).unwrap();
        let d_parts = Field::linear_comb(
            a,
            &downsample_box(&x, &plan).unwrap(),
            b,
            &downsample_box(&y, &plan).unwrap(),
        )
        .unwrap();
        assert!(d_mix.max_abs_diff(&d_parts) <= 1e-12);

        let coarse = downsample_box(&x, &plan).unwrap();
        let coarse_y = downsample_box(&y, &plan).unwrap();
        let mix_c = Field::linear_comb(a, &coarse, b, &coarse_y).unwrap();
        let u_mix = upsample_nearest(&mix_c, &plan).unwrap();
        let u_parts = Field::linear_comb(
            a,
            &upsample_nearest(&coarse, &plan).unwrap(),
            b,
            &upsample_nearest(&coarse_y, &plan).unwrap(),
        )
        .unwrap();
        assert!(u_mix.max_abs_diff(&u_parts) <= 1e-12);
    }

    /// `U∘D` is a projection, so its complement is idempotent: removing the
    /// block means from a field that already has zero block means changes
    /// nothing.
    #[test]
    fn block_mean_complement_is_idempotent((plan, x) in plan_and_fine_field()) {
        let residual = |f: &Field| {
            let means = upsample_nearest(&downsample_box(f, &plan).unwrap(), &plan).unwrap();
            Field::linear_comb(1.0, f, -1.0, &means).unwrap()
        };
        let once = residual(&x);
        let twice = residual(&once);
        assert_close(&twice, &once, 1e-12, 1.0);
    }

    /// Streams are reproducible to the bit: the same (seed, stream) pair
    /// replays the identical sequence, and the uniform draws interleave
    /// without disturbing it.
    #[test]
    fn rng_streams_replay_byte_identically(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream);
        for _ in 0..32 {
            prop_assert_eq!(a.next_normal().to_bits(), b.next_normal().to_bits());
        }
        for _ in 0..8 {
            prop_assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        }
        let mut va = vec![0.0; 17];
        let mut vb = vec![0.0; 17];
        a.fill_normal(&mut va);
        b.fill_normal(&mut vb);
        for (l, r) in va.iter().zip(&vb) {
            prop_assert_eq!(l.to_bits(), r.to_bits());
        }
    }

    /// Distinct stream ids under one seed give distinct sequences.
    #[test]
    fn rng_streams_are_separated(seed in any::<u64>(), stream in 0u64..u64::MAX) {
        let mut a = RngStream::new(seed, stream);
        let mut b = RngStream::new(seed, stream + 1);
        let any_differs = (0..64).any(|_| a.next_normal().to_bits() != b.next_normal().to_bits());
        prop_assert!(any_differs);
    }

    /// The guidance combination interpolates linearly in the gate weight:
    /// g(w) = (1−w)·g(0) + w·g(1).
    #[test]
    fn guidance_combination_is_affine_in_the_weight(
        seed in 0u64..1000,
        w in -1.0..3.0f64,
    ) {
        let plan = ScalePlan::new(vec![2, 2]).unwrap();
        let mut r = RngStream::new(seed, 0);
        let eps_hi = Field::gaussian(1, &[8, 8], &mut r).unwrap();
        let eps_low = Field::gaussian(1, &[4, 4], &mut r).unwrap();

        let at = ug_combine(&eps_hi, &eps_low, w, &plan).unwrap();
        let zero = ug_combine(&eps_hi, &eps_low, 0.0, &plan).unwrap();
        let one = ug_combine(&eps_hi, &eps_low, 1.0, &plan).unwrap();
        let interp = Field::linear_comb(1.0 - w, &zero, w, &one).unwrap();
        assert_close(&at, &interp, 1e-12, 1.0);
    }
}
