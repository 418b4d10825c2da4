use codedstereo::io::{
    dump_config, parse_config, read_disparity_pfm, read_mask, read_pfm, write_disparity_pfm, write_mask, write_pfm,
    Pfm, RunConfig,
};
use codedstereo::optics::{OpticalConfig, PhaseMask, Provenance, ZernikeBasis, MASK_COEFFICIENTS};
use ndarray::Array2;
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
        (0u32..0x0080_0000, any::<bool>()).prop_map(|(m, neg)| f32::from_bits(m | if neg { 1 << 31 } else { 0 })),
        -1e3f32..1e3,
    ]
}

fn pfm_strategy() -> impl Strategy<Value = Pfm> {
    (
        1usize..24,
        1usize..24,
        prop_oneof![Just(1usize), Just(3usize)],
        any::<bool>(),
        0.01f32..100.0,
    )
        .prop_flat_map(|(w, h, ch, little, scale)| {
            prop::collection::vec(finite_f32(), w * h * ch).prop_map(move |data| Pfm {
                width: w,
                height: h,
                channels: ch,
                scale: if little { -scale } else { scale },
                data,
            })
        })
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pfm_write_read_is_identity(pfm in pfm_strategy()) {
        let bytes = write_pfm(&pfm).unwrap();
        let back = read_pfm(&bytes).unwrap();
        prop_assert_eq!((back.width, back.height, back.channels), (pfm.width, pfm.height, pfm.channels));
        prop_assert_eq!(back.scale.to_bits(), pfm.scale.to_bits());
        prop_assert!(same_bits(&back.data, &pfm.data));
        // and the bytes themselves are reproduced
        prop_assert_eq!(write_pfm(&back).unwrap(), bytes);
    }

    #[test]
    fn truncated_pfm_is_rejected(pfm in pfm_strategy(), cut in 1usize..4) {
        let bytes = write_pfm(&pfm).unwrap();
        prop_assert!(read_pfm(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn disparity_pfm_round_trips_f32_values(
        h in 1usize..20,
        w in 1usize..20,
        seed in any::<u64>(),
    ) {
        let grid = Array2::from_shape_fn((h, w), |(y, x)| {
            let v = (seed ^ ((y * 31 + x) as u64).wrapping_mul(0x9E37_79B9)) as f32 / u64::MAX as f32;
            f64::from(v * 384.0 - 192.0)
        });
        let back = read_disparity_pfm(&write_disparity_pfm(&grid).unwrap()).unwrap();
        prop_assert_eq!(back, grid);
    }

    #[test]
    fn coefficient_masks_round_trip(coeffs in prop::collection::vec(-2e-6f64..2e-6, MASK_COEFFICIENTS)) {
        let config = OpticalConfig::default();
        let basis = ZernikeBasis::new(config.mask_grid_size, MASK_COEFFICIENTS).unwrap();
        let mask = PhaseMask::from_coefficients(&basis, coeffs, Provenance::Learned);
        let back = read_mask(&write_mask(&mask)).unwrap();
        prop_assert_eq!(back.provenance, mask.provenance);
        prop_assert!(back.height_map.iter().zip(mask.height_map.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(back.coefficients.iter().zip(&mask.coefficients).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn height_map_masks_round_trip(
        values in prop::collection::vec(prop_oneof![-1e-5f64..1e-5, Just(0.0), Just(-0.0), 1e-300f64..1e-290], 9 * 9)
    ) {
        let map = Array2::from_shape_vec((9, 9), values).unwrap();
        let mask = PhaseMask::from_height_map(map, Provenance::Fisher).unwrap();
        let back = read_mask(&write_mask(&mask)).unwrap();
        prop_assert!(back.height_map.iter().zip(mask.height_map.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!(back.coefficients.is_empty());
    }

    #[test]
    fn config_dump_reparses_to_the_same_config(
        f_number in 1.0f64..64.0,
        sigma in 0.0f64..0.2,
        seed in any::<u64>(),
        gamma in 0.0f64..4.0,
        focus in 0.75f64..1.6,
    ) {
        let mut cfg = RunConfig::default();
        cfg.optical.f_number = f_number;
        cfg.optical.focus_distance = focus;
        cfg.sigma = sigma;
        cfg.seed = seed;
        cfg.weights.gamma = gamma;
        let text = dump_config(&cfg);
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(dump_config(&back), text);
    }
}

#[test]
fn nan_and_inf_samples_are_parse_errors() {
    for bad in [f32::NAN, f32::INFINITY, f32::NEG_INFINITY] {
        let pfm = Pfm {
            width: 2,
            height: 1,
            channels: 1,
            scale: -1.0,
            data: vec![0.5, bad],
        };
        let bytes = write_pfm(&pfm).unwrap();
        let err = read_pfm(&bytes).unwrap_err().to_string();
        // header "Pf\n2 1\n-1.0\n" is 12 bytes; the bad sample is the second float
        assert!(err.contains("16"), "{err}");
    }
}
