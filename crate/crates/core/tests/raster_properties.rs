use mxr_unet::io::{decode_cube, encode_cube};
use mxr_unet::metrics::padded_extent;
use mxr_unet::train::ChannelStats;
use mxr_unet::Raster;
use proptest::prelude::*;

fn raster(max_c: usize, max_side: usize) -> impl Strategy<Value = Raster> {
    (1..=max_c, 1..=max_side, 1..=max_side).prop_flat_map(|(c, h, w)| {
        prop::collection::vec(-4.0f32..4.0, c * h * w).prop_map(move |d| Raster::new(c, h, w, d).unwrap())
    })
}

proptest! {
    #[test]
    fn four_quarter_turns_are_identity(r in raster(3, 6)) {
        prop_assert_eq!(r.rotate90(4), r.clone());
        let once = r.rotate90(1);
        prop_assert_eq!(once.shape(), [r.channels(), r.width(), r.height()]);
        prop_assert_eq!(once.rotate90(3), r);
    }

    #[test]
    fn flips_are_involutions(r in raster(3, 6)) {
        prop_assert_eq!(r.flip_horizontal().flip_horizontal(), r.clone());
        prop_assert_eq!(r.flip_vertical().flip_vertical(), r);
    }

    #[test]
    fn reflect_pad_then_crop_is_identity(r in raster(2, 8), dh in 0usize..8, dw in 0usize..8) {
        let (h, w) = (r.height() + dh.min(r.height() - 1), r.width() + dw.min(r.width() - 1));
        let padded = r.pad_reflect(h, w).unwrap();
        prop_assert_eq!(padded.shape(), [r.channels(), h, w]);
        prop_assert_eq!(padded.crop(r.height(), r.width()).unwrap(), r);
    }

    #[test]
    fn cube_encoding_round_trips(r in raster(4, 5)) {
        prop_assert_eq!(decode_cube(&encode_cube(&r).unwrap()).unwrap(), r);
    }

    #[test]
    fn tensor_conversion_round_trips(r in raster(4, 5)) {
        let t = r.to_tensor::<f32>().unwrap();
        prop_assert_eq!(Raster::from_tensor(&t, 0).unwrap(), r);
    }

    #[test]
    fn normalization_inverts(r in raster(3, 6)) {
        let stats = ChannelStats::compute(&[&r]).unwrap();
        let back = stats.denormalize(&stats.normalize(&r).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(r.data()) {
            prop_assert!((a - b).abs() <= 1e-4 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn padded_extent_is_smallest_multiple(n in 1usize..1000) {
        let p = padded_extent(n);
        prop_assert!(p >= n && p.is_multiple_of(32) && p - n < 32);
    }
}
