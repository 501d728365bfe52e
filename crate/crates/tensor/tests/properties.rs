use mxr_tensor::ops::*;
use mxr_tensor::{no_grad, Tensor, TensorError};
use proptest::prelude::*;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f32>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-10.0f32..10.0, n).prop_map(move |v| Tensor::from_vec(v, &shape).unwrap())
}

fn nchw() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    (1usize..3, 1usize..4, 1usize..5, 1usize..5)
}

proptest! {
    #[test]
    fn shuffle_round_trips_bitwise((x, r) in (nchw(), 1usize..4).prop_flat_map(|((n, c, h, w), r)| (tensor(vec![n, c * r * r, h, w]), Just(r)))) {
        let [n, cr, h, w] = *x.shape() else { unreachable!() };
        let y = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(y.shape(), &[n, cr / (r * r), h * r, w * r]);
        let back = pixel_unshuffle(&y, r).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn reshape_preserves_data(v in prop::collection::vec(-5.0f32..5.0, 24)) {
        let x = Tensor::from_vec(v.clone(), &[2, 3, 4]).unwrap();
        let y = x.reshape(&[4, 6]).unwrap().reshape(&[24]).unwrap();
        prop_assert_eq!(y.data(), &v[..]);
        let bad = matches!(x.reshape(&[5, 5]), Err(TensorError::Dimension { .. }));
        prop_assert!(bad);
    }

    #[test]
    fn transpose_is_an_involution(v in prop::collection::vec(-5.0f32..5.0, 30)) {
        let x = Tensor::from_vec(v, &[2, 3, 5]).unwrap();
        let t = x.transpose_last2().unwrap();
        prop_assert_eq!(t.shape(), &[2, 5, 3]);
        let back = t.transpose_last2().unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-30.0f64..30.0, 12)) {
        let x = Tensor::from_vec(v, &[3, 4]).unwrap();
        let s = softmax(&x, 1).unwrap();
        for row in s.data().chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn concat_then_slice_recovers_parts(a in prop::collection::vec(-1.0f32..1.0, 2 * 9), b in prop::collection::vec(-1.0f32..1.0, 3 * 9)) {
        let ta = Tensor::from_vec(a, &[1, 2, 3, 3]).unwrap();
        let tb = Tensor::from_vec(b, &[1, 3, 3, 3]).unwrap();
        let cat = concat_channels(&[&ta, &tb]).unwrap();
        let (a, b) = (cat.slice_channels(0, 2).unwrap(), cat.slice_channels(2, 3).unwrap());
        prop_assert_eq!(a.data(), ta.data());
        prop_assert_eq!(b.data(), tb.data());
    }

    #[test]
    fn matmul_matches_naive(a in prop::collection::vec(-3.0f64..3.0, 6), b in prop::collection::vec(-3.0f64..3.0, 8)) {
        let ta = Tensor::from_vec(a.clone(), &[3, 2]).unwrap();
        let tb = Tensor::from_vec(b.clone(), &[2, 4]).unwrap();
        let c = matmul(&ta, &tb).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let want = a[i * 2] * b[j] + a[i * 2 + 1] * b[4 + j];
                prop_assert!((c.data()[i * 4 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn avg_pool_preserves_constants(v in -100.0f32..100.0, (n, c, h, w) in nchw()) {
        let x = Tensor::full(&[n, c, h + 2, w + 2], v);
        let y = avg_pool2d(&x, 3, 1, PadMode::Replicate, Padding::uniform(1)).unwrap();
        prop_assert!(y.data().iter().all(|&o| (o - v).abs() <= v.abs() * 1e-6));
    }
}

#[test]
fn no_grad_records_nothing() {
    let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = {
        let _g = no_grad();
        x.square().unwrap()
    };
    assert!(!y.tracks_grad());
    assert!(x.square().unwrap().tracks_grad());
}

#[test]
fn non_finite_inputs_are_rejected_not_propagated() {
    let x = Tensor::<f32>::from_vec(vec![-1.0, 2.0], &[2]).unwrap();
    assert!(x.log().is_err());
}
