mod common;

use maskflow::flow::{conditional_path, euler_step, FnField};
use maskflow::io::{byte_to_model, decode_pnm, decode_raw, encode_pnm, encode_raw};
use maskflow::metrics::{consistency_rmse, psnr, ssim};
use maskflow::neural::CfmExample;
use maskflow::{BinaryMask, ImageTensor, MlpVelocityNet, SeededRng, Shape};
use proptest::prelude::*;

fn shape_strategy(max_side: usize) -> impl Strategy<Value = Shape> {
    (1..=3usize, 1..=max_side, 1..=max_side).prop_map(|(c, h, w)| Shape::new(c, h, w).unwrap())
}

fn tensor_strategy(max_side: usize) -> impl Strategy<Value = ImageTensor> {
    shape_strategy(max_side).prop_flat_map(|s| {
        prop::collection::vec(-1e6f32..1e6, s.len()).prop_map(move |d| ImageTensor::new(s, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raw_round_trip_is_bitwise(t in tensor_strategy(12)) {
        let back = decode_raw(&encode_raw(&t)).unwrap();
        prop_assert!(back.bitwise_eq(&t));
    }

    #[test]
    fn pnm_round_trip_on_byte_grid(
        (shape, bytes) in (prop::sample::select(vec![1usize, 3]), 1..=12usize, 1..=12usize)
            .prop_flat_map(|(c, h, w)| {
                let s = Shape::new(c, h, w).unwrap();
                (Just(s), prop::collection::vec(any::<u8>(), s.len()))
            })
    ) {
        let t = ImageTensor::new(shape, bytes.iter().map(|&b| byte_to_model(b)).collect()).unwrap();
        let back = decode_pnm(&encode_pnm(&t).unwrap()).unwrap();
        prop_assert!(back.bitwise_eq(&t));
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(d in 1..4usize, h1 in 1..10usize, h2 in 1..10usize, seed in any::<u64>()) {
        let net = MlpVelocityNet::xavier(&[d + 1, h1, h2, d], &mut SeededRng::new(seed)).unwrap();
        let bytes = net.encode();
        let back = MlpVelocityNet::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn randn_stream_is_reproducible(seed in any::<u64>(), shape in shape_strategy(6)) {
        let mut a = SeededRng::new(seed);
        let mut b = SeededRng::new(seed);
        prop_assert!(a.randn(shape).unwrap().bitwise_eq(&b.randn(shape).unwrap()));
        prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
    }

    #[test]
    fn euler_step_is_linear_in_dt(seed in any::<u64>(), t in 0.0f64..0.5, dt in 1e-3f64..0.25) {
        let shape = Shape::new(1, 3, 3).unwrap();
        let x = SeededRng::new(seed).randn(shape).unwrap();
        let field = FnField(|x: &ImageTensor, t: f64| x.map(|v| (v - 0.5).sin() * (1.0 + t)));
        let one = euler_step(&x, t, dt, &field).unwrap();
        let two = euler_step(&x, t, 2.0 * dt, &field).unwrap();
        for ((&a, &b), &x0) in one.data().iter().zip(two.data()).zip(x.data()) {
            let predicted = x0 as f64 + 2.0 * (a as f64 - x0 as f64);
            prop_assert!((b as f64 - predicted).abs() < 1e-5, "{} vs {}", b, predicted);
        }
    }

    #[test]
    fn conditional_path_is_affine(seed in any::<u64>(), s in 0.0f64..=1.0, u in 0.0f64..=1.0) {
        let shape = Shape::new(2, 2, 3).unwrap();
        let mut rng = SeededRng::new(seed);
        let x0 = rng.randn(shape).unwrap();
        let x1 = rng.randn(shape).unwrap();
        prop_assert!(conditional_path(&x0, &x1, 0.0).unwrap().bitwise_eq(&x0));
        prop_assert!(conditional_path(&x0, &x1, 1.0).unwrap().bitwise_eq(&x1));
        let mid = (s + u) / 2.0;
        let (ps, pu, pm) = (
            conditional_path(&x0, &x1, s).unwrap(),
            conditional_path(&x0, &x1, u).unwrap(),
            conditional_path(&x0, &x1, mid).unwrap(),
        );
        for i in 0..shape.len() {
            let avg = (ps.data()[i] as f64 + pu.data()[i] as f64) / 2.0;
            prop_assert!((pm.data()[i] as f64 - avg).abs() < 1e-5);
        }
    }

    #[test]
    fn metrics_are_symmetric(seed in any::<u64>()) {
        let shape = Shape::new(2, 12, 13).unwrap();
        let mut rng = SeededRng::new(seed);
        let a = common::random_image(shape, &mut rng);
        let b = common::random_image(shape, &mut rng);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn windowed_metrics_match_brute_force(seed in any::<u64>()) {
        let shape = Shape::new(1, 16, 16).unwrap();
        let mut rng = SeededRng::new(seed);
        let a = common::random_image(shape, &mut rng);
        let b = common::random_image(shape, &mut rng);
        prop_assert!((psnr(&a, &b).unwrap() - common::brute_psnr(&a, &b)).abs() < 1e-9);
        prop_assert!((ssim(&a, &b).unwrap() - common::brute_ssim(&a, &b)).abs() < 1e-7);
    }

    #[test]
    fn consistency_matches_direct_loop(seed in any::<u64>(), keep in 0.05f64..1.0) {
        let shape = Shape::new(3, 7, 5).unwrap();
        let mut rng = SeededRng::new(seed);
        let out = common::random_image(shape, &mut rng);
        let z = common::random_image(shape, &mut rng);
        let mut bits: Vec<bool> = (0..35).map(|_| rng.uniform() < keep).collect();
        bits[0] = true;
        let mask = BinaryMask::from_bits(7, 5, bits).unwrap();
        let (mut sse, mut n) = (0.0f64, 0usize);
        for c in 0..3 {
            for y in 0..7 {
                for x in 0..5 {
                    if mask.is_known(y, x) {
                        sse += (out.get(c, y, x) as f64 - z.get(c, y, x) as f64).powi(2);
                        n += 1;
                    }
                }
            }
        }
        let direct = (sse / n as f64).sqrt();
        prop_assert!((consistency_rmse(&out, &z, &mask).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn backprop_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let net = MlpVelocityNet::xavier(&[3, 16, 2], &mut rng).unwrap();
        let batch: Vec<CfmExample> = (0..3)
            .map(|_| CfmExample {
                x_t: vec![rng.standard_normal(), rng.standard_normal()],
                t: rng.uniform(),
                target: vec![rng.standard_normal(), rng.standard_normal()],
            })
            .collect();
        let analytic: Vec<f64> = net.loss_and_grad(&batch).unwrap().1.iter().collect();
        let eps = 1e-4;
        let mut idx = 0;
        for li in 0..net.layers().len() {
            let n_w = net.layers()[li].weights.len();
            for p in 0..n_w + net.layers()[li].bias.len() {
                let loss_at = |delta: f64| {
                    let mut moved = net.clone();
                    let layer = &mut moved.layers_mut()[li];
                    if p < n_w { layer.weights[p] += delta } else { layer.bias[p - n_w] += delta }
                    moved.loss_and_grad(&batch).unwrap().0
                };
                let fd = (loss_at(eps) - loss_at(-eps)) / (2.0 * eps);
                let g = analytic[idx];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
                prop_assert!(rel < 1e-4, "layer {} param {}: {} vs {}", li, p, g, fd);
                idx += 1;
            }
        }
    }
}

#[test]
fn psnr_decreases_with_noise_level() {
    let shape = Shape::new(1, 16, 16).unwrap();
    let mean_psnr = |sigma: f64| {
        (0..20u64)
            .map(|seed| {
                let mut rng = SeededRng::new(seed);
                let a = common::random_image(shape, &mut rng).map(|v| 0.8 * v).unwrap();
                let noise = rng.randn(shape).unwrap();
                psnr(&a, &a.axpby(1.0, &noise, sigma).unwrap()).unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    let values: Vec<f64> = [0.01, 0.05, 0.1].into_iter().map(mean_psnr).collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
}

#[test]
fn ssim_ignores_shared_offset() {
    let shape = Shape::new(1, 16, 16).unwrap();
    let mut rng = SeededRng::new(4);
    let a = common::random_image(shape, &mut rng).map(|v| 0.5 * v).unwrap();
    let b = a.zip_map(&rng.randn(shape).unwrap(), |x, n| x + 0.1 * n).unwrap().clamp(-0.7, 0.7);
    let base = ssim(&a, &b).unwrap();
    let shift = |t: &ImageTensor| t.map(|v| v + 0.2).unwrap();
    let shifted = ssim(&shift(&a), &shift(&b)).unwrap();
    assert!((base - shifted).abs() < 1e-3, "{base} vs {shifted}");
}

#[test]
fn ssim_of_inverted_image_is_low() {
    let shape = Shape::new(1, 16, 16).unwrap();
    let a = common::random_image(shape, &mut SeededRng::new(5));
    let inverted = a.map(|v| -v).unwrap();
    let s = ssim(&a, &inverted).unwrap();
    assert!(s < 0.5 && s < ssim(&a, &a).unwrap());
}
