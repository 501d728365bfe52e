use std::f64::consts::PI;

use mxr_tensor::Tensor;
use mxr_unet::loss::{gram, pixel_loss, total_loss, LossNetwork, LossWeights};
use mxr_unet::metrics::{evaluate_dataset, mrae_slice, MRAE_EPS};
use mxr_unet::selftest::synthetic_pairs;
use mxr_unet::train::*;
use mxr_unet::{build_unet, EncoderDepth, Error, ModelConfig, Raster};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Straight transcription of the piecewise cosine policy.
fn lr_oracle(t: f64) -> f64 {
    if t <= 60.0 {
        1e-5 + (1e-3 - 1e-5) * (1.0 - (PI * t / 60.0).cos()) / 2.0
    } else {
        1e-9 + (1e-3 - 1e-9) * (1.0 + (PI * (t - 60.0) / 140.0).cos()) / 2.0
    }
}

#[test]
fn schedule_follows_cosine_policy() {
    let s = OneCycleSchedule::default();
    for i in 0..=400 {
        let t = i as f64 * 0.5;
        let (got, want) = (s.lr_at(t).unwrap(), lr_oracle(t));
        assert!((got - want).abs() <= 1e-12 * want.abs() + 1e-18, "t={t}: {got} vs {want}");
        let m = s.mom_at(t).unwrap();
        assert!((0.85..=0.95).contains(&m));
    }
    assert!(matches!(s.lr_at(200.5), Err(Error::Contract(_))));
    assert!(s.lr_at(-0.1).is_err());
}

#[test]
fn compressed_schedule_keeps_anchor_values() {
    let s = OneCycleSchedule::default().compressed(20.0);
    assert_eq!(s.total(), 20.0);
    assert_eq!(s.lr_at(0.0).unwrap(), 1e-5);
    assert_eq!(s.lr_at(6.0).unwrap(), 1e-3);
    assert_eq!(s.lr_at(20.0).unwrap(), 1e-9);
    assert_eq!(s.mom_at(6.0).unwrap(), 0.85);
}

#[test]
fn adamw_decay_only_step() {
    let p = StepParams { lr: 1e-3, beta1: 0.9, beta2: 0.99, eps: 1e-8, weight_decay: 1e-3, step: 1 };
    let mut w = [2.0f64, -4.0];
    let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
    adamw_update(&mut w, &[0.0, 0.0], &mut m, &mut v, &p);
    assert_eq!(w, [2.0 * (1.0 - 1e-6), -4.0 * (1.0 - 1e-6)]);
}

#[test]
fn adamw_first_step_moves_by_lr() {
    // Bias correction makes the first step lr * sign(g) for |g| >> eps.
    let p = StepParams { lr: 1e-2, beta1: 0.95, beta2: 0.99, eps: 1e-8, weight_decay: 0.0, step: 1 };
    let mut w = [1.0f64, 1.0];
    let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
    adamw_update(&mut w, &[3.0, -0.2], &mut m, &mut v, &p);
    assert!((w[0] - 0.99).abs() < 1e-8 && (w[1] - 1.01).abs() < 1e-8, "{w:?}");
}

#[test]
fn loss_identities() {
    let net = LossNetwork::<f64>::seeded(31, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = mxr_tensor::init::normal::<f64>(&[1, 31, 8, 8], 1.0, &mut rng).unwrap();
    let p = mxr_tensor::init::normal::<f64>(&[1, 31, 8, 8], 1.0, &mut rng).unwrap();
    let same = total_loss(&y, &y, &net, &LossWeights::default()).unwrap();
    assert_eq!(same.total.data()[0], 0.0);
    let only = total_loss(&p, &y, &net, &LossWeights::pixel_only()).unwrap();
    assert_eq!(only.total.data(), pixel_loss(&p, &y).unwrap().data());

    let ones = Tensor::<f64>::ones(&[1, 2, 2, 2]);
    let zeros = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
    assert_eq!(pixel_loss(&ones, &zeros).unwrap().data(), &[1.0]);
    let g = gram(&Tensor::<f64>::from_vec(vec![1.0, 2.0], &[2, 1, 1]).unwrap()).unwrap();
    assert_eq!(g.data(), &[0.5, 1.0, 1.0, 2.0]);
}

#[test]
fn mrae_matches_definition() {
    assert_eq!(mrae_slice(&[1.0, 3.0], &[2.0, 2.0], 0.0).unwrap(), 0.5);
    let t: Vec<f32> = (1..=50).map(|v| v as f32 / 10.0).collect();
    let p: Vec<f32> = t.iter().map(|v| v * 1.1).collect();
    assert!((mrae_slice(&p, &t, MRAE_EPS).unwrap() - 0.1).abs() < 1e-6);
    assert!(mrae_slice(&p, &t[1..], MRAE_EPS).is_err());
}

#[test]
fn normalization_round_trips() {
    let samples = synthetic_pairs(3, 16, 2).unwrap();
    let stats = NormalizationStats::compute(samples.iter().map(|s| (&s.rgb, &s.cube))).unwrap();
    let normed: Vec<Raster> = samples.iter().map(|s| stats.cube.normalize(&s.cube).unwrap()).collect();
    let refs: Vec<&Raster> = normed.iter().collect();
    let again = ChannelStats::compute(&refs).unwrap();
    assert!(again.mean.iter().all(|m| m.abs() < 1e-3));
    assert!(again.std.iter().all(|s| (s - 1.0).abs() < 1e-3));
    let back = stats.cube.denormalize(&normed[0]).unwrap();
    assert!(back.data().iter().zip(samples[0].cube.data()).all(|(a, b)| (a - b).abs() < 1e-5));
}

#[test]
fn augmentation_keeps_pairs_aligned() {
    let s = &synthetic_pairs(1, 8, 3).unwrap()[0];
    let cfg = AugmentConfig { brightness: (1.0, 1.0), contrast: (1.0, 1.0), ..AugmentConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..8 {
        let (rgb, cube) = augment(&s.rgb, &s.cube, &cfg, &mut rng).unwrap();
        // The synthetic cube is an affine map of RGB; geometry must move both alike.
        let px = |img: &Raster, i: usize| [img.channel(0)[i], img.channel(1)[i], img.channel(2)[i]];
        let moved = px(&rgb, 10);
        let idx = (0..64).find(|&i| px(&s.rgb, i) == moved).unwrap();
        assert_eq!(s.cube.channel(7)[idx], cube.channel(7)[10]);
    }
}

#[test]
fn fit_is_deterministic_and_logs_each_epoch() {
    let samples = synthetic_pairs(3, 32, 5).unwrap();
    let stats = NormalizationStats::compute(samples.iter().map(|s| (&s.rgb, &s.cube))).unwrap();
    let net = LossNetwork::<f32>::seeded(31, 0).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 2, crop: 32, ..TrainConfig::default() };
    let run = || {
        let model = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.125), 0).unwrap();
        let mut opt = AdamW::new(cfg.optimizer);
        let log = fit(&model, &samples, &samples[..1], &stats, &net, &cfg, &mut opt, &mut ()).unwrap();
        (log, evaluate_dataset(&model, &samples, &stats, false).unwrap().mrae)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a.iterations.len(), 4);
    assert_eq!(a.epochs.len(), 2);
    assert!(a.epochs.iter().all(|e| e.val_mrae.is_some()));
    assert_eq!(a.to_lines(), b.to_lines());
    assert_eq!(ma, mb);
    assert!(a.iterations.iter().all(|r| r.loss.is_finite()));
}

#[test]
fn zero_epochs_is_a_no_op() {
    let samples = synthetic_pairs(1, 32, 5).unwrap();
    let stats = NormalizationStats::identity(3, 31);
    let net = LossNetwork::<f32>::seeded(31, 0).unwrap();
    let model = build_unet::<f32>(&ModelConfig::new(EncoderDepth::D18, 0.125), 0).unwrap();
    let before = model.head_conv.weight.get().to_vec();
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
    let log = fit(&model, &samples, &[], &stats, &net, &cfg, &mut AdamW::new(cfg.optimizer), &mut ()).unwrap();
    assert!(log.iterations.is_empty());
    assert_eq!(model.head_conv.weight.get().to_vec(), before);
}
